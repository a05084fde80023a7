"""Instance-wise variational registration.

Minimizes  MSE(I_f, warp(I_m, u)) + alpha * smooth(u)  over a displacement
field or over a stationary velocity field (u = exp(v), which keeps the
estimate diffeomorphic).  The similarity is computed either on raw
intensities or on fixed-bank feature maps extracted from the warped image.
Optimization is adaptive-moment gradient descent with bias correction,
run coarse-to-fine over a block-average image pyramid.

All gradients are exact: the MSE term differentiates through bilinear
sampling (and, for features, through correlation, rectification and
standardization), the L1 smoothness term uses the transpose of the forward
difference operator with sign(0) = 0, and the svf parametrization
backpropagates through every scaling-and-squaring composition.
"""

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import grid
from .features import VARIANCE_FLOOR, correlate_bank, correlate_bank_adjoint, default_bank
from .metrics import evaluate_pair
from .validation import as_field, as_image, check_same_grid

__all__ = [
    "RegConfig",
    "RegResult",
    "NumericalAbort",
    "smoothness_loss",
    "similarity_mse",
    "reg_loss",
    "objective",
    "loss_gradient",
    "register",
]

SIMILARITIES = ("intensity_mse", "feature_mse")
PARAMETRIZATIONS = ("displacement", "svf")


class NumericalAbort(ArithmeticError):
    """Raised when the optimizer encounters a non-finite loss."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


@dataclass(frozen=True)
class RegConfig:
    alpha: float = 0.01
    similarity: str = "feature_mse"
    levels: int = 3
    iters_per_level: int = 200
    step: float = 0.5
    moment_decay: tuple = (0.9, 0.999)
    epsilon: float = 1e-8
    parametrization: str = "svf"
    svf_steps: int = 7
    seed: int = 0

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.levels < 1:
            raise ValueError(f"levels must be >= 1, got {self.levels}")
        if self.step <= 0:
            raise ValueError(f"step must be positive, got {self.step}")
        if self.similarity not in SIMILARITIES:
            raise ValueError(f"similarity must be one of {SIMILARITIES}")
        if self.parametrization not in PARAMETRIZATIONS:
            raise ValueError(f"parametrization must be one of {PARAMETRIZATIONS}")
        if not 1 <= self.svf_steps <= 12:
            raise ValueError(f"svf_steps must be in [1, 12], got {self.svf_steps}")


@dataclass
class RegResult:
    field: np.ndarray
    warped: np.ndarray
    loss_trace: np.ndarray
    metrics: object
    sim: float = 0.0
    smooth: float = 0.0
    velocity: np.ndarray | None = dc_field(default=None)


def smoothness_loss(field):
    """Mean L1 norm of the forward-difference gradients of both components.

    Normalized by the number of field elements (2 * H * W).
    """
    field = np.asarray(field, dtype=np.float64) if not isinstance(field, np.ndarray) \
        else field
    if field.ndim != 3 or field.shape[2] != 2:
        raise ValueError(f"field must be (H, W, 2), got {field.shape}")
    h, w = field.shape[:2]
    if h < 2 or w < 2:
        raise ValueError("smoothness_loss needs at least 2 pixels per axis")
    dy = field[1:, :, :] - field[:-1, :, :]
    dx = field[:, 1:, :] - field[:, :-1, :]
    return float((np.abs(dy).sum() + np.abs(dx).sum()) / (2.0 * h * w))


def _smoothness_grad(field):
    h, w = field.shape[:2]
    n = 2.0 * h * w
    g = np.zeros_like(field)
    sy = np.sign(field[1:, :, :] - field[:-1, :, :])
    sx = np.sign(field[:, 1:, :] - field[:, :-1, :])
    g[1:, :, :] += sy
    g[:-1, :, :] -= sy
    g[:, 1:, :] += sx
    g[:, :-1, :] -= sx
    g /= n
    return g


def similarity_mse(a, b):
    """Mean squared difference over all elements of two equal-shape stacks."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def _extract_with_cache(img, bank):
    """extract() that also returns the intermediates needed for backprop."""
    weights = bank.weights.astype(img.dtype, copy=False)
    r = correlate_bank(img, weights) + bank.bias.astype(img.dtype, copy=False)
    a = np.maximum(r, 0.0)
    mu = a.mean(axis=(0, 1), keepdims=True)
    var = np.mean((a - mu) ** 2, axis=(0, 1), keepdims=True)
    floored = var <= VARIANCE_FLOOR
    scale = np.sqrt(np.maximum(var, VARIANCE_FLOOR))
    z = (a - mu) / scale
    return z, (r, z, scale, floored, weights)


def _extract_backward(dz, cache):
    """Gradient of the standardized feature map w.r.t. the input image."""
    r, z, scale, floored, weights = cache
    n = float(z.shape[0] * z.shape[1])
    mean_dz = dz.mean(axis=(0, 1), keepdims=True)
    mean_dzz = (dz * z).mean(axis=(0, 1), keepdims=True)
    da = (dz - mean_dz - z * np.where(floored, 0.0, mean_dzz)) / scale
    dr = da * (r > 0.0)
    return correlate_bank_adjoint(dr, weights)


def _grid_coords(h, w, dtype):
    yy, xx = np.meshgrid(np.arange(h, dtype=dtype), np.arange(w, dtype=dtype),
                         indexing="ij")
    return yy, xx


def _exp_forward(v, steps):
    """Scaling-and-squaring with stored intermediates for the backward pass."""
    u = v / float(2 ** steps)
    intermediates = [u]
    h, w = v.shape[:2]
    yy, xx = _grid_coords(h, w, v.dtype)
    for _ in range(steps):
        ys = yy + u[:, :, 0]
        xs = xx + u[:, :, 1]
        u = u + grid.sample_planes(u, ys, xs)
        intermediates.append(u)
    return u, intermediates


def _exp_backward(g, intermediates, steps):
    """Pull a gradient w.r.t. exp(v) back to a gradient w.r.t. v."""
    h, w = g.shape[:2]
    yy, xx = _grid_coords(h, w, g.dtype)
    for k in range(steps - 1, -1, -1):
        u = intermediates[k]
        ys = yy + u[:, :, 0]
        xs = xx + u[:, :, 1]
        d_dy, d_dx = grid.sample_planes_dcoord(u, ys, xs)
        g_coord = np.stack(
            [np.sum(g * d_dy, axis=2), np.sum(g * d_dx, axis=2)], axis=2
        )
        g = g + g_coord + grid.scatter_bilinear(g, ys, xs, h, w)
    return g / float(2 ** steps)


def _loss_and_grad(fixed, moving, param, config, bank=None, fixed_features=None,
                   want_grad=True):
    """Shared forward/backward pass.

    param is the displacement field itself or, for the svf parametrization,
    the velocity field.  Returns (total, sim, smooth, grad, displacement).
    """
    h, w = fixed.shape[:2]
    if config.parametrization == "svf":
        u, intermediates = _exp_forward(param, config.svf_steps)
    else:
        u, intermediates = param, None

    yy, xx = _grid_coords(h, w, u.dtype)
    ys = yy + u[:, :, 0]
    xs = xx + u[:, :, 1]
    warped = grid.sample_planes(moving, ys, xs)

    if config.similarity == "feature_mse":
        if bank is None:
            bank = default_bank(fixed.shape[2])
        if fixed_features is None:
            fixed_features, _ = _extract_with_cache(fixed, bank)
        z, cache = _extract_with_cache(warped, bank)
        resid = z - fixed_features
        sim = float(np.mean(resid ** 2))
        if want_grad:
            dz = resid * (2.0 / resid.size)
            d_warped = _extract_backward(dz, cache)
    else:
        resid = warped - fixed
        sim = float(np.mean(resid ** 2))
        if want_grad:
            d_warped = resid * (2.0 / resid.size)

    smooth = smoothness_loss(u)
    total = sim + config.alpha * smooth
    if not want_grad:
        return total, sim, smooth, None, u

    d_dy, d_dx = grid.sample_planes_dcoord(moving, ys, xs)
    g_u = np.stack(
        [np.sum(d_warped * d_dy, axis=2), np.sum(d_warped * d_dx, axis=2)],
        axis=2,
    )
    g_u += config.alpha * _smoothness_grad(u)
    if config.parametrization == "svf":
        g = _exp_backward(g_u, intermediates, config.svf_steps)
    else:
        g = g_u
    return total, sim, smooth, g, u


def reg_loss(fixed, moving, field, config=None, bank=None):
    """Registration loss of a displacement field: (total, sim, smooth).

    total = sim + alpha * smooth.  With feature_mse similarity, features are
    extracted from the fixed image and from the warped moving image
    (extraction happens after warping).
    """
    config = config or RegConfig()
    fixed = as_image(fixed, "fixed")
    moving = as_image(moving, "moving")
    field = as_field(field)
    check_same_grid(fixed, moving, "fixed", "moving")
    check_same_grid(fixed, field, "fixed", "field")
    cfg = _as_displacement_config(config)
    total, sim, smooth, _, _ = _loss_and_grad(
        fixed, moving, field, cfg, bank=bank, want_grad=False
    )
    return total, sim, smooth


def _as_displacement_config(config):
    if config.parametrization == "displacement":
        return config
    return RegConfig(
        alpha=config.alpha, similarity=config.similarity, levels=config.levels,
        iters_per_level=config.iters_per_level, step=config.step,
        moment_decay=config.moment_decay, epsilon=config.epsilon,
        parametrization="displacement", svf_steps=config.svf_steps,
        seed=config.seed,
    )


def objective(fixed, moving, param, config=None, bank=None):
    """Loss of an optimization parameter under the configured parametrization.

    For displacement parametrization this equals reg_loss(param); for svf it
    is reg_loss(exp(param)).  Returns (total, sim, smooth).
    """
    config = config or RegConfig()
    fixed = as_image(fixed, "fixed")
    moving = as_image(moving, "moving")
    param = as_field(param, "param")
    total, sim, smooth, _, _ = _loss_and_grad(
        fixed, moving, param, config, bank=bank, want_grad=False
    )
    return total, sim, smooth


def loss_gradient(fixed, moving, param, config=None, bank=None):
    """Exact gradient of the total loss w.r.t. every parameter component."""
    config = config or RegConfig()
    fixed = as_image(fixed, "fixed")
    moving = as_image(moving, "moving")
    param = as_field(param, "param")
    check_same_grid(fixed, moving, "fixed", "moving")
    check_same_grid(fixed, param, "fixed", "param")
    _, _, _, g, _ = _loss_and_grad(fixed, moving, param, config, bank=bank)
    return g


def _pyramid(img, levels):
    pyr = [img]
    for _ in range(levels - 1):
        cur = pyr[-1]
        if cur.shape[0] < 2 or cur.shape[1] < 2:
            raise ValueError(
                f"image {img.shape[0]}x{img.shape[1]} is too small for "
                f"{levels} pyramid levels"
            )
        pyr.append(grid.downsample_image(cur, validate=False))
    return pyr[::-1]


def register(fixed, moving, config=None, bank=None):
    """Estimate the deformation aligning moving to fixed.

    Runs bias-corrected adaptive-moment descent on the configured
    parametrization, coarse to fine; the field is upsampled (with magnitude
    rescaling) between levels.  Raises NumericalAbort if the loss turns
    non-finite.  The returned loss trace is monotone-smoothed (per-level
    running minimum).
    """
    config = config or RegConfig()
    fixed = as_image(fixed, "fixed")
    moving = as_image(moving, "moving")
    check_same_grid(fixed, moving, "fixed", "moving")
    if fixed.shape[2] != moving.shape[2]:
        raise ValueError("fixed and moving must have the same channel count")
    if bank is None and config.similarity == "feature_mse":
        bank = default_bank(fixed.shape[2])

    work = np.float64
    fixed_pyr = _pyramid(fixed.astype(work), config.levels)
    moving_pyr = _pyramid(moving.astype(work), config.levels)

    beta1, beta2 = config.moment_decay
    param = np.zeros(fixed_pyr[0].shape[:2] + (2,), dtype=work)
    traces = []
    for level, (f_l, m_l) in enumerate(zip(fixed_pyr, moving_pyr)):
        if param.shape[:2] != f_l.shape[:2]:
            param = grid.resample_field(param, f_l.shape[0], f_l.shape[1],
                                        validate=False)
        fixed_feats = None
        if config.similarity == "feature_mse":
            fixed_feats, _ = _extract_with_cache(f_l, bank)
        m1 = np.zeros_like(param)
        m2 = np.zeros_like(param)
        level_losses = np.empty(config.iters_per_level)
        for t in range(1, config.iters_per_level + 1):
            total, _, _, g, _ = _loss_and_grad(
                f_l, m_l, param, config, bank=bank, fixed_features=fixed_feats
            )
            if not np.isfinite(total):
                raise NumericalAbort(
                    f"non-finite loss at iteration {t} of level {level}",
                    iteration=t,
                )
            level_losses[t - 1] = total
            m1 = beta1 * m1 + (1.0 - beta1) * g
            m2 = beta2 * m2 + (1.0 - beta2) * g * g
            m1_hat = m1 / (1.0 - beta1 ** t)
            m2_hat = m2 / (1.0 - beta2 ** t)
            param = param - config.step * m1_hat / (np.sqrt(m2_hat) + config.epsilon)
        traces.append(np.minimum.accumulate(level_losses))

    total, sim, smooth, _, u = _loss_and_grad(
        fixed_pyr[-1], moving_pyr[-1], param, config, bank=bank, want_grad=False
    )
    field = np.asarray(u, dtype=np.float64)
    warped = grid.warp(moving, field, validate=False)
    report = evaluate_pair(fixed, warped, field)
    velocity = np.asarray(param, dtype=np.float64) \
        if config.parametrization == "svf" else None
    return RegResult(
        field=field,
        warped=warped,
        loss_trace=np.concatenate(traces),
        metrics=report,
        sim=sim,
        smooth=smooth,
        velocity=velocity,
    )
