"""Fixed local-feature extraction.

The default bank holds Gaussian first-derivative filters at the four axis
directions (+x, +y, -x, -y) for two scales plus one Gaussian smoother,
7x7 kernels.  Responses are computed by border-replicate correlation,
half-rectified and standardized per channel, so the extractor reacts to
edges and textures while remaining training-free and deterministic.
"""

from dataclasses import dataclass

import numpy as np

from .fileio import FileFormatError, read_tensor, write_tensor
from .validation import as_image

__all__ = [
    "FilterBank",
    "default_bank",
    "save_bank",
    "load_bank",
    "filter_responses",
    "extract",
    "correlate_bank",
    "correlate_bank_adjoint",
]

VARIANCE_FLOOR = 1e-8
DEFAULT_KERNEL = 7
DEFAULT_SCALES = (1.0, 2.0)
# four orientations at 90 degree spacing: both polarities of the two axis
# derivatives, so every edge activates at least one channel after ReLU
DEFAULT_ANGLES = (0.0, 90.0, 180.0, 270.0)


@dataclass(frozen=True)
class FilterBank:
    """Immutable convolution bank: weights (F, C, k, k), bias (F,).

    smoothing marks filters that are deliberately not zero-mean.
    """

    weights: np.ndarray
    bias: np.ndarray
    smoothing: np.ndarray

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=np.float32)
        b = np.ascontiguousarray(self.bias, dtype=np.float32)
        s = np.ascontiguousarray(self.smoothing, dtype=bool)
        if w.ndim != 4 or w.shape[2] != w.shape[3]:
            raise ValueError(f"weights must be (F, C, k, k), got {w.shape}")
        if w.shape[2] % 2 != 1:
            raise ValueError(f"kernel_size must be odd, got {w.shape[2]}")
        if b.shape != (w.shape[0],) or s.shape != (w.shape[0],):
            raise ValueError("bias and smoothing must have one entry per filter")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValueError("bank weights must be finite")
        for arr in (w, b, s):
            arr.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)
        object.__setattr__(self, "smoothing", s)

    @property
    def n_filters(self):
        return self.weights.shape[0]

    @property
    def channels(self):
        return self.weights.shape[1]

    @property
    def kernel_size(self):
        return self.weights.shape[2]


def _gaussian(sigma, size):
    r = size // 2
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1].astype(np.float64)
    return np.exp(-(yy * yy + xx * xx) / (2.0 * sigma * sigma)), yy, xx


def _derivative_kernel(angle_deg, sigma, size):
    """Correlation kernel responding positively to intensity increase along
    the given direction (x to the right, y downward)."""
    g, yy, xx = _gaussian(sigma, size)
    theta = np.deg2rad(angle_deg)
    k = (np.cos(theta) * xx + np.sin(theta) * yy) * g / (sigma * sigma)
    return k / np.sqrt(np.sum(k * k))


def _smoothing_kernel(sigma, size):
    g, _, _ = _gaussian(sigma, size)
    return g / g.sum()


def default_bank(channels=1, kernel_size=DEFAULT_KERNEL):
    """Gaussian-derivative bank: 4 directions x 2 scales plus one smoother.

    Multi-channel inputs apply each spatial filter with equal per-channel
    weight 1/channels.
    """
    if channels not in (1, 3):
        raise ValueError(f"channels must be 1 or 3, got {channels}")
    kernels = [
        _derivative_kernel(angle, sigma, kernel_size)
        for sigma in DEFAULT_SCALES
        for angle in DEFAULT_ANGLES
    ]
    kernels.append(_smoothing_kernel(DEFAULT_SCALES[-1], kernel_size))
    spatial = np.stack(kernels, axis=0)
    weights = np.repeat(spatial[:, np.newaxis], channels, axis=1) / channels
    smoothing = np.zeros(len(kernels), dtype=bool)
    smoothing[-1] = True
    return FilterBank(weights=weights, bias=np.zeros(len(kernels)),
                      smoothing=smoothing)


def save_bank(bank, path):
    """Persist a bank to the tensor container."""
    meta = {
        "kind": "filter_bank",
        "n_filters": int(bank.n_filters),
        "channels": int(bank.channels),
        "kernel_size": int(bank.kernel_size),
        "bias": [float(b) for b in bank.bias],
        "smoothing": [bool(s) for s in bank.smoothing],
    }
    write_tensor(path, bank.weights, metadata=meta)


def load_bank(path):
    """Load a bank saved by save_bank; rejects inconsistent metadata."""
    values, meta = read_tensor(path)
    if not isinstance(meta, dict) or meta.get("kind") != "filter_bank":
        raise FileFormatError("not a filter bank file (missing metadata record)")
    expected = (meta.get("n_filters"), meta.get("channels"),
                meta.get("kernel_size"), meta.get("kernel_size"))
    if values.ndim != 4 or values.shape != tuple(expected):
        raise FileFormatError(
            f"weight shape {values.shape} does not match metadata {expected}"
        )
    bias = np.asarray(meta.get("bias", []), dtype=np.float32)
    smoothing = np.asarray(meta.get("smoothing", []), dtype=bool)
    if bias.shape != (values.shape[0],) or smoothing.shape != (values.shape[0],):
        raise FileFormatError("bias/smoothing metadata does not match filter count")
    return FilterBank(weights=values, bias=bias, smoothing=smoothing)


def _windows(arr, k):
    return np.lib.stride_tricks.sliding_window_view(arr, (k, k), axis=(0, 1))


def correlate_bank(img, weights):
    """Border-replicate same correlation of an (H, W, C) image with an
    (F, C, k, k) bank.  Returns (H, W, F)."""
    k = weights.shape[2]
    m = k // 2
    padded = np.pad(img, ((m, m), (m, m), (0, 0)), mode="edge")
    win = _windows(padded, k)  # (H, W, C, k, k)
    return np.tensordot(win, weights, axes=([2, 3, 4], [1, 2, 3]))


def correlate_bank_adjoint(g, weights):
    """Exact adjoint of correlate_bank.

    g has shape (H, W, F); returns (H, W, C) such that
    <correlate_bank(x, w), g> == <x, correlate_bank_adjoint(g, w)>.
    """
    h, w_, f = g.shape
    k = weights.shape[2]
    m = k // 2
    flipped = weights[:, :, ::-1, ::-1]
    gz = np.pad(g, ((2 * m, 2 * m), (2 * m, 2 * m), (0, 0)))
    win = _windows(gz, k)  # (H+2m, W+2m, F, k, k)
    d_padded = np.tensordot(win, flipped, axes=([2, 3, 4], [0, 2, 3]))
    # fold the replicate padding back onto the border pixels
    d = d_padded[m:m + h, m:m + w_].copy()
    if m:
        d[0, :] += d_padded[:m, m:m + w_].sum(axis=0)
        d[-1, :] += d_padded[m + h:, m:m + w_].sum(axis=0)
        d[:, 0] += d_padded[m:m + h, :m].sum(axis=1)
        d[:, -1] += d_padded[m:m + h, m + w_:].sum(axis=1)
        d[0, 0] += d_padded[:m, :m].sum(axis=(0, 1))
        d[0, -1] += d_padded[:m, m + w_:].sum(axis=(0, 1))
        d[-1, 0] += d_padded[m + h:, :m].sum(axis=(0, 1))
        d[-1, -1] += d_padded[m + h:, m + w_:].sum(axis=(0, 1))
    return d


def filter_responses(img, bank, validate=True):
    """Raw correlation responses plus bias, before rectification."""
    if validate:
        img = as_image(img)
        if img.shape[2] != bank.channels:
            raise ValueError(
                f"image has {img.shape[2]} channels but the bank expects {bank.channels}"
            )
    weights = bank.weights.astype(img.dtype, copy=False)
    return correlate_bank(img, weights) + bank.bias.astype(img.dtype, copy=False)


def extract(img, bank, validate=True):
    """Feature map: correlation responses, half-rectified and standardized.

    Each channel is shifted to zero mean and scaled to unit variance with a
    variance floor of 1e-8.
    """
    r = filter_responses(img, bank, validate=validate)
    a = np.maximum(r, 0.0)
    mu = a.mean(axis=(0, 1), keepdims=True)
    var = np.mean((a - mu) ** 2, axis=(0, 1), keepdims=True)
    scale = np.sqrt(np.maximum(var, VARIANCE_FLOOR))
    return (a - mu) / scale
