"""Core 2-D grid operations: interpolation, warping, composition, Jacobians.

Coordinate order is (row y, column x) everywhere.  A displacement field u
defines the map phi(x) = x + u(x); sampling outside the image borders is
clamped to the border (border-replicate).  All operations are pure and
deterministic.
"""

import numpy as np

from .validation import as_field, as_image, check_same_grid

__all__ = [
    "identity_field",
    "bilinear_sample",
    "sample_planes",
    "sample_planes_dcoord",
    "scatter_bilinear",
    "warp",
    "compose",
    "jacobian_det",
    "resample_values",
    "resample_field",
    "downsample_image",
]


def identity_field(height, width, dtype=np.float64):
    """Zero displacement field of shape (height, width, 2)."""
    if height < 1 or width < 1:
        raise ValueError(f"field dimensions must be positive, got {height}x{width}")
    return np.zeros((height, width, 2), dtype=dtype)


def _neighbor_indices(coords, size):
    """Clamped bilinear neighbors along one axis.

    Returns (i0, i1, frac, inside) where i0/i1 are the lower/upper integer
    neighbors, frac the interpolation weight toward i1, and inside a float
    mask that is 1 where the raw coordinate lies within [0, size-1] (used to
    zero the spatial derivative where the clamp is active).
    """
    c = np.clip(coords, 0.0, size - 1.0)
    i0 = np.floor(c).astype(np.intp)
    np.clip(i0, 0, max(size - 2, 0), out=i0)
    i1 = np.minimum(i0 + 1, size - 1)
    frac = c - i0
    inside = ((coords >= 0.0) & (coords <= size - 1.0)).astype(coords.dtype)
    return i0, i1, frac, inside


def sample_planes(planes, ys, xs):
    """Bilinearly sample a stack of planes (H, W, K) at coordinates (ys, xs).

    Coordinates are arrays of any common shape; out-of-range positions are
    clamped to the border.  Returns an array of shape ys.shape + (K,).
    """
    h, w = planes.shape[:2]
    y0, y1, fy, _ = _neighbor_indices(ys, h)
    x0, x1, fx, _ = _neighbor_indices(xs, w)
    wy0 = (1.0 - fy)[..., None]
    wy1 = fy[..., None]
    wx0 = (1.0 - fx)[..., None]
    wx1 = fx[..., None]
    return (
        wy0 * (wx0 * planes[y0, x0] + wx1 * planes[y0, x1])
        + wy1 * (wx0 * planes[y1, x0] + wx1 * planes[y1, x1])
    )


def sample_planes_dcoord(planes, ys, xs):
    """Derivative of the bilinear interpolant with respect to the coordinates.

    Returns (d_dy, d_dx), each of shape ys.shape + (K,).  The derivative is
    zero where the border clamp is active (coordinate strictly outside the
    domain), matching the piecewise-linear interpolant.
    """
    h, w = planes.shape[:2]
    y0, y1, fy, my = _neighbor_indices(ys, h)
    x0, x1, fx, mx = _neighbor_indices(xs, w)
    wy0 = (1.0 - fy)[..., None]
    wy1 = fy[..., None]
    wx0 = (1.0 - fx)[..., None]
    wx1 = fx[..., None]
    d_dy = (wx0 * (planes[y1, x0] - planes[y0, x0])
            + wx1 * (planes[y1, x1] - planes[y0, x1])) * my[..., None]
    d_dx = (wy0 * (planes[y0, x1] - planes[y0, x0])
            + wy1 * (planes[y1, x1] - planes[y1, x0])) * mx[..., None]
    return d_dy, d_dx


def scatter_bilinear(values, ys, xs, h, w):
    """Adjoint of sample_planes: deposit values onto the grid.

    values has shape ys.shape + (K,); returns an (h, w, K) accumulation such
    that <sample_planes(P, ys, xs), V> == <P, scatter_bilinear(V, ys, xs)>.
    """
    y0, y1, fy, _ = _neighbor_indices(ys, h)
    x0, x1, fx, _ = _neighbor_indices(xs, w)
    k = values.shape[-1]
    flat_vals = values.reshape(-1, k)
    fy = fy.reshape(-1)
    fx = fx.reshape(-1)
    corners = (
        (y0.reshape(-1), x0.reshape(-1), (1.0 - fy) * (1.0 - fx)),
        (y0.reshape(-1), x1.reshape(-1), (1.0 - fy) * fx),
        (y1.reshape(-1), x0.reshape(-1), fy * (1.0 - fx)),
        (y1.reshape(-1), x1.reshape(-1), fy * fx),
    )
    out = np.zeros((h * w, k), dtype=values.dtype)
    for iy, ix, wgt in corners:
        idx = iy * w + ix
        for c in range(k):
            out[:, c] += np.bincount(idx, weights=flat_vals[:, c] * wgt,
                                     minlength=h * w)
    return out.reshape(h, w, k)


def bilinear_sample(img, y, x, channel=0):
    """Bilinear interpolation of one channel at a single (y, x) position.

    Out-of-range coordinates are clamped to the border.
    """
    img = as_image(img)
    if channel >= img.shape[2]:
        raise ValueError(f"channel {channel} out of range for {img.shape[2]}-channel image")
    if not (np.isfinite(y) and np.isfinite(x)):
        raise ValueError("sample coordinates must be finite")
    ys = np.asarray([float(y)])
    xs = np.asarray([float(x)])
    return float(sample_planes(img[:, :, channel:channel + 1], ys, xs)[0, 0])


def _grid_coords(h, w, dtype=np.float64):
    yy, xx = np.meshgrid(np.arange(h, dtype=dtype), np.arange(w, dtype=dtype),
                         indexing="ij")
    return yy, xx


def warp(img, field, validate=True):
    """Warp an image by a displacement field: out(x) = img(x + u(x)).

    Output intensities are clamped to [0, 1].
    """
    if validate:
        img = as_image(img)
        field = as_field(field)
    check_same_grid(img, field, "image", "field")
    h, w = img.shape[:2]
    yy, xx = _grid_coords(h, w, img.dtype)
    out = sample_planes(img, yy + field[:, :, 0], xx + field[:, :, 1])
    return np.clip(out, 0.0, 1.0)


def compose(outer, inner, validate=True):
    """Displacement of phi_outer o phi_inner.

    result(x) = u_inner(x) + u_outer sampled at x + u_inner(x).
    """
    if validate:
        outer = as_field(outer, "outer")
        inner = as_field(inner, "inner")
    check_same_grid(outer, inner, "outer", "inner")
    h, w = inner.shape[:2]
    yy, xx = _grid_coords(h, w, inner.dtype)
    sampled = sample_planes(outer, yy + inner[:, :, 0], xx + inner[:, :, 1])
    return inner + sampled


def jacobian_det(field, validate=True):
    """Per-pixel determinant of J_phi = I + grad(u).

    Central differences at interior pixels, one-sided at the borders.
    """
    if validate:
        field = as_field(field)
    h, w = field.shape[:2]
    if h < 2 or w < 2:
        raise ValueError("jacobian_det needs at least 2 pixels per axis")
    duy_dy, duy_dx = np.gradient(field[:, :, 0])
    dux_dy, dux_dx = np.gradient(field[:, :, 1])
    return (1.0 + duy_dy) * (1.0 + dux_dx) - duy_dx * dux_dy


def resample_values(values, new_h, new_w):
    """Bilinear resampling of per-pixel values on the corner-aligned grid.

    No magnitude rescaling: plain interpolation of the stored values.
    Accepts (H, W) or (H, W, K) arrays.
    """
    if new_h < 1 or new_w < 1:
        raise ValueError(f"target dimensions must be positive, got {new_h}x{new_w}")
    squeeze = values.ndim == 2
    planes = values[:, :, np.newaxis] if squeeze else values
    h, w = planes.shape[:2]
    ys = np.linspace(0.0, h - 1.0, new_h, dtype=planes.dtype)
    xs = np.linspace(0.0, w - 1.0, new_w, dtype=planes.dtype)
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    out = sample_planes(planes, yy, xx)
    return out[:, :, 0] if squeeze else out


def _axis_scale(old, new):
    # displacement magnitudes follow the grid spacing ratio; a degenerate
    # 1-pixel source axis carries no spacing, so the ratio is defined as new
    if old == 1:
        return float(new)
    return (new - 1.0) / (old - 1.0)


def resample_field(field, new_h, new_w, validate=True):
    """Resample a displacement field to a new grid, rescaling magnitudes.

    Components are bilinearly interpolated on the corner-aligned grid and
    multiplied by (new_size - 1) / (old_size - 1) per axis so displacements
    stay in target-pixel units.
    """
    if validate:
        field = as_field(field)
    h, w = field.shape[:2]
    out = resample_values(field, new_h, new_w)
    out[:, :, 0] *= _axis_scale(h, new_h)
    out[:, :, 1] *= _axis_scale(w, new_w)
    return out


def downsample_image(img, factor=2, validate=True):
    """Block-average downsampling by a factor of 2.

    Odd trailing rows/columns are averaged as a smaller residual block.
    """
    if factor != 2:
        raise ValueError("only factor 2 is supported")
    if validate:
        img = as_image(img)
    h, w = img.shape[:2]
    if h < 2 or w < 2:
        raise ValueError("image must be at least 2x2 to downsample")
    row_starts = np.arange(0, h, 2)
    col_starts = np.arange(0, w, 2)
    sums = np.add.reduceat(np.add.reduceat(img, row_starts, axis=0),
                           col_starts, axis=1)
    row_sizes = np.minimum(row_starts + 2, h) - row_starts
    col_sizes = np.minimum(col_starts + 2, w) - col_starts
    counts = row_sizes[:, None] * col_sizes[None, :]
    return sums / counts[:, :, None]
