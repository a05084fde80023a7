"""Input validation helpers shared by every module.

Images are float arrays of shape (H, W, C) with C in {1, 3} and values in
[0, 1].  Displacement fields are float arrays of shape (H, W, 2) storing
(dy, dx) in pixel units.  These helpers normalize user input to those
conventions and reject anything else.
"""

import numpy as np

__all__ = [
    "as_image",
    "as_field",
    "check_same_grid",
    "as_rng",
]


def as_image(img, name="image"):
    """Validate and normalize an image to a float64 (H, W, C) array.

    Accepts (H, W) arrays as single-channel images.  Rejects non-finite
    values, intensities outside [0, 1] and channel counts other than 1 or 3.
    """
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, np.newaxis]
    if arr.ndim != 3:
        raise ValueError(f"{name} must be 2-D or (H, W, C), got shape {arr.shape}")
    if arr.shape[2] not in (1, 3):
        raise ValueError(f"{name} must have 1 or 3 channels, got {arr.shape[2]}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} has empty spatial dimensions: {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite intensities")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError(
            f"{name} intensities must lie in [0, 1], got range "
            f"[{arr.min():g}, {arr.max():g}]"
        )
    return arr


def as_field(field, name="field"):
    """Validate a displacement (or velocity) field as float64 (H, W, 2)."""
    arr = np.asarray(field, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 2:
        raise ValueError(f"{name} must have shape (H, W, 2), got {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} has empty spatial dimensions: {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite components")
    return arr


def check_same_grid(a, b, name_a="first", name_b="second"):
    """Require two arrays to share height and width."""
    if a.shape[0] != b.shape[0] or a.shape[1] != b.shape[1]:
        raise ValueError(
            f"{name_a} and {name_b} must share spatial shape, got "
            f"{a.shape[:2]} vs {b.shape[:2]}"
        )


def as_rng(rng):
    """Accept a Generator, a seed, or None (fresh entropy) and return a Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)
