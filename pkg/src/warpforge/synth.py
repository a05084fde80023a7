"""Synthetic training data: label maps, image pairs, modality transforms.

Label maps are the per-pixel argmax over J smooth noise fields (coarse
N(0, 1) grids bilinearly upsampled).  Pairs are built by cropping a fixed
image and warping it with a random diffeomorphism; multi-modal variants
apply a photometric transform to the fixed image before warping with the
same field.
"""

from dataclasses import dataclass, field

import numpy as np

from . import grid
from .svf import SvfParams, random_diffeo
from .validation import as_image, as_rng

__all__ = [
    "LabelMapParams",
    "PairSample",
    "synth_labelmap",
    "labelmap_to_image",
    "make_pair",
    "recolor_random",
    "colorize_monotonic",
    "default_colormap",
    "make_multimodal_pair",
]

RECOLOR_MAX_DISTINCT = 256


@dataclass(frozen=True)
class LabelMapParams:
    n_labels: int = 16
    coarse_res: int = 8
    map_h: int = 320
    map_w: int = 320
    crop: int = 224
    seed: int = 0

    def __post_init__(self):
        if self.n_labels < 2:
            raise ValueError(f"n_labels must be >= 2, got {self.n_labels}")
        if self.coarse_res < 2:
            raise ValueError(f"coarse_res must be >= 2, got {self.coarse_res}")
        if self.map_h < self.crop or self.map_w < self.crop:
            raise ValueError(
                f"map size {self.map_h}x{self.map_w} smaller than crop {self.crop}"
            )


@dataclass
class PairSample:
    """One registration training sample.

    moving = warp(fixed, truth) by construction; moving_multimodal, when
    present, is the same warp applied to a photometrically transformed copy
    of the fixed image.
    """

    fixed: np.ndarray
    moving: np.ndarray
    truth: np.ndarray
    moving_multimodal: np.ndarray | None = field(default=None)


def synth_labelmap(params, rng=None):
    """Spatially coherent random label map via argmax of smooth noise.

    Ties resolve to the lowest label index.
    """
    rng = as_rng(params.seed if rng is None else rng)
    coarse = rng.standard_normal((params.n_labels, params.coarse_res, params.coarse_res))
    stack = np.stack(
        [grid.resample_values(coarse[j], params.map_h, params.map_w)
         for j in range(params.n_labels)],
        axis=0,
    )
    return np.argmax(stack, axis=0)


def labelmap_to_image(labels, rng, max_draws=1000):
    """Encode a label map as a grayscale image with well-separated intensities.

    Each label gets a U(0, 1) draw, rejected until it is at least 1/(4J)
    away from every previously assigned intensity.
    """
    rng = as_rng(rng)
    labels = np.asarray(labels)
    n_labels = int(labels.max()) + 1
    separation = 1.0 / (4.0 * n_labels)
    values = []
    draws = 0
    while len(values) < n_labels:
        candidate = rng.uniform()
        draws += 1
        if all(abs(candidate - v) >= separation for v in values):
            values.append(candidate)
        elif draws >= max_draws:
            raise ValueError(
                f"could not place {n_labels} intensities with separation "
                f"{separation:g} after {max_draws} draws"
            )
    lut = np.asarray(values)
    return lut[labels][:, :, np.newaxis]


def _random_crop(img, crop_h, crop_w, rng):
    h, w = img.shape[:2]
    if h < crop_h or w < crop_w:
        raise ValueError(f"image {h}x{w} smaller than crop {crop_h}x{crop_w}")
    top = int(rng.integers(0, h - crop_h + 1))
    left = int(rng.integers(0, w - crop_w + 1))
    return img[top:top + crop_h, left:left + crop_w]


def make_pair(img, params, rng=None):
    """Crop a fixed image and warp it with a fresh random diffeomorphism."""
    img = as_image(img)
    rng = as_rng(params.seed if rng is None else rng)
    fixed = _random_crop(img, params.target_h, params.target_w, rng)
    truth = random_diffeo(params, rng=rng)
    moving = grid.warp(fixed, truth, validate=False)
    return PairSample(fixed=fixed, moving=moving, truth=truth)


def recolor_random(img, rng):
    """Remap each distinct intensity of a label-style image to a fresh U(0, 1).

    Only defined for single-channel images with at most 256 distinct values;
    continuous-tone input must use colorize_monotonic instead.
    """
    img = as_image(img)
    rng = as_rng(rng)
    if img.shape[2] != 1:
        raise ValueError("recoloring is defined for single-channel images")
    values, inverse = np.unique(img[:, :, 0], return_inverse=True)
    if values.size > RECOLOR_MAX_DISTINCT:
        raise ValueError(
            f"{values.size} distinct intensities exceed the {RECOLOR_MAX_DISTINCT} "
            "limit; recoloring is defined for label-style images"
        )
    table = rng.uniform(size=values.size)
    return table[inverse].reshape(img.shape[0], img.shape[1], 1)


def default_colormap(gammas=(0.6, 1.0, 1.8)):
    """Per-channel gamma curves: continuous, strictly monotone, endpoint fixed."""
    return tuple((lambda x, g=g: np.power(x, g)) for g in gammas)


def _check_monotone(fn, channel, probes=257):
    xs = np.linspace(0.0, 1.0, probes)
    ys = np.asarray(fn(xs), dtype=np.float64)
    if ys.shape != xs.shape or not np.all(np.isfinite(ys)):
        raise ValueError(f"channel map {channel} must map [0,1] to finite scalars")
    if np.any(np.diff(ys) <= 0.0):
        raise ValueError(f"channel map {channel} is not strictly increasing")
    if ys[0] < 0.0 or ys[-1] > 1.0:
        raise ValueError(f"channel map {channel} leaves [0, 1]")


def colorize_monotonic(img, colormap=None):
    """Map a grayscale image through three monotone channel curves."""
    img = as_image(img)
    if img.shape[2] != 1:
        raise ValueError("colorize_monotonic expects a single-channel image")
    if colormap is None:
        colormap = default_colormap()
    if len(colormap) != 3:
        raise ValueError("colormap must provide exactly 3 channel maps")
    for c, fn in enumerate(colormap):
        _check_monotone(fn, c)
    gray = img[:, :, 0]
    channels = [np.clip(np.asarray(fn(gray), dtype=np.float64), 0.0, 1.0)
                for fn in colormap]
    return np.stack(channels, axis=2)


def make_multimodal_pair(img, params, mode, rng=None):
    """Mono-modal pair plus a multi-modal moving image sharing one warp."""
    img = as_image(img)
    rng = as_rng(params.seed if rng is None else rng)
    fixed = _random_crop(img, params.target_h, params.target_w, rng)
    truth = random_diffeo(params, rng=rng)
    if mode == "recolor":
        modality = recolor_random(fixed, rng)
    elif mode == "colorize":
        modality = colorize_monotonic(fixed)
    else:
        raise ValueError(f"unknown modality mode {mode!r}")
    moving = grid.warp(fixed, truth, validate=False)
    moving_mm = grid.warp(modality, truth, validate=False)
    return PairSample(fixed=fixed, moving=moving, truth=truth,
                      moving_multimodal=moving_mm)
