"""Validation metrics: correlation coefficient, mutual information, folding.

CC follows the Pearson formula over all channels jointly and is undefined
(None) for constant inputs.  MI uses a hard joint histogram with equal-width
bins on [0, 1] and reports bits.  Folding is the percentage of pixels whose
Jacobian determinant is non-positive.
"""

import json
from dataclasses import dataclass

import numpy as np

from . import grid
from .validation import as_field, as_image

__all__ = [
    "MetricsReport",
    "correlation_coefficient",
    "mutual_information",
    "folding_percent",
    "evaluate_pair",
    "format_paired",
]

MI_DEFAULT_BINS = 32


def correlation_coefficient(a, b):
    """Pearson correlation over all intensities; None if either is constant."""
    a = as_image(a, "first image")
    b = as_image(b, "second image")
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    av = a.ravel()
    bv = b.ravel()
    da = av - av.mean()
    db = bv - bv.mean()
    na = np.sqrt(np.sum(da * da))
    nb = np.sqrt(np.sum(db * db))
    if na == 0.0 or nb == 0.0:
        return None
    return float(np.sum(da * db) / (na * nb))


def _luminance(img):
    return img.mean(axis=2) if img.shape[2] > 1 else img[:, :, 0]


def _entropy_bits(counts, total):
    """Shannon entropy in bits from histogram counts.

    Counts are sorted before summation so the result is bit-identical for
    any cell ordering (this is what makes MI symmetric bit-exactly).
    """
    p = np.sort(counts[counts > 0].ravel()) / total
    return float(-np.sum(p * np.log2(p)))


def mutual_information(a, b, bins=MI_DEFAULT_BINS):
    """Histogram mutual information in bits over equal-width bins on [0, 1].

    Multi-channel inputs are reduced to luminance (channel mean) first.
    """
    if bins < 2:
        raise ValueError(f"bins must be at least 2, got {bins}")
    a = as_image(a, "first image")
    b = as_image(b, "second image")
    if a.shape[:2] != b.shape[:2]:
        raise ValueError(f"spatial shape mismatch: {a.shape[:2]} vs {b.shape[:2]}")
    av = _luminance(a).ravel()
    bv = _luminance(b).ravel()
    n = av.size
    edges = np.linspace(0.0, 1.0, bins + 1)
    ca, _ = np.histogram(av, bins=edges)
    cb, _ = np.histogram(bv, bins=edges)
    cab, _, _ = np.histogram2d(av, bv, bins=(edges, edges))
    return _entropy_bits(ca, n) + _entropy_bits(cb, n) - _entropy_bits(cab, n)


def folding_percent(field):
    """Percentage of pixels with det(J_phi) <= 0."""
    field = as_field(field)
    det = grid.jacobian_det(field, validate=False)
    return float(100.0 * np.count_nonzero(det <= 0.0) / det.size)


@dataclass
class MetricsReport:
    """Bundle of metrics for one registered pair."""

    cc: float | None
    mi: float
    folding_percent: float
    mse: float
    n_pixels: int

    def to_dict(self):
        return {
            "cc": self.cc,
            "mi": self.mi,
            "folding_percent": self.folding_percent,
            "mse": self.mse,
            "n_pixels": self.n_pixels,
        }

    def to_json(self, **kwargs):
        kwargs.setdefault("sort_keys", True)
        return json.dumps(self.to_dict(), **kwargs)


def evaluate_pair(fixed, warped, field, bins=MI_DEFAULT_BINS):
    """All metrics for a (fixed, warped, field) triple."""
    fixed = as_image(fixed, "fixed")
    warped = as_image(warped, "warped")
    if fixed.shape[:2] != warped.shape[:2]:
        raise ValueError("fixed and warped must share spatial shape")
    mse = float(np.mean((fixed - warped) ** 2)) if fixed.shape == warped.shape \
        else float(np.mean((_luminance(fixed) - _luminance(warped)) ** 2))
    return MetricsReport(
        cc=correlation_coefficient(fixed, warped) if fixed.shape == warped.shape else None,
        mi=mutual_information(fixed, warped, bins=bins),
        folding_percent=folding_percent(field),
        mse=mse,
        n_pixels=int(fixed.shape[0] * fixed.shape[1]),
    )


def format_paired(value, folding):
    """Table cell in the 'CC(%|J|)' / 'MI(%|J|)' convention, e.g. 0.98(1.38)."""
    if value is None:
        return f"undef({folding:.2f})"
    return f"{value:.2f}({folding:.2f})"
