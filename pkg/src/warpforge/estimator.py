"""Scikit-learn style front end for the registration engine.

DeformableRegistration fits a deformation field to one (moving, fixed) image
pair and then transforms images (warps them into the fixed frame), so the
engine slots into sklearn pipelines, clone() and get_params/set_params.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from . import grid
from .metrics import correlation_coefficient
from .registration import RegConfig, register
from .validation import as_image

__all__ = ["DeformableRegistration"]


class DeformableRegistration(BaseEstimator, TransformerMixin):
    """Estimate a dense deformation aligning a moving image to a fixed one.

    Parameters mirror RegConfig; fit(X, y) treats X as the moving image and
    y as the fixed image.  After fitting, transform(X) warps an image with
    the estimated field.

    Attributes
    ----------
    field_ : (H, W, 2) displacement field, phi(x) = x + u(x)
    result_ : full RegResult including warped image, loss trace and metrics
    """

    def __init__(self, alpha=0.01, similarity="feature_mse", levels=3,
                 iters_per_level=200, step=0.5, beta1=0.9, beta2=0.999,
                 epsilon=1e-8, parametrization="svf", svf_steps=7, seed=0):
        self.alpha = alpha
        self.similarity = similarity
        self.levels = levels
        self.iters_per_level = iters_per_level
        self.step = step
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.parametrization = parametrization
        self.svf_steps = svf_steps
        self.seed = seed

    def _config(self):
        return RegConfig(
            alpha=self.alpha, similarity=self.similarity, levels=self.levels,
            iters_per_level=self.iters_per_level, step=self.step,
            moment_decay=(self.beta1, self.beta2), epsilon=self.epsilon,
            parametrization=self.parametrization, svf_steps=self.svf_steps,
            seed=self.seed,
        )

    def fit(self, X, y):
        """Estimate the field warping moving image X onto fixed image y."""
        moving = as_image(X, "moving")
        fixed = as_image(y, "fixed")
        self.result_ = register(fixed, moving, self._config())
        self.field_ = self.result_.field
        return self

    def transform(self, X):
        """Warp an image into the fixed frame with the fitted field."""
        if not hasattr(self, "field_"):
            raise NotFittedError("DeformableRegistration is not fitted yet")
        img = as_image(X)
        if img.shape[:2] != self.field_.shape[:2]:
            raise ValueError(
                f"image shape {img.shape[:2]} does not match the fitted field "
                f"{self.field_.shape[:2]}"
            )
        return grid.warp(img, self.field_, validate=False)

    def score(self, X, y):
        """Correlation coefficient between the fixed image and warped X."""
        cc = correlation_coefficient(as_image(y), self.transform(X))
        return float("nan") if cc is None else cc
