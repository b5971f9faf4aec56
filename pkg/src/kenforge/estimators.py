"""scikit-learn compatible front ends.

``RowDensitySelector`` is a stateless transformer on plain 2-D arrays.
``KENPruner`` and ``KSweepSearch`` work on :class:`~kenforge.Checkpoint`
objects: ``fit`` takes the fine-tuned checkpoint (and optionally the
pre-trained one) and ``transform`` maps a pre-trained checkpoint to its
pruned counterpart. All of them support ``get_params``/``set_params`` and
``sklearn.base.clone``.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .checkpoint import Checkpoint, diff_checkpoints
from .kde import KdeConfig, density_order, row_densities
from .pruning import (QuadraticEvaluator, apply_masks, build_masks, k_sweep,
                      reset_percentage)
from .utils import select_names, validate_matrix

__all__ = ["RowDensitySelector", "KENPruner", "KSweepSearch"]


class _KdeParamsMixin:
    def _kde_config(self):
        if self.bandwidth == "fixed" or isinstance(self.bandwidth, (int, float)):
            h = self.h if self.bandwidth == "fixed" else self.bandwidth
            return KdeConfig.fixed(h, degenerate_bandwidth=self.degenerate_bandwidth)
        return KdeConfig(bandwidth_rule=self.bandwidth, degenerate_bandwidth=self.degenerate_bandwidth)


class RowDensitySelector(_KdeParamsMixin, TransformerMixin, BaseEstimator):
    """Mark the ``k`` highest-density entries of every row.

    Parameters
    ----------
    k : int
        Entries kept per row (capped at the row length).
    bandwidth : {"scott", "silverman", "fixed"} or float
        Bandwidth rule; a number means a fixed bandwidth.
    h : float, optional
        Bandwidth for ``bandwidth="fixed"``.
    degenerate_bandwidth : float
        Fallback for rows whose computed bandwidth is not positive.
    n_jobs : int, optional
        Worker threads; ``None`` defers to ``KENFORGE_THREADS``.
    """

    def __init__(self, k=1, bandwidth="scott", h=None, degenerate_bandwidth=1e-9, n_jobs=None):
        self.k = k
        self.bandwidth = bandwidth
        self.h = h
        self.degenerate_bandwidth = degenerate_bandwidth
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        X = validate_matrix(X)
        if self.k < 0:
            raise ValueError(f"k must be non-negative, got {self.k}")
        self.config_ = self._kde_config()
        self.n_features_in_ = X.shape[1]
        return self

    def _check(self, X):
        check_is_fitted(self, "config_")
        X = validate_matrix(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} columns, fitted with {self.n_features_in_}")
        return X

    def density(self, X):
        """Per-entry row-wise KDE densities, same shape as ``X``."""
        dens, _ = row_densities(self._check(X), self.config_, n_jobs=self.n_jobs)
        return dens

    def transform(self, X):
        dens = self.density(X)
        mask = np.zeros(dens.shape, dtype=bool)
        k = min(int(self.k), dens.shape[1])
        np.put_along_axis(mask, density_order(dens)[:, :k], True, axis=1)
        return mask


class KENPruner(_KdeParamsMixin, BaseEstimator):
    """Keep the ``k`` most representative fine-tuned values per row, reset the rest.

    ``tensors`` selects the prunable matrices: an explicit list, a regex, or
    ``None``. With ``None`` the tensors that differ between ``pre`` and
    ``fine`` are used when ``pre`` is passed to :meth:`fit`, otherwise every
    tensor.
    """

    def __init__(self, k=1, tensors=None, bandwidth="scott", h=None, degenerate_bandwidth=1e-9,
                 n_jobs=None):
        self.k = k
        self.tensors = tensors
        self.bandwidth = bandwidth
        self.h = h
        self.degenerate_bandwidth = degenerate_bandwidth
        self.n_jobs = n_jobs

    def _prunable(self, fine, pre):
        if self.tensors is None and pre is not None:
            return diff_checkpoints(pre, fine)
        return select_names(fine.names, self.tensors)

    def fit(self, fine: Checkpoint, pre: Checkpoint = None):
        self.prunable_ = self._prunable(fine, pre)
        self.masks_ = build_masks(fine, self.prunable_, int(self.k), self._kde_config(),
                                  n_jobs=self.n_jobs)
        self.fine_ = fine
        return self

    def transform(self, pre: Checkpoint) -> Checkpoint:
        check_is_fitted(self, "masks_")
        return apply_masks(pre, self.fine_, self.masks_)

    def fit_transform(self, fine: Checkpoint, pre: Checkpoint) -> Checkpoint:
        return self.fit(fine, pre).transform(pre)

    def report(self, scope="masked_only"):
        check_is_fitted(self, "masks_")
        return reset_percentage(self.masks_, self.fine_, scope)


class KSweepSearch(_KdeParamsMixin, BaseEstimator):
    """Grow k along ``schedule`` until the pruned model matches the baseline.

    ``evaluator`` is any callable ``Checkpoint -> float`` (higher is better);
    ``None`` uses the quadratic distance to the fine-tuned checkpoint.
    ``baseline=None`` uses the evaluator's score of the fine-tuned model.
    """

    def __init__(self, schedule=(1,), evaluator=None, baseline=None, tensors=None,
                 bandwidth="scott", h=None, degenerate_bandwidth=1e-9, n_jobs=None):
        self.schedule = schedule
        self.evaluator = evaluator
        self.baseline = baseline
        self.tensors = tensors
        self.bandwidth = bandwidth
        self.h = h
        self.degenerate_bandwidth = degenerate_bandwidth
        self.n_jobs = n_jobs

    def fit(self, fine: Checkpoint, pre: Checkpoint):
        if self.tensors is None:
            self.prunable_ = diff_checkpoints(pre, fine)
        else:
            self.prunable_ = select_names(fine.names, self.tensors)
        evaluator = self.evaluator if self.evaluator is not None else QuadraticEvaluator(fine)
        self.result_ = k_sweep(pre, fine, self.prunable_, self._kde_config(), evaluator,
                               list(self.schedule), self.baseline, n_jobs=self.n_jobs)
        self.k_ = self.result_.k
        self.masks_ = self.result_.masks
        self.trace_ = self.result_.trace
        self.reached_baseline_ = self.result_.reached_baseline
        self.fine_ = fine
        return self

    def transform(self, pre: Checkpoint) -> Checkpoint:
        check_is_fitted(self, "masks_")
        return apply_masks(pre, self.fine_, self.masks_)
