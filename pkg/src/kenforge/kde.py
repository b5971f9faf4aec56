"""Row-wise Gaussian kernel density estimation and top-k selection.

Every row of a matrix is treated as an independent 1-D sample. The density
of each element is evaluated against the whole row (itself included)::

    f(x_j) = 1 / (n h sqrt(2 pi)) * sum_i exp(-((x_j - x_i) / h)**2 / 2)

and the k elements with the highest density are the row's "most
representative" parameters. Ties on density go to the lower index, which
makes selections nested in k.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .utils import effective_threads

__all__ = [
    "KdeConfig",
    "RowDensity",
    "bandwidth",
    "row_bandwidths",
    "kde_density",
    "row_densities",
    "select_top_k",
    "density_order",
]

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
# upper bound on pairwise terms held in memory at once (float64 elements)
_BLOCK_ELEMENTS = 1 << 21

BANDWIDTH_RULES = ("scott", "silverman", "fixed")


@dataclass(frozen=True)
class KdeConfig:
    """Kernel and bandwidth policy.

    ``h`` is only used (and then required) with ``bandwidth_rule="fixed"``.
    ``degenerate_bandwidth`` replaces any computed bandwidth that is not
    positive, which happens for constant rows.
    """

    kernel: str = "gaussian"
    bandwidth_rule: str = "scott"
    h: Optional[float] = None
    degenerate_bandwidth: float = 1e-9

    def __post_init__(self):
        if self.kernel != "gaussian":
            raise ValueError(f"unsupported kernel {self.kernel!r}; only 'gaussian' is available")
        if self.bandwidth_rule not in BANDWIDTH_RULES:
            raise ValueError(f"bandwidth_rule must be one of {BANDWIDTH_RULES}, got {self.bandwidth_rule!r}")
        if self.bandwidth_rule == "fixed":
            if self.h is None or not (self.h > 0) or not math.isfinite(self.h):
                raise ValueError("fixed bandwidth requires a finite h > 0")
        if not (self.degenerate_bandwidth > 0) or not math.isfinite(self.degenerate_bandwidth):
            raise ValueError("degenerate_bandwidth must be a finite positive number")

    @classmethod
    def fixed(cls, h, **kwargs):
        return cls(bandwidth_rule="fixed", h=float(h), **kwargs)


@dataclass(frozen=True)
class RowDensity:
    densities: np.ndarray
    h_used: float


def _check_finite(X):
    bad = ~np.isfinite(X)
    if bad.any():
        idx = np.argwhere(bad)[0]
        where = int(idx[-1]) if X.ndim == 1 else tuple(int(i) for i in idx)
        raise ValueError(f"non-finite value {float(X[tuple(idx)])!r} at index {where}")


def _as_rows(X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim not in (1, 2) or X.shape[-1] < 1:
        raise ValueError(f"expected a non-empty row or 2-D matrix, got shape {X.shape}")
    _check_finite(X)
    return X[None, :] if X.ndim == 1 else X


def row_bandwidths(X, config: KdeConfig = KdeConfig()):
    """Bandwidth for every row of a 2-D array, shape ``(rows,)``."""
    X = _as_rows(X)
    n = X.shape[1]
    rule = config.bandwidth_rule
    if rule == "fixed":
        return np.full(X.shape[0], float(config.h))
    if n < 2:
        # sample std is undefined for a single point
        return np.full(X.shape[0], config.degenerate_bandwidth)
    # rounding in the mean can leave a spurious ~1e-17 spread on constant rows
    sigma = np.where(X.max(axis=1) == X.min(axis=1), 0.0, X.std(axis=1, ddof=1))
    if rule == "scott":
        h = sigma * n ** (-0.2)
    else:
        q75, q25 = np.percentile(X, [75, 25], axis=1)
        spread = (q75 - q25) / 1.34
        # a zero IQR (heavily tied rows) falls back to sigma alone
        scale = np.where(spread > 0, np.minimum(sigma, spread), sigma)
        h = 0.9 * scale * n ** (-0.2)
    return np.where(h > 0, h, config.degenerate_bandwidth)


def bandwidth(row, rule="scott", degenerate=1e-9):
    """Bandwidth of a single row under ``rule``.

    ``rule`` is ``"scott"``, ``"silverman"``, a ``("fixed", h)`` pair or a
    bare positive number meaning a fixed bandwidth.
    """
    if isinstance(rule, tuple):
        config = KdeConfig.fixed(rule[1], degenerate_bandwidth=degenerate)
    elif isinstance(rule, (int, float)):
        config = KdeConfig.fixed(rule, degenerate_bandwidth=degenerate)
    else:
        config = KdeConfig(bandwidth_rule=rule, degenerate_bandwidth=degenerate)
    return float(row_bandwidths(np.asarray(row, dtype=np.float64).reshape(1, -1), config)[0])


def _block_densities(X, h):
    """Exact pairwise densities for a block of rows, ``X`` of shape (r, n)."""
    n = X.shape[1]
    out = np.empty_like(X)
    inv_h = 1.0 / h
    q_step = max(1, _BLOCK_ELEMENTS // max(1, X.shape[0] * n))
    for q0 in range(0, n, q_step):
        q = slice(q0, q0 + q_step)
        u = (X[:, q, None] - X[:, None, :]) * inv_h[:, None, None]
        np.square(u, out=u)
        u *= -0.5
        np.exp(u, out=u)
        out[:, q] = u.sum(axis=2)
    out *= (_INV_SQRT_2PI * inv_h / n)[:, None]
    return out


def row_densities(X, config: KdeConfig = KdeConfig(), n_jobs=None):
    """Per-element densities of every row of ``X``.

    Returns ``(densities, bandwidths)`` with shapes ``X.shape`` and
    ``(rows,)``. Rows are processed in blocks, optionally on several threads;
    the result does not depend on the thread count.
    """
    X = _as_rows(X)
    h = row_bandwidths(X, config)
    rows, n = X.shape
    step = max(1, _BLOCK_ELEMENTS // (n * n))
    blocks = [slice(r0, r0 + step) for r0 in range(0, rows, step)]
    out = np.empty_like(X)
    threads = effective_threads(n_jobs)

    def work(s):
        out[s] = _block_densities(X[s], h[s])

    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, blocks))
    else:
        for s in blocks:
            work(s)
    return out, h


def kde_density(row, config: KdeConfig = KdeConfig()) -> RowDensity:
    """Density of each element of a 1-D ``row`` against the full row."""
    row = np.asarray(row, dtype=np.float64)
    if row.ndim != 1 or row.size < 1:
        raise ValueError(f"expected a non-empty 1-D row, got shape {row.shape}")
    dens, h = row_densities(row, config)
    return RowDensity(dens[0], float(h[0]))


def density_order(densities):
    """Column indices of each row sorted by density desc, index asc."""
    densities = np.asarray(densities)
    return np.argsort(-densities, axis=-1, kind="stable")


def select_top_k(row, k, config: KdeConfig = KdeConfig()):
    """Sorted indices of the ``min(k, n)`` highest-density elements of ``row``."""
    if k < 0:
        raise ValueError(f"k must be non-negative, got {k}")
    dens = kde_density(row, config).densities
    return np.sort(density_order(dens)[: min(int(k), dens.size)])
