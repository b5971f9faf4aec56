"""Small shared helpers: thread budget, tensor filters, mask validation."""

import os
import re
from typing import Callable, Iterable, List, Optional, Sequence, Union

import numpy as np

TensorFilter = Union[None, str, "re.Pattern[str]", Sequence[str], Callable[[str], bool]]

THREADS_ENV = "KENFORGE_THREADS"


def effective_threads(n_jobs=None):
    """Resolve a worker count.

    ``n_jobs=None`` reads ``KENFORGE_THREADS`` (unset or 0 means one worker
    per CPU); negative values count back from the CPU total, as in joblib.
    """
    try:
        cpus = len(os.sched_getaffinity(0))
    except AttributeError:  # not available on macOS/Windows
        cpus = os.cpu_count() or 1
    if n_jobs is None:
        raw = os.environ.get(THREADS_ENV, "0").strip() or "0"
        try:
            n_jobs = int(raw)
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
        if n_jobs < 0:
            raise ValueError(f"{THREADS_ENV} must be >= 0, got {n_jobs}")
    if n_jobs == 0:
        return cpus
    if n_jobs < 0:
        return max(1, cpus + 1 + n_jobs)
    return n_jobs


def select_names(names: Iterable[str], tensor_filter: TensorFilter = None) -> List[str]:
    """Apply a tensor filter to ``names``, keeping their order.

    The filter may be ``None`` (keep all), a regex string or compiled
    pattern (``re.search`` semantics), an explicit list of names, or a
    predicate. Explicit names that are absent raise ``KeyError``.
    """
    names = list(names)
    if tensor_filter is None:
        return names
    if isinstance(tensor_filter, str):
        tensor_filter = re.compile(tensor_filter)
    if isinstance(tensor_filter, re.Pattern):
        return [n for n in names if tensor_filter.search(n)]
    if callable(tensor_filter):
        return [n for n in names if tensor_filter(n)]
    wanted = list(tensor_filter)
    missing = [n for n in wanted if n not in set(names)]
    if missing:
        raise KeyError(f"unknown tensor name(s): {missing}")
    keep = set(wanted)
    return [n for n in names if n in keep]


def check_mask(mask, name: Optional[str] = None, shape=None):
    """Coerce to a 2-D boolean array, optionally checking its shape."""
    arr = np.asarray(mask)
    label = f"mask {name!r}" if name else "mask"
    if arr.ndim != 2:
        raise ValueError(f"{label} must be 2-D, got shape {arr.shape}")
    if arr.dtype != bool:
        if not np.isin(arr, (0, 1)).all():
            raise ValueError(f"{label} must be binary")
        arr = arr.astype(bool)
    if shape is not None and arr.shape != tuple(shape):
        raise ValueError(f"{label} has shape {arr.shape}, expected {tuple(shape)}")
    return arr


def validate_matrix(X, name="X"):
    """``check_array`` to a finite 2-D float64 matrix.

    Finiteness is checked here, not by sklearn, so the error can name the
    offending index.
    """
    from sklearn.utils.validation import check_array

    try:
        X = check_array(X, dtype=np.float64, ensure_all_finite=False, input_name=name)
    except TypeError:  # scikit-learn < 1.6
        X = check_array(X, dtype=np.float64, force_all_finite=False, input_name=name)
    bad = ~np.isfinite(X)
    if bad.any():
        i, j = (int(v) for v in np.argwhere(bad)[0])
        raise ValueError(f"{name} has non-finite value {X[i, j]!r} at index ({i}, {j})")
    return X
