import numpy as np
import pytest

from kenforge import Checkpoint, MaskSet


def random_checkpoint(rng, n_tensors=5, max_dim=12, meta=None, prefix="layer"):
    tensors = {}
    for i in range(n_tensors):
        shape = tuple(int(s) for s in rng.integers(1, max_dim + 1, size=2))
        tensors[f"{prefix}.{i}.w"] = rng.standard_normal(shape).astype(np.float32)
    return Checkpoint(tensors, meta or {"model": "toy", "state": "pretrained"})


def perturbed(rng, ckpt, names, scale=0.05, fraction=0.5):
    """Copy of ``ckpt`` with a random subset of entries of ``names`` changed."""
    tensors = dict(ckpt.tensors)
    for name in names:
        t = ckpt[name].copy()
        hit = rng.random(t.shape) < fraction
        hit.flat[rng.integers(t.size)] = True
        t[hit] += (scale * rng.standard_normal(int(hit.sum())) + scale).astype(np.float32)
        tensors[name] = t
    return Checkpoint(tensors, {**ckpt.meta, "state": "finetuned"})


def random_maskset(rng, shapes, k, meta=None):
    masks = {}
    for name, (r, c) in shapes.items():
        m = np.zeros((r, c), dtype=bool)
        for i in range(r):
            m[i, rng.choice(c, size=min(k, c), replace=False)] = True
        masks[name] = m
    return MaskSet(masks, k, meta or {})


@pytest.fixture
def rng():
    return np.random.default_rng(20240613)


@pytest.fixture
def pair(rng):
    pre = random_checkpoint(rng, n_tensors=4, max_dim=10)
    fine = perturbed(rng, pre, pre.names[:3])
    return pre, fine


ACCEPTANCE_RESULTS = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker and report.when == "call":
        ACCEPTANCE_RESULTS[marker.args[0]] = (marker.args[1], report.passed)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        title, ok = ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {n:>2}: {title}")
