import csv

import numpy as np
import pytest

from kenforge import emit_overlap_table, emit_tri_panel
from kenforge.analysis import OverlapReport
from kenforge.viz import downsample, read_pgm


def report(a, b, pct, model="BERT"):
    return OverlapReport((a, b), {}, pct, model)


def test_all_zero_panels_are_white(tmp_path):
    z = np.zeros((3, 4), bool)
    paths = emit_tri_panel(z, z, z, tmp_path / "p")
    assert [p.rsplit("/", 1)[-1] for p in paths] == ["p.common.pgm", "p.a_only.pgm", "p.b_only.pgm"]
    for p in paths:
        data = open(p, "rb").read()
        assert data.startswith(b"P5\n4 3\n255\n")
        assert data[len(b"P5\n4 3\n255\n"):] == b"\xff" * 12


def test_two_by_two_byte_coding(tmp_path):
    m = np.array([[1, 0], [0, 1]], bool)
    z = np.zeros_like(m)
    common, _, _ = emit_tri_panel(m, z, z, tmp_path / "x")
    assert open(common, "rb").read() == b"P5\n2 2\n255\n" + bytes([0, 255, 255, 0])


def test_csv_panels(tmp_path):
    m = np.array([[1, 0, 1]], bool)
    z = np.zeros_like(m)
    common, a_only, _ = emit_tri_panel(m, z, z, tmp_path / "x", format="csv")
    lines = open(common).read().split("\n")
    assert lines[0] == "# panel=common retained=2"
    assert lines[1:] == ["c0,c1,c2", "1,0,1", ""]
    assert open(a_only).read().endswith("0,0,0\n")


def test_read_pgm_roundtrip(tmp_path, rng):
    m = rng.random((5, 9)) < 0.3
    common, _, _ = emit_tri_panel(m, ~m, np.zeros_like(m), tmp_path / "r")
    np.testing.assert_array_equal(read_pgm(common) == 0, m)


def test_downsample_any():
    m = np.zeros((5, 5), bool)
    m[4, 4] = True
    d = downsample(m, 2)
    assert d.shape == (3, 3) and d.sum() == 1 and d[2, 2]
    assert downsample(m, 1) is not None and downsample(m, 1).shape == (5, 5)
    with pytest.raises(ValueError):
        downsample(m, 0)


def test_shape_mismatch(tmp_path):
    with pytest.raises(ValueError):
        emit_tri_panel(np.zeros((2, 2)), np.zeros((2, 3)), np.zeros((2, 2)), tmp_path / "x")


def test_overlap_table_single(tmp_path):
    emit_overlap_table([report("AU", "GB", 69.73)], tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text() == "Subnet A,Subnet B,BERT\nAU,GB,69.73\n"


def test_overlap_table_empty(tmp_path):
    emit_overlap_table([], tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text() == "Subnet A,Subnet B\n"


def test_overlap_table_self_pair(tmp_path):
    emit_overlap_table([report("A", "A", 100.0)], tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text().splitlines()[1] == "A,A,100.00"


def test_overlap_table_multi_model_and_unordered_pairs(tmp_path):
    reps = [report("GB", "AU", 69.73), report("AU", "GB", 69.94, "DeBERTa"),
            report("AU", "IE", 82.1), report("IE", "AU", 82.1)]
    emit_overlap_table(reps, tmp_path / "t.csv")
    rows = list(csv.reader(open(tmp_path / "t.csv")))
    assert rows == [["Subnet A", "Subnet B", "BERT", "DeBERTa"],
                    ["AU", "GB", "69.73", "69.94"],
                    ["AU", "IE", "82.10", ""]]


def test_overlap_table_conflict(tmp_path):
    with pytest.raises(ValueError, match="conflicting"):
        emit_overlap_table([report("AU", "GB", 1.0), report("GB", "AU", 2.0)], tmp_path / "t.csv")


def test_emission_is_deterministic(tmp_path, rng):
    m = rng.random((7, 7)) < 0.5
    a = emit_tri_panel(m, ~m, m, tmp_path / "a")
    b = emit_tri_panel(m, ~m, m, tmp_path / "b")
    for x, y in zip(a, b):
        assert open(x, "rb").read() == open(y, "rb").read()
