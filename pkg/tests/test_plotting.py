import numpy as np

from voxtex.plotting import plot_mid_slices, plot_study, plot_sweep


def test_sweep_plot_deterministic(tmp_path):
    rows = [(3, 27.0, 0.1), (5, 125.0, 0.08), (7, 343.0, 0.09)]
    a = plot_sweep(rows, tmp_path / "a.png")
    b = plot_sweep(rows, tmp_path / "b.png")
    assert a.read_bytes()[:4] == b"\x89PNG"
    assert a.read_bytes() == b.read_bytes()


def test_mid_slices_with_mask(tmp_path):
    v = np.random.default_rng(0).random((8, 9, 10))
    mask = v > 0.3
    p = plot_mid_slices({"mu": v, "omega": 2 * v}, tmp_path / "sub" / "m.png", mask)
    assert p.exists() and p.stat().st_size > 0


def test_study_plot(tmp_path):
    X = np.random.default_rng(1).normal(size=(6, 4))
    p = plot_study(X, ["a", "b"] * 3, ["f1", "f2", "f3", "f4"], tmp_path / "s.png")
    assert p.read_bytes()[:4] == b"\x89PNG"
