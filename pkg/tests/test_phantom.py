import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from voxtex.fractal import estimate_fractal_map
from voxtex.nakagami import estimate_moments
from voxtex.phantom import (
    LesionSpec,
    PhantomSpec,
    ellipsoid_mask,
    generate_fbm_volume,
    generate_phantom,
    sample_nakagami,
)


def test_rayleigh_case_energy():
    x = sample_nakagami(1.0, 2.0, 100_000, seed=1)
    assert np.all(x >= 0)
    assert abs(np.mean(x**2) - 2.0) < 0.05


def test_pre_rayleigh_moment_identity():
    x2 = sample_nakagami(0.5, 1.0, 100_000, seed=2) ** 2
    ratio = x2.var() / x2.mean() ** 2  # = 1 / mu
    assert abs(ratio - 2.0) < 0.1


def test_sampler_deterministic():
    assert np.array_equal(sample_nakagami(1.3, 0.7, 50, seed=9), sample_nakagami(1.3, 0.7, 50, seed=9))


@pytest.mark.parametrize("mu, omega, n", [(0, 1, 5), (1, -1, 5), (1, 1, 0)])
def test_sampler_rejects(mu, omega, n):
    with pytest.raises(ValueError):
        sample_nakagami(mu, omega, n)


@settings(max_examples=8)
@given(st.floats(0.3, 5.0), st.floats(0.1, 10.0), st.integers(0, 2**32 - 1))
def test_moments_recover_sampler_parameters(mu, omega, seed):
    p = estimate_moments(sample_nakagami(mu, omega, 100_000, seed=seed))
    assert abs(p.mu / mu - 1) < 0.03
    assert abs(p.omega / omega - 1) < 0.02


def _lesion_phantom(db, seed=0, mu_inside=1.0):
    spec = PhantomSpec(
        dims=(40, 40, 40),
        background=(1.0, 1.0),
        lesions=[LesionSpec((20, 20, 20), 14, db, mu_inside)],
        seed=seed,
    )
    vol, _, labels = generate_phantom(spec)
    inside = labels.data == 1
    return vol.data**2, inside


@pytest.mark.parametrize("db, ratio", [(6.0, 10 ** 0.6), (-6.0, 10 ** -0.6)])
def test_energy_contrast_law(db, ratio):
    x2, inside = _lesion_phantom(db)
    assert inside.sum() >= 1000
    measured = x2[inside].mean() / x2[~inside].mean()
    assert abs(measured / ratio - 1) < 0.05


def test_null_lesion_indistinguishable():
    x2, inside = _lesion_phantom(0.0, seed=4)
    assert stats.ttest_ind(x2[inside], x2[~inside], equal_var=False).pvalue > 0.01


def test_phantom_outputs_and_determinism():
    spec = PhantomSpec((16, 12, 10), (0.5, 0.5, 1.0), lesions=[LesionSpec((4, 3, 5), 3, 3.0)], seed=7, roi_radii=(3, 2.5, 4))
    a = generate_phantom(spec)
    b = generate_phantom(spec)
    assert np.array_equal(a[0].data, b[0].data)
    vol, mask, labels = a
    assert vol.dims == mask.dims == labels.dims == (16, 12, 10)
    assert set(np.unique(labels.data)) == {0, 1}
    assert labels.kind == "label"
    assert np.array_equal(mask.data, ellipsoid_mask(spec.dims, spec.spacing, spec.roi_radii))


def test_lesion_membership_by_centre_distance():
    spec = PhantomSpec((9, 9, 9), spacing=(1, 1, 2), lesions=[LesionSpec((4, 4, 8), 4.2)])
    _, _, labels = generate_phantom(spec)
    idx = np.indices((9, 9, 9)).astype(float)
    d2 = (idx[0] - 4) ** 2 + (idx[1] - 4) ** 2 + (idx[2] * 2 - 8) ** 2
    assert np.array_equal(labels.data == 1, d2 <= 2.1**2)


def test_overlapping_lesions_rejected():
    spec = PhantomSpec((20, 20, 20), lesions=[LesionSpec((5, 5, 5), 6), LesionSpec((9, 5, 5), 6)])
    with pytest.raises(ValueError, match="lesions 1 and 2 overlap"):
        generate_phantom(spec)


def test_lesion_outside_rejected():
    spec = PhantomSpec((10, 10, 10), lesions=[LesionSpec((30, 5, 5), 4)])
    with pytest.raises(ValueError, match="outside"):
        generate_phantom(spec)


@pytest.mark.parametrize("kwargs", [{"background": (0, 1)}, {"background": (1, -2)}, {"dims": (4, 4)}])
def test_invalid_phantom_spec(kwargs):
    base = {"dims": (4, 4, 4)}
    base.update(kwargs)
    with pytest.raises(ValueError):
        PhantomSpec(**base)


def test_invalid_lesion():
    with pytest.raises(ValueError):
        LesionSpec((0, 0, 0), 0)


def test_spec_from_dict():
    spec = PhantomSpec.from_dict(
        {"dims": [8, 8, 8], "background": [2.0, 1.5], "lesions": [{"center": [4, 4, 4], "diameter": 3}], "seed": 5}
    )
    assert spec.lesions[0].mu_inside == 2.0
    assert spec.seed == 5 and spec.roi_radii is None


@pytest.mark.parametrize("h", [0.0, 1.0, -0.2])
def test_fbm_rejects_hurst(h):
    with pytest.raises(ValueError):
        generate_fbm_volume((8, 8, 8), h)


def test_fbm_standardised_and_seeded():
    a = generate_fbm_volume((16, 16, 16), 0.5, seed=3)
    b = generate_fbm_volume((16, 16, 16), 0.5, seed=3)
    assert np.array_equal(a.data, b.data)
    assert abs(a.data.mean()) < 1e-12 and abs(a.data.std() - 1) < 1e-12


@pytest.mark.slow
def test_fbm_half_recovered():
    v = generate_fbm_volume((64, 64, 64), 0.5, seed=0)
    h = estimate_fractal_map(v).stats()["mean_hurst"]
    assert 0.4 <= h <= 0.6


def test_fbm_ordering():
    lo = estimate_fractal_map(generate_fbm_volume((40, 40, 40), 0.2, seed=1)).stats()["mean_hurst"]
    hi = estimate_fractal_map(generate_fbm_volume((40, 40, 40), 0.8, seed=1)).stats()["mean_hurst"]
    assert lo < hi
