"""Nakagami density, moment and maximum-likelihood estimators, and voxel-wise fitting."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import ndimage, special, stats
from scipy.spatial import cKDTree

from .volume_io import EnvelopeVolume, RoiMask, ScalarVolume, check_pair

MLE_MAX_ITER = 64
MIN_MLE_SAMPLES = 8
_MU_MIN = 1e-8
_MU_MAX = 1e12


class DegenerateSample(ValueError):
    """The sample carries no information about the shape parameter."""


class ConvergenceFailure(RuntimeError):
    def __init__(self, message, last):
        super().__init__(message)
        self.last = last


@dataclass(frozen=True)
class NakagamiParams:
    mu: float
    omega: float

    def __post_init__(self):
        if not (np.isfinite(self.mu) and self.mu > 0):
            raise ValueError(f"mu must be finite and > 0, got {self.mu}")
        if not (np.isfinite(self.omega) and self.omega > 0):
            raise ValueError(f"omega must be finite and > 0, got {self.omega}")


@dataclass(frozen=True)
class LatticeConfig:
    """Cubic fitting neighbourhood of ``side`` voxels per axis; out-of-mask voxels are excluded."""

    side: int = 7
    border_policy: str = "exclude-outside-mask"

    def __post_init__(self):
        if self.side < 3 or self.side % 2 == 0:
            raise ValueError(f"lattice side must be odd and >= 3, got {self.side}")
        if self.border_policy != "exclude-outside-mask":
            raise ValueError(f"unsupported border policy {self.border_policy!r}")


@dataclass(frozen=True)
class NakagamiVolumes:
    mu_map: ScalarVolume
    omega_map: ScalarVolume
    config: LatticeConfig
    mask: np.ndarray
    method: np.ndarray  # 0 = MLE, 1 = moments, 2 = inherited from a neighbour


def nakagami_pdf(x, p: NakagamiParams):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("Nakagami density is defined for x >= 0")
    mu, omega = p.mu, p.omega
    with np.errstate(divide="ignore"):
        logpdf = (
            np.log(2.0)
            + mu * np.log(mu / omega)
            - special.gammaln(mu)
            + (2 * mu - 1) * np.log(x)
            - mu * x * x / omega
        )
    return np.exp(logpdf)


def log_likelihood(samples, p: NakagamiParams) -> float:
    """Sum of log densities over the strictly positive samples."""
    x = np.asarray(samples, dtype=float)
    x = x[x > 0]
    mu, omega = p.mu, p.omega
    return float(
        np.sum(
            np.log(2.0)
            + mu * np.log(mu / omega)
            - special.gammaln(mu)
            + (2 * mu - 1) * np.log(x)
            - mu * x * x / omega
        )
    )


def _check_samples(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2:
        raise DegenerateSample("need at least 2 samples")
    if np.any(~np.isfinite(x)) or np.any(x < 0):
        raise ValueError("samples must be finite and non-negative")
    if not np.any(x > 0):
        raise DegenerateSample("all samples are zero")
    return x


def estimate_moments(samples) -> NakagamiParams:
    """Second/fourth-moment estimator using population moments."""
    x = _check_samples(samples)
    x2 = x * x
    m2 = x2.mean()
    var = np.mean(x2 * x2) - m2 * m2
    if not var > 0:
        raise DegenerateSample("zero variance of x^2; shape is undefined")
    return NakagamiParams(float(m2 * m2 / var), float(m2))


def _shape_rhs(x2: np.ndarray) -> float:
    """log(mean x^2) - mean log x^2 over the non-zero samples."""
    pos = x2[x2 > 0]
    if pos.size * 2 <= x2.size:
        raise DegenerateSample("more than half of the samples are zero")
    return float(np.log(x2.mean()) - np.log(pos).mean())


def solve_shape(rhs, mu0, max_iter: int = MLE_MAX_ITER, tol: float = 1e-13):
    """Solve ``log(mu) - digamma(mu) = rhs`` elementwise.

    Newton steps in ``t = log(mu)`` safeguarded by a bisection bracket; the
    left-hand side is strictly decreasing in ``mu``. Returns ``(mu, converged)``.
    """
    rhs = np.asarray(rhs, dtype=float)
    t = np.log(np.clip(np.asarray(mu0, dtype=float), _MU_MIN, _MU_MAX))
    t = np.broadcast_to(t, rhs.shape).copy()
    lo = np.full(rhs.shape, np.log(_MU_MIN))
    hi = np.full(rhs.shape, np.log(_MU_MAX))
    done = np.zeros(rhs.shape, dtype=bool)
    for _ in range(max_iter):
        mu = np.exp(t)
        g = t - special.digamma(mu) - rhs
        # g is decreasing in t: g > 0 means the root lies above t
        lo = np.where(g > 0, t, lo)
        hi = np.where(g < 0, t, hi)
        dg = 1.0 - mu * special.polygamma(1, mu)
        step = np.where(dg < 0, -g / np.where(dg < 0, dg, -1.0), 0.0)
        t_new = t + step
        outside = ~((t_new > lo) & (t_new < hi)) | ~np.isfinite(t_new)
        t_new = np.where(outside, 0.5 * (lo + hi), t_new)
        conv = np.abs(t_new - t) <= tol * np.maximum(1.0, np.abs(t))
        t = np.where(done, t, t_new)
        done |= conv | (g == 0)
        if done.all():
            break
    return np.exp(t), done


def estimate_mle(samples, init: NakagamiParams | None = None) -> NakagamiParams:
    """Maximum-likelihood fit: closed-form omega and a Newton solve for mu.

    Zero amplitudes enter omega but are left out of the log term; a sample
    that is more than half zeros is degenerate.
    """
    x = _check_samples(samples)
    if init is None:
        init = estimate_moments(x)
    x2 = x * x
    rhs = _shape_rhs(x2)
    if not rhs > 0:
        raise DegenerateSample("all non-zero samples are equal")
    mu, ok = solve_shape(np.array(rhs), np.array(init.mu))
    mu = float(mu)
    if not ok:
        raise ConvergenceFailure(
            f"shape equation did not converge in {MLE_MAX_ITER} iterations",
            NakagamiParams(mu, float(x2.mean())),
        )
    return NakagamiParams(mu, float(x2.mean()))


# ---------------------------------------------------------------------------
# voxel-wise fitting


def _box_sum(a: np.ndarray, side: int) -> np.ndarray:
    w = np.ones(side)
    for axis in range(3):
        a = ndimage.correlate1d(a, w, axis=axis, mode="constant", cval=0.0)
    return a


def lattice_samples(vol, mask, center, side: int) -> np.ndarray:
    """In-mask amplitudes of the ``side``-cube centred on ``center`` (clipped at the volume edge)."""
    data = np.asarray(getattr(vol, "data", vol))
    inside = np.asarray(getattr(mask, "data", mask), bool)
    h = side // 2
    sl = tuple(slice(max(c - h, 0), c + h + 1) for c in center)
    return data[sl][inside[sl]]


def _nearest_fill(bad: np.ndarray, good: np.ndarray):
    """For each ``bad`` voxel, the index of the nearest ``good`` voxel.

    Ties are broken by disk scan order (``x + nx * (y + ny * z)``).
    """
    shape = bad.shape
    good_idx = np.argwhere(good)
    bad_idx = np.argwhere(bad)
    tree = cKDTree(good_idx)
    dist, _ = tree.query(bad_idx)
    out = np.empty((len(bad_idx), 3), dtype=int)
    for n, (p, d) in enumerate(zip(bad_idx, dist)):
        cands = good_idx[tree.query_ball_point(p, d + 1e-9)]
        order = np.ravel_multi_index(cands.T, shape, order="F")
        out[n] = cands[np.argmin(order)]
    return bad_idx, out


def fit_parametric_volumes(vol: EnvelopeVolume, mask: RoiMask, cfg: LatticeConfig = LatticeConfig()) -> NakagamiVolumes:
    """Per-voxel Nakagami maps from overlapping ``side``-cubes restricted to the mask.

    Lattices with at least ``MIN_MLE_SAMPLES`` usable samples get the ML fit,
    smaller ones the moment fit; degenerate lattices copy the parameters of the
    nearest non-degenerate voxel. Maps are zero outside the mask.
    """
    check_pair(vol, mask)
    inside = np.asarray(mask.data, bool)
    x = np.where(inside, np.asarray(vol.data, float), 0.0)
    x2 = x * x
    pos = inside & (x > 0)
    with np.errstate(divide="ignore"):
        logx2 = np.where(pos, np.log(np.where(pos, x2, 1.0)), 0.0)
    side = cfg.side
    n = np.rint(_box_sum(inside.astype(float), side))
    npos = np.rint(_box_sum(pos.astype(float), side))
    s2 = _box_sum(x2, side)
    s4 = _box_sum(x2 * x2, side)
    slog = _box_sum(logx2, side)

    with np.errstate(divide="ignore", invalid="ignore"):
        m2 = s2 / n
        var = s4 / n - m2 * m2
        mu_mom = m2 * m2 / var
        rhs = np.log(m2) - slog / npos

    use_mle = inside & (n >= MIN_MLE_SAMPLES) & (2 * npos > n) & (rhs > 0) & np.isfinite(rhs)
    use_mom = inside & ~use_mle & (n >= 2) & (var > 0) & np.isfinite(mu_mom)
    # moment fallback only where the lattice is too small for the MLE
    use_mom &= n < MIN_MLE_SAMPLES

    mu = np.zeros(inside.shape)
    omega = np.zeros(inside.shape)
    if use_mle.any():
        init = np.where(np.isfinite(mu_mom[use_mle]) & (mu_mom[use_mle] > 0), mu_mom[use_mle], 1.0)
        mu_hat, ok = solve_shape(rhs[use_mle], init)
        if not ok.all():
            bad = np.argwhere(use_mle)[np.flatnonzero(~ok)[0]]
            raise ConvergenceFailure(f"shape equation did not converge at voxel {tuple(bad)}", None)
        mu[use_mle] = mu_hat
        omega[use_mle] = m2[use_mle]
    mu[use_mom] = mu_mom[use_mom]
    omega[use_mom] = m2[use_mom]

    method = np.full(inside.shape, -1, dtype=np.int8)
    method[use_mle] = 0
    method[use_mom] = 1
    good = use_mle | use_mom
    degenerate = inside & ~good
    if degenerate.any():
        if not good.any():
            raise DegenerateSample("every lattice in the mask is degenerate")
        bad_idx, src = _nearest_fill(degenerate, good)
        bi, si = tuple(bad_idx.T), tuple(src.T)
        mu[bi] = mu[si]
        omega[bi] = omega[si]
        method[bi] = 2

    spacing = vol.spacing
    return NakagamiVolumes(
        mu_map=ScalarVolume(mu, spacing, kind="shape_mu", name=f"{vol.name}_mu"),
        omega_map=ScalarVolume(omega, spacing, kind="scale_omega", name=f"{vol.name}_omega"),
        config=cfg,
        mask=inside,
        method=method,
    )


# ---------------------------------------------------------------------------
# goodness of fit


def quantile_rmse(samples, p: NakagamiParams) -> float:
    """RMS gap between sorted samples and model quantiles at plotting positions (i - 0.5)/n."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    probs = (np.arange(1, n + 1) - 0.5) / n
    q = np.sqrt(stats.gamma.ppf(probs, p.mu, scale=p.omega / p.mu))
    return float(np.sqrt(np.mean((q - x) ** 2)))


def lattice_size_sweep(vol: EnvelopeVolume, mask: RoiMask, sides, center_stride: int = 4) -> list[tuple[int, float, float]]:
    """Quantile-matching RMSE of lattice fits per lattice size.

    The same set of lattice centres (in-mask voxels on a grid of step
    ``center_stride``) is used for every ``side`` so the sizes are compared on
    equal footing. Each centred cube, clipped to the volume and the mask, is
    fitted by ML and its quantile RMSE recorded; the per-side value is the mean
    over lattices. Returns ``(side, lattice volume in mm^3, rmse)`` rows.
    """
    check_pair(vol, mask)
    data = np.asarray(vol.data, float)
    inside = np.asarray(mask.data, bool)
    grid = np.zeros(inside.shape, dtype=bool)
    off = center_stride // 2
    grid[off::center_stride, off::center_stride, off::center_stride] = True
    centers = np.argwhere(grid & inside)
    if len(centers) == 0:
        centers = np.argwhere(inside)
    voxel_mm3 = float(np.prod(vol.spacing))
    rows = []
    for side in sides:
        side = LatticeConfig(int(side)).side
        errs = []
        for c in centers:
            x = lattice_samples(data, inside, c, side)
            try:
                p = estimate_mle(x)
            except DegenerateSample:
                continue
            errs.append(quantile_rmse(x, p))
        if not errs:
            raise DegenerateSample(f"no usable lattice of side {side}")
        rows.append((side, side**3 * voxel_mm3, float(np.mean(errs))))
    return rows


# ---------------------------------------------------------------------------
# scattering regimes


class Regime(enum.IntEnum):
    PRE_RICIAN = 0
    GENERALIZED_RICIAN = 1
    PRE_RAYLEIGH = 2
    RAYLEIGH = 3
    POST_RAYLEIGH = 4


class EnergyBand(enum.IntEnum):
    LOW = 0
    MID = 1
    HIGH = 2


_EQ_TOL = 1e-9


def regime_codes(mu) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    out = np.full(mu.shape, Regime.POST_RAYLEIGH, dtype=np.int8)
    out[mu < 1 - _EQ_TOL] = Regime.PRE_RAYLEIGH
    out[mu <= 0.5 + _EQ_TOL] = Regime.GENERALIZED_RICIAN
    out[mu < 0.5 - _EQ_TOL] = Regime.PRE_RICIAN
    out[np.abs(mu - 1) <= _EQ_TOL] = Regime.RAYLEIGH
    return out


def energy_codes(omega) -> np.ndarray:
    # omega == 7 exactly falls in HIGH
    omega = np.asarray(omega, dtype=float)
    out = np.full(omega.shape, EnergyBand.LOW, dtype=np.int8)
    out[omega >= 3] = EnergyBand.MID
    out[omega >= 7] = EnergyBand.HIGH
    return out


def classify_scattering(p: NakagamiParams) -> tuple[Regime, EnergyBand]:
    return Regime(int(regime_codes(p.mu))), EnergyBand(int(energy_codes(p.omega)))
