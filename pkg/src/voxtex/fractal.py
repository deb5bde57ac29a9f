"""Per-voxel Hurst exponents and fractal-dimension maps.

For every voxel the mean absolute difference (MAD) to its neighbours is
collected per distance bin ``r = 1..j`` (offsets grouped by rounded length);
the Hurst exponent is the least-squares slope of ``log(MAD_r)`` against the
log of the bin's mean pair distance over ``r = 1..j-1``, and the fractal
dimension is ``3 - H``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .volume_io import RoiMask, ScalarVolume

MAD_FLOOR = 1e-12


@dataclass(frozen=True)
class ScalePlan:
    """Integer offsets grouped by rounded Euclidean length.

    ``offsets[r - 1]`` is an ``(k, 3)`` array of the offsets in bin ``r``;
    only one of each ``(d, -d)`` pair is kept.
    """

    max_scale: int
    offsets: tuple[np.ndarray, ...]

    @property
    def scales(self) -> np.ndarray:
        return np.arange(1, self.max_scale + 1, dtype=float)

    @property
    def distances(self) -> np.ndarray:
        """Mean Euclidean pair distance of each bin (the regression abscissa)."""
        return np.array([np.linalg.norm(o, axis=1).mean() for o in self.offsets])


def build_scale_plan(j: int) -> ScalePlan:
    if j < 2:
        raise ValueError(f"max scale must be >= 2, got {j}")
    rng = np.arange(-j, j + 1)
    d = np.stack(np.meshgrid(rng, rng, rng, indexing="ij"), axis=-1).reshape(-1, 3)
    # half-space: first nonzero component positive
    first = np.where(d[:, 0] != 0, d[:, 0], np.where(d[:, 1] != 0, d[:, 1], d[:, 2]))
    d = d[first > 0]
    r = np.rint(np.linalg.norm(d, axis=1)).astype(int)
    bins = tuple(d[r == s] for s in range(1, j + 1))
    for s, b in enumerate(bins, start=1):
        if len(b) == 0:
            raise AssertionError(f"empty scale bin {s}")
    return ScalePlan(j, bins)


@dataclass(frozen=True)
class MadMatrix:
    """Per-voxel MAD stack: ``values[r - 1]`` holds scale ``r``; NaN where no pair was usable."""

    values: np.ndarray
    counts: np.ndarray


def mean_abs_diff(v, mask: RoiMask | np.ndarray | None, plan: ScalePlan, n_scales: int | None = None) -> MadMatrix:
    """MAD per in-mask voxel and scale.

    Partners beyond the volume edge are taken from the half-sample mirrored
    extension; partners outside the mask are skipped. ``n_scales`` limits the
    computation to the first bins (all ``plan.max_scale`` by default).
    """
    data = np.asarray(getattr(v, "data", v), dtype=float)
    if mask is None:
        inside = np.ones(data.shape, dtype=bool)
    else:
        inside = np.asarray(getattr(mask, "data", mask), dtype=bool)
    if inside.shape != data.shape:
        raise ValueError(f"mask dims {inside.shape} do not match volume dims {data.shape}")
    j = plan.max_scale
    n_scales = j if n_scales is None else n_scales
    full = bool(inside.all())
    padded = np.pad(data, j, mode="symmetric")
    pmask = None if full else np.pad(inside, j, mode="symmetric").astype(float)
    shape = data.shape
    nx, ny, nz = shape
    values = np.full((j,) + shape, np.nan)
    counts = np.zeros((j,) + shape, dtype=np.int32)
    tmp = np.empty(shape)
    for s in range(n_scales):
        acc = np.zeros(shape)
        cnt = np.zeros(shape)
        for dx, dy, dz in plan.offsets[s]:
            sl = (
                slice(j + dx, j + dx + nx),
                slice(j + dy, j + dy + ny),
                slice(j + dz, j + dz + nz),
            )
            np.subtract(padded[sl], data, out=tmp)
            np.abs(tmp, out=tmp)
            if pmask is None:
                acc += tmp
            else:
                ok = pmask[sl]
                tmp *= ok
                acc += tmp
                cnt += ok
        if pmask is None:
            cnt[:] = len(plan.offsets[s])
        counts[s] = cnt
        with np.errstate(invalid="ignore", divide="ignore"):
            values[s] = np.where(cnt > 0, acc / np.maximum(cnt, 1), np.nan)
    values[:, ~inside] = np.nan
    counts[:, ~inside] = 0
    return MadMatrix(values, counts)


@dataclass(frozen=True)
class HurstFit:
    slope: np.ndarray
    intercept: np.ndarray
    valid: np.ndarray
    flat: np.ndarray


def regress_hurst(mad: MadMatrix, plan: ScalePlan | None = None, normalize: bool = True) -> HurstFit:
    """Least-squares slope of log-MAD on log-distance over scales ``1..j-1``.

    ``plan.distances`` supplies the abscissa; without a plan the integer bin
    index is used.

    MAD values are floored at ``MAD_FLOOR``; with ``normalize`` each voxel's
    MAD vector is divided by its Euclidean norm before the log, which shifts
    the intercept but not the slope. Voxels with fewer than two usable scales
    are invalid (NaN).
    """
    j = mad.values.shape[0] if plan is None else plan.max_scale
    m = mad.values[: j - 1]
    present = np.isfinite(m)
    floored = np.where(present, np.maximum(m, MAD_FLOOR), np.nan)
    flat = np.all(~present | (floored <= MAD_FLOOR), axis=0) & present.any(axis=0)
    if normalize:
        norm = np.sqrt(np.nansum(floored**2, axis=0))
        floored = floored / np.where(norm > 0, norm, 1.0)
    y = np.log(floored)
    dist = np.arange(1, j, dtype=float) if plan is None else plan.distances[: j - 1]
    x = np.log(dist).reshape((-1,) + (1,) * (m.ndim - 1))
    w = present.astype(float)
    n = w.sum(axis=0)
    valid = n >= 2
    y0 = np.where(present, y, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        sx = (w * x).sum(axis=0)
        sy = y0.sum(axis=0)
        sxx = (w * x * x).sum(axis=0) - sx * sx / n
        sxy = (w * x * y0).sum(axis=0) - sx * sy / n
        slope = sxy / sxx
        intercept = (sy - slope * sx) / n
    if normalize:
        # report log K of the unnormalised power law
        with np.errstate(invalid="ignore", divide="ignore"):
            intercept = intercept + np.log(np.where(norm > 0, norm, 1.0))
    valid &= np.isfinite(slope)
    slope = np.where(valid, slope, np.nan)
    intercept = np.where(valid, intercept, np.nan)
    return HurstFit(slope, intercept, valid, flat & valid)


@dataclass(frozen=True)
class FractalMap:
    """FD = 3 - H per voxel plus bookkeeping.

    ``volume`` is a ``fractal_fd`` ScalarVolume with 0 at invalid voxels;
    ``hurst`` holds the clamped exponent and ``hurst_raw`` the regression
    slope before clamping (both NaN where invalid).
    """

    volume: ScalarVolume
    hurst: np.ndarray
    hurst_raw: np.ndarray
    valid: np.ndarray
    clamped_low: int
    clamped_high: int
    invalid_count: int
    flat_count: int

    @property
    def fd(self) -> np.ndarray:
        return self.volume.data

    def stats(self) -> dict:
        fd = self.fd[self.valid]
        return {
            "mean_fd": float(fd.mean()) if fd.size else None,
            "mean_hurst": float(np.nanmean(self.hurst_raw)) if fd.size else None,
            "valid_count": int(self.valid.sum()),
            "invalid_count": self.invalid_count,
            "clamped_low": self.clamped_low,
            "clamped_high": self.clamped_high,
            "flat_count": self.flat_count,
        }


def fd_map(hurst, valid=None, spacing=(1.0, 1.0, 1.0), name: str = "", flat=None) -> FractalMap:
    h = np.asarray(hurst, dtype=float)
    if valid is None:
        valid = np.isfinite(h)
    valid = np.asarray(valid, dtype=bool) & np.isfinite(h)
    low = valid & (h < 0)
    high = valid & (h > 1)
    hc = np.where(valid, np.clip(h, 0.0, 1.0), np.nan)
    fd = np.where(valid, 3.0 - hc, 0.0)
    return FractalMap(
        volume=ScalarVolume(fd, spacing, kind="fractal_fd", name=name),
        hurst=hc,
        hurst_raw=np.where(valid, h, np.nan),
        valid=valid,
        clamped_low=int(low.sum()),
        clamped_high=int(high.sum()),
        invalid_count=int((~valid).sum()),
        flat_count=0 if flat is None else int(np.asarray(flat).sum()),
    )


def estimate_fractal_map(v, mask=None, jmax: int = 5, plan: ScalePlan | None = None) -> FractalMap:
    """MAD stack -> slope -> FD for one volume."""
    plan = plan or build_scale_plan(jmax)
    data = np.asarray(getattr(v, "data", v), dtype=float)
    inside = np.ones(data.shape, bool) if mask is None else np.asarray(getattr(mask, "data", mask), bool)
    mad = mean_abs_diff(data, inside, plan, n_scales=plan.max_scale - 1)
    fit = regress_hurst(mad, plan)
    valid = fit.valid & inside
    fmap = fd_map(
        fit.slope,
        valid,
        spacing=getattr(v, "spacing", (1.0, 1.0, 1.0)),
        name=getattr(v, "name", ""),
        flat=fit.flat & inside,
    )
    n_inside = int(inside.sum())
    return FractalMap(
        fmap.volume,
        fmap.hurst,
        fmap.hurst_raw,
        fmap.valid,
        fmap.clamped_low,
        fmap.clamped_high,
        n_inside - int(valid.sum()),
        fmap.flat_count,
    )


def subband_feature(fmap: FractalMap, mask=None) -> float:
    """Mean FD over valid in-mask voxels."""
    sel = fmap.valid
    if mask is not None:
        sel = sel & np.asarray(getattr(mask, "data", mask), bool)
    if not sel.any():
        raise ValueError("no valid in-mask voxels in fractal map")
    return float(fmap.fd[sel].mean())
