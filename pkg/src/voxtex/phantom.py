"""Synthetic ground-truth volumes: Nakagami speckle phantoms and fBm fields."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .volume_io import EnvelopeVolume, RoiMask, ScalarVolume


@dataclass(frozen=True)
class LesionSpec:
    """Spherical inclusion. ``contrast_db`` scales the mean energy omega."""

    center: tuple[float, float, float]
    diameter: float
    contrast_db: float = 0.0
    mu_inside: float = 1.0

    def __post_init__(self):
        if not self.diameter > 0:
            raise ValueError(f"lesion diameter must be > 0, got {self.diameter}")
        if not self.mu_inside > 0:
            raise ValueError(f"lesion mu must be > 0, got {self.mu_inside}")


@dataclass(frozen=True)
class PhantomSpec:
    """Phantom layout in millimetres; voxel ``i`` sits at ``i * spacing``.

    ``roi_radii`` (mm) optionally restricts the volume of interest to an
    ellipsoid centred in the volume; ``None`` means the whole volume.
    """

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    background: tuple[float, float] = (1.0, 1.0)
    lesions: Sequence[LesionSpec] = field(default_factory=tuple)
    seed: int = 0
    roi_radii: tuple[float, float, float] | None = None
    name: str = "phantom"

    def __post_init__(self):
        mu, omega = self.background
        if not (mu > 0 and omega > 0):
            raise ValueError(f"background mu and omega must be > 0, got {self.background}")
        if len(self.dims) != 3 or min(self.dims) < 1:
            raise ValueError(f"invalid dims {self.dims}")
        object.__setattr__(self, "lesions", tuple(self.lesions))

    @classmethod
    def from_dict(cls, d: dict) -> "PhantomSpec":
        lesions = [
            LesionSpec(
                center=tuple(les["center"]),
                diameter=les["diameter"],
                contrast_db=les.get("contrast_db", 0.0),
                mu_inside=les.get("mu_inside", d.get("background", [1.0, 1.0])[0]),
            )
            for les in d.get("lesions", [])
        ]
        roi = d.get("roi_radii")
        return cls(
            dims=tuple(d["dims"]),
            spacing=tuple(d.get("spacing", (1.0, 1.0, 1.0))),
            background=tuple(d.get("background", (1.0, 1.0))),
            lesions=lesions,
            seed=int(d.get("seed", 0)),
            roi_radii=None if roi is None else tuple(roi),
            name=d.get("name", "phantom"),
        )


def sample_nakagami(mu: float, omega: float, n, seed=None) -> np.ndarray:
    """Draw Nakagami(mu, omega) amplitudes as square roots of Gamma(mu, omega/mu) draws.

    ``seed`` may be an int, ``None`` or a ``numpy.random.Generator``. ``n`` may
    be a count or an array shape.
    """
    if not (mu > 0 and omega > 0):
        raise ValueError(f"Nakagami parameters must be > 0, got mu={mu}, omega={omega}")
    if np.isscalar(n) and n < 1:
        raise ValueError(f"sample count must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    return np.sqrt(rng.gamma(mu, omega / mu, size=n))


def _voxel_coords(dims, spacing):
    return np.meshgrid(
        *[np.arange(n) * s for n, s in zip(dims, spacing)], indexing="ij"
    )


def _sphere_touches_box(les: LesionSpec, dims, spacing) -> bool:
    r = les.diameter / 2
    lo = np.zeros(3)
    hi = (np.asarray(dims) - 1) * np.asarray(spacing)
    nearest = np.clip(les.center, lo, hi)
    return float(np.linalg.norm(nearest - np.asarray(les.center))) <= r


def ellipsoid_mask(dims, spacing, radii, center=None) -> np.ndarray:
    """Boolean ellipsoid with semi-axes ``radii`` (mm), centred in the volume by default."""
    coords = _voxel_coords(dims, spacing)
    if center is None:
        center = [(n - 1) * s / 2 for n, s in zip(dims, spacing)]
    q = sum(((c - c0) / r) ** 2 for c, c0, r in zip(coords, center, radii))
    return q <= 1.0


def _paint_sphere(labels: np.ndarray, les: LesionSpec, spacing, value: int) -> None:
    # only the bounding box of the sphere is evaluated
    r = les.diameter / 2
    axes, box = [], []
    for c, s, n in zip(les.center, spacing, labels.shape):
        lo = max(0, int(np.ceil((c - r) / s)))
        hi = min(n, int(np.floor((c + r) / s)) + 1)
        if hi <= lo:
            return
        axes.append(np.arange(lo, hi) * s - c)
        box.append(slice(lo, hi))
    d2 = axes[0][:, None, None] ** 2 + axes[1][None, :, None] ** 2 + axes[2][None, None, :] ** 2
    labels[tuple(box)][d2 <= r * r] = value


def generate_phantom(spec: PhantomSpec) -> tuple[EnvelopeVolume, RoiMask, ScalarVolume]:
    """Render a speckle phantom.

    Returns the envelope volume, the volume-of-interest mask and a label volume
    (0 = background, k = k-th lesion).
    """
    labels = np.zeros(spec.dims, dtype=np.int64)
    centers = np.array([les.center for les in spec.lesions], dtype=float).reshape(-1, 3)
    for k, les in enumerate(spec.lesions, start=1):
        if not _sphere_touches_box(les, spec.dims, spec.spacing):
            raise ValueError(f"lesion {k} lies entirely outside the volume")
        if k > 1:
            gaps = np.linalg.norm(centers[: k - 1] - centers[k - 1], axis=1)
            radii = np.array([o.diameter for o in spec.lesions[: k - 1]]) / 2 + les.diameter / 2
            hit = np.flatnonzero(gaps < radii)
            if hit.size:
                raise ValueError(f"lesions {hit[0] + 1} and {k} overlap")
        _paint_sphere(labels, les, spec.spacing, k)

    mu_bg, omega_bg = spec.background
    mu = np.full(spec.dims, float(mu_bg))
    omega = np.full(spec.dims, float(omega_bg))
    for k, les in enumerate(spec.lesions, start=1):
        inside = labels == k
        mu[inside] = les.mu_inside
        omega[inside] = omega_bg * 10.0 ** (les.contrast_db / 10.0)

    rng = np.random.default_rng(spec.seed)
    amplitude = np.sqrt(rng.gamma(mu, omega / mu))

    if spec.roi_radii is None:
        roi = np.ones(spec.dims, dtype=bool)
    else:
        roi = ellipsoid_mask(spec.dims, spec.spacing, spec.roi_radii)
    vol = EnvelopeVolume(amplitude, spec.spacing, name=spec.name)
    mask = RoiMask(roi, spec.spacing, name=f"{spec.name}_mask")
    label_vol = ScalarVolume(labels, spec.spacing, kind="label", name=f"{spec.name}_labels")
    return vol, mask, label_vol


def _fbm_spectrum(shape, hurst: float, n_alias: int = 1) -> np.ndarray:
    """Lattice-sampled fBm power spectrum on the ``rfftn`` grid.

    The continuous ``|f| ** -(2H + 3)`` law is periodised over alias shifts
    ``|k| <= n_alias`` per axis; the remaining aliases are added as the
    spherical-shell integral ``4 pi R ** -2H / 2H`` with ``R = n_alias + 1/2``.
    """
    fx, fy, fz = np.meshgrid(
        np.fft.fftfreq(shape[0]), np.fft.fftfreq(shape[1]), np.fft.rfftfreq(shape[2]), indexing="ij"
    )
    expo = -(2.0 * hurst + 3.0) / 2.0
    psd = np.zeros(fx.shape)
    shifts = range(-n_alias, n_alias + 1)
    for a in shifts:
        for b in shifts:
            for c in shifts:
                f2 = (fx + a) ** 2 + (fy + b) ** 2 + (fz + c) ** 2
                with np.errstate(divide="ignore"):
                    psd += np.where(f2 > 0, f2, np.inf) ** expo
    radius = n_alias + 0.5
    psd += 4.0 * np.pi * radius ** (-2.0 * hurst) / (2.0 * hurst)
    psd[0, 0, 0] = 0.0
    return psd


def generate_fbm_volume(dims, hurst: float, seed=None, spacing=(1.0, 1.0, 1.0), embed: int = 2) -> ScalarVolume:
    """Isotropic fractional Brownian field by spectral synthesis.

    Gaussian white noise is shaped by the square root of a power spectrum
    proportional to ``|f| ** -(2H + 3)``. The field is synthesised on a grid
    ``embed`` times larger per axis and cropped, which suppresses the
    periodic wrap-around of the FFT, then standardised to zero mean and unit
    variance.
    """
    if not 0.0 < hurst < 1.0:
        raise ValueError(f"Hurst exponent must lie in (0, 1), got {hurst}")
    dims = tuple(int(n) for n in dims)
    big = tuple(n * embed for n in dims)
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(big)
    spectrum = np.fft.rfftn(noise) * np.sqrt(_fbm_spectrum(big, hurst))
    field_ = np.fft.irfftn(spectrum, s=big, axes=(0, 1, 2))[: dims[0], : dims[1], : dims[2]]
    field_ = field_ - field_.mean()
    field_ /= field_.std()
    return ScalarVolume(field_, spacing, kind="wavelet_coeff", name=f"fbm_H{hurst:g}")
