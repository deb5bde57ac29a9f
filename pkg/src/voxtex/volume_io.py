"""Volume data model and the JSON-header + raw-payload on-disk format.

Arrays are held in memory indexed ``[x, y, z]`` with shape ``(nx, ny, nz)``.
On disk the payload is flattened so that the linear index is
``x + nx * (y + ny * z)``, which is Fortran order for that shape.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

WORKING_DTYPE = np.float64

KINDS = (
    "envelope",
    "shape_mu",
    "scale_omega",
    "fractal_fd",
    "wavelet_coeff",
    "mask",
    "label",
    "regime_band",
    "energy_band",
)

_DISK_DTYPES = {"f32le": np.dtype("<f4"), "u8": np.dtype("u1")}
_INTEGER_KINDS = {"mask", "label", "regime_band", "energy_band"}


class VolumeFormatError(ValueError):
    """Raised when a header or payload does not describe a valid volume."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _check_spacing(spacing) -> tuple[float, float, float]:
    sp = tuple(float(s) for s in spacing)
    if len(sp) != 3 or not all(np.isfinite(s) and s > 0 for s in sp):
        raise ValueError(f"spacing must be three positive finite values, got {spacing!r}")
    return sp


def _first_bad_index(bad: np.ndarray) -> tuple[int, int, int]:
    flat = np.flatnonzero(bad.ravel(order="F"))[0]
    return tuple(int(i) for i in np.unravel_index(flat, bad.shape, order="F"))


@dataclass(frozen=True)
class ScalarVolume:
    """A real-valued voxel field of a given ``kind``."""

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    kind: str = "wavelet_coeff"
    name: str = ""

    def __post_init__(self):
        data = np.array(self.data, dtype=WORKING_DTYPE, copy=True)
        if data.ndim != 3:
            raise ValueError(f"volume data must be 3-D, got shape {data.shape}")
        if self.kind not in KINDS:
            raise ValueError(f"unknown volume kind {self.kind!r}")
        if not np.all(np.isfinite(data)):
            idx = _first_bad_index(~np.isfinite(data))
            raise ValueError(f"non-finite value at voxel {idx}")
        object.__setattr__(self, "data", _frozen(data))
        object.__setattr__(self, "spacing", _check_spacing(self.spacing))

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(n) for n in self.data.shape)

    def with_data(self, data, kind=None, name=None) -> "ScalarVolume":
        return ScalarVolume(data, self.spacing, kind or self.kind, self.name if name is None else name)


@dataclass(frozen=True)
class EnvelopeVolume(ScalarVolume):
    """RF-envelope amplitudes: finite and non-negative everywhere."""

    kind: str = "envelope"

    def __post_init__(self):
        super().__post_init__()
        if self.kind != "envelope":
            raise ValueError("EnvelopeVolume kind must be 'envelope'")
        if np.any(self.data < 0):
            idx = _first_bad_index(self.data < 0)
            raise ValueError(f"negative amplitude at voxel {idx}")

    def scaled(self, c: float) -> "EnvelopeVolume":
        return EnvelopeVolume(self.data * c, self.spacing, name=self.name)


@dataclass(frozen=True)
class RoiMask:
    """Boolean volume-of-interest; any nonzero input value counts as inside."""

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    name: str = ""
    kind: str = field(default="mask", init=False)

    def __post_init__(self):
        data = np.array(self.data, copy=True) != 0
        if data.ndim != 3:
            raise ValueError(f"mask data must be 3-D, got shape {data.shape}")
        if not data.any():
            raise ValueError("mask has no voxels inside the volume of interest")
        object.__setattr__(self, "data", _frozen(data))
        object.__setattr__(self, "spacing", _check_spacing(self.spacing))

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(n) for n in self.data.shape)

    @classmethod
    def full(cls, dims, spacing=(1.0, 1.0, 1.0)) -> "RoiMask":
        return cls(np.ones(dims, dtype=bool), spacing)


def check_pair(vol, mask: RoiMask) -> None:
    """Raise if ``mask`` cannot be paired with ``vol``."""
    if tuple(vol.dims) != tuple(mask.dims):
        raise ValueError(f"mask dims {mask.dims} do not match volume dims {vol.dims}")


def stack_slices(slices: Sequence, spacing=(1.0, 1.0, 1.0), name: str = "") -> EnvelopeVolume:
    """Stack 2-D images indexed ``[x, y]`` along z; slice ``i`` lands at z-index ``i``."""
    if len(slices) == 0:
        raise ValueError("no slices to stack")
    arrays = [np.asarray(s, dtype=WORKING_DTYPE) for s in slices]
    shape = arrays[0].shape
    if len(shape) != 2:
        raise ValueError(f"slices must be 2-D, got shape {shape}")
    for i, a in enumerate(arrays):
        if a.shape != shape:
            raise ValueError(f"slice {i} has dims {a.shape}, expected {shape}")
    return EnvelopeVolume(np.stack(arrays, axis=2), spacing, name=name)


def _paths(path) -> tuple[Path, Path]:
    p = Path(path)
    if p.suffix in (".json", ".raw"):
        p = p.with_suffix("")
    return p.with_suffix(".json"), p.with_suffix(".raw")


def save_volume(v, path) -> tuple[Path, Path]:
    """Write ``v`` as ``<stem>.json`` + ``<stem>.raw``; returns both paths."""
    header_path, raw_path = _paths(path)
    kind = v.kind
    if isinstance(v, RoiMask) or kind in _INTEGER_KINDS:
        dtype = "u8"
        payload = np.asarray(v.data).astype(np.uint8)
    else:
        dtype = "f32le"
        payload = np.asarray(v.data).astype("<f4")
    header = {
        "dims": list(v.dims),
        "spacing_mm": list(v.spacing),
        "dtype": dtype,
        "kind": kind,
        "name": v.name,
    }
    try:
        header_path.parent.mkdir(parents=True, exist_ok=True)
        header_path.write_text(json.dumps(header, indent=2) + "\n")
        raw_path.write_bytes(payload.ravel(order="F").tobytes())
    except OSError as exc:
        raise OSError(f"cannot write volume to {header_path.with_suffix('')}: {exc}") from exc
    return header_path, raw_path


def read_header(path) -> dict:
    header_path, _ = _paths(path)
    try:
        header = json.loads(Path(header_path).read_text())
    except FileNotFoundError:
        raise
    except (OSError, json.JSONDecodeError) as exc:
        raise VolumeFormatError(f"corrupt header {header_path}: {exc}") from exc
    for key in ("dims", "spacing_mm", "dtype"):
        if key not in header:
            raise VolumeFormatError(f"header {header_path} is missing {key!r}")
    dims = header["dims"]
    if len(dims) != 3 or not all(isinstance(n, int) and n > 0 for n in dims):
        raise VolumeFormatError(f"header {header_path} has invalid dims {dims!r}")
    if header["dtype"] not in _DISK_DTYPES:
        raise VolumeFormatError(f"header {header_path} has unsupported dtype {header['dtype']!r}")
    header.setdefault("kind", "envelope")
    header.setdefault("name", "")
    return header


def load_volume(path):
    """Load a volume written by :func:`save_volume`.

    Returns an :class:`EnvelopeVolume`, :class:`RoiMask` or
    :class:`ScalarVolume` depending on the header ``kind``. Float payloads are
    promoted to float64.
    """
    header = read_header(path)
    _, raw_path = _paths(path)
    dims = tuple(header["dims"])
    dtype = _DISK_DTYPES[header["dtype"]]
    raw = Path(raw_path).read_bytes()
    expected = int(np.prod(dims)) * dtype.itemsize
    if len(raw) != expected:
        raise VolumeFormatError(
            f"payload size mismatch for {raw_path}: {len(raw)} bytes, expected {expected}"
        )
    data = np.frombuffer(raw, dtype=dtype).reshape(dims, order="F")
    kind = header["kind"]
    spacing = header["spacing_mm"]
    name = header["name"]
    if dtype.kind == "f":
        data = data.astype(WORKING_DTYPE)
        bad = ~np.isfinite(data)
        if bad.any():
            raise VolumeFormatError(f"non-finite value in {raw_path} at voxel {_first_bad_index(bad)}")
    if kind == "mask":
        return RoiMask(data, spacing, name=name)
    if kind == "envelope":
        return EnvelopeVolume(data, spacing, name=name)
    return ScalarVolume(data, spacing, kind=kind, name=name)


def load_mask(path) -> RoiMask:
    v = load_volume(path)
    if isinstance(v, RoiMask):
        return v
    return RoiMask(v.data, v.spacing, name=v.name)


def load_envelope(path) -> EnvelopeVolume:
    v = load_volume(path)
    if isinstance(v, EnvelopeVolume):
        return v
    return EnvelopeVolume(np.asarray(v.data, dtype=WORKING_DTYPE), v.spacing, name=v.name)
