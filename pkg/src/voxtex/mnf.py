"""End-to-end multifractal Nakagami feature (MNF) extraction."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .fractal import FractalMap, build_scale_plan, estimate_fractal_map, subband_feature
from .nakagami import LatticeConfig, NakagamiVolumes, energy_codes, fit_parametric_volumes, regime_codes
from .volume_io import EnvelopeVolume, RoiMask, ScalarVolume, check_pair, save_volume
from .wavelet3d import SubbandNode, SubbandTree, daubechies8, expand_tree

log = logging.getLogger(__name__)

SOURCES = ("mu", "omega")


class RefinementTooAggressive(ValueError):
    pass


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class MnfConfig:
    """Pipeline settings.

    ``refine_override`` keeps every slice (and flags the case) when slice
    refinement would leave fewer than ``min_slices``; otherwise that raises.
    """

    lattice: LatticeConfig = field(default_factory=LatticeConfig)
    jmax: int = 5
    max_level: int = 3
    termination: bool = True
    refine: bool = True
    min_slices: int = 8
    refine_override: bool = True

    def __post_init__(self):
        if self.max_level < 1:
            raise ValueError(f"max_level must be >= 1, got {self.max_level}")
        if self.jmax < 2:
            raise ValueError(f"jmax must be >= 2, got {self.jmax}")

    @classmethod
    def from_dict(cls, d: dict) -> "MnfConfig":
        d = dict(d)
        side = d.pop("side", None)
        lattice = d.pop("lattice", None)
        if isinstance(lattice, dict):
            lattice = LatticeConfig(**lattice)
        if lattice is None:
            lattice = LatticeConfig(side) if side is not None else LatticeConfig()
        known = {"jmax", "max_level", "termination", "refine", "min_slices", "refine_override"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown MNF config keys: {sorted(unknown)}")
        return cls(lattice=lattice, **d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lattice"] = asdict(self.lattice)
        return d


@dataclass(frozen=True)
class Feature:
    source: str
    level: int
    path: str
    fd: float

    @property
    def key(self) -> tuple[str, int, str]:
        return (self.source, self.level, self.path)


@dataclass
class MnfDescriptor:
    case_id: str
    features: list[Feature]
    levels: dict[str, int] = field(default_factory=dict)
    refinement_overridden: bool = False

    def __len__(self):
        return len(self.features)

    def vector(self) -> np.ndarray:
        return np.array([f.fd for f in self.features])

    def to_json(self) -> dict:
        return {
            "case_id": self.case_id,
            "features": [
                {"source": f.source, "level": f.level, "path": f.path, "fd": f.fd} for f in self.features
            ],
        }

    @classmethod
    def from_json(cls, d: dict) -> "MnfDescriptor":
        feats = [Feature(f["source"], int(f["level"]), f["path"], float(f["fd"])) for f in d["features"]]
        levels = {}
        for f in feats:
            levels[f.source] = max(levels.get(f.source, 0), f.level)
        return cls(d["case_id"], feats, levels)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "MnfDescriptor":
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class Refinement:
    volume: EnvelopeVolume
    mask: RoiMask
    kept: tuple[int, ...]
    areas_mm2: tuple[float, ...]
    overridden: bool


def refine_volume(vol: EnvelopeVolume, mask: RoiMask, min_slices: int = 8, override: bool = False) -> Refinement:
    """Keep the z-slices whose in-mask area strictly exceeds the median area.

    Empty slices are left out of the median. When fewer than ``min_slices``
    slices would remain, ``override`` keeps all slices instead of raising
    :class:`RefinementTooAggressive`.
    """
    check_pair(vol, mask)
    inside = np.asarray(mask.data, bool)
    sx, sy, _ = vol.spacing
    areas = inside.sum(axis=(0, 1)) * sx * sy
    nonzero = areas[areas > 0]
    median = float(np.median(nonzero))
    kept = np.flatnonzero(areas > median)
    overridden = False
    if len(kept) < min_slices:
        if not override:
            raise RefinementTooAggressive(
                f"refinement keeps {len(kept)} of {len(areas)} slices (< {min_slices})"
            )
        kept = np.arange(len(areas))
        overridden = True
    new_vol = EnvelopeVolume(np.asarray(vol.data)[:, :, kept], vol.spacing, name=vol.name)
    new_mask = RoiMask(inside[:, :, kept], mask.spacing, name=mask.name)
    return Refinement(new_vol, new_mask, tuple(int(k) for k in kept), tuple(float(a) for a in areas), overridden)


def fill_outside(data: np.ndarray, inside: np.ndarray) -> np.ndarray:
    """Replace out-of-mask voxels by their nearest in-mask value."""
    if inside.all():
        return np.array(data, dtype=float)
    _, idx = ndimage.distance_transform_edt(~inside, return_indices=True)
    return np.asarray(data, dtype=float)[tuple(idx)]


def significance_gap(nodes: list[SubbandNode]) -> float:
    """Difference between the two largest fractal signatures among siblings."""
    sig = sorted((n.fractal_signature for n in nodes), reverse=True)
    return abs(sig[0] - sig[1])


class FractalController:
    """Scores nodes by mean FD and stops once the sibling gap stops growing."""

    def __init__(self, mask: np.ndarray, jmax: int, termination: bool = True):
        self.mask = mask
        self.plan = build_scale_plan(jmax)
        self.termination = termination
        self.maps: dict[str, FractalMap] = {}
        self.gaps: list[float] = []

    def signature(self, node: SubbandNode) -> float:
        fmap = estimate_fractal_map(node.volume, self.mask, plan=self.plan)
        self.maps[node.path] = fmap
        return subband_feature(fmap, self.mask)

    def should_expand(self, levels) -> bool:
        if len(levels) <= 2:
            return True
        self.gaps = [significance_gap(lv) for lv in levels[1:]]
        if self.termination and self.gaps[-1] <= self.gaps[-2]:
            return False
        return True


@dataclass
class BranchResult:
    source: str
    tree: SubbandTree
    controller: FractalController


@dataclass
class MnfResult:
    descriptor: MnfDescriptor
    refinement: Refinement
    params: NakagamiVolumes
    branches: dict[str, BranchResult]


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except PipelineError:
        raise
    except Exception as exc:  # noqa: BLE001 - re-raised with the stage tag
        raise PipelineError(name, exc) from exc


def run_mnf_detailed(vol: EnvelopeVolume, mask: RoiMask, cfg: MnfConfig = MnfConfig(), case_id: str | None = None) -> MnfResult:
    check_pair(vol, mask)
    if cfg.refine:
        ref = _stage("refine", refine_volume, vol, mask, cfg.min_slices, cfg.refine_override)
        if ref.overridden:
            log.warning("slice refinement kept all %d slices of %s", len(ref.kept), vol.name or "volume")
    else:
        n = vol.dims[2]
        ref = Refinement(vol, mask, tuple(range(n)), (), False)
    params = _stage("fit", fit_parametric_volumes, ref.volume, ref.mask, cfg.lattice)
    inside = np.asarray(ref.mask.data, bool)
    filters = daubechies8()
    branches = {}
    features = []
    levels = {}
    for source, pmap in zip(SOURCES, (params.mu_map, params.omega_map)):
        root = pmap.with_data(fill_outside(pmap.data, inside))
        ctrl = FractalController(inside, cfg.jmax, cfg.termination)
        tree = _stage(f"decompose[{source}]", expand_tree, root, filters, ctrl, cfg.max_level)
        branches[source] = BranchResult(source, tree, ctrl)
        levels[source] = tree.depth
        for node in tree.nodes:
            if node.level == 0:
                continue
            features.append(Feature(source, node.level, node.path, float(node.fractal_signature)))
    features.sort(key=lambda f: (SOURCES.index(f.source), f.level, f.path))
    desc = MnfDescriptor(case_id if case_id is not None else vol.name, features, levels, ref.overridden)
    return MnfResult(desc, ref, params, branches)


def run_mnf(vol: EnvelopeVolume, mask: RoiMask, cfg: MnfConfig = MnfConfig(), case_id: str | None = None) -> MnfDescriptor:
    """Refine, fit, decompose both parametric maps and collect sub-band mean FDs."""
    return run_mnf_detailed(vol, mask, cfg, case_id).descriptor


def export_maps(vol: EnvelopeVolume, mask: RoiMask, cfg: MnfConfig, outdir, result: MnfResult | None = None) -> list[Path]:
    """Write the parametric maps, level-1 FD maps and scattering band volumes.

    Band codes: regime 0..4 (pre-Rician .. post-Rayleigh), energy 0..2
    (low, mid, high); voxels outside the mask hold 0 in every map.
    """
    result = result or run_mnf_detailed(vol, mask, cfg)
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    inside = np.asarray(result.refinement.mask.data, bool)
    written = []
    mu = result.params.mu_map
    omega = result.params.omega_map
    written.append(save_volume(mu.with_data(mu.data, name="mu"), out / "mu")[0])
    written.append(save_volume(omega.with_data(omega.data, name="omega"), out / "omega")[0])
    for source, branch in result.branches.items():
        for node in branch.tree.level(1):
            fmap = branch.controller.maps[node.path]
            name = f"fd_{source}_{node.path}"
            written.append(save_volume(fmap.volume.with_data(fmap.fd, name=name), out / name)[0])
    regime = np.where(inside, regime_codes(np.where(inside, mu.data, 1.0)), 0)
    energy = np.where(inside, energy_codes(omega.data), 0)
    written.append(save_volume(ScalarVolume(regime, mu.spacing, kind="regime_band", name="regime_band"), out / "regime_band")[0])
    written.append(save_volume(ScalarVolume(energy, mu.spacing, kind="energy_band", name="energy_band"), out / "energy_band")[0])
    return written
