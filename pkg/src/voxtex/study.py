"""Synthetic two-class texture study: phantoms -> MNF descriptors -> nBC."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .classify import cross_validate, descriptor_matrix
from .mnf import MnfConfig, MnfDescriptor, run_mnf
from .nakagami import LatticeConfig
from .phantom import LesionSpec, PhantomSpec, generate_phantom

log = logging.getLogger(__name__)

CLASS_LABELS = ("non_progressive", "progressive")


def _as_range(v, name) -> tuple[float, float]:
    lo, hi = (float(v), float(v)) if np.isscalar(v) else (float(v[0]), float(v[1]))
    if not (0 < lo <= hi):
        raise ValueError(f"{name} range must satisfy 0 < lo <= hi, got {v}")
    return lo, hi


@dataclass(frozen=True)
class ClassSpec:
    """Phantom parameters of one class; each is a value or a ``[lo, hi]`` range.

    The shape ``mu`` holds throughout the volume, lesions included; lesions
    only change the local energy ``omega`` by ``+-contrast_db``.
    """

    mu: tuple[float, float] = (1.0, 1.0)
    omega: tuple[float, float] = (1.0, 1.0)
    contrast_db: float = 3.0

    def __post_init__(self):
        object.__setattr__(self, "mu", _as_range(self.mu, "mu"))
        object.__setattr__(self, "omega", _as_range(self.omega, "omega"))

    @classmethod
    def from_dict(cls, d: dict) -> "ClassSpec":
        return cls(**d)


@dataclass(frozen=True)
class StudySpec:
    n_per_class: int = 10
    class_a: ClassSpec = field(default_factory=lambda: ClassSpec(mu=0.6))
    class_b: ClassSpec = field(default_factory=lambda: ClassSpec(mu=3.0))
    scheme: str = "loo"
    runs: int = 1
    seed: int = 0
    dims: tuple[int, int, int] = (32, 32, 24)
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    roi_radii: tuple[float, float, float] | None = (14.0, 14.0, 11.0)
    lesion_diameter: float = 6.0
    max_lesions: int = 80
    side: int = 5
    jmax: int = 5
    max_level: int = 1
    termination: bool = True

    def __post_init__(self):
        if self.n_per_class < 4:
            raise ValueError(f"n_per_class must be >= 4, got {self.n_per_class}")
        for name in ("class_a", "class_b"):
            v = getattr(self, name)
            if isinstance(v, dict):
                object.__setattr__(self, name, ClassSpec.from_dict(v))
        object.__setattr__(self, "dims", tuple(int(n) for n in self.dims))
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))
        if self.roi_radii is not None:
            object.__setattr__(self, "roi_radii", tuple(float(r) for r in self.roi_radii))

    @classmethod
    def from_dict(cls, d: dict) -> "StudySpec":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown study keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    def mnf_config(self) -> MnfConfig:
        return MnfConfig(
            lattice=LatticeConfig(self.side), jmax=self.jmax, max_level=self.max_level, termination=self.termination
        )


class StudyCaseError(RuntimeError):
    def __init__(self, case_id: str, cause: Exception):
        super().__init__(f"case {case_id}: {cause}")
        self.case_id = case_id
        self.cause = cause


def random_lesions(rng: np.random.Generator, dims, spacing, diameter: float, n: int, mu: float,
                   contrast_db: float, max_tries: int = 20000) -> list[LesionSpec]:
    """Non-overlapping spheres at uniform centres, each brighter or darker by ``contrast_db``.

    Centres closer than ``diameter + 1`` mm to an accepted one are rejected;
    placement stops after ``n`` lesions or ``max_tries`` draws.
    """
    hi = (np.asarray(dims) - 1) * np.asarray(spacing)
    centers = np.empty((0, 3))
    lesions = []
    for _ in range(max_tries):
        if len(lesions) == n:
            break
        c = rng.uniform(0.0, hi)
        if len(centers) and np.min(np.linalg.norm(centers - c, axis=1)) < diameter + 1:
            continue
        centers = np.vstack([centers, c])
        sign = 1.0 if rng.random() < 0.5 else -1.0
        lesions.append(LesionSpec(tuple(float(x) for x in c), diameter, sign * contrast_db, mu))
    return lesions


def case_phantom(spec: StudySpec, cls: ClassSpec, case_id: str, seed: np.random.SeedSequence) -> PhantomSpec:
    rng = np.random.default_rng(seed)
    mu = float(rng.uniform(*cls.mu))
    omega = float(rng.uniform(*cls.omega))
    lesions = random_lesions(rng, spec.dims, spec.spacing, spec.lesion_diameter, spec.max_lesions, mu, cls.contrast_db)
    return PhantomSpec(
        dims=spec.dims,
        spacing=spec.spacing,
        background=(mu, omega),
        lesions=lesions,
        seed=int(rng.integers(2**63)),
        roi_radii=spec.roi_radii,
        name=case_id,
    )


def study_cases(spec: StudySpec) -> list[tuple[str, str, PhantomSpec]]:
    """``(case_id, label, phantom)`` per case; every case has its own child seed."""
    children = np.random.SeedSequence(spec.seed).spawn(2 * spec.n_per_class)
    cases = []
    for c, (label, cls) in enumerate(zip(CLASS_LABELS, (spec.class_a, spec.class_b))):
        for i in range(spec.n_per_class):
            case_id = f"{label}_{i:03d}"
            cases.append((case_id, label, case_phantom(spec, cls, case_id, children[c * spec.n_per_class + i])))
    return cases


@dataclass
class StudyResult:
    spec: StudySpec
    descriptors: list[MnfDescriptor]
    labels: list[str]
    report: dict

    def to_json(self) -> str:
        body = {
            "spec": self.spec.to_dict(),
            "cases": [
                {"case_id": d.case_id, "label": lab, "features": d.to_json()["features"]}
                for d, lab in zip(self.descriptors, self.labels)
            ],
            "classification": self.report,
        }
        return json.dumps(body, indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        _, keys = descriptor_matrix(self.descriptors)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["case_id", "label"] + [f"{s}:{lv}:{o}" for s, lv, o in keys])
        X, _ = descriptor_matrix(self.descriptors)
        for d, lab, row in zip(self.descriptors, self.labels, X):
            writer.writerow([d.case_id, lab] + [repr(float(x)) for x in row])
        return buf.getvalue()

    def write(self, outdir) -> tuple[Path, Path]:
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        jpath, cpath = out / "study.json", out / "study.csv"
        jpath.write_text(self.to_json())
        cpath.write_text(self.to_csv())
        return jpath, cpath


def extract_descriptors(spec: StudySpec) -> tuple[list[MnfDescriptor], list[str]]:
    cfg = spec.mnf_config()
    descriptors, labels = [], []
    for case_id, label, phantom in study_cases(spec):
        try:
            vol, mask, _ = generate_phantom(phantom)
            descriptors.append(run_mnf(vol, mask, cfg, case_id=case_id))
        except Exception as exc:  # noqa: BLE001 - tagged with the case id
            raise StudyCaseError(case_id, exc) from exc
        labels.append(label)
        log.info("case %s done", case_id)
    order = np.argsort(np.array([d.case_id for d in descriptors]), kind="stable")
    return [descriptors[i] for i in order], [labels[i] for i in order]


def classify_descriptors(descriptors, labels, scheme="loo", runs=1, seed=0) -> dict:
    X, keys = descriptor_matrix(descriptors)
    cv = cross_validate(X, labels, scheme=scheme, runs=runs, seed=seed, positive="progressive")
    report = cv.to_dict()
    report["features"] = [f"{s}:{lv}:{o}" for s, lv, o in keys]
    return report


def run_study(spec: StudySpec) -> StudyResult:
    """Generate both phantom classes, extract MNF descriptors and cross-validate.

    Results are sorted by ``case_id`` and fully determined by ``spec.seed``.
    """
    descriptors, labels = extract_descriptors(spec)
    report = classify_descriptors(descriptors, labels, spec.scheme, spec.runs, spec.seed)
    return StudyResult(spec, descriptors, labels, report)
