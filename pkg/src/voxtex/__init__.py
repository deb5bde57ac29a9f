"""Volumetric ultrasound texture analysis with multifractal Nakagami features."""

__version__ = "0.1.0"

from .mnf import MnfConfig, MnfDescriptor, run_mnf  # noqa: E402
from .nakagami import LatticeConfig, NakagamiParams, estimate_mle, fit_parametric_volumes  # noqa: E402
from .volume_io import EnvelopeVolume, RoiMask, ScalarVolume, load_volume, save_volume  # noqa: E402

__all__ = [
    "EnvelopeVolume",
    "LatticeConfig",
    "MnfConfig",
    "MnfDescriptor",
    "NakagamiParams",
    "RoiMask",
    "ScalarVolume",
    "estimate_mle",
    "fit_parametric_volumes",
    "load_volume",
    "run_mnf",
    "save_volume",
]
