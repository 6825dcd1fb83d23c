"""Physics-informed neural networks for extracting equivalent-circuit parameters
from dielectric relaxation currents."""

from .ecm import (ArrheniusLaw, EcmSpec, RcBranch, TempEcmSpec, branch_currents,
                  check_conditioning, total_current)
from .synthdata import Dataset, generate_static, generate_temperature, normalize
from .nn import StaticPinn, TemperaturePinn
from .training import LossWeights, TrainConfig, train
from .baseline import LmConfig, fit_arrhenius, fit_static

__all__ = [
    "ArrheniusLaw", "EcmSpec", "RcBranch", "TempEcmSpec", "branch_currents",
    "check_conditioning", "total_current", "Dataset", "generate_static",
    "generate_temperature", "normalize", "StaticPinn", "TemperaturePinn",
    "LossWeights", "TrainConfig", "train", "LmConfig", "fit_arrhenius", "fit_static",
]
