"""Privacy amplification by iteration for noisy projected SGD.

Accountants for contractive noisy iterations, the noisy SGD variants they
certify, Gaussian smoothing for non-smooth losses, a 1-D density oracle
that checks the bounds numerically, and desk-scale experiments.
"""

from .accountant import (
    SgdPrivacyConfig,
    ShiftSchedule,
    multiepoch_pnmsgd_rdp,
    multitask_dp,
    pai_bound,
    per_index_pnsgd_rdp,
    skip_pnsgd_rdp,
    stop_pnsgd_certified_rdp,
    stop_pnsgd_rdp,
    tightest_dp,
)
from .divergence import DpParams, GaussianNoise, RenyiBound, compose_rdp, gaussian_renyi, rdp_to_dp
from .experiments import EXPERIMENTS, ExperimentConfig, ResultRow
from .optimizer import SgdRunConfig, check_contractivity, pnmsgd, pnsgd, skip_pnsgd, stop_pnsgd
from .smoothing import SmoothedLoss

__version__ = "0.1.0"
