"""caviarlab: CAViaR quantile models, estimation and inference.

Modules: model (families and paths), dgp (all-quantile simulators),
stability (recursion classification), estimate (multistart fitting),
covmat (sandwich covariances), infer (Wald and DQ tests), mcstudy
(Monte Carlo size studies), cli (command-line entry point).
"""

from .covmat import (ArbConfig, SandwichEstimate, arb_sandwich, fd_sandwich,
                     kernel_sandwich)
from .dgp import DgpSpec, SimOutput, catalog, simulate
from .estimate import EstimateConfig, FitResult, fit
from .infer import DqResult, WaldResult, dq_test, wald
from .mcstudy import McConfig, McReport, run_size_study, run_table_suite
from .model import ModelSpec, QuantilePath, check_loss
from .stability import StabilityVerdict, classify, classify_dgp

__version__ = "0.1.0"

__all__ = [
    "ArbConfig", "SandwichEstimate", "arb_sandwich", "fd_sandwich",
    "kernel_sandwich", "DgpSpec", "SimOutput", "catalog", "simulate",
    "EstimateConfig", "FitResult", "fit", "DqResult", "WaldResult",
    "dq_test", "wald", "McConfig", "McReport", "run_size_study",
    "run_table_suite", "ModelSpec", "QuantilePath", "check_loss",
    "StabilityVerdict", "classify", "classify_dgp", "__version__",
]
