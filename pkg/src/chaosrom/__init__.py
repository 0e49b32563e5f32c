"""Reduced order models of chaotic dynamics on Lorenz '96.

DMD, quadratic-manifold, plain autoencoder and sphere-constrained autoencoder
(SyCo-AE) ROMs, an explicit trapezoidal solver with manifold projection, and a
KDE-based KL forecast score.
"""
__version__ = "0.1.0"

from .dmd import DmdModel, dmd_forecast, fit_dmd, fit_dmd_trajectories
from .dynamics import (DatasetConfig, Trajectory, TruthModel, generate_dataset,
                       generate_forecast_ensemble, l96_rhs, load_trajectories)
from .errors import (ChaosRomError, ConfigError, DegenerateDimensionError,
                     DegenerateEigenvalueError, DegenerateProjectionError, DimensionError,
                     DivergenceError, InvalidModelError, ModelFormatError, NonConvergenceError,
                     RankDeficiencyError, SolverError)
from .evaluate import (KdeModel, KlReport, flow_export, kde_fit, kde_log_density,
                       kl_approx, kl_experiment)
from .neural import (NeuralRom, TrainConfig, advance, init_neural_rom, rollout_loss,
                     rom_forecast, sphere_constraint, sphere_project, train)
from .nn import (AdamState, CyclicLrSchedule, MlpParams, adam_step, cyclic_lr, gelu,
                 init_mlp, mlp_backward, mlp_forward)
from .ode import SolverConfig, StepResult, integrate_adaptive, integrate_fixed, trap_step
from .persistence import load_model, save_model
from .quadratic import (QuadraticModel, fd_derivative, fit_pod, fit_quadratic_decoder,
                        fit_quadratic_dynamics, fit_quadratic_model, quad_forecast)

__all__ = [
    "DmdModel", "dmd_forecast", "fit_dmd", "fit_dmd_trajectories", "DatasetConfig",
    "Trajectory", "TruthModel", "generate_dataset", "generate_forecast_ensemble", "l96_rhs",
    "load_trajectories", "ChaosRomError", "ConfigError", "DegenerateDimensionError",
    "DegenerateEigenvalueError", "DegenerateProjectionError", "DimensionError",
    "DivergenceError", "InvalidModelError", "ModelFormatError", "NonConvergenceError",
    "RankDeficiencyError", "SolverError", "KdeModel", "KlReport", "flow_export", "kde_fit",
    "kde_log_density", "kl_approx", "kl_experiment", "NeuralRom", "TrainConfig", "advance",
    "init_neural_rom", "rollout_loss", "rom_forecast", "sphere_constraint", "sphere_project",
    "train", "AdamState", "CyclicLrSchedule", "MlpParams", "adam_step", "cyclic_lr", "gelu",
    "init_mlp", "mlp_backward", "mlp_forward", "SolverConfig", "StepResult",
    "integrate_adaptive", "integrate_fixed", "trap_step", "load_model", "save_model",
    "QuadraticModel", "fd_derivative", "fit_pod", "fit_quadratic_decoder",
    "fit_quadratic_dynamics", "fit_quadratic_model", "quad_forecast",
]
