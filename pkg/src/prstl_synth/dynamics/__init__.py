from .filters import FilterError, KalmanIntermediates, kf_step, mlo_step, open_loop_cov, simulate_step
from .noise import NoiseEvalError, NoiseExpr, NoiseSyntaxError, eval_noise
from .system import Mode, ModelError, SwitchedSystem

__all__ = [
    "FilterError", "KalmanIntermediates", "kf_step", "mlo_step", "open_loop_cov", "simulate_step",
    "NoiseEvalError", "NoiseExpr", "NoiseSyntaxError", "eval_noise",
    "Mode", "ModelError", "SwitchedSystem",
]
