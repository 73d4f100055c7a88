"""Super-resolution by searching a generator's latent space for images that downscale correctly."""

from .generator import GeneratorSpec, LatentState, init_random_generator, initial_state, synthesize
from .objective import ObjectiveConfig, total_objective
from .resample import LinearResampler, build_downscaler
from .search import OptimConfig, RunResult, multi_restart, run_pulse

__all__ = [
    "GeneratorSpec", "LatentState", "LinearResampler", "ObjectiveConfig", "OptimConfig",
    "RunResult", "build_downscaler", "init_random_generator", "initial_state",
    "multi_restart", "run_pulse", "synthesize", "total_objective",
]
__version__ = "0.1.0"
