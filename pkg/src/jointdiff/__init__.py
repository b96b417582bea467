"""Joint model-free/model-based diffusion sampling toolkit."""

from .baselines import (
    BaselineResult,
    conditional_generate,
    gibbs_sample,
    gradient_guided_sample,
    projection_guided_sample,
    sequential_sample,
)
from .gmm import (
    CleanEstimateConfig,
    GaussianMixtureScoreModel,
    estimate_clean,
    fit_kde,
    gmm_noisy_logpdf,
    gmm_noisy_score,
    load_model,
    reverse_chain,
    save_model,
)
from .potentials import (
    InteractionPotential,
    ModelBasedPrior,
    PotentialEvaluationError,
    evaluate_potential,
    gaussian_prior,
    postprocess_optimize,
    uniform_box_prior,
)
from .sampler import (
    JM2DConfig,
    JointSample,
    SamplerDiagnostics,
    SamplerTrace,
    effective_sample_size,
    jm2d_sample,
    joint_score,
    sample_mc,
)
from .schedules import (
    ALPHA_FLOOR,
    NoiseSchedule,
    StochasticityPolicy,
    forward_perturb,
    make_schedule,
    reverse_step,
    tweedie_score,
)

__all__ = [
    "ALPHA_FLOOR",
    "BaselineResult",
    "CleanEstimateConfig",
    "GaussianMixtureScoreModel",
    "InteractionPotential",
    "JM2DConfig",
    "JointSample",
    "ModelBasedPrior",
    "NoiseSchedule",
    "PotentialEvaluationError",
    "SamplerDiagnostics",
    "SamplerTrace",
    "StochasticityPolicy",
    "conditional_generate",
    "effective_sample_size",
    "estimate_clean",
    "evaluate_potential",
    "fit_kde",
    "forward_perturb",
    "gaussian_prior",
    "gibbs_sample",
    "gmm_noisy_logpdf",
    "gmm_noisy_score",
    "gradient_guided_sample",
    "jm2d_sample",
    "joint_score",
    "load_model",
    "make_schedule",
    "postprocess_optimize",
    "projection_guided_sample",
    "reverse_chain",
    "reverse_step",
    "sample_mc",
    "save_model",
    "sequential_sample",
    "uniform_box_prior",
]

__version__ = "0.1.0"
