"""Naming-game laboratory: stimulus generation, the two-agent sign model, the
game engine, acceptance-behavior analysis, and live two-participant sessions."""

from .stimulus import (
    ColorPoint,
    GaussianComponentSpec,
    StimulusSet,
    builtin_dataset_specs,
    dataset_specs,
    luv_to_srgb,
    render_patch,
    sample_stimuli,
)
from .model import (
    AgentState,
    Hyperparams,
    default_hyperparams,
    generate,
    gibbs_fit,
    posterior_gauss,
    posterior_theta,
    sample_category,
    sign_posterior,
)
from .engine import (
    AffineMH,
    Binary,
    Constant,
    GameConfig,
    MH,
    Numerator,
    Subtraction,
    TrialRecord,
    initial_agents,
    mh_acceptance,
    model_acceptance,
    run_naming_game,
    scripted_participant,
    sign_agreement,
    speaker_propose,
)
from .analysis import (
    DecisionRecord,
    FitResult,
    Test1Report,
    Test2Report,
    empirical_cdf_value,
    fit_affine_bernoulli,
    infer_decisions,
    mann_whitney_u,
    pairwise_model_tests,
    precision,
    randomization_test,
    records_from_trials,
    simulate_model_decisions,
)

__version__ = "0.1.0"
