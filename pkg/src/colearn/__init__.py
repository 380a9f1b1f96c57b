"""Deterministic co-learning engine for source-free domain adaptation over
pre-extracted embedding banks."""

__version__ = "0.1.0"

from .adaptation_model import (
    AdaptationModel,
    SgdSchedule,
    backward_and_step,
    colearning_loss,
    forward,
    load_model,
    predict,
    save_model,
    temperature_loss,
)
from .classifier_branch import (
    Centroids,
    GuidanceMode,
    cosine_logits,
    fused_centroids,
    fused_logits,
    resolve_strong_zs_temperature,
    softmax_with_temperature,
    weighted_centroids,
    zero_shot_centroids,
    zero_shot_probs,
)
from .engine import (
    EngineConfig,
    EpisodeReport,
    GuidanceSelection,
    build_branch_pseudolabels,
    choose_guidance,
    gamma_for_ratio,
    recommend_gamma,
    run_colearn,
    run_colearn_plus,
    select_guidance,
)
from .errors import ColearnError
from .feature_bank import (
    FeatureBank,
    bank_equal,
    l2_normalize_rows,
    load_bank,
    rows_by_class,
    save_bank,
)
from .metrics import EvalReport, evaluate, h_score
from .pseudolabeler import (
    Provenance,
    PseudolabelSet,
    SchemeKind,
    build_pseudolabels,
    pseudolabel_stats,
)
from .synthetic import Scenario, ShiftSpec, generate, train_source
