"""Direct loss minimization of average precision for small ReLU scoring networks."""

from .exceptions import (
    CheckpointError,
    InvalidConfigError,
    InvalidInputError,
    SizeError,
    SkipStep,
    TrainingDiverged,
)
from .inference import (
    DPState,
    LossAugConfig,
    Sign,
    augmented_objective,
    brute_force_all_rankings,
    brute_force_interleavings,
    dp_loss_augmented,
    precompute_BG,
    predicted_interleaving,
    solve_dp,
    standard_inference,
)
from .metrics import average_precision, zero_one_error
from .neural import (
    ForwardCache,
    MlpParams,
    backward,
    forward,
    forward_batch,
    grad_F,
    load_checkpoint,
    mlp_init,
    save_checkpoint,
)
from .ranking import (
    NEG,
    POS,
    Interleaving,
    RankingInstance,
    ap_loss,
    prec_at,
    rank_from_scores,
    score_F,
    zero_one_loss,
)
from .synthdata import Dataset, flip_labels, gen_norm_threshold, gen_teacher, split
from .trainers import Method, RunLog, TaskLoss, TrainConfig, run_training

__version__ = "0.1.0"
