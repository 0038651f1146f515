"""Compressibility, operator-norm bounds, attacks and pruning for dense ReLU nets.

The package follows one pipeline: measure how concentrated a weight matrix
is (top-k residuals, spread, PQ index), turn that structure into certified
operator-norm and Lipschitz upper bounds, probe the same structure
empirically with gradient attacks, and exploit it for pruning.
"""

from . import errors
from .attacks import AttackConfig, AttackOutcome, UaeResult, evaluate_robustness, fgsm, pgd, sv_alignment, uae_fgsm
from .bounds import (
    AlignmentFactor,
    BoundReport,
    KConfig,
    LayerBound,
    SearchConfig,
    adversarial_risk_bound,
    alignment_2,
    alignment_inf,
    bound_opnorm_2,
    bound_opnorm_inf,
    lipschitz_bound_2,
    lipschitz_bound_inf,
    optimal_parsing_set,
    remainder_2,
    remainder_inf,
)
from .compressibility import (
    CompressibilityProfile,
    StructureVectors,
    compressed_topk,
    default_k,
    pq_index,
    profile,
    residual_ratio,
    spread,
    strict_norm_identity_check,
    structure_vectors,
)
from .datasets import Dataset, DatasetSpec, generate_synthetic, load_dataset, parse_idx, save_dataset
from .linalg import SvdFactors, frobenius_norm, op_norm_2, op_norm_2_power, op_norm_inf, svd
from .modelio import config_digest, dump_json, dumps_json, load_model, report_to_csv, save_model
from .network import (
    AdversarialTraining,
    EpochStats,
    Grads,
    Network,
    RegularizerSpec,
    TrainConfig,
    accuracy,
    adamw_step,
    example_losses,
    forward,
    frobenius_project,
    init_adamw,
    init_network,
    loss_and_grads,
    predictions,
    regularizer_value_grad,
    train,
)
from .pruning import (
    PruningPlan,
    RetentionPoint,
    apply_plan,
    eps_targeted_global_prune,
    layerwise_prune,
    prune_rows,
    prune_spectral,
    retention_curve,
    retention_eval,
)

__version__ = "0.1.0"
