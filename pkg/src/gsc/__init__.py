"""Feature-space OOD detection by gradient short-circuit.

Compute the predicted-class logit gradient at a cut-point feature vector,
suppress the most gradient-sensitive coordinates, estimate the modified
logits with a first-order update instead of a second forward pass, and
threshold an energy/MSP score.
"""

from .container import LoadedDataset, load_dataset, save_dataset, save_synth_dataset
from .head import FlopReport, HeadModel, LayerSpec, LogitBundle, evaluate, flop_report, forward, grad_logit, jacobian, jvp
from .approx import (
    ApproxResult,
    AuditTable,
    SmoothnessEstimate,
    approx_logits,
    audit_gap,
    compare,
    estimate_smoothness,
    exact_logits,
    smoothness_over_points,
)
from .metrics import (
    ConcentrationProfile,
    HistogramTable,
    ScoredSet,
    auroc,
    concentration_profile,
    export_histogram,
    fpr_at_tpr,
    topk_ratio,
)
from .pipeline import EvalReport, RunConfig, dataset_from_synth, load_report, run_pipeline
from .scoring import FisherDiagonal, Threshold, calibrate, decide, estimate_fisher_diag, score
from .shortcircuit import (
    ApplyResult,
    MaskBudget,
    MaskSet,
    ModificationRule,
    PlanResult,
    SelectionStrategy,
    ShortCircuitPlan,
    apply,
    default_plan,
    logit_drop_estimate,
    run_plan,
    select,
)
from .synth import SynthConfig, SynthDataset, TheoryReport, generate, generate_tanh, tanh_preset_config, theory_check

__version__ = "0.1.0"
