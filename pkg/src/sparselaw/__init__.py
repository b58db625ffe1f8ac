"""Scaling laws for weight-sparse Transformers: evaluation, fitting, cost analysis and pruning masks."""

from .cost import (
    CostModel,
    chinchilla_optimal,
    cmul,
    data_for_compute,
    optimal_sparsity_closed,
    optimal_sparsity_numeric,
    sparsity_contour,
    sparsity_threshold_multiple,
    training_flops,
)
from .errors import SparseLawError, UnreachableLossError
from .fitting import FitConfig, FitResult, fit_full, fit_sparsity_only, huber
from .law import (
    PRESETS,
    T5_C4,
    T5_C4_NM,
    VIT_JFT,
    RunRecord,
    ScalingLawCoefficients,
    SweepDataset,
    eval_law,
    gain,
    invert_for_data,
    invert_for_size,
)
from .pruning import (
    MaskedTensor,
    NmPattern,
    PruneSchedule,
    apply_mask,
    gmp_mask,
    nm_gradual_mask,
    schedule_sparsity,
    sparsity_aware_rms,
    toy_train,
)
from .simulator import SweepGrid, simulate_sweep, t5_grid, vit_grid

__version__ = "0.1.0"

__all__ = [
    "CostModel", "chinchilla_optimal", "cmul", "data_for_compute", "optimal_sparsity_closed",
    "optimal_sparsity_numeric", "sparsity_contour", "sparsity_threshold_multiple", "training_flops",
    "SparseLawError", "UnreachableLossError",
    "FitConfig", "FitResult", "fit_full", "fit_sparsity_only", "huber",
    "PRESETS", "T5_C4", "T5_C4_NM", "VIT_JFT", "RunRecord", "ScalingLawCoefficients", "SweepDataset",
    "eval_law", "gain", "invert_for_data", "invert_for_size",
    "MaskedTensor", "NmPattern", "PruneSchedule", "apply_mask", "gmp_mask", "nm_gradual_mask",
    "schedule_sparsity", "sparsity_aware_rms", "toy_train",
    "SweepGrid", "simulate_sweep", "t5_grid", "vit_grid",
]
