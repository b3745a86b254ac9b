from .metrics import Averaged, ConfusionMatrix, EvalMetrics, auc_roc, confusion, mcc, metrics
from .report import HEADLINE, Cell, Report, emit_report, load_report, plot_rows, table_rows
from .runners import (
    ABLATION_CELLS,
    AblationSpec,
    cell_seed,
    fit_and_score,
    kfold_split,
    run_ablation,
    run_threshold_sweep,
    run_timecv,
    summarize,
)

__all__ = [
    "ABLATION_CELLS",
    "HEADLINE",
    "AblationSpec",
    "Averaged",
    "Cell",
    "ConfusionMatrix",
    "EvalMetrics",
    "Report",
    "auc_roc",
    "cell_seed",
    "confusion",
    "emit_report",
    "fit_and_score",
    "kfold_split",
    "load_report",
    "mcc",
    "metrics",
    "plot_rows",
    "run_ablation",
    "run_threshold_sweep",
    "run_timecv",
    "summarize",
    "table_rows",
]
