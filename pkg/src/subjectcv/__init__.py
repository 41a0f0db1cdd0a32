"""Subject-aware cross-validation planning, leakage auditing, and scoring."""

from .analysis import (
    Advice,
    BiasReport,
    ComparisonReport,
    DuelReport,
    RegressionFit,
    advise,
    compare_cv,
    estimate_bias,
    paired_nested_values,
    regress_nested,
    subject_duel,
)
from .audit import AuditReport, Finding, FindingKind, Severity, audit_plan, audit_predictions
from .errors import SubjectCVError
from .manifest import (
    LabelSpace,
    Manifest,
    RecordingEntry,
    SubjectEntry,
    WindowRef,
    enumerate_windows,
    fingerprint,
    load_manifest,
    read_manifest,
    window_count,
    write_manifest,
)
from .metrics import (
    ConfusionMatrix,
    MetricReport,
    MetricRow,
    PredictionLog,
    PredictionRow,
    SummaryStats,
    balanced_accuracy,
    cohen_kappa,
    confusion,
    macro_f1,
    pct_change,
    score_report,
    summarize,
    weighted_f1,
)
from .partition import (
    FoldPlan,
    PlanParams,
    Scheme,
    Split,
    align_outer,
    count_instances,
    load_plan,
    plan,
    read_plan,
    write_plan,
)
from .rng import RNG_ALGORITHM_ID, SeededRng, derive_seed
from .synthlab import (
    LearnerState,
    SynthConfig,
    SynthDataset,
    TrainHyper,
    dc_remove,
    extract_windows,
    generate,
    run_bias_study,
    run_study,
    train_learner,
    zscore,
)

__version__ = "0.1.0"
