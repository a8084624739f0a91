//! Tree-partitioned post-hoc calibration for binary classifiers.
//!
//! The crate fits an axis-aligned decision tree over the feature space,
//! calibrates the base model's logit scores separately inside every leaf
//! (Platt scaling, isotonic regression, or histogram binning), and scores
//! the result with an exact metric suite: AUC with the half-tie convention,
//! ROC curves over (T, q) thresholds, exact PR-AUC integration, generalized
//! log-loss, and expected calibration error. Forest-averaged and two-stage
//! boosted variants chain or average the per-leaf transforms.
//!
//! A brute-force oracle over weak orderings of a discrete score support
//! backs the optimality theory the pipeline relies on: the per-key
//! posterior transform maximizes partition-calibrated AUC, its ROC curve
//! contains every other transform's curve, it maximizes PR-AUC and
//! minimizes log-loss, and refining a partition never lowers the optimally
//! calibrated AUC. [`run_verify`] runs those checks over seeded random
//! instances and reports counterexamples if any appear.

pub mod calibrate;
pub mod data;
pub mod error;
pub mod metrics;
pub mod numeric;
pub mod oracle;
pub(crate) mod par;
pub mod pipeline;
pub mod synth;
pub mod tree;

pub use calibrate::{fit_histogram, fit_isotonic, fit_platt, TableEntry, Transform};
pub use data::{
    empirical_distribution, load_csv, single_partition, split_dataset, write_csv, Atom, CsvSchema,
    Dataset, DiscreteDistribution, LabeledExample, PartitionId, Role,
};
pub use error::{HetcalError, Result};
pub use metrics::{
    auc, calibrated_auc, empirical_auc, expected_calibration_error, log_loss,
    partition_calibrated_auc, pr_auc, roc_curve, roc_point, RocCurve, RocThreshold,
};
pub use oracle::{
    brute_force_max_auc, check_ordering_equivalence, check_refinement_monotonicity,
    optimal_transform, random_instance, random_transform, run_verify, BruteForceResult,
    PropertyResult, VerifyConfig, VerifyReport,
};
pub use pipeline::{
    evaluate, fit, fit_boosted, fit_boosted_with_trees, metrics_for_predictions, predict,
    CalibrationStage, CalibratorKind, EvalReport, HetCalConfig, HeterogeneousCalibrator,
    MetricsReport, MODEL_VERSION,
};
pub use synth::{
    auc_weight_sweep, gen_heterogeneous, gen_overconfident, true_auc_heterogeneous, ToyModelSpec,
    FEATURE_ACCURACY, SIGMA_BASE,
};
pub use tree::{
    assign, fit_forest, fit_tree, gaussian_calibrated_auc, gaussian_platt_params, gini_gain,
    ClassCounts, LeafStats, PartitionTree, PlattSolve, SplitCriterion, TreeConfig,
};
