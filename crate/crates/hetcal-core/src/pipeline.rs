//! End-to-end heterogeneous calibration: fit a partition tree (or forest)
//! on training data, fit one calibrator per leaf on the calibration split
//! with a global fallback, and predict by routing each example to its leaf
//! and transforming its logit score. A two-stage boosted variant chains a
//! second tree and calibrator layer on the first stage's logit outputs, so
//! two Platt stages compose to sigma(a2 (a1 s + b1) + b2).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::calibrate::{fit_histogram, fit_isotonic, fit_platt, Transform, DEFAULT_RIDGE};
use crate::data::{empirical_distribution, single_partition, Dataset, PartitionId};
use crate::error::{HetcalError, Result};
use crate::metrics::{empirical_auc_of, empirical_ece, empirical_log_loss, pr_auc, roc_curve};
use crate::numeric::{logit, sigmoid};
use crate::par::par_map;
use crate::tree::{fit_forest, fit_tree, PartitionTree, TreeConfig};

/// Current model file version.
pub const MODEL_VERSION: u32 = 1;

/// Number of equal-width probability bins in reported calibration error.
const ECE_BINS: usize = 15;

/// Which calibrator family is fitted per leaf.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CalibratorKind {
    Platt { ridge: f64 },
    Isotonic,
    Histogram { bins: usize },
}

impl Default for CalibratorKind {
    fn default() -> Self {
        CalibratorKind::Platt {
            ridge: DEFAULT_RIDGE,
        }
    }
}

/// Pipeline configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HetCalConfig {
    pub tree: TreeConfig,
    pub calibrator: CalibratorKind,
    /// Leaves holding fewer calibration rows than this use the global
    /// fallback calibrator.
    pub min_calib_samples: usize,
    /// When set, fit this many bootstrap trees and average the calibrated
    /// probabilities across them.
    pub forest_size: Option<usize>,
    /// When set to 2, chain a second partition/calibration stage on the
    /// first stage's logit outputs.
    pub boosted_stages: Option<u8>,
    /// Seed for bootstrap resampling (forest trees and the boosted second
    /// stage).
    pub seed: u64,
}

impl Default for HetCalConfig {
    fn default() -> Self {
        Self {
            tree: TreeConfig::default(),
            calibrator: CalibratorKind::default(),
            min_calib_samples: 50,
            forest_size: None,
            boosted_stages: None,
            seed: 0,
        }
    }
}

impl HetCalConfig {
    fn validate(&self) -> Result<()> {
        if self.min_calib_samples < 2 {
            return Err(HetcalError::InvalidConfig(
                "min_calib_samples must be >= 2".into(),
            ));
        }
        if let Some(stages) = self.boosted_stages {
            if !(1..=2).contains(&stages) {
                return Err(HetcalError::InvalidConfig(
                    "boosted_stages must be 1 or 2".into(),
                ));
            }
            if stages == 2 && self.forest_size.is_some() {
                return Err(HetcalError::InvalidConfig(
                    "forest averaging and boosting do not combine".into(),
                ));
            }
        }
        if let CalibratorKind::Histogram { bins } = self.calibrator {
            if bins == 0 {
                return Err(HetcalError::InvalidConfig("bins must be >= 1".into()));
            }
        }
        Ok(())
    }
}

/// One partition/calibration layer: one transform per tree, each a
/// per-partition dispatch with the stage's global fallback inside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationStage {
    pub trees: Vec<PartitionTree>,
    pub transforms: Vec<Transform>,
}

/// A fitted heterogeneous calibrator: the partition tree(s) plus per-leaf
/// transforms of each stage, and the configuration that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeterogeneousCalibrator {
    pub version: u32,
    pub config: HetCalConfig,
    pub stages: Vec<CalibrationStage>,
}

impl HeterogeneousCalibrator {
    /// Calibrated probability for one example.
    pub fn predict(&self, features: &[f64], score: f64) -> Result<f64> {
        predict(self, features, score)
    }

    /// Predictions for a whole dataset, in row order.
    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<f64>> {
        data.examples()
            .iter()
            .map(|e| self.predict(&e.features, e.score))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let model: Self =
            serde_json::from_str(json).map_err(|e| HetcalError::Model(e.to_string()))?;
        if model.version != MODEL_VERSION {
            return Err(HetcalError::Model(format!(
                "unsupported model version {}",
                model.version
            )));
        }
        if model.stages.is_empty() {
            return Err(HetcalError::Model("model has no stages".into()));
        }
        for stage in &model.stages {
            if stage.trees.len() != stage.transforms.len() {
                return Err(HetcalError::Model(
                    "stage tree/transform count mismatch".into(),
                ));
            }
            for t in &stage.transforms {
                t.validate()?;
            }
        }
        Ok(model)
    }
}

/// Fits the calibrator family on one slice of (logit score, label) rows.
fn fit_calibrator(kind: CalibratorKind, scores: &[f64], labels: &[u8]) -> Result<Transform> {
    match kind {
        CalibratorKind::Platt { ridge } => fit_platt(scores, labels, ridge),
        CalibratorKind::Isotonic => fit_isotonic(scores, labels),
        CalibratorKind::Histogram { bins } => fit_histogram(scores, labels, bins),
    }
}

/// Builds the per-partition transform of one tree: leaves with enough
/// calibration rows (and, for isotonic/histogram, both labels) get their
/// own calibrator; the rest fall back to the stage-global transform.
fn fit_stage_transform(
    tree: &PartitionTree,
    scores: &[f64],
    labels: &[u8],
    assignment: &[PartitionId],
    cfg: &HetCalConfig,
    fallback: &Transform,
) -> Result<Transform> {
    let n_leaves = tree.n_leaves() as usize;
    let mut leaf_rows: Vec<Vec<usize>> = vec![Vec::new(); n_leaves];
    for (row, pid) in assignment.iter().enumerate() {
        leaf_rows[pid.0 as usize].push(row);
    }
    let fitted: Vec<Result<Option<Transform>>> = par_map(n_leaves, |leaf| {
        let rows = &leaf_rows[leaf];
        if rows.len() < cfg.min_calib_samples {
            return Ok(None);
        }
        let leaf_scores: Vec<f64> = rows.iter().map(|&r| scores[r]).collect();
        let leaf_labels: Vec<u8> = rows.iter().map(|&r| labels[r]).collect();
        let single_label =
            leaf_labels.iter().all(|y| *y == 0) || leaf_labels.iter().all(|y| *y == 1);
        if single_label && !matches!(cfg.calibrator, CalibratorKind::Platt { .. }) {
            return Ok(None);
        }
        fit_calibrator(cfg.calibrator, &leaf_scores, &leaf_labels).map(Some)
    });
    let mut entries = Vec::new();
    for (leaf, f) in fitted.into_iter().enumerate() {
        if let Some(t) = f? {
            entries.push((leaf as u32, t));
        }
    }
    Ok(Transform::per_partition(entries, fallback.clone()))
}

fn check_fit_inputs(train: &Dataset, calib: &Dataset) -> Result<()> {
    if train.is_empty() {
        return Err(HetcalError::EmptyInput("training data"));
    }
    if calib.is_empty() {
        return Err(HetcalError::EmptyInput("calibration data"));
    }
    let has0 = calib.examples().iter().any(|e| e.label == 0);
    let has1 = calib.examples().iter().any(|e| e.label == 1);
    if !has0 {
        return Err(HetcalError::SingleLabel(0));
    }
    if !has1 {
        return Err(HetcalError::SingleLabel(1));
    }
    Ok(())
}

/// Algorithm steps 1-5: fit the partition tree(s) on the training split and
/// one calibrator per leaf on the calibration split. Dispatches to the
/// boosted variant when the configuration asks for two stages.
pub fn fit(
    train: &Dataset,
    calib: &Dataset,
    cfg: &HetCalConfig,
) -> Result<HeterogeneousCalibrator> {
    cfg.validate()?;
    check_fit_inputs(train, calib)?;
    if cfg.boosted_stages == Some(2) {
        return fit_boosted(train, calib, cfg);
    }
    let trees = match cfg.forest_size {
        Some(k) => fit_forest(train, &cfg.tree, k, cfg.seed)?,
        None => vec![fit_tree(train, &cfg.tree)?],
    };
    let scores = calib.scores();
    let labels = calib.labels();
    let fallback = fit_calibrator(cfg.calibrator, &scores, &labels)?;
    let mut transforms = Vec::with_capacity(trees.len());
    for tree in &trees {
        let assignment = tree.assign_dataset(calib)?;
        transforms.push(fit_stage_transform(
            tree,
            &scores,
            &labels,
            &assignment,
            cfg,
            &fallback,
        )?);
    }
    Ok(HeterogeneousCalibrator {
        version: MODEL_VERSION,
        config: *cfg,
        stages: vec![CalibrationStage { trees, transforms }],
    })
}

/// Two-stage boosted calibration over explicitly given partition trees:
/// stage one calibrates raw logit scores per leaf of the first tree; stage
/// two calibrates the first stage's logit outputs per leaf of the second.
pub fn fit_boosted_with_trees(
    calib: &Dataset,
    cfg: &HetCalConfig,
    tree1: PartitionTree,
    tree2: PartitionTree,
) -> Result<HeterogeneousCalibrator> {
    let scores = calib.scores();
    let labels = calib.labels();

    let fallback1 = fit_calibrator(cfg.calibrator, &scores, &labels)?;
    let assignment1 = tree1.assign_dataset(calib)?;
    let t1 = fit_stage_transform(&tree1, &scores, &labels, &assignment1, cfg, &fallback1)?;

    // Stage-one logit outputs become the second stage's input scores.
    let stage1_logits: Vec<f64> = calib
        .examples()
        .iter()
        .zip(&assignment1)
        .map(|(e, pid)| apply_with_logit(&t1, e.score, *pid).1)
        .collect();

    let fallback2 = fit_calibrator(cfg.calibrator, &stage1_logits, &labels)?;
    let assignment2 = tree2.assign_dataset(calib)?;
    let t2 = fit_stage_transform(
        &tree2,
        &stage1_logits,
        &labels,
        &assignment2,
        cfg,
        &fallback2,
    )?;

    Ok(HeterogeneousCalibrator {
        version: MODEL_VERSION,
        config: *cfg,
        stages: vec![
            CalibrationStage {
                trees: vec![tree1],
                transforms: vec![t1],
            },
            CalibrationStage {
                trees: vec![tree2],
                transforms: vec![t2],
            },
        ],
    })
}

/// Two-stage boosted calibration. The second partition comes from an
/// independent tree fitted on a seeded bootstrap of the training data,
/// standing in for the second estimator of a two-round boosted ensemble.
pub fn fit_boosted(
    train: &Dataset,
    calib: &Dataset,
    cfg: &HetCalConfig,
) -> Result<HeterogeneousCalibrator> {
    cfg.validate()?;
    check_fit_inputs(train, calib)?;
    let tree1 = fit_tree(train, &cfg.tree)?;
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed ^ 0x0b00_57ed_5eed_0002);
    let rows: Vec<crate::data::LabeledExample> = (0..train.len())
        .map(|_| train.examples()[rng.random_range(0..train.len())].clone())
        .collect();
    let boot = Dataset::new(rows, train.role())?;
    let tree2 = fit_tree(&boot, &cfg.tree)?;
    fit_boosted_with_trees(calib, cfg, tree1, tree2)
}

/// Resolves per-partition dispatch down to the concrete leaf transform.
fn resolve_leaf(t: &Transform, pid: PartitionId) -> &Transform {
    match t {
        Transform::PerPartition {
            transforms,
            fallback,
        } => match transforms.binary_search_by_key(&pid.0, |(id, _)| *id) {
            Ok(i) => resolve_leaf(&transforms[i].1, pid),
            Err(_) => resolve_leaf(fallback, pid),
        },
        other => other,
    }
}

/// Applies a stage transform, returning (probability, logit-scale output).
/// Platt leaves produce the logit a*z + b directly, so chained Platt stages
/// compose without a sigmoid/logit round trip.
fn apply_with_logit(t: &Transform, z: f64, pid: PartitionId) -> (f64, f64) {
    match resolve_leaf(t, pid) {
        Transform::Platt { a, b } => {
            let zc = a * z + b;
            (sigmoid(zc), zc)
        }
        leaf => {
            let p = leaf.apply(z, pid);
            (p, logit(p))
        }
    }
}

/// Calibrated probability: route the features through every stage's tree,
/// transform the running logit score per leaf, and average across forest
/// trees (probability averaging) within a stage.
pub fn predict(hc: &HeterogeneousCalibrator, features: &[f64], score: f64) -> Result<f64> {
    let mut z = score;
    let mut p = sigmoid(score);
    for stage in &hc.stages {
        if stage.trees.len() == 1 {
            let pid = stage.trees[0].assign(features)?;
            let (prob, zc) = apply_with_logit(&stage.transforms[0], z, pid);
            p = prob;
            z = zc;
        } else {
            let mut sum = 0.0;
            for (tree, transform) in stage.trees.iter().zip(&stage.transforms) {
                let pid = tree.assign(features)?;
                sum += apply_with_logit(transform, z, pid).0;
            }
            p = sum / stage.trees.len() as f64;
            z = logit(p);
        }
    }
    Ok(p)
}

/// Metrics of one prediction column.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub auc: f64,
    pub pr_auc: f64,
    pub log_loss: f64,
    pub ece: f64,
    pub roc: Vec<(f64, f64)>,
}

/// Evaluation of a calibrator against the uncalibrated sigmoid baseline.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub calibrated: MetricsReport,
    pub baseline: MetricsReport,
    /// Relative AUC lift of the calibrated predictions over the baseline,
    /// in percent.
    pub auc_lift_pct: f64,
}

/// Metrics for an arbitrary probability column against labels.
pub fn metrics_for_predictions(preds: &[f64], labels: &[u8]) -> Result<MetricsReport> {
    let rows: Vec<crate::data::LabeledExample> = preds
        .iter()
        .zip(labels)
        .map(|(p, y)| crate::data::LabeledExample {
            features: vec![],
            label: *y,
            score: *p,
        })
        .collect();
    let data = Dataset::new(rows, crate::data::Role::Test)?;
    let dist = empirical_distribution(&data, &single_partition(&data))?;
    let auc = empirical_auc_of(preds, labels)?;
    let pr = pr_auc(&dist, &Transform::Identity)?;
    let curve = roc_curve(&dist, &Transform::Identity)?;
    Ok(MetricsReport {
        auc,
        pr_auc: pr,
        log_loss: empirical_log_loss(preds, labels),
        ece: empirical_ece(preds, labels, ECE_BINS),
        roc: curve.points,
    })
}

/// Evaluates calibrated predictions and the uncalibrated sigmoid baseline
/// on a test set, reporting the relative AUC lift in percent.
pub fn evaluate(hc: &HeterogeneousCalibrator, test: &Dataset) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(HetcalError::EmptyInput("test data"));
    }
    let labels = test.labels();
    let preds = hc.predict_dataset(test)?;
    let baseline_preds: Vec<f64> = test.examples().iter().map(|e| sigmoid(e.score)).collect();
    let calibrated = metrics_for_predictions(&preds, &labels)?;
    let baseline = metrics_for_predictions(&baseline_preds, &labels)?;
    let auc_lift_pct = (calibrated.auc - baseline.auc) / baseline.auc * 100.0;
    Ok(EvalReport {
        calibrated,
        baseline,
        auc_lift_pct,
    })
}
