//! `hetcal` command line: fit a tree-partitioned calibrator, apply it to
//! CSV data, report metrics, generate synthetic datasets, and run the
//! optimality property suite.
//!
//! Exit codes: 0 success, 1 property-suite failure, 2 input validation.

mod canonical;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use hetcal_core::numeric::{logit, sigmoid};
use hetcal_core::{
    auc_weight_sweep, fit, gen_heterogeneous, gen_overconfident, load_csv, metrics_for_predictions,
    run_verify, write_csv, CalibratorKind, CsvSchema, Dataset, HetCalConfig,
    HeterogeneousCalibrator, LabeledExample, Role, SplitCriterion, Transform, TreeConfig,
    VerifyConfig, SIGMA_BASE,
};

use canonical::{write_atomic, write_canonical_json};

#[derive(Parser)]
#[command(
    name = "hetcal",
    about = "Tree-partitioned post-hoc calibration for binary classifier scores",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScoreScale {
    /// Scores are pre-sigmoid logits (the default convention).
    Logit,
    /// Scores are probabilities; they are mapped through logit on load.
    Probability,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CriterionArg {
    Gini,
    AucGaussian,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CalibratorArg {
    Platt,
    Isotonic,
    Histogram,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SynthKind {
    /// Heterogeneous binary-feature example: one informative binary feature
    /// plus two noise columns.
    Heterogeneous,
    /// Over-confident model example: train/test pair with sharper train
    /// score distributions.
    Overconfident,
    /// CSV sweep of exact AUC against the feature weight w.
    AucWeightSweep,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a heterogeneous calibrator from train and calibration CSVs.
    Fit {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        calib: PathBuf,
        /// Output model path (JSON).
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value = "gini")]
        criterion: CriterionArg,
        #[arg(long, default_value_t = 3)]
        max_depth: usize,
        #[arg(long, default_value_t = 50)]
        min_samples_leaf: usize,
        #[arg(long, value_enum, default_value = "platt")]
        calibrator: CalibratorArg,
        /// Ridge strength for Platt fitting.
        #[arg(long, default_value_t = 1e-6)]
        ridge: f64,
        /// Bin count for histogram calibration.
        #[arg(long, default_value_t = 10)]
        bins: usize,
        /// Leaves with fewer calibration rows fall back to the global
        /// calibrator.
        #[arg(long, default_value_t = 50)]
        min_calib_samples: usize,
        /// Fit this many bootstrap trees and average their probabilities.
        #[arg(long)]
        forest: Option<usize>,
        /// Chain this many partition/calibration stages (1 or 2).
        #[arg(long)]
        boosted_stages: Option<u8>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "logit")]
        score_scale: ScoreScale,
    },
    /// Apply a fitted model to a CSV, appending a calibrated_prob column.
    Apply {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value = "logit")]
        score_scale: ScoreScale,
    },
    /// Compute metrics for a prediction column against labels.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Column holding the predicted probabilities.
        #[arg(long, default_value = "calibrated_prob")]
        pred_column: String,
        /// Skip the sigmoid(score) baseline and lift.
        #[arg(long)]
        no_baseline: bool,
        #[arg(long, value_enum, default_value = "logit")]
        score_scale: ScoreScale,
    },
    /// Generate synthetic datasets or the exact AUC-vs-weight sweep.
    Synth {
        #[arg(long, value_enum)]
        kind: SynthKind,
        /// Output CSV (dataset, or w,auc pairs for the sweep).
        #[arg(long)]
        output: PathBuf,
        /// Second output for the over-confident kind's test split.
        #[arg(long)]
        output_test: Option<PathBuf>,
        #[arg(long, default_value_t = 10000)]
        n: usize,
        #[arg(long, default_value_t = 1.8)]
        w: f64,
        #[arg(long, default_value_t = -0.9, allow_hyphen_values = true)]
        b: f64,
        #[arg(long, default_value_t = 6.0)]
        w_max: f64,
        #[arg(long, default_value_t = 0.2)]
        w_step: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the optimality property suite and write a pass/fail report.
    Verify {
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Base instance count per property (the cheap checks run 10x this).
        #[arg(long, default_value_t = 1000)]
        trials: u64,
    },
}

fn convert_scale(data: Dataset, scale: ScoreScale) -> anyhow::Result<Dataset> {
    match scale {
        ScoreScale::Logit => Ok(data),
        ScoreScale::Probability => {
            let role = data.role();
            let rows = data
                .examples()
                .iter()
                .map(|e| LabeledExample {
                    features: e.features.clone(),
                    label: e.label,
                    score: logit(e.score),
                })
                .collect();
            Ok(Dataset::new(rows, role)?)
        }
    }
}

fn load(path: &Path, role: Role, scale: ScoreScale) -> anyhow::Result<Dataset> {
    let data = load_csv(path, &CsvSchema::default(), role)
        .with_context(|| format!("loading {}", path.display()))?;
    convert_scale(data, scale)
}

fn metrics_to_json(m: &hetcal_core::MetricsReport) -> serde_json::Value {
    let fval = |x: f64| -> serde_json::Value {
        if x.is_finite() {
            serde_json::json!(x)
        } else if x.is_nan() {
            serde_json::Value::String("nan".into())
        } else {
            serde_json::Value::String(if x > 0.0 { "inf" } else { "-inf" }.into())
        }
    };
    serde_json::json!({
        "auc": fval(m.auc),
        "pr_auc": fval(m.pr_auc),
        "log_loss": fval(m.log_loss),
        "ece": fval(m.ece),
        "roc": m.roc,
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_fit(
    train: &Path,
    calib: &Path,
    model: &Path,
    cfg: HetCalConfig,
    scale: ScoreScale,
) -> anyhow::Result<i32> {
    let train_data = load(train, Role::Train, scale)?;
    let calib_data = load(calib, Role::Calibration, scale)?;
    let hc = fit(&train_data, &calib_data, &cfg)?;

    // Per-leaf calibration coverage, on standard error.
    for (s, stage) in hc.stages.iter().enumerate() {
        for (t, (tree, transform)) in stage.trees.iter().zip(&stage.transforms).enumerate() {
            let assignment = tree.assign_dataset(&calib_data)?;
            let mut counts = vec![0usize; tree.n_leaves() as usize];
            for pid in &assignment {
                counts[pid.0 as usize] += 1;
            }
            let fitted: Vec<u32> = match transform {
                Transform::PerPartition { transforms, .. } => {
                    transforms.iter().map(|(id, _)| *id).collect()
                }
                _ => Vec::new(),
            };
            eprintln!("stage {s} tree {t}: {} leaves", tree.n_leaves());
            for (leaf, count) in counts.iter().enumerate() {
                let status = if fitted.contains(&(leaf as u32)) {
                    "per-leaf calibrator"
                } else {
                    "fallback"
                };
                eprintln!("  leaf {leaf}: {count} calibration rows, {status}");
            }
        }
    }

    let value = serde_json::to_value(&hc)?;
    write_canonical_json(model, &value)?;
    Ok(0)
}

fn cmd_apply(model: &Path, input: &Path, output: &Path, scale: ScoreScale) -> anyhow::Result<i32> {
    let text =
        std::fs::read_to_string(model).with_context(|| format!("reading {}", model.display()))?;
    let hc = HeterogeneousCalibrator::from_json(&text)?;

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(input)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.to_string()).collect();
    let find = |name: &str| -> anyhow::Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            anyhow::anyhow!("missing required column `{name}` in {}", input.display())
        })
    };
    let label_idx = find("label")?;
    let score_idx = find("score")?;
    let feature_idx: Vec<usize> = (0..headers.len())
        .filter(|i| *i != label_idx && *i != score_idx)
        .collect();

    let mut out = String::new();
    out.push_str(&headers.join(","));
    out.push_str(",calibrated_prob\n");
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let parse = |idx: usize| -> anyhow::Result<f64> {
            let raw = record.get(idx).unwrap_or("");
            raw.trim().parse::<f64>().map_err(|_| {
                anyhow::anyhow!(
                    "row {row}: cannot parse `{raw}` in column `{}`",
                    headers[idx]
                )
            })
        };
        let mut score = parse(score_idx)?;
        if scale == ScoreScale::Probability {
            score = logit(score);
        }
        let features: Vec<f64> = feature_idx
            .iter()
            .map(|i| parse(*i))
            .collect::<anyhow::Result<_>>()?;
        let prob = hc.predict(&features, score)?;
        let cells: Vec<&str> = record.iter().collect();
        out.push_str(&cells.join(","));
        out.push_str(&format!(",{prob}\n"));
    }
    write_atomic(output, out.as_bytes())?;
    Ok(0)
}

fn cmd_report(
    input: &Path,
    output: &Path,
    pred_column: &str,
    no_baseline: bool,
    scale: ScoreScale,
) -> anyhow::Result<i32> {
    // Route the prediction column through the feature slot of the loader.
    let schema = CsvSchema {
        features: Some(vec![pred_column.to_string()]),
        ..CsvSchema::default()
    };
    let data = load_csv(input, &schema, Role::Test)?;
    let labels = data.labels();
    let preds: Vec<f64> = data.examples().iter().map(|e| e.features[0]).collect();
    let calibrated = metrics_for_predictions(&preds, &labels)?;
    let mut report = metrics_to_json(&calibrated);
    if !no_baseline {
        let base_preds: Vec<f64> = data
            .examples()
            .iter()
            .map(|e| {
                let z = if scale == ScoreScale::Probability {
                    logit(e.score)
                } else {
                    e.score
                };
                sigmoid(z)
            })
            .collect();
        let baseline = metrics_for_predictions(&base_preds, &labels)?;
        let lift = (calibrated.auc - baseline.auc) / baseline.auc * 100.0;
        report["baseline"] = metrics_to_json(&baseline);
        report["auc_lift_pct"] = serde_json::json!(lift);
    }
    write_canonical_json(output, &report)?;
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_synth(
    kind: SynthKind,
    output: &Path,
    output_test: Option<&Path>,
    n: usize,
    w: f64,
    b: f64,
    w_max: f64,
    w_step: f64,
    seed: u64,
) -> anyhow::Result<i32> {
    match kind {
        SynthKind::Heterogeneous => {
            let data = gen_heterogeneous(n, w, b, seed)?;
            write_csv(output, &data)?;
        }
        SynthKind::Overconfident => {
            let test_path = output_test
                .ok_or_else(|| anyhow::anyhow!("--output-test is required for overconfident"))?;
            let (train, test) = gen_overconfident(n, seed)?;
            write_csv(output, &train)?;
            write_csv(test_path, &test)?;
        }
        SynthKind::AucWeightSweep => {
            if w_step <= 0.0 || w_max < 0.0 {
                bail!("--w-step must be positive and --w-max non-negative");
            }
            let steps = (w_max / w_step).round() as usize;
            let grid: Vec<f64> = (0..=steps).map(|i| i as f64 * w_step).collect();
            let sweep = auc_weight_sweep(&grid, SIGMA_BASE)?;
            let mut text = String::from("w,auc\n");
            for (wv, auc) in sweep {
                text.push_str(&format!("{wv},{auc}\n"));
            }
            write_atomic(output, text.as_bytes())?;
        }
    }
    Ok(0)
}

fn cmd_verify(output: &Path, seed: u64, trials: u64) -> anyhow::Result<i32> {
    let report = run_verify(VerifyConfig { seed, trials });
    for p in &report.properties {
        eprintln!(
            "{}: {} ({} trials, {} failures)",
            p.name,
            if p.failures == 0 { "pass" } else { "FAIL" },
            p.trials,
            p.failures
        );
    }
    let value = serde_json::to_value(&report)?;
    write_canonical_json(output, &value)?;
    Ok(if report.all_passed { 0 } else { 1 })
}

fn dispatch(cli: Cli) -> anyhow::Result<i32> {
    match cli.command {
        Command::Fit {
            train,
            calib,
            model,
            criterion,
            max_depth,
            min_samples_leaf,
            calibrator,
            ridge,
            bins,
            min_calib_samples,
            forest,
            boosted_stages,
            seed,
            score_scale,
        } => {
            let cfg = HetCalConfig {
                tree: TreeConfig {
                    criterion: match criterion {
                        CriterionArg::Gini => SplitCriterion::Gini,
                        CriterionArg::AucGaussian => SplitCriterion::AucGaussian,
                    },
                    max_depth,
                    min_samples_leaf,
                    ..TreeConfig::default()
                },
                calibrator: match calibrator {
                    CalibratorArg::Platt => CalibratorKind::Platt { ridge },
                    CalibratorArg::Isotonic => CalibratorKind::Isotonic,
                    CalibratorArg::Histogram => CalibratorKind::Histogram { bins },
                },
                min_calib_samples,
                forest_size: forest,
                boosted_stages,
                seed,
            };
            cmd_fit(&train, &calib, &model, cfg, score_scale)
        }
        Command::Apply {
            model,
            input,
            output,
            score_scale,
        } => cmd_apply(&model, &input, &output, score_scale),
        Command::Report {
            input,
            output,
            pred_column,
            no_baseline,
            score_scale,
        } => cmd_report(&input, &output, &pred_column, no_baseline, score_scale),
        Command::Synth {
            kind,
            output,
            output_test,
            n,
            w,
            b,
            w_max,
            w_step,
            seed,
        } => cmd_synth(
            kind,
            &output,
            output_test.as_deref(),
            n,
            w,
            b,
            w_max,
            w_step,
            seed,
        ),
        Command::Verify {
            output,
            seed,
            trials,
        } => cmd_verify(&output, seed, trials),
    }
}

fn main() {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
    }
}
