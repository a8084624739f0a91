//! End-to-end pipeline behavior on the synthetic score models: lift from
//! partitioned calibration, forest averaging, two-stage boosting over given
//! partitions, and exact AUC invariance under global monotone calibration.

use hetcal_core::tree::Node;
use hetcal_core::{
    empirical_auc, evaluate, fit, fit_boosted_with_trees, gen_heterogeneous, gen_overconfident,
    Dataset, HetCalConfig, LabeledExample, LeafStats, PartitionId, PartitionTree, Role, TreeConfig,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn cfg_depth(depth: usize) -> HetCalConfig {
    HetCalConfig {
        tree: TreeConfig {
            max_depth: depth,
            min_samples_leaf: 50,
            ..TreeConfig::default()
        },
        min_calib_samples: 50,
        ..HetCalConfig::default()
    }
}

#[test]
fn heterogeneous_synthetic_improves_over_baseline() {
    let train = gen_heterogeneous(30_000, 1.8, -0.9, 301).unwrap();
    let test = gen_heterogeneous(10_000, 1.8, -0.9, 302)
        .unwrap()
        .with_role(Role::Test);
    // Calibration on the training data itself still lifts test AUC.
    let hc = fit(&train, &train, &cfg_depth(3)).unwrap();
    let report = evaluate(&hc, &test).unwrap();
    assert!(
        report.auc_lift_pct > 1.0,
        "expected a clear lift, got {:.3}%",
        report.auc_lift_pct
    );
}

#[test]
fn forest_averaging_stays_close_to_single_tree() {
    let train = gen_heterogeneous(20_000, 1.8, -0.9, 311).unwrap();
    let calib = gen_heterogeneous(10_000, 1.8, -0.9, 312)
        .unwrap()
        .with_role(Role::Calibration);
    let test = gen_heterogeneous(10_000, 1.8, -0.9, 313)
        .unwrap()
        .with_role(Role::Test);
    let single = fit(&train, &calib, &cfg_depth(3)).unwrap();
    let forest_cfg = HetCalConfig {
        forest_size: Some(25),
        seed: 5,
        ..cfg_depth(3)
    };
    let forest = fit(&train, &calib, &forest_cfg).unwrap();
    assert_eq!(forest.stages[0].trees.len(), 25);
    let single_auc = evaluate(&single, &test).unwrap().calibrated.auc;
    let forest_auc = evaluate(&forest, &test).unwrap().calibrated.auc;
    assert!(
        (single_auc - forest_auc).abs() < 0.01,
        "single {single_auc} vs forest {forest_auc}"
    );
}

fn dummy_stats() -> LeafStats {
    LeafStats {
        n: 1,
        n_pos: 0,
        mean0: 0.0,
        var0: 0.0,
        mean1: 0.0,
        var1: 0.0,
        pos_rate: 0.0,
    }
}

/// Depth-1 stump splitting feature `feature` at 0.5.
fn stump(feature: usize, n_features: usize) -> PartitionTree {
    PartitionTree {
        nodes: vec![
            Node::Internal {
                feature,
                threshold: 0.5,
                left: 1,
                right: 2,
            },
            Node::Leaf {
                id: PartitionId(0),
                stats: dummy_stats(),
            },
            Node::Leaf {
                id: PartitionId(1),
                stats: dummy_stats(),
            },
        ],
        n_features,
        n_leaves: 2,
    }
}

fn single_leaf(n_features: usize) -> PartitionTree {
    PartitionTree {
        nodes: vec![Node::Leaf {
            id: PartitionId(0),
            stats: dummy_stats(),
        }],
        n_features,
        n_leaves: 1,
    }
}

/// Two independent heterogeneous binary features, both under-weighted in
/// the stored score.
fn two_feature_dataset(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let rows: Vec<LabeledExample> = (0..n)
        .map(|_| {
            let label = u8::from(rng.random::<f64>() < 0.5);
            let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
            let base = if label == 1 { 1.0 } else { -1.0 } + 2.0 * z;
            let draw = |rng: &mut ChaCha12Rng| {
                let favorable = rng.random::<f64>() < 0.75;
                if favorable {
                    label as f64
                } else {
                    1.0 - label as f64
                }
            };
            let x1 = draw(&mut rng);
            let x2 = draw(&mut rng);
            LabeledExample {
                features: vec![x1, x2],
                label,
                score: base + 1.8 * x1 + 1.8 * x2 - 1.8,
            }
        })
        .collect();
    Dataset::new(rows, Role::Train).unwrap()
}

#[test]
fn boosted_over_both_partitions_beats_each_alone() {
    let calib = two_feature_dataset(40_000, 41);
    let test = two_feature_dataset(20_000, 42);
    let cfg = HetCalConfig {
        boosted_stages: Some(2),
        ..cfg_depth(1)
    };
    let both = fit_boosted_with_trees(&calib, &cfg, stump(0, 2), stump(1, 2)).unwrap();
    let only_first = fit_boosted_with_trees(&calib, &cfg, stump(0, 2), single_leaf(2)).unwrap();
    let only_second = fit_boosted_with_trees(&calib, &cfg, stump(1, 2), single_leaf(2)).unwrap();

    let auc_of =
        |hc: &hetcal_core::HeterogeneousCalibrator| evaluate(hc, &test).unwrap().calibrated.auc;
    let auc_both = auc_of(&both);
    let auc_first = auc_of(&only_first);
    let auc_second = auc_of(&only_second);
    assert!(
        auc_both >= auc_first.max(auc_second) - 0.005,
        "both {auc_both} vs alone {auc_first}/{auc_second}"
    );
    // And boosting over both partitions beats the raw baseline clearly.
    let baseline = evaluate(&both, &test).unwrap().baseline.auc;
    assert!(auc_both > baseline + 0.01);
}

/// Leaf statistics of one side of a feature split at 0.5.
fn side_stats(data: &Dataset, feature: usize, left: bool) -> LeafStats {
    let rows: Vec<&LabeledExample> = data
        .examples()
        .iter()
        .filter(|e| (e.features[feature] <= 0.5) == left)
        .collect();
    let moments = |label: u8| -> (f64, f64) {
        let scores: Vec<f64> = rows
            .iter()
            .filter(|e| e.label == label)
            .map(|e| e.score)
            .collect();
        let n = scores.len() as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
        (mean, var)
    };
    let n = rows.len() as u64;
    let n_pos = rows.iter().filter(|e| e.label == 1).count() as u64;
    let (mean0, var0) = moments(0);
    let (mean1, var1) = moments(1);
    LeafStats {
        n,
        n_pos,
        mean0,
        var0,
        mean1,
        var1,
        pos_rate: n_pos as f64 / n as f64,
    }
}

#[test]
fn gaussian_criterion_prefers_heterogeneous_split_over_noise() {
    // At w = 0 the informative binary feature never enters the score, yet
    // splitting on it still separates label balance; a noise split does not.
    let data = gen_heterogeneous(100_000, 0.0, 0.0, 77).unwrap();
    let hetero = hetcal_core::gaussian_calibrated_auc(
        &side_stats(&data, 0, true),
        &side_stats(&data, 0, false),
        0.1,
    );
    let noise = hetcal_core::gaussian_calibrated_auc(
        &side_stats(&data, 1, true),
        &side_stats(&data, 1, false),
        0.1,
    );
    assert!(
        hetero > noise + 0.005,
        "heterogeneous split {hetero} vs noise split {noise}"
    );
}

#[test]
fn global_monotone_calibration_leaves_auc_unchanged() {
    // The over-confident datasets carry no features, so the tree is a
    // single leaf and calibration is one global Platt fit: strictly
    // increasing, hence the AUC and the lift are exactly unchanged.
    let (train, test) = gen_overconfident(20_000, 401).unwrap();
    let hc = fit(&train, &train, &cfg_depth(3)).unwrap();
    assert_eq!(hc.stages[0].trees[0].n_leaves(), 1);
    let report = evaluate(&hc, &test).unwrap();
    assert_eq!(report.calibrated.auc, report.baseline.auc);
    assert_eq!(report.auc_lift_pct, 0.0);
    assert_eq!(report.baseline.auc, empirical_auc(&test).unwrap());
}
