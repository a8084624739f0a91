//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! with its measured values and elapsed time. Run with
//! `cargo test --test acceptance -- --nocapture` to see every line.

use std::time::Instant;

use hetcal_core::{
    auc_weight_sweep, brute_force_max_auc, calibrated_auc, check_ordering_equivalence,
    check_refinement_monotonicity, empirical_auc, evaluate, fit, gaussian_calibrated_auc,
    gaussian_platt_params, gen_heterogeneous, log_loss, metrics::empirical_auc_of, numeric::logit,
    numeric::normal_cdf, numeric::sigmoid, optimal_transform, partition_calibrated_auc, pr_auc,
    random_instance, random_transform, roc_curve, true_auc_heterogeneous, CalibratorKind, Dataset,
    HetCalConfig, LeafStats, PartitionId, Role, SplitCriterion, TableEntry, Transform, TreeConfig,
    SIGMA_BASE,
};

fn report(num: u32, name: &str, pass: bool, detail: &str, started: Instant) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!(
        "criterion {num:02} [{name}] {verdict} ({detail}, {:.2}s)",
        started.elapsed().as_secs_f64()
    );
    assert!(pass, "criterion {num:02} [{name}] failed: {detail}");
}

#[test]
fn acceptance_01_heterogeneous_auc_anchors() {
    let t0 = Instant::now();
    let a18 = true_auc_heterogeneous(1.8, -0.9, SIGMA_BASE);
    let a36 = true_auc_heterogeneous(3.6, -1.8, SIGMA_BASE);
    let elapsed_ok = t0.elapsed().as_secs_f64() < 1.0;
    let pass = (0.82..=0.84).contains(&a18) && (0.84..=0.86).contains(&a36) && elapsed_ok;
    report(
        1,
        "heterogeneous auc anchors",
        pass,
        &format!("auc(1.8,-0.9)={a18:.6} auc(3.6,-1.8)={a36:.6}"),
        t0,
    );
}

#[test]
fn acceptance_02_weight_sweep_shape() {
    let t0 = Instant::now();
    let grid: Vec<f64> = (0..=30).map(|i| 0.2 * i as f64).collect();
    let sweep = auc_weight_sweep(&grid, SIGMA_BASE).unwrap();
    let at = |w: f64| {
        sweep
            .iter()
            .find(|(g, _)| (g - w).abs() < 1e-9)
            .map(|(_, a)| *a)
            .unwrap()
    };
    let (w_max, a_max) = sweep
        .iter()
        .copied()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    let orderings = at(3.6) > at(1.8) && at(1.8) > at(0.0);
    let maximizer_in_range = (3.0..=4.2).contains(&w_max);
    let elapsed_ok = t0.elapsed().as_secs_f64() < 5.0;
    let pass = orderings && maximizer_in_range && elapsed_ok;
    report(
        2,
        "auc weight sweep shape",
        pass,
        &format!(
            "auc(0)={:.6} auc(1.8)={:.6} auc(3.6)={:.6} grid argmax w={w_max:.1} (auc {a_max:.6})",
            at(0.0),
            at(1.8),
            at(3.6)
        ),
        t0,
    );
}

#[test]
fn acceptance_03_brute_force_oracle_equivalence() {
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    let mut failures = 0u32;
    for trial in 0..1000u64 {
        let dist = random_instance(31_000_000 + trial);
        let bf = brute_force_max_auc(&dist).unwrap();
        let star = partition_calibrated_auc(&dist, &optimal_transform(&dist)).unwrap();
        let diff = (bf.max_auc - star).abs();
        worst = worst.max(diff);
        if diff > 1e-12 {
            failures += 1;
        }
    }
    let elapsed_ok = t0.elapsed().as_secs_f64() < 120.0;
    report(
        3,
        "brute-force oracle equivalence",
        failures == 0 && elapsed_ok,
        &format!("1000 instances, failures={failures}, worst |diff|={worst:.3e}"),
        t0,
    );
}

#[test]
fn acceptance_04_ordering_equivalence() {
    let t0 = Instant::now();
    let mut failures = 0u32;
    for trial in 0..10_000u64 {
        if !check_ordering_equivalence(&random_instance(34_000_000 + trial)) {
            failures += 1;
        }
    }
    report(
        4,
        "likelihood/posterior ordering equivalence",
        failures == 0,
        &format!("10000 instances, failures={failures}"),
        t0,
    );
}

#[test]
fn acceptance_05_roc_area_identity() {
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    for trial in 0..1000u64 {
        let dist = random_instance(41_000_000 + trial);
        let t = random_transform(&dist, 41_500_000 + trial);
        let area = roc_curve(&dist, &t).unwrap().area();
        let auc = calibrated_auc(&dist, &t).unwrap();
        worst = worst.max((area - auc).abs());
    }
    report(
        5,
        "roc area equals calibrated auc",
        worst <= 1e-12,
        &format!("1000 pairs, worst |area-auc|={worst:.3e}"),
        t0,
    );
}

#[test]
fn acceptance_06_roc_containment_and_pr_auc() {
    let t0 = Instant::now();
    let mut worst_tpr_gap: f64 = 0.0;
    let mut worst_pr_gap: f64 = 0.0;
    for trial in 0..1000u64 {
        let dist = random_instance(42_000_000 + trial);
        let t = random_transform(&dist, 42_500_000 + trial);
        let star = optimal_transform(&dist);
        let curve_star = roc_curve(&dist, &star).unwrap();
        let curve_t = roc_curve(&dist, &t).unwrap();
        let mut grid: Vec<f64> = curve_star
            .points
            .iter()
            .chain(curve_t.points.iter())
            .map(|(x, _)| *x)
            .collect();
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        for x in grid {
            let gap = curve_t.tpr_at(x) - curve_star.tpr_at(x);
            worst_tpr_gap = worst_tpr_gap.max(gap);
        }
        let gap = pr_auc(&dist, &t).unwrap() - pr_auc(&dist, &star).unwrap();
        worst_pr_gap = worst_pr_gap.max(gap);
    }
    report(
        6,
        "posterior roc containment and pr-auc optimality",
        worst_tpr_gap <= 1e-12 && worst_pr_gap <= 1e-12,
        &format!(
            "1000 pairs, worst tpr excess={worst_tpr_gap:.3e}, worst pr excess={worst_pr_gap:.3e}"
        ),
        t0,
    );
}

#[test]
fn acceptance_07_log_loss_optimality() {
    let t0 = Instant::now();
    use rand::Rng;
    use rand::SeedableRng;
    let mut failures = 0u32;
    for trial in 0..1000u64 {
        let dist = random_instance(50_000_000 + trial);
        let star = optimal_transform(&dist);
        let best = log_loss(&dist, &star);
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(50_500_000 + trial);
        for _ in 0..100 {
            let entries: Vec<TableEntry> = dist
                .support_keys()
                .iter()
                .map(|&(score, partition)| {
                    let base = star.apply(score, partition);
                    TableEntry {
                        score,
                        partition,
                        value: (base + rng.random_range(-0.3..0.3)).clamp(0.0, 1.0),
                    }
                })
                .collect();
            let other = log_loss(&dist, &Transform::table(entries, 0.0));
            if best > other + 1e-12 {
                failures += 1;
            }
        }
    }
    report(
        7,
        "posterior log-loss optimality",
        failures == 0,
        &format!("1000 instances x 100 perturbations, failures={failures}"),
        t0,
    );
}

#[test]
fn acceptance_08_refinement_monotonicity() {
    let t0 = Instant::now();
    use rand::Rng;
    use rand::SeedableRng;
    let mut failures = 0u32;
    for trial in 0..10_000u64 {
        let dist = random_instance(60_000_000 + trial);
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(60_500_000 + trial);
        let max_fine = dist.atoms().iter().map(|a| a.partition.0).max().unwrap();
        let n_coarse = rng.random_range(1..=max_fine + 1);
        let map: Vec<u32> = (0..=max_fine)
            .map(|_| rng.random_range(0..n_coarse))
            .collect();
        if !check_refinement_monotonicity(&dist, &map).unwrap() {
            failures += 1;
        }
    }
    report(
        8,
        "refinement monotonicity",
        failures == 0,
        &format!("10000 refinement pairs, failures={failures}"),
        t0,
    );
}

#[test]
fn acceptance_09_end_to_end_synthetic_lift() {
    let t0 = Instant::now();
    let ceiling = true_auc_heterogeneous(3.6, -1.8, SIGMA_BASE);
    let cfg = HetCalConfig {
        tree: TreeConfig {
            criterion: SplitCriterion::Gini,
            max_depth: 3,
            min_samples_leaf: 50,
            ..TreeConfig::default()
        },
        calibrator: CalibratorKind::Platt { ridge: 1e-6 },
        min_calib_samples: 50,
        ..HetCalConfig::default()
    };
    let mut pass = true;
    let mut details = Vec::new();
    for seed in 1..=5u64 {
        let train = gen_heterogeneous(50_000, 1.8, -0.9, seed * 10).unwrap();
        let calib = gen_heterogeneous(20_000, 1.8, -0.9, seed * 10 + 1)
            .unwrap()
            .with_role(Role::Calibration);
        let test = gen_heterogeneous(20_000, 1.8, -0.9, seed * 10 + 2)
            .unwrap()
            .with_role(Role::Test);
        let hc = fit(&train, &calib, &cfg).unwrap();
        let rep = evaluate(&hc, &test).unwrap();
        let lift_ok = rep.auc_lift_pct >= 1.5;
        let ceiling_ok = (rep.calibrated.auc - ceiling).abs() <= 0.01;
        pass &= lift_ok && ceiling_ok;
        details.push(format!(
            "seed {seed}: base={:.4} cal={:.4} lift={:.2}% |cal-ceiling|={:.4}",
            rep.baseline.auc,
            rep.calibrated.auc,
            rep.auc_lift_pct,
            (rep.calibrated.auc - ceiling).abs()
        ));
    }
    let elapsed_ok = t0.elapsed().as_secs_f64() < 60.0;
    report(
        9,
        "end-to-end synthetic lift",
        pass && elapsed_ok,
        &details.join("; "),
        t0,
    );
}

#[test]
fn acceptance_10_interpolation_identities() {
    let t0 = Instant::now();
    let train = gen_heterogeneous(20_000, 1.8, -0.9, 71).unwrap();
    let calib = gen_heterogeneous(10_000, 1.8, -0.9, 72).unwrap();
    let test = gen_heterogeneous(2_000, 1.8, -0.9, 73).unwrap();
    let cfg = HetCalConfig {
        tree: TreeConfig {
            max_depth: 3,
            min_samples_leaf: 50,
            ..TreeConfig::default()
        },
        min_calib_samples: 50,
        ..HetCalConfig::default()
    };
    let mut hc = fit(&train, &calib, &cfg).unwrap();
    let tree = hc.stages[0].trees[0].clone();
    let n_leaves = tree.n_leaves();

    // All leaves at (1, 0): the model reproduces sigmoid(score) bit-exactly.
    let identity: Vec<(u32, Transform)> = (0..n_leaves)
        .map(|id| (id, Transform::Platt { a: 1.0, b: 0.0 }))
        .collect();
    hc.stages[0].transforms[0] =
        Transform::per_partition(identity, Transform::Platt { a: 1.0, b: 0.0 });
    let sigmoid_exact = test
        .examples()
        .iter()
        .all(|e| hc.predict(&e.features, e.score).unwrap() == sigmoid(e.score));

    // All leaves at (0, logit(q_i)) with q_i the leaf's calibration-split
    // positive rate: the model reproduces the tree's probability prediction.
    // Exact as reals; in f64 the sigmoid/logit round trip costs up to 1 ulp.
    let assignment = tree.assign_dataset(&calib).unwrap();
    let mut pos = vec![0u64; n_leaves as usize];
    let mut tot = vec![0u64; n_leaves as usize];
    for (e, pid) in calib.examples().iter().zip(&assignment) {
        tot[pid.0 as usize] += 1;
        pos[pid.0 as usize] += e.label as u64;
    }
    let rates: Vec<f64> = (0..n_leaves as usize)
        .map(|i| pos[i] as f64 / tot[i] as f64)
        .collect();
    assert!(
        rates.iter().all(|q| *q > 0.0 && *q < 1.0),
        "every leaf needs both labels for the tree identity"
    );
    let constants: Vec<(u32, Transform)> = rates
        .iter()
        .enumerate()
        .map(|(id, q)| {
            (
                id as u32,
                Transform::Platt {
                    a: 0.0,
                    b: logit(*q),
                },
            )
        })
        .collect();
    hc.stages[0].transforms[0] =
        Transform::per_partition(constants, Transform::Platt { a: 1.0, b: 0.0 });
    let mut worst = 0.0f64;
    for e in test.examples() {
        let pid = tree.assign(&e.features).unwrap();
        let got = hc.predict(&e.features, e.score).unwrap();
        worst = worst.max((got - rates[pid.0 as usize]).abs());
    }
    let tree_exact = worst <= 1e-15;
    report(
        10,
        "interpolation identities",
        sigmoid_exact && tree_exact,
        &format!("sigmoid identity bit-exact={sigmoid_exact}, leaf-rate worst |diff|={worst:.3e}"),
        t0,
    );
}

#[test]
fn acceptance_11_strictly_increasing_auc_invariance() {
    let t0 = Instant::now();
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(70_000_000);
    let n = 400;
    let scores: Vec<f64> = (0..n)
        .map(|_| rng.random_range(0..50) as f64 * 0.3)
        .collect();
    let labels: Vec<u8> = scores
        .iter()
        .map(|s| u8::from(rng.random::<f64>() < sigmoid(s - 7.0)))
        .collect();
    let base = empirical_auc_of(&scores, &labels).unwrap();
    let mut distinct: Vec<f64> = scores.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let mut v = rng.random_range(-10.0..10.0);
        let mapping: Vec<(f64, f64)> = distinct
            .iter()
            .map(|s| {
                v += rng.random_range(1e-6..3.0);
                (*s, v)
            })
            .collect();
        let transformed: Vec<f64> = scores
            .iter()
            .map(|s| mapping[distinct.binary_search_by(|d| d.total_cmp(s)).unwrap()].1)
            .collect();
        let after = empirical_auc_of(&transformed, &labels).unwrap();
        worst = worst.max((after - base).abs());
    }
    report(
        11,
        "strictly increasing transform auc invariance",
        worst <= 1e-12,
        &format!("1000 transforms, worst |diff|={worst:.3e}"),
        t0,
    );
}

#[test]
fn acceptance_12_gaussian_criterion_closed_forms() {
    let t0 = Instant::now();
    let solve = gaussian_platt_params(-1.0, 2.0f64.sqrt(), 1.0, 2.0f64.sqrt(), 0.5, 0.1);
    let platt_ok = (solve.a - 1.0).abs() <= 1e-6 && solve.b.abs() <= 1e-6;
    let stats = LeafStats {
        n: 1000,
        n_pos: 500,
        mean0: -1.0,
        var0: 4.0,
        mean1: 1.0,
        var1: 4.0,
        pos_rate: 0.5,
    };
    let got = gaussian_calibrated_auc(&stats, &stats, 0.1);
    let expect = normal_cdf(2.0 / 8.0f64.sqrt());
    let auc_ok = (got - expect).abs() <= 1e-5;
    report(
        12,
        "gaussian criterion closed forms",
        platt_ok && auc_ok,
        &format!(
            "platt (a,b)=({:.8},{:.2e}), degenerate split auc={got:.7} vs closed form {expect:.7}",
            solve.a, solve.b
        ),
        t0,
    );
}

// Keep a compile-time proof that the pieces used above stay re-exported.
#[allow(dead_code)]
fn surface_check(data: &Dataset) -> hetcal_core::Result<f64> {
    let dist = hetcal_core::empirical_distribution(data, &hetcal_core::single_partition(data))?;
    let _ = empirical_auc(data)?;
    let _ = PartitionId(0);
    hetcal_core::auc(&dist)
}
