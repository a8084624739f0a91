//! Ground-truth machinery for the optimality theory: the per-key posterior
//! transform, brute-force AUC maximization over weak orderings of the
//! support, ordering-equivalence and refinement-monotonicity checks, and a
//! seeded property suite running them over random instances.
//!
//! Random instances carry probabilities on a dyadic grid (multiples of
//! 2^-16), so every mass, marginal sum, and pairwise product is exact in
//! f64 and ordering comparisons are rational-safe: the brute-force maximum
//! and the posterior transform's AUC agree bit-for-bit rather than merely
//! to rounding.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use crate::calibrate::{TableEntry, Transform};
use crate::data::{Atom, DiscreteDistribution, PartitionId};
use crate::error::{HetcalError, Result};
use crate::metrics::{calibrated_auc, log_loss, partition_calibrated_auc, pr_auc, roc_curve};
use crate::par::par_map;

/// Enumeration bound: ordered set partitions of more keys than this are
/// refused (the count grows as the ordered Bell numbers).
pub const MAX_BRUTE_FORCE_KEYS: usize = 8;

/// Grid denominator of generated instance probabilities.
const MASS_GRID: u64 = 1 << 16;

/// The AUC-optimal per-partition transform: at every support key the
/// posterior positive probability mass1 / (mass1 + mass0), and 0 where both
/// masses vanish (i.e. off the support). Orders keys exactly like the
/// label-conditional likelihood ratio, and additionally minimizes the
/// partition-calibrated log-loss.
pub fn optimal_transform(dist: &DiscreteDistribution) -> Transform {
    let entries = dist
        .support_keys()
        .iter()
        .map(|&(score, partition)| {
            let (m0, m1) = dist.key_masses(score, partition);
            TableEntry {
                score,
                partition,
                value: if m0 + m1 > 0.0 { m1 / (m0 + m1) } else { 0.0 },
            }
        })
        .collect();
    Transform::table(entries, 0.0)
}

/// Result of the exhaustive search over weak orderings.
#[derive(Debug, Clone, Serialize)]
pub struct BruteForceResult {
    pub max_auc: f64,
    /// Blocks of tied keys, lowest transformed value first.
    pub witness: Vec<Vec<(f64, PartitionId)>>,
}

/// Maximizes partition-calibrated AUC by enumerating every weak ordering
/// (ordered set partition) of the support keys and evaluating the AUC a
/// transform realizing that ordering achieves. Guaranteed global optimum;
/// errors if the support exceeds [`MAX_BRUTE_FORCE_KEYS`].
pub fn brute_force_max_auc(dist: &DiscreteDistribution) -> Result<BruteForceResult> {
    brute_force_max_auc_with_tie_weight(dist, 0.5)
}

/// Test hook for harness self-checks: evaluates enumerated orderings with
/// the given tie-pair weight instead of the 1/2 convention. Anything other
/// than 0.5 deliberately breaks the optimality theory.
#[doc(hidden)]
pub fn brute_force_max_auc_with_tie_weight(
    dist: &DiscreteDistribution,
    tie_weight: f64,
) -> Result<BruteForceResult> {
    let keys = dist.support_keys();
    let n = keys.len();
    if n > MAX_BRUTE_FORCE_KEYS {
        return Err(HetcalError::SupportTooLarge(n, MAX_BRUTE_FORCE_KEYS));
    }
    if n == 0 {
        return Err(HetcalError::EmptyInput("distribution support"));
    }
    let t0 = dist.label_mass(0);
    let t1 = dist.label_mass(1);
    if t0 == 0.0 {
        return Err(HetcalError::SingleLabel(0));
    }
    if t1 == 0.0 {
        return Err(HetcalError::SingleLabel(1));
    }
    let masses: Vec<(f64, f64)> = keys.iter().map(|&(s, p)| dist.key_masses(s, p)).collect();

    // Fast evaluator of a level assignment; identical accumulation order to
    // the production evaluator, so values are comparable bit-for-bit.
    let eval = |levels: &[usize], n_levels: usize| -> f64 {
        let mut m0 = [0.0f64; MAX_BRUTE_FORCE_KEYS];
        let mut m1 = [0.0f64; MAX_BRUTE_FORCE_KEYS];
        for (key, lvl) in levels.iter().enumerate() {
            m0[*lvl] += masses[key].0;
            m1[*lvl] += masses[key].1;
        }
        let mut num = 0.0;
        let mut cum0 = 0.0;
        for l in 0..n_levels {
            num += m1[l] * cum0 + tie_weight * m1[l] * m0[l];
            cum0 += m0[l];
        }
        num / (t0 * t1)
    };

    let mut best_value = f64::NEG_INFINITY;
    let mut best_levels = vec![0usize; n];
    let mut best_n_levels = 1usize;

    // Enumerate set partitions as restricted growth strings (rgs[0] fixed
    // at block 0), then every permutation of block-to-level assignments.
    let mut rgs = vec![0usize; n];
    fn visit(
        pos: usize,
        max_block: usize,
        n: usize,
        rgs: &mut Vec<usize>,
        on_partition: &mut dyn FnMut(&[usize], usize),
    ) {
        if pos == n {
            on_partition(rgs, max_block + 1);
            return;
        }
        for b in 0..=max_block + 1 {
            rgs[pos] = b;
            visit(pos + 1, max_block.max(b), n, rgs, on_partition);
        }
    }

    let mut levels = vec![0usize; n];
    let mut on_partition = |rgs: &[usize], k: usize| {
        // Heap's algorithm over the k block labels.
        let mut perm: Vec<usize> = (0..k).collect();
        let mut c = vec![0usize; k];
        let mut apply = |perm: &[usize]| {
            for (i, block) in rgs.iter().enumerate() {
                levels[i] = perm[*block];
            }
            let value = eval(&levels, k);
            if value > best_value {
                best_value = value;
                best_levels.copy_from_slice(&levels);
                best_n_levels = k;
            }
        };
        apply(&perm);
        let mut i = 0;
        while i < k {
            if c[i] < i {
                if i % 2 == 0 {
                    perm.swap(0, i);
                } else {
                    perm.swap(c[i], i);
                }
                apply(&perm);
                c[i] += 1;
                i = 0;
            } else {
                c[i] = 0;
                i += 1;
            }
        }
    };
    visit(1, 0, n, &mut rgs, &mut on_partition);

    // Re-evaluate the winning ordering through the production path so the
    // reported maximum is directly comparable with metric outputs.
    let entries: Vec<TableEntry> = keys
        .iter()
        .zip(&best_levels)
        .map(|(&(score, partition), lvl)| TableEntry {
            score,
            partition,
            value: *lvl as f64,
        })
        .collect();
    let max_auc = if tie_weight == 0.5 {
        partition_calibrated_auc(dist, &Transform::table(entries, 0.0))?
    } else {
        eval(&best_levels, best_n_levels)
    };

    let mut witness: Vec<Vec<(f64, PartitionId)>> = vec![Vec::new(); best_n_levels];
    for (key, lvl) in keys.iter().zip(&best_levels) {
        witness[*lvl].push(*key);
    }
    Ok(BruteForceResult { max_auc, witness })
}

/// Compares a/b against c/d as exact rationals of non-negative f64 values,
/// with 0-denominator ratios ordered as +infinity.
fn ratio_order(a: f64, b: f64, c: f64, d: f64) -> std::cmp::Ordering {
    match (b == 0.0, d == 0.0) {
        (true, true) => std::cmp::Ordering::Equal,
        (true, false) => std::cmp::Ordering::Greater,
        (false, true) => std::cmp::Ordering::Less,
        (false, false) => (a * d).total_cmp(&(c * b)),
    }
}

/// Checks that for every pair of support keys the strict order under the
/// label-conditional likelihood ratio p1/p0 matches the strict order under
/// the posterior P(y=1 | s, partition). Both sides are evaluated through
/// their own formulas.
pub fn check_ordering_equivalence(dist: &DiscreteDistribution) -> bool {
    let keys = dist.support_keys();
    let t0 = dist.label_mass(0);
    let t1 = dist.label_mass(1);
    let masses: Vec<(f64, f64)> = keys.iter().map(|&(s, p)| dist.key_masses(s, p)).collect();
    for i in 0..masses.len() {
        for j in (i + 1)..masses.len() {
            let (m0a, m1a) = masses[i];
            let (m0b, m1b) = masses[j];
            if m0a + m1a == 0.0 || m0b + m1b == 0.0 {
                continue;
            }
            // Likelihood ratios use label-conditional masses.
            let lr = ratio_order(m1a / t1, m0a / t0, m1b / t1, m0b / t0);
            // Posteriors use joint masses.
            let post = (m1a * (m1b + m0b)).total_cmp(&(m1b * (m1a + m0a)));
            if lr != post {
                return false;
            }
        }
    }
    true
}

/// Checks that optimally calibrating a finer partition never lowers AUC:
/// `fine_to_coarse[i]` names the coarse cell fine partition id i merges
/// into. Errors when the map fails to cover a fine id present in the
/// distribution.
pub fn check_refinement_monotonicity(
    dist: &DiscreteDistribution,
    fine_to_coarse: &[u32],
) -> Result<bool> {
    for atom in dist.atoms() {
        if atom.partition.0 as usize >= fine_to_coarse.len() {
            return Err(HetcalError::NonRefiningMap(atom.partition.0));
        }
    }
    let coarse = dist.remap_partitions(|pid| PartitionId(fine_to_coarse[pid.0 as usize]))?;
    let fine_auc = partition_calibrated_auc(dist, &optimal_transform(dist))?;
    let coarse_auc = partition_calibrated_auc(&coarse, &optimal_transform(&coarse))?;
    Ok(fine_auc >= coarse_auc)
}

/// Seeded random instance: 2..=6 support keys over 1..=3 partitions with
/// symmetric-Dirichlet mass quantized to the 2^-16 grid. Both labels always
/// carry positive mass.
pub fn random_instance(seed: u64) -> DiscreteDistribution {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    loop {
        let n_keys = rng.random_range(2usize..=6);
        let n_parts = rng.random_range(1u32..=3);
        let mut keys: Vec<(f64, PartitionId)> = Vec::new();
        let mut guard = 0;
        while keys.len() < n_keys {
            let key = (
                rng.random_range(0..16) as f64 * 0.25,
                PartitionId(rng.random_range(0..n_parts)),
            );
            if !keys.contains(&key) {
                keys.push(key);
            }
            guard += 1;
            if guard > 200 {
                break;
            }
        }
        if keys.len() < 2 {
            continue;
        }

        // Symmetric Dirichlet over all (key, label) cells via normalized
        // exponentials, quantized to the grid.
        let cells = keys.len() * 2;
        let raw: Vec<f64> = (0..cells)
            .map(|_| -(1.0 - rng.random::<f64>()).ln())
            .collect();
        let total: f64 = raw.iter().sum();
        let mut grid: Vec<u64> = raw
            .iter()
            .map(|r| ((r / total) * MASS_GRID as f64).floor() as u64)
            .collect();
        let assigned: u64 = grid.iter().sum();
        // Distribute the remainder by largest fractional part, index order
        // breaking ties.
        let mut frac: Vec<(usize, f64)> = raw
            .iter()
            .enumerate()
            .map(|(i, r)| (i, (r / total) * MASS_GRID as f64 - grid[i] as f64))
            .collect();
        frac.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        for k in 0..(MASS_GRID - assigned) as usize {
            grid[frac[k % frac.len()].0] += 1;
        }

        let mut atoms = Vec::new();
        let mut label_mass = [0u64; 2];
        for (c, w) in grid.iter().enumerate() {
            if *w == 0 {
                continue;
            }
            let key = keys[c / 2];
            let label = (c % 2) as u8;
            label_mass[label as usize] += w;
            atoms.push(Atom {
                score: key.0,
                partition: key.1,
                label,
                mass: *w as f64 / MASS_GRID as f64,
            });
        }
        if label_mass[0] == 0 || label_mass[1] == 0 {
            continue;
        }
        let dist = DiscreteDistribution::new(atoms).expect("grid masses sum to one");
        if dist.support_keys().len() >= 2 {
            return dist;
        }
    }
}

/// A random partition-aware table transform over the instance support, with
/// deliberate value ties.
pub fn random_transform(dist: &DiscreteDistribution, seed: u64) -> Transform {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let keys = dist.support_keys();
    let levels = keys.len() + 2;
    let entries = keys
        .iter()
        .map(|&(score, partition)| TableEntry {
            score,
            partition,
            value: rng.random_range(0..levels) as f64,
        })
        .collect();
    Transform::table(entries, 0.0)
}

fn perturbed_posterior(dist: &DiscreteDistribution, rng: &mut ChaCha12Rng) -> Transform {
    let entries = dist
        .support_keys()
        .iter()
        .map(|&(score, partition)| {
            let (m0, m1) = dist.key_masses(score, partition);
            let base = if m0 + m1 > 0.0 { m1 / (m0 + m1) } else { 0.0 };
            TableEntry {
                score,
                partition,
                value: (base + rng.random_range(-0.25..0.25)).clamp(0.0, 1.0),
            }
        })
        .collect();
    Transform::table(entries, 0.0)
}

/// Scale of one verify run. `trials` is the base count: the ordering and
/// refinement checks run 10x as many instances, matching their cheapness.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct VerifyConfig {
    pub seed: u64,
    pub trials: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            trials: 1000,
        }
    }
}

/// Outcome of one property over all its instances.
#[derive(Debug, Clone, Serialize)]
pub struct PropertyResult {
    pub name: String,
    pub trials: u64,
    pub failures: u64,
    pub counterexample: Option<serde_json::Value>,
}

/// Pass/fail report of the full property suite.
#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub trials: u64,
    pub all_passed: bool,
    pub properties: Vec<PropertyResult>,
}

fn stream(seed: u64, property: u64, trial: u64) -> u64 {
    // splitmix-style stream separation.
    let mut z = seed
        .wrapping_add(property.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(trial.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn collect_property<F>(name: &str, trials: u64, check: F) -> PropertyResult
where
    F: Fn(u64) -> Option<serde_json::Value> + Sync,
{
    let outcomes = par_map(trials as usize, |t| check(t as u64));
    let failures = outcomes.iter().filter(|o| o.is_some()).count() as u64;
    let counterexample = outcomes.into_iter().flatten().next();
    PropertyResult {
        name: name.to_string(),
        trials,
        failures,
        counterexample,
    }
}

fn instance_json(dist: &DiscreteDistribution, detail: serde_json::Value) -> serde_json::Value {
    serde_json::json!({ "instance": dist, "detail": detail })
}

/// Runs the full property suite at the standard tie convention.
pub fn run_verify(cfg: VerifyConfig) -> VerifyReport {
    run_verify_with_tie_weight(cfg, 0.5)
}

/// Test hook: runs the suite with a non-standard brute-force tie weight so
/// harness self-tests can watch a deliberately broken build fail.
#[doc(hidden)]
pub fn run_verify_with_tie_weight(cfg: VerifyConfig, tie_weight: f64) -> VerifyReport {
    let seed = cfg.seed;
    let mut properties = Vec::new();

    // The posterior transform attains the brute-force AUC maximum.
    properties.push(collect_property(
        "posterior_attains_brute_force_max",
        cfg.trials,
        |t| {
            let dist = random_instance(stream(seed, 1, t));
            let bf = brute_force_max_auc_with_tie_weight(&dist, tie_weight).unwrap();
            let star = partition_calibrated_auc(&dist, &optimal_transform(&dist)).unwrap();
            if (bf.max_auc - star).abs() > 1e-12 {
                Some(instance_json(
                    &dist,
                    serde_json::json!({
                        "brute_force_max": bf.max_auc,
                        "optimal_transform_auc": star,
                        "witness": bf.witness,
                    }),
                ))
            } else {
                None
            }
        },
    ));

    // Likelihood-ratio order equals posterior order on every key pair.
    properties.push(collect_property(
        "likelihood_posterior_order_equivalence",
        cfg.trials * 10,
        |t| {
            let dist = random_instance(stream(seed, 2, t));
            if check_ordering_equivalence(&dist) {
                None
            } else {
                Some(instance_json(&dist, serde_json::json!({})))
            }
        },
    ));

    // Trapezoid area of the swept ROC equals calibrated AUC.
    properties.push(collect_property("roc_area_equals_auc", cfg.trials, |t| {
        let dist = random_instance(stream(seed, 3, t));
        let tr = random_transform(&dist, stream(seed, 30, t));
        let area = roc_curve(&dist, &tr).unwrap().area();
        let auc_v = calibrated_auc(&dist, &tr).unwrap();
        if (area - auc_v).abs() > 1e-12 {
            Some(instance_json(
                &dist,
                serde_json::json!({ "area": area, "auc": auc_v }),
            ))
        } else {
            None
        }
    }));

    // The posterior transform's ROC curve contains every other curve, and
    // its PR-AUC is maximal.
    properties.push(collect_property(
        "posterior_roc_containment",
        cfg.trials,
        |t| {
            let dist = random_instance(stream(seed, 4, t));
            let tr = random_transform(&dist, stream(seed, 40, t));
            let star = optimal_transform(&dist);
            let curve_star = roc_curve(&dist, &star).unwrap();
            let curve_t = roc_curve(&dist, &tr).unwrap();
            let mut grid: Vec<f64> = curve_star
                .points
                .iter()
                .chain(curve_t.points.iter())
                .map(|(x, _)| *x)
                .collect();
            grid.sort_by(f64::total_cmp);
            grid.dedup();
            for x in &grid {
                if curve_star.tpr_at(*x) < curve_t.tpr_at(*x) - 1e-12 {
                    return Some(instance_json(
                        &dist,
                        serde_json::json!({
                            "fpr": x,
                            "tpr_star": curve_star.tpr_at(*x),
                            "tpr_other": curve_t.tpr_at(*x),
                        }),
                    ));
                }
            }
            let pr_star = pr_auc(&dist, &star).unwrap();
            let pr_other = pr_auc(&dist, &tr).unwrap();
            if pr_star < pr_other - 1e-12 {
                return Some(instance_json(
                    &dist,
                    serde_json::json!({ "pr_star": pr_star, "pr_other": pr_other }),
                ));
            }
            None
        },
    ));

    // The posterior transform minimizes the generalized
    // log-loss against random perturbations.
    properties.push(collect_property(
        "posterior_log_loss_optimality",
        cfg.trials,
        |t| {
            let dist = random_instance(stream(seed, 5, t));
            let star = optimal_transform(&dist);
            let best = log_loss(&dist, &star);
            let mut rng = ChaCha12Rng::seed_from_u64(stream(seed, 50, t));
            for _ in 0..100 {
                let other = log_loss(&dist, &perturbed_posterior(&dist, &mut rng));
                if best > other + 1e-12 {
                    return Some(instance_json(
                        &dist,
                        serde_json::json!({ "best": best, "other": other }),
                    ));
                }
            }
            None
        },
    ));

    // Refinement monotonicity over random coarse maps.
    properties.push(collect_property(
        "refinement_monotonicity",
        cfg.trials * 10,
        |t| {
            let dist = random_instance(stream(seed, 6, t));
            let mut rng = ChaCha12Rng::seed_from_u64(stream(seed, 60, t));
            let max_fine = dist
                .atoms()
                .iter()
                .map(|a| a.partition.0)
                .max()
                .unwrap_or(0);
            let n_coarse = rng.random_range(1..=max_fine + 1);
            let map: Vec<u32> = (0..=max_fine)
                .map(|_| rng.random_range(0..n_coarse))
                .collect();
            match check_refinement_monotonicity(&dist, &map) {
                Ok(true) => None,
                Ok(false) => Some(instance_json(&dist, serde_json::json!({ "map": map }))),
                Err(e) => Some(instance_json(
                    &dist,
                    serde_json::json!({ "error": e.to_string() }),
                )),
            }
        },
    ));

    // Directional comparison terms of any pair sum to exactly one.
    properties.push(collect_property(
        "pair_term_partition_of_unity",
        cfg.trials,
        |t| {
            let mut rng = ChaCha12Rng::seed_from_u64(stream(seed, 7, t));
            let a = rng.random_range(0..8) as f64 * 0.5;
            let b = rng.random_range(0..8) as f64 * 0.5;
            let sum = crate::metrics::pair_term(a, b) + crate::metrics::pair_term(b, a);
            if sum == 1.0 {
                None
            } else {
                Some(serde_json::json!({ "a": a, "b": b, "sum": sum }))
            }
        },
    ));

    let all_passed = properties.iter().all(|p| p.failures == 0);
    VerifyReport {
        seed,
        trials: cfg.trials,
        all_passed,
        properties,
    }
}
