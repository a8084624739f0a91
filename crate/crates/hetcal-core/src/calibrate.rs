//! Per-partition score transforms: Platt scaling, isotonic regression,
//! histogram binning, explicit tables, and the composition/dispatch algebra
//! they share.
//!
//! Platt scaling operates on logit-scale scores (pre-sigmoid), and composed
//! transforms chain in logit space so that two Platt stages combine to
//! sigma(a2 (a1 s + b1) + b2).

use serde::{Deserialize, Serialize};

use crate::data::PartitionId;
use crate::error::{HetcalError, Result};
use crate::numeric::{logit, sigmoid};

/// Default ridge strength for Platt fitting.
pub const DEFAULT_RIDGE: f64 = 1e-6;
/// Hard cap on the magnitude of fitted Platt parameters.
pub const PLATT_PARAM_CAP: f64 = 1e3;

/// One explicit (score, partition) -> value mapping of a table transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub score: f64,
    pub partition: PartitionId,
    pub value: f64,
}

/// A score transform t(s, partition).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum Transform {
    /// Passes the score through unchanged.
    Identity,
    /// sigma(a * s + b) on logit-scale scores.
    Platt { a: f64, b: f64 },
    /// Left-constant step function through non-decreasing (score, value)
    /// breakpoints, as produced by pool-adjacent-violators.
    Isotonic { breakpoints: Vec<(f64, f64)> },
    /// Piecewise-constant over bins; `edges` are the interior cut points, so
    /// `values.len() == edges.len() + 1`.
    Histogram { edges: Vec<f64>, values: Vec<f64> },
    /// Explicit lookup over support keys; `default` covers unlisted keys.
    Table {
        entries: Vec<TableEntry>,
        default: f64,
    },
    /// Dispatches on the partition id, falling back for unlisted partitions.
    PerPartition {
        transforms: Vec<(u32, Transform)>,
        fallback: Box<Transform>,
    },
    /// Applies `inner`, maps its output to logit scale, then applies `outer`.
    Composed {
        outer: Box<Transform>,
        inner: Box<Transform>,
    },
}

impl Transform {
    /// Evaluates the transform at one (score, partition) point.
    pub fn apply(&self, score: f64, partition: PartitionId) -> f64 {
        match self {
            Transform::Identity => score,
            Transform::Platt { a, b } => sigmoid(a * score + b),
            Transform::Isotonic { breakpoints } => {
                if breakpoints.is_empty() {
                    return 0.0;
                }
                // Last breakpoint with bp score <= score, else the first value.
                let idx = breakpoints.partition_point(|(s, _)| *s <= score);
                if idx == 0 {
                    breakpoints[0].1
                } else {
                    breakpoints[idx - 1].1
                }
            }
            Transform::Histogram { edges, values } => {
                let idx = edges.partition_point(|e| *e < score);
                values[idx]
            }
            Transform::Table { entries, default } => {
                match entries.binary_search_by(|e| {
                    e.partition.cmp(&partition).then(e.score.total_cmp(&score))
                }) {
                    Ok(i) => entries[i].value,
                    Err(_) => *default,
                }
            }
            Transform::PerPartition {
                transforms,
                fallback,
            } => match transforms.binary_search_by_key(&partition.0, |(id, _)| *id) {
                Ok(i) => transforms[i].1.apply(score, partition),
                Err(_) => fallback.apply(score, partition),
            },
            Transform::Composed { outer, inner } => {
                let p = inner.apply(score, partition);
                outer.apply(logit(p), partition)
            }
        }
    }

    /// Builds a table transform; entries are canonically sorted for lookup.
    pub fn table(mut entries: Vec<TableEntry>, default: f64) -> Self {
        entries.sort_by(|a, b| {
            a.partition
                .cmp(&b.partition)
                .then(a.score.total_cmp(&b.score))
        });
        Transform::Table { entries, default }
    }

    /// Builds a per-partition dispatch transform.
    pub fn per_partition(mut transforms: Vec<(u32, Transform)>, fallback: Transform) -> Self {
        transforms.sort_by_key(|(id, _)| *id);
        Transform::PerPartition {
            transforms,
            fallback: Box::new(fallback),
        }
    }

    /// Structural invariants: isotonic monotonicity, histogram edge order and
    /// value range. Used when accepting transforms from serialized models.
    pub fn validate(&self) -> Result<()> {
        match self {
            Transform::Isotonic { breakpoints } => {
                for w in breakpoints.windows(2) {
                    if w[1].0 <= w[0].0 {
                        return Err(HetcalError::InvalidConfig(
                            "isotonic breakpoint scores must be strictly increasing".into(),
                        ));
                    }
                    if w[1].1 < w[0].1 {
                        return Err(HetcalError::InvalidConfig(
                            "isotonic values must be non-decreasing".into(),
                        ));
                    }
                }
                Ok(())
            }
            Transform::Histogram { edges, values } => {
                if values.len() != edges.len() + 1 {
                    return Err(HetcalError::InvalidConfig(
                        "histogram needs edges.len() + 1 values".into(),
                    ));
                }
                if edges.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(HetcalError::InvalidConfig(
                        "histogram edges must be strictly increasing".into(),
                    ));
                }
                if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(HetcalError::InvalidConfig(
                        "histogram values must lie in [0,1]".into(),
                    ));
                }
                Ok(())
            }
            Transform::PerPartition {
                transforms,
                fallback,
            } => {
                for (_, t) in transforms {
                    t.validate()?;
                }
                fallback.validate()
            }
            Transform::Composed { outer, inner } => {
                outer.validate()?;
                inner.validate()
            }
            _ => Ok(()),
        }
    }
}

/// Fits Platt scaling by Newton iterations on the mean L2-regularized
/// logistic loss. Deterministic; converged when the gradient norm drops
/// below 1e-10 or after 100 iterations. Parameters are capped at 1e3 in
/// magnitude so perfectly separable inputs stay finite.
pub fn fit_platt(scores: &[f64], labels: &[u8], ridge: f64) -> Result<Transform> {
    if scores.len() < 2 {
        return Err(HetcalError::EmptyInput("platt fit (needs >= 2 examples)"));
    }
    assert_eq!(scores.len(), labels.len());
    let n = scores.len() as f64;
    let mut a = 0.0f64;
    let mut b = 0.0f64;
    for _ in 0..100 {
        let mut g_a = ridge * a;
        let mut g_b = ridge * b;
        let mut h_aa = ridge;
        let mut h_ab = 0.0;
        let mut h_bb = ridge;
        for (s, y) in scores.iter().zip(labels) {
            let p = sigmoid(a * s + b);
            let r = (p - *y as f64) / n;
            let w = (p * (1.0 - p)).max(1e-16) / n;
            g_a += r * s;
            g_b += r;
            h_aa += w * s * s;
            h_ab += w * s;
            h_bb += w;
        }
        if (g_a * g_a + g_b * g_b).sqrt() < 1e-10 {
            break;
        }
        let det = h_aa * h_bb - h_ab * h_ab;
        if det.abs() < 1e-300 {
            break;
        }
        let da = (g_a * h_bb - g_b * h_ab) / det;
        let db = (g_b * h_aa - g_a * h_ab) / det;
        a = (a - da).clamp(-PLATT_PARAM_CAP, PLATT_PARAM_CAP);
        b = (b - db).clamp(-PLATT_PARAM_CAP, PLATT_PARAM_CAP);
    }
    Ok(Transform::Platt { a, b })
}

/// Least-squares monotone fit via pool-adjacent-violators. Scores with
/// duplicates collapse to weighted means first; the result is a step
/// function mapping score to a probability in \[0,1\].
pub fn fit_isotonic(scores: &[f64], labels: &[u8]) -> Result<Transform> {
    if scores.is_empty() {
        return Err(HetcalError::EmptyInput("isotonic fit"));
    }
    assert_eq!(scores.len(), labels.len());
    let mut pairs: Vec<(f64, f64)> = scores
        .iter()
        .zip(labels)
        .map(|(s, y)| (*s, *y as f64))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Collapse duplicate scores to their mean label.
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut ws: Vec<f64> = Vec::new();
    let mut i = 0;
    while i < pairs.len() {
        let x = pairs[i].0;
        let mut sum = 0.0;
        let mut count = 0.0;
        while i < pairs.len() && pairs[i].0 == x {
            sum += pairs[i].1;
            count += 1.0;
            i += 1;
        }
        xs.push(x);
        ys.push(sum / count);
        ws.push(count);
    }

    // PAV: merge adjacent blocks while the monotone constraint is violated.
    let mut level: Vec<f64> = Vec::with_capacity(ys.len());
    let mut weight: Vec<f64> = Vec::with_capacity(ys.len());
    let mut span: Vec<usize> = Vec::with_capacity(ys.len());
    for (y, w) in ys.iter().zip(&ws) {
        level.push(*y);
        weight.push(*w);
        span.push(1);
        while level.len() > 1 && level[level.len() - 2] > level[level.len() - 1] {
            let (l1, w1, s1) = (
                level.pop().unwrap(),
                weight.pop().unwrap(),
                span.pop().unwrap(),
            );
            let k = level.len() - 1;
            let merged_w = weight[k] + w1;
            level[k] = (level[k] * weight[k] + l1 * w1) / merged_w;
            weight[k] = merged_w;
            span[k] += s1;
        }
    }

    let mut breakpoints = Vec::with_capacity(xs.len());
    let mut pos = 0;
    for (lev, sp) in level.iter().zip(&span) {
        for _ in 0..*sp {
            breakpoints.push((xs[pos], *lev));
            pos += 1;
        }
    }
    Ok(Transform::Isotonic { breakpoints })
}

/// Equal-frequency histogram binning: interior edges are midpoints between
/// the order statistics at the bin cuts, and each bin value is the label
/// mean inside it. Bins left empty by duplicate cut points inherit the value
/// of the nearer non-empty neighbor.
pub fn fit_histogram(scores: &[f64], labels: &[u8], bins: usize) -> Result<Transform> {
    if scores.is_empty() {
        return Err(HetcalError::EmptyInput("histogram fit"));
    }
    if bins == 0 {
        return Err(HetcalError::InvalidConfig("bins must be >= 1".into()));
    }
    assert_eq!(scores.len(), labels.len());
    let n = scores.len();
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);

    let mut edges: Vec<f64> = Vec::new();
    for k in 1..bins {
        let cut = (k * n) / bins;
        if cut == 0 || cut >= n {
            continue;
        }
        let lo = sorted[cut - 1];
        let hi = sorted[cut];
        if hi > lo {
            let edge = 0.5 * (lo + hi);
            if edges.last().is_none_or(|e| edge > *e) {
                edges.push(edge);
            }
        }
    }

    let nb = edges.len() + 1;
    let mut sums = vec![0.0f64; nb];
    let mut counts = vec![0usize; nb];
    for (s, y) in scores.iter().zip(labels) {
        let idx = edges.partition_point(|e| *e < *s);
        sums[idx] += *y as f64;
        counts[idx] += 1;
    }
    let mut values: Vec<Option<f64>> = sums
        .iter()
        .zip(&counts)
        .map(|(s, c)| if *c > 0 { Some(s / *c as f64) } else { None })
        .collect();
    // Empty bins inherit the nearer filled neighbor (left on ties).
    for i in 0..nb {
        if values[i].is_none() {
            let left = (0..i).rev().find(|j| values[*j].is_some());
            let right = (i + 1..nb).find(|j| values[*j].is_some());
            values[i] = match (left, right) {
                (Some(l), Some(r)) => {
                    if i - l <= r - i {
                        values[l]
                    } else {
                        values[r]
                    }
                }
                (Some(l), None) => values[l],
                (None, Some(r)) => values[r],
                (None, None) => Some(0.0),
            };
        }
    }
    Ok(Transform::Histogram {
        edges,
        values: values.into_iter().map(|v| v.unwrap()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    const P0: PartitionId = PartitionId(0);

    #[test]
    fn apply_basic_variants() {
        assert_eq!(Transform::Identity.apply(0.3, P0), 0.3);
        assert_eq!(Transform::Platt { a: 1.0, b: 0.0 }.apply(0.0, P0), 0.5);
        let composed = Transform::Composed {
            outer: Box::new(Transform::Platt { a: 1.0, b: 0.0 }),
            inner: Box::new(Transform::Platt { a: 2.0, b: 1.0 }),
        };
        let got = composed.apply(0.0, P0);
        assert!((got - sigmoid(1.0)).abs() < 1e-12, "got {got}");
    }

    #[test]
    fn platt_identity_pair_reproduces_sigmoid_exactly() {
        let t = Transform::Platt { a: 1.0, b: 0.0 };
        for s in [-5.0, -0.25, 0.0, 1.0, 17.5] {
            assert_eq!(t.apply(s, P0), sigmoid(s));
        }
    }

    #[test]
    fn platt_constant_pair_outputs_leaf_rate() {
        for p in [0.1, 0.25, 0.5, 2.0 / 3.0, 0.9] {
            let t = Transform::Platt {
                a: 0.0,
                b: logit(p),
            };
            let out = t.apply(123.0, P0);
            assert!((out - p).abs() < 1e-14, "p={p} out={out}");
        }
    }

    #[test]
    fn isotonic_monotone_input_passes_through() {
        let t = fit_isotonic(&[0.0, 1.0, 2.0, 3.0], &[0, 0, 1, 1]).unwrap();
        match &t {
            Transform::Isotonic { breakpoints } => {
                let vals: Vec<f64> = breakpoints.iter().map(|b| b.1).collect();
                assert_eq!(vals, vec![0.0, 0.0, 1.0, 1.0]);
            }
            _ => panic!("expected isotonic"),
        }
    }

    #[test]
    fn isotonic_pools_single_violation() {
        let t = fit_isotonic(&[0.0, 1.0], &[1, 0]).unwrap();
        assert_eq!(t.apply(0.0, P0), 0.5);
        assert_eq!(t.apply(1.0, P0), 0.5);
        assert_eq!(t.apply(0.5, P0), 0.5);
    }

    #[test]
    fn isotonic_constant_scores_single_level() {
        let t = fit_isotonic(&[2.0, 2.0, 2.0, 2.0], &[1, 0, 1, 1]).unwrap();
        assert_eq!(t.apply(2.0, P0), 0.75);
        assert_eq!(t.apply(-10.0, P0), 0.75);
    }

    /// Independent monotone least-squares fit via the minimax formula
    /// v_i = max_{j<=i} min_{k>=i} mean(y[j..=k]).
    fn isotonic_minimax(ys: &[f64]) -> Vec<f64> {
        let n = ys.len();
        let prefix: Vec<f64> = std::iter::once(0.0)
            .chain(ys.iter().scan(0.0, |acc, y| {
                *acc += y;
                Some(*acc)
            }))
            .collect();
        let mean = |j: usize, k: usize| (prefix[k + 1] - prefix[j]) / (k + 1 - j) as f64;
        (0..n)
            .map(|i| {
                (0..=i)
                    .map(|j| (i..n).map(|k| mean(j, k)).fold(f64::INFINITY, f64::min))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect()
    }

    #[test]
    fn pav_matches_minimax_oracle_on_random_inputs() {
        let mut rng = ChaCha12Rng::seed_from_u64(41);
        for trial in 0..200 {
            let n = rng.random_range(1..=30);
            let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2) as u8).collect();
            let scores: Vec<f64> = (0..n).map(|i| i as f64).collect();
            let t = fit_isotonic(&scores, &labels).unwrap();
            let expect = isotonic_minimax(&labels.iter().map(|y| *y as f64).collect::<Vec<_>>());
            for (i, e) in expect.iter().enumerate() {
                let got = t.apply(i as f64, P0);
                assert!(
                    (got - e).abs() < 1e-10,
                    "trial {trial} i={i}: pav {got} vs oracle {e}"
                );
            }
        }
    }

    #[test]
    fn isotonic_output_nondecreasing_property() {
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        for _ in 0..100 {
            let n = rng.random_range(2..200);
            let scores: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2) as u8).collect();
            let t = fit_isotonic(&scores, &labels).unwrap();
            let mut grid: Vec<f64> = scores.clone();
            grid.sort_by(f64::total_cmp);
            let mut prev = f64::NEG_INFINITY;
            for s in grid {
                let v = t.apply(s, P0);
                assert!(v >= prev - 1e-15);
                assert!((0.0..=1.0).contains(&v));
                prev = v;
            }
        }
    }

    #[test]
    fn histogram_one_bin_is_global_rate() {
        let t = fit_histogram(&[0.0, 1.0, 2.0, 3.0], &[0, 1, 1, 1], 1).unwrap();
        assert_eq!(t.apply(-100.0, P0), 0.75);
        assert_eq!(t.apply(100.0, P0), 0.75);
    }

    #[test]
    fn histogram_two_bins_separated() {
        let t = fit_histogram(&[0.0, 0.1, 0.9, 1.0], &[0, 0, 1, 1], 2).unwrap();
        assert_eq!(t.apply(0.05, P0), 0.0);
        assert_eq!(t.apply(0.95, P0), 1.0);
    }

    #[test]
    fn histogram_tracks_linear_rate() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let n = 10_000;
        let mut scores = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let s: f64 = rng.random_range(0.0..1.0);
            let y = u8::from(rng.random_range(0.0..1.0) < s);
            scores.push(s);
            labels.push(y);
        }
        let t = fit_histogram(&scores, &labels, 10).unwrap();
        for k in 0..10 {
            let mid = (k as f64 + 0.5) / 10.0;
            let v = t.apply(mid, P0);
            assert!((v - mid).abs() < 0.05, "bin {k}: {v} vs {mid}");
        }
    }

    #[test]
    fn platt_no_signal_stays_near_zero() {
        let scores: Vec<f64> = (0..2000).map(|i| (i as f64 / 1000.0) - 1.0).collect();
        let labels: Vec<u8> = (0..2000).map(|i| (i % 2) as u8).collect();
        let t = fit_platt(&scores, &labels, DEFAULT_RIDGE).unwrap();
        match t {
            Transform::Platt { a, b } => {
                assert!(a.abs() < 0.05, "a={a}");
                assert!(b.abs() < 0.05, "b={b}");
            }
            _ => panic!("expected platt"),
        }
    }

    #[test]
    fn platt_generate_and_refit_recovers_slope() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let n = 10_000;
        let mut scores = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let s: f64 = rng.random_range(-2.0..2.0);
            let y = u8::from(rng.random_range(0.0..1.0) < sigmoid(2.0 * s));
            scores.push(s);
            labels.push(y);
        }
        let t = fit_platt(&scores, &labels, DEFAULT_RIDGE).unwrap();
        match t {
            Transform::Platt { a, b } => {
                assert!((1.8..=2.2).contains(&a), "a={a}");
                assert!((-0.1..=0.1).contains(&b), "b={b}");
            }
            _ => panic!("expected platt"),
        }
    }

    #[test]
    fn platt_single_label_stays_finite() {
        let scores = vec![-1.0, 0.0, 1.0, 2.0];
        let labels = vec![1, 1, 1, 1];
        let t = fit_platt(&scores, &labels, 1e-3).unwrap();
        match &t {
            Transform::Platt { a, b } => {
                assert!(a.is_finite() && b.is_finite());
                assert!(a.abs() <= PLATT_PARAM_CAP && b.abs() <= PLATT_PARAM_CAP);
            }
            _ => panic!("expected platt"),
        }
        for s in [-5.0, 0.0, 5.0] {
            assert!(t.apply(s, P0) > 0.5, "s={s}");
        }
    }

    #[test]
    fn platt_invariant_under_duplication() {
        let scores: Vec<f64> = (0..500).map(|i| (i as f64) / 100.0 - 2.5).collect();
        let labels: Vec<u8> = scores.iter().map(|s| u8::from(*s > 0.3)).collect();
        let t1 = fit_platt(&scores, &labels, DEFAULT_RIDGE).unwrap();
        let doubled_scores: Vec<f64> = scores.iter().chain(&scores).copied().collect();
        let doubled_labels: Vec<u8> = labels.iter().chain(&labels).copied().collect();
        let t2 = fit_platt(&doubled_scores, &doubled_labels, DEFAULT_RIDGE).unwrap();
        match (t1, t2) {
            (Transform::Platt { a: a1, b: b1 }, Transform::Platt { a: a2, b: b2 }) => {
                assert!((a1 - a2).abs() < 1e-8, "{a1} vs {a2}");
                assert!((b1 - b2).abs() < 1e-8, "{b1} vs {b2}");
            }
            _ => panic!("expected platt"),
        }
    }

    #[test]
    fn platt_outputs_open_interval() {
        // Open-interval outputs hold while a*s + b stays within the range
        // where exp is resolvable against 1 (|z| < ~36); beyond that the
        // sigmoid saturates to an endpoint in f64.
        let t = Transform::Platt { a: 3.0, b: 0.5 };
        assert!(t.apply(10.0, P0) < 1.0);
        assert!(t.apply(-10.0, P0) > 0.0);
    }

    #[test]
    fn table_lookup_and_default() {
        let t = Transform::table(
            vec![
                TableEntry {
                    score: 1.0,
                    partition: P0,
                    value: 0.7,
                },
                TableEntry {
                    score: -1.0,
                    partition: PartitionId(1),
                    value: 0.2,
                },
            ],
            0.0,
        );
        assert_eq!(t.apply(1.0, P0), 0.7);
        assert_eq!(t.apply(-1.0, PartitionId(1)), 0.2);
        assert_eq!(t.apply(2.0, P0), 0.0);
    }

    #[test]
    fn per_partition_dispatch_and_fallback() {
        let t = Transform::per_partition(
            vec![(0, Transform::Platt { a: 1.0, b: 0.0 })],
            Transform::Platt {
                a: 0.0,
                b: logit(0.25),
            },
        );
        assert_eq!(t.apply(0.0, P0), 0.5);
        let fb = t.apply(0.0, PartitionId(9));
        assert!((fb - 0.25).abs() < 1e-14);
    }

    #[test]
    fn transform_json_roundtrip() {
        let t = Transform::per_partition(
            vec![
                (0, Transform::Platt { a: 1.5, b: -0.25 }),
                (
                    2,
                    Transform::Isotonic {
                        breakpoints: vec![(0.0, 0.1), (1.0, 0.9)],
                    },
                ),
            ],
            Transform::Histogram {
                edges: vec![0.5],
                values: vec![0.25, 0.75],
            },
        );
        let json = serde_json::to_string(&t).unwrap();
        assert!(json.contains("\"variant\""));
        let back: Transform = serde_json::from_str(&json).unwrap();
        assert_eq!(t, back);
        back.validate().unwrap();
    }
}
