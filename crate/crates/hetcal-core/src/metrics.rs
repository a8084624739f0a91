//! Exact binary-classification metrics over discrete distributions and
//! empirical datasets: AUC with the half-tie convention, calibrated and
//! partition-calibrated AUC, ROC curves with (T, q) thresholds, exact PR-AUC
//! integration, generalized log-loss, and expected calibration error.

use serde::{Deserialize, Serialize};

use crate::calibrate::Transform;
use crate::data::{Dataset, DiscreteDistribution};
use crate::error::{HetcalError, Result};

/// A transform-output threshold T together with the tie-mass fraction
/// q in \[0,1\] that makes TPR/FPR invertible on discrete distributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocThreshold {
    pub t: f64,
    pub q: f64,
}

impl RocThreshold {
    pub fn new(t: f64, q: f64) -> Self {
        assert!((0.0..=1.0).contains(&q), "q must lie in [0,1], got {q}");
        Self { t, q }
    }
}

/// An ROC step curve: (fpr, tpr) points from (0,0) to (1,1), both
/// coordinates non-decreasing along the sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<(f64, f64)>,
}

impl RocCurve {
    /// Trapezoid area under the curve.
    pub fn area(&self) -> f64 {
        let mut area = 0.0;
        for w in self.points.windows(2) {
            let (x0, y0) = w[0];
            let (x1, y1) = w[1];
            area += (x1 - x0) * (y0 + y1) * 0.5;
        }
        area
    }

    /// TPR at a given FPR, resolving positions between vertices through the
    /// tie parameter q (linear interpolation along the tie segment).
    pub fn tpr_at(&self, fpr: f64) -> f64 {
        let pts = &self.points;
        if fpr <= 0.0 {
            // Highest TPR available at FPR exactly 0.
            return pts
                .iter()
                .take_while(|(x, _)| *x <= 0.0)
                .map(|(_, y)| *y)
                .fold(0.0, f64::max);
        }
        for w in pts.windows(2) {
            let (x0, y0) = w[0];
            let (x1, y1) = w[1];
            if fpr <= x1 {
                if x1 == x0 {
                    return y1.max(y0);
                }
                if fpr >= x0 {
                    let q = (fpr - x0) / (x1 - x0);
                    return y0 + q * (y1 - y0);
                }
            }
        }
        1.0
    }
}

/// The directional comparison term of a score pair: 1 if `a > b`, 1/2 on a
/// tie, otherwise 0. For any pair, `pair_term(a,b) + pair_term(b,a) == 1`.
#[inline]
pub fn pair_term(a: f64, b: f64) -> f64 {
    if a > b {
        1.0
    } else if a == b {
        0.5
    } else {
        0.0
    }
}

/// Atoms grouped by transformed value, in ascending value order.
struct ValueGroup {
    value: f64,
    m0: f64,
    m1: f64,
}

fn group_by_value(dist: &DiscreteDistribution, t: &Transform) -> Vec<ValueGroup> {
    let mut entries: Vec<(f64, u8, f64)> = dist
        .atoms()
        .iter()
        .map(|a| (t.apply(a.score, a.partition), a.label, a.mass))
        .collect();
    // Stable sort keeps the canonical atom order inside every tie group, so
    // accumulation order (and hence rounding) is reproducible.
    entries.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut groups: Vec<ValueGroup> = Vec::new();
    for (value, label, mass) in entries {
        if groups
            .last()
            .is_none_or(|g| g.value.to_bits() != value.to_bits())
        {
            groups.push(ValueGroup {
                value,
                m0: 0.0,
                m1: 0.0,
            });
        }
        let g = groups.last_mut().unwrap();
        if label == 0 {
            g.m0 += mass;
        } else {
            g.m1 += mass;
        }
    }
    groups
}

fn label_totals(dist: &DiscreteDistribution) -> Result<(f64, f64)> {
    let t0 = dist.label_mass(0);
    let t1 = dist.label_mass(1);
    if t0 == 0.0 {
        return Err(HetcalError::SingleLabel(0));
    }
    if t1 == 0.0 {
        return Err(HetcalError::SingleLabel(1));
    }
    Ok((t0, t1))
}

/// Partition-calibrated AUC: the probability that a random label-1 atom's
/// transformed value exceeds a random label-0 atom's, ties counted half,
/// where the transform may depend on the partition.
pub fn partition_calibrated_auc(dist: &DiscreteDistribution, t: &Transform) -> Result<f64> {
    let (t0, t1) = label_totals(dist)?;
    let mut num = 0.0;
    let mut cum0 = 0.0;
    for g in group_by_value(dist, t) {
        num += g.m1 * cum0 + 0.5 * g.m1 * g.m0;
        cum0 += g.m0;
    }
    Ok(num / (t0 * t1))
}

/// Calibrated AUC for a partition-blind transform. Equals plain `auc` when
/// the transform is strictly increasing in the score.
pub fn calibrated_auc(dist: &DiscreteDistribution, t: &Transform) -> Result<f64> {
    partition_calibrated_auc(dist, t)
}

/// AUC of the raw scores.
pub fn auc(dist: &DiscreteDistribution) -> Result<f64> {
    partition_calibrated_auc(dist, &Transform::Identity)
}

/// Empirical AUC in O(n log n): equal-score groups are swept in ascending
/// order and cross-label tie pairs are counted analytically, matching the
/// quadratic pair-count definition exactly.
pub fn empirical_auc(data: &Dataset) -> Result<f64> {
    empirical_auc_of(&data.scores(), &data.labels())
}

/// Empirical AUC over parallel score/label slices.
pub fn empirical_auc_of(scores: &[f64], labels: &[u8]) -> Result<f64> {
    assert_eq!(scores.len(), labels.len());
    let n0 = labels.iter().filter(|y| **y == 0).count() as f64;
    let n1 = labels.iter().filter(|y| **y == 1).count() as f64;
    if n0 == 0.0 {
        return Err(HetcalError::SingleLabel(0));
    }
    if n1 == 0.0 {
        return Err(HetcalError::SingleLabel(1));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut num = 0.0;
    let mut cum0 = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let mut c0 = 0.0;
        let mut c1 = 0.0;
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 0 {
                c0 += 1.0;
            } else {
                c1 += 1.0;
            }
            i += 1;
        }
        num += c1 * cum0 + 0.5 * c1 * c0;
        cum0 += c0;
    }
    Ok(num / (n0 * n1))
}

/// Calibrated (FPR, TPR) at one (T, q) threshold: mass strictly above T plus
/// q times the mass exactly at T, conditioned per label.
pub fn roc_point(
    dist: &DiscreteDistribution,
    t: &Transform,
    th: RocThreshold,
) -> Result<(f64, f64)> {
    let (t0, t1) = label_totals(dist)?;
    let mut above0 = 0.0;
    let mut above1 = 0.0;
    let mut at0 = 0.0;
    let mut at1 = 0.0;
    for a in dist.atoms() {
        let v = t.apply(a.score, a.partition);
        let (above, at) = if a.label == 0 {
            (&mut above0, &mut at0)
        } else {
            (&mut above1, &mut at1)
        };
        if v > th.t {
            *above += a.mass;
        } else if v == th.t {
            *at += a.mass;
        }
    }
    Ok(((above0 + th.q * at0) / t0, (above1 + th.q * at1) / t1))
}

/// Full ROC step curve from sweeping every distinct transformed value as a
/// threshold with q in {0,1}. Its trapezoid area equals the calibrated AUC.
pub fn roc_curve(dist: &DiscreteDistribution, t: &Transform) -> Result<RocCurve> {
    let (t0, t1) = label_totals(dist)?;
    let groups = group_by_value(dist, t);
    let mut points = Vec::with_capacity(groups.len() + 1);
    points.push((0.0, 0.0));
    let mut cum0 = 0.0;
    let mut cum1 = 0.0;
    for g in groups.iter().rev() {
        cum0 += g.m0;
        cum1 += g.m1;
        points.push((cum0 / t0, cum1 / t1));
    }
    // The sweep exhausts both labels; pin the endpoint against rounding.
    if let Some(last) = points.last_mut() {
        *last = (1.0, 1.0);
    }
    Ok(RocCurve { points })
}

/// Calibrated PR-AUC: integral over recall x of x / (x + FPR(TPR^-1(x))),
/// evaluated exactly piecewise over the step ROC representation. Positions
/// between achievable TPR levels resolve through the tie parameter q, which
/// moves TPR and FPR linearly along each segment.
pub fn pr_auc(dist: &DiscreteDistribution, t: &Transform) -> Result<f64> {
    let curve = roc_curve(dist, t)?;
    let mut total = 0.0;
    for w in curve.points.windows(2) {
        let (x0, y0) = w[0];
        let (x1, y1) = w[1];
        let dy = y1 - y0;
        if dy <= 0.0 {
            // Pure-FPR moves occupy zero recall measure.
            continue;
        }
        let r = (x1 - x0) / dy;
        let alpha = 1.0 + r;
        let beta = x0 - r * y0;
        // Integral of x / (alpha x + beta) over [y0, y1].
        let seg = if beta.abs() < 1e-300 {
            dy / alpha
        } else {
            let anti = |x: f64| x / alpha - beta / (alpha * alpha) * (alpha * x + beta).ln();
            anti(y1) - anti(y0)
        };
        total += seg;
    }
    Ok(total)
}

/// Generalized (partition-calibrated) log-loss of a probability-valued
/// transform over the joint distribution. An impossible prediction (t = 0
/// against label-1 mass or t = 1 against label-0 mass) yields positive
/// infinity, which is a valid, worst-ranked return.
pub fn log_loss(dist: &DiscreteDistribution, t: &Transform) -> f64 {
    let mut loss = 0.0;
    for a in dist.atoms() {
        let v = t.apply(a.score, a.partition);
        debug_assert!(
            (0.0..=1.0).contains(&v),
            "transform output {v} not in [0,1]"
        );
        let term = if a.label == 1 { v.ln() } else { (1.0 - v).ln() };
        loss -= a.mass * term;
    }
    loss
}

/// Expected calibration error of a probability-valued transform: the rms gap
/// between the transform and the conditional positive rate over the support,
/// weighted by each key's mass.
pub fn expected_calibration_error(dist: &DiscreteDistribution, t: &Transform) -> f64 {
    let mut sum = 0.0;
    for (score, partition) in dist.support_keys() {
        let (m0, m1) = dist.key_masses(score, partition);
        let mass = m0 + m1;
        if mass == 0.0 {
            continue;
        }
        let posterior = m1 / mass;
        let v = t.apply(score, partition);
        sum += mass * (v - posterior) * (v - posterior);
    }
    sum.sqrt()
}

/// Mean negative log-likelihood of predicted probabilities against labels.
pub fn empirical_log_loss(preds: &[f64], labels: &[u8]) -> f64 {
    assert_eq!(preds.len(), labels.len());
    let n = preds.len() as f64;
    let mut loss = 0.0;
    for (p, y) in preds.iter().zip(labels) {
        let term = if *y == 1 { p.ln() } else { (1.0 - p).ln() };
        loss -= term;
    }
    loss / n
}

/// Binned rms calibration error of predicted probabilities: predictions fall
/// into `bins` equal-width bins on \[0,1\]; per bin the squared gap between
/// mean prediction and empirical positive rate is weighted by bin mass.
pub fn empirical_ece(preds: &[f64], labels: &[u8], bins: usize) -> f64 {
    assert_eq!(preds.len(), labels.len());
    assert!(bins >= 1);
    let n = preds.len() as f64;
    let mut sum_p = vec![0.0f64; bins];
    let mut sum_y = vec![0.0f64; bins];
    let mut count = vec![0usize; bins];
    for (p, y) in preds.iter().zip(labels) {
        let idx = ((p * bins as f64) as usize).min(bins - 1);
        sum_p[idx] += p;
        sum_y[idx] += *y as f64;
        count[idx] += 1;
    }
    let mut sq = 0.0;
    for b in 0..bins {
        if count[b] == 0 {
            continue;
        }
        let c = count[b] as f64;
        let gap = sum_p[b] / c - sum_y[b] / c;
        sq += (c / n) * gap * gap;
    }
    sq.sqrt()
}
