//! Decision-tree partitioning of the feature space: standard Gini CART and
//! an AUC-oriented split criterion that models per-label score distributions
//! as Gaussians, calibrates each side of a candidate split with a
//! closed-form Platt solve, and scores the split by the AUC of the
//! calibrated two-component mixtures.
//!
//! Routing is deterministic: a feature vector goes left iff its value at the
//! split feature is <= the threshold. Leaf ids are assigned in depth-first
//! order, so they are 0..L-1 with no gaps.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, PartitionId};
use crate::error::{HetcalError, Result};
use crate::numeric::{adaptive_simpson, logit, normal_cdf, normal_pdf};

/// Variance floor applied wherever a per-label score variance feeds the
/// Gaussian criterion.
const VAR_FLOOR: f64 = 1e-12;
/// Default offset for the two-point quadratic solve around logit(p).
pub const DEFAULT_GAUSSIAN_EPS: f64 = 0.1;

/// Split quality criterion for tree growth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitCriterion {
    Gini,
    AucGaussian,
}

/// Tree growth configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub criterion: SplitCriterion,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Offset of the two evaluation points around logit(p) in the
    /// Gaussian-criterion Platt solve.
    pub gaussian_eps: f64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            criterion: SplitCriterion::Gini,
            max_depth: 3,
            min_samples_leaf: 1,
            gaussian_eps: DEFAULT_GAUSSIAN_EPS,
        }
    }
}

impl TreeConfig {
    fn validate(&self) -> Result<()> {
        if self.max_depth < 1 {
            return Err(HetcalError::InvalidConfig("max_depth must be >= 1".into()));
        }
        if self.min_samples_leaf < 1 {
            return Err(HetcalError::InvalidConfig(
                "min_samples_leaf must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Per-leaf training statistics: counts plus per-label score mean/variance
/// and the positive rate, as consumed by the Gaussian criterion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeafStats {
    pub n: u64,
    pub n_pos: u64,
    pub mean0: f64,
    pub var0: f64,
    pub mean1: f64,
    pub var1: f64,
    pub pos_rate: f64,
}

impl LeafStats {
    fn from_accum(acc: &LabelAccum) -> Self {
        let (mean0, var0) = acc.moments(0);
        let (mean1, var1) = acc.moments(1);
        let n = acc.count[0] + acc.count[1];
        Self {
            n,
            n_pos: acc.count[1],
            mean0,
            var0,
            mean1,
            var1,
            pos_rate: if n == 0 {
                0.0
            } else {
                acc.count[1] as f64 / n as f64
            },
        }
    }
}

/// Label/score accumulator with per-label count, sum, and sum of squares;
/// supports the incremental candidate sweep.
#[derive(Debug, Clone, Copy, Default)]
struct LabelAccum {
    count: [u64; 2],
    sum: [f64; 2],
    sum_sq: [f64; 2],
}

impl LabelAccum {
    fn add(&mut self, label: u8, score: f64) {
        let l = label as usize;
        self.count[l] += 1;
        self.sum[l] += score;
        self.sum_sq[l] += score * score;
    }

    fn sub(&self, other: &LabelAccum) -> LabelAccum {
        LabelAccum {
            count: [
                self.count[0] - other.count[0],
                self.count[1] - other.count[1],
            ],
            sum: [self.sum[0] - other.sum[0], self.sum[1] - other.sum[1]],
            sum_sq: [
                self.sum_sq[0] - other.sum_sq[0],
                self.sum_sq[1] - other.sum_sq[1],
            ],
        }
    }

    fn n(&self) -> u64 {
        self.count[0] + self.count[1]
    }

    fn moments(&self, label: usize) -> (f64, f64) {
        if self.count[label] == 0 {
            return (0.0, 0.0);
        }
        let n = self.count[label] as f64;
        let mean = self.sum[label] / n;
        let var = (self.sum_sq[label] / n - mean * mean).max(0.0);
        (mean, var)
    }
}

/// One node of a fitted partition tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Internal {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        id: PartitionId,
        stats: LeafStats,
    },
}

/// An axis-aligned decision tree whose leaves define a partition of the
/// feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionTree {
    pub nodes: Vec<Node>,
    pub n_features: usize,
    pub n_leaves: u32,
}

impl PartitionTree {
    pub fn n_leaves(&self) -> u32 {
        self.n_leaves
    }

    /// Routes a feature vector to its leaf.
    pub fn assign(&self, features: &[f64]) -> Result<PartitionId> {
        if features.len() != self.n_features {
            return Err(HetcalError::ArityMismatch {
                expected: self.n_features,
                got: features.len(),
            });
        }
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    idx = if features[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
                Node::Leaf { id, .. } => return Ok(*id),
            }
        }
    }

    /// Routes every example of a dataset.
    pub fn assign_dataset(&self, data: &Dataset) -> Result<Vec<PartitionId>> {
        data.examples()
            .iter()
            .map(|e| self.assign(&e.features))
            .collect()
    }

    /// Training statistics of one leaf.
    pub fn leaf_stats(&self, id: PartitionId) -> Option<&LeafStats> {
        self.nodes.iter().find_map(|n| match n {
            Node::Leaf { id: lid, stats } if *lid == id => Some(stats),
            _ => None,
        })
    }

    fn validate(&self) -> Result<()> {
        let leaves: Vec<u32> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                Node::Leaf { id, .. } => Some(id.0),
                _ => None,
            })
            .collect();
        let mut sorted = leaves.clone();
        sorted.sort_unstable();
        if sorted.len() as u32 != self.n_leaves
            || sorted.iter().enumerate().any(|(i, id)| i as u32 != *id)
        {
            return Err(HetcalError::Model("leaf ids are not 0..L-1".into()));
        }
        Ok(())
    }
}

/// Routes a feature vector through a tree (free-function form of
/// [`PartitionTree::assign`]).
pub fn assign(tree: &PartitionTree, features: &[f64]) -> Result<PartitionId> {
    tree.assign(features)
}

/// Counts of a node's examples: total and positives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassCounts {
    pub n: u64,
    pub n_pos: u64,
}

impl ClassCounts {
    fn gini(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        let p = self.n_pos as f64 / self.n as f64;
        2.0 * p * (1.0 - p)
    }
}

/// Gini impurity decrease of a split: Gini(parent) minus the size-weighted
/// Gini of the children. May be negative for arbitrary count triples; such
/// splits are simply never chosen.
pub fn gini_gain(parent: ClassCounts, left: ClassCounts, right: ClassCounts) -> f64 {
    assert_eq!(parent.n, left.n + right.n, "children must cover the parent");
    let wl = left.n as f64 / parent.n as f64;
    let wr = right.n as f64 / parent.n as f64;
    parent.gini() - wl * left.gini() - wr * right.gini()
}

/// Result of the closed-form Platt solve for one side of a split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlattSolve {
    pub a: f64,
    pub b: f64,
    /// True when no positive-slope root existed and the pooled-variance
    /// symmetric closed form was used instead.
    pub fallback: bool,
}

/// Solves for the linear transform a*s + b that perfectly calibrates a side
/// whose per-label scores are Gaussian with the given moments and positive
/// rate p. The calibration identity is matched exactly at the two points
/// logit(p) +- eps, giving one quadratic per point; among the root
/// combinations the pair yielding a > 0 is returned, preferring the roots
/// that stay stable as the two variances approach each other.
pub fn gaussian_platt_params(
    mu0: f64,
    sigma0: f64,
    mu1: f64,
    sigma1: f64,
    p: f64,
    eps: f64,
) -> PlattSolve {
    assert!(sigma0 > 0.0 && sigma1 > 0.0, "sigmas must be positive");
    assert!(p > 0.0 && p < 1.0, "positive rate must be in (0,1)");
    let base = logit(p);
    let s1 = base - eps;
    let s2 = base + eps;
    // g(s) = s + ln((1-p) sigma1 / (p sigma0)); the calibrated log-odds at s.
    let offset = ((1.0 - p) * sigma1 / (p * sigma0)).ln();
    let g1 = s1 + offset;
    let g2 = s2 + offset;

    // H(v) = A v^2 + B v + C with H((s - b)/a) equal to the quadratic form
    // of the two Gaussian log-densities.
    let inv0 = 1.0 / (sigma0 * sigma0);
    let inv1 = 1.0 / (sigma1 * sigma1);
    let a_coef = 0.5 * (inv0 - inv1);
    let b_coef = mu1 * inv1 - mu0 * inv0;
    let c_coef = 0.5 * (mu0 * mu0 * inv0 - mu1 * mu1 * inv1);

    // Roots of A v^2 + B v + (C - g) = 0, stable root first.
    let roots_for = |g: f64| -> Vec<f64> {
        let c = c_coef - g;
        if a_coef.abs() < 1e-14 * (b_coef.abs() + 1.0) {
            if b_coef.abs() < 1e-300 {
                return vec![];
            }
            return vec![-c / b_coef];
        }
        let disc = b_coef * b_coef - 4.0 * a_coef * c;
        if disc < 0.0 {
            return vec![];
        }
        let sq = disc.sqrt();
        let q = -0.5 * (b_coef + b_coef.signum() * sq);
        if q == 0.0 {
            // B == 0 and disc == -4AC >= 0.
            let r = (-c / a_coef).max(0.0).sqrt();
            return vec![r, -r];
        }
        vec![c / q, q / a_coef]
    };

    let r1 = roots_for(g1);
    let r2 = roots_for(g2);
    for v1 in &r1 {
        for v2 in &r2 {
            let dv = v2 - v1;
            if dv > 0.0 {
                let a = (s2 - s1) / dv;
                let b = s1 - a * v1;
                if a.is_finite() && b.is_finite() && a > 0.0 {
                    return PlattSolve {
                        a,
                        b,
                        fallback: false,
                    };
                }
            }
        }
    }

    // Pooled-variance symmetric closed form.
    let pooled = 0.5 * (sigma0 * sigma0 + sigma1 * sigma1);
    let a = (mu1 - mu0) / pooled;
    let b = base + 0.5 * (mu0 * mu0 - mu1 * mu1) / pooled;
    PlattSolve {
        a,
        b,
        fallback: true,
    }
}

/// One component of a calibrated score distribution.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Comp {
    Gauss { mu: f64, sigma: f64 },
    Point { at: f64 },
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Weighted {
    pub(crate) w: f64,
    pub(crate) comp: Comp,
}

fn survival(comps: &[Weighted], t: f64) -> f64 {
    comps
        .iter()
        .map(|c| match c.comp {
            Comp::Gauss { mu, sigma } => c.w * normal_cdf((mu - t) / sigma),
            Comp::Point { at } => {
                if at > t {
                    c.w
                } else {
                    0.0
                }
            }
        })
        .sum()
}

fn point_mass_at(comps: &[Weighted], t: f64) -> f64 {
    comps
        .iter()
        .map(|c| match c.comp {
            Comp::Point { at } if at == t => c.w,
            _ => 0.0,
        })
        .sum()
}

/// Calibrated score components of one side. A side with both labels and
/// positive variances gets the closed-form Platt transform applied to its
/// two Gaussians; a single-label or zero-variance side collapses to a point
/// mass at the logit of its positive rate (the constant-transform output).
fn side_components(stats: &LeafStats, eps: f64) -> (Comp, Comp) {
    let healthy = stats.n_pos > 0
        && stats.n_pos < stats.n
        && stats.var0 >= VAR_FLOOR
        && stats.var1 >= VAR_FLOOR;
    if healthy {
        let s0 = stats.var0.max(VAR_FLOOR).sqrt();
        let s1 = stats.var1.max(VAR_FLOOR).sqrt();
        let solve = gaussian_platt_params(stats.mean0, s0, stats.mean1, s1, stats.pos_rate, eps);
        if solve.a > 0.0 {
            return (
                Comp::Gauss {
                    mu: solve.a * stats.mean0 + solve.b,
                    sigma: solve.a * s0,
                },
                Comp::Gauss {
                    mu: solve.a * stats.mean1 + solve.b,
                    sigma: solve.a * s1,
                },
            );
        }
    }
    let at = logit(stats.pos_rate.clamp(0.0, 1.0));
    (Comp::Point { at }, Comp::Point { at })
}

/// AUC of the pooled split after calibrating each side: per-side transforms
/// come from the closed-form Platt solve, label-1 mixture weights are
/// p_l / (p_l + p_r), and the area is swept over Gaussian CDFs with adaptive
/// quadrature to absolute error 1e-6.
pub fn gaussian_calibrated_auc(left: &LeafStats, right: &LeafStats, eps: f64) -> f64 {
    let (l0, l1) = side_components(left, eps);
    let (r0, r1) = side_components(right, eps);
    let p_l = left.pos_rate;
    let p_r = right.pos_rate;
    let w1_den = p_l + p_r;
    let w0_den = (1.0 - p_l) + (1.0 - p_r);
    if w1_den == 0.0 || w0_den == 0.0 {
        return 0.5;
    }
    let pos = vec![
        Weighted {
            w: p_l / w1_den,
            comp: l1,
        },
        Weighted {
            w: p_r / w1_den,
            comp: r1,
        },
    ];
    let neg = vec![
        Weighted {
            w: (1.0 - p_l) / w0_den,
            comp: l0,
        },
        Weighted {
            w: (1.0 - p_r) / w0_den,
            comp: r0,
        },
    ];
    mixture_auc(&pos, &neg)
}

/// P(S1 > S0) + P(S1 = S0)/2 for mixtures of Gaussian and point components:
/// the continuous part of S0 integrates f0(T) * P(S1 > T) by adaptive
/// Simpson; point atoms of S0 contribute their survival and shared-atom tie
/// terms directly.
pub(crate) fn mixture_auc(pos: &[Weighted], neg: &[Weighted]) -> f64 {
    // Scale-relevant locations of every component; integrating between
    // consecutive breakpoints keeps narrow features visible to the adaptive
    // rule even when component scales differ by orders of magnitude.
    let mut marks: Vec<f64> = Vec::new();
    for c in pos.iter().chain(neg) {
        match c.comp {
            Comp::Gauss { mu, sigma } => {
                for k in [-10.0, -4.0, -1.0, 0.0, 1.0, 4.0, 10.0] {
                    marks.push(mu + k * sigma);
                }
            }
            Comp::Point { at } => marks.push(at),
        }
    }
    marks.sort_by(f64::total_cmp);
    marks.dedup();

    let mut auc = 0.0;
    for c in neg {
        match c.comp {
            Comp::Gauss { mu, sigma } => {
                let lo = mu - 10.0 * sigma;
                let hi = mu + 10.0 * sigma;
                let mut cuts: Vec<f64> = vec![lo];
                cuts.extend(marks.iter().copied().filter(|m| *m > lo && *m < hi));
                cuts.push(hi);
                let pdf = |t: f64| normal_pdf((t - mu) / sigma) / sigma;
                for w in cuts.windows(2) {
                    if w[1] > w[0] {
                        auc +=
                            c.w * adaptive_simpson(|t| pdf(t) * survival(pos, t), w[0], w[1], 1e-7);
                    }
                }
            }
            Comp::Point { at } => {
                auc += c.w * (survival(pos, at) + 0.5 * point_mass_at(pos, at));
            }
        }
    }
    auc
}

struct TreeBuilder<'a> {
    scores: &'a [f64],
    labels: &'a [u8],
    features: &'a dyn Fn(usize, usize) -> f64,
    n_features: usize,
    cfg: TreeConfig,
    nodes: Vec<Node>,
    next_leaf: u32,
    feature_rng: Option<(usize, ChaCha12Rng)>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    left_rows: Vec<usize>,
    right_rows: Vec<usize>,
}

impl<'a> TreeBuilder<'a> {
    fn accum_for(&self, rows: &[usize]) -> LabelAccum {
        let mut acc = LabelAccum::default();
        for &r in rows {
            acc.add(self.labels[r], self.scores[r]);
        }
        acc
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let acc = self.accum_for(&rows);
        let pure = acc.count[0] == 0 || acc.count[1] == 0;
        let can_split =
            depth < self.cfg.max_depth && rows.len() >= 2 * self.cfg.min_samples_leaf && !pure;
        let split = if can_split {
            self.best_split(&rows, &acc)
        } else {
            None
        };
        match split {
            Some(best) => {
                let idx = self.nodes.len();
                self.nodes.push(Node::Internal {
                    feature: best.feature,
                    threshold: best.threshold,
                    left: 0,
                    right: 0,
                });
                let left = self.grow(best.left_rows, depth + 1);
                let right = self.grow(best.right_rows, depth + 1);
                if let Node::Internal {
                    left: l, right: r, ..
                } = &mut self.nodes[idx]
                {
                    *l = left;
                    *r = right;
                }
                idx
            }
            None => {
                let id = PartitionId(self.next_leaf);
                self.next_leaf += 1;
                let idx = self.nodes.len();
                self.nodes.push(Node::Leaf {
                    id,
                    stats: LeafStats::from_accum(&acc),
                });
                idx
            }
        }
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        match &mut self.feature_rng {
            Some((m, rng)) => {
                let mut all: Vec<usize> = (0..self.n_features).collect();
                all.shuffle(rng);
                let mut chosen: Vec<usize> = all.into_iter().take(*m).collect();
                chosen.sort_unstable();
                chosen
            }
            None => (0..self.n_features).collect(),
        }
    }

    fn best_split(&mut self, rows: &[usize], node_acc: &LabelAccum) -> Option<BestSplit> {
        let min_leaf = self.cfg.min_samples_leaf;
        // Baseline the split value must beat. Gini gain is measured against
        // zero (non-negative by construction, so equal-quality splits are
        // still taken and deeper structure can be found below them, as in
        // standard CART); the Gaussian criterion is measured against the
        // node's own calibrated two-Gaussian AUC and must strictly improve.
        let node_stats = LeafStats::from_accum(node_acc);
        let baseline = match self.cfg.criterion {
            SplitCriterion::Gini => f64::NEG_INFINITY,
            SplitCriterion::AucGaussian => {
                gaussian_calibrated_auc(&node_stats, &node_stats, self.cfg.gaussian_eps)
            }
        };
        let parent = ClassCounts {
            n: node_acc.n(),
            n_pos: node_acc.count[1],
        };

        let mut best: Option<(usize, f64, f64)> = None; // (feature, threshold, value)
        for feature in self.candidate_features() {
            let mut order: Vec<usize> = rows.to_vec();
            let feat = self.features;
            order.sort_by(|&a, &b| feat(a, feature).total_cmp(&feat(b, feature)));
            let mut left = LabelAccum::default();
            for i in 0..order.len().saturating_sub(1) {
                let r = order[i];
                left.add(self.labels[r], self.scores[r]);
                let v = feat(r, feature);
                let v_next = feat(order[i + 1], feature);
                if v_next <= v {
                    continue;
                }
                let n_left = i + 1;
                let n_right = order.len() - n_left;
                if n_left < min_leaf || n_right < min_leaf {
                    continue;
                }
                let right = node_acc.sub(&left);
                let value = match self.cfg.criterion {
                    SplitCriterion::Gini => gini_gain(
                        parent,
                        ClassCounts {
                            n: left.n(),
                            n_pos: left.count[1],
                        },
                        ClassCounts {
                            n: right.n(),
                            n_pos: right.count[1],
                        },
                    ),
                    SplitCriterion::AucGaussian => gaussian_calibrated_auc(
                        &LeafStats::from_accum(&left),
                        &LeafStats::from_accum(&right),
                        self.cfg.gaussian_eps,
                    ),
                };
                if value <= baseline {
                    continue;
                }
                let threshold = 0.5 * (v + v_next);
                // Strictly-greater keeps the first (lowest feature index,
                // lowest threshold) among equal-value candidates.
                if best.is_none_or(|(_, _, bv)| value > bv) {
                    best = Some((feature, threshold, value));
                }
            }
        }

        best.map(|(feature, threshold, _)| {
            let feat = self.features;
            let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
                rows.iter().partition(|&&r| feat(r, feature) <= threshold);
            BestSplit {
                feature,
                threshold,
                left_rows,
                right_rows,
            }
        })
    }
}

fn fit_tree_impl(
    data: &Dataset,
    cfg: &TreeConfig,
    rows: Vec<usize>,
    feature_rng: Option<(usize, ChaCha12Rng)>,
) -> Result<PartitionTree> {
    cfg.validate()?;
    if data.is_empty() || rows.is_empty() {
        return Err(HetcalError::EmptyInput("training data"));
    }
    let scores = data.scores();
    let labels = data.labels();
    let examples = data.examples();
    let features = move |row: usize, f: usize| examples[row].features[f];
    let mut builder = TreeBuilder {
        scores: &scores,
        labels: &labels,
        features: &features,
        n_features: data.n_features(),
        cfg: *cfg,
        nodes: Vec::new(),
        next_leaf: 0,
        feature_rng,
    };
    builder.grow(rows, 0);
    let tree = PartitionTree {
        nodes: builder.nodes,
        n_features: data.n_features(),
        n_leaves: builder.next_leaf,
    };
    tree.validate()?;
    Ok(tree)
}

/// Fits a partition tree by greedy top-down growth: at every node the best
/// split over all (feature, midpoint-between-consecutive-distinct-values)
/// candidates under the configured criterion, stopping at the depth and
/// min-leaf limits, on pure nodes, and when no candidate qualifies.
pub fn fit_tree(data: &Dataset, cfg: &TreeConfig) -> Result<PartitionTree> {
    fit_tree_impl(data, cfg, (0..data.len()).collect(), None)
}

/// Fits `n_trees` partition trees, each on a bootstrap resample of the data
/// with sqrt(d) feature subsampling per split. Deterministic given the seed.
pub fn fit_forest(
    data: &Dataset,
    cfg: &TreeConfig,
    n_trees: usize,
    seed: u64,
) -> Result<Vec<PartitionTree>> {
    if n_trees == 0 {
        return Err(HetcalError::InvalidConfig("n_trees must be >= 1".into()));
    }
    if data.is_empty() {
        return Err(HetcalError::EmptyInput("training data"));
    }
    let m = (data.n_features() as f64).sqrt().ceil().max(1.0) as usize;
    let m = m.min(data.n_features().max(1));
    let mut trees = Vec::with_capacity(n_trees);
    for k in 0..n_trees as u64 {
        let stream = seed.wrapping_add(k.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut boot_rng = ChaCha12Rng::seed_from_u64(stream);
        let rows: Vec<usize> = (0..data.len())
            .map(|_| boot_rng.random_range(0..data.len()))
            .collect();
        let feat_rng = ChaCha12Rng::seed_from_u64(stream ^ 0xA5A5_5A5A_DEAD_BEEF);
        trees.push(fit_tree_impl(data, cfg, rows, Some((m, feat_rng)))?);
    }
    Ok(trees)
}
