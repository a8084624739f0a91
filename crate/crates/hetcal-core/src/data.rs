//! Core data types: labeled examples, datasets, and the discrete
//! (score, partition, label) distribution every metric consumes.
//!
//! All types are immutable after construction and safe to share across
//! threads.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HetcalError, Result};

/// Identifier of one cell of a feature-space partition, stable within the
/// tree that produced it. Leaf ids of an L-leaf tree are 0..L-1 with no gaps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PartitionId(pub u32);

/// One record: feature values, binary label, and the raw model score on
/// logit scale (the pre-sigmoid output of the base classifier).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub features: Vec<f64>,
    pub label: u8,
    pub score: f64,
}

/// Informational tag describing the role a dataset plays in a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Train,
    Calibration,
    Test,
}

/// An ordered, immutable collection of examples sharing one feature arity.
#[derive(Debug, Clone)]
pub struct Dataset {
    examples: Vec<LabeledExample>,
    role: Role,
    n_features: usize,
}

impl Dataset {
    /// Builds a dataset, validating labels, score finiteness, and a shared
    /// feature arity across all examples.
    pub fn new(examples: Vec<LabeledExample>, role: Role) -> Result<Self> {
        let n_features = examples.first().map_or(0, |e| e.features.len());
        for (row, e) in examples.iter().enumerate() {
            if e.label > 1 {
                return Err(HetcalError::InvalidLabel {
                    row,
                    value: e.label.to_string(),
                });
            }
            if !e.score.is_finite() {
                return Err(HetcalError::NonFiniteScore {
                    row,
                    value: e.score,
                });
            }
            if e.features.len() != n_features {
                return Err(HetcalError::ArityMismatch {
                    expected: n_features,
                    got: e.features.len(),
                });
            }
        }
        Ok(Self {
            examples,
            role,
            n_features,
        })
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn scores(&self) -> Vec<f64> {
        self.examples.iter().map(|e| e.score).collect()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.examples.iter().map(|e| e.label).collect()
    }

    /// Re-tags the dataset without touching its contents.
    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }
}

/// Column mapping for CSV ingestion. Feature columns default to every header
/// other than the label and score columns, in file order.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub label: String,
    pub score: String,
    pub features: Option<Vec<String>>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            label: "label".to_string(),
            score: "score".to_string(),
            features: None,
        }
    }
}

/// Loads a UTF-8, comma-separated file with a header row into a dataset.
/// Rows keep file order; labels must parse as 0 or 1.
pub fn load_csv(path: &Path, schema: &CsvSchema, role: Role) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.to_string()).collect();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| HetcalError::MissingColumn(name.to_string()))
    };
    let label_idx = col(&schema.label)?;
    let score_idx = col(&schema.score)?;
    let feature_idx: Vec<(usize, String)> = match &schema.features {
        Some(names) => names
            .iter()
            .map(|n| Ok((col(n)?, n.clone())))
            .collect::<Result<_>>()?,
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != label_idx && *i != score_idx)
            .map(|(i, h)| (i, h.clone()))
            .collect(),
    };

    let parse_cell = |row: usize, column: &str, value: &str| -> Result<f64> {
        value
            .trim()
            .parse::<f64>()
            .map_err(|_| HetcalError::ParseCell {
                row,
                column: column.to_string(),
                value: value.to_string(),
            })
    };

    let mut examples = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let raw_label = record.get(label_idx).unwrap_or("").trim();
        let label = match raw_label {
            "0" => 0u8,
            "1" => 1u8,
            other => {
                // Accept 0.0 / 1.0 spellings, reject everything else.
                match other.parse::<f64>() {
                    Ok(0.0) => 0u8,
                    Ok(1.0) => 1u8,
                    _ => {
                        return Err(HetcalError::InvalidLabel {
                            row,
                            value: raw_label.to_string(),
                        })
                    }
                }
            }
        };
        let score = parse_cell(row, &schema.score, record.get(score_idx).unwrap_or(""))?;
        if !score.is_finite() {
            return Err(HetcalError::NonFiniteScore { row, value: score });
        }
        let mut features = Vec::with_capacity(feature_idx.len());
        for (idx, name) in &feature_idx {
            features.push(parse_cell(row, name, record.get(*idx).unwrap_or(""))?);
        }
        examples.push(LabeledExample {
            features,
            label,
            score,
        });
    }
    Dataset::new(examples, role)
}

/// Writes a dataset back out with `label,score,f0,f1,...` columns. Floats are
/// printed in shortest-roundtrip form, so numeric content survives exactly.
pub fn write_csv(path: &Path, data: &Dataset) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut header = vec!["label".to_string(), "score".to_string()];
    for i in 0..data.n_features() {
        header.push(format!("f{i}"));
    }
    writeln!(out, "{}", header.join(","))?;
    for e in data.examples() {
        let mut row = vec![e.label.to_string(), format!("{}", e.score)];
        for f in &e.features {
            row.push(format!("{f}"));
        }
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Splits a dataset into (train, calibration, test) by a seeded shuffle.
/// Deterministic given the seed; the three parts cover the input exactly.
pub fn split_dataset(
    data: &Dataset,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(Dataset, Dataset, Dataset)> {
    let (ft, fc, fe) = fractions;
    let fr = [ft, fc, fe];
    if fr.iter().any(|f| *f <= 0.0) || (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(HetcalError::BadFractions(fr));
    }
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let cut1 = (ft * n as f64).round() as usize;
    let cut2 = ((ft + fc) * n as f64).round() as usize;
    let cut1 = cut1.min(n);
    let cut2 = cut2.clamp(cut1, n);
    let sizes = [cut1, cut2 - cut1, n - cut2];
    if sizes.contains(&0) {
        return Err(HetcalError::EmptySplit(sizes));
    }

    let take = |idx: &[usize], role: Role| -> Result<Dataset> {
        Dataset::new(
            idx.iter().map(|&i| data.examples()[i].clone()).collect(),
            role,
        )
    };
    Ok((
        take(&order[..cut1], Role::Train)?,
        take(&order[cut1..cut2], Role::Calibration)?,
        take(&order[cut2..], Role::Test)?,
    ))
}

/// One atom of a discrete distribution over (score, partition, label).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub score: f64,
    pub partition: PartitionId,
    pub label: u8,
    pub mass: f64,
}

/// A finite joint distribution over (score, partition, label) with exact
/// probabilities. Duplicate (score, partition, label) triples are merged on
/// construction, keeping tie terms well-defined.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    atoms: Vec<Atom>,
    mass0: f64,
    mass1: f64,
}

impl DiscreteDistribution {
    /// Validates, merges duplicate triples, and canonically orders the atoms
    /// by (partition, score, label). Zero-mass atoms are dropped.
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        for a in &atoms {
            if a.mass < 0.0 {
                return Err(HetcalError::NegativeMass(a.mass));
            }
            if a.label > 1 {
                return Err(HetcalError::InvalidLabel {
                    row: 0,
                    value: a.label.to_string(),
                });
            }
        }
        let mut merged: BTreeMap<(PartitionId, u64, u8), Atom> = BTreeMap::new();
        for a in atoms {
            if a.mass == 0.0 {
                continue;
            }
            let key = (a.partition, a.score.to_bits(), a.label);
            merged
                .entry(key)
                .and_modify(|m| m.mass += a.mass)
                .or_insert(a);
        }
        let atoms: Vec<Atom> = merged.into_values().collect();
        let total: f64 = atoms.iter().map(|a| a.mass).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(HetcalError::BadMass(total));
        }
        let mass0 = atoms.iter().filter(|a| a.label == 0).map(|a| a.mass).sum();
        let mass1 = atoms.iter().filter(|a| a.label == 1).map(|a| a.mass).sum();
        Ok(Self {
            atoms,
            mass0,
            mass1,
        })
    }

    /// Builds the distribution from integer counts over (score, partition,
    /// label) cells; `n` is the total count. Label masses are the exact
    /// quotients count/n.
    pub fn from_counts(cells: Vec<(f64, PartitionId, u8, u64)>, n: u64) -> Result<Self> {
        if n == 0 {
            return Err(HetcalError::EmptyInput("distribution"));
        }
        let mut merged: BTreeMap<(PartitionId, u64, u8), u64> = BTreeMap::new();
        let mut n0 = 0u64;
        let mut n1 = 0u64;
        for (score, partition, label, count) in cells {
            if count == 0 {
                continue;
            }
            if label == 0 {
                n0 += count;
            } else {
                n1 += count;
            }
            *merged
                .entry((partition, score.to_bits(), label))
                .or_insert(0) += count;
        }
        debug_assert_eq!(n0 + n1, n);
        let atoms = merged
            .into_iter()
            .map(|((partition, bits, label), count)| Atom {
                score: f64::from_bits(bits),
                partition,
                label,
                mass: count as f64 / n as f64,
            })
            .collect();
        Ok(Self {
            atoms,
            mass0: n0 as f64 / n as f64,
            mass1: n1 as f64 / n as f64,
        })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// Total joint mass carried by a label.
    pub fn label_mass(&self, label: u8) -> f64 {
        if label == 0 {
            self.mass0
        } else {
            self.mass1
        }
    }

    /// Distinct (score, partition) keys of the support, in canonical order.
    pub fn support_keys(&self) -> Vec<(f64, PartitionId)> {
        let mut keys: Vec<(f64, PartitionId)> = Vec::new();
        for a in &self.atoms {
            if keys
                .last()
                .is_none_or(|k| k.0.to_bits() != a.score.to_bits() || k.1 != a.partition)
            {
                keys.push((a.score, a.partition));
            }
        }
        // Atoms are sorted by (partition, score, label); dedup again in case
        // the two labels of one key were interleaved with another key.
        keys.sort_by(|a, b| a.1.cmp(&b.1).then(a.0.total_cmp(&b.0)));
        keys.dedup_by(|a, b| a.0.to_bits() == b.0.to_bits() && a.1 == b.1);
        keys
    }

    /// Joint masses (label 0, label 1) at one support key.
    pub fn key_masses(&self, score: f64, partition: PartitionId) -> (f64, f64) {
        let mut m0 = 0.0;
        let mut m1 = 0.0;
        for a in &self.atoms {
            if a.partition == partition && a.score.to_bits() == score.to_bits() {
                if a.label == 0 {
                    m0 = a.mass;
                } else {
                    m1 = a.mass;
                }
            }
        }
        (m0, m1)
    }

    /// Remaps every atom's partition id, merging atoms that collide.
    pub fn remap_partitions(&self, map: impl Fn(PartitionId) -> PartitionId) -> Result<Self> {
        Self::new(
            self.atoms
                .iter()
                .map(|a| Atom {
                    partition: map(a.partition),
                    ..*a
                })
                .collect(),
        )
    }
}

/// Empirical counterpart of the population distribution: atom probability is
/// the count of identical (score, partition, label) triples over n.
pub fn empirical_distribution(
    data: &Dataset,
    assignment: &[PartitionId],
) -> Result<DiscreteDistribution> {
    if data.is_empty() {
        return Err(HetcalError::EmptyInput("dataset"));
    }
    assert_eq!(
        assignment.len(),
        data.len(),
        "every example needs a partition assignment"
    );
    let mut cells: BTreeMap<(PartitionId, u64, u8), u64> = BTreeMap::new();
    for (e, pid) in data.examples().iter().zip(assignment) {
        *cells.entry((*pid, e.score.to_bits(), e.label)).or_insert(0) += 1;
    }
    DiscreteDistribution::from_counts(
        cells
            .into_iter()
            .map(|((pid, bits, label), c)| (f64::from_bits(bits), pid, label, c))
            .collect(),
        data.len() as u64,
    )
}

/// Single-partition assignment helper: every example maps to partition 0.
pub fn single_partition(data: &Dataset) -> Vec<PartitionId> {
    vec![PartitionId(0); data.len()]
}
