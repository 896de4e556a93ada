//! Item availability and user recourse for Top-N recommenders over a fitted
//! factor model.
//!
//! The availability audit uses the aligned probe: item `i` is aligned-reachable
//! at slate size N when, scoring every item against the latent point `q_i`,
//! fewer than N other items score at least as high as `i` itself. That is a
//! sufficient condition for `i` to be reachable by some user, so audit
//! percentages are lower bounds on availability.

mod audit;
mod latent;
mod recourse;

use std::fmt;

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use audit::{
    aligned_reachable, audit_availability, audit_many, dominance_counts, AuditOptions,
};
pub use latent::{user_latent_map, LatentMap};
pub use recourse::{
    recourse_difficulty, recourse_feasible, recourse_percentage, solve_recourse,
    write_recourse_csv, CostMode, DifficultyReport, RatingBounds, RecourseOptions,
    RecourseOutcome, RecourseProblem, RecourseRow,
};

/// Identifies one audited recommender: latent dimension and slate size.
/// Orders by slate size first, then dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModelKey {
    pub n: usize,
    pub d: usize,
}

impl ModelKey {
    pub fn new(d: usize, n: usize) -> Self {
        ModelKey { n, d }
    }

    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for ModelKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "N{}_d{}", self.n, self.d)
    }
}

/// Items found aligned-reachable by one (d, N) recommender.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AvailabilitySet {
    key: ModelKey,
    reachable: FixedBitSet,
}

impl AvailabilitySet {
    pub fn new(key: ModelKey, m: usize) -> Self {
        AvailabilitySet {
            key,
            reachable: FixedBitSet::with_capacity(m),
        }
    }

    pub fn from_items(key: ModelKey, m: usize, items: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut set = Self::new(key, m);
        for i in items {
            if i >= m {
                return Err(Error::IndexOutOfRange {
                    what: "item",
                    index: i,
                    bound: m,
                });
            }
            set.reachable.insert(i);
        }
        Ok(set)
    }

    pub fn key(&self) -> ModelKey {
        self.key
    }

    pub fn m(&self) -> usize {
        self.reachable.len()
    }

    pub fn count(&self) -> usize {
        self.reachable.count_ones(..)
    }

    pub fn percentage(&self) -> f64 {
        if self.m() == 0 {
            0.0
        } else {
            100.0 * self.count() as f64 / self.m() as f64
        }
    }

    pub fn contains(&self, item: usize) -> bool {
        self.reachable.contains(item)
    }

    pub fn insert(&mut self, item: usize) {
        self.reachable.insert(item);
    }

    pub fn items(&self) -> impl Iterator<Item = usize> + '_ {
        self.reachable.ones()
    }

    pub fn bits(&self) -> &FixedBitSet {
        &self.reachable
    }

    pub fn is_subset(&self, other: &AvailabilitySet) -> bool {
        self.reachable.is_subset(&other.reachable)
    }

    /// Bit `i` lives in byte `i / 8` at position `i % 8` (least significant first).
    pub fn to_hex(&self) -> String {
        let mut bytes = vec![0u8; self.m().div_ceil(8)];
        for i in self.reachable.ones() {
            bytes[i / 8] |= 1 << (i % 8);
        }
        hex::encode(bytes)
    }

    pub fn from_hex(key: ModelKey, m: usize, text: &str) -> Result<Self> {
        let bytes = hex::decode(text)
            .map_err(|e| Error::InvalidArgument(format!("availability bitset: {e}")))?;
        if bytes.len() != m.div_ceil(8) {
            return Err(Error::InvalidArgument(format!(
                "availability bitset has {} bytes, expected {} for m = {m}",
                bytes.len(),
                m.div_ceil(8)
            )));
        }
        let mut set = Self::new(key, m);
        for (k, byte) in bytes.iter().enumerate() {
            for bit in 0..8 {
                if byte >> bit & 1 == 1 {
                    let i = 8 * k + bit;
                    if i >= m {
                        return Err(Error::InvalidArgument(format!(
                            "availability bitset sets padding bit {i} (m = {m})"
                        )));
                    }
                    set.reachable.insert(i);
                }
            }
        }
        Ok(set)
    }

    pub fn to_record(&self) -> AvailabilityRecord {
        AvailabilityRecord {
            d: self.key.d,
            n: self.key.n,
            m: self.m(),
            available: self.count(),
            percentage: self.percentage(),
            bits: self.to_hex(),
        }
    }

    pub fn from_record(record: &AvailabilityRecord) -> Result<Self> {
        Self::from_hex(ModelKey::new(record.d, record.n), record.m, &record.bits)
    }
}

/// JSON form of an [`AvailabilitySet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvailabilityRecord {
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub m: usize,
    pub available: usize,
    pub percentage: f64,
    pub bits: String,
}

/// Indices of the `n` best-scoring items outside `excluded`, best first.
/// Equal scores go to the lower index.
pub fn top_n(scores: &[f64], excluded: &[bool], n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).filter(|&j| !excluded[j]).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(n);
    idx
}
