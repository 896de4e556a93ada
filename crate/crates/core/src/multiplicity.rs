//! Predictive multiplicity of availability across an ε-level set of models.
//!
//! Two availability sets conflict on the items one of them reaches and the
//! other does not. Comparison-matrix cells count the difference taken from
//! the smaller set (`|Y \ X|` when `|Y| ≤ |X|`, else `|X \ Y|`); ambiguity
//! counts every item that lands in the symmetric difference of at least one
//! pair of models.

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factorize::{FactorModel, ModelGridEntry};
use crate::ingest::RatingDataset;
use crate::reachability::{AvailabilitySet, ModelKey};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSetEntry {
    pub key: ModelKey,
    /// Position of the model in the originating grid.
    pub grid_index: usize,
    pub test_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSet {
    pub epsilon: f64,
    pub baseline_rmse: f64,
    /// Sorted by (N, d).
    pub entries: Vec<LevelSetEntry>,
}

impl LevelSet {
    /// Latent dimensions retained, ascending.
    pub fn dims(&self) -> Vec<usize> {
        let mut d: Vec<usize> = self.entries.iter().map(|e| e.key.d).collect();
        d.sort_unstable();
        d.dedup();
        d
    }

    pub fn grid_indices(&self) -> Vec<usize> {
        let mut g: Vec<usize> = self.entries.iter().map(|e| e.grid_index).collect();
        g.sort_unstable();
        g.dedup();
        g
    }
}

/// Keeps grid entries within `epsilon` of the best test RMSE and crosses each
/// with every slate size.
pub fn level_set(grid: &[ModelGridEntry], slate_sizes: &[usize], epsilon: f64) -> Result<LevelSet> {
    let scores: Vec<(usize, f64)> = grid.iter().map(|e| (e.d, e.test_rmse)).collect();
    level_set_from_scores(&scores, slate_sizes, epsilon)
}

/// [`level_set`] over bare `(d, test_rmse)` pairs.
pub fn level_set_from_scores(
    scores: &[(usize, f64)],
    slate_sizes: &[usize],
    epsilon: f64,
) -> Result<LevelSet> {
    if scores.is_empty() {
        return Err(Error::InvalidArgument("empty model grid".into()));
    }
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be ≥ 0, got {epsilon}")));
    }
    if slate_sizes.is_empty() || slate_sizes.contains(&0) {
        return Err(Error::InvalidArgument("slate sizes must be non-empty and ≥ 1".into()));
    }
    let baseline_rmse = scores
        .iter()
        .map(|&(_, r)| r)
        .fold(f64::INFINITY, f64::min);
    let mut entries = Vec::new();
    for (grid_index, &(d, rmse)) in scores.iter().enumerate() {
        if rmse <= baseline_rmse + epsilon {
            for &n in slate_sizes {
                entries.push(LevelSetEntry {
                    key: ModelKey::new(d, n),
                    grid_index,
                    test_rmse: rmse,
                });
            }
        }
    }
    entries.sort_by(|a, b| a.key.cmp(&b.key).then(a.grid_index.cmp(&b.grid_index)));
    Ok(LevelSet {
        epsilon,
        baseline_rmse,
        entries,
    })
}

fn check_same_m(y: &AvailabilitySet, x: &AvailabilitySet) -> Result<()> {
    if y.m() != x.m() {
        return Err(Error::ItemCountMismatch {
            left: y.m(),
            right: x.m(),
        });
    }
    Ok(())
}

/// Items the smaller set reaches that the larger one does not.
pub fn conflict_cell(y: &AvailabilitySet, x: &AvailabilitySet) -> Result<usize> {
    check_same_m(y, x)?;
    let (small, large) = if y.count() <= x.count() { (y, x) } else { (x, y) };
    Ok(small.bits().difference(large.bits()).count())
}

/// Items reached by exactly one of the two sets.
pub fn symmetric_conflict(y: &AvailabilitySet, x: &AvailabilitySet) -> Result<FixedBitSet> {
    check_same_m(y, x)?;
    let mut z = y.bits().clone();
    z.symmetric_difference_with(x.bits());
    Ok(z)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatrixMode {
    /// One slate size, varying latent dimension.
    FixedN(usize),
    /// Every (N, d) combination.
    Joint,
    /// Rating-prediction differences between models.
    Prediction,
}

/// Labeled square matrix of pairwise comparisons; rows are baselines,
/// columns the compared level-set models. Always symmetric with a zero
/// diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonMatrix<T> {
    labels: Vec<String>,
    cells: Vec<T>,
    mode: MatrixMode,
}

pub type CountMatrix = ComparisonMatrix<u64>;
pub type RealMatrix = ComparisonMatrix<f64>;

impl<T: Copy + PartialEq + PartialOrd + Default + std::fmt::Debug> ComparisonMatrix<T> {
    pub fn new(labels: Vec<String>, cells: Vec<T>, mode: MatrixMode) -> Result<Self> {
        let k = labels.len();
        if cells.len() != k * k {
            return Err(Error::InvalidArgument(format!(
                "{} cells for {k} labels",
                cells.len()
            )));
        }
        for a in 0..k {
            if cells[a * k + a] != T::default() {
                return Err(Error::InvalidArgument(format!("non-zero diagonal at {a}")));
            }
            for b in 0..a {
                if cells[a * k + b] != cells[b * k + a] {
                    return Err(Error::InvalidArgument(format!(
                        "asymmetric cells ({a}, {b}): {:?} vs {:?}",
                        cells[a * k + b],
                        cells[b * k + a]
                    )));
                }
            }
        }
        Ok(ComparisonMatrix { labels, cells, mode })
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn mode(&self) -> MatrixMode {
        self.mode
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.cells[row * self.dim() + col]
    }

    pub fn row(&self, row: usize) -> &[T] {
        let k = self.dim();
        &self.cells[row * k..(row + 1) * k]
    }

    /// Column of the largest entry in each row (first one on ties).
    pub fn row_argmax(&self) -> Vec<usize> {
        (0..self.dim())
            .map(|r| {
                let row = self.row(r);
                let mut best = 0;
                for (c, v) in row.iter().enumerate() {
                    if *v > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let k = self.dim();
        let cells = (0..k * k).map(|idx| self.cells[(idx % k) * k + idx / k]).collect();
        ComparisonMatrix {
            labels: self.labels.clone(),
            cells,
            mode: self.mode,
        }
    }

    pub fn max(&self) -> T {
        final_discrepancy(self)
            .into_iter()
            .fold(T::default(), |a, v| if v > a { v } else { a })
    }
}

/// Row-wise maxima: for each baseline, the largest conflict with any other model.
pub fn final_discrepancy<T: Copy + PartialOrd + Default>(matrix: &ComparisonMatrix<T>) -> Vec<T> {
    let k = matrix.labels.len();
    (0..k)
        .map(|r| {
            matrix.cells[r * k..(r + 1) * k]
                .iter()
                .fold(T::default(), |a, &v| if v > a { v } else { a })
        })
        .collect()
}

/// Pairwise [`conflict_cell`] matrix. Sets are ordered by (N, d) and labeled
/// `N{N}_d{d}`. In [`MatrixMode::FixedN`] every set must have that slate size.
pub fn discrepancy_matrix(sets: &[AvailabilitySet], mode: MatrixMode) -> Result<CountMatrix> {
    if sets.len() < 2 {
        return Err(Error::InvalidArgument(
            "discrepancy needs at least two availability sets".into(),
        ));
    }
    if let MatrixMode::FixedN(n) = mode {
        if let Some(s) = sets.iter().find(|s| s.key().n != n) {
            return Err(Error::InvalidArgument(format!(
                "set {} in a fixed N = {n} matrix",
                s.key()
            )));
        }
    }
    let mut order: Vec<&AvailabilitySet> = sets.iter().collect();
    order.sort_by_key(|s| s.key());
    let k = order.len();
    let mut cells = vec![0u64; k * k];
    for a in 0..k {
        for b in 0..a {
            let c = conflict_cell(order[a], order[b])? as u64;
            cells[a * k + b] = c;
            cells[b * k + a] = c;
        }
    }
    let labels = order.iter().map(|s| s.key().label()).collect();
    ComparisonMatrix::new(labels, cells, mode)
}

/// Percentage of the `m` items that fall in the symmetric difference of at
/// least one pair of sets.
pub fn ambiguity_percentage(sets: &[AvailabilitySet], m: usize) -> Result<f64> {
    if sets.len() < 2 {
        return Err(Error::InvalidArgument(
            "ambiguity needs at least two availability sets".into(),
        ));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("ambiguity over zero items".into()));
    }
    let mut ambiguous = FixedBitSet::with_capacity(m);
    for a in 0..sets.len() {
        if sets[a].m() != m {
            return Err(Error::ItemCountMismatch {
                left: sets[a].m(),
                right: m,
            });
        }
        for b in 0..a {
            ambiguous.union_with(&symmetric_conflict(&sets[a], &sets[b])?);
        }
    }
    Ok(100.0 * ambiguous.count_ones(..) as f64 / m as f64)
}

/// Mean absolute difference of test-set predictions between every pair of models.
pub fn prediction_difference_matrix(
    models: &[(String, &FactorModel)],
    test: &RatingDataset,
) -> Result<RealMatrix> {
    if test.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let Some((_, first)) = models.first() else {
        return Err(Error::InvalidArgument("no models to compare".into()));
    };
    for (label, model) in models {
        if model.n_users() != first.n_users() || model.n_items() != first.n_items() {
            return Err(Error::InvalidArgument(format!("model {label} has a different shape")));
        }
        if model.n_users() != test.n_users() || model.n_items() != test.n_items() {
            return Err(Error::InvalidArgument(format!(
                "model {label} does not match the test set shape"
            )));
        }
    }
    let predictions: Vec<Vec<f64>> = models
        .iter()
        .map(|(_, model)| {
            test.ratings()
                .iter()
                .map(|r| model.predict_unchecked(r.user, r.item))
                .collect()
        })
        .collect();
    let k = models.len();
    let mut cells = vec![0.0; k * k];
    for a in 0..k {
        for b in 0..a {
            let total: f64 = predictions[a]
                .iter()
                .zip(&predictions[b])
                .map(|(x, y)| (x - y).abs())
                .sum();
            let v = total / test.len() as f64;
            cells[a * k + b] = v;
            cells[b * k + a] = v;
        }
    }
    let labels = models.iter().map(|(l, _)| l.clone()).collect();
    ComparisonMatrix::new(labels, cells, MatrixMode::Prediction)
}

/// What a conflict count is measured against in a threshold report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Denominator {
    #[default]
    SmallerSet,
    Catalogue,
    Union,
}

impl std::str::FromStr for Denominator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smaller-set" => Ok(Denominator::SmallerSet),
            "catalogue" | "catalog" => Ok(Denominator::Catalogue),
            "union" => Ok(Denominator::Union),
            other => Err(Error::Config(format!("unknown threshold denominator {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCell {
    pub baseline: String,
    pub other: String,
    pub conflicts: u64,
    pub reference_size: usize,
    /// `None` when the reference size is zero.
    pub percent: Option<f64>,
    /// Number of thresholds the percentage reaches; 0 = below all of them.
    pub band: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub thresholds: Vec<f64>,
    pub denominator: Denominator,
    /// One per unordered pair of models.
    pub cells: Vec<ThresholdCell>,
    /// `band_counts[b]` pairs reach exactly `b` thresholds.
    pub band_counts: Vec<usize>,
    /// `at_or_above[t]` pairs reach `thresholds[t]`.
    pub at_or_above: Vec<usize>,
    pub undefined: usize,
}

/// Classifies every off-diagonal pair of `matrix` by its conflict count as a
/// percentage of the reference size. `sets` must match the matrix labels.
pub fn threshold_report(
    matrix: &CountMatrix,
    sets: &[AvailabilitySet],
    thresholds: &[f64],
    denominator: Denominator,
) -> Result<ThresholdReport> {
    if thresholds.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument("thresholds must be strictly ascending".into()));
    }
    let mut order: Vec<&AvailabilitySet> = sets.iter().collect();
    order.sort_by_key(|s| s.key());
    let labels: Vec<String> = order.iter().map(|s| s.key().label()).collect();
    if labels != matrix.labels() {
        return Err(Error::InvalidArgument(
            "availability sets do not match the matrix labels".into(),
        ));
    }
    let k = matrix.dim();
    let mut cells = Vec::new();
    let mut band_counts = vec![0; thresholds.len() + 1];
    let mut undefined = 0;
    for a in 0..k {
        for b in (a + 1)..k {
            let (ya, xb) = (order[a], order[b]);
            let reference_size = match denominator {
                Denominator::SmallerSet => ya.count().min(xb.count()),
                Denominator::Catalogue => ya.m(),
                Denominator::Union => {
                    let mut u = ya.bits().clone();
                    u.union_with(xb.bits());
                    u.count_ones(..)
                }
            };
            let conflicts = matrix.get(a, b);
            let (percent, band) = if reference_size == 0 {
                undefined += 1;
                (None, None)
            } else {
                let pct = 100.0 * conflicts as f64 / reference_size as f64;
                let band = thresholds.iter().filter(|&&t| pct >= t).count();
                band_counts[band] += 1;
                (Some(pct), Some(band))
            };
            cells.push(ThresholdCell {
                baseline: labels[a].clone(),
                other: labels[b].clone(),
                conflicts,
                reference_size,
                percent,
                band,
            });
        }
    }
    let at_or_above = (0..thresholds.len())
        .map(|t| band_counts[t + 1..].iter().sum())
        .collect();
    Ok(ThresholdReport {
        thresholds: thresholds.to_vec(),
        denominator,
        cells,
        band_counts,
        at_or_above,
        undefined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(d: usize, n: usize, m: usize, items: &[usize]) -> AvailabilitySet {
        AvailabilitySet::from_items(ModelKey::new(d, n), m, items.iter().copied()).unwrap()
    }

    #[test]
    fn level_set_arithmetic() {
        let ls = level_set_from_scores(&[(2, 0.80), (4, 0.81), (8, 0.83)], &[1], 0.02).unwrap();
        assert_eq!(ls.dims(), vec![2, 4]);
        assert_eq!(ls.baseline_rmse, 0.80);
        let exact = level_set_from_scores(&[(2, 0.80), (4, 0.81), (8, 0.80)], &[1, 3], 0.0).unwrap();
        assert_eq!(exact.dims(), vec![2, 8]);
        assert_eq!(exact.entries.len(), 4);
        let wide = level_set_from_scores(&[(2, 0.80), (4, 0.81), (8, 0.83)], &[1], 10.0).unwrap();
        assert_eq!(wide.dims(), vec![2, 4, 8]);
    }

    #[test]
    fn level_set_rejects_bad_input() {
        assert!(level_set_from_scores(&[], &[1], 0.1).is_err());
        assert!(level_set_from_scores(&[(1, 1.0)], &[1], -0.1).is_err());
        assert!(level_set_from_scores(&[(1, 1.0)], &[], 0.1).is_err());
    }

    #[test]
    fn conflict_cell_cases() {
        let a = set(2, 1, 6, &[1, 2]);
        let b = set(4, 1, 6, &[1, 2, 3]);
        let c = set(8, 1, 6, &[1, 4]);
        assert_eq!(conflict_cell(&a, &a).unwrap(), 0);
        assert_eq!(conflict_cell(&a, &b).unwrap(), 0);
        assert_eq!(conflict_cell(&c, &b).unwrap(), 1);
        assert_eq!(conflict_cell(&b, &c).unwrap(), 1);
        assert!(conflict_cell(&a, &set(2, 1, 7, &[])).is_err());
    }

    #[test]
    fn symmetric_conflict_cases() {
        let a = set(2, 1, 4, &[1, 2]);
        let b = set(4, 1, 4, &[2, 3]);
        assert_eq!(symmetric_conflict(&a, &a).unwrap().count_ones(..), 0);
        assert_eq!(symmetric_conflict(&a, &b).unwrap().ones().collect::<Vec<_>>(), vec![1, 3]);
    }

    #[test]
    fn discrepancy_of_identical_sets_is_zero() {
        let m = discrepancy_matrix(&[set(2, 1, 5, &[0, 1]), set(4, 1, 5, &[0, 1])], MatrixMode::FixedN(1))
            .unwrap();
        assert_eq!(m.dim(), 2);
        assert!((0..2).all(|a| (0..2).all(|b| m.get(a, b) == 0)));
    }

    #[test]
    fn discrepancy_from_conflict_cells() {
        let m = discrepancy_matrix(
            &[set(4, 1, 5, &[1, 2, 3]), set(2, 1, 5, &[1, 4])],
            MatrixMode::FixedN(1),
        )
        .unwrap();
        assert_eq!(m.labels(), ["N1_d2", "N1_d4"]);
        assert_eq!((m.get(0, 1), m.get(1, 0)), (1, 1));
        assert_eq!(final_discrepancy(&m), vec![1, 1]);
    }

    #[test]
    fn discrepancy_mode_checks() {
        let sets = [set(2, 1, 5, &[1]), set(2, 3, 5, &[1, 2])];
        assert!(discrepancy_matrix(&sets, MatrixMode::FixedN(1)).is_err());
        assert!(discrepancy_matrix(&sets[..1], MatrixMode::Joint).is_err());
        let joint = discrepancy_matrix(&sets, MatrixMode::Joint).unwrap();
        assert_eq!(joint.labels(), ["N1_d2", "N3_d2"]);
    }

    #[test]
    fn matrix_constructor_enforces_symmetry() {
        let labels = vec!["a".to_string(), "b".to_string()];
        assert!(CountMatrix::new(labels.clone(), vec![0, 1, 2, 0], MatrixMode::Joint).is_err());
        assert!(CountMatrix::new(labels.clone(), vec![1, 0, 0, 0], MatrixMode::Joint).is_err());
        assert!(CountMatrix::new(labels, vec![0, 0, 0], MatrixMode::Joint).is_err());
    }

    #[test]
    fn final_discrepancy_of_rows() {
        let labels: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let m = CountMatrix::new(labels, vec![0, 1, 3, 1, 0, 2, 3, 2, 0], MatrixMode::Joint).unwrap();
        assert_eq!(final_discrepancy(&m), vec![3, 2, 3]);
        assert_eq!(m.row_argmax(), vec![2, 2, 0]);
        assert_eq!(m.max(), 3);
    }

    #[test]
    fn ambiguity_three_sets() {
        let sets = [set(2, 1, 3, &[1, 2]), set(4, 1, 3, &[2, 0]), set(8, 1, 3, &[2])];
        // {1,2}, {2,3}, {2} with items renumbered 1→1, 2→2, 3→0
        let pct = ambiguity_percentage(&sets, 3).unwrap();
        assert!((pct - 200.0 / 3.0).abs() < 1e-9);
        let same = [set(2, 1, 3, &[1]), set(4, 1, 3, &[1])];
        assert_eq!(ambiguity_percentage(&same, 3).unwrap(), 0.0);
        assert!(ambiguity_percentage(&same[..1], 3).is_err());
    }

    #[test]
    fn threshold_bands() {
        let sets = [set(2, 1, 300, &(0..100).collect::<Vec<_>>()), set(4, 1, 300, &(5..200).collect::<Vec<_>>())];
        let m = discrepancy_matrix(&sets, MatrixMode::FixedN(1)).unwrap();
        assert_eq!(m.get(0, 1), 5);
        let r = threshold_report(&m, &sets, &[1.0, 5.0, 10.0], Denominator::SmallerSet).unwrap();
        assert_eq!(r.cells[0].band, Some(2));
        assert_eq!(r.band_counts, vec![0, 0, 1, 0]);
        assert_eq!(r.at_or_above, vec![1, 1, 0]);
    }

    #[test]
    fn threshold_undefined_for_empty_reference() {
        let sets = [set(2, 1, 10, &[]), set(4, 1, 10, &[1, 2])];
        let m = discrepancy_matrix(&sets, MatrixMode::FixedN(1)).unwrap();
        let r = threshold_report(&m, &sets, &[1.0], Denominator::SmallerSet).unwrap();
        assert_eq!(r.undefined, 1);
        assert_eq!(r.cells[0].band, None);
        assert_eq!(r.band_counts, vec![0, 0]);
    }

    #[test]
    fn zero_conflict_is_below_every_threshold() {
        let sets = [set(2, 1, 10, &[1]), set(4, 1, 10, &[1, 2])];
        let m = discrepancy_matrix(&sets, MatrixMode::FixedN(1)).unwrap();
        let r = threshold_report(&m, &sets, &[1.0, 5.0, 10.0], Denominator::SmallerSet).unwrap();
        assert_eq!(r.cells[0].band, Some(0));
    }
}
