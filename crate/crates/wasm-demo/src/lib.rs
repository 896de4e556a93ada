//! Browser demo: trains a small grid on synthetic ratings and exposes three
//! views to `www/index.js` as JSON strings.

use cfaudit::factorize::{train_grid, AlsParams, ModelGridEntry};
use cfaudit::ingest::split_holdout;
use cfaudit::multiplicity::{ambiguity_percentage, discrepancy_matrix, final_discrepancy, MatrixMode};
use cfaudit::reachability::{audit_many, dominance_counts, AuditOptions, AvailabilitySet};
use cfaudit::synth::{generate, SyntheticSpec};
use serde::Serialize;
use wasm_bindgen::prelude::*;

pub const DIMS: [usize; 4] = [2, 4, 8, 16];
pub const MAX_N: usize = 25;

#[derive(Serialize)]
pub struct Curve {
    pub d: usize,
    pub test_rmse: f64,
    /// Availability percentage for N = 1..=MAX_N.
    pub percentages: Vec<f64>,
}

#[derive(Serialize)]
pub struct Heatmap {
    pub n: usize,
    pub labels: Vec<String>,
    pub cells: Vec<Vec<u64>>,
    pub final_discrepancy: Vec<u64>,
    pub ambiguity: f64,
}

#[derive(Serialize)]
pub struct ItemPoint {
    pub x: f64,
    pub y: f64,
    pub reachable: bool,
    /// Items tied with or ahead of this one at its own probe point.
    pub ahead: usize,
}

pub struct Experiment {
    grid: Vec<ModelGridEntry>,
    /// dominance counts per grid model
    counts: Vec<Vec<usize>>,
}

impl Experiment {
    pub fn build(users: usize, items: usize, lambda: f64, seed: u64) -> Result<Self, String> {
        let spec = SyntheticSpec {
            users,
            items,
            seed,
            ..SyntheticSpec::default()
        };
        let ds = generate(&spec).map_err(|e| e.to_string())?;
        let (train, test) = split_holdout(&ds, 0.2, seed).map_err(|e| e.to_string())?;
        let base = AlsParams {
            lambda,
            seed,
            ..AlsParams::new(2)
        };
        let grid = train_grid(&train, &test, &DIMS, &base).map_err(|e| e.to_string())?;
        let counts = grid
            .iter()
            .map(|e| dominance_counts(&e.model, AuditOptions::default()))
            .collect();
        Ok(Experiment { grid, counts })
    }

    pub fn curves(&self) -> Vec<Curve> {
        self.grid
            .iter()
            .zip(&self.counts)
            .map(|(e, counts)| Curve {
                d: e.d,
                test_rmse: e.test_rmse,
                percentages: (1..=MAX_N)
                    .map(|n| 100.0 * counts.iter().filter(|&&c| c < n).count() as f64 / counts.len() as f64)
                    .collect(),
            })
            .collect()
    }

    pub fn heatmap(&self, n: usize) -> Result<Heatmap, String> {
        let sets: Vec<AvailabilitySet> = self
            .grid
            .iter()
            .map(|e| audit_many(&e.model, &[n], AuditOptions::default()).map(|mut v| v.remove(0)))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let matrix = discrepancy_matrix(&sets, MatrixMode::FixedN(n)).map_err(|e| e.to_string())?;
        let k = matrix.dim();
        Ok(Heatmap {
            n,
            labels: matrix.labels().to_vec(),
            cells: (0..k).map(|r| matrix.row(r).to_vec()).collect(),
            final_discrepancy: final_discrepancy(&matrix),
            ambiguity: ambiguity_percentage(&sets, sets[0].m()).map_err(|e| e.to_string())?,
        })
    }

    /// Item factors of the d = 2 model with their reachability at slate size `n`.
    pub fn geometry(&self, n: usize) -> Vec<ItemPoint> {
        let (entry, counts) = self
            .grid
            .iter()
            .zip(&self.counts)
            .find(|(e, _)| e.d == 2)
            .expect("grid holds d = 2");
        let q = entry.model.item_factors();
        (0..q.nrows())
            .map(|i| ItemPoint {
                x: q.row(i)[0],
                y: q.row(i)[1],
                reachable: counts[i] < n,
                ahead: counts[i],
            })
            .collect()
    }
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("plain data serializes")
}

#[wasm_bindgen]
pub struct Demo {
    inner: Experiment,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(users: usize, items: usize, lambda: f64, seed: u32) -> Result<Demo, JsError> {
        Experiment::build(users, items, lambda, seed as u64)
            .map(|inner| Demo { inner })
            .map_err(|e| JsError::new(&e))
    }

    /// `[{d, test_rmse, percentages}]`, one curve per latent dimension.
    pub fn availability_curves(&self) -> String {
        json(&self.inner.curves())
    }

    pub fn discrepancy_heatmap(&self, n: usize) -> Result<String, JsError> {
        self.inner.heatmap(n).map(|h| json(&h)).map_err(|e| JsError::new(&e))
    }

    pub fn item_geometry(&self, n: usize) -> String {
        json(&self.inner.geometry(n))
    }
}
