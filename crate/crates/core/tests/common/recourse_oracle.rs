//! Grid-enumeration oracle for small recourse problems. Shares no code with
//! the library's recourse path: latent points come from freshly assembled
//! normal equations solved by LU.

use cfaudit::factorize::FactorModel;
use cfaudit::ingest::{Rating, RatingDataset};
use cfaudit::linalg::FactorMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use nalgebra::{DMatrix, DVector};

pub struct Instance<'a> {
    pub model: &'a FactorModel,
    pub history: Vec<(usize, f64)>,
    pub user_bias: f64,
    pub mutable: Vec<usize>,
    pub target: usize,
    pub n: usize,
    pub lo: f64,
    pub hi: f64,
}

fn latent(model: &FactorModel, items: &[usize], values: &[f64], user_bias: f64) -> Vec<f64> {
    let d = model.d();
    if items.is_empty() {
        return vec![0.0; d];
    }
    let mut gram = DMatrix::<f64>::zeros(d, d);
    let mut rhs = DVector::<f64>::zeros(d);
    for (&i, &v) in items.iter().zip(values) {
        let q = model.item_factors().row(i);
        let y = v - model.mu() - model.item_bias()[i] - user_bias;
        for a in 0..d {
            rhs[a] += q[a] * y;
            for b in 0..d {
                gram[(a, b)] += q[a] * q[b];
            }
        }
    }
    for a in 0..d {
        gram[(a, a)] += model.lambda();
    }
    gram.lu().solve(&rhs).expect("nonsingular").as_slice().to_vec()
}

fn score(model: &FactorModel, p: &[f64], j: usize) -> f64 {
    let q = model.item_factors().row(j);
    let mut s = model.item_bias()[j];
    for k in 0..p.len() {
        s += q[k] * p[k];
    }
    s
}

impl Instance<'_> {
    fn rated(&self) -> Vec<usize> {
        let mut r: Vec<usize> = self.history.iter().map(|h| h.0).chain(self.mutable.iter().copied()).collect();
        r.sort_unstable();
        r.dedup();
        r
    }

    /// Reference values for the mutable coordinates.
    pub fn reference(&self) -> Vec<f64> {
        let h_items: Vec<usize> = self.history.iter().map(|h| h.0).collect();
        let h_vals: Vec<f64> = self.history.iter().map(|h| h.1).collect();
        let p0 = latent(self.model, &h_items, &h_vals, self.user_bias);
        self.mutable
            .iter()
            .map(|&i| {
                let v = match self.history.iter().find(|h| h.0 == i) {
                    Some(h) => h.1,
                    None => score(self.model, &p0, i) + self.user_bias + self.model.mu(),
                };
                v.clamp(self.lo, self.hi)
            })
            .collect()
    }

    fn latent_at(&self, x: &[f64]) -> Vec<f64> {
        let rated = self.rated();
        let values: Vec<f64> = rated
            .iter()
            .map(|&i| match self.mutable.iter().position(|&j| j == i) {
                Some(k) => x[k],
                None => self.history.iter().find(|h| h.0 == i).unwrap().1,
            })
            .collect();
        latent(self.model, &rated, &values, self.user_bias)
    }

    pub fn margin(&self) -> f64 {
        let p = self.latent_at(&self.reference());
        let scale = (0..self.model.n_items())
            .map(|j| score(self.model, &p, j).abs())
            .fold(0.0, f64::max);
        (1e-6 * scale).max(1e-12)
    }

    pub fn feasible_at(&self, x: &[f64], delta: f64) -> bool {
        let p = self.latent_at(x);
        let rated = self.rated();
        let st = score(self.model, &p, self.target);
        let ahead = (0..self.model.n_items())
            .filter(|j| *j != self.target && !rated.contains(j))
            .filter(|&j| st - score(self.model, &p, j) < delta)
            .count();
        ahead < self.n
    }

    /// Minimum cost over a `points`-per-axis grid of the box, if any grid point is feasible.
    pub fn grid_min(&self, points: usize) -> Option<f64> {
        let k = self.mutable.len();
        let x0 = self.reference();
        let delta = self.margin();
        let step = (self.hi - self.lo) / (points - 1) as f64;
        let mut best: Option<f64> = None;
        let total = points.pow(k as u32);
        let mut x = vec![0.0; k];
        for idx in 0..total {
            let mut rem = idx;
            for xi in x.iter_mut() {
                *xi = self.lo + step * (rem % points) as f64;
                rem /= points;
            }
            if self.feasible_at(&x, delta) {
                let c = x.iter().zip(&x0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                if best.is_none_or(|b| c < b) {
                    best = Some(c);
                }
            }
        }
        best
    }
}

/// One user, random small model. Mutable items are drawn from the history
/// and, sometimes, from unseen items.
pub fn small_instance(seed: u64) -> (FactorModel, RatingDataset, usize, Vec<usize>, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(1..=2);
    let m = rng.random_range(6..=10);
    let rows = super::random_rows(&mut rng, m, d, 1.0);
    let mut model = FactorModel::from_item_factors(FactorMatrix::from_rows(&rows).unwrap(), 1)
        .with_mu(3.0)
        .with_lambda(0.1);
    for b in model.item_bias_mut() {
        *b = rng.random_range(-0.3..0.3);
    }
    model.user_bias_mut()[0] = rng.random_range(-0.2..0.2);
    let h = rng.random_range(2..=3);
    let ratings: Vec<Rating> = (0..h)
        .map(|i| Rating { user: 0, item: i, value: rng.random_range(1.0..=5.0) })
        .collect();
    let ds = RatingDataset::new(1, m, ratings, (1.0, 5.0)).unwrap();
    let k = rng.random_range(1..=2);
    // either edit history items, or edit one and add the first unseen item
    let mutable: Vec<usize> = if rng.random::<bool>() {
        (0..k).collect()
    } else if k == 2 {
        vec![0, h]
    } else {
        vec![h]
    };
    let first_free = h + 1;
    let target = rng.random_range(first_free..m);
    let n = rng.random_range(1..=3);
    (model, ds, target, mutable, n)
}
