//! Biased matrix factorization trained by alternating least squares.
//!
//! A model predicts `q_i · p_u + b_i + c_u + μ`. Training minimizes the squared
//! error over observed ratings plus `λ (‖P‖² + ‖Q‖² + ‖b‖² + ‖c‖²)` with μ held
//! at the training mean. Each half-sweep solves every user (resp. item) row
//! exactly as a ridge problem in which the bias is an extra coordinate paired
//! with a constant-one column, so the objective never increases.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::RatingDataset;
use crate::linalg::{dot, solve_spd, FactorMatrix};

pub const DEFAULT_LAMBDA: f64 = 0.1;
pub const DEFAULT_MAX_SWEEPS: usize = 20;
pub const DEFAULT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlsParams {
    pub d: usize,
    pub lambda: f64,
    pub max_sweeps: usize,
    /// Relative objective decrease below which training stops early.
    pub tol: f64,
    pub seed: u64,
}

impl AlsParams {
    pub fn new(d: usize) -> Self {
        AlsParams {
            d,
            lambda: DEFAULT_LAMBDA,
            max_sweeps: DEFAULT_MAX_SWEEPS,
            tol: DEFAULT_TOL,
            seed: 0,
        }
    }

    pub fn with_d(self, d: usize) -> Self {
        AlsParams { d, ..self }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    user_factors: FactorMatrix,
    item_factors: FactorMatrix,
    item_bias: Vec<f64>,
    user_bias: Vec<f64>,
    mu: f64,
    lambda: f64,
    seed: u64,
}

impl FactorModel {
    /// Assembles a model from its parts, checking shapes and finiteness.
    pub fn from_parts(
        user_factors: FactorMatrix,
        item_factors: FactorMatrix,
        item_bias: Vec<f64>,
        user_bias: Vec<f64>,
        mu: f64,
        lambda: f64,
        seed: u64,
    ) -> Result<Self> {
        if user_factors.ncols() != item_factors.ncols() {
            return Err(Error::InvalidArgument(format!(
                "user factors have {} columns, item factors {}",
                user_factors.ncols(),
                item_factors.ncols()
            )));
        }
        if item_bias.len() != item_factors.nrows() || user_bias.len() != user_factors.nrows() {
            return Err(Error::InvalidArgument(
                "bias vector lengths do not match factor rows".into(),
            ));
        }
        let finite = user_factors
            .as_slice()
            .iter()
            .chain(item_factors.as_slice())
            .chain(&item_bias)
            .chain(&user_bias)
            .chain([&mu, &lambda])
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::NonFinite("model parameters".into()));
        }
        if lambda < 0.0 {
            return Err(Error::InvalidArgument(format!("lambda {lambda} < 0")));
        }
        Ok(FactorModel {
            user_factors,
            item_factors,
            item_bias,
            user_bias,
            mu,
            lambda,
            seed,
        })
    }

    /// A model that only knows item factors; users and biases are zero.
    pub fn from_item_factors(item_factors: FactorMatrix, n_users: usize) -> Self {
        let (m, d) = (item_factors.nrows(), item_factors.ncols());
        FactorModel {
            user_factors: FactorMatrix::zeros(n_users, d),
            item_factors,
            item_bias: vec![0.0; m],
            user_bias: vec![0.0; n_users],
            mu: 0.0,
            lambda: 0.0,
            seed: 0,
        }
    }

    pub fn d(&self) -> usize {
        self.item_factors.ncols()
    }

    pub fn n_users(&self) -> usize {
        self.user_factors.nrows()
    }

    pub fn n_items(&self) -> usize {
        self.item_factors.nrows()
    }

    pub fn user_factors(&self) -> &FactorMatrix {
        &self.user_factors
    }

    pub fn item_factors(&self) -> &FactorMatrix {
        &self.item_factors
    }

    pub fn item_bias(&self) -> &[f64] {
        &self.item_bias
    }

    pub fn user_bias(&self) -> &[f64] {
        &self.user_bias
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn user_factors_mut(&mut self) -> &mut FactorMatrix {
        &mut self.user_factors
    }

    pub fn item_factors_mut(&mut self) -> &mut FactorMatrix {
        &mut self.item_factors
    }

    pub fn item_bias_mut(&mut self) -> &mut [f64] {
        &mut self.item_bias
    }

    pub fn user_bias_mut(&mut self) -> &mut [f64] {
        &mut self.user_bias
    }

    pub fn predict(&self, user: usize, item: usize) -> Result<f64> {
        if user >= self.n_users() {
            return Err(Error::IndexOutOfRange {
                what: "user",
                index: user,
                bound: self.n_users(),
            });
        }
        if item >= self.n_items() {
            return Err(Error::IndexOutOfRange {
                what: "item",
                index: item,
                bound: self.n_items(),
            });
        }
        Ok(self.predict_unchecked(user, item))
    }

    #[inline]
    pub(crate) fn predict_unchecked(&self, user: usize, item: usize) -> f64 {
        dot(self.item_factors.row(item), self.user_factors.row(user))
            + self.item_bias[item]
            + self.user_bias[user]
            + self.mu
    }

    fn check_dims(&self, data: &RatingDataset) -> Result<()> {
        if data.n_users() != self.n_users() || data.n_items() != self.n_items() {
            return Err(Error::InvalidArgument(format!(
                "model is {}×{} but dataset is {}×{}",
                self.n_users(),
                self.n_items(),
                data.n_users(),
                data.n_items()
            )));
        }
        Ok(())
    }

    fn penalty(&self) -> f64 {
        let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        self.lambda
            * (self.user_factors.squared_norm()
                + self.item_factors.squared_norm()
                + sq(&self.item_bias)
                + sq(&self.user_bias))
    }
}

/// Squared training error plus the ℓ2 penalty on every parameter except μ.
pub fn objective(model: &FactorModel, train: &RatingDataset) -> Result<f64> {
    model.check_dims(train)?;
    let sse: f64 = train
        .ratings()
        .iter()
        .map(|r| {
            let e = r.value - model.predict_unchecked(r.user, r.item);
            e * e
        })
        .sum();
    Ok(sse + model.penalty())
}

pub fn rmse(model: &FactorModel, test: &RatingDataset) -> Result<f64> {
    model.check_dims(test)?;
    if test.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let sse: f64 = test
        .ratings()
        .iter()
        .map(|r| {
            let e = r.value - model.predict_unchecked(r.user, r.item);
            e * e
        })
        .sum();
    Ok((sse / test.len() as f64).sqrt())
}

/// Objective values recorded while training: the initial value, then one per
/// half-sweep (users, items, users, ...).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingTrace {
    pub objective: Vec<f64>,
    pub sweeps: usize,
    /// Ridge systems that needed the singularity floor.
    pub floored_solves: usize,
}

pub fn train_als(train: &RatingDataset, params: &AlsParams) -> Result<FactorModel> {
    train_als_traced(train, params).map(|(m, _)| m)
}

pub fn train_als_traced(
    train: &RatingDataset,
    params: &AlsParams,
) -> Result<(FactorModel, TrainingTrace)> {
    let AlsParams {
        d,
        lambda,
        max_sweeps,
        tol,
        seed,
    } = *params;
    if d == 0 {
        return Err(Error::InvalidArgument("latent dimension must be ≥ 1".into()));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda must be ≥ 0, got {lambda}")));
    }
    let (n, m) = (train.n_users(), train.n_items());
    let mu = train.mean_rating().unwrap_or(0.0);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bound = 0.1 / (d as f64).sqrt();
    let mut init = |rows: usize| {
        let data = (0..rows * d).map(|_| rng.random_range(-bound..=bound)).collect();
        FactorMatrix::from_row_major(rows, d, data).expect("shape")
    };
    let user_factors = init(n);
    let item_factors = init(m);
    let mut model = FactorModel {
        user_factors,
        item_factors,
        item_bias: vec![0.0; m],
        user_bias: vec![0.0; n],
        mu,
        lambda,
        seed,
    };

    let rows: Vec<&[(usize, f64)]> = (0..n).map(|u| train.user_row(u)).collect();
    let cols = train.item_columns();

    let mut trace = TrainingTrace::default();
    let mut current = objective(&model, train)?;
    trace.objective.push(current);
    for _ in 0..max_sweeps {
        trace.floored_solves += solve_side(
            &mut model.user_factors,
            &mut model.user_bias,
            &model.item_factors,
            &model.item_bias,
            rows.iter().copied(),
            mu,
            lambda,
        );
        trace.objective.push(objective(&model, train)?);
        trace.floored_solves += solve_side(
            &mut model.item_factors,
            &mut model.item_bias,
            &model.user_factors,
            &model.user_bias,
            cols.iter().map(Vec::as_slice),
            mu,
            lambda,
        );
        let next = objective(&model, train)?;
        trace.objective.push(next);
        trace.sweeps += 1;
        if !next.is_finite() {
            return Err(Error::NonFinite(format!("objective after sweep {}", trace.sweeps)));
        }
        let decrease = (current - next) / current.abs().max(f64::MIN_POSITIVE);
        current = next;
        if decrease < tol {
            break;
        }
    }
    if trace.floored_solves > 0 {
        log::warn!(
            "d = {d}: {} singular ridge systems regularized with floor {:e}",
            trace.floored_solves,
            crate::linalg::RIDGE_FLOOR
        );
    }
    Ok((model, trace))
}

/// Re-solves every row of one side given the other side fixed. Returns the
/// number of floored solves.
fn solve_side<'a>(
    factors: &mut FactorMatrix,
    bias: &mut [f64],
    other: &FactorMatrix,
    other_bias: &[f64],
    observations: impl Iterator<Item = &'a [(usize, f64)]>,
    mu: f64,
    lambda: f64,
) -> usize {
    let d = factors.ncols();
    let mut floored = 0;
    for (row, obs) in observations.enumerate() {
        if obs.is_empty() {
            // Only the penalty sees this row; its minimizer is zero.
            factors.row_mut(row).fill(0.0);
            bias[row] = 0.0;
            continue;
        }
        let mut gram = DMatrix::<f64>::zeros(d + 1, d + 1);
        let mut rhs = DVector::<f64>::zeros(d + 1);
        for &(j, value) in obs {
            let x = other.row(j);
            let y = value - mu - other_bias[j];
            for a in 0..d {
                for b in 0..=a {
                    gram[(a, b)] += x[a] * x[b];
                }
                gram[(d, a)] += x[a];
                rhs[a] += x[a] * y;
            }
            gram[(d, d)] += 1.0;
            rhs[d] += y;
        }
        for a in 0..=d {
            for b in 0..a {
                gram[(b, a)] = gram[(a, b)];
            }
            gram[(a, a)] += lambda;
        }
        let (z, was_floored) = solve_spd(&gram, &rhs);
        floored += usize::from(was_floored);
        factors.row_mut(row).copy_from_slice(&z.as_slice()[..d]);
        bias[row] = z[d];
    }
    floored
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelGridEntry {
    pub d: usize,
    pub model: FactorModel,
    pub test_rmse: f64,
    pub train_seed: u64,
}

/// Trains and scores one model per latent dimension, in `d_list` order.
/// Entries are independent and may be trained in parallel; each uses
/// `base.seed`, so results do not depend on scheduling.
pub fn train_grid(
    train: &RatingDataset,
    test: &RatingDataset,
    d_list: &[usize],
    base: &AlsParams,
) -> Result<Vec<ModelGridEntry>> {
    if d_list.is_empty() {
        return Err(Error::InvalidArgument("empty latent dimension list".into()));
    }
    let fit = |&d: &usize| -> Result<ModelGridEntry> {
        let params = base.with_d(d);
        let wrap = |e| Error::Training {
            d,
            source: Box::new(e),
        };
        let model = train_als(train, &params).map_err(wrap)?;
        let test_rmse = rmse(&model, test).map_err(wrap)?;
        Ok(ModelGridEntry {
            d,
            model,
            test_rmse,
            train_seed: params.seed,
        })
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        d_list.par_iter().map(fit).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        d_list.iter().map(fit).collect()
    }
}
