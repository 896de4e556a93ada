//! User recourse: can a user, by changing the ratings they control, get a
//! target item into their Top-N slate, and at what cost?
//!
//! A problem is "compiled" into coordinates over the mutable ratings `x`. The
//! latent point is affine in `x` (see [`user_latent_map`]), so the score gap
//! between the target and competitor `j` is an affine function
//! `g_j(x) = w_j·x + h_j`. The target is in the slate when at most `N - 1`
//! competitors have `g_j(x) < δ`.
//!
//! Feasibility is a sufficient test (aligned probe when the user controls `d`
//! independent ratings without bounds, otherwise a fixed budget of candidate
//! rating vectors), so it under-approximates recourse. The cost minimization
//! fixes which `N - 1` competitors may stay ahead, which leaves a convex
//! projection problem; that is solved by projected gradient ascent on its
//! dual and re-run whenever the set of leading competitors changes.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factorize::FactorModel;
use crate::ingest::RatingDataset;
use crate::linalg::{dot, norm};

use super::audit::{aligned_reachable, AuditOptions};
use super::latent::{item_scores, user_latent_map};
use super::top_n;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostMode {
    /// Edits to the rating history, cost `‖r − r_u‖` over editable items.
    #[default]
    HistoryEdits,
    /// Ratings given to the current slate, cost `‖r − r̂‖` over the slate.
    Reactions,
}

impl std::str::FromStr for CostMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "history-edits" | "history" => Ok(CostMode::HistoryEdits),
            "reactions" => Ok(CostMode::Reactions),
            other => Err(Error::Config(format!("unknown cost mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RatingBounds {
    Bounded { lo: f64, hi: f64 },
    Unbounded,
}

impl RatingBounds {
    fn limits(&self) -> (f64, f64) {
        match *self {
            RatingBounds::Bounded { lo, hi } => (lo, hi),
            RatingBounds::Unbounded => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecourseOptions {
    /// Candidate rating vectors tried by the feasibility test.
    pub samples: usize,
    pub seed: u64,
    /// δ = `margin_rel` × largest absolute item score at the reference point.
    pub margin_rel: f64,
    /// Iteration cap for each projection solve.
    pub max_iters: usize,
    /// Feasible candidates used as starting points by the cost minimization.
    pub starts: usize,
    /// Box for random candidates when ratings are unbounded.
    pub sample_box: (f64, f64),
}

impl Default for RecourseOptions {
    fn default() -> Self {
        RecourseOptions {
            samples: 64,
            seed: 0,
            margin_rel: 1e-6,
            max_iters: 20_000,
            starts: 8,
            sample_box: (1.0, 5.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecourseProblem {
    pub user: usize,
    /// Observed ratings `(item, value)`, ascending by item.
    pub history: Vec<(usize, f64)>,
    pub user_bias: f64,
    /// Items whose rating the user may set; observed ones are edits, others are additions.
    pub mutable_set: Vec<usize>,
    pub target: usize,
    pub n: usize,
    pub cost_mode: CostMode,
    pub bounds: RatingBounds,
}

impl RecourseProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        model: &FactorModel,
        dataset: &RatingDataset,
        user: usize,
        target: usize,
        n: usize,
        mutable_set: Vec<usize>,
        cost_mode: CostMode,
        bounds: RatingBounds,
    ) -> Result<Self> {
        if user >= dataset.n_users() || user >= model.n_users() {
            return Err(Error::IndexOutOfRange {
                what: "user",
                index: user,
                bound: dataset.n_users().min(model.n_users()),
            });
        }
        let mut mutable_set = mutable_set;
        mutable_set.sort_unstable();
        mutable_set.dedup();
        let problem = RecourseProblem {
            user,
            history: dataset.user_row(user).to_vec(),
            user_bias: model.user_bias()[user],
            mutable_set,
            target,
            n,
            cost_mode,
            bounds,
        };
        problem.validate(model)?;
        Ok(problem)
    }

    /// Every observed rating is editable.
    pub fn history_edits(
        model: &FactorModel,
        dataset: &RatingDataset,
        user: usize,
        target: usize,
        n: usize,
        bounds: RatingBounds,
    ) -> Result<Self> {
        let omega = dataset.omega(user);
        Self::new(model, dataset, user, target, n, omega, CostMode::HistoryEdits, bounds)
    }

    /// The user reacts to the slate recommended for their current history.
    /// If the target already sits in that slate it is left out of the
    /// mutable set (the problem then has a zero-cost solution).
    pub fn reactions(
        model: &FactorModel,
        dataset: &RatingDataset,
        user: usize,
        target: usize,
        n: usize,
        bounds: RatingBounds,
    ) -> Result<Self> {
        if user >= dataset.n_users() {
            return Err(Error::IndexOutOfRange {
                what: "user",
                index: user,
                bound: dataset.n_users(),
            });
        }
        let slate = current_slate(model, dataset.user_row(user), model.user_bias()[user], n)?;
        let mutable = slate.into_iter().filter(|&j| j != target).collect();
        Self::new(model, dataset, user, target, n, mutable, CostMode::Reactions, bounds)
    }

    fn validate(&self, model: &FactorModel) -> Result<()> {
        let m = model.n_items();
        if self.n == 0 {
            return Err(Error::InvalidArgument("slate size N must be ≥ 1".into()));
        }
        if self.target >= m {
            return Err(Error::IndexOutOfRange {
                what: "item",
                index: self.target,
                bound: m,
            });
        }
        if let Some(&(i, _)) = self.history.iter().find(|&&(i, _)| i >= m) {
            return Err(Error::IndexOutOfRange {
                what: "item",
                index: i,
                bound: m,
            });
        }
        if let Some(&i) = self.mutable_set.iter().find(|&&i| i >= m) {
            return Err(Error::IndexOutOfRange {
                what: "item",
                index: i,
                bound: m,
            });
        }
        if self.history.iter().any(|&(i, _)| i == self.target) {
            return Err(Error::InvalidArgument(format!(
                "target {} is already rated",
                self.target
            )));
        }
        if self.mutable_set.contains(&self.target) {
            return Err(Error::InvalidArgument(format!(
                "target {} is in the mutable set",
                self.target
            )));
        }
        if let RatingBounds::Bounded { lo, hi } = self.bounds {
            if !(lo <= hi) {
                return Err(Error::InvalidArgument(format!("rating bounds [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

/// The Top-N unseen items for a history under `model`.
fn current_slate(
    model: &FactorModel,
    history: &[(usize, f64)],
    user_bias: f64,
    n: usize,
) -> Result<Vec<usize>> {
    let p0 = history_latent(model, history, user_bias)?;
    let scores = item_scores(model, &p0);
    let mut excluded = vec![false; model.n_items()];
    for &(i, _) in history {
        excluded[i] = true;
    }
    Ok(top_n(&scores, &excluded, n))
}

fn history_latent(model: &FactorModel, history: &[(usize, f64)], user_bias: f64) -> Result<Vec<f64>> {
    if history.is_empty() {
        return Ok(vec![0.0; model.d()]);
    }
    let items: Vec<usize> = history.iter().map(|&(i, _)| i).collect();
    let values: Vec<f64> = history.iter().map(|&(_, v)| v).collect();
    Ok(user_latent_map(model, &items, user_bias)?.apply(&values))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecourseOutcome {
    pub feasible: bool,
    /// Ratings over the observed and mutable items, ascending by item.
    pub r_star: Option<Vec<(usize, f64)>>,
    pub cost: Option<f64>,
}

impl RecourseOutcome {
    fn infeasible() -> Self {
        RecourseOutcome {
            feasible: false,
            r_star: None,
            cost: None,
        }
    }
}

/// A problem in mutable-coordinate form.
struct Compiled {
    n: usize,
    d: usize,
    lo: f64,
    hi: f64,
    /// Rated items after modification and whether each is mutable.
    rated: Vec<(usize, Option<usize>)>,
    fixed_values: Vec<f64>,
    reference: Vec<f64>,
    /// d × k part of the latent map acting on mutable coordinates.
    am: DMatrix<f64>,
    /// Latent point contribution of the fixed coordinates.
    base: DVector<f64>,
    p_ref: Vec<f64>,
    target_factor: Vec<f64>,
    /// Per competitor: gradient and offset of the score gap.
    w: Vec<Vec<f64>>,
    h: Vec<f64>,
    delta: f64,
}

impl Compiled {
    fn new(problem: &RecourseProblem, model: &FactorModel, opts: &RecourseOptions) -> Result<Self> {
        problem.validate(model)?;
        let (m, d) = (model.n_items(), model.d());
        let (lo, hi) = problem.bounds.limits();
        let clip = |v: f64| v.clamp(lo, hi);

        let p0 = history_latent(model, &problem.history, problem.user_bias)?;
        let predicted = |j: usize| {
            dot(model.item_factors().row(j), &p0)
                + model.item_bias()[j]
                + problem.user_bias
                + model.mu()
        };

        let mut rated: Vec<usize> = problem
            .history
            .iter()
            .map(|&(i, _)| i)
            .chain(problem.mutable_set.iter().copied())
            .collect();
        rated.sort_unstable();
        rated.dedup();

        let observed = |i: usize| {
            problem
                .history
                .binary_search_by_key(&i, |&(j, _)| j)
                .ok()
                .map(|k| problem.history[k].1)
        };
        let mut slots = Vec::with_capacity(rated.len());
        let mut fixed_values = Vec::new();
        let mut reference = Vec::new();
        for &i in &rated {
            if problem.mutable_set.binary_search(&i).is_ok() {
                slots.push((i, Some(reference.len())));
                reference.push(clip(observed(i).unwrap_or_else(|| predicted(i))));
            } else {
                slots.push((i, None));
                fixed_values.push(observed(i).expect("fixed items are observed"));
            }
        }
        let k = reference.len();

        let (am, base) = if rated.is_empty() {
            (DMatrix::zeros(d, 0), DVector::zeros(d))
        } else {
            let map = user_latent_map(model, &rated, problem.user_bias)?;
            let a = map.matrix();
            let mut am = DMatrix::zeros(d, k);
            let mut base = map.offset().clone();
            let mut f = 0;
            for (col, &(_, slot)) in slots.iter().enumerate() {
                match slot {
                    Some(s) => am.set_column(s, &a.column(col)),
                    None => {
                        base += a.column(col) * fixed_values[f];
                        f += 1;
                    }
                }
            }
            (am, base)
        };

        let p_ref = (&am * DVector::from_column_slice(&reference) + &base)
            .as_slice()
            .to_vec();
        let scale = item_scores(model, &p_ref)
            .iter()
            .fold(0.0f64, |acc, s| acc.max(s.abs()));
        let delta = (opts.margin_rel * scale).max(1e-12);

        let q = model.item_factors();
        let t = problem.target;
        let qt = q.row(t).to_vec();
        let mut excluded = vec![false; m];
        for &i in &rated {
            excluded[i] = true;
        }
        let mut w = Vec::new();
        let mut h = Vec::new();
        for j in (0..m).filter(|&j| j != t && !excluded[j]) {
            let diff: Vec<f64> = qt.iter().zip(q.row(j)).map(|(a, b)| a - b).collect();
            let grad = am.transpose() * DVector::from_column_slice(&diff);
            w.push(grad.as_slice().to_vec());
            h.push(dot(&diff, base.as_slice()) + model.item_bias()[t] - model.item_bias()[j]);
        }

        Ok(Compiled {
            n: problem.n,
            d,
            lo,
            hi,
            rated: slots,
            fixed_values,
            reference,
            am,
            base,
            p_ref,
            target_factor: qt,
            w,
            h,
            delta,
        })
    }

    fn k(&self) -> usize {
        self.reference.len()
    }

    fn gaps(&self, x: &[f64]) -> impl Iterator<Item = f64> + '_ {
        let x = x.to_vec();
        self.w.iter().zip(&self.h).map(move |(w, h)| dot(w, &x) + h)
    }

    fn is_feasible(&self, x: &[f64], delta: f64) -> bool {
        let mut ahead = 0;
        for g in self.gaps(x) {
            if g < delta {
                ahead += 1;
                if ahead >= self.n {
                    return false;
                }
            }
        }
        true
    }

    fn cost(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.reference)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    fn clip(&self, x: &mut [f64]) {
        for v in x {
            *v = v.clamp(self.lo, self.hi);
        }
    }

    fn bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    /// Rank of the mutable items' factor rows.
    fn mutable_rank(&self, model: &FactorModel) -> usize {
        let mutable: Vec<usize> = self
            .rated
            .iter()
            .filter_map(|&(i, s)| s.map(|_| i))
            .collect();
        if mutable.is_empty() {
            return 0;
        }
        let q = model.item_factors();
        let mat = DMatrix::from_fn(mutable.len(), self.d, |r, c| q.row(mutable[r])[c]);
        mat.rank(1e-10)
    }

    fn full_vector(&self, x: &[f64]) -> Vec<(usize, f64)> {
        let mut f = 0;
        self.rated
            .iter()
            .map(|&(i, slot)| match slot {
                Some(s) => (i, x[s]),
                None => {
                    f += 1;
                    (i, self.fixed_values[f - 1])
                }
            })
            .collect()
    }

    /// Candidate rating vectors: the reference point, the box corner that
    /// pushes the latent point furthest along the target factor, clipped
    /// least-squares preimages of two geometric ladders of latent points
    /// (`α·q̂_t` and `p_ref + α·q̂_t`), then uniform box samples.
    fn candidates(&self, opts: &RecourseOptions, salt: u64, extended: bool) -> Vec<Vec<f64>> {
        let k = self.k();
        let mut out = vec![self.reference.clone()];
        if k == 0 {
            return out;
        }
        let budget = opts.samples.max(1);
        let qn = norm(&self.target_factor);
        let direction: Vec<f64> = if qn > 0.0 {
            self.target_factor.iter().map(|v| v / qn).collect()
        } else {
            vec![0.0; self.d]
        };
        let push_dir = self.am.transpose() * DVector::from_column_slice(&direction);
        if self.bounded() {
            out.push(
                push_dir
                    .iter()
                    .map(|&g| if g >= 0.0 { self.hi } else { self.lo })
                    .collect(),
            );
        }

        if let Ok(pinv) = self.am.clone().pseudo_inverse(1e-12) {
            let scale = norm(&self.p_ref).max(1e-3);
            let top = if extended { 64 } else { 12 };
            let dir = DVector::from_column_slice(&direction);
            let p_ref = DVector::from_column_slice(&self.p_ref);
            for e in -4..top {
                let alpha = scale * 2f64.powi(e);
                for anchor in [DVector::zeros(self.d), p_ref.clone()] {
                    let want = &anchor + &dir * alpha - &self.base;
                    let mut x = (&pinv * want).as_slice().to_vec();
                    self.clip(&mut x);
                    out.push(x);
                }
            }
        }
        if !extended {
            out.truncate(budget);
        }

        let (blo, bhi) = if self.bounded() {
            (self.lo, self.hi)
        } else {
            opts.sample_box
        };
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ salt);
        while out.len() < budget {
            out.push((0..k).map(|_| blo + (bhi - blo) * rng.random::<f64>()).collect());
        }
        out
    }
}

fn salt(problem: &RecourseProblem) -> u64 {
    (problem.user as u64)
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((problem.target as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9))
}

/// Whether the aligned-probe shortcut applies and succeeds.
fn aligned_shortcut(problem: &RecourseProblem, model: &FactorModel, c: &Compiled) -> Result<bool> {
    if matches!(problem.bounds, RatingBounds::Unbounded) && c.mutable_rank(model) == model.d() {
        aligned_reachable(model, problem.target, problem.n, AuditOptions::default())
    } else {
        Ok(false)
    }
}

/// Sufficient test for recourse. `true` is always backed by a concrete
/// rating vector (or by the aligned-probe argument when ratings are
/// unbounded and the user controls `d` independent items); `false` may be
/// a miss.
pub fn recourse_feasible(
    problem: &RecourseProblem,
    model: &FactorModel,
    opts: &RecourseOptions,
) -> Result<bool> {
    let c = Compiled::new(problem, model, opts)?;
    if aligned_shortcut(problem, model, &c)? {
        return Ok(true);
    }
    Ok(c
        .candidates(opts, salt(problem), false)
        .iter()
        .any(|x| c.is_feasible(x, c.delta)))
}

/// Minimizes the cost of getting the target into the slate.
pub fn solve_recourse(
    problem: &RecourseProblem,
    model: &FactorModel,
    opts: &RecourseOptions,
) -> Result<RecourseOutcome> {
    let c = Compiled::new(problem, model, opts)?;
    if c.is_feasible(&c.reference, c.delta) {
        return Ok(RecourseOutcome {
            feasible: true,
            r_star: Some(c.full_vector(&c.reference)),
            cost: Some(0.0),
        });
    }
    let shortcut = aligned_shortcut(problem, model, &c)?;
    let mut starts: Vec<Vec<f64>> = c
        .candidates(opts, salt(problem), shortcut)
        .into_iter()
        .filter(|x| c.is_feasible(x, c.delta))
        .collect();
    if starts.is_empty() {
        if shortcut {
            // The aligned argument guarantees a point exists but none of the
            // ladder rungs hit it.
            return Err(Error::NonConvergence {
                best_residual: f64::INFINITY,
            });
        }
        return Ok(RecourseOutcome::infeasible());
    }
    starts.sort_by(|a, b| c.cost(a).total_cmp(&c.cost(b)));
    starts.dedup();
    starts.truncate(opts.starts.max(1));

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut best_residual = f64::INFINITY;
    for start in starts {
        let (x, residual, converged) = descend(&c, start, opts.max_iters);
        best_residual = best_residual.min(residual);
        if converged {
            let cost = c.cost(&x);
            if best.as_ref().is_none_or(|(_, b)| cost < *b) {
                best = Some((x, cost));
            }
        }
    }
    match best {
        Some((x, cost)) => Ok(RecourseOutcome {
            feasible: true,
            r_star: Some(c.full_vector(&x)),
            cost: Some(cost),
        }),
        None => Err(Error::NonConvergence { best_residual }),
    }
}

/// Improves a feasible start. Returns the final point, the smallest
/// projection residual seen and whether any projection converged.
fn descend(c: &Compiled, start: Vec<f64>, max_iters: usize) -> (Vec<f64>, f64, bool) {
    let mut x = start;
    let mut residual = f64::INFINITY;
    let mut converged = false;
    let mut last_piece: Option<Vec<usize>> = None;
    for _ in 0..8 {
        let piece = allowed_ahead(c, &x);
        if last_piece.as_ref() == Some(&piece) {
            break;
        }
        let rows: Vec<usize> = (0..c.w.len()).filter(|j| !piece.contains(j)).collect();
        let (proj, res, ok) = project(c, &rows, 2.0 * c.delta, max_iters);
        residual = residual.min(res);
        converged |= ok;
        let candidate = pull_back(c, &x, &proj, &rows);
        if c.cost(&candidate) < c.cost(&x) - 1e-12 {
            x = candidate;
        } else {
            break;
        }
        last_piece = Some(piece);
    }
    (x, residual, converged)
}

/// The `N - 1` competitors with the smallest score gaps at `x`; these may
/// stay ahead of the target.
fn allowed_ahead(c: &Compiled, x: &[f64]) -> Vec<usize> {
    let gaps: Vec<f64> = c.gaps(x).collect();
    let mut order: Vec<usize> = (0..gaps.len()).collect();
    order.sort_by(|&a, &b| gaps[a].total_cmp(&gaps[b]).then(a.cmp(&b)));
    order.truncate(c.n - 1);
    order.sort_unstable();
    order
}

/// Euclidean projection of the reference point onto
/// `{x in box : w_j·x + h_j ≥ margin for j in rows}` by accelerated
/// projected gradient ascent on the dual; the box stays in the primal.
fn project(c: &Compiled, rows: &[usize], margin: f64, max_iters: usize) -> (Vec<f64>, f64, bool) {
    let k = c.k();
    let x_of = |lambda: &[f64]| -> Vec<f64> {
        let mut x = c.reference.clone();
        for (&j, &l) in rows.iter().zip(lambda) {
            if l != 0.0 {
                for (xi, wi) in x.iter_mut().zip(&c.w[j]) {
                    *xi += l * wi;
                }
            }
        }
        c.clip(&mut x);
        x
    };
    let lipschitz: f64 = rows.iter().map(|&j| dot(&c.w[j], &c.w[j])).sum();
    if rows.is_empty() || lipschitz == 0.0 || k == 0 {
        return (x_of(&vec![0.0; rows.len()]), 0.0, true);
    }
    let rhs: Vec<f64> = rows.iter().map(|&j| margin - c.h[j]).collect();
    let tol = 1e-10 * (1.0 + rhs.iter().fold(0.0f64, |a, v| a.max(v.abs())));

    let mut lambda = vec![0.0; rows.len()];
    let mut y = lambda.clone();
    let mut t = 1.0f64;
    let mut mapping = f64::INFINITY;
    for _ in 0..max_iters {
        let x = x_of(&y);
        let next: Vec<f64> = rows
            .iter()
            .zip(&y)
            .zip(&rhs)
            .map(|((&j, &yj), &b)| (yj + (b - dot(&c.w[j], &x)) / lipschitz).max(0.0))
            .collect();
        mapping = lipschitz
            * next
                .iter()
                .zip(&y)
                .fold(0.0f64, |a, (n, o)| a.max((n - o).abs()));
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (t - 1.0) / t_next;
        // Restart momentum when it points uphill in the dual objective.
        let uphill: f64 = next
            .iter()
            .zip(&lambda)
            .zip(&y)
            .map(|((n, l), yy)| (yy - n) * (n - l))
            .sum();
        if uphill > 0.0 {
            t = 1.0;
            y = next.clone();
        } else {
            y = next
                .iter()
                .zip(&lambda)
                .map(|(n, l)| n + momentum * (n - l))
                .collect();
            t = t_next;
        }
        lambda = next;
        if mapping <= tol {
            return (x_of(&lambda), mapping, true);
        }
    }
    (x_of(&lambda), mapping, false)
}

/// Moves from the feasible `start` toward `target` as far as the selected
/// margin rows allow, then backs off until the full Top-N test passes.
fn pull_back(c: &Compiled, start: &[f64], target: &[f64], rows: &[usize]) -> Vec<f64> {
    let at = |t: f64| -> Vec<f64> {
        start
            .iter()
            .zip(target)
            .map(|(s, e)| s + t * (e - s))
            .collect()
    };
    let mut t_max = 1.0f64;
    for &j in rows {
        let g0 = dot(&c.w[j], start) + c.h[j];
        let g1 = dot(&c.w[j], target) + c.h[j];
        if g1 < c.delta && g0 > g1 {
            t_max = t_max.min(((g0 - c.delta) / (g0 - g1)).max(0.0));
        }
    }
    let mut t = t_max;
    for _ in 0..64 {
        let x = at(t);
        if c.is_feasible(&x, c.delta) {
            return x;
        }
        t *= 0.5;
    }
    start.to_vec()
}

/// Share of the user's unseen, non-mutable items for which
/// [`recourse_feasible`] holds, in percent.
#[allow(clippy::too_many_arguments)]
pub fn recourse_percentage(
    model: &FactorModel,
    dataset: &RatingDataset,
    user: usize,
    n: usize,
    mutable_set: &[usize],
    cost_mode: CostMode,
    bounds: RatingBounds,
    opts: &RecourseOptions,
) -> Result<f64> {
    if user >= dataset.n_users() {
        return Err(Error::IndexOutOfRange {
            what: "user",
            index: user,
            bound: dataset.n_users(),
        });
    }
    let mut blocked = vec![false; model.n_items()];
    for i in dataset.omega(user).into_iter().chain(mutable_set.iter().copied()) {
        if i < blocked.len() {
            blocked[i] = true;
        }
    }
    let targets: Vec<usize> = (0..model.n_items()).filter(|&i| !blocked[i]).collect();
    if targets.is_empty() {
        return Err(Error::InvalidArgument(format!("user {user} has no unseen items")));
    }
    let mut reachable = 0usize;
    for &t in &targets {
        let problem = RecourseProblem::new(
            model,
            dataset,
            user,
            t,
            n,
            mutable_set.to_vec(),
            cost_mode,
            bounds,
        )?;
        if recourse_feasible(&problem, model, opts)? {
            reachable += 1;
        }
    }
    Ok(100.0 * reachable as f64 / targets.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DifficultyReport {
    /// Mean cost over feasible pairs; `None` when no pair is feasible.
    pub mean_cost: Option<f64>,
    pub feasible_fraction: f64,
    pub evaluated_pairs: usize,
    pub feasible_pairs: usize,
    pub rows: Vec<RecourseRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecourseRow {
    pub user: usize,
    pub item: usize,
    pub feasible: bool,
    pub cost: Option<f64>,
}

/// Average recourse cost over (user, item) pairs. Pairs where the item is
/// already rated (or is part of the mutable set) are skipped.
#[allow(clippy::too_many_arguments)]
pub fn recourse_difficulty(
    model: &FactorModel,
    dataset: &RatingDataset,
    users: &[usize],
    items: &[usize],
    n: usize,
    cost_mode: CostMode,
    bounds: RatingBounds,
    opts: &RecourseOptions,
) -> Result<DifficultyReport> {
    if users.is_empty() || items.is_empty() {
        return Err(Error::InvalidArgument("user and item lists must be non-empty".into()));
    }
    let mut rows = Vec::new();
    for &u in users {
        let omega = if u < dataset.n_users() { dataset.omega(u) } else { Vec::new() };
        for &i in items {
            if omega.binary_search(&i).is_ok() {
                continue;
            }
            let problem = match cost_mode {
                CostMode::HistoryEdits => {
                    RecourseProblem::history_edits(model, dataset, u, i, n, bounds)?
                }
                CostMode::Reactions => RecourseProblem::reactions(model, dataset, u, i, n, bounds)?,
            };
            let outcome = solve_recourse(&problem, model, opts)?;
            rows.push(RecourseRow {
                user: u,
                item: i,
                feasible: outcome.feasible,
                cost: outcome.cost,
            });
        }
    }
    let costs: Vec<f64> = rows.iter().filter_map(|r| r.cost).collect();
    let evaluated = rows.len();
    Ok(DifficultyReport {
        mean_cost: (!costs.is_empty()).then(|| costs.iter().sum::<f64>() / costs.len() as f64),
        feasible_fraction: if evaluated == 0 {
            0.0
        } else {
            costs.len() as f64 / evaluated as f64
        },
        evaluated_pairs: evaluated,
        feasible_pairs: costs.len(),
        rows,
    })
}

/// `user,item,feasible,cost` rows; the cost column is empty when infeasible.
pub fn write_recourse_csv<W: Write>(rows: &[RecourseRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "user,item,feasible,cost")?;
    for r in rows {
        match r.cost {
            Some(c) => writeln!(out, "{},{},{},{:.6}", r.user, r.item, r.feasible, c)?,
            None => writeln!(out, "{},{},{},", r.user, r.item, r.feasible)?,
        }
    }
    Ok(())
}
