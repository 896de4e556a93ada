//! Seeded synthetic ratings: a planted low-rank preference structure plus
//! item popularity, user offsets and Gaussian noise, clipped to the scale.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Rating, RatingDataset};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub users: usize,
    pub items: usize,
    pub rank: usize,
    /// Probability that a given (user, item) pair is observed.
    pub density: f64,
    /// Standard deviation of the additive rating noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            users: 200,
            items: 100,
            rank: 2,
            density: 0.5,
            noise: 0.5,
            seed: 0,
        }
    }
}

pub const SCALE: (f64, f64) = (1.0, 5.0);

pub fn generate(spec: &SyntheticSpec) -> Result<RatingDataset> {
    if spec.users == 0 || spec.items == 0 || spec.rank == 0 {
        return Err(Error::InvalidArgument("synthetic sizes must be ≥ 1".into()));
    }
    if !(spec.density > 0.0 && spec.density <= 1.0) || !(spec.noise >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "density {} / noise {} out of range",
            spec.density, spec.noise
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let noise = Normal::new(0.0, spec.noise).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let spread = 1.0 / (spec.rank as f64).sqrt();

    let mut draw = |k: usize| -> Vec<f64> { (0..k).map(|_| unit.sample(&mut rng) * spread).collect() };
    let user_f: Vec<Vec<f64>> = (0..spec.users).map(|_| draw(spec.rank)).collect();
    let item_f: Vec<Vec<f64>> = (0..spec.items).map(|_| draw(spec.rank)).collect();
    let item_bias: Vec<f64> = (0..spec.items).map(|_| 0.5 * unit.sample(&mut rng)).collect();
    let user_bias: Vec<f64> = (0..spec.users).map(|_| 0.3 * unit.sample(&mut rng)).collect();
    // Popular items are observed more often.
    let popularity: Vec<f64> = (0..spec.items)
        .map(|i| 0.5 + (item_bias[i] + 0.5).clamp(0.0, 1.0))
        .collect();

    let mut ratings = Vec::new();
    let mut item_seen = vec![false; spec.items];
    for u in 0..spec.users {
        let mut any = false;
        for i in 0..spec.items {
            if rng.random::<f64>() < (spec.density * popularity[i]).min(1.0) {
                ratings.push((u, i));
                any = true;
                item_seen[i] = true;
            }
        }
        if !any {
            let i = rng.random_range(0..spec.items);
            ratings.push((u, i));
            item_seen[i] = true;
        }
    }
    for (i, seen) in item_seen.iter().enumerate() {
        if !seen {
            ratings.push((rng.random_range(0..spec.users), i));
        }
    }
    ratings.sort_unstable();
    ratings.dedup();

    let ratings = ratings
        .into_iter()
        .map(|(u, i)| {
            let signal: f64 = user_f[u].iter().zip(&item_f[i]).map(|(a, b)| a * b).sum();
            let value = 3.5 + signal + item_bias[i] + user_bias[u] + noise.sample(&mut rng);
            Rating {
                user: u,
                item: i,
                value: value.clamp(SCALE.0, SCALE.1),
            }
        })
        .collect();
    RatingDataset::new(spec.users, spec.items, ratings, SCALE)
}
