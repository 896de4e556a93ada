#![allow(dead_code)]
pub mod recourse_oracle;

use cfaudit::ingest::{Rating, RatingDataset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `r_ui = offset + a_u · b_i` observed with probability `density`; every
/// user and item keeps at least `rank + 2` ratings.
pub fn planted(users: usize, items: usize, rank: usize, density: f64, seed: u64) -> RatingDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: Vec<Vec<f64>> = (0..users)
        .map(|_| (0..rank).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let b: Vec<Vec<f64>> = (0..items)
        .map(|_| (0..rank).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let mut mask = vec![vec![false; items]; users];
    for row in mask.iter_mut() {
        for cell in row.iter_mut() {
            *cell = rng.random::<f64>() < density;
        }
    }
    // Enough observations per row and column for the planted rank to be identifiable.
    let need = rank + 2;
    for u in 0..users {
        let mut i = 0;
        while mask[u].iter().filter(|&&x| x).count() < need.min(items) {
            mask[u][(u + i) % items] = true;
            i += 1;
        }
    }
    for i in 0..items {
        let mut u = 0;
        while (0..users).filter(|&v| mask[v][i]).count() < need.min(users) {
            mask[(i + u) % users][i] = true;
            u += 1;
        }
    }
    let mut ratings = Vec::new();
    for u in 0..users {
        for i in 0..items {
            if mask[u][i] {
                let v: f64 = a[u].iter().zip(&b[i]).map(|(x, y)| x * y).sum();
                ratings.push(Rating { user: u, item: i, value: 3.0 + v });
            }
        }
    }
    RatingDataset::new(users, items, ratings, (-100.0, 100.0)).unwrap()
}

/// Uniform noise ratings on a 1..5 scale.
pub fn noisy(users: usize, items: usize, density: f64, seed: u64) -> RatingDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ratings = Vec::new();
    for u in 0..users {
        for i in 0..items {
            if rng.random::<f64>() < density || i == u % items {
                ratings.push(Rating { user: u, item: i, value: rng.random_range(1.0..=5.0) });
            }
        }
    }
    RatingDataset::new(users, items, ratings, (1.0, 5.0)).unwrap()
}

pub fn random_rows(rng: &mut ChaCha8Rng, rows: usize, cols: usize, spread: f64) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.random_range(-spread..spread)).collect())
        .collect()
}
