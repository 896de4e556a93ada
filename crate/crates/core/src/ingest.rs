//! Rating datasets: parsing, implicit-feedback conversion, holdout splits and
//! popularity filtering.
//!
//! Every constructor funnels through [`RatingDataset::new`], which checks the
//! structural invariants (index bounds, unique user/item pairs, ratings inside
//! the declared scale) and builds the per-user observed sets.

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Users with fewer ratings than this never contribute to a test split.
pub const MIN_RATINGS_FOR_HOLDOUT: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rating {
    pub user: usize,
    pub item: usize,
    pub value: f64,
}

/// What to do when the same (user, item) pair appears twice in an input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DuplicatePolicy {
    #[default]
    Error,
    LastWins,
}

/// Sparse user × item ratings.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingDataset {
    n_users: usize,
    n_items: usize,
    ratings: Vec<Rating>,
    /// Per user: (item, rating) sorted by item.
    rows: Vec<Vec<(usize, f64)>>,
    scale: (f64, f64),
    user_ids: Vec<String>,
    item_ids: Vec<String>,
}

impl RatingDataset {
    /// Builds a dataset with positional ids ("0", "1", ...).
    pub fn new(
        n_users: usize,
        n_items: usize,
        ratings: Vec<Rating>,
        scale: (f64, f64),
    ) -> Result<Self> {
        let user_ids = (0..n_users).map(|u| u.to_string()).collect();
        let item_ids = (0..n_items).map(|i| i.to_string()).collect();
        Self::with_ids(user_ids, item_ids, ratings, scale)
    }

    pub fn with_ids(
        user_ids: Vec<String>,
        item_ids: Vec<String>,
        ratings: Vec<Rating>,
        scale: (f64, f64),
    ) -> Result<Self> {
        let n_users = user_ids.len();
        let n_items = item_ids.len();
        let (lo, hi) = scale;
        if !(lo <= hi) {
            return Err(Error::InvalidDataset(format!(
                "rating scale ({lo}, {hi}) is not an interval"
            )));
        }
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_users];
        for r in &ratings {
            if r.user >= n_users {
                return Err(Error::IndexOutOfRange {
                    what: "user",
                    index: r.user,
                    bound: n_users,
                });
            }
            if r.item >= n_items {
                return Err(Error::IndexOutOfRange {
                    what: "item",
                    index: r.item,
                    bound: n_items,
                });
            }
            if !r.value.is_finite() || r.value < lo || r.value > hi {
                return Err(Error::InvalidDataset(format!(
                    "rating {} for ({}, {}) outside scale [{lo}, {hi}]",
                    r.value, r.user, r.item
                )));
            }
            rows[r.user].push((r.item, r.value));
        }
        for (u, row) in rows.iter_mut().enumerate() {
            row.sort_by_key(|&(i, _)| i);
            if let Some(w) = row.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(Error::InvalidDataset(format!(
                    "duplicate rating for user {u}, item {}",
                    w[0].0
                )));
            }
        }
        Ok(RatingDataset {
            n_users,
            n_items,
            ratings,
            rows,
            scale,
            user_ids,
            item_ids,
        })
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn len(&self) -> usize {
        self.ratings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratings.is_empty()
    }

    pub fn ratings(&self) -> &[Rating] {
        &self.ratings
    }

    pub fn scale(&self) -> (f64, f64) {
        self.scale
    }

    pub fn user_ids(&self) -> &[String] {
        &self.user_ids
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    /// Observed items of `user`, ascending.
    pub fn omega(&self, user: usize) -> Vec<usize> {
        self.rows[user].iter().map(|&(i, _)| i).collect()
    }

    /// (item, rating) pairs of `user`, ascending by item.
    pub fn user_row(&self, user: usize) -> &[(usize, f64)] {
        &self.rows[user]
    }

    pub fn rating(&self, user: usize, item: usize) -> Option<f64> {
        let row = &self.rows[user];
        row.binary_search_by_key(&item, |&(i, _)| i)
            .ok()
            .map(|k| row[k].1)
    }

    /// Per item: (user, rating) pairs, ascending by user.
    pub fn item_columns(&self) -> Vec<Vec<(usize, f64)>> {
        let mut cols = vec![Vec::new(); self.n_items];
        for (u, row) in self.rows.iter().enumerate() {
            for &(i, v) in row {
                cols[i].push((u, v));
            }
        }
        cols
    }

    pub fn item_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_items];
        for r in &self.ratings {
            counts[r.item] += 1;
        }
        counts
    }

    pub fn mean_rating(&self) -> Option<f64> {
        if self.ratings.is_empty() {
            None
        } else {
            Some(self.ratings.iter().map(|r| r.value).sum::<f64>() / self.ratings.len() as f64)
        }
    }

    /// Same users and items, different ratings.
    fn derive(&self, ratings: Vec<Rating>) -> Result<Self> {
        Self::with_ids(
            self.user_ids.clone(),
            self.item_ids.clone(),
            ratings,
            self.scale,
        )
    }
}

/// Dense index assignment in first-appearance order.
#[derive(Default)]
struct Interner {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl Interner {
    fn intern(&mut self, id: &str) -> usize {
        if let Some(&k) = self.index.get(id) {
            return k;
        }
        let k = self.ids.len();
        self.ids.push(id.to_owned());
        self.index.insert(id.to_owned(), k);
        k
    }
}

/// Parses `user<sep>item<sep>rating[<sep>ignored...]` lines. Blank lines are
/// skipped; ids are arbitrary tokens.
pub fn parse_explicit_ratings<R: BufRead>(
    reader: R,
    separator: &str,
    duplicates: DuplicatePolicy,
) -> Result<RatingDataset> {
    if separator.is_empty() {
        return Err(Error::InvalidArgument("empty field separator".into()));
    }
    let mut users = Interner::default();
    let mut items = Interner::default();
    let mut ratings: Vec<Rating> = Vec::new();
    let mut seen: HashMap<(usize, usize), usize> = HashMap::new();

    for (k, line) in reader.lines().enumerate() {
        let line_no = k + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(separator).collect();
        if fields.len() < 3 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected at least 3 fields, found {}", fields.len()),
            });
        }
        let value: f64 = fields[2].trim().parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("rating {:?} is not a number", fields[2]),
        })?;
        if !value.is_finite() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("rating {:?} is not finite", fields[2]),
            });
        }
        let (user_tok, item_tok) = (fields[0].trim(), fields[1].trim());
        let user = users.intern(user_tok);
        let item = items.intern(item_tok);
        let rating = Rating { user, item, value };
        match seen.entry((user, item)) {
            Entry::Vacant(slot) => {
                slot.insert(ratings.len());
                ratings.push(rating);
            }
            Entry::Occupied(slot) => match duplicates {
                DuplicatePolicy::Error => {
                    return Err(Error::DuplicateRating {
                        line: line_no,
                        user: user_tok.to_owned(),
                        item: item_tok.to_owned(),
                    })
                }
                DuplicatePolicy::LastWins => ratings[*slot.get()] = rating,
            },
        }
    }

    let scale = observed_scale(&ratings);
    RatingDataset::with_ids(users.ids, items.ids, ratings, scale)
}

fn observed_scale(ratings: &[Rating]) -> (f64, f64) {
    if ratings.is_empty() {
        return (0.0, 0.0);
    }
    ratings.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
        (lo.min(r.value), hi.max(r.value))
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlayRecord {
    pub user: String,
    pub item: String,
    pub count: u64,
}

/// Reads tab-separated `user<TAB>item<TAB>count` lines.
pub fn parse_play_counts<R: BufRead>(reader: R) -> Result<Vec<PlayRecord>> {
    let mut out = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line_no = k + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim_end_matches('\r').split('\t').collect();
        if fields.len() < 3 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        let count: i64 = fields[2].trim().parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("play count {:?} is not an integer", fields[2]),
        })?;
        if count <= 0 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("play count must be positive, got {count}"),
            });
        }
        out.push(PlayRecord {
            user: fields[0].trim().to_owned(),
            item: fields[1].trim().to_owned(),
            count: count as u64,
        });
    }
    Ok(out)
}

/// Log-scaled play count on the 1..5 scale, relative to the largest aggregated count.
pub fn play_count_rating(count: u64, max_count: u64) -> f64 {
    1.0 + 4.0 * (count as f64).ln_1p() / (max_count as f64).ln_1p()
}

/// Aggregates repeated (user, item) records and maps the summed counts to
/// ratings with [`play_count_rating`]. The scale is fixed to (1, 5).
pub fn plays_to_ratings(records: &[PlayRecord]) -> Result<RatingDataset> {
    let mut users = Interner::default();
    let mut items = Interner::default();
    let mut totals: Vec<(usize, usize, u64)> = Vec::new();
    let mut slot: HashMap<(usize, usize), usize> = HashMap::new();
    for (k, rec) in records.iter().enumerate() {
        if rec.count == 0 {
            return Err(Error::Parse {
                line: k + 1,
                message: "play count must be positive, got 0".into(),
            });
        }
        let key = (users.intern(&rec.user), items.intern(&rec.item));
        match slot.entry(key) {
            Entry::Vacant(e) => {
                e.insert(totals.len());
                totals.push((key.0, key.1, rec.count));
            }
            Entry::Occupied(e) => totals[*e.get()].2 += rec.count,
        }
    }
    let max_count = totals.iter().map(|t| t.2).max().unwrap_or(1);
    let ratings = totals
        .into_iter()
        .map(|(user, item, c)| Rating {
            user,
            item,
            value: play_count_rating(c, max_count).clamp(1.0, 5.0),
        })
        .collect();
    RatingDataset::with_ids(users.ids, items.ids, ratings, (1.0, 5.0))
}

/// Per-user random holdout. Users with at least [`MIN_RATINGS_FOR_HOLDOUT`]
/// ratings send `round(test_fraction * |Ω_u|)` of them to the test side
/// (capped so one rating stays in train). Both halves keep the full user and
/// item index space.
pub fn split_holdout(
    dataset: &RatingDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(RatingDataset, RatingDataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(dataset.len());
    let mut test = Vec::new();
    for (u, row) in dataset.rows.iter().enumerate() {
        let n = row.len();
        let n_test = if n < MIN_RATINGS_FOR_HOLDOUT {
            0
        } else {
            ((test_fraction * n as f64).round() as usize).min(n - 1)
        };
        let mut held = vec![false; n];
        if n_test > 0 {
            for k in index::sample(&mut rng, n, n_test) {
                held[k] = true;
            }
        }
        for (&(item, value), is_test) in row.iter().zip(held) {
            let r = Rating {
                user: u,
                item,
                value,
            };
            if is_test {
                test.push(r);
            } else {
                train.push(r);
            }
        }
    }
    Ok((dataset.derive(train)?, dataset.derive(test)?))
}

/// Keeps the `k` most-rated items (ties to the lower index), re-indexes the
/// surviving items in their original order and drops users left without
/// ratings.
pub fn filter_top_items(dataset: &RatingDataset, k: usize) -> Result<RatingDataset> {
    if k == 0 {
        return Err(Error::InvalidArgument("item filter k must be ≥ 1".into()));
    }
    let counts = dataset.item_counts();
    let mut order: Vec<usize> = (0..dataset.n_items).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    let mut keep: Vec<usize> = order.into_iter().take(k).collect();
    keep.sort_unstable();

    let mut item_map = vec![usize::MAX; dataset.n_items];
    for (new, &old) in keep.iter().enumerate() {
        item_map[old] = new;
    }
    let mut user_map = vec![usize::MAX; dataset.n_users];
    let mut user_ids = Vec::new();
    for (u, row) in dataset.rows.iter().enumerate() {
        if row.iter().any(|&(i, _)| item_map[i] != usize::MAX) {
            user_map[u] = user_ids.len();
            user_ids.push(dataset.user_ids[u].clone());
        }
    }
    let ratings = dataset
        .ratings
        .iter()
        .filter(|r| item_map[r.item] != usize::MAX)
        .map(|r| Rating {
            user: user_map[r.user],
            item: item_map[r.item],
            value: r.value,
        })
        .collect();
    let item_ids = keep.iter().map(|&i| dataset.item_ids[i].clone()).collect();
    RatingDataset::with_ids(user_ids, item_ids, ratings, dataset.scale)
}

/// Writes the canonical fixture format: one `user<TAB>item<TAB>rating` line
/// per rating, using dense indices and round-trippable float formatting.
pub fn write_canonical<W: Write>(dataset: &RatingDataset, mut out: W) -> std::io::Result<()> {
    for r in &dataset.ratings {
        writeln!(out, "{}\t{}\t{}", r.user, r.item, r.value)?;
    }
    Ok(())
}

/// Reads the canonical format back. Indices are taken literally, so the
/// dataset spans `max index + 1` users and items.
pub fn read_canonical<R: BufRead>(reader: R, scale: Option<(f64, f64)>) -> Result<RatingDataset> {
    let mut ratings = Vec::new();
    let (mut n_users, mut n_items) = (0usize, 0usize);
    for (k, line) in reader.lines().enumerate() {
        let line_no = k + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim_end().split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 3 fields, found {}", fields.len()),
            });
        }
        let parse_index = |s: &str| -> Result<usize> {
            s.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("{s:?} is not an index"),
            })
        };
        let user = parse_index(fields[0])?;
        let item = parse_index(fields[1])?;
        let value: f64 = fields[2].parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("rating {:?} is not a number", fields[2]),
        })?;
        n_users = n_users.max(user + 1);
        n_items = n_items.max(item + 1);
        ratings.push(Rating { user, item, value });
    }
    let scale = scale.unwrap_or_else(|| observed_scale(&ratings));
    RatingDataset::new(n_users, n_items, ratings, scale)
}
