use crate::error::{Error, Result};
use crate::factorize::FactorModel;
use crate::linalg::dot;

use super::{AvailabilitySet, ModelKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AuditOptions {
    /// Add the item bias to every probe score. Off by default: an unbounded
    /// aligned probe makes the bias irrelevant.
    pub include_bias: bool,
}

/// For every item `i`, the number of other items `j` with
/// `score_j(q_i) ≥ score_i(q_i)`: how many items tie or beat `i` at its
/// own aligned probe. Zero factor vectors count as tied with everything.
///
/// O(m²·d): one Gram row per item.
pub fn dominance_counts(model: &FactorModel, opts: AuditOptions) -> Vec<usize> {
    let q = model.item_factors();
    let bias = model.item_bias();
    let m = q.nrows();
    let count_for = |i: usize| -> usize {
        let qi = q.row(i);
        if qi.iter().all(|&x| x == 0.0) {
            return m.saturating_sub(1);
        }
        let score = |j: usize| {
            let s = dot(q.row(j), qi);
            if opts.include_bias {
                s + bias[j]
            } else {
                s
            }
        };
        let own = score(i);
        (0..m).filter(|&j| j != i && score(j) >= own).count()
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..m).into_par_iter().map(count_for).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..m).map(count_for).collect()
    }
}

pub fn aligned_reachable(
    model: &FactorModel,
    item: usize,
    n: usize,
    opts: AuditOptions,
) -> Result<bool> {
    let m = model.n_items();
    if item >= m {
        return Err(Error::IndexOutOfRange {
            what: "item",
            index: item,
            bound: m,
        });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("slate size N must be ≥ 1".into()));
    }
    let q = model.item_factors();
    let qi = q.row(item);
    if qi.iter().all(|&x| x == 0.0) {
        return Ok(n >= m);
    }
    let score = |j: usize| {
        dot(q.row(j), qi) + if opts.include_bias { model.item_bias()[j] } else { 0.0 }
    };
    let own = score(item);
    let mut ahead = 0;
    for j in (0..m).filter(|&j| j != item) {
        if score(j) >= own {
            ahead += 1;
            if ahead >= n {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

pub fn audit_availability(
    model: &FactorModel,
    n: usize,
    opts: AuditOptions,
) -> Result<AvailabilitySet> {
    Ok(audit_many(model, &[n], opts)?.pop().expect("one slate size"))
}

/// Audits several slate sizes from a single pass of dominance counts.
pub fn audit_many(
    model: &FactorModel,
    slate_sizes: &[usize],
    opts: AuditOptions,
) -> Result<Vec<AvailabilitySet>> {
    if slate_sizes.contains(&0) {
        return Err(Error::InvalidArgument("slate size N must be ≥ 1".into()));
    }
    let counts = dominance_counts(model, opts);
    let m = model.n_items();
    Ok(slate_sizes
        .iter()
        .map(|&n| {
            let mut set = AvailabilitySet::new(ModelKey::new(model.d(), n), m);
            for (i, &ahead) in counts.iter().enumerate() {
                if ahead < n {
                    set.insert(i);
                }
            }
            set
        })
        .collect())
}
