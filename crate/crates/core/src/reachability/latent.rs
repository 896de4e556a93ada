use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::factorize::FactorModel;
use crate::linalg::dot;

/// Affine map from a rating vector over `items` to the user's latent point,
/// `p(r) = A·r + β`, obtained by ridge-regressing the bias-adjusted ratings
/// on the item factors with the model's λ.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentMap {
    items: Vec<usize>,
    /// d × |items|
    a: DMatrix<f64>,
    beta: DVector<f64>,
}

impl LatentMap {
    pub fn items(&self) -> &[usize] {
        &self.items
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.beta
    }

    pub fn apply(&self, ratings: &[f64]) -> Vec<f64> {
        assert_eq!(ratings.len(), self.items.len(), "rating vector length");
        let r = DVector::from_column_slice(ratings);
        (&self.a * r + &self.beta).as_slice().to_vec()
    }
}

/// Builds the latent map for a user who rates `rated_items`. `user_bias` is
/// the user's `c_u`, subtracted together with μ and the item biases before
/// the regression. With λ = 0 the pseudo-inverse is used.
pub fn user_latent_map(
    model: &FactorModel,
    rated_items: &[usize],
    user_bias: f64,
) -> Result<LatentMap> {
    if rated_items.is_empty() {
        return Err(Error::InvalidArgument("latent map needs at least one rated item".into()));
    }
    let (m, d) = (model.n_items(), model.d());
    if let Some(&bad) = rated_items.iter().find(|&&i| i >= m) {
        return Err(Error::IndexOutOfRange {
            what: "item",
            index: bad,
            bound: m,
        });
    }
    let k = rated_items.len();
    let q = model.item_factors();
    let design = DMatrix::from_fn(k, d, |r, c| q.row(rated_items[r])[c]);
    let lambda = model.lambda();

    let a = if lambda > 0.0 {
        let gram = design.transpose() * &design + DMatrix::<f64>::identity(d, d) * lambda;
        let chol = gram
            .cholesky()
            .ok_or_else(|| Error::NonFinite("ridge system for latent map".into()))?;
        chol.solve(&design.transpose())
    } else {
        design
            .pseudo_inverse(1e-12)
            .map_err(|e| Error::NonFinite(format!("pseudo-inverse: {e}")))?
    };
    let offsets = DVector::from_iterator(
        k,
        rated_items
            .iter()
            .map(|&i| model.mu() + model.item_bias()[i] + user_bias),
    );
    let beta = -(&a * offsets);
    Ok(LatentMap {
        items: rated_items.to_vec(),
        a,
        beta,
    })
}

/// Predicted ratings (minus the user-constant `c_u + μ`) for every item at latent point `p`.
pub(crate) fn item_scores(model: &FactorModel, p: &[f64]) -> Vec<f64> {
    let q = model.item_factors();
    (0..model.n_items())
        .map(|j| dot(q.row(j), p) + model.item_bias()[j])
        .collect()
}
