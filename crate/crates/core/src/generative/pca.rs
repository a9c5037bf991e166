use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear subspace model: mean plus `k` orthonormal components (columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaBasis {
    pub mean: DVector<f64>,
    pub components: DMatrix<f64>,
    /// Variance along each component (descending).
    pub variances: Vec<f64>,
}

/// Principal components of the rows of `data` (`samples × dims`) via the
/// SVD of the centered matrix.
pub fn pca_fit(data: &DMatrix<f64>, k: usize) -> Result<PcaBasis> {
    let (n, d) = data.shape();
    if n < 2 {
        return Err(Error::validation("PCA needs at least two samples"));
    }
    if k == 0 || k > (n - 1).min(d) {
        return Err(Error::validation(format!(
            "cannot fit {k} components to {n} samples of dimension {d} (max {})",
            (n - 1).min(d)
        )));
    }
    let mean = data.row_mean().transpose();
    let mut centered = data.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    // thin SVD of the wide side keeps the work at min(n, d)²
    let svd = centered.transpose().svd(true, false);
    let u = svd.u.ok_or_else(|| Error::numeric("SVD did not return singular vectors"))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut components = DMatrix::zeros(d, k);
    let mut variances = Vec::with_capacity(k);
    for (c, &i) in order.iter().take(k).enumerate() {
        components.set_column(c, &u.column(i));
        variances.push(svd.singular_values[i].powi(2) / (n - 1) as f64);
    }
    Ok(PcaBasis {
        mean,
        components,
        variances,
    })
}

impl PcaBasis {
    pub fn k(&self) -> usize {
        self.components.ncols()
    }

    pub fn dims(&self) -> usize {
        self.mean.len()
    }

    fn check(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dims() {
            return Err(Error::validation(format!(
                "sample has {} entries, basis {}",
                x.len(),
                self.dims()
            )));
        }
        Ok(())
    }

    pub fn encode(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(x)?;
        Ok(self.components.tr_mul(&(x - &self.mean)))
    }

    pub fn decode(&self, coeffs: &DVector<f64>) -> Result<DVector<f64>> {
        if coeffs.len() != self.k() {
            return Err(Error::validation("coefficient count differs from component count"));
        }
        Ok(&self.mean + &self.components * coeffs)
    }

    /// Orthogonal projection onto the affine subspace.
    pub fn project(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.decode(&self.encode(x)?)
    }

    /// Largest entry of `componentsᵀ·components − I`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.components.tr_mul(&self.components) - DMatrix::identity(self.k(), self.k()))
            .abs()
            .max()
    }
}
