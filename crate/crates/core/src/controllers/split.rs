use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{condition_number, rank, PINV_TOL};
use crate::robots::unactuated_basis;

/// Collocated coordinates for a constant input matrix: `T = [B^T; W]` with
/// `W` an orthonormal basis of the unactuated directions.
#[derive(Debug, Clone, PartialEq)]
pub struct CollocatedSplit {
    pub t: DMatrix<f64>,
    /// First `m` rows of `T^-T`; maps `M q'' + h` to the actuated input.
    pub s: DMatrix<f64>,
    pub w: DMatrix<f64>,
}

impl CollocatedSplit {
    pub fn new(b: &DMatrix<f64>) -> Result<Self> {
        let (n, m) = b.shape();
        let r = rank(b, PINV_TOL);
        if r < m {
            return Err(Error::RankDeficientB { rank: r, cols: m });
        }
        let w = unactuated_basis(b);
        let mut t = DMatrix::zeros(n, n);
        t.rows_mut(0, m).copy_from(&b.transpose());
        t.rows_mut(m, n - m).copy_from(&w);
        let t_inv_t = t
            .transpose()
            .try_inverse()
            .ok_or(Error::RankDeficientB { rank: r, cols: m })?;
        let s = t_inv_t.rows(0, m).into_owned();
        Ok(CollocatedSplit { t, s, w })
    }

    pub fn condition(&self) -> f64 {
        condition_number(&self.t)
    }
}
