use super::{sub, DiscreteLtiModel, ModelError, Partition};
use crate::numerics::{solve_dare_gain, Matrix, NumericsError};

/// The plant seen every `N` basic steps with the input held constant.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledModel {
    pub an: Matrix,
    pub bn: Matrix,
    pub n_period: usize,
    pub partition: Partition,
}

impl SampledModel {
    pub fn a_ss(&self) -> Matrix {
        sub(&self.an, self.partition.xs(), self.partition.xs())
    }

    pub fn a_sf(&self) -> Matrix {
        sub(&self.an, self.partition.xs(), self.partition.xf())
    }

    pub fn a_fs(&self) -> Matrix {
        sub(&self.an, self.partition.xf(), self.partition.xs())
    }

    pub fn a_ff(&self) -> Matrix {
        sub(&self.an, self.partition.xf(), self.partition.xf())
    }

    pub fn b_ss(&self) -> Matrix {
        sub(&self.bn, self.partition.xs(), self.partition.us())
    }

    pub fn b_sf(&self) -> Matrix {
        sub(&self.bn, self.partition.xs(), self.partition.uf())
    }

    pub fn b_fs(&self) -> Matrix {
        sub(&self.bn, self.partition.xf(), self.partition.us())
    }

    pub fn b_ff(&self) -> Matrix {
        sub(&self.bn, self.partition.xf(), self.partition.uf())
    }

    pub fn step(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let ax = self.an.mul_vec(x);
        let bu = self.bn.mul_vec(u);
        ax.iter().zip(&bu).map(|(p, q)| p + q).collect()
    }
}

/// `(A^N, sum_{j<N} A^(N-j-1) B)`.
pub fn resample_matrices(a: &Matrix, b: &Matrix, n: usize) -> (Matrix, Matrix) {
    let mut an = Matrix::identity(a.rows());
    let mut bn = Matrix::zeros(b.rows(), b.cols());
    for _ in 0..n {
        bn = &a.matmul(&bn) + b;
        an = a.matmul(&an);
    }
    (an, bn)
}

/// Resamples with period `n` and verifies the sampled pair is stabilizable.
pub fn resample(model: &DiscreteLtiModel, n: usize) -> Result<SampledModel, ModelError> {
    if n == 0 {
        return Err(ModelError::Invalid("sampling period N must be at least 1".into()));
    }
    let (an, bn) = resample_matrices(model.a(), model.b(), n);
    let q = Matrix::identity(an.rows());
    let r = Matrix::identity(bn.cols());
    match solve_dare_gain(&an, &bn, &q, &r) {
        Ok(_) => {}
        Err(NumericsError::NotConverged { .. }) | Err(NumericsError::NotSchurStable) => {
            return Err(ModelError::AssumptionFailed {
                assumption: "2",
                detail: format!("the {n}-step sampled pair is not stabilizable"),
            })
        }
        Err(e) => return Err(e.into()),
    }
    Ok(SampledModel {
        an,
        bn,
        n_period: n,
        partition: model.partition(),
    })
}

/// Checks `resample(model, a*b)` against resampling twice, entrywise to 1e-9 relative.
pub fn compose_resample_law(model: &DiscreteLtiModel, a: usize, b: usize) -> Result<bool, ModelError> {
    if a == 0 || b == 0 {
        return Err(ModelError::Invalid("composition factors must be at least 1".into()));
    }
    let (ad, bd) = resample_matrices(model.a(), model.b(), a * b);
    let (a1, b1) = resample_matrices(model.a(), model.b(), a);
    let (a2, b2) = resample_matrices(&a1, &b1, b);
    let tol = |m: &Matrix| 1e-9 * (1.0 + m.max_abs());
    Ok(ad.max_abs_diff(&a2) <= tol(&ad) && bd.max_abs_diff(&b2) <= tol(&bd))
}
