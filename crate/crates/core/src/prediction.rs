//! Condensed prediction matrices shared by the controllers.

use crate::numerics::Matrix;

/// Stacked predictions `x_j = A^j x0 + sum_{i<j} A^(j-1-i) B v_i` for `j = 0..=len`.
#[derive(Debug, Clone)]
pub(crate) struct Prediction {
    /// `A^j` for `j = 0..=len`.
    pub powers: Vec<Matrix>,
    /// Block `(j, i)` of the input-to-state map; zero for `i >= j`.
    pub theta: Vec<Vec<Matrix>>,
    pub n: usize,
    pub m: usize,
    pub len: usize,
}

impl Prediction {
    pub fn new(a: &Matrix, b: &Matrix, len: usize) -> Self {
        let (n, m) = (a.rows(), b.cols());
        let mut powers = Vec::with_capacity(len + 1);
        powers.push(Matrix::identity(n));
        for j in 1..=len {
            powers.push(a.matmul(&powers[j - 1]));
        }
        // A^k B for k = 0..len-1.
        let apb: Vec<Matrix> = powers.iter().take(len).map(|p| p.matmul(b)).collect();
        let theta = (0..=len)
            .map(|j| {
                (0..len)
                    .map(|i| if i < j { apb[j - 1 - i].clone() } else { Matrix::zeros(n, m) })
                    .collect()
            })
            .collect();
        Self {
            powers,
            theta,
            n,
            m,
            len,
        }
    }

    /// Dense `n x (m len)` map from the stacked inputs to `x_j`.
    pub fn row_block(&self, j: usize) -> Matrix {
        let mut out = Matrix::zeros(self.n, self.m * self.len);
        for i in 0..j.min(self.len) {
            out.set_block(0, i * self.m, &self.theta[j][i]);
        }
        out
    }

    /// State trajectory for a given input sequence (flattened, `m` per step).
    pub fn simulate(&self, x0: &[f64], v: &[f64]) -> Vec<Vec<f64>> {
        (0..=self.len)
            .map(|j| {
                let mut x = self.powers[j].mul_vec(x0);
                for i in 0..j {
                    let bi = self.theta[j][i].mul_vec(&v[i * self.m..(i + 1) * self.m]);
                    for (xk, b) in x.iter_mut().zip(bi) {
                        *xk += b;
                    }
                }
                x
            })
            .collect()
    }
}

/// Flattens a sequence of equal-length vectors.
pub(crate) fn flatten(seq: &[Vec<f64>]) -> Vec<f64> {
    seq.iter().flatten().copied().collect()
}

/// Splits a flat vector into chunks of `m`.
pub(crate) fn chunk(v: &[f64], m: usize) -> Vec<Vec<f64>> {
    v.chunks(m).map(<[f64]>::to_vec).collect()
}

/// Rows of inequality constraints assembled incrementally.
#[derive(Debug, Default)]
pub(crate) struct RowSet {
    pub rows: Vec<Vec<f64>>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl RowSet {
    pub fn push(&mut self, row: Vec<f64>, lo: f64, hi: f64) {
        self.rows.push(row);
        self.lo.push(lo);
        self.hi.push(hi);
    }

    pub fn matrix(&self, d: usize) -> Matrix {
        if self.rows.is_empty() {
            return Matrix::zeros(0, d);
        }
        Matrix::from_rows(&self.rows).expect("finite constraint rows")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prediction_matches_recursion() {
        let a = Matrix::from_rows(&[vec![0.9, 0.2], vec![-0.1, 0.8]]).unwrap();
        let b = Matrix::from_rows(&[vec![1.0], vec![0.5]]).unwrap();
        let p = Prediction::new(&a, &b, 4);
        let v = [0.3, -0.2, 0.7, 0.1];
        let traj = p.simulate(&[1.0, -1.0], &v);
        let mut x = vec![1.0, -1.0];
        for j in 0..4 {
            let ax = a.mul_vec(&x);
            x = vec![ax[0] + b[(0, 0)] * v[j], ax[1] + b[(1, 0)] * v[j]];
            assert!((traj[j + 1][0] - x[0]).abs() < 1e-14 && (traj[j + 1][1] - x[1]).abs() < 1e-14);
            let dense = p.row_block(j + 1).mul_vec(&v);
            let free = p.powers[j + 1].mul_vec(&[1.0, -1.0]);
            assert!((dense[0] + free[0] - x[0]).abs() < 1e-14);
        }
    }
}
