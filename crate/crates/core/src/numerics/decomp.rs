//! Dense factorizations: LU with partial pivoting, diagonally pivoted
//! symmetric LDL^T, and Householder QR with column pivoting.

use super::{Matrix, NumericsError};

/// Relative pivot threshold below which an LU factorization is treated as singular.
const LU_SINGULAR_REL: f64 = 1e-14;

#[derive(Debug, Clone)]
pub struct Lu {
    lu: Matrix,
    perm: Vec<usize>,
    sign: f64,
}

impl Lu {
    pub fn new(a: &Matrix) -> Result<Self, NumericsError> {
        if !a.is_square() {
            return Err(NumericsError::NotSquare {
                rows: a.rows(),
                cols: a.cols(),
            });
        }
        let n = a.rows();
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        for k in 0..n {
            let (p, pv) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pv <= LU_SINGULAR_REL * scale {
                return Err(NumericsError::Singular);
            }
            if p != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let piv = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / piv;
                lu[(i, k)] = f;
                if f != 0.0 {
                    for j in k + 1..n {
                        lu[(i, j)] -= f * lu[(k, j)];
                    }
                }
            }
        }
        Ok(Self { lu, perm, sign })
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.rows();
        assert_eq!(b.len(), n);
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                x[i] -= self.lu[(i, j)] * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                x[i] -= self.lu[(i, j)] * x[j];
            }
            x[i] /= self.lu[(i, i)];
        }
        x
    }

    pub fn solve(&self, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(b.rows(), b.cols());
        for j in 0..b.cols() {
            let x = self.solve_vec(&b.col(j));
            for (i, v) in x.into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        out
    }

    pub fn determinant(&self) -> f64 {
        (0..self.lu.rows()).fold(self.sign, |d, i| d * self.lu[(i, i)])
    }
}

impl Matrix {
    /// Solves `self * X = rhs`.
    pub fn solve(&self, rhs: &Matrix) -> Result<Matrix, NumericsError> {
        if rhs.rows() != self.rows() {
            return Err(NumericsError::DimensionMismatch(format!(
                "solve: {}x{} system with {} rhs rows",
                self.rows(),
                self.cols(),
                rhs.rows()
            )));
        }
        Ok(Lu::new(self)?.solve(rhs))
    }

    pub fn inverse(&self) -> Result<Matrix, NumericsError> {
        self.solve(&Matrix::identity(self.rows()))
    }

    /// Determinant; exactly zero when LU detects singularity.
    pub fn determinant(&self) -> Result<f64, NumericsError> {
        match Lu::new(self) {
            Ok(lu) => Ok(lu.determinant()),
            Err(NumericsError::Singular) => Ok(0.0),
            Err(e) => Err(e),
        }
    }
}

/// Result of a diagonally pivoted LDL^T sweep of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct PivotedLdl {
    /// Pivots in elimination order.
    pub pivots: Vec<f64>,
    /// Largest magnitude left in the trailing block when the sweep stopped early.
    pub residual: f64,
    pub scale: f64,
}

impl PivotedLdl {
    /// Runs elimination, always choosing the largest remaining diagonal entry,
    /// and stops once that entry is at most `stop_rel * scale`.
    pub fn new(s: &Matrix, stop_rel: f64) -> Result<Self, NumericsError> {
        if !s.is_square() {
            return Err(NumericsError::NotSquare {
                rows: s.rows(),
                cols: s.cols(),
            });
        }
        let n = s.rows();
        let mut a = s.symmetrize();
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        let mut active: Vec<usize> = (0..n).collect();
        let mut pivots = Vec::with_capacity(n);
        while !active.is_empty() {
            let (pos, &p) = active
                .iter()
                .enumerate()
                .max_by(|x, y| a[(*x.1, *x.1)].total_cmp(&a[(*y.1, *y.1)]))
                .expect("non-empty");
            let d = a[(p, p)];
            if d <= stop_rel * scale {
                break;
            }
            pivots.push(d);
            active.swap_remove(pos);
            for &i in &active {
                let f = a[(i, p)] / d;
                for &j in &active {
                    a[(i, j)] -= f * a[(p, j)];
                }
            }
        }
        let residual = active
            .iter()
            .flat_map(|&i| active.iter().map(move |&j| (i, j)))
            .fold(0.0, |m: f64, (i, j)| m.max(a[(i, j)].abs()));
        Ok(Self {
            pivots,
            residual,
            scale,
        })
    }
}

/// Positive definiteness via pivoted LDL^T: every pivot exceeds `1e-12` relative to scale.
pub fn is_positive_definite(s: &Matrix) -> bool {
    const PD_PIVOT: f64 = 1e-12;
    if s.rows() == 0 {
        return true;
    }
    match PivotedLdl::new(s, PD_PIVOT) {
        Ok(f) => f.pivots.len() == s.rows(),
        Err(_) => false,
    }
}

/// Positive semidefiniteness up to a relative tolerance `tol`.
pub fn is_positive_semidefinite(s: &Matrix, tol: f64) -> bool {
    if s.rows() == 0 {
        return true;
    }
    match PivotedLdl::new(s, tol) {
        Ok(f) => f.residual <= tol * f.scale,
        Err(_) => false,
    }
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky(s: &Matrix) -> Result<Matrix, NumericsError> {
    if !s.is_square() {
        return Err(NumericsError::NotSquare {
            rows: s.rows(),
            cols: s.cols(),
        });
    }
    let n = s.rows();
    let scale = s.max_abs().max(f64::MIN_POSITIVE);
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = s[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 1e-14 * scale {
            return Err(NumericsError::Singular);
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..n {
            let mut v = s[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / djj;
        }
    }
    Ok(l)
}

/// Inverse of a lower-triangular matrix with nonzero diagonal.
pub fn lower_triangular_inverse(l: &Matrix) -> Matrix {
    let n = l.rows();
    let mut inv = Matrix::zeros(n, n);
    for j in 0..n {
        inv[(j, j)] = 1.0 / l[(j, j)];
        for i in j + 1..n {
            let mut v = 0.0;
            for k in j..i {
                v -= l[(i, k)] * inv[(k, j)];
            }
            inv[(i, j)] = v / l[(i, i)];
        }
    }
    inv
}

/// Diagonal of R from Householder QR with column pivoting, in decreasing magnitude.
pub fn qr_pivoted_rdiag(a: &Matrix) -> Vec<f64> {
    let (m, n) = (a.rows(), a.cols());
    let mut r = a.clone();
    let mut diag = Vec::with_capacity(m.min(n));
    for k in 0..m.min(n) {
        let norms: Vec<f64> = (k..n)
            .map(|j| (k..m).map(|i| r[(i, j)] * r[(i, j)]).sum::<f64>())
            .collect();
        let (rel, _) = norms
            .iter()
            .enumerate()
            .fold((0, -1.0), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
        let p = k + rel;
        if p != k {
            for i in 0..m {
                let tmp = r[(i, k)];
                r[(i, k)] = r[(i, p)];
                r[(i, p)] = tmp;
            }
        }
        let alpha = (k..m).map(|i| r[(i, k)] * r[(i, k)]).sum::<f64>().sqrt();
        if alpha == 0.0 {
            diag.push(0.0);
            continue;
        }
        let sign = if r[(k, k)] >= 0.0 { 1.0 } else { -1.0 };
        let mut v: Vec<f64> = (k..m).map(|i| r[(i, k)]).collect();
        v[0] += sign * alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        for j in k..n {
            let s: f64 = (k..m).map(|i| v[i - k] * r[(i, j)]).sum::<f64>() * 2.0 / vnorm2;
            for i in k..m {
                r[(i, j)] -= s * v[i - k];
            }
        }
        diag.push(r[(k, k)].abs());
    }
    diag
}
