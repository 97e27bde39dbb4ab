use super::decomp::{is_positive_definite, qr_pivoted_rdiag, Lu};
use super::{Matrix, NumericsError};

/// Outcome of a Lyapunov-certificate Schur test.
#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub is_schur: bool,
    /// Positive-definite `P` with `F^T P F - P = -I` when `is_schur`.
    pub certificate: Option<Matrix>,
}

/// Solves `F^T P F - P + Q = 0` through the vectorized n^2 linear system, with
/// one step of iterative refinement. No stability check.
fn lyapunov_raw(f: &Matrix, q: &Matrix) -> Result<Matrix, NumericsError> {
    let n = f.rows();
    let nn = n * n;
    let mut m = Matrix::zeros(nn, nn);
    for i in 0..n {
        for j in 0..n {
            let r = i * n + j;
            for k in 0..n {
                let fki = f[(k, i)];
                if fki == 0.0 {
                    continue;
                }
                for l in 0..n {
                    m[(r, k * n + l)] += fki * f[(l, j)];
                }
            }
            m[(r, r)] -= 1.0;
        }
    }
    let rhs: Vec<f64> = q.as_slice().iter().map(|v| -v).collect();
    let lu = Lu::new(&m)?;
    let mut x = lu.solve_vec(&rhs);
    let mx = m.mul_vec(&x);
    let resid: Vec<f64> = rhs.iter().zip(&mx).map(|(b, a)| b - a).collect();
    let corr = lu.solve_vec(&resid);
    for (xi, c) in x.iter_mut().zip(corr) {
        *xi += c;
    }
    let p = Matrix::from_row_major(n, n, x)?;
    Ok(p.symmetrize())
}

pub fn lyapunov_residual(f: &Matrix, p: &Matrix, q: &Matrix) -> f64 {
    let r = &(&f.transpose().matmul(p).matmul(f) - p) + q;
    r.frobenius_norm()
}

fn check_square(f: &Matrix) -> Result<(), NumericsError> {
    if f.is_square() {
        Ok(())
    } else {
        Err(NumericsError::NotSquare {
            rows: f.rows(),
            cols: f.cols(),
        })
    }
}

/// Strict Schur stability via the Lyapunov certificate `F^T P F - P = -I`, `P > 0`.
pub fn is_schur_stable(f: &Matrix) -> StabilityReport {
    let fail = StabilityReport {
        is_schur: false,
        certificate: None,
    };
    if !f.is_square() || !f.is_finite() {
        return fail;
    }
    let n = f.rows();
    let id = Matrix::identity(n);
    let Ok(p) = lyapunov_raw(f, &id) else {
        return fail;
    };
    if !p.is_finite() || !is_positive_definite(&p) {
        return fail;
    }
    // A near-singular vectorized system can return garbage that happens to be PD.
    if lyapunov_residual(f, &p, &id) > 1e-6 * (1.0 + p.frobenius_norm()) {
        return fail;
    }
    StabilityReport {
        is_schur: true,
        certificate: Some(p),
    }
}

/// Solves `F^T P F - P + Q = 0` for Schur-stable `F`.
pub fn solve_discrete_lyapunov(f: &Matrix, q: &Matrix) -> Result<Matrix, NumericsError> {
    check_square(f)?;
    if q.rows() != f.rows() || q.cols() != f.cols() {
        return Err(NumericsError::DimensionMismatch(format!(
            "Q is {}x{}, F is {}x{}",
            q.rows(),
            q.cols(),
            f.rows(),
            f.cols()
        )));
    }
    if !is_schur_stable(f).is_schur {
        return Err(NumericsError::NotSchurStable);
    }
    let q = q.symmetrize();
    let p = lyapunov_raw(f, &q)?;
    let res = lyapunov_residual(f, &p, &q);
    if res > 1e-10 * (1.0 + q.frobenius_norm()) * (1.0 + p.frobenius_norm()) {
        return Err(NumericsError::NotConverged {
            iterations: 1,
            residual: res,
        });
    }
    Ok(p)
}

/// Iteration controls for [`solve_dare_gain_with`].
#[derive(Debug, Clone, Copy)]
pub struct DareOptions {
    pub max_iter: usize,
    /// Relaxation weight on the Riccati update; 1 is the plain recursion.
    pub damping: f64,
    /// Required DARE residual, relative to `1 + |P|_F`.
    pub tol: f64,
    /// Iterations without a 1% improvement of the best step size before giving up.
    pub stagnation_window: usize,
}

impl Default for DareOptions {
    fn default() -> Self {
        Self {
            max_iter: 10_000,
            damping: 1.0,
            tol: 1e-9,
            stagnation_window: 200,
        }
    }
}

fn riccati_gain(a: &Matrix, b: &Matrix, r: &Matrix, p: &Matrix) -> Result<Matrix, NumericsError> {
    let bt_p = b.transpose().matmul(p);
    let s = &r.clone() + &bt_p.matmul(b);
    let k = s.solve(&bt_p.matmul(a))?;
    Ok(k.scale(-1.0))
}

/// Residual `|A^T P A - P + A^T P B K + Q|_F` with `K` the associated gain.
pub fn dare_residual(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, p: &Matrix) -> Result<f64, NumericsError> {
    let k = riccati_gain(a, b, r, p)?;
    let at_p = a.transpose().matmul(p);
    let next = &at_p.matmul(&(a + &b.matmul(&k))) + q;
    Ok((&next - p).frobenius_norm())
}

/// Infinite-horizon LQ gain for `x+ = A x + B u`: returns `(K, P)` with `u = K x`.
pub fn solve_dare_gain(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<(Matrix, Matrix), NumericsError> {
    solve_dare_gain_with(a, b, q, r, DareOptions::default())
}

pub fn solve_dare_gain_with(
    a: &Matrix,
    b: &Matrix,
    q: &Matrix,
    r: &Matrix,
    opts: DareOptions,
) -> Result<(Matrix, Matrix), NumericsError> {
    check_square(a)?;
    let (n, m) = (a.rows(), b.cols());
    if b.rows() != n || q.rows() != n || q.cols() != n || r.rows() != m || r.cols() != m {
        return Err(NumericsError::DimensionMismatch(
            "DARE expects A n x n, B n x m, Q n x n, R m x m".into(),
        ));
    }
    if !is_positive_definite(r) {
        return Err(NumericsError::InvalidArgument("R must be positive definite".into()));
    }
    let q = q.symmetrize();
    let mut p = q.clone();
    let mut best_step = f64::INFINITY;
    let mut since_improvement = 0usize;
    let mut last_res = f64::INFINITY;
    for iter in 1..=opts.max_iter {
        let k = riccati_gain(a, b, r, &p)?;
        let at_p = a.transpose().matmul(&p);
        let ric = (&at_p.matmul(&(a + &b.matmul(&k))) + &q).symmetrize();
        let next = &ric.scale(opts.damping) + &p.scale(1.0 - opts.damping);
        if !next.is_finite() || next.max_abs() > 1e14 {
            return Err(NumericsError::NotConverged {
                iterations: iter,
                residual: f64::INFINITY,
            });
        }
        let step = (&next - &p).frobenius_norm();
        p = next;
        let scale = 1.0 + p.frobenius_norm();
        if step <= 1e-14 * scale {
            last_res = dare_residual(a, b, &q, r, &p)?;
            if last_res <= opts.tol * scale {
                break;
            }
        }
        if step < 0.99 * best_step {
            best_step = step;
            since_improvement = 0;
        } else {
            since_improvement += 1;
            if since_improvement >= opts.stagnation_window {
                last_res = dare_residual(a, b, &q, r, &p)?;
                if last_res <= opts.tol * scale {
                    break;
                }
                return Err(NumericsError::NotConverged {
                    iterations: iter,
                    residual: last_res,
                });
            }
        }
        if iter == opts.max_iter {
            last_res = dare_residual(a, b, &q, r, &p)?;
            if last_res > opts.tol * scale {
                return Err(NumericsError::NotConverged {
                    iterations: iter,
                    residual: last_res,
                });
            }
        }
    }
    debug_assert!(last_res.is_finite());
    let k = riccati_gain(a, b, r, &p)?;
    let closed = a + &b.matmul(&k);
    if !is_schur_stable(&closed).is_schur {
        return Err(NumericsError::NotSchurStable);
    }
    Ok((k, p))
}

/// Number of pivoted-QR diagonal magnitudes above `tol` times the largest one.
pub fn rank_with_tolerance(m: &Matrix, tol: f64) -> usize {
    let d = qr_pivoted_rdiag(m);
    let top = d.first().copied().unwrap_or(0.0);
    if top == 0.0 {
        return 0;
    }
    d.iter().filter(|&&v| v > tol * top).count()
}

/// Default rank tolerance for O(1)-scaled matrices.
pub const RANK_TOL: f64 = 1e-9;

/// Assumption-style check that `[[I-A, -B], [C, 0]]` is nonsingular.
pub fn check_no_unit_invariant_zero(a: &Matrix, b: &Matrix, c: &Matrix) -> Result<bool, NumericsError> {
    check_square(a)?;
    let (n, m, p) = (a.rows(), b.cols(), c.rows());
    if m != p {
        return Err(NumericsError::DimensionMismatch(format!(
            "invariant-zero test needs m = p, got m={m}, p={p}"
        )));
    }
    if b.rows() != n || c.cols() != n {
        return Err(NumericsError::DimensionMismatch("A, B, C shapes disagree".into()));
    }
    let phi = steady_state_matrix(a, b, c);
    let det = phi.determinant()?;
    // Hadamard bound: |det| <= product of column norms.
    let hadamard: f64 = (0..phi.cols())
        .map(|j| phi.col(j).iter().map(|v| v * v).sum::<f64>().sqrt())
        .product();
    Ok(hadamard > 0.0 && det.abs() > 1e-9 * hadamard)
}

/// `[[I-A, -B], [C, 0]]`.
pub fn steady_state_matrix(a: &Matrix, b: &Matrix, c: &Matrix) -> Matrix {
    let n = a.rows();
    let (m, p) = (b.cols(), c.rows());
    let mut phi = Matrix::zeros(n + p, n + m);
    phi.set_block(0, 0, &(&Matrix::identity(n) - a));
    phi.set_block(0, n, &b.scale(-1.0));
    phi.set_block(n, 0, c);
    phi
}

/// Block matrices `[[I, C̃], [0, Ã]] - lambda I` paired with `[C̃ B̃s; B̃s]`, i.e. the
/// velocity pair's PBH matrices at `lambda`.
pub fn velocity_pbh_matrix(at: &Matrix, bs: &Matrix, cs: &Matrix, lambda: f64) -> Matrix {
    let n = at.rows();
    let ps = cs.rows();
    let ms = bs.cols();
    let mut abar = Matrix::zeros(ps + n, ps + n);
    abar.set_block(0, 0, &Matrix::identity(ps));
    abar.set_block(0, ps, &cs.matmul(at));
    abar.set_block(ps, ps, at);
    let mut bbar = Matrix::zeros(ps + n, ms);
    bbar.set_block(0, 0, &cs.matmul(bs));
    bbar.set_block(ps, 0, bs);
    let shifted = &abar - &Matrix::identity(ps + n).scale(lambda);
    Matrix::hstack(&[&shifted, &bbar])
}

/// Stabilizability of the velocity-form pair via the rank conditions at `lambda = 1` and `-1`.
pub fn check_pbh_stabilizable_velocity(at: &Matrix, bs: &Matrix, cs: &Matrix) -> bool {
    if !at.is_square() || bs.rows() != at.rows() || cs.cols() != at.rows() {
        return false;
    }
    let full = at.rows() + cs.rows();
    [1.0, -1.0]
        .iter()
        .all(|&l| rank_with_tolerance(&velocity_pbh_matrix(at, bs, cs, l), RANK_TOL) == full)
}
