//! Goldfarb-Idnani dual active-set method for strictly convex QPs
//! `min 0.5 x'Hx + g'x  s.t.  n_i'x >= b_i` (inequalities) and `n_i'x = b_i`.

use crate::numerics::{cholesky, dot, lower_triangular_inverse, Matrix, NumericsError};

/// One constraint row, already normalized to unit length.
#[derive(Debug, Clone)]
pub(crate) struct Row {
    pub normal: Vec<f64>,
    pub rhs: f64,
    pub equality: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum GiStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

#[derive(Debug, Clone)]
pub(crate) struct GiOutcome {
    pub x: Vec<f64>,
    /// `(row index, multiplier)` for the final active set, in the row's own
    /// orientation (equality multipliers may be negative).
    pub active: Vec<(usize, f64)>,
    pub status: GiStatus,
    pub iterations: usize,
}

/// Relative size below which a step direction counts as zero.
const DEP_TOL: f64 = 1e-11;

struct Factor {
    /// `J = L^-T Q`, so that `J^T N_active = [R; 0]`.
    j: Matrix,
    r: Matrix,
    q: usize,
}

impl Factor {
    fn givens(a: f64, b: f64) -> (f64, f64, f64) {
        let h = a.hypot(b);
        if h == 0.0 {
            (1.0, 0.0, 0.0)
        } else {
            (a / h, b / h, h)
        }
    }

    fn rotate_j_cols(&mut self, c0: usize, c1: usize, c: f64, s: f64) {
        for i in 0..self.j.rows() {
            let a = self.j[(i, c0)];
            let b = self.j[(i, c1)];
            self.j[(i, c0)] = c * a + s * b;
            self.j[(i, c1)] = -s * a + c * b;
        }
    }

    /// Appends a constraint whose transformed normal is `d = J^T n`.
    fn add(&mut self, mut d: Vec<f64>) {
        let n = d.len();
        let q = self.q;
        for k in (q + 1..n).rev() {
            if d[k] == 0.0 {
                continue;
            }
            let (c, s, h) = Self::givens(d[k - 1], d[k]);
            d[k - 1] = h;
            d[k] = 0.0;
            self.rotate_j_cols(k - 1, k, c, s);
        }
        for i in 0..=q {
            self.r[(i, q)] = d[i];
        }
        self.q += 1;
    }

    /// Removes active position `l` and restores triangularity.
    fn drop(&mut self, l: usize) {
        let q = self.q;
        for col in l..q - 1 {
            for i in 0..q {
                self.r[(i, col)] = self.r[(i, col + 1)];
            }
        }
        for i in 0..q {
            self.r[(i, q - 1)] = 0.0;
        }
        for k in l..q - 1 {
            let (c, s, h) = Self::givens(self.r[(k, k)], self.r[(k + 1, k)]);
            self.r[(k, k)] = h;
            self.r[(k + 1, k)] = 0.0;
            for col in k + 1..q - 1 {
                let a = self.r[(k, col)];
                let b = self.r[(k + 1, col)];
                self.r[(k, col)] = c * a + s * b;
                self.r[(k + 1, col)] = -s * a + c * b;
            }
            self.rotate_j_cols(k, k + 1, c, s);
        }
        self.q -= 1;
    }

    /// Solves `R[..q, ..q] r = d[..q]`.
    fn back_solve(&self, d: &[f64]) -> Vec<f64> {
        let q = self.q;
        let mut r = d[..q].to_vec();
        for i in (0..q).rev() {
            for k in i + 1..q {
                r[i] -= self.r[(i, k)] * r[k];
            }
            r[i] /= self.r[(i, i)];
        }
        r
    }
}

pub(crate) fn solve_strictly_convex(
    h: &Matrix,
    g: &[f64],
    rows: &[Row],
    feas_tol: f64,
    max_iter: usize,
) -> Result<GiOutcome, NumericsError> {
    let n = h.rows();
    let l = cholesky(h)?;
    let j = lower_triangular_inverse(&l).transpose();
    // Unconstrained minimizer -J J^T g.
    let jtg = j.tr_mul_vec(g);
    let mut x: Vec<f64> = j.mul_vec(&jtg).iter().map(|v| -v).collect();
    let mut f = Factor {
        j,
        r: Matrix::zeros(n, n),
        q: 0,
    };
    let mut act: Vec<usize> = Vec::new();
    let mut sign: Vec<f64> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let mut handled = vec![false; rows.len()];
    let mut iterations = 0usize;

    let outcome = |x: Vec<f64>, act: &[usize], sign: &[f64], u: &[f64], status, iterations| GiOutcome {
        x,
        active: act
            .iter()
            .zip(sign.iter().zip(u))
            .map(|(&i, (&s, &m))| (i, s * m))
            .collect(),
        status,
        iterations,
    };

    loop {
        // Pick the next constraint: pending equalities first, then the most violated inequality.
        let mut pick: Option<usize> = rows
            .iter()
            .enumerate()
            .find(|(i, r)| r.equality && !handled[*i])
            .map(|(i, _)| i);
        if pick.is_none() {
            let mut worst = 0.0;
            for (i, r) in rows.iter().enumerate() {
                if r.equality || act.contains(&i) {
                    continue;
                }
                let s = dot(&r.normal, &x) - r.rhs;
                if s < -feas_tol * (1.0 + r.rhs.abs()) && s < worst {
                    worst = s;
                    pick = Some(i);
                }
            }
        }
        let Some(p) = pick else {
            return Ok(outcome(x, &act, &sign, &u, GiStatus::Optimal, iterations));
        };
        let row = &rows[p];
        let mut np = row.normal.clone();
        let mut bp = row.rhs;
        let mut sp = 1.0;
        if row.equality && dot(&np, &x) - bp > 0.0 {
            np.iter_mut().for_each(|v| *v = -*v);
            bp = -bp;
            sp = -1.0;
        }
        let mut u_p = 0.0;
        loop {
            iterations += 1;
            if iterations > max_iter {
                return Ok(outcome(x, &act, &sign, &u, GiStatus::MaxIter, iterations));
            }
            let d = f.j.tr_mul_vec(&np);
            let q = f.q;
            let mut z = vec![0.0; n];
            for k in q..n {
                if d[k] != 0.0 {
                    for i in 0..n {
                        z[i] += f.j[(i, k)] * d[k];
                    }
                }
            }
            let r = f.back_solve(&d);
            let dnorm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            let d2norm = d[q..].iter().map(|v| v * v).sum::<f64>().sqrt();
            let dependent = d2norm <= DEP_TOL * dnorm;
            let slack = dot(&np, &x) - bp;

            if row.equality && dependent && slack.abs() <= feas_tol * (1.0 + bp.abs()) {
                // Redundant with the active set and already satisfied.
                handled[p] = true;
                break;
            }

            let mut t1 = f64::INFINITY;
            let mut drop_at = None;
            for (k, &rk) in r.iter().enumerate() {
                if !rows[act[k]].equality && rk > 0.0 {
                    let ratio = u[k] / rk;
                    if ratio < t1 {
                        t1 = ratio;
                        drop_at = Some(k);
                    }
                }
            }
            let t2 = if dependent {
                f64::INFINITY
            } else {
                (-slack / dot(&z, &np)).max(0.0)
            };
            let t = t1.min(t2);
            if !t.is_finite() {
                return Ok(outcome(x, &act, &sign, &u, GiStatus::Infeasible, iterations));
            }
            for (uk, rk) in u.iter_mut().zip(&r) {
                *uk -= t * rk;
            }
            u_p += t;
            if t2.is_finite() {
                for i in 0..n {
                    x[i] += t * z[i];
                }
            }
            if t2 <= t1 {
                f.add(d);
                act.push(p);
                sign.push(sp);
                u.push(u_p);
                handled[p] = true;
                break;
            }
            let k = drop_at.expect("partial step always has a blocking constraint");
            f.drop(k);
            act.remove(k);
            sign.remove(k);
            u.remove(k);
        }
    }
}
