//! Dense convex QP `min 0.5 x'Hx + g'x` s.t. `A_eq x = b_eq`, `b_lo <= A_in x <= b_hi`.
//!
//! Strictly convex problems go straight to a dual active-set method. Merely
//! semidefinite ones are wrapped in proximal-point iterations, each of which is
//! strictly convex. Every returned optimum is checked against the KKT conditions.

mod dual_active_set;

use dual_active_set::{solve_strictly_convex, GiStatus, Row};
use serde::{Deserialize, Serialize};

use crate::model::is_finite_bound;
use crate::numerics::{dot, is_positive_definite, is_positive_semidefinite, norm_inf, Lu, Matrix, NumericsError};

pub const DEFAULT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QpError {
    #[error("invalid QP: {0}")]
    Invalid(String),
    #[error("Hessian is not positive semidefinite")]
    NotConvex,
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("solver reported infeasible but the warm-start hint is feasible")]
    InconsistentInfeasibility,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: Matrix,
    pub g: Vec<f64>,
    pub a_eq: Matrix,
    pub b_eq: Vec<f64>,
    pub a_in: Matrix,
    pub b_lo: Vec<f64>,
    pub b_hi: Vec<f64>,
}

impl QpProblem {
    /// Validates shapes and convexity; `h` is symmetrized.
    pub fn new(
        h: Matrix,
        g: Vec<f64>,
        a_eq: Matrix,
        b_eq: Vec<f64>,
        a_in: Matrix,
        b_lo: Vec<f64>,
        b_hi: Vec<f64>,
    ) -> Result<Self, QpError> {
        let d = g.len();
        if (h.rows(), h.cols()) != (d, d) {
            return Err(QpError::Invalid(format!("H is {}x{}, g has {d}", h.rows(), h.cols())));
        }
        if a_eq.rows() != b_eq.len() || (a_eq.rows() > 0 && a_eq.cols() != d) {
            return Err(QpError::Invalid("equality block shape mismatch".into()));
        }
        if a_in.rows() != b_lo.len() || a_in.rows() != b_hi.len() || (a_in.rows() > 0 && a_in.cols() != d) {
            return Err(QpError::Invalid("inequality block shape mismatch".into()));
        }
        if g.iter().chain(&b_eq).any(|v| !v.is_finite()) || b_lo.iter().chain(&b_hi).any(|v| v.is_nan()) {
            return Err(QpError::Invalid("non-finite problem data".into()));
        }
        let h = h.symmetrize();
        if !is_positive_semidefinite(&h, 1e-9) {
            return Err(QpError::NotConvex);
        }
        Ok(Self {
            h,
            g,
            a_eq,
            b_eq,
            a_in,
            b_lo,
            b_hi,
        })
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        0.5 * self.h.quad_form(x) + dot(&self.g, x)
    }

    /// Largest absolute constraint violation at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut v = 0.0f64;
        if self.a_eq.rows() > 0 {
            let ax = self.a_eq.mul_vec(x);
            for (a, b) in ax.iter().zip(&self.b_eq) {
                v = v.max((a - b).abs());
            }
        }
        if self.a_in.rows() > 0 {
            let ax = self.a_in.mul_vec(x);
            for i in 0..ax.len() {
                if is_finite_bound(self.b_lo[i]) {
                    v = v.max(self.b_lo[i] - ax[i]);
                }
                if is_finite_bound(self.b_hi[i]) {
                    v = v.max(ax[i] - self.b_hi[i]);
                }
            }
        }
        v
    }

    /// Whether `x` satisfies every constraint to `tol` relative to the data scale.
    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim() && self.max_violation(x) <= tol * (1.0 + self.bound_scale())
    }

    fn bound_scale(&self) -> f64 {
        let finite = self
            .b_lo
            .iter()
            .chain(&self.b_hi)
            .filter(|v| is_finite_bound(**v))
            .fold(0.0f64, |m, v| m.max(v.abs()));
        finite.max(norm_inf(&self.b_eq))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub status: QpStatus,
    pub kkt_residual: f64,
    pub iterations: usize,
    /// Equality multipliers `y` in `Hx + g + A_eq'y + A_in'z = 0`.
    pub y_eq: Vec<f64>,
    /// Inequality multipliers: positive at an active upper bound, negative at a lower one.
    pub z_in: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct QpOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Optional known-feasible point. Used only to cross-check an infeasibility verdict.
    pub warm_start: Option<Vec<f64>>,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: 20_000,
            warm_start: None,
        }
    }
}

impl QpOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

/// Maximum of the scaled stationarity, primal, dual and complementarity residuals.
pub fn kkt_residual(problem: &QpProblem, x: &[f64], y_eq: &[f64], z_in: &[f64]) -> f64 {
    let hx = problem.h.mul_vec(x);
    let aty = if problem.a_eq.rows() > 0 {
        problem.a_eq.tr_mul_vec(y_eq)
    } else {
        vec![0.0; x.len()]
    };
    let atz = if problem.a_in.rows() > 0 {
        problem.a_in.tr_mul_vec(z_in)
    } else {
        vec![0.0; x.len()]
    };
    let stat: Vec<f64> = (0..x.len()).map(|i| hx[i] + problem.g[i] + aty[i] + atz[i]).collect();
    let stat_scale = 1.0 + norm_inf(&hx).max(norm_inf(&problem.g)).max(norm_inf(&aty)).max(norm_inf(&atz));
    let r_stat = norm_inf(&stat) / stat_scale;

    let ax = if problem.a_in.rows() > 0 {
        problem.a_in.mul_vec(x)
    } else {
        Vec::new()
    };
    let primal_scale = 1.0 + norm_inf(&ax).max(problem.bound_scale());
    let r_primal = problem.max_violation(x).max(0.0) / primal_scale;

    let mut r_dual = 0.0f64;
    let mut r_comp = 0.0f64;
    let z_scale = 1.0 + norm_inf(z_in);
    for i in 0..ax.len() {
        let z = z_in[i];
        if z > 0.0 {
            if is_finite_bound(problem.b_hi[i]) {
                r_comp = r_comp.max(z * (problem.b_hi[i] - ax[i]).abs());
            } else {
                r_dual = r_dual.max(z);
            }
        } else if z < 0.0 {
            if is_finite_bound(problem.b_lo[i]) {
                r_comp = r_comp.max(-z * (ax[i] - problem.b_lo[i]).abs());
            } else {
                r_dual = r_dual.max(-z);
            }
        }
    }
    let r_dual = r_dual / z_scale;
    let r_comp = r_comp / (z_scale * primal_scale);
    r_stat.max(r_primal).max(r_dual).max(r_comp)
}

#[derive(Debug, Clone, Copy)]
enum Origin {
    Eq(usize),
    /// Inequality row with `lo == hi`, handled as an equality.
    Fixed(usize),
    Lo(usize),
    Hi(usize),
}

struct Rows {
    rows: Vec<Row>,
    origin: Vec<Origin>,
    norms: Vec<f64>,
}

/// Normalized rows; `None` if a zero row is violated outright.
fn build_rows(p: &QpProblem, tol: f64) -> Option<Rows> {
    let mut out = Rows {
        rows: Vec::new(),
        origin: Vec::new(),
        norms: Vec::new(),
    };
    let mut push = |a: Vec<f64>, b: f64, eq: bool, o: Origin| -> bool {
        let nrm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        if nrm == 0.0 {
            return if eq { b.abs() <= tol } else { b <= tol };
        }
        out.rows.push(Row {
            normal: a.iter().map(|v| v / nrm).collect(),
            rhs: b / nrm,
            equality: eq,
        });
        out.origin.push(o);
        out.norms.push(nrm);
        true
    };
    for i in 0..p.a_eq.rows() {
        if !push(p.a_eq.row(i), p.b_eq[i], true, Origin::Eq(i)) {
            return None;
        }
    }
    for i in 0..p.a_in.rows() {
        let (lo, hi) = (p.b_lo[i], p.b_hi[i]);
        if lo > hi {
            return None;
        }
        let a = p.a_in.row(i);
        if is_finite_bound(lo) && is_finite_bound(hi) && lo == hi {
            if !push(a, lo, true, Origin::Fixed(i)) {
                return None;
            }
            continue;
        }
        if is_finite_bound(lo) && !push(a.clone(), lo, false, Origin::Lo(i)) {
            return None;
        }
        if is_finite_bound(hi) && !push(a.iter().map(|v| -v).collect(), -hi, false, Origin::Hi(i)) {
            return None;
        }
    }
    Some(out)
}

fn multipliers(p: &QpProblem, rows: &Rows, active: &[(usize, f64)]) -> (Vec<f64>, Vec<f64>) {
    let mut y = vec![0.0; p.a_eq.rows()];
    let mut z = vec![0.0; p.a_in.rows()];
    for &(k, u) in active {
        let scaled = u / rows.norms[k];
        match rows.origin[k] {
            Origin::Eq(i) => y[i] -= scaled,
            Origin::Fixed(i) => z[i] -= scaled,
            Origin::Lo(i) => z[i] -= scaled,
            Origin::Hi(i) => z[i] += scaled,
        }
    }
    (y, z)
}

/// Re-solves the equality-constrained problem on the final active set.
fn polish(p: &QpProblem, rows: &Rows, active: &[(usize, f64)]) -> Option<(Vec<f64>, Vec<(usize, f64)>)> {
    let d = p.dim();
    let k = active.len();
    let mut kkt = Matrix::zeros(d + k, d + k);
    kkt.set_block(0, 0, &p.h);
    let mut rhs: Vec<f64> = p.g.iter().map(|v| -v).collect();
    for (c, &(ri, _)) in active.iter().enumerate() {
        let r = &rows.rows[ri];
        for j in 0..d {
            kkt[(d + c, j)] = r.normal[j];
            kkt[(j, d + c)] = -r.normal[j];
        }
        rhs.push(r.rhs);
    }
    let sol = Lu::new(&kkt).ok()?.solve_vec(&rhs);
    let x = sol[..d].to_vec();
    let act = active.iter().zip(&sol[d..]).map(|(&(ri, _), &u)| (ri, u)).collect();
    Some((x, act))
}

fn finish(p: &QpProblem, rows: &Rows, x: Vec<f64>, active: Vec<(usize, f64)>, iterations: usize, tol: f64) -> QpSolution {
    let (y, z) = multipliers(p, rows, &active);
    let mut best = (kkt_residual(p, &x, &y, &z), x, y, z);
    if best.0 > 1e-3 * tol {
        if let Some((px, pact)) = polish(p, rows, &active) {
            let signs_ok = pact.iter().all(|&(ri, u)| rows.rows[ri].equality || u >= -1e-12);
            if signs_ok {
                let (py, pz) = multipliers(p, rows, &pact);
                let res = kkt_residual(p, &px, &py, &pz);
                if res < best.0 {
                    best = (res, px, py, pz);
                }
            }
        }
    }
    let (res, x, y, z) = best;
    let status = if res <= tol { QpStatus::Optimal } else { QpStatus::MaxIter };
    QpSolution {
        objective: p.objective(&x),
        x,
        status,
        kkt_residual: res,
        iterations,
        y_eq: y,
        z_in: z,
    }
}

fn infeasible(p: &QpProblem, iterations: usize, opts: &QpOptions) -> Result<QpSolution, QpError> {
    if let Some(hint) = &opts.warm_start {
        if p.is_feasible(hint, opts.tol) {
            return Err(QpError::InconsistentInfeasibility);
        }
    }
    Ok(QpSolution {
        x: vec![0.0; p.dim()],
        objective: f64::NAN,
        status: QpStatus::Infeasible,
        kkt_residual: f64::INFINITY,
        iterations,
        y_eq: vec![0.0; p.a_eq.rows()],
        z_in: vec![0.0; p.a_in.rows()],
    })
}

/// Solves the QP, certifying optimality by the KKT residual.
pub fn solve(problem: &QpProblem, opts: &QpOptions) -> Result<QpSolution, QpError> {
    let feas_tol = 1e-2 * opts.tol;
    let Some(rows) = build_rows(problem, feas_tol) else {
        return infeasible(problem, 0, opts);
    };
    if is_positive_definite(&problem.h) {
        let out = match solve_strictly_convex(&problem.h, &problem.g, &rows.rows, feas_tol, opts.max_iter) {
            Ok(o) => o,
            Err(NumericsError::Singular) => return solve_proximal(problem, &rows, opts),
            Err(e) => return Err(e.into()),
        };
        return match out.status {
            GiStatus::Infeasible => infeasible(problem, out.iterations, opts),
            GiStatus::MaxIter => {
                let mut s = finish(problem, &rows, out.x, out.active, out.iterations, opts.tol);
                s.status = QpStatus::MaxIter;
                Ok(s)
            }
            GiStatus::Optimal => Ok(finish(problem, &rows, out.x, out.active, out.iterations, opts.tol)),
        };
    }
    solve_proximal(problem, &rows, opts)
}

/// Proximal-point outer loop for singular `H`: each subproblem adds `rho/2 |x - x_k|^2`.
fn solve_proximal(problem: &QpProblem, rows: &Rows, opts: &QpOptions) -> Result<QpSolution, QpError> {
    const MAX_OUTER: usize = 2_000;
    let d = problem.dim();
    let rho = 1e-2 * (1.0 + problem.h.max_abs());
    let h_rho = &problem.h + &Matrix::identity(d).scale(rho);
    let feas_tol = 1e-2 * opts.tol;
    let mut xk = vec![0.0; d];
    let mut total = 0usize;
    let mut last = None;
    for _ in 0..MAX_OUTER {
        let g: Vec<f64> = (0..d).map(|i| problem.g[i] - rho * xk[i]).collect();
        let out = solve_strictly_convex(&h_rho, &g, &rows.rows, feas_tol, opts.max_iter)?;
        total += out.iterations;
        match out.status {
            GiStatus::Infeasible => return infeasible(problem, total, opts),
            GiStatus::MaxIter => break,
            GiStatus::Optimal => {}
        }
        let step = out.x.iter().zip(&xk).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let scale = 1.0 + norm_inf(&out.x);
        if scale > 1e12 {
            break;
        }
        xk = out.x.clone();
        let sol = finish(problem, rows, out.x, out.active, total, opts.tol);
        let done = sol.status == QpStatus::Optimal || step <= 1e-14 * scale;
        last = Some(sol);
        if done {
            break;
        }
        if total > opts.max_iter {
            break;
        }
    }
    Ok(last.unwrap_or_else(|| QpSolution {
        objective: problem.objective(&xk),
        kkt_residual: f64::INFINITY,
        status: QpStatus::MaxIter,
        iterations: total,
        y_eq: vec![0.0; problem.a_eq.rows()],
        z_in: vec![0.0; problem.a_in.rows()],
        x: xk,
    }))
}

#[cfg(test)]
mod tests;
