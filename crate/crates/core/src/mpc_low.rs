//! Basic-rate shrinking-horizon correction around the held slow-level input.

use crate::error::Error;
use crate::model::{is_finite_bound, ConstraintSet, DiscreteLtiModel};
use crate::numerics::{is_positive_definite, Matrix};
use crate::prediction::{chunk, flatten, Prediction, RowSet};
use crate::qp::{solve, QpOptions, QpProblem, QpStatus};

#[derive(Debug, Clone, PartialEq)]
pub struct LowLevelDesign {
    pub q: Matrix,
    pub r: Matrix,
    pub n_period: usize,
}

impl LowLevelDesign {
    pub fn new(q: Matrix, r: Matrix, n_period: usize) -> Result<Self, Error> {
        if n_period == 0 {
            return Err(Error::Invalid("low-level period must be at least 1".into()));
        }
        if !is_positive_definite(&q) || !is_positive_definite(&r) {
            return Err(Error::Invalid("low-level weights must be positive definite".into()));
        }
        Ok(Self { q, r, n_period })
    }
}

/// Open-loop reference and endpoint for one slow interval.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalPlan {
    /// `(ỹ_s(h), ỹ_f(kN+N))` for each `h` in the interval.
    pub ref_traj: Vec<Vec<f64>>,
    pub ubar: Vec<f64>,
    pub x_endpoint: Vec<f64>,
    /// Open-loop states `x̃(kN..=kN+N)` under the held input.
    pub open_loop: Vec<Vec<f64>>,
}

/// Simulates the held input over the interval and freezes the fast reference at its endpoint value.
pub fn build_interval_plan(
    model: &DiscreteLtiModel,
    x_kn: &[f64],
    ubar: &[f64],
    x_endpoint: &[f64],
    n_period: usize,
) -> IntervalPlan {
    let part = model.partition();
    let mut open_loop = vec![x_kn.to_vec()];
    for _ in 0..n_period {
        let next = model.step(open_loop.last().expect("non-empty"), ubar);
        open_loop.push(next);
    }
    let y_end = model.output(&open_loop[n_period]);
    let ref_traj = open_loop[..n_period]
        .iter()
        .map(|x| {
            let y = model.output(x);
            let mut r = y[part.ys()].to_vec();
            r.extend_from_slice(&y_end[part.yf()]);
            r
        })
        .collect();
    IntervalPlan {
        ref_traj,
        ubar: ubar.to_vec(),
        x_endpoint: x_endpoint.to_vec(),
        open_loop,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowLevelResult {
    pub delta_u_now: Vec<f64>,
    pub sequence: Vec<Vec<f64>>,
    pub objective: f64,
    pub feasible: bool,
    pub status: QpStatus,
    pub kkt_residual: f64,
}

/// Condensed QP over the remaining `N - t` corrections.
pub fn build_low_qp(
    design: &LowLevelDesign,
    model: &DiscreteLtiModel,
    constraints: &ConstraintSet,
    plan: &IntervalPlan,
    x_h: &[f64],
    t: usize,
    u_prev: Option<&[f64]>,
) -> Result<QpProblem, Error> {
    let n_period = design.n_period;
    if t >= n_period {
        return Err(Error::Invalid(format!("offset {t} outside interval of length {n_period}")));
    }
    let (n, m) = (model.partition().n(), model.partition().m());
    let len = n_period - t;
    let d = m * len;
    let pred = Prediction::new(model.a(), model.b(), len);
    let held = flatten(&vec![plan.ubar.clone(); len]);
    let free = pred.simulate(x_h, &held);
    let c = model.c();

    let mut h = Matrix::zeros(d, d);
    let mut g = vec![0.0; d];
    for j in 0..len {
        let gj = c.matmul(&pred.row_block(j));
        let cx = c.mul_vec(&free[j]);
        let fj: Vec<f64> = cx.iter().zip(&plan.ref_traj[t + j]).map(|(a, b)| a - b).collect();
        let gq = gj.transpose().matmul(&design.q);
        h = &h + &gq.matmul(&gj).scale(2.0);
        for (gi, v) in g.iter_mut().zip(gq.mul_vec(&fj)) {
            *gi += 2.0 * v;
        }
        h.set_block(j * m, j * m, &(&h.block(j * m, j * m, m, m) + &design.r.scale(2.0)));
    }

    let a_eq = pred.row_block(len);
    let b_eq: Vec<f64> = plan.x_endpoint.iter().zip(&free[len]).map(|(e, f)| e - f).collect();

    let mut rows = RowSet::default();
    for j in 0..len {
        for i in 0..m {
            let mut row = vec![0.0; d];
            row[j * m + i] = 1.0;
            rows.push(row, constraints.u_lo[i] - plan.ubar[i], constraints.u_hi[i] - plan.ubar[i]);
        }
    }
    for j in 1..=len {
        let blk = pred.row_block(j);
        for i in 0..n {
            let (lo, hi) = (constraints.x_lo[i], constraints.x_hi[i]);
            if !is_finite_bound(lo) && !is_finite_bound(hi) {
                continue;
            }
            let shift = free[j][i];
            rows.push(
                blk.row(i),
                if is_finite_bound(lo) { lo - shift } else { lo },
                if is_finite_bound(hi) { hi - shift } else { hi },
            );
        }
    }
    if let (Some(dlo), Some(dhi)) = (&constraints.du_lo, &constraints.du_hi) {
        for j in 0..len {
            for i in 0..m {
                let mut row = vec![0.0; d];
                row[j * m + i] = 1.0;
                if j == 0 {
                    let Some(prev) = u_prev else { continue };
                    let shift = plan.ubar[i] - prev[i];
                    rows.push(row, dlo[i] - shift, dhi[i] - shift);
                } else {
                    row[(j - 1) * m + i] = -1.0;
                    rows.push(row, dlo[i], dhi[i]);
                }
            }
        }
    }
    Ok(QpProblem::new(h, g, a_eq, b_eq, rows.matrix(d), rows.lo, rows.hi)?)
}

/// True shrinking-horizon cost of a correction sequence.
pub fn low_objective(
    design: &LowLevelDesign,
    model: &DiscreteLtiModel,
    plan: &IntervalPlan,
    x_h: &[f64],
    t: usize,
    sequence: &[Vec<f64>],
) -> f64 {
    let mut x = x_h.to_vec();
    let mut cost = 0.0;
    for (j, du) in sequence.iter().enumerate() {
        let y = model.output(&x);
        let e: Vec<f64> = y.iter().zip(&plan.ref_traj[t + j]).map(|(a, b)| a - b).collect();
        cost += design.q.quad_form(&e) + design.r.quad_form(du);
        let u: Vec<f64> = plan.ubar.iter().zip(du).map(|(a, b)| a + b).collect();
        x = model.step(&x, &u);
    }
    cost
}

#[allow(clippy::too_many_arguments)]
pub fn solve_low_mpc(
    design: &LowLevelDesign,
    model: &DiscreteLtiModel,
    constraints: &ConstraintSet,
    plan: &IntervalPlan,
    x_h: &[f64],
    t: usize,
    u_prev: Option<&[f64]>,
    opts: &QpOptions,
) -> Result<LowLevelResult, Error> {
    let m = model.partition().m();
    let qp = build_low_qp(design, model, constraints, plan, x_h, t, u_prev)?;
    let sol = solve(&qp, opts)?;
    let feasible = sol.status == QpStatus::Optimal;
    let sequence = if feasible {
        chunk(&sol.x, m)
    } else {
        vec![vec![0.0; m]; design.n_period - t]
    };
    Ok(LowLevelResult {
        delta_u_now: sequence[0].clone(),
        objective: low_objective(design, model, plan, x_h, t, &sequence),
        sequence,
        feasible,
        status: sol.status,
        kkt_residual: sol.kkt_residual,
    })
}

/// Tail of the previous optimal sequence, a feasible candidate at the next step.
pub fn shrink_step(sequence: &[Vec<f64>]) -> Vec<Vec<f64>> {
    sequence.iter().skip(1).cloned().collect()
}
