//! Slow-rate controllers: the stabilizing MPC on the sampled model and the
//! incremental MPC on its velocity form.

use crate::error::Error;
use crate::model::{is_finite_bound, ConstraintSet, DiscreteLtiModel, SampledModel, Targets, VelocityModel, INF_BOUND};
use crate::numerics::{is_positive_definite, solve_dare_gain, solve_discrete_lyapunov, vec_add, vec_sub, Matrix};
use crate::prediction::{chunk, Prediction, RowSet};
use crate::qp::{solve, QpOptions, QpProblem, QpStatus};
use crate::terminal::{MarginRow, TerminalOptions, TerminalSet};

#[derive(Debug, Clone, PartialEq)]
pub struct HighLevelDesign {
    pub n_period: usize,
    pub n_h: usize,
    pub q_h: Matrix,
    pub r_h: Matrix,
    pub k_h: Matrix,
    pub p_h: Matrix,
    pub terminal: TerminalSet,
    pub sampled: SampledModel,
    pub c: Matrix,
    pub constraints: ConstraintSet,
    pub targets: Targets,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HighLevelResult {
    pub u_now: Vec<f64>,
    pub x_next_pred: Vec<f64>,
    pub predicted_inputs: Vec<Vec<f64>>,
    pub objective: f64,
    pub feasible: bool,
    pub status: QpStatus,
}

fn check_weights(q: &Matrix, r: &Matrix, p: usize, m: usize) -> Result<(), Error> {
    if (q.rows(), q.cols()) != (p, p) || (r.rows(), r.cols()) != (m, m) {
        return Err(Error::Invalid(format!("weights must be {p}x{p} and {m}x{m}")));
    }
    if !is_positive_definite(q) || !is_positive_definite(r) {
        return Err(Error::Invalid("weights must be positive definite".into()));
    }
    Ok(())
}

/// Rows `row' z <= margin` for box bounds on `value = eq + G z`.
fn box_margin_rows(g: &Matrix, eq: &[f64], lo: &[f64], hi: &[f64]) -> Vec<MarginRow> {
    let mut out = Vec::new();
    for i in 0..g.rows() {
        let row = g.row(i);
        if is_finite_bound(hi[i]) {
            out.push(MarginRow {
                row: row.clone(),
                margin: hi[i] - eq[i],
            });
        }
        if is_finite_bound(lo[i]) {
            out.push(MarginRow {
                row: row.iter().map(|v| -v).collect(),
                margin: eq[i] - lo[i],
            });
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub fn design_high(
    model: &DiscreteLtiModel,
    sampled: &SampledModel,
    constraints: &ConstraintSet,
    targets: &Targets,
    n_h: usize,
    q_h: &Matrix,
    r_h: &Matrix,
    terminal: TerminalOptions,
) -> Result<HighLevelDesign, Error> {
    let part = model.partition();
    if n_h == 0 {
        return Err(Error::Invalid("high-level horizon must be at least 1".into()));
    }
    check_weights(q_h, r_h, part.p(), part.m())?;
    constraints.check_interior(targets)?;
    let c = model.c();
    let q_state = c.transpose().matmul(q_h).matmul(c);
    let (k_h, _) = solve_dare_gain(&sampled.an, &sampled.bn, &q_state, r_h)?;
    let f_h = &sampled.an + &sampled.bn.matmul(&k_h);
    let p_h = solve_discrete_lyapunov(&f_h, &(&q_state + &k_h.transpose().matmul(r_h).matmul(&k_h)))?;
    let mut rows = box_margin_rows(&k_h, &targets.u_r, &constraints.u_lo, &constraints.u_hi);
    rows.extend(box_margin_rows(
        &Matrix::identity(part.n()),
        &targets.x_r,
        &constraints.x_lo,
        &constraints.x_hi,
    ));
    let terminal = TerminalSet::new(targets.x_r.clone(), p_h.clone(), &rows, &f_h, terminal)?;
    Ok(HighLevelDesign {
        n_period: sampled.n_period,
        n_h,
        q_h: q_h.clone(),
        r_h: r_h.clone(),
        k_h,
        p_h,
        terminal,
        sampled: sampled.clone(),
        c: c.clone(),
        constraints: constraints.clone(),
        targets: targets.clone(),
    })
}

impl HighLevelDesign {
    pub fn closed_loop(&self) -> Matrix {
        &self.sampled.an + &self.sampled.bn.matmul(&self.k_h)
    }

    /// The cost `J_H` of an input sequence from `x_now`.
    pub fn objective(&self, x_now: &[f64], inputs: &[Vec<f64>]) -> f64 {
        let t = &self.targets;
        let mut x = x_now.to_vec();
        let mut cost = 0.0;
        for u in inputs {
            let e = vec_sub(&self.c.mul_vec(&x), &t.y_r);
            cost += self.q_h.quad_form(&e) + self.r_h.quad_form(&vec_sub(u, &t.u_r));
            x = self.sampled.step(&x, u);
        }
        cost + self.p_h.quad_form(&vec_sub(&x, &t.x_r))
    }

    /// Stage cost `|y - y_r|_Q^2 + |u - u_r|_R^2` at a slow step.
    pub fn stage_cost(&self, x: &[f64], u: &[f64]) -> f64 {
        let e = vec_sub(&self.c.mul_vec(x), &self.targets.y_r);
        self.q_h.quad_form(&e) + self.r_h.quad_form(&vec_sub(u, &self.targets.u_r))
    }

    /// Condensed QP in the deviations `v_i = u(k+i) - u_r`.
    pub fn build_qp(&self, x_now: &[f64], u_prev: Option<&[f64]>) -> Result<QpProblem, Error> {
        let (n, m) = (self.sampled.an.rows(), self.sampled.bn.cols());
        let len = self.n_h;
        let d = m * len;
        let t = &self.targets;
        let pred = Prediction::new(&self.sampled.an, &self.sampled.bn, len);
        let z0 = vec_sub(x_now, &t.x_r);
        let free = pred.simulate(&z0, &vec![0.0; d]);
        let q_state = self.c.transpose().matmul(&self.q_h).matmul(&self.c);

        let mut h = Matrix::zeros(d, d);
        let mut g = vec![0.0; d];
        for j in 0..=len {
            let w = if j == len { &self.p_h } else { &q_state };
            let blk = pred.row_block(j);
            let bw = blk.transpose().matmul(w);
            h = &h + &bw.matmul(&blk).scale(2.0);
            g = vec_add(&g, &bw.mul_vec(&free[j]).iter().map(|v| 2.0 * v).collect::<Vec<_>>());
        }
        for j in 0..len {
            let cur = h.block(j * m, j * m, m, m);
            h.set_block(j * m, j * m, &(&cur + &self.r_h.scale(2.0)));
        }

        let cons = &self.constraints;
        let mut rows = RowSet::default();
        for j in 0..len {
            for i in 0..m {
                let mut row = vec![0.0; d];
                row[j * m + i] = 1.0;
                rows.push(row, cons.u_lo[i] - t.u_r[i], cons.u_hi[i] - t.u_r[i]);
            }
        }
        for j in 1..=len {
            let blk = pred.row_block(j);
            for i in 0..n {
                let (lo, hi) = (cons.x_lo[i], cons.x_hi[i]);
                if !is_finite_bound(lo) && !is_finite_bound(hi) {
                    continue;
                }
                let shift = t.x_r[i] + free[j][i];
                rows.push(blk.row(i), lo - shift, hi - shift);
            }
        }
        if let (Some(dlo), Some(dhi)) = (&cons.du_lo, &cons.du_hi) {
            let scale = self.n_period as f64;
            for j in 0..len {
                for i in 0..m {
                    let mut row = vec![0.0; d];
                    row[j * m + i] = 1.0;
                    if j == 0 {
                        let Some(prev) = u_prev else { continue };
                        let shift = t.u_r[i] - prev[i];
                        rows.push(row, scale * dlo[i] - shift, scale * dhi[i] - shift);
                    } else {
                        row[(j - 1) * m + i] = -1.0;
                        rows.push(row, scale * dlo[i], scale * dhi[i]);
                    }
                }
            }
        }
        if self.terminal.is_bounded() {
            let blk = pred.row_block(len);
            let at = blk.transpose();
            for face in &self.terminal.facets {
                let row = at.mul_vec(&face.normal);
                let shift: f64 = face.normal.iter().zip(&free[len]).map(|(a, b)| a * b).sum();
                rows.push(row, -INF_BOUND, face.offset - shift);
            }
        }
        Ok(QpProblem::new(h, g, Matrix::zeros(0, d), vec![], rows.matrix(d), rows.lo, rows.hi)?)
    }
}

/// One receding-horizon solve; returns the first input and its one-step prediction.
pub fn solve_high_mpc(
    design: &HighLevelDesign,
    x_now: &[f64],
    u_prev: Option<&[f64]>,
    opts: &QpOptions,
) -> Result<HighLevelResult, Error> {
    let m = design.sampled.bn.cols();
    let qp = design.build_qp(x_now, u_prev)?;
    let sol = solve(&qp, opts)?;
    let feasible = sol.status == QpStatus::Optimal;
    let v = if feasible { sol.x } else { vec![0.0; m * design.n_h] };
    let inputs: Vec<Vec<f64>> = chunk(&v, m)
        .into_iter()
        .map(|vi| vec_add(&vi, &design.targets.u_r))
        .collect();
    let u_now = inputs[0].clone();
    Ok(HighLevelResult {
        x_next_pred: design.sampled.step(x_now, &u_now),
        objective: design.objective(x_now, &inputs),
        u_now,
        predicted_inputs: inputs,
        feasible,
        status: sol.status,
    })
}

/// Weights of the incremental problem.
#[derive(Debug, Clone, PartialEq)]
pub struct IncWeights {
    pub q_bar: Matrix,
    pub r_bar: Matrix,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IncHighLevelDesign {
    pub n_period: usize,
    pub n_h: usize,
    pub weights: IncWeights,
    pub k_bar: Matrix,
    pub p_bar: Matrix,
    pub terminal: TerminalSet,
    pub velocity: VelocityModel,
    pub sampled: SampledModel,
    pub constraints: ConstraintSet,
    pub targets: Targets,
    /// `C̄' y_sr`.
    pub xbar_eq: Vec<f64>,
}

/// Per-solve state carried by the simulation loop.
#[derive(Debug, Clone, PartialEq)]
pub struct IncState {
    /// `(y_s(k), x(k) - x(k-1))`.
    pub xbar: Vec<f64>,
    pub x: Vec<f64>,
    pub u_s_prev: Vec<f64>,
    /// Full input applied over the previous slow step, for rate bounds.
    pub u_prev: Option<Vec<f64>>,
    pub alpha_prev: f64,
    /// Slow index relative to the start of the current alpha schedule.
    pub k_rel: usize,
    pub n_alpha: usize,
    pub y_f0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IncHighResult {
    pub result: HighLevelResult,
    pub alpha_now: f64,
    pub du_s_now: Vec<f64>,
    pub yf_ref_now: Vec<f64>,
    pub predicted_alpha: Vec<f64>,
}

/// Fast input placing the next fast output at `y_f0 + alpha (y_fr - y_f0)`.
pub fn compute_uf_slaved(velocity: &VelocityModel, x: &[f64], u_s: &[f64], alpha: f64, y_f0: &[f64], y_fr: &[f64]) -> Vec<f64> {
    let yf: Vec<f64> = y_f0.iter().zip(y_fr).map(|(a, b)| a + alpha * (b - a)).collect();
    velocity.tilde.slaved_uf(x, u_s, &yf)
}

/// Affine map `value = lin * xi + off` from the stacked decision vector.
struct Affine {
    lin: Matrix,
    off: Vec<f64>,
}

impl Affine {
    fn row(&self, i: usize) -> (Vec<f64>, f64) {
        (self.lin.row(i), self.off[i])
    }
}

#[allow(clippy::too_many_arguments)]
pub fn design_inc_high(
    model: &DiscreteLtiModel,
    sampled: &SampledModel,
    velocity: &VelocityModel,
    constraints: &ConstraintSet,
    targets: &Targets,
    weights: &IncWeights,
    n_h: usize,
    terminal: TerminalOptions,
) -> Result<IncHighLevelDesign, Error> {
    let part = model.partition();
    let nv = velocity.dim();
    check_weights(&weights.q_bar, &weights.r_bar, nv, part.m_s)?;
    if !(weights.gamma > 0.0 && weights.gamma.is_finite()) {
        return Err(Error::Invalid("gamma must be positive".into()));
    }
    if n_h < 2 {
        return Err(Error::Invalid("incremental horizon must be at least 2".into()));
    }
    constraints.check_interior(targets)?;
    let (k_bar, _) = solve_dare_gain(&velocity.a_bar, &velocity.bs_bar, &weights.q_bar, &weights.r_bar)?;
    let f_bar = &velocity.a_bar + &velocity.bs_bar.matmul(&k_bar);
    let p_bar = solve_discrete_lyapunov(
        &f_bar,
        &(&weights.q_bar + &k_bar.transpose().matmul(&weights.r_bar).matmul(&k_bar)),
    )?;
    let y_sr = targets.y_r[part.ys()].to_vec();
    let mut xbar_eq = vec![0.0; nv];
    xbar_eq[..part.p_s].copy_from_slice(&y_sr);

    // Quantities recovered from x̄(k+1) with ỹ_f = y_fr, linearized around the equilibrium.
    let g_uf = velocity.gamma_uf.scale(-1.0);
    let mut rows = Vec::new();
    for (g, eq, lo, hi) in [
        (&velocity.gamma_x, &targets.x_r, &constraints.x_lo, &constraints.x_hi),
        (
            &velocity.gamma_us,
            &targets.u_r[part.us()].to_vec(),
            &constraints.u_lo[part.us()].to_vec(),
            &constraints.u_hi[part.us()].to_vec(),
        ),
        (
            &g_uf,
            &targets.u_r[part.uf()].to_vec(),
            &constraints.u_lo[part.uf()].to_vec(),
            &constraints.u_hi[part.uf()].to_vec(),
        ),
    ] {
        rows.extend(box_margin_rows(&g.matmul(&f_bar), eq, lo, hi));
    }
    let terminal = TerminalSet::new(xbar_eq.clone(), p_bar.clone(), &rows, &f_bar, terminal)?;
    Ok(IncHighLevelDesign {
        n_period: sampled.n_period,
        n_h,
        weights: weights.clone(),
        k_bar,
        p_bar,
        terminal,
        velocity: velocity.clone(),
        sampled: sampled.clone(),
        constraints: constraints.clone(),
        targets: targets.clone(),
        xbar_eq,
    })
}

impl IncHighLevelDesign {
    pub fn closed_loop(&self) -> Matrix {
        &self.velocity.a_bar + &self.velocity.bs_bar.matmul(&self.k_bar)
    }

    fn part(&self) -> crate::model::Partition {
        self.sampled.partition
    }

    fn y_fr(&self) -> Vec<f64> {
        self.targets.y_r[self.part().yf()].to_vec()
    }

    /// Alpha bounds at prediction step `i`: pinned values or the free interval.
    pub fn alpha_bounds(&self, state: &IncState, i: usize) -> (f64, f64) {
        let abs = state.k_rel + i;
        if abs == 0 {
            (0.0, 0.0)
        } else if abs >= state.n_alpha {
            (1.0, 1.0)
        } else {
            (0.0, 1.0)
        }
    }

    /// The incremental cost of a candidate `(Δu_s, α)` sequence.
    pub fn objective(&self, state: &IncState, du_s: &[Vec<f64>], alpha: &[f64]) -> f64 {
        let w = vec_sub(&self.y_fr(), &state.y_f0);
        let mut xbar = state.xbar.clone();
        let mut a_prev = state.alpha_prev;
        let mut cost = 0.0;
        for (du, &a) in du_s.iter().zip(alpha) {
            cost += self.stage_cost(&xbar, du, a);
            let dy: Vec<f64> = w.iter().map(|v| v * (a - a_prev)).collect();
            xbar = self.velocity.step(&xbar, du, &dy);
            a_prev = a;
        }
        cost + self.p_bar.quad_form(&vec_sub(&xbar, &self.xbar_eq))
    }

    pub fn stage_cost(&self, xbar: &[f64], du_s: &[f64], alpha: f64) -> f64 {
        self.weights.q_bar.quad_form(&vec_sub(xbar, &self.xbar_eq))
            + self.weights.r_bar.quad_form(du_s)
            + self.weights.gamma * (alpha - 1.0).powi(2)
    }

    /// Condensed QP over `ν_i = (Δu_s(k+i), Δα(k+i))`.
    pub fn build_qp(&self, state: &IncState) -> Result<QpProblem, Error> {
        let part = self.part();
        let (ms, n) = (part.m_s, part.n());
        let step = ms + 1;
        let len = self.n_h;
        let d = step * len;
        let w = vec_sub(&self.y_fr(), &state.y_f0);
        let bfw = Matrix::column(&self.velocity.bf_bar.mul_vec(&w));
        let b_comb = Matrix::hstack(&[&self.velocity.bs_bar, &bfw]);
        let pred = Prediction::new(&self.velocity.a_bar, &b_comb, len);
        let free = pred.simulate(&state.xbar, &vec![0.0; d]);

        // α_i = α_prev + sum_{l<=i} Δα_l.
        let alpha_row = |i: usize| -> Vec<f64> {
            let mut r = vec![0.0; d];
            for l in 0..=i {
                r[l * step + ms] = 1.0;
            }
            r
        };
        let xbar_at = |j: usize| Affine {
            lin: pred.row_block(j),
            off: free[j].clone(),
        };

        let mut h = Matrix::zeros(d, d);
        let mut g = vec![0.0; d];
        let mut add_quad = |lin: &Matrix, off: &[f64], wgt: &Matrix| {
            let lw = lin.transpose().matmul(wgt);
            h = &h + &lw.matmul(lin).scale(2.0);
            for (gi, v) in g.iter_mut().zip(lw.mul_vec(off)) {
                *gi += 2.0 * v;
            }
        };
        for j in 0..=len {
            let xa = xbar_at(j);
            let off = vec_sub(&xa.off, &self.xbar_eq);
            let wgt = if j == len { &self.p_bar } else { &self.weights.q_bar };
            add_quad(&xa.lin, &off, wgt);
        }
        for i in 0..len {
            let mut sel = Matrix::zeros(ms, d);
            for c in 0..ms {
                sel[(c, i * step + c)] = 1.0;
            }
            add_quad(&sel, &vec![0.0; ms], &self.weights.r_bar);
            let a = Matrix::from_rows(&[alpha_row(i)]).expect("finite");
            add_quad(&a, &[state.alpha_prev - 1.0], &Matrix::from_diag(&[self.weights.gamma]));
        }

        let mut eq_rows = RowSet::default();
        let mut rows = RowSet::default();
        for i in 0..len {
            let (lo, hi) = self.alpha_bounds(state, i);
            let r = alpha_row(i);
            if lo == hi {
                eq_rows.push(r, lo - state.alpha_prev, lo - state.alpha_prev);
            } else {
                rows.push(r, lo - state.alpha_prev, hi - state.alpha_prev);
            }
            let mut mono = vec![0.0; d];
            mono[i * step + ms] = 1.0;
            rows.push(mono, 0.0, INF_BOUND);
        }

        // Recovered (x, u_s, u_f) at step i from x̄(k+i+1) and ỹ_f(k+i).
        let v = &self.velocity;
        let mut recovered: Vec<(Affine, Affine)> = Vec::with_capacity(len);
        for i in 0..len {
            let xa = xbar_at(i + 1);
            let ar = alpha_row(i);
            // ỹ = y_f0 + α w = (y_f0 + α_prev w) + (ar ξ) w
            let y_off: Vec<f64> = state.y_f0.iter().zip(&w).map(|(a, b)| a + state.alpha_prev * b).collect();
            let mut y_lin = Matrix::zeros(part.p_f, d);
            for r in 0..part.p_f {
                for c in 0..d {
                    y_lin[(r, c)] = w[r] * ar[c];
                }
            }
            // z = x̄ − B̄f ỹ
            let z_lin = &xa.lin - &v.bf_bar.matmul(&y_lin);
            let z_off = vec_sub(&xa.off, &v.bf_bar.mul_vec(&y_off));
            let x_aff = Affine {
                lin: v.gamma_x.matmul(&z_lin),
                off: v.gamma_x.mul_vec(&z_off),
            };
            let us_lin = v.gamma_us.matmul(&z_lin);
            let uf_lin = &v.cff_bff_inv.matmul(&y_lin) - &v.gamma_uf.matmul(&z_lin);
            let uf_off = vec_sub(&v.cff_bff_inv.mul_vec(&y_off), &v.gamma_uf.mul_vec(&z_off));
            let u_aff = Affine {
                lin: Matrix::vstack(&[&us_lin, &uf_lin]),
                off: [v.gamma_us.mul_vec(&z_off), uf_off].concat(),
            };
            recovered.push((x_aff, u_aff));
        }
        let cons = &self.constraints;
        for (i, (x_aff, u_aff)) in recovered.iter().enumerate() {
            for r in 0..part.m() {
                let (row, off) = u_aff.row(r);
                rows.push(row, cons.u_lo[r] - off, cons.u_hi[r] - off);
            }
            if i == 0 {
                continue;
            }
            for r in 0..n {
                let (lo, hi) = (cons.x_lo[r], cons.x_hi[r]);
                if !is_finite_bound(lo) && !is_finite_bound(hi) {
                    continue;
                }
                let (row, off) = x_aff.row(r);
                rows.push(row, lo - off, hi - off);
            }
        }
        if let (Some(dlo), Some(dhi)) = (&cons.du_lo, &cons.du_hi) {
            let scale = self.n_period as f64;
            for i in 0..len {
                for r in 0..part.m() {
                    let (row, off) = recovered[i].1.row(r);
                    let (row, off) = if i == 0 {
                        let Some(prev) = &state.u_prev else { continue };
                        (row, off - prev[r])
                    } else {
                        let (prow, poff) = recovered[i - 1].1.row(r);
                        (vec_sub(&row, &prow), off - poff)
                    };
                    rows.push(row, scale * dlo[r] - off, scale * dhi[r] - off);
                }
            }
        }
        if self.terminal.is_bounded() {
            let xa = xbar_at(len);
            let at = xa.lin.transpose();
            let z = vec_sub(&xa.off, &self.xbar_eq);
            for face in &self.terminal.facets {
                let shift: f64 = face.normal.iter().zip(&z).map(|(a, b)| a * b).sum();
                rows.push(at.mul_vec(&face.normal), -INF_BOUND, face.offset - shift);
            }
        }
        let a_eq = eq_rows.matrix(d);
        Ok(QpProblem::new(h, g, a_eq, eq_rows.lo, rows.matrix(d), rows.lo, rows.hi)?)
    }
}

/// One incremental solve. Infeasibility is reported through `result.feasible`.
pub fn solve_inc_high_mpc(design: &IncHighLevelDesign, state: &IncState, opts: &QpOptions) -> Result<IncHighResult, Error> {
    let part = design.part();
    let ms = part.m_s;
    let step = ms + 1;
    let qp = design.build_qp(state)?;
    let sol = solve(&qp, opts)?;
    let feasible = sol.status == QpStatus::Optimal;
    let xi = if feasible { sol.x } else { vec![0.0; step * design.n_h] };
    let mut du_s = Vec::with_capacity(design.n_h);
    let mut alpha = Vec::with_capacity(design.n_h);
    let mut a = state.alpha_prev;
    for nu in xi.chunks(step) {
        du_s.push(nu[..ms].to_vec());
        a += nu[ms];
        alpha.push(a);
    }
    let alpha_now = alpha[0];
    let u_s = vec_add(&state.u_s_prev, &du_s[0]);
    let y_fr = design.y_fr();
    let u_f = compute_uf_slaved(&design.velocity, &state.x, &u_s, alpha_now, &state.y_f0, &y_fr);
    let u_now = [u_s.clone(), u_f].concat();
    let yf_ref_now: Vec<f64> = state.y_f0.iter().zip(&y_fr).map(|(a, b)| a + alpha_now * (b - a)).collect();

    // Predicted absolute inputs, recovered along the velocity trajectory.
    let w = vec_sub(&y_fr, &state.y_f0);
    let mut xbar = state.xbar.clone();
    let mut a_prev = state.alpha_prev;
    let mut predicted = Vec::with_capacity(design.n_h);
    for (du, &ai) in du_s.iter().zip(&alpha) {
        let dy: Vec<f64> = w.iter().map(|v| v * (ai - a_prev)).collect();
        xbar = design.velocity.step(&xbar, du, &dy);
        let yf: Vec<f64> = state.y_f0.iter().zip(&w).map(|(a, b)| a + ai * b).collect();
        let (_, us, uf) = design.velocity.recover(&xbar, &yf);
        predicted.push([us, uf].concat());
        a_prev = ai;
    }
    predicted[0] = u_now.clone();
    let objective = design.objective(state, &du_s, &alpha);
    Ok(IncHighResult {
        result: HighLevelResult {
            x_next_pred: design.sampled.step(&state.x, &u_now),
            u_now,
            predicted_inputs: predicted,
            objective,
            feasible,
            status: sol.status,
        },
        alpha_now,
        du_s_now: du_s[0].clone(),
        yf_ref_now,
        predicted_alpha: alpha,
    })
}
