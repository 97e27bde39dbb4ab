//! Closed-loop runs of both dual-level schemes and the decentralized PID baseline,
//! plus tracking metrics and the runtime checks of the convergence results.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::model::{
    build_tilde_system, build_velocity_form, resample, steady_state_targets, ConstraintSet, Partition,
};
use crate::mpc_high::{
    design_high, design_inc_high, solve_high_mpc, solve_inc_high_mpc, HighLevelDesign, IncHighLevelDesign, IncState,
};
use crate::mpc_low::{build_interval_plan, solve_low_mpc};
use crate::numerics::{norm2, norm_inf, vec_add, vec_sub};
use crate::qp::QpOptions;
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Dmpc,
    IncDmpc,
    Pid,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Dmpc, Algorithm::IncDmpc, Algorithm::Pid];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Dmpc => "dmpc",
            Algorithm::IncDmpc => "inc-dmpc",
            Algorithm::Pid => "pid",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown algorithm {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidLoop {
    pub input: usize,
    pub output: usize,
    pub p: f64,
    pub i: f64,
    pub d: f64,
}

fn default_filter() -> f64 {
    5.0
}

/// Positional PID loops on deviation variables, run at the basic step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidConfig {
    pub loops: Vec<PidLoop>,
    /// Time constant of the first-order derivative filter, in seconds.
    #[serde(default = "default_filter")]
    pub derivative_filter: f64,
}

impl PidConfig {
    pub fn validate(&self, m: usize, p: usize) -> Result<(), Error> {
        let mut ins = vec![false; m];
        let mut outs = vec![false; p];
        for l in &self.loops {
            if l.input >= m || l.output >= p || ins[l.input] || outs[l.output] {
                return Err(Error::Invalid("pid loops must pair inputs and outputs one to one".into()));
            }
            ins[l.input] = true;
            outs[l.output] = true;
        }
        if self.loops.len() != m || m != p {
            return Err(Error::Invalid("pid pairing must cover every input and output".into()));
        }
        if !(self.derivative_filter >= 0.0 && self.derivative_filter.is_finite()) {
            return Err(Error::Invalid("pid derivative filter must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct SimOptions {
    pub qp: QpOptions,
    /// Skip the basic-rate correction and hold the slow input.
    pub force_zero_correction: bool,
}

/// One basic step: `y(h)` and the input `u(h-1)` that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub h: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    pub ubar: Vec<f64>,
    pub du: Vec<f64>,
    pub alpha: Option<f64>,
    pub feasible_high: bool,
    pub feasible_low: bool,
    /// `|y(h) - y_r(h)|^2`.
    pub stage_cost: f64,
}

/// One slow-level solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SlowRecord {
    pub k: usize,
    pub h: usize,
    pub segment: usize,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub objective: f64,
    pub stage_cost: f64,
    pub feasible: bool,
    pub alpha: Option<f64>,
    pub n_alpha: Option<usize>,
    pub x_endpoint: Vec<f64>,
    /// `|x(kN+N) - x_endpoint|_inf`, or `None` when the run ends mid-interval.
    pub endpoint_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub algorithm: Algorithm,
    pub dt: f64,
    pub partition: Partition,
    pub constraints: ConstraintSet,
    pub schedule: Vec<(usize, Vec<f64>)>,
    /// Output at `h = 0`, the baseline for the first settling window.
    pub y0: Vec<f64>,
    pub steps: Vec<StepRecord>,
    pub slow: Vec<SlowRecord>,
}

/// Settling after the start of one schedule segment, per output channel, in basic steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSettle {
    pub start_h: usize,
    pub channels: Vec<Option<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub j_s: f64,
    pub j_f: f64,
    pub settle: Vec<SegmentSettle>,
}

impl Metrics {
    /// Slowest fast channel after segment `segment` starts; `None` if any never settles.
    pub fn fast_settle(&self, segment: usize, part: Partition) -> Option<usize> {
        let s = self.settle.get(segment)?;
        s.channels[part.yf()].iter().try_fold(0, |acc, c| c.map(|v| acc.max(v)))
    }
}

/// Reference active at basic step `h` and the index of its segment.
pub fn reference_at(schedule: &[(usize, Vec<f64>)], h: usize) -> (usize, &[f64]) {
    let idx = schedule.iter().rposition(|(s, _)| *s <= h).unwrap_or(0);
    (idx, &schedule[idx].1)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

const SETTLE_BAND: f64 = 0.05;

pub fn compute_metrics(trace: &SimTrace, schedule: &[(usize, Vec<f64>)]) -> Metrics {
    let part = trace.partition;
    let (mut j_s, mut j_f) = (0.0, 0.0);
    for s in &trace.steps {
        let (_, r) = reference_at(schedule, s.h);
        j_s += sq_dist(&s.y[part.ys()], &r[part.ys()]);
        j_f += sq_dist(&s.y[part.yf()], &r[part.yf()]);
    }
    let last_h = trace.steps.last().map_or(0, |s| s.h);
    let mut settle = Vec::with_capacity(schedule.len());
    for (seg, (start, r)) in schedule.iter().enumerate() {
        let end = schedule.get(seg + 1).map_or(last_h, |(s, _)| s - 1);
        let prev: &[f64] = if seg == 0 { &trace.y0 } else { &schedule[seg - 1].1 };
        let window: Vec<&StepRecord> = trace.steps.iter().filter(|s| s.h > *start && s.h <= end).collect();
        let channels = (0..part.p())
            .map(|c| {
                let band = SETTLE_BAND * (r[c] - prev[c]).abs() + 1e-12;
                let mut first = None;
                for s in window.iter().rev() {
                    if (s.y[c] - r[c]).abs() > band {
                        break;
                    }
                    first = Some(s.h - start);
                }
                first
            })
            .collect();
        settle.push(SegmentSettle {
            start_h: *start,
            channels,
        });
    }
    Metrics { j_s, j_f, settle }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoremThresholds {
    /// Relative slack on the per-step cost decrease.
    pub cost_slack: f64,
    pub du_window: usize,
    pub du_max: f64,
    pub output_band: f64,
    pub constraint_tol: f64,
    pub endpoint_tol: f64,
}

impl Default for TheoremThresholds {
    fn default() -> Self {
        Self {
            cost_slack: 1e-6,
            du_window: 100,
            du_max: 1e-3,
            output_band: 1e-2,
            constraint_tol: 1e-8,
            endpoint_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoremReport {
    pub thresholds: TheoremThresholds,
    /// Basic steps with an infeasible solve at either level.
    pub infeasible_steps: Vec<usize>,
    /// `(k, excess)` where the slow cost failed to decrease by the stage cost.
    pub cost_violations: Vec<(usize, f64)>,
    pub cost_checks: usize,
    pub final_du_max: f64,
    pub final_output_error: f64,
    pub constraint_violation: f64,
    pub endpoint_error: f64,
}

impl TheoremReport {
    pub fn feasibility_ok(&self) -> bool {
        self.infeasible_steps.is_empty()
    }

    pub fn cost_ok(&self) -> bool {
        self.cost_violations.is_empty()
    }

    pub fn du_ok(&self) -> bool {
        self.final_du_max < self.thresholds.du_max
    }

    pub fn output_ok(&self) -> bool {
        self.final_output_error < self.thresholds.output_band
    }

    pub fn constraints_ok(&self) -> bool {
        self.constraint_violation <= self.thresholds.constraint_tol
    }

    pub fn endpoint_ok(&self) -> bool {
        self.endpoint_error <= self.thresholds.endpoint_tol
    }

    pub fn passed(&self) -> bool {
        self.feasibility_ok() && self.cost_ok() && self.du_ok() && self.output_ok() && self.constraints_ok() && self.endpoint_ok()
    }
}

impl fmt::Display for TheoremReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mark = |ok: bool| if ok { "pass" } else { "FAIL" };
        let t = &self.thresholds;
        writeln!(
            f,
            "feasibility: {} ({} infeasible steps)",
            mark(self.feasibility_ok()),
            self.infeasible_steps.len()
        )?;
        writeln!(
            f,
            "cost decrease: {} ({} checks, {} violations)",
            mark(self.cost_ok()),
            self.cost_checks,
            self.cost_violations.len()
        )?;
        for (k, excess) in self.cost_violations.iter().take(10) {
            writeln!(f, "  slow step {k}: excess {excess:.3e}")?;
        }
        writeln!(
            f,
            "final correction: {} (max |du| over last {} steps {:.3e}, limit {:.1e})",
            mark(self.du_ok()),
            t.du_window,
            self.final_du_max,
            t.du_max
        )?;
        writeln!(
            f,
            "final outputs: {} (max |y - y_r| {:.3e}, band {:.1e})",
            mark(self.output_ok()),
            self.final_output_error,
            t.output_band
        )?;
        writeln!(
            f,
            "constraints: {} (max violation {:.3e})",
            mark(self.constraints_ok()),
            self.constraint_violation
        )?;
        write!(
            f,
            "interval endpoints: {} (max error {:.3e})",
            mark(self.endpoint_ok()),
            self.endpoint_error
        )
    }
}

fn box_violation(v: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    v.iter()
        .zip(lo.iter().zip(hi))
        .map(|(&x, (&l, &h))| (l - x).max(x - h).max(0.0))
        .fold(0.0, f64::max)
}

pub fn assert_theorem_properties(trace: &SimTrace, thresholds: &TheoremThresholds) -> TheoremReport {
    let infeasible_steps = trace
        .steps
        .iter()
        .filter(|s| !s.feasible_high || !s.feasible_low)
        .map(|s| s.h)
        .collect();
    let mut cost_violations = Vec::new();
    let mut cost_checks = 0;
    for w in trace.slow.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a.segment != b.segment || !a.feasible || !b.feasible {
            continue;
        }
        cost_checks += 1;
        let excess = b.objective - a.objective + a.stage_cost;
        if excess > thresholds.cost_slack * (1.0 + a.objective.abs()) {
            cost_violations.push((a.k, excess));
        }
    }
    let skip = trace.steps.len().saturating_sub(thresholds.du_window);
    let final_du_max = trace.steps[skip..].iter().map(|s| norm2(&s.du)).fold(0.0, f64::max);
    let final_output_error = trace.steps.last().map_or(0.0, |s| {
        let (_, r) = reference_at(&trace.schedule, s.h);
        norm_inf(&vec_sub(&s.y, r))
    });
    let c = &trace.constraints;
    let constraint_violation = trace
        .steps
        .iter()
        .map(|s| box_violation(&s.u, &c.u_lo, &c.u_hi).max(box_violation(&s.x, &c.x_lo, &c.x_hi)))
        .fold(0.0, f64::max);
    let endpoint_error = trace.slow.iter().filter_map(|s| s.endpoint_error).fold(0.0, f64::max);
    TheoremReport {
        thresholds: *thresholds,
        infeasible_steps,
        cost_violations,
        cost_checks,
        final_du_max,
        final_output_error,
        constraint_violation,
        endpoint_error,
    }
}

struct Runner<'a> {
    sc: &'a Scenario,
    opts: &'a SimOptions,
    x: Vec<f64>,
    u_last: Option<Vec<f64>>,
    steps: Vec<StepRecord>,
    slow: Vec<SlowRecord>,
}

/// Slow-level outcome handed to the basic-rate loop.
struct SlowPlan {
    ubar: Vec<f64>,
    x_endpoint: Vec<f64>,
    objective: f64,
    stage_cost: f64,
    feasible: bool,
    alpha: Option<f64>,
    n_alpha: Option<usize>,
}

impl<'a> Runner<'a> {
    fn new(sc: &'a Scenario, opts: &'a SimOptions) -> Self {
        Self {
            sc,
            opts,
            x: sc.x0.clone(),
            u_last: None,
            steps: Vec::with_capacity(sc.n_sim),
            slow: Vec::new(),
        }
    }

    fn slow_steps(&self) -> usize {
        self.sc.n_sim.div_ceil(self.sc.n)
    }

    fn stage(&self, h: usize, y: &[f64]) -> f64 {
        sq_dist(y, reference_at(&self.sc.schedule, h).1)
    }

    /// Runs one interval of basic steps around the slow plan.
    fn interval(&mut self, k: usize, segment: usize, plan: SlowPlan) -> Result<(), Error> {
        let sc = self.sc;
        let model = &sc.model;
        let h0 = k * sc.n;
        let x_start = self.x.clone();
        let ip = build_interval_plan(model, &self.x, &plan.ubar, &plan.x_endpoint, sc.n);
        let m = model.partition().m();
        let mut completed = true;
        for t in 0..sc.n {
            let h = h0 + t;
            if h >= sc.n_sim {
                completed = false;
                break;
            }
            let (du, feasible_low) = if self.opts.force_zero_correction {
                (vec![0.0; m], true)
            } else {
                let low = solve_low_mpc(
                    &sc.low,
                    model,
                    &sc.constraints,
                    &ip,
                    &self.x,
                    t,
                    self.u_last.as_deref(),
                    &self.opts.qp,
                )?;
                (low.delta_u_now, low.feasible)
            };
            let u = vec_add(&plan.ubar, &du);
            self.x = model.step(&self.x, &u);
            let y = model.output(&self.x);
            self.steps.push(StepRecord {
                h: h + 1,
                x: self.x.clone(),
                stage_cost: self.stage(h + 1, &y),
                y,
                u: u.clone(),
                ubar: plan.ubar.clone(),
                du,
                alpha: plan.alpha,
                feasible_high: plan.feasible,
                feasible_low,
            });
            self.u_last = Some(u);
        }
        self.slow.push(SlowRecord {
            k,
            h: h0,
            segment,
            x: x_start,
            endpoint_error: completed.then(|| norm_inf(&vec_sub(&self.x, &plan.x_endpoint))),
            u: plan.ubar,
            x_endpoint: plan.x_endpoint,
            objective: plan.objective,
            stage_cost: plan.stage_cost,
            feasible: plan.feasible,
            alpha: plan.alpha,
            n_alpha: plan.n_alpha,
        });
        Ok(())
    }

    fn finish(self, algorithm: Algorithm) -> (SimTrace, Metrics) {
        let sc = self.sc;
        let trace = SimTrace {
            algorithm,
            dt: sc.model.step_seconds(),
            partition: sc.model.partition(),
            constraints: sc.constraints.clone(),
            schedule: sc.schedule.clone(),
            y0: sc.model.output(&sc.x0),
            steps: self.steps,
            slow: self.slow,
        };
        let metrics = compute_metrics(&trace, &sc.schedule);
        (trace, metrics)
    }
}

/// Lazily built per-segment designs.
fn segment_design<T>(
    cache: &mut [Option<T>],
    seg: usize,
    build: impl FnOnce() -> Result<T, Error>,
) -> Result<&T, Error> {
    if cache[seg].is_none() {
        cache[seg] = Some(build()?);
    }
    Ok(cache[seg].as_ref().expect("just built"))
}

pub fn run_dmpc(sc: &Scenario, opts: &SimOptions) -> Result<(SimTrace, Metrics), Error> {
    let model = &sc.model;
    let sampled = resample(model, sc.n)?;
    let mut designs: Vec<Option<HighLevelDesign>> = vec![None; sc.schedule.len()];
    let mut run = Runner::new(sc, opts);
    let mut prev_inputs: Option<Vec<Vec<f64>>> = None;
    let mut u_slow_prev: Option<Vec<f64>> = None;
    for k in 0..run.slow_steps() {
        let (seg, y_r) = reference_at(&sc.schedule, k * sc.n);
        let design = segment_design(&mut designs, seg, || {
            let targets = steady_state_targets(model, y_r)?;
            design_high(model, &sampled, &sc.constraints, &targets, sc.n_h, &sc.q_h, &sc.r_h, sc.terminal)
        })?;
        let res = solve_high_mpc(design, &run.x, u_slow_prev.as_deref(), &opts.qp)?;
        let ubar = if res.feasible {
            res.u_now.clone()
        } else if k == 0 {
            return Err(Error::Infeasible { stage: "high-level", step: 0 });
        } else {
            // Shifted previous plan, kept so the run can report the violation.
            match prev_inputs.as_ref().and_then(|p| p.get(1)) {
                Some(u) => u.clone(),
                None => vec_add(&design.k_h.mul_vec(&vec_sub(&run.x, &design.targets.x_r)), &design.targets.u_r),
            }
        };
        let plan = SlowPlan {
            x_endpoint: sampled.step(&run.x, &ubar),
            stage_cost: design.stage_cost(&run.x, &ubar),
            objective: res.objective,
            feasible: res.feasible,
            alpha: None,
            n_alpha: None,
            ubar: ubar.clone(),
        };
        prev_inputs = Some(res.predicted_inputs);
        run.interval(k, seg, plan)?;
        u_slow_prev = Some(ubar);
    }
    Ok(run.finish(Algorithm::Dmpc))
}

pub fn run_inc_dmpc(sc: &Scenario, opts: &SimOptions) -> Result<(SimTrace, Metrics), Error> {
    let model = &sc.model;
    let part = model.partition();
    let sampled = resample(model, sc.n)?;
    let tilde = build_tilde_system(&sampled, &model.c_ff(), &model.c_ss())?;
    let velocity = build_velocity_form(&tilde, &sampled, &model.c_ff())?;
    let mut designs: Vec<Option<IncHighLevelDesign>> = vec![None; sc.schedule.len()];
    let cap = sc.n_alpha_cap.min(sc.inc_n_h - 1);
    let mut run = Runner::new(sc, opts);

    let mut x_prev = run.x.clone();
    let mut u_s_prev = vec![0.0; part.m_s];
    let mut u_slow_prev: Option<Vec<f64>> = None;
    let mut alpha_prev = 0.0;
    let mut k_rel = 0;
    let mut n_alpha = sc.n_alpha_init;
    let mut y_f0 = model.output(&run.x)[part.yf()].to_vec();
    let mut seg_prev = 0;
    for k in 0..run.slow_steps() {
        let (seg, y_r) = reference_at(&sc.schedule, k * sc.n);
        if seg != seg_prev {
            y_f0 = model.output(&run.x)[part.yf()].to_vec();
            alpha_prev = 0.0;
            k_rel = 1;
            n_alpha = sc.n_alpha_init;
            seg_prev = seg;
        }
        let design = segment_design(&mut designs, seg, || {
            let targets = steady_state_targets(model, y_r)?;
            design_inc_high(
                model,
                &sampled,
                &velocity,
                &sc.constraints,
                &targets,
                &sc.inc_weights,
                sc.inc_n_h,
                sc.terminal,
            )
        })?;
        let res = loop {
            let state = IncState {
                xbar: velocity.lift(&run.x, &x_prev),
                x: run.x.clone(),
                u_s_prev: u_s_prev.clone(),
                u_prev: u_slow_prev.clone(),
                alpha_prev,
                k_rel,
                n_alpha,
                y_f0: y_f0.clone(),
            };
            let res = solve_inc_high_mpc(design, &state, &opts.qp)?;
            if res.result.feasible {
                break (res, state);
            }
            if n_alpha >= cap {
                return Err(Error::AlphaHorizonExhausted { cap });
            }
            n_alpha += 1;
        };
        let (res, state) = res;
        let ubar = res.result.u_now.clone();
        let plan = SlowPlan {
            x_endpoint: res.result.x_next_pred.clone(),
            stage_cost: design.stage_cost(&state.xbar, &res.du_s_now, res.alpha_now),
            objective: res.result.objective,
            feasible: true,
            alpha: Some(res.alpha_now),
            n_alpha: Some(n_alpha),
            ubar: ubar.clone(),
        };
        x_prev = run.x.clone();
        run.interval(k, seg, plan)?;
        u_s_prev = ubar[part.us()].to_vec();
        u_slow_prev = Some(ubar);
        alpha_prev = res.alpha_now;
        k_rel += 1;
    }
    Ok(run.finish(Algorithm::IncDmpc))
}

pub fn run_pid(sc: &Scenario, pid: &PidConfig) -> Result<(SimTrace, Metrics), Error> {
    let model = &sc.model;
    let part = model.partition();
    pid.validate(part.m(), part.p())?;
    let dt = model.step_seconds();
    let a = if pid.derivative_filter > 0.0 {
        pid.derivative_filter / (pid.derivative_filter + dt)
    } else {
        0.0
    };
    let c = &sc.constraints;
    let nl = pid.loops.len();
    let (mut integ, mut deriv, mut e_prev) = (vec![0.0; nl], vec![0.0; nl], None::<Vec<f64>>);
    let opts = SimOptions::default();
    let mut run = Runner::new(sc, &opts);
    for h in 0..sc.n_sim {
        let y = model.output(&run.x);
        let (_, r) = reference_at(&sc.schedule, h);
        let e: Vec<f64> = pid.loops.iter().map(|l| r[l.output] - y[l.output]).collect();
        let ep = e_prev.as_ref().unwrap_or(&e).clone();
        let mut u = vec![0.0; part.m()];
        for (j, l) in pid.loops.iter().enumerate() {
            let i_new = integ[j] + 0.5 * dt * (e[j] + ep[j]);
            deriv[j] = a * deriv[j] + (1.0 - a) * (e[j] - ep[j]) / dt;
            let raw = l.p * e[j] + l.i * i_new + l.d * deriv[j];
            let sat = raw.clamp(c.u_lo[l.input], c.u_hi[l.input]);
            if sat == raw {
                integ[j] = i_new;
            }
            u[l.input] = sat;
        }
        run.x = model.step(&run.x, &u);
        let y = model.output(&run.x);
        run.steps.push(StepRecord {
            h: h + 1,
            x: run.x.clone(),
            stage_cost: run.stage(h + 1, &y),
            y,
            ubar: u.clone(),
            du: vec![0.0; part.m()],
            u,
            alpha: None,
            feasible_high: true,
            feasible_low: true,
        });
        e_prev = Some(e);
    }
    Ok(run.finish(Algorithm::Pid))
}

pub fn run(sc: &Scenario, algorithm: Algorithm, opts: &SimOptions) -> Result<(SimTrace, Metrics), Error> {
    match algorithm {
        Algorithm::Dmpc => run_dmpc(sc, opts),
        Algorithm::IncDmpc => run_inc_dmpc(sc, opts),
        Algorithm::Pid => run_pid(sc, &sc.pid),
    }
}

#[cfg(test)]
mod tests;
