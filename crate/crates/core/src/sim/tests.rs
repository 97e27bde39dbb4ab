use super::*;
use crate::model::{fixtures::scalar_partition, ConstraintSet};
use crate::scenario::fixtures::{bt_file, equilibrium_file};
use crate::scenario::{ModelKind, Scenario, ScheduleEntry};

fn bt(n_sim: usize) -> Scenario {
    let mut f = bt_file();
    f.sim.n_sim = n_sim;
    if n_sim <= 400 {
        f.schedule.truncate(1);
    }
    Scenario::from_file(f).unwrap()
}

#[test]
fn equilibrium_runs_are_identically_zero() {
    let sc = Scenario::from_file(equilibrium_file()).unwrap();
    for algo in Algorithm::ALL {
        let (trace, m) = run(&sc, algo, &SimOptions::default()).unwrap();
        assert_eq!(trace.steps.len(), 100);
        assert!(trace.steps.iter().all(|s| s.y.iter().chain(&s.u).all(|v| v.abs() < 1e-12)), "{algo}");
        assert!(m.j_s < 1e-20 && m.j_f < 1e-20);
        let rep = assert_theorem_properties(&trace, &TheoremThresholds::default());
        assert!(rep.passed(), "{algo}: {rep}");
        if algo == Algorithm::IncDmpc {
            assert!(trace.slow[2..].iter().all(|s| s.alpha == Some(1.0)));
        }
    }
}

#[test]
fn zero_correction_matches_sampled_loop() {
    let sc = bt(200);
    let opts = SimOptions {
        force_zero_correction: true,
        ..SimOptions::default()
    };
    let (trace, _) = run_dmpc(&sc, &opts).unwrap();
    let sampled = resample(&sc.model, sc.n).unwrap();
    let mut x = sc.x0.clone();
    for s in &trace.slow {
        assert!(norm_inf(&vec_sub(&s.x, &x)) < 1e-8, "k={}", s.k);
        x = sampled.step(&x, &s.u);
    }
    assert!(norm_inf(&vec_sub(&trace.steps.last().unwrap().x, &x)) < 1e-8);
}

#[test]
fn runs_are_deterministic() {
    let sc = bt(120);
    for algo in Algorithm::ALL {
        let (a, _) = run(&sc, algo, &SimOptions::default()).unwrap();
        let (b, _) = run(&sc, algo, &SimOptions::default()).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn interval_endpoints_and_slow_states_agree() {
    let sc = bt(200);
    let (trace, _) = run_dmpc(&sc, &SimOptions::default()).unwrap();
    for w in trace.slow.windows(2) {
        assert!(norm_inf(&vec_sub(&w[1].x, &w[0].x_endpoint)) < 1e-6);
        let boundary = &trace.steps[w[1].h - 1];
        assert_eq!(boundary.x, w[1].x);
    }
}

#[test]
fn incremental_alpha_reaches_one_by_n_alpha() {
    let sc = bt(200);
    let (trace, _) = run_inc_dmpc(&sc, &SimOptions::default()).unwrap();
    assert!(trace.slow[0].alpha.unwrap().abs() < 1e-12);
    let na = trace.slow[0].n_alpha.unwrap();
    assert!(trace.slow[na..].iter().all(|s| (s.alpha.unwrap() - 1.0).abs() < 1e-9));
    assert!(trace.slow.windows(2).all(|w| w[1].alpha.unwrap() >= w[0].alpha.unwrap() - 1e-12));
}

fn manual_trace(errs: &[(usize, f64)], n: usize) -> SimTrace {
    let part = crate::model::fixtures::bt_partition();
    SimTrace {
        algorithm: Algorithm::Pid,
        dt: 1.0,
        partition: part,
        constraints: ConstraintSet::unbounded(3, 3),
        schedule: vec![(0, vec![0.0; 3])],
        y0: vec![0.0; 3],
        steps: (1..=n)
            .map(|h| {
                let mut y = vec![0.0; 3];
                for &(c, v) in errs.iter().filter(|_| h <= 10) {
                    y[c] = v;
                }
                StepRecord {
                    h,
                    x: y.clone(),
                    y,
                    u: vec![0.0; 3],
                    ubar: vec![0.0; 3],
                    du: vec![0.0; 3],
                    alpha: None,
                    feasible_high: true,
                    feasible_low: true,
                    stage_cost: 0.0,
                }
            })
            .collect(),
        slow: vec![],
    }
}

#[test]
fn metrics_hand_values() {
    let t = manual_trace(&[], 30);
    let m = compute_metrics(&t, &t.schedule);
    assert_eq!((m.j_s, m.j_f), (0.0, 0.0));
    let t = manual_trace(&[(2, 1.0)], 30);
    let m = compute_metrics(&t, &t.schedule);
    assert_eq!((m.j_s, m.j_f), (0.0, 10.0));
    let t = manual_trace(&[(0, 2.0)], 30);
    assert_eq!(compute_metrics(&t, &t.schedule).j_s, 40.0);
}

#[test]
fn settle_time_counts_from_switch() {
    let mut t = manual_trace(&[], 40);
    t.schedule = vec![(0, vec![0.0; 3]), (20, vec![0.0, 1.0, 0.0])];
    for s in t.steps.iter_mut().filter(|s| s.h >= 20) {
        s.y[1] = if s.h < 27 { 0.5 } else { 0.99 };
    }
    let m = compute_metrics(&t, &t.schedule);
    assert_eq!(m.settle[1].channels[1], Some(7));
    assert_eq!(m.fast_settle(1, t.partition), Some(7));
    t.steps.last_mut().unwrap().y[1] = 0.0;
    let m = compute_metrics(&t, &t.schedule);
    assert_eq!(m.settle[1].channels[1], None);
    assert_eq!(m.fast_settle(1, t.partition), None);
}

#[test]
fn corrupted_correction_is_flagged() {
    let sc = bt(200);
    let (mut trace, _) = run_dmpc(&sc, &SimOptions::default()).unwrap();
    let th = TheoremThresholds::default();
    assert!(assert_theorem_properties(&trace, &th).du_ok());
    trace.steps[150].du[1] = 0.05;
    let rep = assert_theorem_properties(&trace, &th);
    assert!(!rep.du_ok() && !rep.passed());
    trace.steps[10].feasible_low = false;
    assert_eq!(assert_theorem_properties(&trace, &th).infeasible_steps, vec![11]);
}

#[test]
fn proportional_scalar_loop_decays_geometrically() {
    let mut f = bt_file();
    f.model.kind = ModelKind::Discrete;
    f.model.a = vec![vec![1.0]];
    f.model.b = vec![vec![1.0]];
    f.model.c = vec![vec![1.0]];
    f.model.partition = scalar_partition();
    f.constraints = crate::scenario::ConstraintSpec {
        u_lo: vec![None],
        u_hi: vec![None],
        x_lo: None,
        x_hi: None,
        du_lo: None,
        du_hi: None,
        rate_constraints: false,
    };
    f.schedule = vec![ScheduleEntry { h: 0, y_r: vec![0.0] }];
    f.dmpc.n = 1;
    f.dmpc.q_h = vec![vec![1.0]];
    f.dmpc.r_h = vec![vec![1.0]];
    f.inc_dmpc.q_bar = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
    f.low.q = vec![vec![1.0]];
    f.low.r = vec![vec![1.0]];
    f.pid = PidConfig {
        loops: vec![PidLoop { input: 0, output: 0, p: 0.5, i: 0.0, d: 0.0 }],
        derivative_filter: 0.0,
    };
    f.sim = crate::scenario::SimSpec { n_sim: 20, x0: vec![1.0] };
    let sc = Scenario::from_file(f).unwrap();
    let (trace, _) = run_pid(&sc, &sc.pid).unwrap();
    for (i, s) in trace.steps.iter().enumerate() {
        assert!((s.y[0] - 0.5f64.powi(i as i32 + 1)).abs() < 1e-15);
    }
}

#[test]
fn pid_respects_saturation() {
    let sc = bt(800);
    let (trace, _) = run_pid(&sc, &sc.pid).unwrap();
    let rep = assert_theorem_properties(&trace, &TheoremThresholds::default());
    assert!(rep.constraints_ok());
}

#[test]
fn pid_pairing_validation() {
    let mut p = bt_file().pid;
    p.loops[1].output = 0;
    assert!(p.validate(3, 3).is_err());
    p.loops.pop();
    assert!(p.validate(3, 3).is_err());
}

#[test]
fn algorithm_names() {
    for a in Algorithm::ALL {
        assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
    }
    assert!("mpc".parse::<Algorithm>().is_err());
}
