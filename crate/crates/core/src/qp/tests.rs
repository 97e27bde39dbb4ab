use super::*;
use crate::model::INF_BOUND;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn empty(d: usize) -> Matrix {
    Matrix::zeros(0, d)
}

fn boxed(h: Matrix, g: Vec<f64>, lo: Vec<f64>, hi: Vec<f64>) -> QpProblem {
    let d = g.len();
    QpProblem::new(h, g, empty(d), vec![], Matrix::identity(d), lo, hi).unwrap()
}

#[test]
fn scalar_active_bound() {
    let p = boxed(Matrix::from_diag(&[2.0]), vec![0.0], vec![1.0], vec![INF_BOUND]);
    let s = solve(&p, &QpOptions::default()).unwrap();
    assert_eq!(s.status, QpStatus::Optimal);
    assert!((s.x[0] - 1.0).abs() < 1e-12);
    assert!((s.objective - 1.0).abs() < 1e-12);
    assert!(s.z_in[0] < 0.0);
}

#[test]
fn unconstrained_newton_step() {
    let d = 4;
    let p = QpProblem::new(Matrix::identity(d).scale(2.0), vec![-2.0; d], empty(d), vec![], empty(d), vec![], vec![])
        .unwrap();
    let s = solve(&p, &QpOptions::default()).unwrap();
    assert!(s.x.iter().all(|v| (v - 1.0).abs() < 1e-12));
    assert!((s.objective + d as f64).abs() < 1e-12);
    let half = QpProblem::new(Matrix::identity(d).scale(2.0), vec![-1.0; d], empty(d), vec![], empty(d), vec![], vec![])
        .unwrap();
    let s = solve(&half, &QpOptions::default()).unwrap();
    assert!(s.x.iter().all(|v| (v - 0.5).abs() < 1e-12));
    assert!((s.objective + 0.25 * d as f64).abs() < 1e-12);
}

#[test]
fn rejects_nonconvex() {
    let r = QpProblem::new(Matrix::from_diag(&[1.0, -1.0]), vec![0.0; 2], empty(2), vec![], empty(2), vec![], vec![]);
    assert!(matches!(r, Err(QpError::NotConvex)));
}

#[test]
fn detects_infeasibility() {
    // x0 + x1 = 3 with both in [0, 1].
    let p = QpProblem::new(
        Matrix::identity(2),
        vec![0.0; 2],
        Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap(),
        vec![3.0],
        Matrix::identity(2),
        vec![0.0; 2],
        vec![1.0; 2],
    )
    .unwrap();
    assert_eq!(solve(&p, &QpOptions::default()).unwrap().status, QpStatus::Infeasible);
    let q = boxed(Matrix::identity(1), vec![0.0], vec![2.0], vec![1.0]);
    assert_eq!(solve(&q, &QpOptions::default()).unwrap().status, QpStatus::Infeasible);
}

#[test]
fn semidefinite_lp_like() {
    // min -x0 - x1 over the unit box with x0 - x1 = 0.2.
    let p = QpProblem::new(
        Matrix::zeros(2, 2),
        vec![-1.0, -1.0],
        Matrix::from_rows(&[vec![1.0, -1.0]]).unwrap(),
        vec![0.2],
        Matrix::identity(2),
        vec![0.0; 2],
        vec![1.0; 2],
    )
    .unwrap();
    let s = solve(&p, &QpOptions::default()).unwrap();
    assert_eq!(s.status, QpStatus::Optimal);
    assert!((s.x[0] - 1.0).abs() < 1e-7 && (s.x[1] - 0.8).abs() < 1e-7);
}

#[test]
fn dependent_equalities() {
    let a = Matrix::from_rows(&[vec![1.0, 1.0], vec![2.0, 2.0]]).unwrap();
    let p = QpProblem::new(Matrix::identity(2), vec![0.0; 2], a.clone(), vec![1.0, 2.0], empty(2), vec![], vec![]).unwrap();
    let s = solve(&p, &QpOptions::default()).unwrap();
    assert_eq!(s.status, QpStatus::Optimal);
    assert!((s.x[0] - 0.5).abs() < 1e-12);
    let bad = QpProblem::new(Matrix::identity(2), vec![0.0; 2], a, vec![1.0, 3.0], empty(2), vec![], vec![]).unwrap();
    assert_eq!(solve(&bad, &QpOptions::default()).unwrap().status, QpStatus::Infeasible);
}

#[test]
fn kkt_detects_perturbation() {
    let p = boxed(Matrix::from_diag(&[2.0]), vec![0.0], vec![1.0], vec![INF_BOUND]);
    let s = solve(&p, &QpOptions::default()).unwrap();
    assert!(kkt_residual(&p, &s.x, &s.y_eq, &s.z_in) <= 1e-10);
    let moved = [s.x[0] + 0.1];
    assert!(kkt_residual(&p, &moved, &s.y_eq, &s.z_in) > 1e-3);
}

#[test]
fn warm_start_cross_check_passes_on_feasible() {
    let p = boxed(Matrix::identity(2), vec![1.0, -1.0], vec![-1.0; 2], vec![1.0; 2]);
    let opts = QpOptions {
        warm_start: Some(vec![0.0, 0.0]),
        ..QpOptions::default()
    };
    assert_eq!(solve(&p, &opts).unwrap().status, QpStatus::Optimal);
}

pub(crate) struct Oracle {
    pub objective: f64,
    pub x: Vec<f64>,
}

/// Enumerates every choice of {free, lower, upper} per variable for a box plus
/// equality problem, solves each equality-constrained subproblem, and keeps the
/// best feasible stationary point.
pub(crate) fn enumerate_active_sets(p: &QpProblem) -> Option<Oracle> {
    let d = p.dim();
    let total = 3usize.pow(d as u32);
    let mut best: Option<Oracle> = None;
    for code in 0..total {
        let mut c = code;
        let mut fixed = Vec::new();
        for i in 0..d {
            match c % 3 {
                1 => fixed.push((i, p.b_lo[i])),
                2 => fixed.push((i, p.b_hi[i])),
                _ => {}
            }
            c /= 3;
        }
        let k = p.a_eq.rows() + fixed.len();
        let mut kkt = Matrix::zeros(d + k, d + k);
        kkt.set_block(0, 0, &p.h);
        let mut rhs: Vec<f64> = p.g.iter().map(|v| -v).collect();
        for r in 0..p.a_eq.rows() {
            for j in 0..d {
                kkt[(d + r, j)] = p.a_eq[(r, j)];
                kkt[(j, d + r)] = p.a_eq[(r, j)];
            }
            rhs.push(p.b_eq[r]);
        }
        for (c, &(i, v)) in fixed.iter().enumerate() {
            let r = d + p.a_eq.rows() + c;
            kkt[(r, i)] = 1.0;
            kkt[(i, r)] = 1.0;
            rhs.push(v);
        }
        let Ok(lu) = Lu::new(&kkt) else {
            continue;
        };
        let x = lu.solve_vec(&rhs)[..d].to_vec();
        if p.max_violation(&x) > 1e-9 {
            continue;
        }
        let obj = p.objective(&x);
        if best.as_ref().map_or(true, |b| obj < b.objective) {
            best = Some(Oracle { objective: obj, x });
        }
    }
    best
}

pub(crate) fn random_problem(rng: &mut ChaCha8Rng, d: usize, rank: usize) -> QpProblem {
    let f = Matrix::from_row_major(rank, d, (0..rank * d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let h = f.transpose().matmul(&f);
    let g: Vec<f64> = (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let lo: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.5..-0.1)).collect();
    let hi: Vec<f64> = (0..d).map(|_| rng.gen_range(0.1..1.5)).collect();
    // Equality through an interior point so the problem is feasible.
    let a: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let x0: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| l + rng.gen_range(0.2..0.8) * (h - l)).collect();
    let b = dot(&a, &x0);
    QpProblem::new(
        h,
        g,
        Matrix::from_row_major(1, d, a).unwrap(),
        vec![b],
        Matrix::identity(d),
        lo,
        hi,
    )
    .unwrap()
}

#[test]
fn matches_enumeration_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for trial in 0..60 {
        let d = rng.gen_range(1..=6);
        let rank = if trial % 3 == 0 { rng.gen_range(0..=d) } else { d + 1 };
        let p = random_problem(&mut rng, d, rank);
        let s = solve(&p, &QpOptions::default()).unwrap();
        assert_eq!(s.status, QpStatus::Optimal, "trial {trial}");
        let o = enumerate_active_sets(&p).expect("feasible by construction");
        assert!((s.objective - o.objective).abs() <= 1e-6, "trial {trial}: {} vs {}", s.objective, o.objective);
        if rank > d {
            // Strictly convex: the minimizer itself is unique.
            assert!(s.x.iter().zip(&o.x).all(|(a, b)| (a - b).abs() < 1e-5));
        }
        assert!(kkt_residual(&p, &s.x, &s.y_eq, &s.z_in) <= 1e-6);
    }
}

#[test]
fn dense_two_sided_rows_certified() {
    // Random PD problems with dense two-sided rows; check KKT and feasibility only.
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..30 {
        let d = 8;
        let base = random_problem(&mut rng, d, d + 2);
        let rows = 12;
        let a = Matrix::from_row_major(rows, d, (0..rows * d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let lo: Vec<f64> = (0..rows).map(|i| if i % 3 == 0 { -INF_BOUND } else { rng.gen_range(-2.0..-0.05) }).collect();
        let hi: Vec<f64> = (0..rows).map(|i| if i % 4 == 1 { INF_BOUND } else { rng.gen_range(0.05..2.0) }).collect();
        let p = QpProblem::new(base.h, base.g, Matrix::zeros(0, d), vec![], a, lo, hi).unwrap();
        let s = solve(&p, &QpOptions::default()).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert!(p.is_feasible(&s.x, 1e-9));
        assert!(s.kkt_residual <= 1e-8);
    }
}
