use dualmpc::model::{
    build_tilde_system, build_velocity_form, resample, resample_matrices, DiscreteLtiModel, Partition,
};
use dualmpc::numerics::{
    lyapunov_residual, norm_inf, solve_dare_gain, solve_discrete_lyapunov, vec_sub, Matrix,
};
use dualmpc::qp::{solve, QpOptions, QpProblem, QpStatus};
use dualmpc::trace::{read_trace_csv, write_rows, CsvRow};
use proptest::prelude::*;

fn bt_model() -> DiscreteLtiModel {
    let ac = Matrix::from_rows(&[vec![0.0, -0.008, 0.0], vec![0.0, -0.003, 0.0], vec![0.0, 0.092, -0.1]]).unwrap();
    let bc = Matrix::from_rows(&[vec![1.66, 0.0, -1.68], vec![-0.15, 0.9, -0.43], vec![0.0, 0.0, 17.4]]).unwrap();
    let part = Partition {
        n_s: 1,
        n_f: 2,
        m_s: 1,
        m_f: 2,
        p_s: 1,
        p_f: 2,
    };
    DiscreteLtiModel::from_continuous(&ac, &bc, Matrix::identity(3), part, 1.0).unwrap()
}

fn mat(n: usize, m: usize, v: &[f64]) -> Matrix {
    Matrix::from_row_major(n, m, v[..n * m].to_vec()).unwrap()
}

fn values(len: usize, scale: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-scale..scale, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn resampling_is_a_semigroup(av in values(9, 0.6), bv in values(6, 1.0), n1 in 1usize..5, n2 in 1usize..5) {
        let (a, b) = (mat(3, 3, &av), mat(3, 2, &bv));
        let (a1, b1) = resample_matrices(&a, &b, n1);
        let (a12, b12) = resample_matrices(&a1, &b1, n2);
        let (a2, b2) = resample_matrices(&a, &b, n1 * n2);
        prop_assert!(a12.max_abs_diff(&a2) < 1e-9 * (1.0 + a2.max_abs()));
        prop_assert!(b2.max_abs_diff(&b12) < 1e-9 * (1.0 + b2.max_abs()));
    }

    #[test]
    fn lyapunov_on_random_stable_matrices(fv in values(16, 1.0), qv in values(16, 1.0)) {
        let f = mat(4, 4, &fv);
        let nrm = f.norm_one().max(1e-3);
        let f = f.scale(0.9 / nrm);
        let g = mat(4, 4, &qv);
        let q = &g.transpose().matmul(&g) + &Matrix::identity(4);
        let p = solve_discrete_lyapunov(&f, &q).unwrap();
        prop_assert!(lyapunov_residual(&f, &p, &q) <= 1e-9 * (1.0 + p.max_abs()));
    }

    #[test]
    fn slaved_fast_input_is_exact_on_bt(xv in values(3, 5.0), us in -0.5f64..0.5, yv in values(2, 3.0)) {
        let m = bt_model();
        let s = resample(&m, 20).unwrap();
        let tilde = build_tilde_system(&s, &m.c_ff(), &m.c_ss()).unwrap();
        let uf = tilde.slaved_uf(&xv, &[us], &yv);
        let next = s.step(&xv, &[us, uf[0], uf[1]]);
        prop_assert!(norm_inf(&vec_sub(&next[1..], &yv)) < 1e-9 * (1.0 + norm_inf(&yv)));
        prop_assert!(norm_inf(&vec_sub(&tilde.step(&xv, &[us], &yv), &next)) < 1e-9);
    }

    #[test]
    fn velocity_recovery_inverts_the_step(xv in values(3, 5.0), us in -0.5f64..0.5, yv in values(2, 3.0)) {
        let m = bt_model();
        let s = resample(&m, 20).unwrap();
        let tilde = build_tilde_system(&s, &m.c_ff(), &m.c_ss()).unwrap();
        let v = build_velocity_form(&tilde, &s, &m.c_ff()).unwrap();
        let next = tilde.step(&xv, &[us], &yv);
        let xbar_next = v.lift(&next, &xv);
        let (x, u_s, u_f) = v.recover(&xbar_next, &yv);
        let g_inv = v.gamma.inverse().unwrap();
        prop_assert!(v.gamma.matmul(&g_inv).max_abs_diff(&Matrix::identity(4)) < 1e-10);
        prop_assert!(norm_inf(&vec_sub(&x, &xv)) < 1e-8);
        prop_assert!((u_s[0] - us).abs() < 1e-8);
        prop_assert!(norm_inf(&vec_sub(&u_f, &tilde.slaved_uf(&xv, &[us], &yv))) < 1e-8);
    }

    #[test]
    fn dare_gain_stabilizes_random_pairs(av in values(9, 1.2), bv in values(6, 1.0)) {
        let (a, b) = (mat(3, 3, &av), mat(3, 2, &bv));
        prop_assume!(dualmpc::numerics::rank_with_tolerance(&Matrix::hstack(&[&b, &a.matmul(&b)]), 1e-3) == 3);
        if let Ok((k, p)) = solve_dare_gain(&a, &b, &Matrix::identity(3), &Matrix::identity(2)) {
            let f = &a + &b.matmul(&k);
            prop_assert!(dualmpc::numerics::is_schur_stable(&f).is_schur);
            let res = dualmpc::numerics::dare_residual(&a, &b, &Matrix::identity(3), &Matrix::identity(2), &p).unwrap();
            prop_assert!(res < 1e-9);
        }
    }

    #[test]
    fn qp_box_solution_is_optimal(hv in values(16, 1.0), g in values(4, 3.0), lo in values(4, 1.0), w in prop::collection::vec(0.0f64..2.0, 4)) {
        let r = mat(4, 4, &hv);
        let h = &r.transpose().matmul(&r) + &Matrix::identity(4).scale(0.1);
        let hi: Vec<f64> = lo.iter().zip(&w).map(|(a, b)| a + b).collect();
        let qp = QpProblem::new(h, g, Matrix::zeros(0, 4), vec![], Matrix::identity(4), lo.clone(), hi.clone()).unwrap();
        let sol = solve(&qp, &QpOptions::default()).unwrap();
        prop_assert_eq!(sol.status, QpStatus::Optimal);
        prop_assert!(qp.is_feasible(&sol.x, 1e-9));
        // Projected-gradient fixed point: the optimum is stationary over the box.
        let grad: Vec<f64> = qp.h.mul_vec(&sol.x).iter().zip(&qp.g).map(|(a, b)| a + b).collect();
        for i in 0..4 {
            let stepped = (sol.x[i] - 1e-3 * grad[i]).clamp(lo[i], hi[i]);
            prop_assert!((stepped - sol.x[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn csv_round_trip(ys in values(6, 1e6), alpha in prop::option::of(0.0f64..1.0), flag in any::<bool>()) {
        let rows: Vec<CsvRow> = (0..2).map(|h| CsvRow {
            h: h + 1,
            t_seconds: (h + 1) as f64 * 0.5,
            y: ys[3 * h..3 * h + 3].to_vec(),
            u: ys[..2].to_vec(),
            ubar: ys[2..4].to_vec(),
            du: ys[4..].to_vec(),
            alpha,
            feasible_high: flag,
            feasible_low: !flag,
            stage_cost: ys[0].abs(),
        }).collect();
        let mut buf = Vec::new();
        write_rows(&mut buf, 3, 2, &rows).unwrap();
        prop_assert_eq!(read_trace_csv(buf.as_slice()).unwrap(), rows);
    }
}
