use super::{Matrix, NumericsError};

/// Scaled argument norm bound before the series is applied.
const SCALE_TARGET: f64 = 0.5;
/// Series order; the truncation error at norm 0.5 is far below 1e-16.
const TAYLOR_ORDER: usize = 18;

/// Matrix exponential `exp(A t)` by scaling and squaring over a truncated Taylor series.
pub fn mat_exp(a: &Matrix, t: f64) -> Result<Matrix, NumericsError> {
    if !a.is_square() {
        return Err(NumericsError::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    if !t.is_finite() {
        return Err(NumericsError::NonFinite);
    }
    let at = a.scale(t);
    let norm = at.norm_one();
    let squarings = if norm > SCALE_TARGET {
        (norm / SCALE_TARGET).log2().ceil() as i32
    } else {
        0
    };
    let scaled = at.scale(0.5f64.powi(squarings));
    let n = a.rows();
    let id = Matrix::identity(n);
    // Horner: I + X/1 (I + X/2 (I + ... ))
    let mut acc = id.clone();
    for k in (1..=TAYLOR_ORDER).rev() {
        acc = &id + &scaled.matmul(&acc).scale(1.0 / k as f64);
    }
    for _ in 0..squarings {
        acc = acc.matmul(&acc);
    }
    if !acc.is_finite() {
        return Err(NumericsError::NonFinite);
    }
    Ok(acc)
}

/// Zero-order-hold discretization via the augmented exponential `exp([[Ac, Bc], [0, 0]] dt)`.
pub fn zoh_discretize(ac: &Matrix, bc: &Matrix, dt: f64) -> Result<(Matrix, Matrix), NumericsError> {
    if !ac.is_square() {
        return Err(NumericsError::NotSquare {
            rows: ac.rows(),
            cols: ac.cols(),
        });
    }
    if bc.rows() != ac.rows() {
        return Err(NumericsError::DimensionMismatch(format!(
            "Bc has {} rows, Ac is {}x{}",
            bc.rows(),
            ac.rows(),
            ac.cols()
        )));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(NumericsError::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let (n, m) = (ac.rows(), bc.cols());
    let mut aug = Matrix::zeros(n + m, n + m);
    aug.set_block(0, 0, ac);
    aug.set_block(0, n, bc);
    let e = mat_exp(&aug, dt)?;
    Ok((e.block(0, 0, n, n), e.block(0, n, n, m)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bt_ac() -> Matrix {
        Matrix::from_rows(&[
            vec![0.0, -0.008, 0.0],
            vec![0.0, -0.003, 0.0],
            vec![0.0, 0.092, -0.1],
        ])
        .unwrap()
    }

    fn bt_bc() -> Matrix {
        Matrix::from_rows(&[
            vec![1.66, 0.0, -1.68],
            vec![-0.15, 0.9, -0.43],
            vec![0.0, 0.0, 17.4],
        ])
        .unwrap()
    }

    /// Unscaled Taylor sum continued until terms stop changing the result.
    fn taylor_oracle(a: &Matrix) -> Matrix {
        let mut term = Matrix::identity(a.rows());
        let mut sum = term.clone();
        for k in 1..200 {
            term = term.matmul(a).scale(1.0 / k as f64);
            let next = &sum + &term;
            if next == sum {
                break;
            }
            sum = next;
        }
        sum
    }

    #[test]
    fn zero_and_scalar() {
        assert_eq!(mat_exp(&Matrix::zeros(3, 3), 1.0).unwrap(), Matrix::identity(3));
        let e = mat_exp(&Matrix::from_diag(&[-0.1]), 1.0).unwrap();
        assert!((e[(0, 0)] - (-0.1f64).exp()).abs() < 1e-15);
        assert!((e[(0, 0)] - 0.904837).abs() < 1e-6);
    }

    #[test]
    fn non_square_rejected() {
        assert!(mat_exp(&Matrix::zeros(2, 3), 1.0).is_err());
    }

    #[test]
    fn boiler_turbine_matches_taylor_oracle() {
        let e = mat_exp(&bt_ac(), 1.0).unwrap();
        assert!(e.max_abs_diff(&taylor_oracle(&bt_ac())) < 1e-14);
    }

    #[test]
    fn large_norm_semigroup() {
        let a = Matrix::from_rows(&[vec![-3.0, 7.0], vec![-2.0, -1.5]]).unwrap();
        let full = mat_exp(&a, 2.0).unwrap();
        let half = mat_exp(&a, 1.0).unwrap();
        let rel = full.max_abs_diff(&half.matmul(&half)) / full.max_abs().max(1e-300);
        assert!(rel < 1e-10);
    }

    #[test]
    fn zoh_integrator_and_scalar() {
        let (a, b) = zoh_discretize(&Matrix::zeros(2, 2), &Matrix::identity(2), 1.0).unwrap();
        assert_eq!(a, Matrix::identity(2));
        assert_eq!(b, Matrix::identity(2));
        let (a, b) = zoh_discretize(&Matrix::from_diag(&[-1.0]), &Matrix::from_diag(&[1.0]), 1.0).unwrap();
        let e1 = (-1.0f64).exp();
        assert!((a[(0, 0)] - e1).abs() < 1e-15);
        assert!((b[(0, 0)] - (1.0 - e1)).abs() < 1e-15);
    }

    #[test]
    fn zoh_rejects_bad_inputs() {
        assert!(zoh_discretize(&Matrix::identity(2), &Matrix::zeros(3, 1), 1.0).is_err());
        assert!(zoh_discretize(&Matrix::identity(2), &Matrix::zeros(2, 1), 0.0).is_err());
    }

    /// RK4 on x' = Ac x + Bc u with constant u, starting from x=e_i (for A) or 0 with u=e_j (for B).
    fn rk4_step_response(ac: &Matrix, bc: &Matrix, x0: &[f64], u: &[f64], dt: f64, steps: usize) -> Vec<f64> {
        let f = |x: &[f64]| -> Vec<f64> {
            let ax = ac.mul_vec(x);
            let bu = bc.mul_vec(u);
            ax.iter().zip(&bu).map(|(a, b)| a + b).collect()
        };
        let h = dt / steps as f64;
        let mut x = x0.to_vec();
        for _ in 0..steps {
            let k1 = f(&x);
            let x2: Vec<f64> = x.iter().zip(&k1).map(|(a, k)| a + 0.5 * h * k).collect();
            let k2 = f(&x2);
            let x3: Vec<f64> = x.iter().zip(&k2).map(|(a, k)| a + 0.5 * h * k).collect();
            let k3 = f(&x3);
            let x4: Vec<f64> = x.iter().zip(&k3).map(|(a, k)| a + h * k).collect();
            let k4 = f(&x4);
            for i in 0..x.len() {
                x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        x
    }

    #[test]
    fn boiler_turbine_zoh_matches_rk4() {
        let (ac, bc) = (bt_ac(), bt_bc());
        let (a, b) = zoh_discretize(&ac, &bc, 1.0).unwrap();
        for i in 0..3 {
            let mut e = vec![0.0; 3];
            e[i] = 1.0;
            let xa = rk4_step_response(&ac, &bc, &e, &[0.0; 3], 1.0, 1000);
            let xb = rk4_step_response(&ac, &bc, &[0.0; 3], &e, 1.0, 1000);
            for r in 0..3 {
                assert!((a[(r, i)] - xa[r]).abs() < 1e-9);
                assert!((b[(r, i)] - xb[r]).abs() < 1e-9);
            }
        }
    }
}
