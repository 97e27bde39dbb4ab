use super::{in_closed_unit_disk, sub, ModelError, Partition, SampledModel};
use crate::numerics::{check_pbh_stabilizable_velocity, is_schur_stable, Matrix, NumericsError};

/// The sampled plant with the fast input slaved so that the fast output hits a
/// reference one slow step ahead: `x+ = Ã x + B̃s u_s + B̃f ỹ_f`.
#[derive(Debug, Clone, PartialEq)]
pub struct TildeSystem {
    pub a: Matrix,
    pub b_s: Matrix,
    pub b_f: Matrix,
    /// `[C_ss 0]`.
    pub c_s: Matrix,
    /// `(C_ff B_ff^N)^-1`.
    pub cff_bff_inv: Matrix,
    /// Slaved fast input is `uf_x x + uf_us u_s + cff_bff_inv ỹ_f`.
    pub uf_x: Matrix,
    pub uf_us: Matrix,
    pub partition: Partition,
}

impl TildeSystem {
    pub fn a_ss(&self) -> Matrix {
        sub(&self.a, self.partition.xs(), self.partition.xs())
    }

    pub fn a_sf(&self) -> Matrix {
        sub(&self.a, self.partition.xs(), self.partition.xf())
    }

    pub fn a_fs(&self) -> Matrix {
        sub(&self.a, self.partition.xf(), self.partition.xs())
    }

    pub fn a_ff(&self) -> Matrix {
        sub(&self.a, self.partition.xf(), self.partition.xf())
    }

    pub fn b_ss(&self) -> Matrix {
        sub(&self.b_s, self.partition.xs(), 0..self.partition.m_s)
    }

    pub fn b_fs(&self) -> Matrix {
        sub(&self.b_s, self.partition.xf(), 0..self.partition.m_s)
    }

    pub fn b_sf(&self) -> Matrix {
        sub(&self.b_f, self.partition.xs(), 0..self.partition.p_f)
    }

    pub fn b_ff(&self) -> Matrix {
        sub(&self.b_f, self.partition.xf(), 0..self.partition.p_f)
    }

    /// Fast input that places the next fast output at `yf_ref`.
    pub fn slaved_uf(&self, x: &[f64], u_s: &[f64], yf_ref: &[f64]) -> Vec<f64> {
        let a = self.uf_x.mul_vec(x);
        let b = self.uf_us.mul_vec(u_s);
        let c = self.cff_bff_inv.mul_vec(yf_ref);
        (0..a.len()).map(|i| a[i] + b[i] + c[i]).collect()
    }

    pub fn step(&self, x: &[f64], u_s: &[f64], yf_ref: &[f64]) -> Vec<f64> {
        let a = self.a.mul_vec(x);
        let b = self.b_s.mul_vec(u_s);
        let c = self.b_f.mul_vec(yf_ref);
        (0..a.len()).map(|i| a[i] + b[i] + c[i]).collect()
    }
}

/// Builds the slaved-fast-input system. Fails if `C_ff B_ff^N` is singular.
pub fn build_tilde_system(sampled: &SampledModel, c_ff: &Matrix, c_ss: &Matrix) -> Result<TildeSystem, ModelError> {
    let part = sampled.partition;
    let cb = c_ff.matmul(&sampled.b_ff());
    if !cb.is_square() {
        return Err(ModelError::Invalid(format!(
            "C_ff B_ff^N is {}x{}, must be square",
            cb.rows(),
            cb.cols()
        )));
    }
    let m_inv = cb.inverse().map_err(|e| match e {
        NumericsError::Singular => ModelError::AssumptionFailed {
            assumption: "3",
            detail: "C_ff B_ff^N is singular".into(),
        },
        other => other.into(),
    })?;
    let n = part.n();
    let an_f = sub(&sampled.an, part.xf(), 0..n);
    let bn_uf = sub(&sampled.bn, 0..n, part.uf());
    let bn_us = sub(&sampled.bn, 0..n, part.us());
    let uf_x = m_inv.matmul(c_ff).matmul(&an_f).scale(-1.0);
    let uf_us = m_inv.matmul(c_ff).matmul(&sampled.b_fs()).scale(-1.0);
    let a = &sampled.an + &bn_uf.matmul(&uf_x);
    let b_s = &bn_us + &bn_uf.matmul(&uf_us);
    let b_f = bn_uf.matmul(&m_inv);
    let mut c_s = Matrix::zeros(part.p_s, n);
    c_s.set_block(0, 0, c_ss);
    Ok(TildeSystem {
        a,
        b_s,
        b_f,
        c_s,
        cff_bff_inv: m_inv,
        uf_x,
        uf_us,
        partition: part,
    })
}

/// Velocity form over `x̄ = (y_s, Δx)` with inputs `Δu_s` and the fast-reference
/// increment, plus the maps recovering `(x, u_s, u_f)` from `x̄(k+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityModel {
    pub a_bar: Matrix,
    pub bs_bar: Matrix,
    pub bf_bar: Matrix,
    pub c_bar: Matrix,
    pub tilde: TildeSystem,
    /// Inverse of `[[C̃ Ã, C̃ B̃s], [Ã - I, B̃s]]`.
    pub gamma: Matrix,
    /// `[I_n 0] Γ`; its first `n_s` rows are the slow-state map.
    pub gamma_x: Matrix,
    pub gamma_us: Matrix,
    /// `M C_ff [A_fs A_ff B_fs] Γ`, so that `u_f = M ỹ_f - Γ_uf (x̄(k+1) - B̄f ỹ_f)`.
    pub gamma_uf: Matrix,
    pub cff_bff_inv: Matrix,
    /// Whether `Ã` is strictly Schur. Construction only requires the closed unit
    /// disk; plants with a pure integrator in the slow block keep an eigenvalue at 1.
    pub tilde_schur: bool,
}

impl VelocityModel {
    pub fn dim(&self) -> usize {
        self.a_bar.rows()
    }

    pub fn ps(&self) -> usize {
        self.c_bar.rows()
    }

    /// `x̄+ = Ā x̄ + B̄s Δu_s + B̄f Δỹ_f`.
    pub fn step(&self, xbar: &[f64], du_s: &[f64], dyf: &[f64]) -> Vec<f64> {
        let a = self.a_bar.mul_vec(xbar);
        let b = self.bs_bar.mul_vec(du_s);
        let c = self.bf_bar.mul_vec(dyf);
        (0..a.len()).map(|i| a[i] + b[i] + c[i]).collect()
    }

    /// `(x(k), u_s(k), u_f(k))` from `x̄(k+1)` and the fast reference `ỹ_f(k)` used at step k.
    pub fn recover(&self, xbar_next: &[f64], yf_ref: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let bf = self.bf_bar.mul_vec(yf_ref);
        let z: Vec<f64> = xbar_next.iter().zip(&bf).map(|(a, b)| a - b).collect();
        let x = self.gamma_x.mul_vec(&z);
        let us = self.gamma_us.mul_vec(&z);
        let uf = self.tilde.slaved_uf(&x, &us, yf_ref);
        (x, us, uf)
    }

    /// Velocity state `(C̃ x, x - x_prev)`.
    pub fn lift(&self, x: &[f64], x_prev: &[f64]) -> Vec<f64> {
        let mut v = self.tilde.c_s.mul_vec(x);
        v.extend(x.iter().zip(x_prev).map(|(a, b)| a - b));
        v
    }
}

/// Builds the velocity form and certifies stabilizability of `(Ā, B̄s)`.
pub fn build_velocity_form(tilde: &TildeSystem, sampled: &SampledModel, c_ff: &Matrix) -> Result<VelocityModel, ModelError> {
    let part = tilde.partition;
    let (n, ps, ms) = (part.n(), part.p_s, part.m_s);
    let cs = &tilde.c_s;
    let ca = cs.matmul(&tilde.a);
    let mut a_bar = Matrix::zeros(ps + n, ps + n);
    a_bar.set_block(0, 0, &Matrix::identity(ps));
    a_bar.set_block(0, ps, &ca);
    a_bar.set_block(ps, ps, &tilde.a);
    let bs_bar = Matrix::vstack(&[&cs.matmul(&tilde.b_s), &tilde.b_s]);
    let bf_bar = Matrix::vstack(&[&cs.matmul(&tilde.b_f), &tilde.b_f]);
    let mut c_bar = Matrix::zeros(ps, ps + n);
    c_bar.set_block(0, 0, &Matrix::identity(ps));

    let mut blk = Matrix::zeros(ps + n, n + ms);
    blk.set_block(0, 0, &ca);
    blk.set_block(0, n, &cs.matmul(&tilde.b_s));
    blk.set_block(ps, 0, &(&tilde.a - &Matrix::identity(n)));
    blk.set_block(ps, n, &tilde.b_s);
    if !blk.is_square() {
        return Err(ModelError::Invalid("velocity recovery block must be square (m_s = p_s)".into()));
    }
    let gamma = blk.inverse().map_err(|e| match e {
        NumericsError::Singular => ModelError::AssumptionFailed {
            assumption: "Proposition 2",
            detail: "the velocity recovery block matrix is singular".into(),
        },
        other => other.into(),
    })?;
    let resid = gamma.matmul(&blk).max_abs_diff(&Matrix::identity(n + ms));
    if resid > 1e-10 * (1.0 + gamma.max_abs() * blk.max_abs()) {
        return Err(ModelError::Invalid(format!("recovery inverse residual {resid:e} too large")));
    }
    if !in_closed_unit_disk(&tilde.a) {
        return Err(ModelError::AssumptionFailed {
            assumption: "4",
            detail: "the slaved transition matrix has eigenvalues outside the closed unit disk".into(),
        });
    }
    if !check_pbh_stabilizable_velocity(&tilde.a, &tilde.b_s, cs) {
        return Err(ModelError::AssumptionFailed {
            assumption: "Proposition 2",
            detail: "the velocity-form pair fails the rank test".into(),
        });
    }
    let gamma_x = gamma.block(0, 0, n, ps + n);
    let gamma_us = gamma.block(n, 0, ms, ps + n);
    let mut fs = Matrix::zeros(part.n_f, n + ms);
    fs.set_block(0, 0, &sub(&sampled.an, part.xf(), 0..n));
    fs.set_block(0, n, &sampled.b_fs());
    let gamma_uf = tilde.cff_bff_inv.matmul(c_ff).matmul(&fs).matmul(&gamma);
    Ok(VelocityModel {
        a_bar,
        bs_bar,
        bf_bar,
        c_bar,
        tilde: tilde.clone(),
        gamma,
        gamma_x,
        gamma_us,
        gamma_uf,
        cff_bff_inv: tilde.cff_bff_inv.clone(),
        tilde_schur: is_schur_stable(&tilde.a).is_schur,
    })
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::super::{resample, DiscreteLtiModel};
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bt_velocity() -> (DiscreteLtiModel, SampledModel, VelocityModel) {
        let m = bt_model();
        let s = resample(&m, 20).unwrap();
        let t = build_tilde_system(&s, &m.c_ff(), &m.c_ss()).unwrap();
        let v = build_velocity_form(&t, &s, &m.c_ff()).unwrap();
        (m, s, v)
    }

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    /// Applies the slaved input by substituting into the sampled model directly.
    fn close_directly(s: &SampledModel, c_ff: &Matrix, x: &[f64], us: &[f64], yf: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let part = s.partition;
        let free = s.step(x, &[us.to_vec(), vec![0.0; part.m_f]].concat());
        let yf_free = c_ff.mul_vec(&free[part.xf()]);
        let cb = c_ff.matmul(&s.b_ff());
        let rhs = Matrix::column(&yf.iter().zip(&yf_free).map(|(a, b)| a - b).collect::<Vec<_>>());
        let uf = cb.solve(&rhs).unwrap().col(0);
        let u = [us.to_vec(), uf.clone()].concat();
        (s.step(x, &u), uf)
    }

    #[test]
    fn bt_tilde_closure() {
        let (m, s, v) = bt_velocity();
        let t = &v.tilde;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let x = rand_vec(&mut rng, 3);
            let us = rand_vec(&mut rng, 1);
            let yf = rand_vec(&mut rng, 2);
            let (direct, uf) = close_directly(&s, &m.c_ff(), &x, &us, &yf);
            let via = t.step(&x, &us, &yf);
            for i in 0..3 {
                assert!((direct[i] - via[i]).abs() < 1e-9);
            }
            let slaved = t.slaved_uf(&x, &us, &yf);
            for i in 0..2 {
                assert!((uf[i] - slaved[i]).abs() < 1e-9);
                assert!((direct[1 + i] - yf[i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn decoupled_tilde_keeps_slow_block() {
        let part = Partition {
            n_s: 1,
            n_f: 1,
            m_s: 1,
            m_f: 1,
            p_s: 1,
            p_f: 1,
        };
        let s = SampledModel {
            an: Matrix::from_diag(&[0.9, 0.5]),
            bn: Matrix::from_diag(&[0.3, 2.0]),
            n_period: 1,
            partition: part,
        };
        let one = Matrix::from_diag(&[1.0]);
        let t = build_tilde_system(&s, &one, &one).unwrap();
        assert_eq!(t.a_fs().max_abs(), 0.0);
        assert_eq!(t.b_ss(), s.b_ss());
        assert_eq!(t.a_ss(), s.a_ss());
    }

    #[test]
    fn random_two_block_closure() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let part = Partition {
            n_s: 2,
            n_f: 2,
            m_s: 1,
            m_f: 2,
            p_s: 1,
            p_f: 2,
        };
        let an = Matrix::from_row_major(4, 4, rand_vec(&mut rng, 16)).unwrap().scale(0.4);
        let bn = Matrix::from_row_major(4, 3, rand_vec(&mut rng, 12)).unwrap();
        let s = SampledModel {
            an,
            bn,
            n_period: 1,
            partition: part,
        };
        let c_ff = Matrix::identity(2);
        let c_ss = Matrix::from_rows(&[vec![1.0, 0.5]]).unwrap();
        let t = build_tilde_system(&s, &c_ff, &c_ss).unwrap();
        for _ in 0..20 {
            let x = rand_vec(&mut rng, 4);
            let us = rand_vec(&mut rng, 1);
            let yf = rand_vec(&mut rng, 2);
            let (direct, _) = close_directly(&s, &c_ff, &x, &us, &yf);
            let via = t.step(&x, &us, &yf);
            assert!(direct.iter().zip(&via).all(|(a, b)| (a - b).abs() < 1e-9));
        }
    }

    #[test]
    fn singular_fast_gain_rejected() {
        let part = Partition {
            n_s: 1,
            n_f: 1,
            m_s: 1,
            m_f: 1,
            p_s: 1,
            p_f: 1,
        };
        let s = SampledModel {
            an: Matrix::from_diag(&[0.9, 0.5]),
            bn: Matrix::from_diag(&[0.3, 0.0]),
            n_period: 1,
            partition: part,
        };
        let one = Matrix::from_diag(&[1.0]);
        assert!(matches!(
            build_tilde_system(&s, &one, &one),
            Err(ModelError::AssumptionFailed { assumption: "3", .. })
        ));
    }

    #[test]
    fn unstable_slaved_system_rejected() {
        let part = Partition {
            n_s: 1,
            n_f: 1,
            m_s: 1,
            m_f: 1,
            p_s: 1,
            p_f: 1,
        };
        let s = SampledModel {
            an: Matrix::from_diag(&[1.1, 0.5]),
            bn: Matrix::from_diag(&[0.3, 2.0]),
            n_period: 1,
            partition: part,
        };
        let one = Matrix::from_diag(&[1.0]);
        let t = build_tilde_system(&s, &one, &one).unwrap();
        assert!(matches!(
            build_velocity_form(&t, &s, &one),
            Err(ModelError::AssumptionFailed { assumption: "4", .. })
        ));
    }

    #[test]
    fn velocity_structure_and_gamma() {
        let (_, _, v) = bt_velocity();
        assert_eq!(v.c_bar.row(0), vec![1.0, 0.0, 0.0, 0.0]);
        let xbar = [3.0, -1.0, 2.0, 0.5];
        assert_eq!(v.c_bar.mul_vec(&xbar), vec![3.0]);
        assert_eq!(v.dim(), 4);
        // The slow block of the boiler-turbine plant integrates, so the slaved
        // system keeps a unit eigenvalue.
        assert!(!v.tilde_schur);
    }

    #[test]
    fn velocity_parallel_simulation() {
        let (_, s, v) = bt_velocity();
        let t = &v.tilde;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let y_f0 = [0.3, -0.2];
        let w = [1.0 - y_f0[0], -2.0 - y_f0[1]];
        let x_prev = rand_vec(&mut rng, 3);
        let mut us_prev = rand_vec(&mut rng, 1);
        let mut alpha_prev = 0.0;
        let yf_of = |a: f64| [y_f0[0] + a * w[0], y_f0[1] + a * w[1]];
        let mut x = t.step(&x_prev, &us_prev, &yf_of(alpha_prev));
        let mut xbar = v.lift(&x, &x_prev);
        for k in 0..50 {
            let dus = rng.gen_range(-0.05..0.05);
            let alpha = if k < 3 { alpha_prev + 0.3 } else { 1.0 };
            let dalpha: f64 = alpha - alpha_prev;
            let us = [us_prev[0] + dus];
            let yf = yf_of(alpha);
            let x_next = t.step(&x, &us, &yf);
            let xbar_next = v.step(&xbar, &[dus], &[dalpha * w[0], dalpha * w[1]]);
            let ys_direct = t.c_s.mul_vec(&x_next)[0];
            assert!((ys_direct - xbar_next[0]).abs() < 1e-8 * (1.0 + ys_direct.abs()), "k={k}");
            // Recovery of the quantities applied at step k.
            let (xr, usr, ufr) = v.recover(&xbar_next, &yf);
            let uf_direct = t.slaved_uf(&x, &us, &yf);
            assert!(xr.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-7));
            assert!((usr[0] - us[0]).abs() < 1e-8);
            assert!(ufr.iter().zip(&uf_direct).all(|(a, b)| (a - b).abs() < 1e-7));
            // And the full sampled model with that input reproduces the slaved step.
            let xs = s.step(&x, &[us.to_vec(), uf_direct].concat());
            assert!(xs.iter().zip(&x_next).all(|(a, b)| (a - b).abs() < 1e-8));
            x = x_next;
            xbar = xbar_next;
            us_prev = us.to_vec();
            alpha_prev = alpha;
        }
    }
}
