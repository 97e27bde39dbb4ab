//! Plant representations and the constructions derived from them: resampling,
//! steady-state targets, the slaved-fast-input ("tilde") system and its
//! velocity form.

mod sampled;
mod velocity;

pub use sampled::{compose_resample_law, resample, resample_matrices, SampledModel};
pub use velocity::{build_tilde_system, build_velocity_form, TildeSystem, VelocityModel};

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::numerics::{
    check_no_unit_invariant_zero, is_schur_stable, steady_state_matrix, zoh_discretize, Matrix, NumericsError,
};

/// Magnitude used for "no bound".
pub const INF_BOUND: f64 = 1e18;

pub fn is_finite_bound(v: f64) -> bool {
    v.abs() < 0.5 * INF_BOUND
}

/// Relative margin used when testing that the spectrum lies in the closed unit disk.
const UNIT_DISK_MARGIN: f64 = 1e-6;

/// Spectrum inside the closed unit disk, up to [`UNIT_DISK_MARGIN`].
pub fn in_closed_unit_disk(a: &Matrix) -> bool {
    is_schur_stable(&a.scale(1.0 / (1.0 + UNIT_DISK_MARGIN))).is_schur
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("assumption {assumption} violated: {detail}")]
    AssumptionFailed { assumption: &'static str, detail: String },
}

/// Sizes of the slow (leading) and fast (trailing) blocks of state, input and output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub n_s: usize,
    pub n_f: usize,
    pub m_s: usize,
    pub m_f: usize,
    pub p_s: usize,
    pub p_f: usize,
}

impl Partition {
    pub fn n(&self) -> usize {
        self.n_s + self.n_f
    }

    pub fn m(&self) -> usize {
        self.m_s + self.m_f
    }

    pub fn p(&self) -> usize {
        self.p_s + self.p_f
    }

    pub fn xs(&self) -> Range<usize> {
        0..self.n_s
    }

    pub fn xf(&self) -> Range<usize> {
        self.n_s..self.n()
    }

    pub fn us(&self) -> Range<usize> {
        0..self.m_s
    }

    pub fn uf(&self) -> Range<usize> {
        self.m_s..self.m()
    }

    pub fn ys(&self) -> Range<usize> {
        0..self.p_s
    }

    pub fn yf(&self) -> Range<usize> {
        self.p_s..self.p()
    }
}

pub(crate) fn sub(m: &Matrix, rows: Range<usize>, cols: Range<usize>) -> Matrix {
    m.block(rows.start, cols.start, rows.len(), cols.len())
}

/// Discrete-time plant `x+ = A x + B u`, `y = C x` with a slow/fast partition.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteLtiModel {
    a: Matrix,
    b: Matrix,
    c: Matrix,
    partition: Partition,
    step_seconds: f64,
}

impl DiscreteLtiModel {
    /// Validates shapes and the standing assumptions: spectrum in the closed unit
    /// disk, no invariant zero at 1, square plant, and block-diagonal `C`.
    pub fn new(a: Matrix, b: Matrix, c: Matrix, partition: Partition, step_seconds: f64) -> Result<Self, ModelError> {
        let model = Self::new_unchecked(a, b, c, partition, step_seconds)?;
        if !in_closed_unit_disk(&model.a) {
            return Err(ModelError::AssumptionFailed {
                assumption: "1(1)",
                detail: "A has eigenvalues outside the closed unit disk".into(),
            });
        }
        if !check_no_unit_invariant_zero(&model.a, &model.b, &model.c)? {
            return Err(ModelError::AssumptionFailed {
                assumption: "1(2)",
                detail: "the plant has an invariant zero at 1".into(),
            });
        }
        Ok(model)
    }

    /// Shape checks only.
    pub fn new_unchecked(
        a: Matrix,
        b: Matrix,
        c: Matrix,
        partition: Partition,
        step_seconds: f64,
    ) -> Result<Self, ModelError> {
        let (n, m, p) = (partition.n(), partition.m(), partition.p());
        if (a.rows(), a.cols()) != (n, n) || (b.rows(), b.cols()) != (n, m) || (c.rows(), c.cols()) != (p, n) {
            return Err(ModelError::Invalid(format!(
                "expected A {n}x{n}, B {n}x{m}, C {p}x{n}; got A {}x{}, B {}x{}, C {}x{}",
                a.rows(),
                a.cols(),
                b.rows(),
                b.cols(),
                c.rows(),
                c.cols()
            )));
        }
        if m != p || partition.m_s != partition.p_s {
            return Err(ModelError::Invalid(format!(
                "need m = p and m_s = p_s, got m={m}, p={p}, m_s={}, p_s={}",
                partition.m_s, partition.p_s
            )));
        }
        if !(step_seconds > 0.0 && step_seconds.is_finite()) {
            return Err(ModelError::Invalid(format!("step must be positive, got {step_seconds}")));
        }
        let off = sub(&c, partition.ys(), partition.xf()).max_abs() + sub(&c, partition.yf(), partition.xs()).max_abs();
        if off != 0.0 {
            return Err(ModelError::Invalid("C must be block diagonal in the slow/fast partition".into()));
        }
        Ok(Self {
            a,
            b,
            c,
            partition,
            step_seconds,
        })
    }

    /// Zero-order-hold discretization of `(Ac, Bc)` with step `dt`, then [`Self::new`].
    pub fn from_continuous(ac: &Matrix, bc: &Matrix, c: Matrix, partition: Partition, dt: f64) -> Result<Self, ModelError> {
        let (a, b) = zoh_discretize(ac, bc, dt)?;
        Self::new(a, b, c, partition, dt)
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn c(&self) -> &Matrix {
        &self.c
    }

    pub fn partition(&self) -> Partition {
        self.partition
    }

    pub fn step_seconds(&self) -> f64 {
        self.step_seconds
    }

    pub fn step(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let ax = self.a.mul_vec(x);
        let bu = self.b.mul_vec(u);
        ax.iter().zip(&bu).map(|(p, q)| p + q).collect()
    }

    pub fn output(&self, x: &[f64]) -> Vec<f64> {
        self.c.mul_vec(x)
    }

    pub fn c_ff(&self) -> Matrix {
        sub(&self.c, self.partition.yf(), self.partition.xf())
    }

    pub fn c_ss(&self) -> Matrix {
        sub(&self.c, self.partition.ys(), self.partition.xs())
    }
}

/// Steady-state pair for an output reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Targets {
    pub y_r: Vec<f64>,
    pub x_r: Vec<f64>,
    pub u_r: Vec<f64>,
}

/// Solves `x_r = A x_r + B u_r`, `y_r = C x_r`.
pub fn steady_state_targets(model: &DiscreteLtiModel, y_r: &[f64]) -> Result<Targets, ModelError> {
    let (n, p) = (model.partition.n(), model.partition.p());
    if y_r.len() != p {
        return Err(ModelError::Invalid(format!("reference has {} entries, expected {p}", y_r.len())));
    }
    let phi = steady_state_matrix(&model.a, &model.b, &model.c);
    let mut rhs = vec![0.0; n];
    rhs.extend_from_slice(y_r);
    let sol = phi.solve(&Matrix::column(&rhs)).map_err(|e| match e {
        NumericsError::Singular => ModelError::AssumptionFailed {
            assumption: "1(2)",
            detail: "steady-state matrix is singular".into(),
        },
        other => other.into(),
    })?;
    let v = sol.col(0);
    Ok(Targets {
        y_r: y_r.to_vec(),
        x_r: v[..n].to_vec(),
        u_r: v[n..].to_vec(),
    })
}

/// Box bounds on inputs and states, with optional per-step input rate bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub u_lo: Vec<f64>,
    pub u_hi: Vec<f64>,
    pub x_lo: Vec<f64>,
    pub x_hi: Vec<f64>,
    pub du_lo: Option<Vec<f64>>,
    pub du_hi: Option<Vec<f64>>,
}

impl ConstraintSet {
    pub fn unbounded(n: usize, m: usize) -> Self {
        Self {
            u_lo: vec![-INF_BOUND; m],
            u_hi: vec![INF_BOUND; m],
            x_lo: vec![-INF_BOUND; n],
            x_hi: vec![INF_BOUND; n],
            du_lo: None,
            du_hi: None,
        }
    }

    pub fn validate(&self, n: usize, m: usize) -> Result<(), ModelError> {
        let pair = |lo: &[f64], hi: &[f64], len: usize, what: &str| -> Result<(), ModelError> {
            if lo.len() != len || hi.len() != len {
                return Err(ModelError::Invalid(format!("{what} bounds need {len} entries")));
            }
            if lo.iter().chain(hi).any(|v| v.is_nan()) {
                return Err(ModelError::Invalid(format!("{what} bounds contain NaN")));
            }
            if let Some(i) = (0..len).find(|&i| lo[i] > hi[i]) {
                return Err(ModelError::Invalid(format!("{what} bound {i}: lo {} > hi {}", lo[i], hi[i])));
            }
            Ok(())
        };
        pair(&self.u_lo, &self.u_hi, m, "input")?;
        pair(&self.x_lo, &self.x_hi, n, "state")?;
        match (&self.du_lo, &self.du_hi) {
            (Some(lo), Some(hi)) => pair(lo, hi, m, "rate"),
            (None, None) => Ok(()),
            _ => Err(ModelError::Invalid("rate bounds need both lo and hi".into())),
        }
    }

    pub fn has_rates(&self) -> bool {
        self.du_lo.is_some()
    }

    /// Copy with the rate bounds removed.
    pub fn without_rates(&self) -> Self {
        Self {
            du_lo: None,
            du_hi: None,
            ..self.clone()
        }
    }

    /// Checks the target pair lies strictly inside every finite bound.
    pub fn check_interior(&self, targets: &Targets) -> Result<(), ModelError> {
        let inside = |v: &[f64], lo: &[f64], hi: &[f64]| {
            v.iter()
                .zip(lo.iter().zip(hi))
                .all(|(&x, (&l, &h))| (!is_finite_bound(l) || x > l) && (!is_finite_bound(h) || x < h))
        };
        if !inside(&targets.u_r, &self.u_lo, &self.u_hi) {
            return Err(ModelError::Invalid(format!(
                "steady-state input {:?} is not strictly inside the input bounds",
                targets.u_r
            )));
        }
        if !inside(&targets.x_r, &self.x_lo, &self.x_hi) {
            return Err(ModelError::Invalid(format!(
                "steady-state state {:?} is not strictly inside the state bounds",
                targets.x_r
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn bt_partition() -> Partition {
        Partition {
            n_s: 1,
            n_f: 2,
            m_s: 1,
            m_f: 2,
            p_s: 1,
            p_f: 2,
        }
    }

    pub fn bt_model() -> DiscreteLtiModel {
        let ac = Matrix::from_rows(&[
            vec![0.0, -0.008, 0.0],
            vec![0.0, -0.003, 0.0],
            vec![0.0, 0.092, -0.1],
        ])
        .unwrap();
        let bc = Matrix::from_rows(&[
            vec![1.66, 0.0, -1.68],
            vec![-0.15, 0.9, -0.43],
            vec![0.0, 0.0, 17.4],
        ])
        .unwrap();
        DiscreteLtiModel::from_continuous(&ac, &bc, Matrix::identity(3), bt_partition(), 1.0).unwrap()
    }

    pub fn scalar_partition() -> Partition {
        Partition {
            n_s: 1,
            n_f: 0,
            m_s: 1,
            m_f: 0,
            p_s: 1,
            p_f: 0,
        }
    }
}
