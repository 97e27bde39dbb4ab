//! Scenario documents: JSON ingestion, validation and the resolved run configuration.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::model::{ConstraintSet, DiscreteLtiModel, ModelError, Partition, INF_BOUND};
use crate::mpc_high::IncWeights;
use crate::mpc_low::LowLevelDesign;
use crate::numerics::Matrix;
use crate::sim::PidConfig;
use crate::terminal::TerminalOptions;

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Continuous,
    Discrete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub a: Rows,
    pub b: Rows,
    pub c: Rows,
    /// Basic step in seconds; the ZOH period for continuous models.
    pub dt: f64,
    pub partition: Partition,
}

/// Bounds in plant deviation coordinates. `null` entries are unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSpec {
    pub u_lo: Vec<Option<f64>>,
    pub u_hi: Vec<Option<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_lo: Option<Vec<Option<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_hi: Option<Vec<Option<f64>>>,
    /// Per-basic-step limits on `u(h) - u(h-1)`, used only when `rate_constraints` is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub du_lo: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub du_hi: Option<Vec<f64>>,
    #[serde(default)]
    pub rate_constraints: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleEntry {
    /// Basic step at which the reference takes effect.
    pub h: usize,
    pub y_r: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DmpcSpec {
    /// Basic steps per slow step.
    pub n: usize,
    pub n_h: usize,
    pub q_h: Rows,
    pub r_h: Rows,
}

fn default_alpha_cap() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IncSpec {
    pub n_h: usize,
    pub n_alpha_init: usize,
    #[serde(default = "default_alpha_cap")]
    pub n_alpha_cap: usize,
    pub gamma: f64,
    pub q_bar: Rows,
    pub r_bar: Rows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LowSpec {
    pub q: Rows,
    pub r: Rows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub n_sim: usize,
    pub x0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub model: ModelSpec,
    pub constraints: ConstraintSpec,
    pub schedule: Vec<ScheduleEntry>,
    pub dmpc: DmpcSpec,
    pub inc_dmpc: IncSpec,
    pub low: LowSpec,
    pub pid: PidConfig,
    pub sim: SimSpec,
    #[serde(default)]
    pub terminal: TerminalOptions,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error(transparent)]
    Invalid(#[from] Error),
}

impl From<ModelError> for ScenarioError {
    fn from(e: ModelError) -> Self {
        ScenarioError::Invalid(e.into())
    }
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

/// A validated scenario with the model and weights assembled.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub model: DiscreteLtiModel,
    /// Bounds in force; rate bounds are present only when enabled.
    pub constraints: ConstraintSet,
    /// Reference switches snapped to slow-step boundaries, strictly increasing, first at 0.
    pub schedule: Vec<(usize, Vec<f64>)>,
    pub n: usize,
    pub n_h: usize,
    pub q_h: Matrix,
    pub r_h: Matrix,
    pub inc_n_h: usize,
    pub n_alpha_init: usize,
    pub n_alpha_cap: usize,
    pub inc_weights: IncWeights,
    pub low: LowLevelDesign,
    pub pid: PidConfig,
    pub n_sim: usize,
    pub x0: Vec<f64>,
    pub terminal: TerminalOptions,
}

fn matrix(rows: &Rows, what: &str) -> Result<Matrix, Error> {
    if rows.is_empty() {
        return Ok(Matrix::zeros(0, 0));
    }
    Matrix::from_rows(rows).map_err(|e| Error::Invalid(format!("{what}: {e}")))
}

fn bounds(v: &[Option<f64>], fill: f64) -> Vec<f64> {
    v.iter().map(|b| b.unwrap_or(fill)).collect()
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        Ok(Self::from_file(ScenarioFile::from_json(text)?)?)
    }

    pub fn from_file(file: ScenarioFile) -> Result<Self, Error> {
        let ms = &file.model;
        let (a, b, c) = (matrix(&ms.a, "model.a")?, matrix(&ms.b, "model.b")?, matrix(&ms.c, "model.c")?);
        let model = match ms.kind {
            ModelKind::Continuous => DiscreteLtiModel::from_continuous(&a, &b, c, ms.partition, ms.dt)?,
            ModelKind::Discrete => DiscreteLtiModel::new(a, b, c, ms.partition, ms.dt)?,
        };
        let part = model.partition();
        let (n, m, p) = (part.n(), part.m(), part.p());

        let cs = &file.constraints;
        let mut constraints = ConstraintSet {
            u_lo: bounds(&cs.u_lo, -INF_BOUND),
            u_hi: bounds(&cs.u_hi, INF_BOUND),
            x_lo: cs.x_lo.as_deref().map_or(vec![-INF_BOUND; n], |v| bounds(v, -INF_BOUND)),
            x_hi: cs.x_hi.as_deref().map_or(vec![INF_BOUND; n], |v| bounds(v, INF_BOUND)),
            du_lo: None,
            du_hi: None,
        };
        if cs.rate_constraints {
            if cs.du_lo.is_none() || cs.du_hi.is_none() {
                return Err(Error::Invalid("rate constraints enabled without du_lo/du_hi".into()));
            }
            constraints.du_lo = cs.du_lo.clone();
            constraints.du_hi = cs.du_hi.clone();
        }
        constraints.validate(n, m)?;

        let d = &file.dmpc;
        if d.n == 0 {
            return Err(Error::Invalid("dmpc.n must be at least 1".into()));
        }
        let mut schedule: Vec<(usize, Vec<f64>)> = Vec::new();
        for (i, e) in file.schedule.iter().enumerate() {
            if e.y_r.len() != p {
                return Err(Error::Invalid(format!("schedule[{i}].y_r needs {p} entries")));
            }
            let h = e.h.div_ceil(d.n) * d.n;
            if let Some((last, _)) = schedule.last() {
                if e.h <= file.schedule[i - 1].h || h <= *last {
                    return Err(Error::Invalid("schedule switch times must be strictly increasing slow boundaries".into()));
                }
            }
            schedule.push((h, e.y_r.clone()));
        }
        match schedule.first() {
            Some((0, _)) => {}
            _ => return Err(Error::Invalid("schedule must start at h = 0".into())),
        }

        let inc = &file.inc_dmpc;
        if inc.n_alpha_init == 0 {
            return Err(Error::Invalid("inc_dmpc.n_alpha_init must be at least 1".into()));
        }
        if inc.n_h <= inc.n_alpha_init {
            return Err(Error::Invalid("inc_dmpc.n_h must exceed n_alpha_init".into()));
        }
        let inc_weights = IncWeights {
            q_bar: matrix(&inc.q_bar, "inc_dmpc.q_bar")?,
            r_bar: matrix(&inc.r_bar, "inc_dmpc.r_bar")?,
            gamma: inc.gamma,
        };
        let low = LowLevelDesign::new(matrix(&file.low.q, "low.q")?, matrix(&file.low.r, "low.r")?, d.n)?;
        file.pid.validate(m, p)?;
        if file.sim.x0.len() != n {
            return Err(Error::Invalid(format!("sim.x0 needs {n} entries")));
        }
        Ok(Self {
            model,
            constraints,
            schedule,
            n: d.n,
            n_h: d.n_h,
            q_h: matrix(&d.q_h, "dmpc.q_h")?,
            r_h: matrix(&d.r_h, "dmpc.r_h")?,
            inc_n_h: inc.n_h,
            n_alpha_init: inc.n_alpha_init,
            n_alpha_cap: inc.n_alpha_cap,
            inc_weights,
            low,
            pid: file.pid.clone(),
            n_sim: file.sim.n_sim,
            x0: file.sim.x0.clone(),
            terminal: file.terminal,
            file,
        })
    }

    /// Sets the slow-output weight at both slow levels.
    pub fn with_qs11(mut self, v: f64) -> Result<Self, Error> {
        self.file.dmpc.q_h[0][0] = v;
        self.file.inc_dmpc.q_bar[0][0] = v;
        Self::from_file(self.file)
    }

    pub fn with_rate_constraints(mut self) -> Result<Self, Error> {
        self.file.constraints.rate_constraints = true;
        Self::from_file(self.file)
    }

    /// Reference active at basic step `h`, and the index of its schedule segment.
    pub fn reference_at(&self, h: usize) -> (usize, &[f64]) {
        let idx = self.schedule.iter().rposition(|(s, _)| *s <= h).unwrap_or(0);
        (idx, &self.schedule[idx].1)
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use crate::sim::PidLoop;

    fn diag(v: &[f64]) -> Rows {
        (0..v.len())
            .map(|i| (0..v.len()).map(|j| if i == j { v[i] } else { 0.0 }).collect())
            .collect()
    }

    pub fn bt_file() -> ScenarioFile {
        let u0 = [0.663, 0.505, 0.828];
        ScenarioFile {
            notes: vec![],
            model: ModelSpec {
                kind: ModelKind::Continuous,
                a: vec![vec![0.0, -0.008, 0.0], vec![0.0, -0.003, 0.0], vec![0.0, 0.092, -0.1]],
                b: vec![vec![1.66, 0.0, -1.68], vec![-0.15, 0.9, -0.43], vec![0.0, 0.0, 17.4]],
                c: diag(&[1.0; 3]),
                dt: 1.0,
                partition: crate::model::fixtures::bt_partition(),
            },
            constraints: ConstraintSpec {
                u_lo: u0.iter().map(|v| Some(-v)).collect(),
                u_hi: u0.iter().map(|v| Some(1.0 - v)).collect(),
                x_lo: None,
                x_hi: None,
                du_lo: Some(vec![-0.05, -0.007, -2.0]),
                du_hi: Some(vec![0.05, 0.007, 0.2]),
                rate_constraints: false,
            },
            schedule: vec![
                ScheduleEntry {
                    h: 0,
                    y_r: vec![10.0, 1.0, -2.0],
                },
                ScheduleEntry {
                    h: 400,
                    y_r: vec![5.0, 2.0, 4.0],
                },
            ],
            dmpc: DmpcSpec {
                n: 20,
                n_h: 20,
                q_h: diag(&[1.0; 3]),
                r_h: diag(&[2.0, 20.0, 20.0]),
            },
            inc_dmpc: IncSpec {
                n_h: 20,
                n_alpha_init: 2,
                n_alpha_cap: 50,
                gamma: 1.0,
                q_bar: diag(&[1.0; 4]),
                r_bar: diag(&[2.0]),
            },
            low: LowSpec {
                q: diag(&[1.0; 3]),
                r: diag(&[1.0, 1.0, 10.0]),
            },
            pid: PidConfig {
                loops: vec![
                    PidLoop { input: 0, output: 0, p: 0.019, i: 2e-4, d: -0.07 },
                    PidLoop { input: 1, output: 1, p: 0.24, i: 0.006, d: -1.0 },
                    PidLoop { input: 2, output: 2, p: 0.035, i: 4.6e-4, d: 0.36 },
                ],
                derivative_filter: 5.0,
            },
            sim: SimSpec {
                n_sim: 800,
                x0: vec![0.0; 3],
            },
            terminal: TerminalOptions::default(),
        }
    }

    pub fn equilibrium_file() -> ScenarioFile {
        let mut f = bt_file();
        f.schedule = vec![ScheduleEntry {
            h: 0,
            y_r: vec![0.0; 3],
        }];
        f.sim.n_sim = 100;
        f
    }
}
