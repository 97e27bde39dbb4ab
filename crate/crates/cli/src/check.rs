//! Standing-assumption and design checks for a scenario file.

use dualmpc::model::{
    build_tilde_system, build_velocity_form, in_closed_unit_disk, resample, steady_state_targets, DiscreteLtiModel,
};
use dualmpc::mpc_high::{design_high, design_inc_high};
use dualmpc::numerics::{check_no_unit_invariant_zero, check_pbh_stabilizable_velocity, solve_dare_gain, zoh_discretize, Matrix};
use dualmpc::scenario::{ModelKind, Scenario, ScenarioFile};

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Pass,
    Fail,
    Skip,
}

#[derive(Debug, Clone)]
pub struct CheckItem {
    pub name: String,
    pub outcome: Outcome,
    pub detail: String,
}

impl CheckItem {
    fn new(name: &str, ok: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            outcome: if ok { Outcome::Pass } else { Outcome::Fail },
            detail: detail.into(),
        }
    }

    fn skip(name: &str) -> Self {
        Self {
            name: name.to_string(),
            outcome: Outcome::Skip,
            detail: "an earlier check failed".into(),
        }
    }

    pub fn line(&self) -> String {
        let tag = match self.outcome {
            Outcome::Pass => "PASS",
            Outcome::Fail => "FAIL",
            Outcome::Skip => "SKIP",
        };
        format!("{tag} {}: {}", self.name, self.detail)
    }
}

pub fn all_passed(items: &[CheckItem]) -> bool {
    items.iter().all(|i| i.outcome == Outcome::Pass)
}

fn matrices(file: &ScenarioFile) -> Result<(Matrix, Matrix, Matrix), String> {
    let m = |rows: &Vec<Vec<f64>>| Matrix::from_rows(rows).map_err(|e| e.to_string());
    let (a, b, c) = (m(&file.model.a)?, m(&file.model.b)?, m(&file.model.c)?);
    match file.model.kind {
        ModelKind::Continuous => {
            let (ad, bd) = zoh_discretize(&a, &b, file.model.dt).map_err(|e| e.to_string())?;
            Ok((ad, bd, c))
        }
        ModelKind::Discrete => Ok((a, b, c)),
    }
}

/// Runs every check it can; items depending on a failed one are skipped.
pub fn run_checks(file: &ScenarioFile) -> Vec<CheckItem> {
    let mut items = Vec::new();
    let model = match matrices(file).and_then(|(a, b, c)| {
        DiscreteLtiModel::new_unchecked(a, b, c, file.model.partition, file.model.dt).map_err(|e| e.to_string())
    }) {
        Ok(m) => {
            items.push(CheckItem::new("model structure", true, "shapes, m = p, m_s = p_s, block-diagonal C"));
            m
        }
        Err(e) => {
            items.push(CheckItem::new("model structure", false, e));
            return items;
        }
    };
    let stable = in_closed_unit_disk(model.a());
    items.push(CheckItem::new("assumption 1(1)", stable, "spectrum of A in the closed unit disk"));
    let no_zero = check_no_unit_invariant_zero(model.a(), model.b(), model.c()).unwrap_or(false);
    items.push(CheckItem::new("assumption 1(2)", no_zero, "no invariant zero at 1"));

    let n = file.dmpc.n;
    let sampled = match resample(&model, n) {
        Ok(s) => {
            items.push(CheckItem::new("assumption 2", true, format!("sampled pair stabilizable for N = {n}")));
            Some(s)
        }
        Err(e) => {
            items.push(CheckItem::new("assumption 2", false, e.to_string()));
            None
        }
    };
    let Some(sampled) = sampled else {
        for name in ["proposition 1", "assumption 3", "assumption 4", "proposition 2", "designs"] {
            items.push(CheckItem::skip(name));
        }
        return items;
    };
    let p = model.partition().p();
    let detectable = solve_dare_gain(&sampled.an.transpose(), &model.c().transpose(), &Matrix::identity(model.a().rows()), &Matrix::identity(p)).is_ok();
    items.push(CheckItem::new("proposition 1", detectable, "sampled pair (A^N, C) detectable"));

    let tilde = match build_tilde_system(&sampled, &model.c_ff(), &model.c_ss()) {
        Ok(t) => {
            items.push(CheckItem::new("assumption 3", true, "C_ff B_ff^N full rank"));
            Some(t)
        }
        Err(e) => {
            items.push(CheckItem::new("assumption 3", false, e.to_string()));
            None
        }
    };
    let Some(tilde) = tilde else {
        for name in ["assumption 4", "proposition 2", "designs"] {
            items.push(CheckItem::skip(name));
        }
        return items;
    };
    items.push(CheckItem::new(
        "assumption 4",
        in_closed_unit_disk(&tilde.a),
        "slaved transition matrix in the closed unit disk",
    ));
    items.push(CheckItem::new(
        "proposition 2",
        check_pbh_stabilizable_velocity(&tilde.a, &tilde.b_s, &tilde.c_s),
        "velocity-form pair stabilizable",
    ));
    if !all_passed(&items) {
        items.push(CheckItem::skip("designs"));
        return items;
    }

    let sc = match Scenario::from_file(file.clone()) {
        Ok(sc) => sc,
        Err(e) => {
            items.push(CheckItem::new("scenario", false, e.to_string()));
            return items;
        }
    };
    let velocity = match build_velocity_form(&tilde, &sampled, &model.c_ff()) {
        Ok(v) => v,
        Err(e) => {
            items.push(CheckItem::new("velocity form", false, e.to_string()));
            return items;
        }
    };
    for (h, y_r) in &sc.schedule {
        let targets = match steady_state_targets(&sc.model, y_r) {
            Ok(t) => t,
            Err(e) => {
                items.push(CheckItem::new(&format!("targets at h = {h}"), false, e.to_string()));
                continue;
            }
        };
        let high = design_high(&sc.model, &sampled, &sc.constraints, &targets, sc.n_h, &sc.q_h, &sc.r_h, sc.terminal);
        items.push(match high {
            Ok(d) => CheckItem::new(
                &format!("dmpc design at h = {h}"),
                true,
                format!("terminal radius {:.6e}, {} facets", d.terminal.radius, d.terminal.facets.len()),
            ),
            Err(e) => CheckItem::new(&format!("dmpc design at h = {h}"), false, e.to_string()),
        });
        let inc = design_inc_high(
            &sc.model,
            &sampled,
            &velocity,
            &sc.constraints,
            &targets,
            &sc.inc_weights,
            sc.inc_n_h,
            sc.terminal,
        );
        items.push(match inc {
            Ok(d) => CheckItem::new(
                &format!("inc-dmpc design at h = {h}"),
                true,
                format!("terminal radius {:.6e}, {} facets", d.terminal.radius, d.terminal.facets.len()),
            ),
            Err(e) => CheckItem::new(&format!("inc-dmpc design at h = {h}"), false, e.to_string()),
        });
    }
    items
}
