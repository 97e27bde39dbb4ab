use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dualmpc::qp::QpOptions;
use dualmpc::scenario::{Scenario, ScenarioError, ScenarioFile};
use dualmpc::sim::{assert_theorem_properties, run, Algorithm, SimOptions, TheoremThresholds};

mod check;
mod output;

#[derive(Parser)]
#[command(name = "dualmpc", version, about = "Dual-level MPC scenario checks and simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Algo {
    Dmpc,
    IncDmpc,
    Pid,
}

impl From<Algo> for Algorithm {
    fn from(a: Algo) -> Self {
        match a {
            Algo::Dmpc => Algorithm::Dmpc,
            Algo::IncDmpc => Algorithm::IncDmpc,
            Algo::Pid => Algorithm::Pid,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Verify the standing assumptions and build every controller design.
    Check { file: PathBuf },
    /// Simulate one algorithm and write trace.csv, metrics.txt and theorem_report.txt.
    Run {
        file: PathBuf,
        #[arg(long, value_enum)]
        algo: Algo,
        #[arg(long)]
        out: PathBuf,
        /// Enforce the per-step input rate limits listed in the scenario.
        #[arg(long)]
        rate_constraints: bool,
        /// Override the slow-output weight at both slow levels.
        #[arg(long)]
        qs11: Option<f64>,
    },
    /// Run all three algorithms and write a metrics table plus plot data.
    Compare {
        file: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Assumption(String),
    Parse(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Assumption(_) => 1,
            Failure::Parse(_) => 2,
            Failure::Io(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Assumption(m) | Failure::Parse(m) | Failure::Io(m) => m,
        }
    }
}

impl From<dualmpc::Error> for Failure {
    fn from(e: dualmpc::Error) -> Self {
        if e.is_infeasibility() {
            Failure::Assumption(e.to_string())
        } else {
            match e {
                dualmpc::Error::Invalid(_) | dualmpc::Error::Model(dualmpc::model::ModelError::Invalid(_)) => {
                    Failure::Parse(e.to_string())
                }
                other => Failure::Assumption(other.to_string()),
            }
        }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Parse { .. } => Failure::Parse(e.to_string()),
            ScenarioError::Invalid(inner) => inner.into(),
        }
    }
}

fn read_file(path: &Path) -> Result<ScenarioFile, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    ScenarioFile::from_json(&text).map_err(|e| Failure::Parse(format!("{}: {e}", path.display())))
}

fn qp_options() -> Result<QpOptions, Failure> {
    match std::env::var("DUALMPC_QP_TOL") {
        Ok(v) => match v.parse::<f64>() {
            Ok(t) if t > 0.0 && t.is_finite() => Ok(QpOptions::with_tol(t)),
            _ => Err(Failure::Parse(format!("DUALMPC_QP_TOL must be a positive number, got {v:?}"))),
        },
        Err(_) => Ok(QpOptions::default()),
    }
}

fn io(e: std::io::Error) -> Failure {
    Failure::Io(e.to_string())
}

fn cmd_check(file: &Path) -> Result<(), Failure> {
    let f = read_file(file)?;
    let items = check::run_checks(&f);
    for it in &items {
        println!("{}", it.line());
    }
    if check::all_passed(&items) {
        Ok(())
    } else {
        Err(Failure::Assumption("one or more checks failed".into()))
    }
}

fn cmd_run(file: &Path, algo: Algorithm, out: &Path, rates: bool, qs11: Option<f64>) -> Result<(), Failure> {
    let mut sc = Scenario::from_file(read_file(file)?)?;
    if rates {
        sc = sc.with_rate_constraints()?;
    }
    if let Some(v) = qs11 {
        sc = sc.with_qs11(v)?;
    }
    let opts = SimOptions {
        qp: qp_options()?,
        ..SimOptions::default()
    };
    let (trace, metrics) = run(&sc, algo, &opts)?;
    let report = assert_theorem_properties(&trace, &TheoremThresholds::default());
    output::write_run(out, &trace, &metrics, &report).map_err(io)?;
    print!("{}", output::metrics_text(&trace, &metrics));
    if algo != Algorithm::Pid && !report.passed() {
        return Err(Failure::Assumption(format!("theorem properties violated:\n{report}")));
    }
    Ok(())
}

fn cmd_compare(file: &Path, out: &Path) -> Result<(), Failure> {
    let sc = Scenario::from_file(read_file(file)?)?;
    let opts = SimOptions {
        qp: qp_options()?,
        ..SimOptions::default()
    };
    let results: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = Algorithm::ALL
            .into_iter()
            .map(|a| {
                let (sc, opts) = (&sc, &opts);
                s.spawn(move || run(sc, a, opts))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("simulation thread panicked")).collect()
    });
    let runs = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    output::write_compare(out, &runs).map_err(io)?;
    for (t, m) in &runs {
        println!("{:<9} J_s {:>12.4} J_f {:>12.4}", t.algorithm.name(), m.j_s, m.j_f);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Check { file } => cmd_check(file),
        Command::Run {
            file,
            algo,
            out,
            rate_constraints,
            qs11,
        } => cmd_run(file, (*algo).into(), out, *rate_constraints, *qs11),
        Command::Compare { file, out } => cmd_compare(file, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
