//! Files written by `run` and `compare`.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter};
use std::path::Path;

use dualmpc::sim::{Metrics, SimTrace, TheoremReport};
use dualmpc::trace::write_trace_csv;

pub fn metrics_text(trace: &SimTrace, m: &Metrics) -> String {
    let mut s = String::new();
    writeln!(s, "algorithm {}", trace.algorithm).unwrap();
    writeln!(s, "J_s {}", m.j_s).unwrap();
    writeln!(s, "J_f {}", m.j_f).unwrap();
    for (i, seg) in m.settle.iter().enumerate() {
        let chans: Vec<String> = seg
            .channels
            .iter()
            .enumerate()
            .map(|(c, v)| match v {
                Some(steps) => format!("y_{}={}", c + 1, *steps as f64 * trace.dt),
                None => format!("y_{}=none", c + 1),
            })
            .collect();
        let fast = m
            .fast_settle(i, trace.partition)
            .map_or("none".to_string(), |v| (v as f64 * trace.dt).to_string());
        writeln!(s, "settle_seconds h={} {} fast={fast}", seg.start_h, chans.join(" ")).unwrap();
    }
    s
}

pub fn write_run(dir: &Path, trace: &SimTrace, m: &Metrics, report: &TheoremReport) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let f = BufWriter::new(fs::File::create(dir.join("trace.csv"))?);
    write_trace_csv(f, trace).map_err(io::Error::other)?;
    fs::write(dir.join("metrics.txt"), metrics_text(trace, m))?;
    fs::write(dir.join("theorem_report.txt"), format!("{report}\n"))?;
    Ok(())
}

pub fn write_compare(dir: &Path, runs: &[(SimTrace, Metrics)]) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut table = String::from("algorithm,J_s,J_f");
    let segments = runs.first().map_or(0, |(_, m)| m.settle.len());
    for (i, _) in runs.first().map_or(&[][..], |(_, m)| &m.settle[..]).iter().enumerate() {
        let h = runs[0].1.settle[i].start_h;
        write!(table, ",fast_settle_seconds_h{h}").unwrap();
    }
    table.push('\n');
    for (t, m) in runs {
        write!(table, "{},{:.10e},{:.10e}", t.algorithm, m.j_s, m.j_f).unwrap();
        for i in 0..segments {
            match m.fast_settle(i, t.partition) {
                Some(v) => write!(table, ",{}", v as f64 * t.dt).unwrap(),
                None => table.push(','),
            }
        }
        table.push('\n');
    }
    fs::write(dir.join("metrics.csv"), table)?;
    let Some((first, _)) = runs.first() else {
        return Ok(());
    };
    let (p, mm) = (first.partition.p(), first.partition.m());
    for (prefix, count) in [("y", p), ("u", mm)] {
        for c in 0..count {
            let mut s = String::from("t,value,algorithm\n");
            for (t, _) in runs {
                for st in &t.steps {
                    let v = if prefix == "y" { st.y[c] } else { st.u[c] };
                    writeln!(s, "{:.6e},{:.16e},{}", st.h as f64 * t.dt, v, t.algorithm).unwrap();
                }
            }
            fs::write(dir.join(format!("plot_{prefix}{}.csv", c + 1)), s)?;
        }
    }
    Ok(())
}
