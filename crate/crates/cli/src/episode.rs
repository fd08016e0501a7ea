use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use iadp::config::{echo, parse_config};
use iadp::{run_episode, ControllerKind, EpisodeStatus, SimConfig, TrajectoryLog};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::{Failure, RunArgs};

/// Bumped whenever the CSV columns change.
const CSV_SCHEMA: u32 = 1;

/// File, then flags, then `--override`; later layers win.
pub fn resolve(args: &RunArgs) -> Result<SimConfig, Failure> {
    let text = match &args.config {
        Some(path) => fs::read_to_string(path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?,
        None => String::new(),
    };
    let mut layers = Vec::new();
    let mut flag = |key: &str, value: Option<String>| {
        if let Some(v) = value {
            layers.push(format!("{key}={v}"));
        }
    };
    flag("scenario", args.scenario.clone());
    flag("controller", args.controller.clone());
    flag("seed", args.seed.map(|s| s.to_string()));
    flag("sim.dt", args.dt.map(|v| v.to_string()));
    flag("sim.t_end", args.t_end.map(|v| v.to_string()));
    flag("sim.xdot_source", args.xdot_source.clone());
    layers.extend(args.overrides.iter().cloned());
    Ok(parse_config(&text, &layers)?)
}

struct Finished {
    cfg: SimConfig,
    log: TrajectoryLog,
    elapsed: Duration,
}

fn simulate(cfg: SimConfig) -> Result<Finished, Failure> {
    let start = Instant::now();
    let log = run_episode(&cfg)?;
    Ok(Finished {
        cfg,
        log,
        elapsed: start.elapsed(),
    })
}

fn status_text(log: &TrajectoryLog) -> String {
    match &log.status {
        EpisodeStatus::Completed => "completed".into(),
        EpisodeStatus::Diverged { step, t, reason } => format!("diverged at t = {t} (step {step}): {reason}"),
    }
}

/// Writes `<stem>.csv` and `<stem>.manifest`; returns the CSV path.
///
/// The manifest is a valid config file: provenance sits in comment lines
/// above the resolved config echo.
fn write_outputs(run: &Finished, out_dir: &Path) -> Result<PathBuf, Failure> {
    fs::create_dir_all(out_dir)?;
    let stem = format!("{}-{}-seed{}", run.cfg.scenario.id, run.cfg.controller.as_str(), run.cfg.seed);
    let csv_path = out_dir.join(format!("{stem}.csv"));
    let manifest_path = out_dir.join(format!("{stem}.manifest"));

    let mut csv = Vec::new();
    run.log.write_csv(&mut csv)?;
    fs::write(&csv_path, &csv)?;

    let metrics = run.log.metrics();
    let mut m = String::new();
    let _ = writeln!(m, "# iadp run manifest");
    let _ = writeln!(m, "# version: {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(m, "# csv_schema: {CSV_SCHEMA}");
    let _ = writeln!(m, "# seed: {}", run.cfg.seed);
    let _ = writeln!(m, "# csv: {}", csv_path.display());
    let _ = writeln!(m, "# manifest: {}", manifest_path.display());
    let _ = writeln!(m, "# csv_sha256: {}", hex::encode(Sha256::digest(&csv)));
    let _ = writeln!(m, "# rows: {}", run.log.rows.len());
    let _ = writeln!(m, "# status: {}", status_text(&run.log));
    let _ = writeln!(m, "# insufficient_excitation: {}", run.log.insufficient_excitation);
    let _ = writeln!(m, "# final_E_u: {}", metrics.final_e_u());
    let _ = writeln!(m, "# final_E_x: {}", metrics.final_e_x());
    let _ = writeln!(m, "# wall_clock_s: {:.3}", run.elapsed.as_secs_f64());
    m.push_str(&echo(&run.cfg)?);
    fs::write(&manifest_path, m)?;
    Ok(csv_path)
}

pub fn run(args: &RunArgs) -> Result<(), Failure> {
    let done = simulate(resolve(args)?)?;
    let csv = write_outputs(&done, &args.out_dir)?;
    let m = done.log.metrics();
    println!(
        "{} {} seed {}: {}; E_u = {:.6}, E_x = {:.6}; wrote {}",
        done.cfg.scenario.id,
        done.cfg.controller.as_str(),
        done.cfg.seed,
        status_text(&done.log),
        m.final_e_u(),
        m.final_e_x(),
        csv.display()
    );
    if done.log.insufficient_excitation {
        eprintln!("warning: replay buffer never reached full rank");
    }
    if done.log.diverged() {
        return Err(Failure::Diverged);
    }
    Ok(())
}

/// Summary table for runs sharing one scenario and seed; ratios are
/// relative to the first row.
fn summary(runs: &[Finished]) -> String {
    let reference = runs[0].log.metrics();
    let (eu0, ex0) = (reference.final_e_u(), reference.final_e_x());
    let mut s = String::new();
    let _ = writeln!(s, "scenario {}, seed {}", runs[0].cfg.scenario.id, runs[0].cfg.seed);
    let _ = writeln!(
        s,
        "{:<10} {:<9} {:>14} {:>14} {:>10} {:>10}",
        "controller", "diverged", "E_u", "E_x", "E_u ratio", "E_x ratio"
    );
    for r in runs {
        let m = r.log.metrics();
        let _ = writeln!(
            s,
            "{:<10} {:<9} {:>14.6} {:>14.6} {:>10.4} {:>10.4}",
            r.cfg.controller.as_str(),
            r.log.diverged(),
            m.final_e_u(),
            m.final_e_x(),
            m.final_e_u() / eu0,
            m.final_e_x() / ex0
        );
    }
    s
}

pub fn compare(args: &RunArgs) -> Result<(), Failure> {
    let base = resolve(args)?;
    let runs = ControllerKind::ALL
        .par_iter()
        .map(|&kind| {
            let mut cfg = base.clone();
            cfg.controller = kind;
            simulate(cfg)
        })
        .collect::<Result<Vec<_>, _>>()?;
    for r in &runs {
        write_outputs(r, &args.out_dir)?;
    }
    let table = summary(&runs);
    print!("{table}");
    fs::write(
        args.out_dir.join(format!("{}-seed{}-summary.txt", base.scenario.id, base.seed)),
        &table,
    )?;
    if runs.iter().any(|r| r.log.diverged()) {
        return Err(Failure::Diverged);
    }
    Ok(())
}
