//! Executes configs: single runs, parallel sweeps, and the files they write.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::baselines::scaled_identity;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::output::emit_csv;
use crate::report::{run_report, RunReport};
use crate::sim::{resolve_gain_scale, run_scenario, DremSettings, GainScale, Scenario, Trajectory};

fn gain_tag(g: f64) -> String {
    format!("{g:e}").replace('.', "p")
}

/// Scenarios for a config: one per sweep entry, or the base scenario when
/// the config has no sweep. DREM runs share one resolved gain scale.
pub fn sweep_scenarios(cfg: &RunConfig) -> Result<Vec<Scenario>> {
    if cfg.sweep.is_empty() {
        return Ok(vec![cfg.scenario.clone()]);
    }
    let base = cfg.scenario.clone().without_observers();
    let label = &cfg.output.label;
    let mut out = Vec::new();

    if let Some(template) = cfg.observers.drem.as_ref().filter(|_| !cfg.sweep.drem_gamma.is_empty()) {
        let mut probe = base.clone();
        probe.drem = Some(template.clone());
        let scale = resolve_gain_scale(&probe)?.expect("drem configured");
        for &g in &cfg.sweep.drem_gamma {
            let mut s = base.clone();
            s.label = format!("{label}_drem_g{}", gain_tag(g));
            s.drem = Some(DremSettings { gamma: [g, g], gain_scale: GainScale::Fixed(scale), ..template.clone() });
            out.push(s);
        }
    }
    if let Some(template) = &cfg.observers.overparam {
        for &g in &cfg.sweep.overparam_gamma {
            let mut s = base.clone();
            s.label = format!("{label}_overparam_g{}", gain_tag(g));
            s.overparam = Some(crate::sim::OverparamSettings { gamma: scaled_identity(g), ..template.clone() });
            out.push(s);
        }
    }
    if let Some(template) = &cfg.observers.gradient {
        for &g in &cfg.sweep.gradient_gamma {
            let mut s = base.clone();
            s.label = format!("{label}_gradient_g{}", gain_tag(g));
            s.gradient = Some(crate::sim::GradientSettings { gamma: scaled_identity(g), ..template.clone() });
            out.push(s);
        }
    }
    Ok(out)
}

/// Runs independent scenarios concurrently; results keep the input order.
pub fn run_many(scenarios: &[Scenario]) -> Result<Vec<Trajectory>> {
    scenarios.par_iter().map(run_scenario).collect()
}

pub struct RunOutput {
    pub trajectory: Trajectory,
    pub report: RunReport,
    pub csv: PathBuf,
    pub json: PathBuf,
}

pub fn write_run(traj: Trajectory, cfg: &RunConfig, dir: &Path) -> Result<RunOutput> {
    let report = run_report(&traj, &cfg.report);
    let csv = dir.join(format!("{}.csv", traj.label));
    let json = dir.join(format!("{}.report.json", traj.label));
    emit_csv(&traj, &cfg.output.columns, &csv)?;
    let text = serde_json::to_string_pretty(&report).expect("reports serialize");
    std::fs::write(&json, text + "\n").map_err(|e| Error::io(&json, e))?;
    Ok(RunOutput { trajectory: traj, report, csv, json })
}

/// Runs the base scenario, or every sweep entry when `sweep` is set, and
/// writes one CSV and one JSON report per run.
pub fn execute(cfg: &RunConfig, dir: &Path, sweep: bool) -> Result<Vec<RunOutput>> {
    let scenarios = if sweep { sweep_scenarios(cfg)? } else { vec![cfg.scenario.clone()] };
    let trajectories = run_many(&scenarios)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    trajectories.into_iter().map(|t| write_run(t, cfg, dir)).collect()
}

/// Loads every `*.report.json` in a directory, sorted by file name.
pub fn load_reports(dir: &Path) -> Result<Vec<RunReport>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(".report.json")))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| {
                Error::io(p, std::io::Error::new(std::io::ErrorKind::InvalidData, e))
            })
        })
        .collect()
}
