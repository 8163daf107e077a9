//! Runs every bundled config at a given scale, times each run, and folds
//! the runtime limits into the acceptance outcomes.

use std::path::{Path, PathBuf};
use std::time::Instant;

use msd_cli::check::{evaluate, Outcome};
use msd_cli::config::{ExperimentConfig, ExperimentKind, Scale};
use msd_cli::experiments::{run_experiment, RunOptions};
use msd_cli::{config_files, stem, Result, ResultSet};

/// Wall-clock limits, in seconds, for criteria that state one.
pub const RUNTIME_LIMITS: [(&str, ExperimentKind, f64); 2] =
    [("1", ExperimentKind::BoundVerify, 60.0), ("3", ExperimentKind::GemmInt8, 120.0)];

pub fn bundled_configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[derive(Debug)]
pub struct TimedRun {
    pub name: String,
    pub seconds: f64,
    pub set: ResultSet,
}

pub fn run_all(dir: &Path, scale: Scale) -> Result<Vec<TimedRun>> {
    let opts = RunOptions { scale, timing: false };
    let mut out = Vec::new();
    for path in config_files(dir)? {
        let cfg = ExperimentConfig::load(&path)?;
        let start = Instant::now();
        let set = run_experiment(&cfg, &opts)?;
        out.push(TimedRun { name: stem(&path), seconds: start.elapsed().as_secs_f64(), set });
    }
    Ok(out)
}

/// Marks a criterion failed when the run that feeds it broke its limit.
pub fn apply_runtime_limits(outcomes: &mut [Outcome], runs: &[TimedRun]) {
    for (id, kind, limit) in RUNTIME_LIMITS {
        let Some(run) = runs.iter().find(|r| r.set.config.experiment == kind) else {
            continue;
        };
        if let Some(o) = outcomes.iter_mut().find(|o| o.id == id) {
            o.detail.push_str(&format!("; runtime {:.1}s (limit {limit:.0}s)", run.seconds));
            if run.seconds > limit {
                o.pass = false;
            }
        }
    }
}

pub fn acceptance(dir: &Path, scale: Scale) -> Result<(Vec<TimedRun>, Vec<Outcome>)> {
    let runs = run_all(dir, scale)?;
    let sets: Vec<ResultSet> = runs.iter().map(|r| r.set.clone()).collect();
    let mut outcomes = evaluate(&sets, true);
    apply_runtime_limits(&mut outcomes, &runs);
    Ok((runs, outcomes))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome(id: &'static str) -> Outcome {
        Outcome { id, name: "x", pass: true, optional: false, detail: String::new() }
    }

    #[test]
    fn runtime_limit_fails_slow_runs() {
        let mut cfg = ExperimentConfig::new(ExperimentKind::GemmInt8);
        cfg.sizes = vec![32];
        cfg.trials = 1;
        cfg.distributions = vec![cfg.weight_distribution];
        let set = run_experiment(&cfg, &RunOptions::default()).unwrap();
        let mut runs = vec![TimedRun { name: "a".into(), seconds: 121.0, set }];
        let mut o = vec![outcome("3"), outcome("4")];
        apply_runtime_limits(&mut o, &runs);
        assert!(!o[0].pass && o[0].detail.contains("121.0s"));
        assert!(o[1].pass && o[1].detail.is_empty());
        runs[0].seconds = 1.0;
        let mut o = vec![outcome("3")];
        apply_runtime_limits(&mut o, &runs);
        assert!(o[0].pass);
    }

    #[test]
    fn bundled_configs_all_load() {
        let files = config_files(&bundled_configs()).unwrap();
        let mut kinds: Vec<ExperimentKind> = files.iter().map(|p| ExperimentConfig::load(p).unwrap().experiment).collect();
        kinds.sort_by_key(|k| k.name());
        kinds.dedup();
        assert_eq!(kinds.len(), ExperimentKind::ALL.len());
    }
}
