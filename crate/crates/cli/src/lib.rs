//! Experiment runner for the `msd-core` simulations: seeded configs in,
//! CSV / Markdown / JSON tables and SVG charts out, with optional
//! acceptance bands.

pub mod chart;
pub mod check;
pub mod config;
pub mod error;
pub mod experiments;
pub mod record;
pub mod report;

pub use config::{ExperimentConfig, ExperimentKind, Scale};
pub use error::{CliError, Result};
pub use experiments::{run_experiment, RunOptions};
pub use record::{ResultRecord, ResultSet};

use std::path::{Path, PathBuf};

/// Bundled configs, sorted by file name.
pub fn config_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let rd = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut out: Vec<PathBuf> = rd
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    out.sort();
    if out.is_empty() {
        return Err(CliError::Usage(format!("no configs in {}", dir.display())));
    }
    Ok(out)
}

pub fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "results".into())
}
