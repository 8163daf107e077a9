use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use msd_cli::chart::{render_chart, ChartKind, ChartSpec};
use msd_cli::check::{evaluate, Outcome};
use msd_cli::config::{ExperimentConfig, ExperimentKind, Scale};
use msd_cli::experiments::{run_experiment, verify_bounds_config, RunOptions};
use msd_cli::report::{from_json, to_markdown, write_outputs};
use msd_cli::{config_files, stem, CliError, Result, ResultSet};

#[derive(Parser)]
#[command(name = "msd", version, about = "Multi-scale decomposition accuracy and cost experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleArg {
    Full,
    Desk,
}

impl From<ScaleArg> for Scale {
    fn from(s: ScaleArg) -> Self {
        match s {
            ScaleArg::Full => Scale::Full,
            ScaleArg::Desk => Scale::Desk,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one experiment config.
    Run {
        config: PathBuf,
        #[arg(long, default_value = "results")]
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value = "full")]
        scale: ScaleArg,
        /// Compare against the acceptance bands; exit 2 on failure.
        #[arg(long)]
        check: bool,
        /// Record wall time (outputs are then no longer reproducible).
        #[arg(long)]
        timing: bool,
    },
    /// Run every config in a directory.
    RunAll {
        #[arg(long, default_value = "configs")]
        configs: PathBuf,
        #[arg(long, default_value = "results")]
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value = "full")]
        scale: ScaleArg,
        #[arg(long)]
        check: bool,
        #[arg(long)]
        timing: bool,
    },
    /// Closed-form cost tables for one shape.
    Cost {
        /// Queries per KV head (repeatable).
        #[arg(long = "n", default_values_t = vec![1, 4, 12, 24, 32])]
        queries: Vec<u64>,
        /// KV length.
        #[arg(long, default_value_t = 8192)]
        m: u64,
        /// Head dimension.
        #[arg(long, default_value_t = 128)]
        d: u64,
        /// KV tile size.
        #[arg(long, default_value_t = 64)]
        bc: u64,
        /// Linear-layer activation rows.
        #[arg(long, default_value_t = 8)]
        batch: u64,
        /// Linear-layer weight rows and columns.
        #[arg(long, default_value_t = 4096)]
        hidden: u64,
    },
    /// Check both reconstruction bounds on random data.
    VerifyBounds {
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
    },
    /// Render an SVG chart from a results JSON file.
    Chart {
        results: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Table id; defaults to the first table in the file.
        #[arg(long)]
        table: Option<String>,
        /// Parameter on the x axis.
        #[arg(long)]
        x: Option<String>,
        #[arg(long, default_value = "l2_rel")]
        y: String,
        #[arg(long, value_enum, default_value = "line")]
        kind: KindArg,
        #[arg(long)]
        log_y: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Line,
    Bar,
}

fn print_outcomes(outcomes: &[Outcome]) -> Result<()> {
    for o in outcomes {
        println!("{}", o.line());
    }
    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.pass && !o.optional).map(|o| o.id).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::CheckFailed(format!("criteria {}", failed.join(", "))))
    }
}

fn run_one(path: &Path, out_dir: &Path, opts: &RunOptions) -> Result<ResultSet> {
    let cfg = ExperimentConfig::load(path)?;
    let set = run_experiment(&cfg, opts)?;
    for p in write_outputs(&set, out_dir, &stem(path))? {
        eprintln!("wrote {}", p.display());
    }
    Ok(set)
}

fn numeric_errors(sets: &[ResultSet]) -> Result<()> {
    let errs: Vec<String> = sets.iter().flat_map(|s| s.all_errors()).collect();
    if errs.is_empty() {
        return Ok(());
    }
    for e in &errs {
        eprintln!("error: {e}");
    }
    Err(CliError::Numeric(msd_core::MsdError::InvalidArgument(format!("{} trial failures", errs.len()))))
}

fn dispatch(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Run { config, out_dir, scale, check, timing } => {
            let opts = RunOptions { scale: scale.into(), timing };
            let set = run_one(&config, &out_dir, &opts)?;
            print!("{}", to_markdown(&set.records)?);
            let sets = [set];
            numeric_errors(&sets)?;
            if check {
                print_outcomes(&evaluate(&sets, false))?;
            }
            Ok(())
        }
        Cmd::RunAll { configs, out_dir, scale, check, timing } => {
            let opts = RunOptions { scale: scale.into(), timing };
            let mut sets = Vec::new();
            for path in config_files(&configs)? {
                eprintln!("running {}", path.display());
                sets.push(run_one(&path, &out_dir, &opts)?);
            }
            numeric_errors(&sets)?;
            if check {
                print_outcomes(&evaluate(&sets, true))?;
            }
            Ok(())
        }
        Cmd::Cost { queries, m, d, bc, batch, hidden } => {
            let mut cfg = ExperimentConfig::new(ExperimentKind::CostTables);
            cfg.trials = 1;
            cfg.cost.queries = queries;
            cfg.cost.kv_len = m;
            cfg.cost.head_dim = d;
            cfg.cost.block_size = bc;
            cfg.cost.linear_batch = batch;
            cfg.cost.linear_rows = hidden;
            cfg.cost.linear_cols = hidden;
            let set = run_experiment(&cfg, &RunOptions::default())?;
            print!("{}", to_markdown(&set.records)?);
            Ok(())
        }
        Cmd::VerifyBounds { samples, seed } => {
            if samples == 0 {
                return Err(CliError::Usage("--samples must be positive".into()));
            }
            let set = run_experiment(&verify_bounds_config(samples, seed), &RunOptions::default())?;
            print!("{}", to_markdown(&set.records)?);
            numeric_errors(std::slice::from_ref(&set))?;
            let bad: f64 = set.records.iter().filter_map(|r| r.metric("violations")).sum();
            if bad > 0.0 {
                return Err(CliError::CheckFailed(format!("{bad} bound violations")));
            }
            println!("no bound violations");
            Ok(())
        }
        Cmd::Chart { results, out, table, x, y, kind, log_y } => {
            let text = std::fs::read_to_string(&results).map_err(|e| CliError::io(&results, e))?;
            let set = from_json(&text)?;
            let table = table
                .or_else(|| set.records.first().map(|r| r.table.clone()))
                .ok_or(CliError::EmptyRecords)?;
            let x = x
                .or_else(|| {
                    set.records
                        .iter()
                        .find(|r| r.table == table)
                        .and_then(|r| r.params.keys().next().cloned())
                })
                .unwrap_or_default();
            let spec = ChartSpec {
                table,
                x,
                y,
                metrics: Vec::new(),
                kind: match kind {
                    KindArg::Line => ChartKind::Line,
                    KindArg::Bar => ChartKind::Bar,
                },
                log_y,
                methods: Vec::new(),
                title: String::new(),
                file: stem(&out),
            };
            let svg = render_chart(&set.records, &spec)?;
            std::fs::write(&out, svg).map_err(|e| CliError::io(&out, e))?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
