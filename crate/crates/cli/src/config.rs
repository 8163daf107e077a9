//! Experiment configuration files.

use std::path::Path;

use msd_core::datagen::DistributionSpec;
use msd_core::mx_formats::BLOCK;
use serde::{Deserialize, Serialize};

use crate::chart::ChartSpec;
use crate::error::{CliError, Result};

/// Environment variable that replaces the configured root seed.
pub const SEED_ENV: &str = "MSD_SEED";

/// Longest KV length run under `--scale desk`.
pub const DESK_MAX_SEQ: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    GemmInt8,
    Ablation,
    SizeSweep,
    DistributionSweep,
    FlashAttention,
    Mxfp4Decomp,
    Mxfp4Gemm,
    Mxfp4SizeSweep,
    BoundVerify,
    Mxfp4Evolution,
    CostTables,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 11] = [
        ExperimentKind::Mxfp4Evolution,
        ExperimentKind::CostTables,
        ExperimentKind::GemmInt8,
        ExperimentKind::Ablation,
        ExperimentKind::SizeSweep,
        ExperimentKind::DistributionSweep,
        ExperimentKind::FlashAttention,
        ExperimentKind::Mxfp4Decomp,
        ExperimentKind::Mxfp4Gemm,
        ExperimentKind::Mxfp4SizeSweep,
        ExperimentKind::BoundVerify,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::GemmInt8 => "gemm_int8",
            ExperimentKind::Ablation => "ablation",
            ExperimentKind::SizeSweep => "size_sweep",
            ExperimentKind::DistributionSweep => "distribution_sweep",
            ExperimentKind::FlashAttention => "flash_attention",
            ExperimentKind::Mxfp4Decomp => "mxfp4_decomp",
            ExperimentKind::Mxfp4Gemm => "mxfp4_gemm",
            ExperimentKind::Mxfp4SizeSweep => "mxfp4_size_sweep",
            ExperimentKind::BoundVerify => "bound_verify",
            ExperimentKind::Mxfp4Evolution => "mxfp4_evolution",
            ExperimentKind::CostTables => "cost_tables",
        }
    }

    fn needs_sizes(self) -> bool {
        matches!(
            self,
            ExperimentKind::GemmInt8
                | ExperimentKind::Ablation
                | ExperimentKind::SizeSweep
                | ExperimentKind::DistributionSweep
                | ExperimentKind::Mxfp4Decomp
                | ExperimentKind::Mxfp4Gemm
                | ExperimentKind::Mxfp4SizeSweep
                | ExperimentKind::Mxfp4Evolution
        )
    }

    fn is_mx(self) -> bool {
        matches!(
            self,
            ExperimentKind::Mxfp4Decomp
                | ExperimentKind::Mxfp4Gemm
                | ExperimentKind::Mxfp4SizeSweep
                | ExperimentKind::Mxfp4Evolution
        )
    }
}

/// Precision of the activation handed to the MSD pipelines. The oracle
/// always sees the binary32 source; dequant baselines always truncate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputPrecision {
    #[default]
    Fp32,
    Bf16,
}

impl InputPrecision {
    pub fn name(self) -> &'static str {
        match self {
            InputPrecision::Fp32 => "fp32",
            InputPrecision::Bf16 => "bf16",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scale {
    #[default]
    Full,
    Desk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttentionParams {
    /// KV lengths for the sequence sweep; the largest is the headline row.
    pub seq_lens: Vec<usize>,
    /// Tile sizes for the block-size sweep at the largest KV length.
    pub block_sizes: Vec<usize>,
    /// Tile size of the sequence sweep and headline table.
    pub table_block_size: usize,
    pub head_dim: usize,
    pub queries: usize,
}

impl Default for AttentionParams {
    fn default() -> Self {
        Self {
            seq_lens: vec![64, 256, 1024, 4096, 16384],
            block_sizes: vec![16, 32, 64, 128, 256],
            table_block_size: 64,
            head_dim: 64,
            queries: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundParams {
    /// Random vectors for the INT8 bound; 0 skips it.
    pub int8_vectors: u64,
    pub int8_lengths: Vec<usize>,
    pub int8_distributions: Vec<DistributionSpec>,
    /// Blocks per distribution for the MXFP4 bound; 0 skips it.
    pub blocks_per_distribution: u64,
}

impl Default for BoundParams {
    fn default() -> Self {
        use DistributionSpec::*;
        Self {
            int8_vectors: 1_000_000,
            int8_lengths: vec![32, 257, 1024, 4096],
            int8_distributions: vec![
                Gaussian { mean: 0.0, std: 1.0 },
                Uniform { low: -1.0, high: 1.0 },
                Laplacian { loc: 0.0, scale: 1.0 },
                Exponential { rate: 1.0 },
                StudentT { df: 3.0 },
                Cauchy,
                GaussianWithOutliers { rate: 0.01, magnitude: 50.0 },
            ],
            blocks_per_distribution: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostParams {
    pub kv_len: u64,
    pub head_dim: u64,
    pub block_size: u64,
    pub queries: Vec<u64>,
    pub crossover_dims: Vec<u64>,
    pub crossover_queries: Vec<u64>,
    pub linear_batch: u64,
    pub linear_rows: u64,
    pub linear_cols: u64,
}

impl Default for CostParams {
    fn default() -> Self {
        Self {
            kv_len: 8192,
            head_dim: 128,
            block_size: 64,
            queries: vec![1, 4, 12, 24, 32],
            crossover_dims: vec![128, 576],
            crossover_queries: vec![1, 12, 32, 48],
            linear_batch: 8,
            linear_rows: 4096,
            linear_cols: 4096,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Json,
    Csv,
    Markdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub formats: Vec<OutputFormat>,
    pub charts: Vec<ChartSpec>,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            formats: vec![OutputFormat::Json, OutputFormat::Csv, OutputFormat::Markdown],
            charts: Vec::new(),
        }
    }
}

fn default_seed() -> u64 {
    2024
}

fn default_trials() -> u64 {
    5
}

fn default_batch() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: u64,
    /// Square weight sizes (`m = n`).
    #[serde(default)]
    pub sizes: Vec<usize>,
    /// Activation rows.
    #[serde(default = "default_batch")]
    pub batch: usize,
    #[serde(default)]
    pub distributions: Vec<DistributionSpec>,
    /// Binary32 weight distribution before MXFP4 quantization.
    #[serde(default = "DistributionSpec::standard_normal")]
    pub weight_distribution: DistributionSpec,
    #[serde(default)]
    pub msd_input: InputPrecision,
    #[serde(default)]
    pub attention: AttentionParams,
    #[serde(default)]
    pub bounds: BoundParams,
    #[serde(default)]
    pub cost: CostParams,
    #[serde(default)]
    pub output: OutputSpec,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind) -> Self {
        Self {
            experiment,
            seed: default_seed(),
            trials: default_trials(),
            sizes: Vec::new(),
            batch: default_batch(),
            distributions: Vec::new(),
            weight_distribution: DistributionSpec::standard_normal(),
            msd_input: InputPrecision::default(),
            attention: AttentionParams::default(),
            bounds: BoundParams::default(),
            cost: CostParams::default(),
            output: OutputSpec::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads, applies `MSD_SEED`, and validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::from_json(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.apply_env()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        let kind = self.experiment;
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if kind.needs_sizes() {
            if self.sizes.is_empty() {
                return bad(format!("{} needs at least one size", kind.name()));
            }
            if self.sizes.contains(&0) || self.batch == 0 {
                return bad("sizes and batch must be positive".into());
            }
        }
        if kind.is_mx() {
            if let Some(s) = self.sizes.iter().find(|&&s| s % BLOCK != 0) {
                return bad(format!("size {s} is not a multiple of {BLOCK}"));
            }
        }
        for d in self.distributions.iter().chain(&self.bounds.int8_distributions) {
            d.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        self.weight_distribution.validate().map_err(|e| CliError::Config(e.to_string()))?;
        match kind {
            ExperimentKind::FlashAttention => {
                let a = &self.attention;
                if a.seq_lens.is_empty() || a.queries == 0 || a.head_dim == 0 || a.table_block_size == 0 {
                    return bad("attention needs seq_lens, queries, head_dim and table_block_size".into());
                }
                if let Some(m) = a.seq_lens.iter().find(|&&m| m == 0 || m % a.table_block_size != 0) {
                    return bad(format!("seq_len {m} is not a multiple of {}", a.table_block_size));
                }
                if a.block_sizes.contains(&0) {
                    return bad("block sizes must be positive".into());
                }
            }
            ExperimentKind::BoundVerify => {
                let b = &self.bounds;
                if b.int8_vectors > 0 && (b.int8_lengths.is_empty() || b.int8_distributions.is_empty()) {
                    return bad("int8 bound needs lengths and distributions".into());
                }
                if b.int8_lengths.contains(&0) {
                    return bad("vector lengths must be positive".into());
                }
                if b.blocks_per_distribution > 0 && self.distributions.is_empty() {
                    return bad("block bound needs distributions".into());
                }
            }
            ExperimentKind::CostTables => {
                let c = &self.cost;
                if c.block_size == 0 || !c.kv_len.is_multiple_of(c.block_size) || c.head_dim == 0 {
                    return bad("kv_len must be a positive multiple of block_size".into());
                }
            }
            _ => {
                if self.distributions.is_empty() {
                    return bad(format!("{} needs at least one distribution", kind.name()));
                }
            }
        }
        Ok(())
    }

    /// KV lengths actually run at the given scale.
    pub fn seq_lens(&self, scale: Scale) -> Vec<usize> {
        let mut v: Vec<usize> = match scale {
            Scale::Full => self.attention.seq_lens.clone(),
            Scale::Desk => self
                .attention
                .seq_lens
                .iter()
                .copied()
                .filter(|&m| m <= DESK_MAX_SEQ)
                .collect(),
        };
        if v.is_empty() {
            v.push(DESK_MAX_SEQ);
        }
        v
    }
}
