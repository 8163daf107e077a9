//! One runner per experiment kind. Every runner loops trials outermost and
//! derives each input from a named seed stream, so a row's data does not
//! depend on which other rows the config asks for.

use std::time::Instant;

use rayon::prelude::*;

use msd_core::attention_sim::{attention_dequant, attention_flash, attention_flash_msd, attention_oracle, AttentionStats};
use msd_core::cost_model::{
    attn_crossover, attn_hbm_traffic, attn_vector_ops, linear_hbm_traffic, linear_latency, round_to, AttnCostInput,
    CostMethod, LatencyMethod, LinearCostInput, LinearTrafficMethod, ThroughputProfile,
};
use msd_core::datagen::{gen_activation_fp32, gen_int8_weight, gen_kv_cache, DistributionSpec, ExperimentSeed};
use msd_core::gemm_sim::{
    gemm_dequant, gemm_fp32_oracle, gemm_msd_int8, gemm_mx_reference, gemm_mxfp4, gemm_single_scale, GemmPipelineKind,
    MxActivationMethod,
};
use msd_core::metrics::{error_report, BoundReport, ErrorReport};
use msd_core::msd_int8::{decompose2, ScaleMode};
use msd_core::mx_formats::{mxfp4_decompose_block, mxfp4_quantize_weight, mxfp8_quantize_block, Mxfp4Variant, BLOCK};
use msd_core::numerics::abs_max;
use msd_core::{Matrix, SimMatrix};

use crate::config::{ExperimentConfig, ExperimentKind, InputPrecision, Scale};
use crate::error::Result;
use crate::params;
use crate::record::{Agg, Collector, Params, ResultSet};

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub scale: Scale,
    /// Attach the experiment's wall time to every record.
    pub timing: bool,
}

pub fn table_ids(kind: ExperimentKind) -> &'static [&'static str] {
    match kind {
        ExperimentKind::GemmInt8 => &["table5"],
        ExperimentKind::Ablation => &["table6"],
        ExperimentKind::SizeSweep => &["table7"],
        ExperimentKind::DistributionSweep => &["fig2"],
        ExperimentKind::FlashAttention => &["table8", "fig3a", "fig3b"],
        ExperimentKind::Mxfp4Decomp => &["table9"],
        ExperimentKind::Mxfp4Gemm => &["table10"],
        ExperimentKind::Mxfp4SizeSweep => &["table11"],
        ExperimentKind::BoundVerify => &["theorem1", "table12"],
        ExperimentKind::Mxfp4Evolution => &["table1"],
        ExperimentKind::CostTables => &["table4", "crossover_d", "crossover", "hbm_attention", "hbm_linear", "latency"],
    }
}

pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ResultSet> {
    cfg.validate()?;
    let start = Instant::now();
    use GemmPipelineKind as G;
    let mut set = match cfg.experiment {
        ExperimentKind::GemmInt8 => run_int8_gemm(cfg, "table5", &[G::DequantBf16, G::MsdInt8]),
        ExperimentKind::Ablation => run_int8_gemm(cfg, "table6", &[G::SingleScaleInt8, G::DequantBf16, G::MsdInt8]),
        ExperimentKind::SizeSweep => run_int8_gemm(cfg, "table7", &[G::DequantBf16, G::MsdInt8]),
        ExperimentKind::DistributionSweep => run_int8_gemm(cfg, "fig2", &[G::DequantBf16, G::MsdInt8]),
        ExperimentKind::FlashAttention => run_flash(cfg, opts.scale),
        ExperimentKind::Mxfp4Decomp => run_mx_decomp(cfg),
        ExperimentKind::Mxfp4Gemm => run_mx_gemm(cfg, "table10", &MX_HEADLINE, false),
        ExperimentKind::Mxfp4SizeSweep => run_mx_gemm(cfg, "table11", &MX_HEADLINE, false),
        ExperimentKind::Mxfp4Evolution => run_mx_gemm(cfg, "table1", &MX_EVOLUTION, true),
        ExperimentKind::BoundVerify => run_bounds(cfg),
        ExperimentKind::CostTables => run_cost(cfg)?,
    };
    if opts.timing {
        let t = start.elapsed().as_secs_f64();
        for r in &mut set.records {
            r.wall_time_s = Some(t);
        }
    }
    Ok(set)
}

const MX_HEADLINE: [MxActivationMethod; 2] = [MxActivationMethod::Msd(Mxfp4Variant::V3), MxActivationMethod::Mxfp8];

const MX_EVOLUTION: [MxActivationMethod; 4] = [
    MxActivationMethod::Msd(Mxfp4Variant::V1),
    MxActivationMethod::Msd(Mxfp4Variant::V2),
    MxActivationMethod::Msd(Mxfp4Variant::V3),
    MxActivationMethod::Mxfp8,
];

fn root(cfg: &ExperimentConfig, stream: &str) -> ExperimentSeed {
    ExperimentSeed::new(cfg.seed, 0).child(stream)
}

fn report_metrics(r: &ErrorReport) -> Vec<(&'static str, Agg, f64)> {
    vec![
        ("l2_rel", Agg::Mean, r.l2_rel),
        ("gt_0_1pct", Agg::Mean, r.exceed.gt_0_1pct),
        ("gt_0_5pct", Agg::Mean, r.exceed.gt_0_5pct),
        ("gt_1pct", Agg::Mean, r.exceed.gt_1pct),
        ("gt_5pct", Agg::Mean, r.exceed.gt_5pct),
        ("eff_bits", Agg::Mean, r.eff_bits),
        ("excluded_zero_refs", Agg::Sum, r.excluded_zero_refs as f64),
    ]
}

fn msd_view(src: &SimMatrix, p: InputPrecision) -> SimMatrix {
    match p {
        InputPrecision::Fp32 => src.clone(),
        InputPrecision::Bf16 => src.to_bf16(),
    }
}

fn run_int8_gemm(cfg: &ExperimentConfig, table: &str, methods: &[GemmPipelineKind]) -> ResultSet {
    let mut col = Collector::default();
    let base = root(cfg, "int8_gemm");
    for t in 0..cfg.trials {
        for &n in &cfg.sizes {
            for dist in &cfg.distributions {
                let p = params! {
                    "size" => n,
                    "distribution" => dist.label(),
                    "batch" => cfg.batch,
                    "msd_input" => cfg.msd_input.name(),
                };
                let s = base.child(&format!("{n}/{}", dist.label())).trial(t);
                let inputs = gen_activation_fp32(cfg.batch, n, dist, s.child("x")).and_then(|x| {
                    let w = gen_int8_weight(n, n, s.child("w"))?;
                    let y = gemm_fp32_oracle(&x, &w)?;
                    Ok((x, w, y))
                });
                let (x, w, oracle) = match inputs {
                    Ok(v) => v,
                    Err(e) => {
                        col.trial_error(t, e);
                        continue;
                    }
                };
                let src = SimMatrix::from_fp32(x);
                let mx = msd_view(&src, cfg.msd_input);
                for &m in methods {
                    let y = match m {
                        GemmPipelineKind::DequantBf16 => gemm_dequant(&src, &w),
                        GemmPipelineKind::SingleScaleInt8 => gemm_single_scale(&mx, &w),
                        GemmPipelineKind::MsdInt8 => gemm_msd_int8(&mx, &w, ScaleMode::Standard),
                        GemmPipelineKind::MsdInt8Fractional => gemm_msd_int8(&mx, &w, ScaleMode::Fractional),
                        other => unreachable!("{other:?} is not an INT8 pipeline"),
                    };
                    match y.and_then(|y| error_report(&y.data, &oracle.data)) {
                        Ok(r) => col.observe(table, &m.name(), &p, t, &report_metrics(&r)),
                        Err(e) => col.error(table, &m.name(), &p, t, e),
                    }
                }
            }
        }
    }
    col.finish(cfg)
}

fn attention_stat_metrics(st: &AttentionStats, rows: usize) -> Vec<(&'static str, Agg, f64)> {
    vec![
        ("q_scale_reductions", Agg::Max, st.q_scale_reductions as f64),
        ("p_scale_reductions", Agg::Max, st.p_scale_reductions as f64),
        ("residual_max_reductions", Agg::Max, st.residual_max_reductions as f64),
        ("p_constant_decompositions", Agg::Max, st.p_constant_decompositions as f64),
        ("unit_p_max_rows", Agg::Mean, st.rows_with_unit_p_max as f64 / rows as f64),
        ("p_max", Agg::Max, st.p_max as f64),
        ("p_clipped", Agg::Sum, st.p_clipped as f64),
    ]
}

fn run_flash(cfg: &ExperimentConfig, scale: Scale) -> ResultSet {
    let a = &cfg.attention;
    let seqs = cfg.seq_lens(scale);
    let top = seqs.iter().copied().max().unwrap_or(0);
    let qdist = cfg.distributions.first().copied().unwrap_or_else(DistributionSpec::standard_normal);
    let mut col = Collector::default();
    let base = root(cfg, "attention");
    for t in 0..cfg.trials {
        for &m in &seqs {
            let s = base.child(&format!("m{m}")).trial(t);
            let inputs = gen_activation_fp32(a.queries, a.head_dim, &qdist, s.child("q")).and_then(|q| {
                let (k, v) = gen_kv_cache(m, a.head_dim, s.child("kv"))?;
                let y = attention_oracle(&q, &k, &v)?;
                Ok((q, k, v, y))
            });
            let (q, k, v, oracle) = match inputs {
                Ok(v) => v,
                Err(e) => {
                    col.trial_error(t, e);
                    continue;
                }
            };
            let q_bf16 = SimMatrix::from_fp32_truncated(q.clone()).into_matrix();
            let q_msd = match cfg.msd_input {
                InputPrecision::Fp32 => &q,
                InputPrecision::Bf16 => &q_bf16,
            };

            let mut bcs = vec![a.table_block_size];
            if m == top {
                bcs.extend(a.block_sizes.iter().copied().filter(|&b| m % b == 0 && b != a.table_block_size));
            }
            let deq = attention_dequant(&q, &k, &v);
            for &bc in &bcs {
                let p = params! {
                    "seq_len" => m,
                    "block_size" => bc,
                    "queries" => a.queries,
                    "head_dim" => a.head_dim,
                    "msd_input" => cfg.msd_input.name(),
                };
                let mut tables = Vec::new();
                if bc == a.table_block_size {
                    tables.push("fig3a");
                    if m == top {
                        tables.push("table8");
                    }
                }
                if m == top {
                    tables.push("fig3b");
                }

                let mut runs: Vec<(&str, msd_core::Result<Matrix>, Option<AttentionStats>)> = Vec::new();
                runs.push(("dequant", deq.clone(), None));
                runs.push(("flash_dequant", attention_flash(&q, &k, &v, bc), None));
                let (y, st) = split(attention_flash_msd(q_msd, &k, &v, bc));
                runs.push(("flash_msd", y, st));
                if cfg.msd_input == InputPrecision::Fp32 {
                    let (y, st) = split(attention_flash_msd(&q_bf16, &k, &v, bc));
                    runs.push(("flash_msd_bf16q", y, st));
                }
                for (name, y, st) in runs {
                    match y.and_then(|y| error_report(&y.data, &oracle.data)) {
                        Ok(r) => {
                            let mut mets = report_metrics(&r);
                            if let Some(st) = st {
                                mets.extend(attention_stat_metrics(&st, a.queries));
                            }
                            for tb in &tables {
                                col.observe(tb, name, &p, t, &mets);
                            }
                        }
                        Err(e) => {
                            for tb in &tables {
                                col.error(tb, name, &p, t, &e);
                            }
                        }
                    }
                }
            }
        }
    }
    col.finish(cfg)
}

fn split(r: msd_core::Result<(Matrix, AttentionStats)>) -> (msd_core::Result<Matrix>, Option<AttentionStats>) {
    match r {
        Ok((y, st)) => (Ok(y), Some(st)),
        Err(e) => (Err(e), None),
    }
}

fn run_mx_decomp(cfg: &ExperimentConfig) -> ResultSet {
    let mut col = Collector::default();
    let base = root(cfg, "mx_decomp");
    let variant = Mxfp4Variant::V3;
    for t in 0..cfg.trials {
        for &n in &cfg.sizes {
            for dist in &cfg.distributions {
                let p = params! {"size" => n, "distribution" => dist.label()};
                let s = base.child(&format!("{n}/{}", dist.label())).trial(t);
                let res = gen_activation_fp32(n, n, dist, s).and_then(|x| {
                    let mut msd = BoundReport::default();
                    let (mut e8, mut r8) = (0f64, 0f64);
                    for blk in x.data.chunks(BLOCK) {
                        msd.add(blk, &mxfp4_decompose_block(blk, variant)?);
                        let q = mxfp8_quantize_block(blk)?.dequantize();
                        for (&v, &r) in blk.iter().zip(&q) {
                            e8 += (v as f64 - r as f64).powi(2);
                            r8 += (v as f64).powi(2);
                        }
                    }
                    if r8 == 0.0 {
                        return Err(msd_core::MsdError::DegenerateReference);
                    }
                    Ok((msd, (e8 / r8).sqrt()))
                });
                match res {
                    Ok((msd, l2_fp8)) => {
                        let l2_msd = (msd.err_sq / msd.ref_sq).sqrt();
                        col.observe(
                            "table9",
                            &GemmPipelineKind::MsdMxfp4(variant).name(),
                            &p,
                            t,
                            &[
                                ("l2_rel", Agg::Mean, l2_msd),
                                ("eff_bits", Agg::Mean, msd.eff_bits()),
                                ("clip_rate", Agg::Mean, msd.clip_rate()),
                            ],
                        );
                        col.observe(
                            "table9",
                            &GemmPipelineKind::Mxfp8Baseline.name(),
                            &p,
                            t,
                            &[
                                ("l2_rel", Agg::Mean, l2_fp8),
                                ("eff_bits", Agg::Mean, msd_core::metrics::effective_bits(l2_fp8)),
                            ],
                        );
                    }
                    Err(e) => col.trial_error(t, e),
                }
            }
        }
    }
    col.finish(cfg)
}

/// Pass-2 clip rate of the activation decomposition alone.
fn activation_clip_rate(x: &Matrix, v: Mxfp4Variant) -> msd_core::Result<f64> {
    let mut rep = BoundReport::default();
    for blk in x.data.chunks(BLOCK) {
        rep.add(blk, &mxfp4_decompose_block(blk, v)?);
    }
    Ok(rep.clip_rate())
}

fn run_mx_gemm(cfg: &ExperimentConfig, table: &str, methods: &[MxActivationMethod], with_design: bool) -> ResultSet {
    let mut col = Collector::default();
    let base = root(cfg, "mx_gemm");
    for t in 0..cfg.trials {
        for &n in &cfg.sizes {
            for dist in &cfg.distributions {
                let s = base.child(&format!("{n}/{}", dist.label())).trial(t);
                let inputs = gen_activation_fp32(cfg.batch, n, dist, s.child("x")).and_then(|x| {
                    let wf = gen_activation_fp32(n, n, &cfg.weight_distribution, s.child("w"))?;
                    let w = mxfp4_quantize_weight(&wf)?;
                    let y = gemm_mx_reference(&x, &w)?;
                    Ok((x, w, y))
                });
                let (x, w, yref) = match inputs {
                    Ok(v) => v,
                    Err(e) => {
                        col.trial_error(t, e);
                        continue;
                    }
                };
                for &m in methods {
                    let mut p = params! {"size" => n, "distribution" => dist.label(), "batch" => cfg.batch};
                    if with_design {
                        p.extend(design_params(m));
                    }
                    let name = m.kind().name();
                    let res = gemm_mxfp4(&x, &w, m).and_then(|y| {
                        let r = error_report(&y.data, &yref.data)?;
                        let mut mets = report_metrics(&r);
                        if with_design {
                            let clip = match m {
                                MxActivationMethod::Msd(v) => activation_clip_rate(&x, v)?,
                                MxActivationMethod::Mxfp8 => 0.0,
                            };
                            mets.push(("clip_rate", Agg::Mean, clip));
                        }
                        Ok(mets)
                    });
                    match res {
                        Ok(mets) => col.observe(table, &name, &p, t, &mets),
                        Err(e) => col.error(table, &name, &p, t, e),
                    }
                }
            }
        }
    }
    col.finish(cfg)
}

fn design_params(m: MxActivationMethod) -> Params {
    match m {
        MxActivationMethod::Msd(v) => params! {
            "alpha_bound" => v.primary_bound(),
            "beta" => format!("alpha/{}", 1u32 << v.beta_shift()),
        },
        MxActivationMethod::Mxfp8 => params! {"alpha_bound" => "-", "beta" => "-"},
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct VecStats {
    vectors: u64,
    elements: u64,
    zero_vectors: u64,
    max_ratio: f64,
    violations: u64,
}

impl VecStats {
    fn merge(&mut self, o: &VecStats) {
        self.vectors += o.vectors;
        self.elements += o.elements;
        self.zero_vectors += o.zero_vectors;
        self.max_ratio = self.max_ratio.max(o.max_ratio);
        self.violations += o.violations;
    }
}

/// Per-worker state for the INT8 bound sweep. Sums and maxima merge in any
/// order, and the reported failure is the lowest vector index.
struct BoundAcc {
    stats: Vec<[VecStats; 2]>,
    failed: Option<(u64, String)>,
}

impl BoundAcc {
    fn merge(mut self, o: BoundAcc) -> BoundAcc {
        for (a, b) in self.stats.iter_mut().zip(&o.stats) {
            a[0].merge(&b[0]);
            a[1].merge(&b[1]);
        }
        self.failed = match (self.failed, o.failed) {
            (Some(a), Some(b)) => Some(if a.0 <= b.0 { a } else { b }),
            (a, b) => a.or(b),
        };
        self
    }
}

/// Worst INT8 reconstruction error relative to `bound_fraction * max|x|`,
/// using the exact binary64 reconstruction.
fn int8_bound_ratio(x: &[f32], mode: ScaleMode, st: &mut VecStats) -> msd_core::Result<()> {
    let m = abs_max(x)? as f64;
    if m == 0.0 {
        st.zero_vectors += 1;
        return Ok(());
    }
    let d = decompose2(x, mode)?;
    let (a, b) = (d.alpha as f64, d.beta as f64);
    let bound = m * mode.bound_fraction();
    let mut worst = 0f64;
    let mut viol = 0u64;
    for ((&v, &c1), &c2) in x.iter().zip(&d.x1).zip(&d.x2) {
        let e = (v as f64 - (a * c1 as f64 + b * c2 as f64)).abs();
        worst = worst.max(e);
        viol += (e > bound) as u64;
    }
    st.vectors += 1;
    st.elements += x.len() as u64;
    st.max_ratio = st.max_ratio.max(worst / bound);
    st.violations += viol;
    Ok(())
}

fn run_bounds(cfg: &ExperimentConfig) -> ResultSet {
    let b = &cfg.bounds;
    let mut col = Collector::default();
    let modes = [ScaleMode::Standard, ScaleMode::Fractional];
    for t in 0..cfg.trials {
        if b.int8_vectors > 0 {
            let s = root(cfg, "int8_bound").trial(t);
            let nd = b.int8_distributions.len() as u64;
            let nl = b.int8_lengths.len() as u64;
            let one = |i: u64, acc: &mut BoundAcc| {
                let di = (i % nd) as usize;
                let len = b.int8_lengths[((i / nd) % nl) as usize];
                let r = gen_activation_fp32(1, len, &b.int8_distributions[di], s.child("v").trial(i)).and_then(|x| {
                    for (k, &mode) in modes.iter().enumerate() {
                        int8_bound_ratio(&x.data, mode, &mut acc.stats[di][k])?;
                    }
                    Ok(())
                });
                if let Err(e) = r {
                    if acc.failed.as_ref().is_none_or(|(j, _)| i < *j) {
                        acc.failed = Some((i, e.to_string()));
                    }
                }
            };
            let empty = || BoundAcc { stats: vec![[VecStats::default(); 2]; nd as usize], failed: None };
            let acc = (0..b.int8_vectors)
                .into_par_iter()
                .fold(empty, |mut acc, i| {
                    one(i, &mut acc);
                    acc
                })
                .reduce(empty, BoundAcc::merge);
            let stats = acc.stats;
            if let Some((i, e)) = acc.failed {
                col.trial_error(t, format!("vector {i}: {e}"));
            }
            for (dist, st) in b.int8_distributions.iter().zip(&stats) {
                for (k, mode) in modes.iter().enumerate() {
                    let name = match mode {
                        ScaleMode::Standard => GemmPipelineKind::MsdInt8.name(),
                        ScaleMode::Fractional => GemmPipelineKind::MsdInt8Fractional.name(),
                    };
                    let s = st[k];
                    col.observe(
                        "theorem1",
                        &name,
                        &params! {"distribution" => dist.label()},
                        t,
                        &[
                            ("vectors", Agg::Sum, s.vectors as f64),
                            ("elements", Agg::Sum, s.elements as f64),
                            ("zero_vectors", Agg::Sum, s.zero_vectors as f64),
                            ("bound", Agg::Max, mode.bound_fraction()),
                            ("max_ratio", Agg::Max, s.max_ratio),
                            ("violations", Agg::Sum, s.violations as f64),
                        ],
                    );
                }
            }
        }
        if b.blocks_per_distribution > 0 {
            let variant = Mxfp4Variant::V3;
            let name = GemmPipelineKind::MsdMxfp4(variant).name();
            for dist in &cfg.distributions {
                let p = params! {"distribution" => dist.label()};
                let s = root(cfg, "block_bound").child(&dist.label()).trial(t);
                let per_row = 1024 / BLOCK;
                let rows = (b.blocks_per_distribution as usize).div_ceil(per_row);
                let res = gen_activation_fp32(rows, per_row * BLOCK, dist, s).and_then(|x| {
                    let mut rep = BoundReport::default();
                    for blk in x.data.chunks(BLOCK).take(b.blocks_per_distribution as usize) {
                        rep.add(blk, &mxfp4_decompose_block(blk, variant)?);
                    }
                    Ok(rep)
                });
                match res {
                    Ok(rep) => col.observe(
                        "table12",
                        &name,
                        &p,
                        t,
                        &[
                            ("blocks", Agg::Sum, rep.blocks as f64),
                            ("max_ratio", Agg::Max, rep.max_ratio),
                            ("violations", Agg::Sum, rep.violations as f64),
                            ("clip_rate", Agg::Mean, rep.clip_rate()),
                            ("eff_bits", Agg::Mean, rep.eff_bits()),
                            ("max_pass1_ratio", Agg::Max, rep.max_pass1_ratio),
                        ],
                    ),
                    Err(e) => col.error("table12", &name, &p, t, e),
                }
            }
        }
    }
    col.finish(cfg)
}

fn run_cost(cfg: &ExperimentConfig) -> Result<ResultSet> {
    let c = &cfg.cost;
    let mut col = Collector::default();
    let one = |col: &mut Collector, table: &str, method: &str, p: &Params, mets: &[(&str, f64)]| {
        let m: Vec<(&str, Agg, f64)> = mets.iter().map(|&(k, v)| (k, Agg::Max, v)).collect();
        col.observe(table, method, p, 0, &m);
    };

    for &n in &c.queries {
        let inp = AttnCostInput { n, m: c.kv_len, d: c.head_dim, bc: c.block_size };
        let deq = attn_vector_ops(&inp, CostMethod::Dequant)? as f64;
        let msd = attn_vector_ops(&inp, CostMethod::Msd)? as f64;
        let p = params! {"n" => n, "m" => c.kv_len, "d" => c.head_dim, "bc" => c.block_size};
        one(&mut col, "table4", "dequant", &p, &[("vector_ops", deq), ("vector_ops_m", round_to(deq, 1e6))]);
        one(
            &mut col,
            "table4",
            "msd",
            &p,
            &[
                ("vector_ops", msd),
                ("vector_ops_m", round_to(msd, 1e6)),
                ("ratio_vs_dequant", deq / msd),
                ("ratio_rounded", round_to(deq / msd, 1.0)),
            ],
        );
    }

    for &d in &c.crossover_dims {
        for &n in &c.crossover_queries {
            let inp = AttnCostInput { n, m: c.kv_len, d, bc: c.block_size };
            let r = attn_vector_ops(&inp, CostMethod::Dequant)? as f64 / attn_vector_ops(&inp, CostMethod::Msd)? as f64;
            one(&mut col, "crossover_d", &format!("d{d}"), &params! {"n" => n}, &[("ratio", r)]);
        }
    }
    for &d in &c.crossover_dims {
        let cr = attn_crossover(&AttnCostInput { n: 1, m: c.kv_len, d, bc: c.block_size })?;
        let p = params! {"d" => d, "m" => c.kv_len, "bc" => c.block_size};
        one(&mut col, "crossover", "crossover", &p, &[("approx", cr.approx), ("exact", cr.exact)]);
    }

    let p = params! {"m" => c.kv_len, "d" => c.head_dim};
    let deq = attn_hbm_traffic(c.kv_len, c.head_dim, CostMethod::Dequant) as f64;
    let msd = attn_hbm_traffic(c.kv_len, c.head_dim, CostMethod::Msd) as f64;
    one(&mut col, "hbm_attention", "dequant", &p, &[("bytes", deq), ("ratio_vs_dequant", 1.0)]);
    one(&mut col, "hbm_attention", "msd", &p, &[("bytes", msd), ("ratio_vs_dequant", deq / msd)]);

    let lin = LinearCostInput { b: c.linear_batch, m: c.linear_rows, n: c.linear_cols };
    let p = params! {"b" => lin.b, "m" => lin.m, "n" => lin.n};
    for (name, method) in [
        ("dequant", LinearTrafficMethod::Dequant),
        ("msd_resident", LinearTrafficMethod::MsdResident),
        ("msd_conservative", LinearTrafficMethod::MsdConservative),
        ("bf16", LinearTrafficMethod::Bf16),
    ] {
        let r = linear_hbm_traffic(&lin, method);
        one(
            &mut col,
            "hbm_linear",
            name,
            &p,
            &[
                ("bytes", r.bytes as f64),
                ("weight_coeff", r.weight_coeff as f64),
                ("ratio_vs_dequant", r.ratio_vs_dequant),
                ("dominant_ratio_vs_dequant", r.dominant_ratio_vs_dequant),
            ],
        );
    }

    let prof = ThroughputProfile::default();
    for (name, method) in [
        ("dequant", LatencyMethod::Dequant),
        ("msd_int8", LatencyMethod::MsdInt8),
        ("msd_mxfp4", LatencyMethod::MsdMxfp4),
        ("fp8_baseline", LatencyMethod::Fp8Baseline),
    ] {
        let l = linear_latency(&lin, &prof, method);
        one(
            &mut col,
            "latency",
            name,
            &p,
            &[("t_vector", l.t_vector), ("t_cube", l.t_cube), ("t_total", l.t_total)],
        );
    }
    Ok(col.finish(cfg))
}

/// Distributions of the MXFP4 bound table.
pub fn block_bound_distributions() -> Vec<DistributionSpec> {
    use DistributionSpec::*;
    vec![
        Gaussian { mean: 0.0, std: 0.5 },
        Gaussian { mean: 0.0, std: 1.0 },
        Uniform { low: -1.0, high: 1.0 },
        Uniform { low: -3.0, high: 3.0 },
        Laplacian { loc: 0.0, scale: 1.0 },
        StudentT { df: 3.0 },
        Cauchy,
    ]
}

/// Bound verification with `samples` INT8 vectors and `samples` MXFP4 blocks
/// per distribution.
pub fn verify_bounds_config(samples: u64, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(ExperimentKind::BoundVerify);
    cfg.seed = seed;
    cfg.trials = 1;
    cfg.distributions = block_bound_distributions();
    cfg.bounds.int8_vectors = samples;
    cfg.bounds.blocks_per_distribution = samples;
    cfg
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(kind: ExperimentKind) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(kind);
        cfg.trials = 2;
        cfg.sizes = vec![64];
        cfg.batch = 4;
        cfg.distributions = vec![DistributionSpec::standard_normal()];
        cfg
    }

    #[test]
    fn int8_gemm_records() {
        let set = run_experiment(&small(ExperimentKind::Ablation), &RunOptions::default()).unwrap();
        let methods: Vec<&str> = set.records.iter().map(|r| r.method.as_str()).collect();
        assert_eq!(methods, ["single_scale", "dequant", "msd"]);
        assert!(!set.has_errors());
        let msd = set.metric("table6", "msd", &[], "l2_rel").unwrap();
        let deq = set.metric("table6", "dequant", &[], "l2_rel").unwrap();
        assert!(msd < deq / 10.0);
    }

    #[test]
    fn same_size_point_shared_across_tables() {
        let a = run_experiment(&small(ExperimentKind::GemmInt8), &RunOptions::default()).unwrap();
        let b = run_experiment(&small(ExperimentKind::Ablation), &RunOptions::default()).unwrap();
        assert_eq!(
            a.metric("table5", "msd", &[], "l2_rel"),
            b.metric("table6", "msd", &[], "l2_rel")
        );
    }

    #[test]
    fn flash_small() {
        let mut cfg = ExperimentConfig::new(ExperimentKind::FlashAttention);
        cfg.trials = 1;
        cfg.attention.seq_lens = vec![64, 128];
        cfg.attention.block_sizes = vec![32, 64];
        cfg.attention.queries = 8;
        cfg.attention.head_dim = 16;
        let set = run_experiment(&cfg, &RunOptions::default()).unwrap();
        assert_eq!(set.table("table8").count(), 4);
        assert_eq!(set.table("fig3b").filter(|r| r.method == "flash_msd").count(), 2);
        let r = set.find("table8", "flash_msd", &[]).unwrap();
        assert_eq!(r.metric("p_scale_reductions"), Some(0.0));
        assert_eq!(r.metric("unit_p_max_rows"), Some(1.0));
    }

    #[test]
    fn bounds_small() {
        let mut cfg = verify_bounds_config(700, 3);
        cfg.bounds.int8_lengths = vec![32, 33];
        let set = run_experiment(&cfg, &RunOptions::default()).unwrap();
        assert!(!set.has_errors());
        for r in set.records.iter() {
            assert_eq!(r.metric("violations"), Some(0.0), "{r:?}");
        }
        let total: f64 = set.table("theorem1").filter(|r| r.method == "msd").map(|r| r.metric("vectors").unwrap()).sum();
        assert_eq!(total, 700.0);
    }

    #[test]
    fn cost_table4_integers() {
        let set = run_experiment(&ExperimentConfig::new(ExperimentKind::CostTables), &RunOptions::default()).unwrap();
        let f = [("n", serde_json::json!(1))];
        assert_eq!(set.metric("table4", "dequant", &f, "vector_ops"), Some(4_276_224.0));
        assert_eq!(set.metric("table4", "msd", &f, "vector_ops"), Some(213_760.0));
    }

    #[test]
    fn timing_is_opt_in() {
        let cfg = ExperimentConfig::new(ExperimentKind::CostTables);
        let plain = run_experiment(&cfg, &RunOptions::default()).unwrap();
        assert!(plain.records.iter().all(|r| r.wall_time_s.is_none()));
        let timed = run_experiment(&cfg, &RunOptions { timing: true, ..Default::default() }).unwrap();
        assert!(timed.records.iter().all(|r| r.wall_time_s.is_some()));
    }
}
