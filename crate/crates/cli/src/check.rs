//! Acceptance bands for the reproduction suite.

use msd_core::attention_sim::attention_flash_msd;
use msd_core::datagen::{gen_activation_fp32, gen_int8_weight, gen_kv_cache, DistributionSpec, ExperimentSeed};
use msd_core::gemm_sim::{msd_int8_fused, msd_int8_passes, msd_reconstruct};
use msd_core::metrics::THRESHOLDS;
use msd_core::msd_int8::{decompose2_counted, ScaleMode};
use msd_core::mx_formats::{mxfp4_decompose_block_counted, Mxfp4Variant, BLOCK};
use msd_core::numerics::OpCounter;
use serde_json::json;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::experiments::{run_experiment, RunOptions};
use crate::record::{ResultRecord, ResultSet};
use crate::report::{to_csv, to_json};

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub id: &'static str,
    pub name: &'static str,
    pub pass: bool,
    /// Reported but not counted towards the exit status.
    pub optional: bool,
    pub detail: String,
}

impl Outcome {
    pub fn line(&self) -> String {
        format!(
            "criterion {:<3} {}{}: {} | {}",
            self.id,
            if self.pass { "PASS" } else { "FAIL" },
            if self.optional { " (optional)" } else { "" },
            self.name,
            self.detail
        )
    }
}

/// Collects the failing sub-checks of one criterion.
struct Probe {
    notes: Vec<String>,
    failures: Vec<String>,
}

impl Probe {
    fn new() -> Self {
        Self { notes: Vec::new(), failures: Vec::new() }
    }

    fn check(&mut self, ok: bool, what: String) {
        if ok {
            self.notes.push(what);
        } else {
            self.failures.push(what);
        }
    }

    fn need(&mut self, v: Option<f64>, what: &str) -> f64 {
        match v {
            Some(v) => v,
            None => {
                self.failures.push(format!("missing {what}"));
                f64::NAN
            }
        }
    }

    fn done(self, id: &'static str, name: &'static str) -> Outcome {
        let pass = self.failures.is_empty();
        let detail = if pass { self.notes.join("; ") } else { format!("FAILED: {}", self.failures.join("; ")) };
        Outcome { id, name, pass, optional: false, detail }
    }
}

fn within(v: f64, lo: f64, hi: f64) -> bool {
    v >= lo && v <= hi
}

fn near(v: f64, target: f64, tol: f64) -> bool {
    (v - target).abs() <= tol
}

fn find(sets: &[ResultSet], kind: ExperimentKind) -> Option<&ResultSet> {
    sets.iter().find(|s| s.config.experiment == kind)
}

fn by_dist(label: &str) -> [(&'static str, serde_json::Value); 1] {
    [("distribution", json!(label))]
}

pub fn theorem1(set: &ResultSet) -> Outcome {
    let mut p = Probe::new();
    let rows: Vec<&ResultRecord> = set.table("theorem1").collect();
    let vectors: f64 = rows.iter().filter(|r| r.method == "msd").filter_map(|r| r.metric("vectors")).sum();
    let want = [32usize, 257, 1024, 4096];
    p.check(
        want.iter().all(|l| set.config.bounds.int8_lengths.contains(l)),
        format!("lengths {:?}", set.config.bounds.int8_lengths),
    );
    p.check(vectors >= 1e6, format!("{vectors} vectors"));
    for method in ["msd", "msd_fractional"] {
        let mine: Vec<&&ResultRecord> = rows.iter().filter(|r| r.method == method).collect();
        let viol: f64 = mine.iter().filter_map(|r| r.metric("violations")).sum();
        let worst = mine.iter().filter_map(|r| r.metric("max_ratio")).fold(0f64, f64::max);
        let bound = mine.iter().filter_map(|r| r.metric("bound")).fold(0f64, f64::max);
        p.check(
            !mine.is_empty() && viol == 0.0 && worst <= 1.0,
            format!("{method}: max err = {worst:.10} x (|x|/{:.1}), {viol} violations", 1.0 / bound),
        );
    }
    p.done("1", "INT8 two-scale reconstruction bound")
}

pub fn theorem2(set: &ResultSet) -> Outcome {
    let mut p = Probe::new();
    let rows: Vec<&ResultRecord> = set.table("table12").collect();
    p.check(!rows.is_empty(), format!("{} distributions", rows.len()));
    let mut tight = 0f64;
    for r in &rows {
        let d = r.param("distribution").unwrap_or_default();
        let blocks = p.need(r.metric("blocks"), "blocks");
        let viol = p.need(r.metric("violations"), "violations");
        let ratio = p.need(r.metric("max_ratio"), "max_ratio");
        let clip = p.need(r.metric("clip_rate"), "clip_rate");
        tight = tight.max(ratio);
        p.check(blocks >= 1e5, format!("{d}: {blocks} blocks"));
        p.check(viol == 0.0 && ratio <= 1.0, format!("{d}: max ratio {ratio:.4}, {viol} violations"));
        p.check(within(clip, 0.10, 0.14), format!("{d}: clip {:.2}% in [10%, 14%]", clip * 100.0));
    }
    p.check(tight >= 0.99, format!("tightest ratio {tight:.4} >= 0.99"));
    p.done("2", "MXFP4 alpha/64 bound, tightness and clip rate")
}

pub fn table5(set: &ResultSet) -> Outcome {
    let mut p = Probe::new();
    let t = "table5";
    let deq = p.need(set.metric(t, "dequant", &[], "l2_rel"), "dequant l2");
    let msd = p.need(set.metric(t, "msd", &[], "l2_rel"), "msd l2");
    let deq_ex = p.need(set.metric(t, "dequant", &[], "gt_0_1pct"), "dequant >0.1%");
    let msd_ex = p.need(set.metric(t, "msd", &[], "gt_0_1pct"), "msd >0.1%");
    p.check(set.config.sizes.contains(&4096), format!("sizes {:?}", set.config.sizes));
    p.check(within(deq, 0.004, 0.009), format!("dequant L2 {:.3}% in [0.40%, 0.90%]", deq * 100.0));
    p.check(msd <= 1e-4, format!("msd L2 {:.4}% <= 0.010%", msd * 100.0));
    p.check(deq / msd >= 100.0, format!("ratio {:.0}x >= 100x", deq / msd));
    p.check(msd_ex <= 0.05, format!("msd >0.1% {:.2}% <= 5%", msd_ex * 100.0));
    p.check(deq_ex >= 0.85, format!("dequant >0.1% {:.1}% >= 85%", deq_ex * 100.0));
    p.done("3", "4096^2 GEMM error distribution")
}

pub fn table6(set: &ResultSet) -> Outcome {
    let mut p = Probe::new();
    let t = "table6";
    let k1 = p.need(set.metric(t, "single_scale", &[], "l2_rel"), "single-scale l2");
    let deq = p.need(set.metric(t, "dequant", &[], "l2_rel"), "dequant l2");
    let k2 = p.need(set.metric(t, "msd", &[], "l2_rel"), "msd l2");
    p.check(within(k1 / deq, 0.5, 2.0), format!("K=1/dequant {:.2} within 2x", k1 / deq));
    p.check(k1 / k2 >= 100.0, format!("K=1/K=2 {:.0}x >= 100x", k1 / k2));
    p.done("4", "decomposition depth ablation")
}

pub fn table7(set: &ResultSet) -> Outcome {
    let mut p = Probe::new();
    let mut sizes = set.config.sizes.clone();
    sizes.sort_unstable();
    let mut prev: Option<f64> = None;
    for &n in &sizes {
        let f = [("size", json!(n))];
        let deq = p.need(set.metric("table7", "dequant", &f, "l2_rel"), "dequant l2");
        let msd = p.need(set.metric("table7", "msd", &f, "l2_rel"), "msd l2");
        p.check(deq / msd >= 100.0, format!("{n}: {:.0}x", deq / msd));
        if let Some(pv) = prev {
            p.check(msd <= 1.5 * pv, format!("{n}: msd {:.4}% vs {:.4}% (+50% slack)", msd * 100.0, pv * 100.0));
        }
        prev = Some(msd);
    }
    p.check(sizes == [512, 1024, 2048, 4096], format!("sizes {sizes:?}"));
    p.done("5", "GEMM size sweep")
}

/// Desk band at seq 4096 plus, when the 16384 row exists, the optional
/// full-scale targets.
pub fn table8(set: &ResultSet) -> Vec<Outcome> {
    let mut p = Probe::new();
    let f = [("seq_len", json!(4096)), ("block_size", json!(64))];
    let t = "fig3a";
    let deq = p.need(set.metric(t, "dequant", &f, "l2_rel"), "dequant l2 at 4096");
    let flash = p.need(set.metric(t, "flash_dequant", &f, "l2_rel"), "flash l2 at 4096");
    let msd = p.need(set.metric(t, "flash_msd", &f, "l2_rel"), "flash_msd l2 at 4096");
    p.check(set.config.attention.head_dim == 64, format!("d = {}", set.config.attention.head_dim));
    p.check(msd <= 0.5 * flash, format!("flash_msd/flash {:.3} <= 0.5", msd / flash));
    p.check(within(flash, 0.007, 0.025), format!("flash L2 {:.2}% in [0.7%, 2.5%]", flash * 100.0));
    p.check((flash - deq).abs() <= 0.15 * deq, format!("flash vs monolithic {:+.1}%", (flash / deq - 1.0) * 100.0));
    if let Some(bf) = set.metric(t, "flash_msd_bf16q", &f, "l2_rel") {
        p.notes.push(format!("bf16-Q flash_msd/flash {:.3}", bf / flash));
    }
    let mut out = vec![p.done("6", "flash attention, seq 4096")];

    let g = [("seq_len", json!(16384)), ("block_size", json!(64))];
    if let Some(deq) = set.metric("fig3a", "dequant", &g, "l2_rel") {
        let mut p = Probe::new();
        let flash = p.need(set.metric("fig3a", "flash_dequant", &g, "l2_rel"), "flash l2 at 16384");
        let msd = p.need(set.metric("fig3a", "flash_msd", &g, "l2_rel"), "flash_msd l2 at 16384");
        for (name, v, target) in [("dequant", deq, 0.0141), ("flash", flash, 0.0138), ("flash_msd", msd, 0.0049)] {
            p.check(near(v, target, 0.3 * target), format!("{name} {:.2}% vs {:.2}% +-30%", v * 100.0, target * 100.0));
        }
        if let Some(bf) = set.metric("fig3a", "flash_msd_bf16q", &g, "l2_rel") {
            p.check(near(bf, 0.0049, 0.3 * 0.0049), format!("flash_msd_bf16q {:.2}% vs 0.49% +-30%", bf * 100.0));
        }
        let mut o = p.done("6F", "flash attention, seq 16384 targets");
        o.optional = true;
        out.push(o);
    }
    out
}

pub fn table9(set: &ResultSet) -> Outcome {
    let mut p = Probe::new();
    let t = "table9";
    let (msd, fp8) = ("msd_mxfp4_v3", "mxfp8");
    let ratio = |p: &mut Probe, d: &str| {
        let a = p.need(set.metric(t, fp8, &by_dist(d), "l2_rel"), "mxfp8 l2");
        let b = p.need(set.metric(t, msd, &by_dist(d), "l2_rel"), "msd l2");
        a / b
    };
    let eb_msd = p.need(set.metric(t, msd, &by_dist("N(0,1)"), "eff_bits"), "N(0,1) msd bits");
    let eb_fp8 = p.need(set.metric(t, fp8, &by_dist("N(0,1)"), "eff_bits"), "N(0,1) mxfp8 bits");
    p.check(near(eb_msd, 6.62, 0.15), format!("N(0,1) msd {eb_msd:.2} bits"));
    p.check(near(eb_fp8, 5.24, 0.10), format!("N(0,1) mxfp8 {eb_fp8:.2} bits"));
    for (d, lo, hi) in [("N(0,1)", 2.2, 3.0), ("U(-3,3)", 3.6, 5.4), ("t(df=3)", 1.4, 2.1)] {
        let r = ratio(&mut p, d);
        p.check(within(r, lo, hi), format!("{d} ratio {r:.2}x in [{lo}, {hi}]"));
    }
    p.done("7", "MXFP4 activation decomposition vs MXFP8")
}

pub fn table10_11(gemm: &ResultSet, sweep: &ResultSet) -> Outcome {
    let mut p = Probe::new();
    let f = by_dist("N(0,0.5)");
    let f2 = [f[0].clone(), ("size", json!(2048))];
    let msd = p.need(gemm.metric("table10", "msd_mxfp4_v3", &f2, "l2_rel"), "msd l2");
    let fp8 = p.need(gemm.metric("table10", "mxfp8", &f2, "l2_rel"), "mxfp8 l2");
    p.check(near(msd, 0.0109, 0.2 * 0.0109), format!("msd L2 {msd:.4}"));
    p.check(near(fp8, 0.0266, 0.2 * 0.0266), format!("mxfp8 L2 {fp8:.4}"));
    p.check(near(fp8 / msd, 2.44, 0.3), format!("ratio {:.2}x", fp8 / msd));
    let ratios: Vec<f64> = sweep
        .table("table11")
        .filter(|r| r.method == "mxfp8")
        .filter_map(|r| {
            let s = r.params.get("size")?.clone();
            let m = sweep.metric("table11", "msd_mxfp4_v3", &[("size", s)], "l2_rel")?;
            Some(r.metric("l2_rel")? / m)
        })
        .collect();
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    p.check(ratios.len() >= 5, format!("{} sizes", ratios.len()));
    p.check(hi - lo <= 0.15, format!("size sweep ratios {lo:.2}x..{hi:.2}x, spread {:.3}", hi - lo));
    p.done("8", "MXFP4 GEMM accuracy and size stability")
}

pub fn table1(set: &ResultSet) -> Outcome {
    let mut p = Probe::new();
    let mut prev = f64::NEG_INFINITY;
    for (v, target) in [("v1", 5.79), ("v2", 6.55), ("v3", 6.65)] {
        let b = p.need(set.metric("table1", &format!("msd_mxfp4_{v}"), &[], "eff_bits"), "eff bits");
        p.check(near(b, target, 0.15), format!("{v} {b:.2} bits vs {target}"));
        p.check(b > prev, format!("{v} above previous"));
        prev = b;
    }
    p.done("9", "MXFP4 design evolution")
}

pub fn cost_exact(set: &ResultSet) -> Outcome {
    let mut p = Probe::new();
    let expect = [(1u64, 4.3, 0.2, 20.0), (4, 4.5, 0.9, 5.3), (12, 5.2, 2.6, 2.0), (24, 6.2, 5.1, 1.2), (32, 6.8, 6.8, 1.0)];
    for (n, d, m, r) in expect {
        let f = [("n", json!(n))];
        let gd = p.need(set.metric("table4", "dequant", &f, "vector_ops_m"), "dequant ops");
        let gm = p.need(set.metric("table4", "msd", &f, "vector_ops_m"), "msd ops");
        let gr = p.need(set.metric("table4", "msd", &f, "ratio_rounded"), "ratio");
        p.check(gd == d && gm == m && gr == r, format!("N={n}: ({gd}, {gm}, {gr}x)"));
    }
    let f = [("n", json!(1))];
    let d1 = p.need(set.metric("table4", "dequant", &f, "vector_ops"), "N=1 dequant");
    let m1 = p.need(set.metric("table4", "msd", &f, "vector_ops"), "N=1 msd");
    p.check(d1 == 4_276_224.0 && m1 == 213_760.0, format!("N=1 exact {d1} / {m1}"));
    let cross = |p: &mut Probe, d: u64, k: &str| {
        let v = p.need(set.metric("crossover", "crossover", &[("d", json!(d))], k), "crossover");
        (v * 10.0).round() / 10.0
    };
    let (a128, a576, e128) = (cross(&mut p, 128, "approx"), cross(&mut p, 576, "approx"), cross(&mut p, 128, "exact"));
    p.check(a128 == 19.7 && a576 == 30.7 && e128 == 31.8, format!("crossover {a128} / {a576}, exact {e128}"));
    p.done("10", "attention vector-op cost model")
}

pub fn hbm_latency(set: &ResultSet) -> Outcome {
    let mut p = Probe::new();
    let a = p.need(set.metric("hbm_attention", "msd", &[], "ratio_vs_dequant"), "attention ratio");
    p.check(a == 2.5, format!("attention {a}x"));
    let c = &set.config.cost;
    p.check(
        (c.linear_batch, c.linear_rows, c.linear_cols) == (8, 4096, 4096),
        format!("b={}, m={}, n={}", c.linear_batch, c.linear_rows, c.linear_cols),
    );
    for (m, target) in [("msd_resident", 3.0), ("msd_conservative", 1.5)] {
        let dom = p.need(set.metric("hbm_linear", m, &[], "dominant_ratio_vs_dequant"), "dominant ratio");
        let full = p.need(set.metric("hbm_linear", m, &[], "ratio_vs_dequant"), "ratio");
        p.check(dom == target, format!("{m} dominant {dom}x"));
        p.check(near(full, target, 0.05 * target), format!("{m} total {full:.3}x"));
    }
    let cube = |p: &mut Probe, m: &str| p.need(set.metric("latency", m, &[], "t_cube"), "t_cube");
    let (deq, i8c, fp4, fp8) = (cube(&mut p, "dequant"), cube(&mut p, "msd_int8"), cube(&mut p, "msd_mxfp4"), cube(&mut p, "fp8_baseline"));
    p.check(deq == i8c, format!("T_cube dequant {deq:e} == msd_int8 {i8c:e}"));
    p.check(fp4 == fp8, format!("T_cube msd_mxfp4 {fp4:e} == fp8 {fp8:e}"));
    p.done("11", "HBM traffic and latency identities")
}

/// Structural properties plus byte-identical reruns of `cfgs`.
pub fn structural(sets: &[ResultSet], cfgs: &[ExperimentConfig]) -> Outcome {
    let mut p = Probe::new();
    let seed = ExperimentSeed::new(99, 0);

    let x = gen_activation_fp32(4, 96, &DistributionSpec::standard_normal(), seed.child("x"));
    let w = gen_int8_weight(24, 96, seed.child("w"));
    match (x, w) {
        (Ok(x), Ok(w)) => {
            let mut o1 = OpCounter::default();
            let mut o2 = OpCounter::default();
            match (msd_int8_passes(&x, &w, ScaleMode::Standard, &mut o1), msd_int8_fused(&x, &w, ScaleMode::Standard, &mut o2)) {
                (Ok(a), Ok(b)) => {
                    let (ya, yb) = (msd_reconstruct(&a, &w), msd_reconstruct(&b, &w));
                    let same = a.y1 == b.y1
                        && a.y2 == b.y2
                        && ya.data.iter().zip(&yb.data).all(|(u, v)| u.to_bits() == v.to_bits());
                    p.check(same, "fused and two-pass GEMM bit-identical".into());
                }
                _ => p.check(false, "GEMM pass fusion failed to run".into()),
            }
        }
        _ => p.check(false, "structural inputs".into()),
    }

    let (n, m, d, bc) = (16, 256, 32, 64);
    let q = gen_activation_fp32(n, d, &DistributionSpec::standard_normal(), seed.child("q"));
    let kv = gen_kv_cache(m, d, seed.child("kv"));
    match (q, kv) {
        (Ok(q), Ok((k, v))) => match attention_flash_msd(&q, &k, &v, bc) {
            Ok((_, st)) => {
                let tiles = (n * m / bc) as u64;
                p.check(
                    st.p_scale_reductions == 0 && st.residual_max_reductions == 0 && st.p_constant_decompositions == tiles,
                    format!("P: {} constant-scale tile decompositions, {} max reductions", st.p_constant_decompositions, st.p_scale_reductions),
                );
                p.check(
                    st.rows_with_unit_p_max == n as u64 && st.p_max == 1.0,
                    format!("row max of P == 1 in {}/{n} rows", st.rows_with_unit_p_max),
                );
            }
            Err(e) => p.check(false, format!("attention: {e}")),
        },
        _ => p.check(false, "attention inputs".into()),
    }

    let mut ops = OpCounter::default();
    let mut mx = OpCounter::default();
    let mut ok = true;
    if let Ok(x) = gen_activation_fp32(64, 256, &DistributionSpec::standard_normal(), seed.child("beta")) {
        for row in x.data.chunks(256) {
            ok &= decompose2_counted(row, ScaleMode::Standard, &mut ops).is_ok();
        }
        for blk in x.data.chunks(BLOCK) {
            ok &= mxfp4_decompose_block_counted(blk, Mxfp4Variant::V3, &mut mx).is_ok();
        }
    } else {
        ok = false;
    }
    p.check(
        ok && ops.residual_max_reductions == 0
            && ops.scale_max_reductions == 64
            && mx.residual_max_reductions == 0
            && mx.scale_max_reductions == 64 * 256 / BLOCK as u64,
        format!("beta from alpha: residual max reductions int8={} mxfp4={}", ops.residual_max_reductions, mx.residual_max_reductions),
    );

    let mut checked = 0;
    let mut monotone = true;
    for r in sets.iter().flat_map(|s| s.records.iter()) {
        let ex: Option<Vec<f64>> = ["gt_0_1pct", "gt_0_5pct", "gt_1pct", "gt_5pct"].iter().map(|k| r.metric(k)).collect();
        if let Some(ex) = ex {
            checked += 1;
            monotone &= ex.windows(2).all(|w| w[0] >= w[1]);
        }
    }
    p.check(
        monotone && THRESHOLDS.windows(2).all(|w| w[0] < w[1]),
        format!("exceedance monotone over {checked} records"),
    );

    for cfg in cfgs {
        let run = || -> crate::error::Result<(String, String)> {
            let s = run_experiment(cfg, &RunOptions::default())?;
            Ok((to_json(&s)?, to_csv(&s.records)?))
        };
        match (run(), run()) {
            (Ok(a), Ok(b)) => p.check(a == b, format!("{} rerun byte-identical", cfg.experiment.name())),
            _ => p.check(false, format!("{} rerun failed", cfg.experiment.name())),
        }
    }
    p.done("12", "structural and determinism suite")
}

/// Small configs used for the determinism rerun.
pub fn determinism_configs() -> Vec<ExperimentConfig> {
    let mut gemm = ExperimentConfig::new(ExperimentKind::Ablation);
    gemm.sizes = vec![128];
    gemm.trials = 2;
    gemm.distributions = vec![DistributionSpec::standard_normal(), DistributionSpec::Cauchy];
    let mut flash = ExperimentConfig::new(ExperimentKind::FlashAttention);
    flash.trials = 1;
    flash.attention.seq_lens = vec![128];
    flash.attention.block_sizes = vec![32];
    flash.attention.queries = 8;
    let mut mx = ExperimentConfig::new(ExperimentKind::Mxfp4Evolution);
    mx.trials = 1;
    mx.sizes = vec![128];
    mx.distributions = vec![DistributionSpec::standard_normal()];
    vec![ExperimentConfig::new(ExperimentKind::CostTables), gemm, flash, mx]
}

/// Every criterion whose inputs are present in `sets`.
pub fn evaluate(sets: &[ResultSet], with_structural: bool) -> Vec<Outcome> {
    use ExperimentKind::*;
    let mut out = Vec::new();
    if let Some(s) = find(sets, BoundVerify) {
        if s.table("theorem1").next().is_some() {
            out.push(theorem1(s));
        }
        if s.table("table12").next().is_some() {
            out.push(theorem2(s));
        }
    }
    if let Some(s) = find(sets, GemmInt8) {
        out.push(table5(s));
    }
    if let Some(s) = find(sets, Ablation) {
        out.push(table6(s));
    }
    if let Some(s) = find(sets, SizeSweep) {
        out.push(table7(s));
    }
    if let Some(s) = find(sets, FlashAttention) {
        out.extend(table8(s));
    }
    if let Some(s) = find(sets, Mxfp4Decomp) {
        out.push(table9(s));
    }
    if let (Some(a), Some(b)) = (find(sets, Mxfp4Gemm), find(sets, Mxfp4SizeSweep)) {
        out.push(table10_11(a, b));
    }
    if let Some(s) = find(sets, Mxfp4Evolution) {
        out.push(table1(s));
    }
    if let Some(s) = find(sets, CostTables) {
        out.push(cost_exact(s));
        out.push(hbm_latency(s));
    }
    if with_structural {
        out.push(structural(sets, &determinism_configs()));
    }
    out
}
