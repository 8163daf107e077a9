//! Closed-form cost models: Vector-core op counts, HBM traffic and a
//! max-plus-sync latency model. Counts are exact integers; rounding to
//! millions is left to the presentation layer.

use serde::{Deserialize, Serialize};

use crate::error::{MsdError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CostMethod {
    Dequant,
    Msd,
}

/// Decode-time attention shape for one KV head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttnCostInput {
    /// Queries sharing the KV head.
    pub n: u64,
    /// KV length.
    pub m: u64,
    /// Head dimension.
    pub d: u64,
    /// KV tile size.
    pub bc: u64,
}

impl AttnCostInput {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.d == 0 || self.bc == 0 {
            return Err(MsdError::InvalidArgument(format!("non-positive attention cost input {self:?}")));
        }
        if !self.m.is_multiple_of(self.bc) {
            return Err(MsdError::BlockMisaligned { dim: self.m as usize, block: self.bc as usize });
        }
        Ok(())
    }

    pub fn tc(&self) -> u64 {
        self.m / self.bc
    }
}

/// Vector-core operations per attention head.
///
/// Dequant: `4Md + 4NM + 3NdTc`; MSD: `6Nd + 12NM + 7NdTc`.
pub fn attn_vector_ops(inp: &AttnCostInput, method: CostMethod) -> Result<u64> {
    inp.validate()?;
    let AttnCostInput { n, m, d, .. } = *inp;
    let tc = inp.tc();
    Ok(match method {
        CostMethod::Dequant => 4 * m * d + 4 * n * m + 3 * n * d * tc,
        CostMethod::Msd => 6 * n * d + 12 * n * m + 7 * n * d * tc,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossover {
    /// `4Md / (12M + 7dTc)`, dropping the lower-order terms.
    pub approx: f64,
    /// Root of `dequant(N) = msd(N)`: `4Md / (6d + 8M + 4dTc)`.
    pub exact: f64,
}

/// Query count at which both methods cost the same Vector work. `n` is
/// ignored.
pub fn attn_crossover(inp: &AttnCostInput) -> Result<Crossover> {
    inp.validate()?;
    let (m, d, tc) = (inp.m as f64, inp.d as f64, inp.tc() as f64);
    Ok(Crossover {
        approx: 4.0 * m * d / (12.0 * m + 7.0 * d * tc),
        exact: 4.0 * m * d / (6.0 * d + 8.0 * m + 4.0 * d * tc),
    })
}

/// HBM bytes per attention head for the KV cache: dequant reads INT8,
/// writes and re-reads BF16 (`5Md`); MSD reads INT8 K and V once (`2Md`).
pub fn attn_hbm_traffic(m: u64, d: u64, method: CostMethod) -> u64 {
    match method {
        CostMethod::Dequant => 5 * m * d,
        CostMethod::Msd => 2 * m * d,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearCostInput {
    /// Activation rows.
    pub b: u64,
    /// Weight rows (outputs).
    pub m: u64,
    /// Weight columns (reduction).
    pub n: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearTrafficMethod {
    /// INT8 read, BF16 written and read back: `3mn + 2bn + 2bm`.
    Dequant,
    /// Weight tile stays on chip for both passes: `mn + 4bn + 2bm`.
    MsdResident,
    /// Weight re-read for the second pass: `2mn + 4bn + 2bm`.
    MsdConservative,
    /// BF16 weight read directly: `2mn + 2bn + 2bm`.
    Bf16,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrafficReport {
    pub bytes: u64,
    /// Weight-term coefficient (bytes per weight element).
    pub weight_coeff: u64,
    /// Dequant bytes over these bytes.
    pub ratio_vs_dequant: f64,
    /// Dequant weight term over this weight term.
    pub dominant_ratio_vs_dequant: f64,
}

fn linear_terms(method: LinearTrafficMethod) -> (u64, u64, u64) {
    // (mn, bn, bm) coefficients
    match method {
        LinearTrafficMethod::Dequant => (3, 2, 2),
        LinearTrafficMethod::MsdResident => (1, 4, 2),
        LinearTrafficMethod::MsdConservative => (2, 4, 2),
        LinearTrafficMethod::Bf16 => (2, 2, 2),
    }
}

pub fn linear_hbm_bytes(inp: &LinearCostInput, method: LinearTrafficMethod) -> u64 {
    let (a, b, c) = linear_terms(method);
    a * inp.m * inp.n + b * inp.b * inp.n + c * inp.b * inp.m
}

pub fn linear_hbm_traffic(inp: &LinearCostInput, method: LinearTrafficMethod) -> TrafficReport {
    let bytes = linear_hbm_bytes(inp, method);
    let base = linear_hbm_bytes(inp, LinearTrafficMethod::Dequant);
    let (w, _, _) = linear_terms(method);
    let (wd, _, _) = linear_terms(LinearTrafficMethod::Dequant);
    TrafficReport {
        bytes,
        weight_coeff: w,
        ratio_vs_dequant: if bytes == 0 { f64::NAN } else { base as f64 / bytes as f64 },
        dominant_ratio_vs_dequant: wd as f64 / w as f64,
    }
}

/// Sustained operation rates (ops per second).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThroughputProfile {
    pub r_vector: f64,
    pub r_gemm_bf16: f64,
    pub r_gemm_int8: f64,
    pub r_gemm_fp8: f64,
    pub r_gemm_fp4: f64,
    /// Fixed Vector/Cube handoff cost in seconds.
    pub t_sync: f64,
    /// Optional HBM bandwidth (bytes/s); traffic time is added when set.
    pub hbm_bandwidth: Option<f64>,
}

impl ThroughputProfile {
    /// Low-precision rates as multiples of the BF16 rate: INT8 2x, FP8 2x,
    /// FP4 4x.
    pub fn with_default_ratios(r_vector: f64, r_gemm_bf16: f64) -> Self {
        Self {
            r_vector,
            r_gemm_bf16,
            r_gemm_int8: 2.0 * r_gemm_bf16,
            r_gemm_fp8: 2.0 * r_gemm_bf16,
            r_gemm_fp4: 4.0 * r_gemm_bf16,
            t_sync: 0.0,
            hbm_bandwidth: None,
        }
    }
}

impl Default for ThroughputProfile {
    fn default() -> Self {
        // nominal rates; only ratios matter for the identities
        Self::with_default_ratios(1e12, 1e14)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatencyMethod {
    /// Vector dequantizes the weight, one BF16 GEMM.
    Dequant,
    /// Two INT8 GEMMs over the decomposed activation.
    MsdInt8,
    /// Two FP4 GEMMs over the decomposed activation.
    MsdMxfp4,
    /// One FP8 GEMM over an MXFP8 activation.
    Fp8Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Latency {
    pub t_vector: f64,
    pub t_cube: f64,
    pub t_total: f64,
}

/// Vector-side operations per linear layer: MSD decomposes and
/// reconstructs (`3n + 5n + 2m` per activation row); dequant converts the
/// whole weight (`2mn`).
pub fn vector_flops_linear(n: u64, m: u64, method: CostMethod) -> u64 {
    match method {
        CostMethod::Msd => 3 * n + 5 * n + 2 * m,
        CostMethod::Dequant => 2 * m * n,
    }
}

/// `T = max(T_vector, T_cube) + T_sync`, plus `traffic / BW` when a
/// bandwidth is configured.
pub fn linear_latency(inp: &LinearCostInput, p: &ThroughputProfile, method: LatencyMethod) -> Latency {
    let (b, m, n) = (inp.b as f64, inp.m as f64, inp.n as f64);
    let flops = 2.0 * b * m * n;
    let (t_vector, t_cube, traffic) = match method {
        LatencyMethod::Dequant => (
            m * n / p.r_vector,
            flops / p.r_gemm_bf16,
            linear_hbm_bytes(inp, LinearTrafficMethod::Dequant),
        ),
        LatencyMethod::MsdInt8 => (
            b * vector_flops_linear(inp.n, inp.m, CostMethod::Msd) as f64 / p.r_vector,
            2.0 * flops / p.r_gemm_int8,
            linear_hbm_bytes(inp, LinearTrafficMethod::MsdResident),
        ),
        LatencyMethod::MsdMxfp4 => (
            b * vector_flops_linear(inp.n, inp.m, CostMethod::Msd) as f64 / p.r_vector,
            2.0 * flops / p.r_gemm_fp4,
            linear_hbm_bytes(inp, LinearTrafficMethod::MsdResident),
        ),
        LatencyMethod::Fp8Baseline => (
            b * n / p.r_vector,
            flops / p.r_gemm_fp8,
            linear_hbm_bytes(inp, LinearTrafficMethod::MsdResident),
        ),
    };
    let mut t_total = t_vector.max(t_cube) + p.t_sync;
    if let Some(bw) = p.hbm_bandwidth {
        t_total += traffic as f64 / bw;
    }
    Latency { t_vector, t_cube, t_total }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecDecodeInput {
    pub n_spec: u64,
    pub g: u64,
}

/// `N = (1 + N_spec) * G`.
pub fn effective_queries(inp: &SpecDecodeInput) -> u64 {
    (1 + inp.n_spec) * inp.g
}

/// Rounds to one decimal in the given unit, half away from zero.
pub fn round_to(v: f64, unit: f64) -> f64 {
    (v / unit * 10.0).round() / 10.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table4(n: u64) -> AttnCostInput {
        AttnCostInput { n, m: 8192, d: 128, bc: 64 }
    }

    #[test]
    fn table4_exact_integers() {
        // independent evaluation: Tc = 128
        let (m, d, tc) = (8192u64, 128u64, 128u64);
        for n in [1u64, 4, 12, 24, 32] {
            let dq = 4 * m * d + n * (4 * m + 3 * d * tc);
            let ms = n * (6 * d + 12 * m + 7 * d * tc);
            assert_eq!(attn_vector_ops(&table4(n), CostMethod::Dequant).unwrap(), dq);
            assert_eq!(attn_vector_ops(&table4(n), CostMethod::Msd).unwrap(), ms);
        }
        assert_eq!(attn_vector_ops(&table4(1), CostMethod::Dequant).unwrap(), 4_276_224);
        assert_eq!(attn_vector_ops(&table4(1), CostMethod::Msd).unwrap(), 213_760);
        assert_eq!(attn_vector_ops(&table4(32), CostMethod::Dequant).unwrap(), 6_815_744);
        assert_eq!(attn_vector_ops(&table4(32), CostMethod::Msd).unwrap(), 6_840_320);
    }

    #[test]
    fn crossover_values() {
        let c = attn_crossover(&table4(0)).unwrap();
        assert!((c.approx - 19.69).abs() < 0.01, "{}", c.approx);
        assert!((c.exact - 31.81).abs() < 0.01, "{}", c.exact);
        let c576 = attn_crossover(&AttnCostInput { n: 0, m: 8192, d: 576, bc: 64 }).unwrap();
        assert!((c576.approx - 30.72).abs() < 0.01);
        // exact root really equalizes the two formulas
        let f = |n: f64, dq: bool| {
            let (m, d, tc) = (8192.0, 128.0, 128.0);
            if dq { 4.0 * m * d + 4.0 * n * m + 3.0 * n * d * tc } else { 6.0 * n * d + 12.0 * n * m + 7.0 * n * d * tc }
        };
        assert!((f(c.exact, true) - f(c.exact, false)).abs() < 1e-6 * f(c.exact, true));
        let tiny = attn_crossover(&AttnCostInput { n: 0, m: 64, d: 1, bc: 64 }).unwrap();
        assert!(tiny.exact < 1.0 && tiny.approx < 1.0);
    }

    #[test]
    fn tc_must_divide() {
        assert!(attn_vector_ops(&AttnCostInput { n: 1, m: 100, d: 8, bc: 64 }, CostMethod::Msd).is_err());
    }

    #[test]
    fn attention_traffic() {
        assert_eq!(attn_hbm_traffic(8192, 128, CostMethod::Dequant), 5_242_880);
        assert_eq!(attn_hbm_traffic(8192, 128, CostMethod::Msd), 2_097_152);
        assert_eq!(attn_hbm_traffic(1, 1, CostMethod::Dequant), 5);
        assert_eq!(attn_hbm_traffic(1, 1, CostMethod::Msd), 2);
    }

    #[test]
    fn linear_traffic() {
        let inp = LinearCostInput { b: 8, m: 4096, n: 4096 };
        let d = linear_hbm_traffic(&inp, LinearTrafficMethod::Dequant);
        let r = linear_hbm_traffic(&inp, LinearTrafficMethod::MsdResident);
        let c = linear_hbm_traffic(&inp, LinearTrafficMethod::MsdConservative);
        assert_eq!(d.bytes, 50_462_720);
        assert_eq!(r.bytes, 16_973_824);
        assert_eq!(c.bytes, 33_751_040);
        assert!((r.ratio_vs_dequant - 3.0).abs() / 3.0 < 0.05);
        assert!((c.ratio_vs_dequant - 1.5).abs() / 1.5 < 0.05);
        assert_eq!(r.dominant_ratio_vs_dequant, 3.0);
        assert_eq!(c.dominant_ratio_vs_dequant, 1.5);
        let zero_b = LinearCostInput { b: 0, m: 10, n: 20 };
        assert_eq!(linear_hbm_bytes(&zero_b, LinearTrafficMethod::Dequant), 600);
    }

    #[test]
    fn latency_identities() {
        let p = ThroughputProfile::default();
        let inp = LinearCostInput { b: 8, m: 4096, n: 4096 };
        let d = linear_latency(&inp, &p, LatencyMethod::Dequant);
        let i8 = linear_latency(&inp, &p, LatencyMethod::MsdInt8);
        let f4 = linear_latency(&inp, &p, LatencyMethod::MsdMxfp4);
        let f8 = linear_latency(&inp, &p, LatencyMethod::Fp8Baseline);
        assert_eq!(i8.t_cube, d.t_cube);
        assert_eq!(f4.t_cube, f8.t_cube);
        let fast = ThroughputProfile { r_vector: f64::INFINITY, ..p };
        let l = linear_latency(&inp, &fast, LatencyMethod::Dequant);
        assert_eq!(l.t_total, l.t_cube);
    }

    #[test]
    fn effective_query_examples() {
        assert_eq!(effective_queries(&SpecDecodeInput { n_spec: 2, g: 4 }), 12);
        assert_eq!(effective_queries(&SpecDecodeInput { n_spec: 0, g: 1 }), 1);
        assert_eq!(effective_queries(&SpecDecodeInput { n_spec: 5, g: 8 }), 48);
    }

    #[test]
    fn vector_flops() {
        assert_eq!(vector_flops_linear(4096, 4096, CostMethod::Msd), 40_960);
        assert_eq!(vector_flops_linear(4096, 4096, CostMethod::Dequant), 33_554_432);
    }

    proptest! {
        #[test]
        fn msd_cost_increasing_in_n(n in 0u64..10_000, d in 1u64..1024, tiles in 1u64..512) {
            let a = AttnCostInput { n, m: 64 * tiles, d, bc: 64 };
            let b = AttnCostInput { n: n + 1, ..a };
            prop_assert!(attn_vector_ops(&b, CostMethod::Msd).unwrap() > attn_vector_ops(&a, CostMethod::Msd).unwrap());
            prop_assert_eq!(attn_hbm_traffic(a.m, d, CostMethod::Dequant) * 2, attn_hbm_traffic(a.m, d, CostMethod::Msd) * 5);
        }

        #[test]
        fn resident_ratio_tends_to_three(m in 1024u64..65536, n in 1024u64..65536) {
            let r = linear_hbm_traffic(&LinearCostInput { b: 1, m, n }, LinearTrafficMethod::MsdResident);
            prop_assert!(r.ratio_vs_dequant > 2.9 && r.ratio_vs_dequant <= 3.0);
        }
    }
}
