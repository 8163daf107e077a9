use msd_core::attention_sim::{
    attention_dequant, attention_flash, attention_flash_msd, attention_flash_reference, attention_oracle,
};
use msd_core::cost_model::{
    attn_crossover, attn_hbm_traffic, attn_vector_ops, linear_hbm_bytes, AttnCostInput, CostMethod, LinearCostInput,
    LinearTrafficMethod,
};
use msd_core::datagen::{gen_activation_fp32, gen_int8_weight, gen_kv_cache, DistributionSpec, ExperimentSeed};
use msd_core::gemm_sim::{gemm_dequant, gemm_fp32_oracle, gemm_msd_int8, msd_int8_fused, msd_int8_passes};
use msd_core::metrics::l2_relative;
use msd_core::msd_int8::{decompose2, ScaleMode};
use msd_core::numerics::OpCounter;
use msd_core::{Matrix, QuantizedWeight, SimMatrix};

fn bf16(v: f32) -> f32 {
    f32::from_bits(v.to_bits() & 0xFFFF_0000)
}

fn inputs(b: usize, n: usize, m: usize, seed: u64) -> (Matrix, QuantizedWeight) {
    let s = ExperimentSeed::new(seed, 11);
    let x = gen_activation_fp32(b, n, &DistributionSpec::standard_normal(), s.child("x")).unwrap();
    (x, gen_int8_weight(m, n, s.child("w")).unwrap())
}

/// Per-row decomposition, naive integer dot products, then
/// `s_W * (alpha y1 + beta y2)` in binary32.
fn msd_naive(x: &Matrix, w: &QuantizedWeight) -> Vec<f32> {
    let mut out = Vec::new();
    for i in 0..x.rows {
        let d = decompose2(x.row(i), ScaleMode::Standard).unwrap();
        for k in 0..w.rows {
            let wr = w.row_values(k);
            let y1: i64 = d.x1.iter().zip(wr).map(|(&a, &b)| a as i64 * b as i64).sum();
            let y2: i64 = d.x2.iter().zip(wr).map(|(&a, &b)| a as i64 * b as i64).sum();
            out.push(w.scales[k] * (d.alpha * y1 as f32 + d.beta * y2 as f32));
        }
    }
    out
}

#[test]
fn msd_gemm_matches_naive_construction() {
    for (b, n, m) in [(1, 32, 7), (5, 257, 33), (16, 1024, 64)] {
        let (x, w) = inputs(b, n, m, n as u64);
        let y = gemm_msd_int8(&SimMatrix::from_fp32(x.clone()), &w, ScaleMode::Standard).unwrap();
        assert_eq!(y.data, msd_naive(&x, &w), "{b}x{n} by {m}");
    }
}

#[test]
fn fused_and_separate_passes_are_bit_identical() {
    let (x, w) = inputs(8, 512, 96, 3);
    let mut ops = OpCounter::default();
    let a = msd_int8_passes(&x, &w, ScaleMode::Standard, &mut ops).unwrap();
    let b = msd_int8_fused(&x, &w, ScaleMode::Standard, &mut ops).unwrap();
    assert_eq!(a, b);
}

#[test]
fn dequant_close_to_bf16_operand_product() {
    let (x, w) = inputs(4, 300, 20, 9);
    let y = gemm_dequant(&SimMatrix::from_fp32(x.clone()), &w).unwrap();
    let wd = w.dequantize();
    for i in 0..x.rows {
        for k in 0..w.rows {
            let exact: f64 = (0..x.cols).map(|j| bf16(x.get(i, j)) as f64 * bf16(wd.get(k, j)) as f64).sum();
            let mag: f64 = (0..x.cols).map(|j| (x.get(i, j) as f64 * wd.get(k, j) as f64).abs()).sum();
            assert!((y.get(i, k) as f64 - exact).abs() <= 1e-6 * mag);
        }
    }
}

#[test]
fn msd_two_orders_below_dequant() {
    let (x, w) = inputs(32, 1024, 1024, 21);
    let yref = gemm_fp32_oracle(&x, &w).unwrap();
    let sx = SimMatrix::from_fp32(x);
    let deq = l2_relative(&gemm_dequant(&sx, &w).unwrap().data, &yref.data).unwrap();
    let msd = l2_relative(&gemm_msd_int8(&sx, &w, ScaleMode::Standard).unwrap().data, &yref.data).unwrap();
    assert!((0.003..0.01).contains(&deq), "dequant {deq}");
    assert!(msd < 1e-4, "msd {msd}");
    assert!(deq / msd > 100.0, "ratio {}", deq / msd);
}

fn attention_inputs(n: usize, m: usize, d: usize, seed: u64) -> (Matrix, QuantizedWeight, QuantizedWeight) {
    let s = ExperimentSeed::new(seed, 12);
    let q = gen_activation_fp32(n, d, &DistributionSpec::standard_normal(), s.child("q")).unwrap();
    let (k, v) = gen_kv_cache(m, d, s.child("kv")).unwrap();
    (q, k, v)
}

#[test]
fn unquantized_tiling_matches_oracle() {
    let (q, k, v) = attention_inputs(16, 512, 64, 1);
    let yref = attention_oracle(&q, &k, &v).unwrap();
    for bc in [16, 64, 512] {
        let y = attention_flash_reference(&q, &k, &v, bc).unwrap();
        assert!(l2_relative(&y.data, &yref.data).unwrap() < 1e-6, "bc {bc}");
    }
}

#[test]
fn flash_msd_beats_flash_dequant() {
    let (q, k, v) = attention_inputs(64, 1024, 64, 2);
    let yref = attention_oracle(&q, &k, &v).unwrap();
    let mono = l2_relative(&attention_dequant(&q, &k, &v).unwrap().data, &yref.data).unwrap();
    let flash = l2_relative(&attention_flash(&q, &k, &v, 64).unwrap().data, &yref.data).unwrap();
    let (y, st) = attention_flash_msd(&q, &k, &v, 64).unwrap();
    let msd = l2_relative(&y.data, &yref.data).unwrap();
    assert!(msd <= 0.5 * flash, "msd {msd} flash {flash}");
    assert!((flash / mono - 1.0).abs() < 0.15, "flash {flash} monolithic {mono}");
    assert_eq!(st.p_scale_reductions, 0);
    assert_eq!(st.residual_max_reductions, 0);
    assert_eq!(st.rows_with_unit_p_max, 64);
    assert_eq!(st.p_max, 1.0);
}

#[test]
fn flash_is_insensitive_to_tile_size() {
    let (q, k, v) = attention_inputs(32, 1024, 64, 4);
    let yref = attention_oracle(&q, &k, &v).unwrap();
    let e: Vec<f64> = [64, 128, 256]
        .iter()
        .map(|&bc| l2_relative(&attention_flash(&q, &k, &v, bc).unwrap().data, &yref.data).unwrap())
        .collect();
    let (lo, hi) = e.iter().fold((f64::MAX, 0f64), |(l, h), &v| (l.min(v), h.max(v)));
    assert!(hi / lo < 1.10, "{e:?}");
}

#[test]
fn attention_cost_matches_closed_form() {
    for n in [0u64, 1, 4, 12, 24, 32, 48, 100] {
        for (m, d, bc) in [(8192u64, 128u64, 64u64), (8192, 576, 64), (1024, 64, 128), (64, 1, 64)] {
            let inp = AttnCostInput { n, m, d, bc };
            let tc = m / bc;
            assert_eq!(attn_vector_ops(&inp, CostMethod::Dequant).unwrap(), 4 * m * d + 4 * n * m + 3 * n * d * tc);
            assert_eq!(attn_vector_ops(&inp, CostMethod::Msd).unwrap(), 6 * n * d + 12 * n * m + 7 * n * d * tc);
            let c = attn_crossover(&inp).unwrap();
            // At the exact root both costs agree.
            let (mf, df, tf) = (m as f64, d as f64, tc as f64);
            let deq = 4.0 * mf * df + c.exact * (4.0 * mf + 3.0 * df * tf);
            let msd = c.exact * (6.0 * df + 12.0 * mf + 7.0 * df * tf);
            assert!((deq - msd).abs() <= 1e-9 * deq);
            assert_eq!(attn_hbm_traffic(m, d, CostMethod::Dequant) * 2, attn_hbm_traffic(m, d, CostMethod::Msd) * 5);
        }
    }
    assert!(attn_vector_ops(&AttnCostInput { n: 1, m: 100, d: 8, bc: 64 }, CostMethod::Msd).is_err());
}

#[test]
fn linear_traffic_matches_closed_form() {
    for (b, m, n) in [(0u64, 4096u64, 4096u64), (8, 4096, 4096), (32, 11008, 4096), (1, 1, 1)] {
        let f = |w: u64, x: u64, y: u64| w * m * n + x * b * n + y * b * m;
        let inp = LinearCostInput { b, m, n };
        assert_eq!(linear_hbm_bytes(&inp, LinearTrafficMethod::Dequant), f(3, 2, 2));
        assert_eq!(linear_hbm_bytes(&inp, LinearTrafficMethod::MsdResident), f(1, 4, 2));
        assert_eq!(linear_hbm_bytes(&inp, LinearTrafficMethod::MsdConservative), f(2, 4, 2));
    }
}
