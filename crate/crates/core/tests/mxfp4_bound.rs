use msd_core::datagen::{gen_activation_fp32, DistributionSpec, ExperimentSeed};
use msd_core::mx_formats::{mxfp4_decompose_block, Fp4Code, MxBlockPair, Mxfp4Variant, BLOCK};
use proptest::prelude::*;

fn magnitude(c: Fp4Code) -> f64 {
    // Eight magnitudes spaced by a quarter.
    [0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75][(c.bits() & 7) as usize]
}

fn value(c: Fp4Code) -> f64 {
    if c.bits() & 8 != 0 {
        -magnitude(c)
    } else {
        magnitude(c)
    }
}

fn pow2(e: i32) -> f64 {
    2f64.powi(e)
}

/// Worst `|x - recon|` over `alpha/64`, and the worst pass-1 residual over
/// `alpha/8`, with the reconstruction rebuilt from the raw code bits.
fn ratios(x: &[f32], b: &MxBlockPair) -> (f64, f64) {
    if x.iter().all(|&v| v == 0.0) {
        assert!(b.is_zero_block());
        return (0.0, 0.0);
    }
    let (a, s) = (pow2(b.alpha.exponent()), pow2(b.beta.exponent()));
    let mut e_max = 0f64;
    let mut r_max = 0f64;
    for i in 0..BLOCK {
        let r = x[i] as f64 - a * value(b.q1[i]);
        r_max = r_max.max(r.abs());
        e_max = e_max.max((r - s * value(b.q2[i])).abs());
    }
    (e_max / (a / 64.0), r_max / (a / 8.0))
}

fn blocks(dist: &DistributionSpec, n: usize, seed: u64) -> Vec<f32> {
    gen_activation_fp32(n, BLOCK, dist, ExperimentSeed::new(seed, 3)).unwrap().data
}

#[test]
fn hundred_thousand_blocks_per_distribution() {
    use DistributionSpec::*;
    let dists = [
        Gaussian { mean: 0.0, std: 0.5 },
        Gaussian { mean: 0.0, std: 1.0 },
        Uniform { low: -1.0, high: 1.0 },
        Uniform { low: -3.0, high: 3.0 },
        Laplacian { loc: 0.0, scale: 1.0 },
        StudentT { df: 3.0 },
        Cauchy,
    ];
    for (k, dist) in dists.iter().enumerate() {
        let data = blocks(dist, 100_000, k as u64);
        let mut worst = (0f64, 0f64);
        for blk in data.chunks(BLOCK) {
            let (e, r) = ratios(blk, &mxfp4_decompose_block(blk, Mxfp4Variant::V3).unwrap());
            worst = (worst.0.max(e), worst.1.max(r));
        }
        assert!(worst.0 <= 1.0, "{}: {} x alpha/64", dist.label(), worst.0);
        assert!(worst.1 <= 1.0, "{}: pass-1 residual {} x alpha/8", dist.label(), worst.1);
        assert!(worst.0 > 0.9, "{}: bound unexpectedly loose ({})", dist.label(), worst.0);
    }
}

#[test]
fn earlier_variants_keep_the_pass1_bound() {
    let data = blocks(&DistributionSpec::standard_normal(), 20_000, 99);
    for v in [Mxfp4Variant::V1, Mxfp4Variant::V2] {
        for blk in data.chunks(BLOCK) {
            let (_, r) = ratios(blk, &mxfp4_decompose_block(blk, v).unwrap());
            assert!(r <= 1.0, "{v:?}: {r}");
        }
    }
}

#[test]
fn primary_scale_is_minimal() {
    let data = blocks(&DistributionSpec::StudentT { df: 3.0 }, 5_000, 5);
    for blk in data.chunks(BLOCK) {
        let b = mxfp4_decompose_block(blk, Mxfp4Variant::V3).unwrap();
        let m = blk.iter().fold(0f64, |a, &v| a.max((v as f64).abs()));
        let a = pow2(b.alpha.exponent());
        assert!(m <= 1.859375 * a);
        assert!(m > 1.859375 * a / 2.0);
        assert_eq!(b.beta.exponent(), b.alpha.exponent() - 4);
    }
}

fn block_strategy() -> impl Strategy<Value = Vec<f32>> {
    (prop::collection::vec(-1.0f32..1.0, BLOCK), -60i32..60)
        .prop_map(|(v, e)| v.into_iter().map(|x| x * 2f32.powi(e)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(3000))]

    #[test]
    fn bound_holds_for_arbitrary_blocks(x in block_strategy()) {
        let (e, r) = ratios(&x, &mxfp4_decompose_block(&x, Mxfp4Variant::V3).unwrap());
        prop_assert!(e <= 1.0);
        prop_assert!(r <= 1.0);
    }

    #[test]
    fn doubling_shifts_only_the_exponents(x in (prop::collection::vec(-1.0f32..1.0, BLOCK), -10i32..10)
        .prop_map(|(v, e)| v.into_iter().map(|x| x * 2f32.powi(e)).collect::<Vec<_>>())) {
        prop_assume!(x.iter().any(|&v| v != 0.0));
        let y: Vec<f32> = x.iter().map(|v| v * 2.0).collect();
        let (a, b) = (mxfp4_decompose_block(&x, Mxfp4Variant::V3).unwrap(), mxfp4_decompose_block(&y, Mxfp4Variant::V3).unwrap());
        prop_assert_eq!(a.alpha.exponent() + 1, b.alpha.exponent());
        prop_assert_eq!(a.q1, b.q1);
        prop_assert_eq!(a.q2, b.q2);
    }
}
