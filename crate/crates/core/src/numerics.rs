//! Simulated precision primitives.
//!
//! BF16 is simulated by zeroing the low 16 bits of a binary32 pattern
//! (round toward zero). All other arithmetic stays in binary32, with binary64
//! used only where a result must be exact.

use crate::error::{MsdError, Result};

/// A binary32 value whose low 16 pattern bits are zero.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Bf16Sim(f32);

impl Bf16Sim {
    #[inline]
    pub fn value(self) -> f32 {
        self.0
    }

    /// Upper 16 bits of the pattern, i.e. the BF16 encoding.
    #[inline]
    pub fn to_bits(self) -> u16 {
        (self.0.to_bits() >> 16) as u16
    }

    #[inline]
    pub fn from_bits(bits: u16) -> Self {
        Self(f32::from_bits((bits as u32) << 16))
    }
}

impl From<Bf16Sim> for f32 {
    fn from(v: Bf16Sim) -> f32 {
        v.0
    }
}

/// Truncates a finite binary32 value to the BF16 grid.
pub fn bf16_truncate(v: f32) -> Result<Bf16Sim> {
    if !v.is_finite() {
        return Err(MsdError::NonFinite);
    }
    Ok(Bf16Sim(mask_bf16(v)))
}

/// Unchecked BF16 truncation for hot loops. Non-finite inputs keep their
/// class (inf stays inf, NaN stays NaN).
#[inline(always)]
pub fn mask_bf16(v: f32) -> f32 {
    f32::from_bits(v.to_bits() & 0xFFFF_0000)
}

/// Nearest integer, ties to even.
#[inline]
pub fn round_half_even(v: f32) -> i32 {
    v.round_ties_even() as i32
}

/// Clamps to the INT8 range and rounds ties-to-even. Adding 1.5 * 2^52
/// leaves the rounded integer in the low mantissa bits, so no float-to-int
/// conversion is needed. NaN maps to 0.
#[inline(always)]
pub(crate) fn round_clamp_i8(v: f64) -> i8 {
    const SHIFT: f64 = 6_755_399_441_055_744.0;
    (v.clamp(-128.0, 127.0) + SHIFT).to_bits() as i8
}

/// Largest binary32 value that does not exceed `num / den`, for `num >= 0`
/// and `den > 0`.
///
/// Scales derived this way never overshoot their real-valued definition, so
/// the analytic error bounds hold in binary32 without rounding slack.
pub fn div_toward_zero(num: f32, den: f64) -> f32 {
    debug_assert!(num >= 0.0 && den > 0.0);
    let n = num as f64;
    let mut q = (n / den) as f32;
    while q > 0.0 && (q as f64) * den > n {
        q = q.next_down();
    }
    q
}

/// Smallest exponent `e` with `max_abs <= bound * 2^e`, computed from the
/// binary32 exponent field and a mantissa comparison (no logarithms).
///
/// `bound` must lie in `[1, 2)`; `max_abs` must be finite and positive.
pub fn ceil_log2_ratio(max_abs: f32, bound: f32) -> i32 {
    debug_assert!((1.0..2.0).contains(&bound));
    debug_assert!(max_abs > 0.0 && max_abs.is_finite());
    let (exp, mant) = frexp_unit(max_abs);
    if mant <= bound {
        exp
    } else {
        exp + 1
    }
}

/// Splits a positive finite value into `(e, m)` with `v = m * 2^e` and
/// `m ∈ [1, 2)`. Subnormals are normalized.
pub fn frexp_unit(v: f32) -> (i32, f32) {
    debug_assert!(v > 0.0 && v.is_finite());
    let bits = v.to_bits();
    let field = ((bits >> 23) & 0xFF) as i32;
    if field == 0 {
        // subnormal: scale into the normal range first
        let (e, m) = frexp_unit(v * 2f32.powi(64));
        return (e - 64, m);
    }
    let mant = f32::from_bits((bits & 0x007F_FFFF) | 0x3F80_0000);
    (field - 127, mant)
}

/// Exact `2^e` in binary32 for `e ∈ [-149, 127]`.
pub fn pow2(e: i32) -> f32 {
    assert!((-149..=127).contains(&e), "2^{e} is not representable");
    if e >= -126 {
        f32::from_bits(((e + 127) as u32) << 23)
    } else {
        f32::from_bits(1u32 << (e + 149))
    }
}

/// Counts the data-dependent reductions a decomposition performs.
///
/// Only the coarse scale of a decomposition is allowed to look at the data;
/// every finer scale is derived from it. Pipelines thread a counter through
/// so tests can assert that structurally.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounter {
    /// `max |x|` reductions used to pick a coarse scale.
    pub scale_max_reductions: u64,
    /// Reductions over a residual. Conforming code never increments this.
    pub residual_max_reductions: u64,
    /// Vectors decomposed with a caller-supplied constant scale.
    pub constant_scale_decompositions: u64,
}

impl OpCounter {
    pub fn merge(&mut self, other: &OpCounter) {
        self.scale_max_reductions += other.scale_max_reductions;
        self.residual_max_reductions += other.residual_max_reductions;
        self.constant_scale_decompositions += other.constant_scale_decompositions;
    }
}

/// `max |x|` with a finiteness check.
pub fn abs_max(x: &[f32]) -> Result<f32> {
    // Non-negative binary32 values order like their bit patterns, and every
    // non-finite pattern is at least that of infinity.
    let m = x.iter().map(|v| v.to_bits() & 0x7fff_ffff).max().unwrap_or(0);
    if m >= f32::INFINITY.to_bits() {
        return Err(MsdError::NonFinite);
    }
    Ok(f32::from_bits(m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// Independent oracle: clear the low 16 bits by integer arithmetic on
    /// the pattern.
    fn oracle_truncate(v: f32) -> f32 {
        let bits = v.to_bits();
        f32::from_bits(bits - (bits % 65536))
    }

    #[test]
    fn round_clamp_ties_and_range() {
        let cases = [
            (0.5, 0), (1.5, 2), (2.5, 2), (-0.5, 0), (-1.5, -2), (-2.5, -2),
            (126.5, 126), (127.4, 127), (127.5, 127), (1e30, 127),
            (-127.5, -128), (-128.6, -128), (-1e30, -128), (0.49999999999999994, 0),
        ];
        for (v, want) in cases {
            assert_eq!(round_clamp_i8(v), want, "{v}");
        }
        assert_eq!(round_clamp_i8(f64::NAN), 0);
    }

    #[test]
    fn truncate_examples() {
        assert_eq!(bf16_truncate(1.0).unwrap().value(), 1.0);
        assert_eq!(bf16_truncate(0.0).unwrap().value(), 0.0);
        let v = 1.0 + 2f32.powi(-9);
        assert_eq!(bf16_truncate(v).unwrap().value(), oracle_truncate(v));
        assert_eq!(bf16_truncate(v).unwrap().value(), 1.0);
        assert_eq!(bf16_truncate(-0.0).unwrap().value().to_bits(), (-0.0f32).to_bits());
    }

    #[test]
    fn truncate_rejects_non_finite() {
        assert_eq!(bf16_truncate(f32::NAN), Err(MsdError::NonFinite));
        assert_eq!(bf16_truncate(f32::INFINITY), Err(MsdError::NonFinite));
        assert_eq!(bf16_truncate(f32::NEG_INFINITY), Err(MsdError::NonFinite));
    }

    #[test]
    fn bits_roundtrip() {
        let b = bf16_truncate(-3.140625).unwrap();
        assert_eq!(Bf16Sim::from_bits(b.to_bits()), b);
    }

    #[test]
    fn round_examples() {
        assert_eq!(round_half_even(2.5), 2);
        assert_eq!(round_half_even(3.5), 4);
        assert_eq!(round_half_even(-1.2), -1);
        assert_eq!(round_half_even(-2.5), -2);
        assert_eq!(round_half_even(0.5), 0);
    }

    #[test]
    fn truncation_relative_error_over_random_normals() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut worst = 0f64;
        for _ in 0..1_000_000 {
            let v: f32 = rng.sample(StandardNormal);
            if v == 0.0 || !v.is_normal() {
                continue;
            }
            let t = mask_bf16(v);
            assert!(t.abs() <= v.abs());
            let rel = ((v - t) as f64 / v as f64).abs();
            worst = worst.max(rel);
        }
        assert!(worst < 2f64.powi(-7), "worst relative error {worst}");
    }

    #[test]
    fn div_toward_zero_never_overshoots() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100_000 {
            let m: f32 = rng.gen_range(1e-20f32..1e20);
            for den in [127.0, 254.0, 127.49, 254.98] {
                let q = div_toward_zero(m, den);
                assert!((q as f64) * den <= m as f64);
                assert!((q.next_up() as f64) * den > m as f64);
            }
        }
        assert_eq!(div_toward_zero(127.0, 127.0), 1.0);
        assert_eq!(div_toward_zero(0.0, 127.0), 0.0);
    }

    #[test]
    fn ceil_log2_ratio_matches_scan() {
        // brute force: smallest e with m <= bound * 2^e
        let scan = |m: f32, bound: f32| -> i32 {
            (-160..140)
                .find(|&e| (m as f64) <= bound as f64 * 2f64.powi(e))
                .unwrap()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20_000 {
            let m = f32::from_bits(rng.gen_range(1u32..0x7F00_0000));
            for bound in [1.75f32, 1.859375] {
                assert_eq!(ceil_log2_ratio(m, bound), scan(m, bound), "m={m:e}");
            }
        }
        assert_eq!(ceil_log2_ratio(1.0, 1.859375), 0);
        assert_eq!(ceil_log2_ratio(3.0, 1.859375), 1);
        assert_eq!(ceil_log2_ratio(1.859375, 1.859375), 0);
    }

    #[test]
    fn pow2_exact() {
        for e in -149..=127 {
            assert_eq!(pow2(e) as f64, 2f64.powi(e));
        }
    }

    #[test]
    fn abs_max_rejects_non_finite() {
        assert_eq!(abs_max(&[]).unwrap(), 0.0);
        assert_eq!(abs_max(&[-0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(abs_max(&[1.0, -3.5, f32::MAX]).unwrap(), f32::MAX);
        assert_eq!(abs_max(&[1.0, -f32::MIN_POSITIVE / 4.0]).unwrap(), 1.0);
        for bad in [f32::NAN, -f32::NAN, f32::INFINITY, f32::NEG_INFINITY] {
            assert!(abs_max(&[1.0, bad, 2.0]).is_err());
        }
    }

    proptest! {
        #[test]
        fn abs_max_matches_fold(x in proptest::collection::vec(-1e30f32..1e30, 0..64)) {
            let want = x.iter().fold(0f32, |m, v| m.max(v.abs()));
            prop_assert_eq!(abs_max(&x).unwrap(), want);
        }

        #[test]
        fn round_clamp_matches_libm(v in -300.0f64..300.0) {
            let want = v.clamp(-128.0, 127.0).round_ties_even() as i8;
            prop_assert_eq!(round_clamp_i8(v), want);
        }

        #[test]
        fn truncate_idempotent_and_matches_oracle(bits in any::<u32>()) {
            let v = f32::from_bits(bits);
            prop_assume!(v.is_finite());
            let t = bf16_truncate(v).unwrap();
            prop_assert_eq!(t.value().to_bits() & 0xFFFF, 0);
            prop_assert_eq!(bf16_truncate(t.value()).unwrap(), t);
            prop_assert_eq!(t.value().to_bits(), oracle_truncate(v).to_bits());
            prop_assert!(t.value().abs() <= v.abs());
        }
    }
}
