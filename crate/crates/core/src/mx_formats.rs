//! Microscaling block formats: FP4 (E1M2) and FP8 (E4M3) elements with
//! shared E8M0 power-of-two scales, plus the two-pass MXFP4 decomposition.

use serde::{Deserialize, Serialize};

use crate::error::{MsdError, Result};
use crate::matrix::Matrix;
use crate::numerics::{abs_max, ceil_log2_ratio, frexp_unit, pow2, OpCounter};

pub const BLOCK: usize = 32;
pub const FP4_MAX: f32 = 1.75;
/// `1.75 * 17/16`: the largest block maximum whose pass-1 clip residual
/// is still absorbed by a secondary scale of `alpha/16`.
pub const MSD_FP4_BOUND: f32 = 1.859375;
pub const E4M3_MAX: f32 = 448.0;

/// Storage cost in bits per element: two FP4 codes plus two E8M0 scales
/// per 32-element block.
pub const MSD_MXFP4_BITS_PER_ELEMENT: f64 = (2.0 * 4.0 * BLOCK as f64 + 16.0) / BLOCK as f64;
pub const MXFP8_BITS_PER_ELEMENT: f64 = (8.0 * BLOCK as f64 + 8.0) / BLOCK as f64;

/// Sign bit (bit 3) and a 3-bit magnitude index; magnitude is `index / 4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Fp4Code(u8);

impl Fp4Code {
    pub const ZERO: Fp4Code = Fp4Code(0);

    pub fn from_bits(bits: u8) -> Self {
        Fp4Code(bits & 0xF)
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn magnitude_index(self) -> u8 {
        self.0 & 0x7
    }

    #[inline]
    pub fn decode(self) -> f32 {
        let m = (self.0 & 0x7) as f32 * 0.25;
        if self.0 & 0x8 != 0 {
            -m
        } else {
            m
        }
    }

    /// True when the code sits at the saturated grid end.
    pub fn is_max(self) -> bool {
        self.0 & 0x7 == 7
    }
}

/// Nearest FP4 grid value, ties to even index, saturating at `±1.75`.
#[inline]
pub fn round_to_fp4(s: f32) -> Fp4Code {
    let idx = (s.abs() * 4.0).round_ties_even().min(7.0) as u8;
    let sign = if s.is_sign_negative() && idx != 0 { 0x8 } else { 0 };
    Fp4Code(sign | idx)
}

/// Power-of-two shared scale `2^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct E8m0Scale {
    exponent: i16,
}

impl E8m0Scale {
    pub const MIN_EXP: i32 = -127;
    pub const MAX_EXP: i32 = 127;
    /// Sentinel for blocks whose maximum is zero.
    pub const ZERO_BLOCK: E8m0Scale = E8m0Scale { exponent: -127 };

    pub fn new(exponent: i32) -> Result<Self> {
        if !(Self::MIN_EXP..=Self::MAX_EXP).contains(&exponent) {
            return Err(MsdError::E8m0Overflow(exponent));
        }
        Ok(E8m0Scale { exponent: exponent as i16 })
    }

    pub fn exponent(self) -> i32 {
        self.exponent as i32
    }

    #[inline]
    pub fn value(self) -> f32 {
        pow2(self.exponent as i32)
    }

    /// Biased 8-bit encoding (bias 127).
    pub fn to_bits(self) -> u8 {
        (self.exponent as i32 + 127) as u8
    }

    pub fn from_bits(bits: u8) -> Result<Self> {
        Self::new(bits as i32 - 127)
    }
}

/// The three decomposition designs compared in the evolution study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mxfp4Variant {
    /// Primary bound 1.75, secondary scale `alpha/8`.
    V1,
    /// Primary bound 1.75, secondary scale `alpha/16`.
    V2,
    /// Primary bound 1.859375, secondary scale `alpha/16`.
    #[default]
    V3,
}

impl Mxfp4Variant {
    pub fn primary_bound(self) -> f32 {
        match self {
            Mxfp4Variant::V1 | Mxfp4Variant::V2 => FP4_MAX,
            Mxfp4Variant::V3 => MSD_FP4_BOUND,
        }
    }

    pub fn beta_shift(self) -> i32 {
        match self {
            Mxfp4Variant::V1 => 3,
            Mxfp4Variant::V2 | Mxfp4Variant::V3 => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mxfp4Variant::V1 => "v1",
            Mxfp4Variant::V2 => "v2",
            Mxfp4Variant::V3 => "v3",
        }
    }
}

/// Smallest power-of-two scale with `max_abs <= bound * 2^e`, or the
/// zero-block sentinel when `max_abs == 0`.
pub fn scale_for_bound(max_abs: f32, bound: f32) -> Result<E8m0Scale> {
    if !max_abs.is_finite() || max_abs < 0.0 {
        return Err(MsdError::NonFinite);
    }
    if max_abs == 0.0 {
        return Ok(E8m0Scale::ZERO_BLOCK);
    }
    E8m0Scale::new(ceil_log2_ratio(max_abs, bound))
}

/// Primary MSD scale `2^ceil(log2(M / 1.859375))`.
pub fn mxfp4_alpha(max_abs: f32) -> Result<E8m0Scale> {
    scale_for_bound(max_abs, MSD_FP4_BOUND)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MxBlockPair {
    pub alpha: E8m0Scale,
    pub beta: E8m0Scale,
    pub q1: [Fp4Code; BLOCK],
    pub q2: [Fp4Code; BLOCK],
}

impl MxBlockPair {
    pub fn is_zero_block(&self) -> bool {
        self.alpha == E8m0Scale::ZERO_BLOCK && self.q1.iter().all(|c| c.magnitude_index() == 0)
    }
}

fn check_block(x: &[f32]) -> Result<f32> {
    if x.len() != BLOCK {
        return Err(MsdError::InvalidArgument(format!(
            "block length {} (expected {BLOCK})",
            x.len()
        )));
    }
    abs_max(x)
}

pub fn mxfp4_decompose_block(x: &[f32], variant: Mxfp4Variant) -> Result<MxBlockPair> {
    let mut ops = OpCounter::default();
    mxfp4_decompose_block_counted(x, variant, &mut ops)
}

pub fn mxfp4_decompose_block_counted(
    x: &[f32],
    variant: Mxfp4Variant,
    ops: &mut OpCounter,
) -> Result<MxBlockPair> {
    let m = check_block(x)?;
    ops.scale_max_reductions += 1;
    if m == 0.0 {
        return Ok(MxBlockPair {
            alpha: E8m0Scale::ZERO_BLOCK,
            beta: E8m0Scale::ZERO_BLOCK,
            q1: [Fp4Code::ZERO; BLOCK],
            q2: [Fp4Code::ZERO; BLOCK],
        });
    }
    let alpha = scale_for_bound(m, variant.primary_bound())?;
    let beta = E8m0Scale::new(alpha.exponent() - variant.beta_shift())?;
    let (a, b) = (alpha.value(), beta.value());
    let mut q1 = [Fp4Code::ZERO; BLOCK];
    let mut q2 = [Fp4Code::ZERO; BLOCK];
    for i in 0..BLOCK {
        q1[i] = round_to_fp4(x[i] / a);
        let r = x[i] - a * q1[i].decode();
        q2[i] = round_to_fp4(r / b);
    }
    Ok(MxBlockPair { alpha, beta, q1, q2 })
}

pub fn mxfp4_reconstruct(b: &MxBlockPair) -> [f32; BLOCK] {
    let (a, s) = (b.alpha.value(), b.beta.value());
    let mut out = [0f32; BLOCK];
    for i in 0..BLOCK {
        out[i] = a * b.q1[i].decode() + s * b.q2[i].decode();
    }
    out
}

/// Pass-1 residual and the number of pass-2 elements that saturate.
pub fn mxfp4_pass2_stats(x: &[f32], b: &MxBlockPair) -> (f32, usize) {
    let (a, s) = (b.alpha.value(), b.beta.value());
    let mut rmax = 0f32;
    let mut clipped = 0;
    for i in 0..x.len() {
        let r = x[i] - a * b.q1[i].decode();
        rmax = rmax.max(r.abs());
        if (r / s).abs() > FP4_MAX {
            clipped += 1;
        }
    }
    (rmax, clipped)
}

/// E4M3 code: sign, 4 exponent bits (bias 7), 3 mantissa bits. `0x7F`
/// (NaN) is never produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct E4m3(u8);

impl E4m3 {
    pub fn from_bits(bits: u8) -> Self {
        E4m3(bits)
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn decode(self) -> f32 {
        let e = ((self.0 >> 3) & 0xF) as i32;
        let m = (self.0 & 0x7) as f32;
        let mag = if e == 0 {
            m * pow2(-9)
        } else {
            (1.0 + m / 8.0) * pow2(e - 7)
        };
        if self.0 & 0x80 != 0 {
            -mag
        } else {
            mag
        }
    }

    /// Round to nearest E4M3 value (ties to even), saturating at `±448`.
    pub fn encode(v: f32) -> E4m3 {
        let sign = if v.is_sign_negative() { 0x80u8 } else { 0 };
        let a = v.abs();
        if a == 0.0 {
            return E4m3(0);
        }
        if a >= E4M3_MAX {
            return E4m3(sign | 0x7E);
        }
        let (e, _) = frexp_unit(a);
        let quantum_exp = if e < -6 { -9 } else { e - 3 };
        let q = pow2(quantum_exp);
        let r = (a / q).round_ties_even() * q;
        if r >= E4M3_MAX {
            return E4m3(sign | 0x7E);
        }
        if r == 0.0 {
            return E4m3(sign);
        }
        let (re, rm) = frexp_unit(r);
        let bits = if re < -6 {
            (r / pow2(-9)) as u8
        } else {
            (((re + 7) as u8) << 3) | ((rm - 1.0) * 8.0) as u8
        };
        E4m3(sign | bits)
    }
}

/// How the MXFP8 shared exponent is aligned to the block maximum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mxfp8ScaleRule {
    /// Smallest exponent that keeps the block maximum within 448.
    #[default]
    Ceil,
    /// `floor(log2 M) - 8`; the maximum may saturate.
    Floor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mxfp8Block {
    pub scale: E8m0Scale,
    pub elems: [E4m3; BLOCK],
}

impl Mxfp8Block {
    pub fn dequantize(&self) -> [f32; BLOCK] {
        let s = self.scale.value();
        let mut out = [0f32; BLOCK];
        for i in 0..BLOCK {
            out[i] = s * self.elems[i].decode();
        }
        out
    }
}

pub fn mxfp8_quantize_block(x: &[f32]) -> Result<Mxfp8Block> {
    mxfp8_quantize_block_with(x, Mxfp8ScaleRule::Ceil)
}

pub fn mxfp8_quantize_block_with(x: &[f32], rule: Mxfp8ScaleRule) -> Result<Mxfp8Block> {
    let m = check_block(x)?;
    if m == 0.0 {
        return Ok(Mxfp8Block { scale: E8m0Scale::ZERO_BLOCK, elems: [E4m3(0); BLOCK] });
    }
    let e = match rule {
        Mxfp8ScaleRule::Ceil => ceil_log2_ratio(m, FP4_MAX) - 8,
        Mxfp8ScaleRule::Floor => frexp_unit(m).0 - 8,
    };
    if e > E8m0Scale::MAX_EXP {
        return Err(MsdError::E8m0Overflow(e));
    }
    let scale = E8m0Scale::new(e.max(E8m0Scale::MIN_EXP))?;
    let s = scale.value();
    let mut elems = [E4m3(0); BLOCK];
    for i in 0..BLOCK {
        elems[i] = E4m3::encode(x[i] / s);
    }
    Ok(Mxfp8Block { scale, elems })
}

/// Single-pass MXFP4 block (one scale with bound 1.75).
#[derive(Debug, Clone, PartialEq)]
pub struct Mxfp4Block {
    pub scale: E8m0Scale,
    pub codes: [Fp4Code; BLOCK],
}

impl Mxfp4Block {
    pub fn dequantize(&self) -> [f32; BLOCK] {
        let s = self.scale.value();
        let mut out = [0f32; BLOCK];
        for i in 0..BLOCK {
            out[i] = s * self.codes[i].decode();
        }
        out
    }
}

pub fn mxfp4_quantize_block(x: &[f32]) -> Result<Mxfp4Block> {
    let m = check_block(x)?;
    let scale = scale_for_bound(m, FP4_MAX)?;
    let mut codes = [Fp4Code::ZERO; BLOCK];
    if m > 0.0 {
        let s = scale.value();
        for i in 0..BLOCK {
            codes[i] = round_to_fp4(x[i] / s);
        }
    }
    Ok(Mxfp4Block { scale, codes })
}

/// MXFP4 weight with blocks running along each row (the reduction axis).
#[derive(Debug, Clone, PartialEq)]
pub struct Mxfp4Weight {
    pub rows: usize,
    pub cols: usize,
    /// Row-major, `cols / 32` blocks per row.
    pub blocks: Vec<Mxfp4Block>,
}

impl Mxfp4Weight {
    pub fn blocks_per_row(&self) -> usize {
        self.cols / BLOCK
    }

    pub fn row_blocks(&self, i: usize) -> &[Mxfp4Block] {
        let k = self.blocks_per_row();
        &self.blocks[i * k..(i + 1) * k]
    }

    pub fn dequantize(&self) -> Matrix {
        let mut data = Vec::with_capacity(self.rows * self.cols);
        for b in &self.blocks {
            data.extend_from_slice(&b.dequantize());
        }
        Matrix { rows: self.rows, cols: self.cols, data }
    }
}

pub fn mxfp4_quantize_weight(w: &Matrix) -> Result<Mxfp4Weight> {
    if !w.cols.is_multiple_of(BLOCK) {
        return Err(MsdError::BlockMisaligned { dim: w.cols, block: BLOCK });
    }
    let blocks = w
        .data
        .chunks_exact(BLOCK)
        .map(mxfp4_quantize_block)
        .collect::<Result<Vec<_>>>()?;
    Ok(Mxfp4Weight { rows: w.rows, cols: w.cols, blocks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    const GRID: [f32; 8] = [0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75];

    /// Brute-force nearest grid value; ties go to the even index.
    fn oracle_fp4(s: f32) -> f32 {
        let a = s.abs().min(1.75);
        let mut best = 0;
        for i in 1..8 {
            let d = (GRID[i] - a).abs();
            let db = (GRID[best] - a).abs();
            if d < db || (d == db && i % 2 == 0) {
                best = i;
            }
        }
        GRID[best].copysign(s)
    }

    /// Every finite non-negative E4M3 value, enumerated from the definition.
    fn e4m3_values() -> Vec<f32> {
        let mut v = Vec::new();
        for m in 0..8 {
            v.push(m as f32 / 8.0 * 2f32.powi(-6));
        }
        for e in 1..16 {
            for m in 0..8 {
                if e == 15 && m == 7 {
                    continue;
                }
                v.push((1.0 + m as f32 / 8.0) * 2f32.powi(e - 7));
            }
        }
        v
    }

    #[test]
    fn fp4_grid_roundtrip() {
        for bits in 0..16u8 {
            let c = Fp4Code::from_bits(bits);
            let d = c.decode();
            assert!(GRID.contains(&d.abs()));
            if bits != 8 {
                assert_eq!(round_to_fp4(d), c);
            }
        }
    }

    #[test]
    fn fp4_examples() {
        assert_eq!(round_to_fp4(2.0).decode(), 1.75);
        assert_eq!(round_to_fp4(0.37).decode(), 0.25);
        assert_eq!(round_to_fp4(-1.80).decode(), -1.75);
        assert_eq!(round_to_fp4(0.125).decode(), 0.0);
        assert_eq!(round_to_fp4(0.375).decode(), 0.5);
    }

    #[test]
    fn alpha_examples() {
        assert_eq!(mxfp4_alpha(1.0).unwrap().exponent(), 0);
        assert_eq!(mxfp4_alpha(3.0).unwrap().exponent(), 1);
        assert_eq!(mxfp4_alpha(1.859375).unwrap().exponent(), 0);
        assert_eq!(mxfp4_alpha(0.0).unwrap(), E8m0Scale::ZERO_BLOCK);
        assert_eq!(mxfp4_alpha(1e38).unwrap().exponent(), 126);
        assert_eq!(mxfp4_alpha(f32::MAX), Err(MsdError::E8m0Overflow(128)));
        assert!(matches!(E8m0Scale::new(128), Err(MsdError::E8m0Overflow(128))));
    }

    #[test]
    fn alpha_matches_exponent_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10_000 {
            let m: f32 = rng.gen_range(1e-30f32..1e30);
            let e = mxfp4_alpha(m).unwrap().exponent();
            let scan = (-127..=127)
                .find(|&e| m as f64 <= 1.859375 * 2f64.powi(e))
                .unwrap();
            assert_eq!(e, scan);
        }
    }

    #[test]
    fn extremum_clip_residual() {
        let mut x = [0f32; BLOCK];
        x[0] = 1.859375;
        let b = mxfp4_decompose_block(&x, Mxfp4Variant::V3).unwrap();
        assert_eq!(b.alpha.exponent(), 0);
        assert_eq!(b.q1[0].decode(), 1.75);
        let r = x[0] - b.q1[0].decode();
        assert_eq!(r, 0.109375);
        assert!(r < 0.125);
        assert_eq!(mxfp4_reconstruct(&b)[0], 1.859375);
    }

    #[test]
    fn zero_and_exact_blocks() {
        let z = mxfp4_decompose_block(&[0.0; BLOCK], Mxfp4Variant::V3).unwrap();
        assert!(z.is_zero_block());
        assert_eq!(mxfp4_reconstruct(&z), [0.0; BLOCK]);

        let mut x = [0f32; BLOCK];
        x[5] = 1.75;
        let b = mxfp4_decompose_block(&x, Mxfp4Variant::V3).unwrap();
        assert_eq!(b.alpha.exponent(), 0);
        assert_eq!(b.q1[5].decode(), 1.75);
        assert!(b.q2.iter().all(|c| c.magnitude_index() == 0));
        assert_eq!(mxfp4_reconstruct(&b), x);
    }

    #[test]
    fn block_length_checked() {
        assert!(mxfp4_decompose_block(&[1.0; 31], Mxfp4Variant::V3).is_err());
        assert!(mxfp8_quantize_block(&[1.0; 33]).is_err());
    }

    #[test]
    fn beta_exponent_offset() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for v in [Mxfp4Variant::V1, Mxfp4Variant::V2, Mxfp4Variant::V3] {
            let x: Vec<f32> = (0..BLOCK).map(|_| rng.sample(StandardNormal)).collect();
            let mut ops = OpCounter::default();
            let b = mxfp4_decompose_block_counted(&x, v, &mut ops).unwrap();
            assert_eq!(b.beta.exponent(), b.alpha.exponent() - v.beta_shift());
            assert_eq!(ops.scale_max_reductions, 1);
            assert_eq!(ops.residual_max_reductions, 0);
        }
    }

    #[test]
    fn e4m3_encode_matches_enumeration() {
        let vals = e4m3_values();
        assert_eq!(*vals.last().unwrap(), 448.0);
        for (i, &v) in vals.iter().enumerate() {
            assert_eq!(E4m3::encode(v).decode(), v);
            assert_eq!(E4m3::encode(-v).decode(), -v);
            assert_eq!(E4m3::from_bits(i as u8).decode(), v);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50_000 {
            let a: f32 = rng.gen_range(0.0..500.0) * if rng.gen() { 1.0 } else { 1e-3 };
            let got = E4m3::encode(a).decode();
            // nearest enumerated value, ties to even mantissa
            let mut best = 0usize;
            for j in 1..vals.len() {
                let (d, db) = ((vals[j] - a).abs(), (vals[best] - a).abs());
                if d < db || (d == db && j % 2 == 0) {
                    best = j;
                }
            }
            let want = if a >= 448.0 { 448.0 } else { vals[best] };
            assert_eq!(got, want, "a={a}");
        }
    }

    #[test]
    fn mxfp8_examples() {
        let z = mxfp8_quantize_block(&[0.0; BLOCK]).unwrap();
        assert_eq!(z.dequantize(), [0.0; BLOCK]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let x: Vec<f32> = (0..BLOCK).map(|_| rng.sample(StandardNormal)).collect();
            let b = mxfp8_quantize_block(&x).unwrap();
            assert!(b.elems.iter().all(|e| e.decode().abs() <= 448.0));
            let m = abs_max(&x).unwrap();
            assert!(m / b.scale.value() <= 448.0);
        }
    }

    #[test]
    fn storage_accounting() {
        assert_eq!(MSD_MXFP4_BITS_PER_ELEMENT, 8.5);
        assert_eq!(MXFP8_BITS_PER_ELEMENT, 8.25);
    }

    #[test]
    fn grid_weight_exact() {
        let mut w = Matrix::zeros(32, 64);
        for i in 0..32 {
            w.data[i * 64 + i] = 1.5;
            w.data[i * 64 + 32 + i] = -0.75 * 4.0;
        }
        let q = mxfp4_quantize_weight(&w).unwrap();
        assert_eq!(q.dequantize(), w);
        let z = mxfp4_quantize_weight(&Matrix::zeros(2, 32)).unwrap();
        assert!(z.blocks.iter().all(|b| b.codes.iter().all(|c| c.magnitude_index() == 0)));
        assert!(matches!(
            mxfp4_quantize_weight(&Matrix::zeros(2, 40)),
            Err(MsdError::BlockMisaligned { dim: 40, block: 32 })
        ));
    }

    fn block_strategy() -> impl Strategy<Value = Vec<f32>> {
        (any::<u64>(), -40i32..40, 0u8..3).prop_map(|(seed, e, kind)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = 2f32.powi(e);
            (0..BLOCK)
                .map(|_| {
                    let v: f32 = match kind {
                        0 => rng.sample(StandardNormal),
                        1 => rng.gen_range(-3.0..3.0),
                        _ => rng.sample::<f32, _>(StandardNormal).powi(3),
                    };
                    v * s
                })
                .collect()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(5000))]

        #[test]
        fn round_to_fp4_matches_oracle(s in -4.0f32..4.0) {
            prop_assert_eq!(round_to_fp4(s).decode(), oracle_fp4(s));
        }

        #[test]
        fn theorem2_bound(x in block_strategy()) {
            let b = mxfp4_decompose_block(&x, Mxfp4Variant::V3).unwrap();
            let a = b.alpha.value() as f64;
            let rec = mxfp4_reconstruct(&b);
            for i in 0..BLOCK {
                prop_assert!((x[i] as f64 - rec[i] as f64).abs() <= a / 64.0);
            }
            let (rmax, _) = mxfp4_pass2_stats(&x, &b);
            prop_assert!(rmax as f64 <= a / 8.0);
        }

        #[test]
        fn mxfp8_never_exceeds_range(x in block_strategy()) {
            let b = mxfp8_quantize_block(&x).unwrap();
            for e in b.elems {
                prop_assert!(e.decode().abs() <= 448.0);
            }
        }
    }
}
