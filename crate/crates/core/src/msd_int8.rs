//! Two-pass and K-pass INT8 decomposition.
//!
//! A vector `x` is written as `alpha * x1 + beta * x2` where `alpha` comes
//! from `max |x|` and `beta` is a fixed fraction of `alpha`. The residual of
//! the first pass is never reduced: its range is known from the rounding.

use serde::{Deserialize, Serialize};

use crate::error::{MsdError, Result};
use crate::numerics::{abs_max, div_toward_zero, round_clamp_i8, OpCounter};

pub const INT8_MIN: i64 = -128;
pub const INT8_MAX: i64 = 127;

/// Denominators for the primary and secondary scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, Hash)]
#[serde(rename_all = "snake_case")]
pub enum ScaleMode {
    /// `alpha = M/127`, `beta = alpha/254`.
    #[default]
    Standard,
    /// `alpha = M/127.49`, `beta = alpha/254.98`.
    Fractional,
}

impl ScaleMode {
    pub fn primary_divisor(self) -> f64 {
        match self {
            ScaleMode::Standard => 127.0,
            ScaleMode::Fractional => 127.49,
        }
    }

    pub fn secondary_divisor(self) -> f64 {
        match self {
            ScaleMode::Standard => 254.0,
            ScaleMode::Fractional => 254.98,
        }
    }

    /// Worst-case reconstruction error as a fraction of `max |x|`.
    pub fn bound_fraction(self) -> f64 {
        1.0 / (self.primary_divisor() * self.secondary_divisor() * 2.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Int8Decomposition {
    pub alpha: f32,
    pub beta: f32,
    pub x1: Vec<i8>,
    pub x2: Vec<i8>,
    pub mode: ScaleMode,
}

impl Int8Decomposition {
    pub fn len(&self) -> usize {
        self.x1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x1.is_empty()
    }

    /// `alpha * x1 + beta * x2` in binary32.
    pub fn reconstruct(&self) -> Vec<f32> {
        reconstruct(self)
    }

    /// `alpha * x1 + beta * x2` evaluated exactly in binary64.
    pub fn reconstruct_exact(&self) -> Vec<f64> {
        let (a, b) = (self.alpha as f64, self.beta as f64);
        self.x1
            .iter()
            .zip(&self.x2)
            .map(|(&p, &q)| a * p as f64 + b * q as f64)
            .collect()
    }
}

#[inline]
fn quantize_code(v: f64, scale: f64) -> i8 {
    round_clamp_i8(v / scale)
}

/// `x - scale * code`. Both products are exact in binary64, so the only
/// rounding is the final narrowing to binary32.
#[inline]
fn residual(x: f32, scale: f32, code: i8) -> f32 {
    (x as f64 - scale as f64 * code as f64) as f32
}

fn check_input(x: &[f32]) -> Result<f32> {
    if x.is_empty() {
        return Err(MsdError::InvalidArgument("empty vector".into()));
    }
    abs_max(x)
}

/// Two-pass decomposition with the primary scale taken from `max |x|`.
pub fn decompose2(x: &[f32], mode: ScaleMode) -> Result<Int8Decomposition> {
    let mut ops = OpCounter::default();
    decompose2_counted(x, mode, &mut ops)
}

/// As [`decompose2`], recording the reductions it performs.
pub fn decompose2_counted(
    x: &[f32],
    mode: ScaleMode,
    ops: &mut OpCounter,
) -> Result<Int8Decomposition> {
    let m = check_input(x)?;
    ops.scale_max_reductions += 1;
    let alpha = div_toward_zero(m, mode.primary_divisor());
    Ok(decompose_with_alpha(x, alpha, mode))
}

/// Two-pass decomposition with a caller-supplied primary scale. No reduction
/// over `x` is performed; values beyond `127 * alpha` clip.
pub fn decompose2_with_scale(
    x: &[f32],
    alpha: f32,
    mode: ScaleMode,
    ops: &mut OpCounter,
) -> Result<Int8Decomposition> {
    if x.is_empty() {
        return Err(MsdError::InvalidArgument("empty vector".into()));
    }
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(MsdError::InvalidArgument(format!("bad scale {alpha}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(MsdError::NonFinite);
    }
    ops.constant_scale_decompositions += 1;
    Ok(decompose_with_alpha(x, alpha, mode))
}

fn decompose_with_alpha(x: &[f32], alpha: f32, mode: ScaleMode) -> Int8Decomposition {
    let n = x.len();
    if alpha == 0.0 {
        return Int8Decomposition {
            alpha: 0.0,
            beta: 0.0,
            x1: vec![0; n],
            x2: vec![0; n],
            mode,
        };
    }
    let beta = div_toward_zero(alpha, mode.secondary_divisor());
    let (a, b) = (alpha as f64, beta as f64);
    let mut x1 = vec![0i8; n];
    let mut x2 = vec![0i8; n];
    for ((&v, c1), c2) in x.iter().zip(x1.iter_mut()).zip(x2.iter_mut()) {
        let q1 = quantize_code(v as f64, a);
        *c1 = q1;
        *c2 = quantize_code(residual(v, alpha, q1) as f64, b);
    }
    Int8Decomposition { alpha, beta, x1, x2, mode }
}

pub fn reconstruct(d: &Int8Decomposition) -> Vec<f32> {
    d.x1
        .iter()
        .zip(&d.x2)
        .map(|(&p, &q)| d.alpha * p as f32 + d.beta * q as f32)
        .collect()
}

/// Pass-1 residual `x - alpha * x1` recomputed from the source vector.
pub fn pass1_residual(x: &[f32], d: &Int8Decomposition) -> Vec<f32> {
    x.iter()
        .zip(&d.x1)
        .map(|(&v, &q)| residual(v, d.alpha, q))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KDecomposition {
    pub scales: Vec<f32>,
    pub components: Vec<Vec<i8>>,
}

impl KDecomposition {
    pub fn k(&self) -> usize {
        self.scales.len()
    }

    pub fn reconstruct(&self) -> Vec<f32> {
        let n = self.components.first().map_or(0, Vec::len);
        let mut out = vec![0f32; n];
        for (s, c) in self.scales.iter().zip(&self.components) {
            for (o, &q) in out.iter_mut().zip(c) {
                *o += s * q as f32;
            }
        }
        out
    }

    pub fn reconstruct_exact(&self) -> Vec<f64> {
        let n = self.components.first().map_or(0, Vec::len);
        let mut out = vec![0f64; n];
        for (s, c) in self.scales.iter().zip(&self.components) {
            for (o, &q) in out.iter_mut().zip(c) {
                *o += *s as f64 * q as f64;
            }
        }
        out
    }
}

/// K-pass decomposition in standard mode. Each scale after the first is the
/// previous one divided by 254.
pub fn decompose_k(x: &[f32], k: usize) -> Result<KDecomposition> {
    if k == 0 {
        return Err(MsdError::InvalidArgument("k must be at least 1".into()));
    }
    let m = check_input(x)?;
    let mode = ScaleMode::Standard;
    let mut scales = Vec::with_capacity(k);
    let mut components = Vec::with_capacity(k);
    if m == 0.0 {
        return Ok(KDecomposition {
            scales: vec![0.0; k],
            components: vec![vec![0; x.len()]; k],
        });
    }
    let mut scale = div_toward_zero(m, mode.primary_divisor());
    let mut r = x.to_vec();
    for pass in 0..k {
        if pass > 0 {
            scale = div_toward_zero(scale, mode.secondary_divisor());
        }
        let s = scale as f64;
        let codes: Vec<i8> = r.iter().map(|&v| quantize_code(v as f64, s)).collect();
        for (v, &q) in r.iter_mut().zip(&codes) {
            *v = residual(*v, scale, q);
        }
        scales.push(scale);
        components.push(codes);
    }
    Ok(KDecomposition { scales, components })
}
