//! Error metrics. All arithmetic is binary64 with fixed-order summation.

use serde::{Deserialize, Serialize};

use crate::error::{MsdError, Result};
use crate::mx_formats::{mxfp4_pass2_stats, mxfp4_reconstruct, MxBlockPair};

pub const THRESHOLDS: [f64; 4] = [0.001, 0.005, 0.01, 0.05];

/// Fraction of elements whose pointwise relative error exceeds each
/// threshold.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Exceedance {
    pub gt_0_1pct: f64,
    pub gt_0_5pct: f64,
    pub gt_1pct: f64,
    pub gt_5pct: f64,
}

impl Exceedance {
    pub fn as_array(&self) -> [f64; 4] {
        [self.gt_0_1pct, self.gt_0_5pct, self.gt_1pct, self.gt_5pct]
    }

    pub fn is_monotone(&self) -> bool {
        self.as_array().windows(2).all(|w| w[0] >= w[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub l2_rel: f64,
    pub exceed: Exceedance,
    pub eff_bits: f64,
    pub max_bound_ratio: Option<f64>,
    pub clip_rate: Option<f64>,
    /// Elements skipped by the pointwise metrics because the reference is 0.
    pub excluded_zero_refs: usize,
}

fn check_len(y: &[f32], y_ref: &[f32]) -> Result<()> {
    if y.len() != y_ref.len() {
        return Err(MsdError::ShapeMismatch(format!(
            "{} vs {} elements",
            y.len(),
            y_ref.len()
        )));
    }
    Ok(())
}

/// Squared error and squared reference norm, for pooling across trials.
pub fn l2_parts(y: &[f32], y_ref: &[f32]) -> Result<(f64, f64)> {
    check_len(y, y_ref)?;
    let mut num = 0f64;
    let mut den = 0f64;
    for (&a, &b) in y.iter().zip(y_ref) {
        let d = a as f64 - b as f64;
        num += d * d;
        den += b as f64 * b as f64;
    }
    Ok((num, den))
}

/// `||y - y_ref||_2 / ||y_ref||_2`.
pub fn l2_relative(y: &[f32], y_ref: &[f32]) -> Result<f64> {
    let (num, den) = l2_parts(y, y_ref)?;
    if den == 0.0 {
        return Err(MsdError::DegenerateReference);
    }
    Ok((num / den).sqrt())
}

/// Counts of elements above each threshold, and the number of zero
/// references skipped.
pub fn exceed_counts(y: &[f32], y_ref: &[f32]) -> Result<([u64; 4], u64, u64)> {
    check_len(y, y_ref)?;
    let mut counts = [0u64; 4];
    let mut excluded = 0u64;
    for (&a, &b) in y.iter().zip(y_ref) {
        if b == 0.0 {
            excluded += 1;
            continue;
        }
        let rel = ((a as f64 - b as f64) / b as f64).abs();
        for (c, &t) in counts.iter_mut().zip(&THRESHOLDS) {
            if rel > t {
                *c += 1;
            }
        }
    }
    let considered = y.len() as u64 - excluded;
    Ok((counts, considered, excluded))
}

pub fn exceed_fraction(y: &[f32], y_ref: &[f32], threshold: f64) -> Result<f64> {
    check_len(y, y_ref)?;
    let mut hit = 0u64;
    let mut n = 0u64;
    for (&a, &b) in y.iter().zip(y_ref) {
        if b == 0.0 {
            continue;
        }
        n += 1;
        if ((a as f64 - b as f64) / b as f64).abs() > threshold {
            hit += 1;
        }
    }
    Ok(if n == 0 { 0.0 } else { hit as f64 / n as f64 })
}

/// `-log2(l2_rel)`; `+inf` for an exact result.
pub fn effective_bits(l2_rel: f64) -> f64 {
    if l2_rel == 0.0 {
        f64::INFINITY
    } else {
        -l2_rel.log2()
    }
}

pub fn error_report(y: &[f32], y_ref: &[f32]) -> Result<ErrorReport> {
    let l2 = l2_relative(y, y_ref)?;
    let (counts, considered, excluded) = exceed_counts(y, y_ref)?;
    let frac = |c: u64| if considered == 0 { 0.0 } else { c as f64 / considered as f64 };
    Ok(ErrorReport {
        l2_rel: l2,
        exceed: Exceedance {
            gt_0_1pct: frac(counts[0]),
            gt_0_5pct: frac(counts[1]),
            gt_1pct: frac(counts[2]),
            gt_5pct: frac(counts[3]),
        },
        eff_bits: effective_bits(l2),
        max_bound_ratio: None,
        clip_rate: None,
        excluded_zero_refs: excluded as usize,
    })
}

/// Tightness of the per-block `alpha/64` bound over a set of decomposed
/// blocks.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BoundReport {
    pub blocks: u64,
    pub elements: u64,
    pub max_ratio: f64,
    pub violations: u64,
    pub clipped: u64,
    /// Largest pass-1 residual relative to `alpha/8`.
    pub max_pass1_ratio: f64,
    pub err_sq: f64,
    pub ref_sq: f64,
}

impl BoundReport {
    pub fn clip_rate(&self) -> f64 {
        if self.elements == 0 {
            0.0
        } else {
            self.clipped as f64 / self.elements as f64
        }
    }

    pub fn eff_bits(&self) -> f64 {
        if self.ref_sq == 0.0 {
            f64::INFINITY
        } else {
            effective_bits((self.err_sq / self.ref_sq).sqrt())
        }
    }

    /// Accumulates one block. `x` is the original block.
    pub fn add(&mut self, x: &[f32], b: &MxBlockPair) {
        self.blocks += 1;
        self.elements += x.len() as u64;
        let rec = mxfp4_reconstruct(b);
        let a = b.alpha.value() as f64;
        let (rmax, clipped) = mxfp4_pass2_stats(x, b);
        self.clipped += clipped as u64;
        if b.is_zero_block() {
            return;
        }
        self.max_pass1_ratio = self.max_pass1_ratio.max(rmax as f64 / (a / 8.0));
        let bound = a / 64.0;
        for (&v, &r) in x.iter().zip(&rec) {
            let e = (v as f64 - r as f64).abs();
            let ratio = e / bound;
            self.max_ratio = self.max_ratio.max(ratio);
            if ratio > 1.0 {
                self.violations += 1;
            }
            self.err_sq += e * e;
            self.ref_sq += v as f64 * v as f64;
        }
    }

    pub fn merge(&mut self, o: &BoundReport) {
        self.blocks += o.blocks;
        self.elements += o.elements;
        self.max_ratio = self.max_ratio.max(o.max_ratio);
        self.violations += o.violations;
        self.clipped += o.clipped;
        self.max_pass1_ratio = self.max_pass1_ratio.max(o.max_pass1_ratio);
        self.err_sq += o.err_sq;
        self.ref_sq += o.ref_sq;
    }
}

/// Max ratio of error to `alpha/64` and the pass-2 clip rate.
pub fn bound_ratio_report<'a, I>(blocks: I) -> Result<BoundReport>
where
    I: IntoIterator<Item = (&'a [f32], &'a MxBlockPair)>,
{
    let mut rep = BoundReport::default();
    for (x, b) in blocks {
        rep.add(x, b);
    }
    if rep.blocks == 0 {
        return Err(MsdError::InvalidArgument("no blocks".into()));
    }
    Ok(rep)
}
