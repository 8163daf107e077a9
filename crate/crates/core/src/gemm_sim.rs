//! Simulated linear-layer pipelines.
//!
//! Every pipeline computes `y = x · Wᵀ` for an activation `x` of shape
//! `b x n` and a weight of shape `m x n`. Float accumulation always runs
//! sequentially over the reduction index, so results do not depend on
//! tiling or thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MsdError, Result};
use crate::matrix::{Matrix, QuantizedWeight, ScaleAxis, SimMatrix};
use crate::msd_int8::{decompose2_counted, decompose_k, Int8Decomposition, ScaleMode};
use crate::mx_formats::{
    mxfp4_decompose_block, mxfp8_quantize_block, Mxfp4Variant, Mxfp4Weight, BLOCK,
};
use crate::numerics::OpCounter;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GemmPipelineKind {
    Fp32Oracle,
    DequantBf16,
    SingleScaleInt8,
    MsdInt8,
    MsdInt8Fractional,
    Mxfp8Baseline,
    MsdMxfp4(Mxfp4Variant),
}

impl GemmPipelineKind {
    pub fn name(&self) -> String {
        match self {
            GemmPipelineKind::Fp32Oracle => "fp32_oracle".into(),
            GemmPipelineKind::DequantBf16 => "dequant".into(),
            GemmPipelineKind::SingleScaleInt8 => "single_scale".into(),
            GemmPipelineKind::MsdInt8 => "msd".into(),
            GemmPipelineKind::MsdInt8Fractional => "msd_fractional".into(),
            GemmPipelineKind::Mxfp8Baseline => "mxfp8".into(),
            GemmPipelineKind::MsdMxfp4(v) => format!("msd_mxfp4_{}", v.name()),
        }
    }
}

/// Largest reduction length for which INT8 x INT8 products cannot overflow
/// a signed 32-bit accumulator.
pub const INT32_SAFE_REDUCTION: usize = (i32::MAX as usize) / (128 * 127);

pub fn int32_accumulation_safe(n: usize) -> bool {
    n <= INT32_SAFE_REDUCTION
}

const TILE: usize = 256;

/// `out[r][o] = fold_j f(out[r][o], x[r][j], wt[j][o])` with `wt` the
/// transposed weight (`n x m`). The fold runs over `j` in order for every
/// output, tiles only split the output columns.
fn tiled_gemm<X, W, A, F>(x: &[X], b: usize, n: usize, wt: &[W], m: usize, f: F) -> Vec<A>
where
    X: Copy + Sync,
    W: Copy + Sync,
    A: Copy + Default + Send + Sync,
    F: Fn(A, X, W) -> A + Sync,
{
    debug_assert_eq!(x.len(), b * n);
    debug_assert_eq!(wt.len(), n * m);
    let tiles: Vec<(usize, Vec<A>)> = (0..m.div_ceil(TILE))
        .into_par_iter()
        .map(|t| {
            let lo = t * TILE;
            let w = TILE.min(m - lo);
            let mut acc = vec![A::default(); b * w];
            for j in 0..n {
                let wrow = &wt[j * m + lo..j * m + lo + w];
                for r in 0..b {
                    let xv = x[r * n + j];
                    let out = &mut acc[r * w..(r + 1) * w];
                    for (o, &wv) in out.iter_mut().zip(wrow) {
                        *o = f(*o, xv, wv);
                    }
                }
            }
            (lo, acc)
        })
        .collect();
    let mut out = vec![A::default(); b * m];
    for (lo, acc) in tiles {
        let w = acc.len() / b;
        for r in 0..b {
            out[r * m + lo..r * m + lo + w].copy_from_slice(&acc[r * w..(r + 1) * w]);
        }
    }
    out
}

fn transpose<T: Copy + Default>(data: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::default(); data.len()];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = data[i * cols + j];
        }
    }
    out
}

fn check_weight(x_cols: usize, w: &QuantizedWeight) -> Result<()> {
    if w.axis != ScaleAxis::Row {
        return Err(MsdError::InvalidArgument("linear weight must be row-scaled".into()));
    }
    if x_cols != w.cols {
        return Err(MsdError::ShapeMismatch(format!(
            "x has {x_cols} columns, weight is {}x{}",
            w.rows, w.cols
        )));
    }
    Ok(())
}

/// Float GEMM against an already dequantized binary32 weight, binary64
/// accumulation.
pub fn gemm_f64_reference(x: &Matrix, w: &Matrix) -> Result<Matrix> {
    if x.cols != w.cols {
        return Err(MsdError::ShapeMismatch(format!(
            "x has {} columns, weight has {}",
            x.cols, w.cols
        )));
    }
    let wt = transpose(&w.data, w.rows, w.cols);
    let acc = tiled_gemm(&x.data, x.rows, x.cols, &wt, w.rows, |a: f64, xv: f32, wv: f32| {
        a + xv as f64 * wv as f64
    });
    Matrix::new(x.rows, w.rows, acc.into_iter().map(|v| v as f32).collect())
}

/// Float GEMM with binary32 products and sequential binary32 accumulation.
pub fn gemm_f32(x: &Matrix, w: &Matrix) -> Result<Matrix> {
    if x.cols != w.cols {
        return Err(MsdError::ShapeMismatch(format!(
            "x has {} columns, weight has {}",
            x.cols, w.cols
        )));
    }
    let wt = transpose(&w.data, w.rows, w.cols);
    let acc = tiled_gemm(&x.data, x.rows, x.cols, &wt, w.rows, |a: f32, xv: f32, wv: f32| {
        a + xv * wv
    });
    Matrix::new(x.rows, w.rows, acc)
}

/// Ground truth: unmodified `x` against `s_W ⊙ W` in binary32, binary64
/// accumulation.
pub fn gemm_fp32_oracle(x: &Matrix, w: &QuantizedWeight) -> Result<Matrix> {
    check_weight(x.cols, w)?;
    gemm_f64_reference(x, &w.dequantize())
}

/// Baseline: BF16 activations against BF16-truncated dequantized weights,
/// binary32 accumulation.
pub fn gemm_dequant(x: &SimMatrix, w: &QuantizedWeight) -> Result<Matrix> {
    check_weight(x.cols(), w)?;
    let xb = x.to_bf16();
    gemm_f32(xb.matrix(), &w.dequantize_bf16())
}

/// Exact integer GEMM of `rows x n` codes against the transposed INT8
/// weight. Returns `rows x m` 64-bit sums.
fn int_gemm(codes: &[i8], rows: usize, n: usize, wt: &[i8], m: usize) -> Vec<i64> {
    if int32_accumulation_safe(n) {
        tiled_gemm(codes, rows, n, wt, m, |a: i32, xv: i8, wv: i8| {
            a + xv as i32 * wv as i32
        })
        .into_iter()
        .map(i64::from)
        .collect()
    } else {
        tiled_gemm(codes, rows, n, wt, m, |a: i64, xv: i8, wv: i8| {
            a + xv as i64 * wv as i64
        })
    }
}

/// Per-row decompositions of the activation.
fn decompose_rows(
    x: &Matrix,
    mode: ScaleMode,
    ops: &mut OpCounter,
) -> Result<Vec<Int8Decomposition>> {
    (0..x.rows).map(|i| decompose2_counted(x.row(i), mode, ops)).collect()
}

/// Integer results of both passes, `y1` and `y2`, each `b x m`.
#[derive(Debug, Clone, PartialEq)]
pub struct MsdIntermediate {
    pub y1: Vec<i64>,
    pub y2: Vec<i64>,
    pub decomps: Vec<Int8Decomposition>,
}

fn stack_codes(d: &[Int8Decomposition], first: bool) -> Vec<i8> {
    d.iter()
        .flat_map(|r| if first { r.x1.iter() } else { r.x2.iter() })
        .copied()
        .collect()
}

/// Two separate integer GEMMs, one per pass.
pub fn msd_int8_passes(
    x: &Matrix,
    w: &QuantizedWeight,
    mode: ScaleMode,
    ops: &mut OpCounter,
) -> Result<MsdIntermediate> {
    check_weight(x.cols, w)?;
    let decomps = decompose_rows(x, mode, ops)?;
    let wt = transpose(&w.values, w.rows, w.cols);
    let y1 = int_gemm(&stack_codes(&decomps, true), x.rows, x.cols, &wt, w.rows);
    let y2 = int_gemm(&stack_codes(&decomps, false), x.rows, x.cols, &wt, w.rows);
    Ok(MsdIntermediate { y1, y2, decomps })
}

/// Both passes as one integer GEMM over the `2b x n` stacked codes
/// `[X1; X2]`.
pub fn msd_int8_fused(
    x: &Matrix,
    w: &QuantizedWeight,
    mode: ScaleMode,
    ops: &mut OpCounter,
) -> Result<MsdIntermediate> {
    check_weight(x.cols, w)?;
    let decomps = decompose_rows(x, mode, ops)?;
    let wt = transpose(&w.values, w.rows, w.cols);
    let mut codes = stack_codes(&decomps, true);
    codes.extend(stack_codes(&decomps, false));
    let mut y = int_gemm(&codes, 2 * x.rows, x.cols, &wt, w.rows);
    let y2 = y.split_off(x.rows * w.rows);
    Ok(MsdIntermediate { y1: y, y2, decomps })
}

/// `y = s_W ⊙ (α y1 + β y2)` in binary32.
pub fn msd_reconstruct(inter: &MsdIntermediate, w: &QuantizedWeight) -> Matrix {
    let m = w.rows;
    let b = inter.decomps.len();
    let mut data = Vec::with_capacity(b * m);
    for (r, d) in inter.decomps.iter().enumerate() {
        for k in 0..m {
            let s = d.alpha * inter.y1[r * m + k] as f32 + d.beta * inter.y2[r * m + k] as f32;
            data.push(w.scales[k] * s);
        }
    }
    Matrix { rows: b, cols: m, data }
}

/// MSD-INT8 pipeline: per-row two-pass decomposition of `x`.
pub fn gemm_msd_int8(x: &SimMatrix, w: &QuantizedWeight, mode: ScaleMode) -> Result<Matrix> {
    let mut ops = OpCounter::default();
    gemm_msd_int8_counted(x, w, mode, &mut ops)
}

pub fn gemm_msd_int8_counted(
    x: &SimMatrix,
    w: &QuantizedWeight,
    mode: ScaleMode,
    ops: &mut OpCounter,
) -> Result<Matrix> {
    let inter = msd_int8_fused(x.matrix(), w, mode, ops)?;
    Ok(msd_reconstruct(&inter, w))
}

/// Coarse-scale INT8 only: `y = s_W ⊙ α y1`.
pub fn gemm_single_scale(x: &SimMatrix, w: &QuantizedWeight) -> Result<Matrix> {
    let xm = x.matrix();
    check_weight(xm.cols, w)?;
    let mut alphas = Vec::with_capacity(xm.rows);
    let mut codes = Vec::with_capacity(xm.rows * xm.cols);
    for i in 0..xm.rows {
        let k = decompose_k(xm.row(i), 1)?;
        alphas.push(k.scales[0]);
        codes.extend_from_slice(&k.components[0]);
    }
    let wt = transpose(&w.values, w.rows, w.cols);
    let y1 = int_gemm(&codes, xm.rows, xm.cols, &wt, w.rows);
    let m = w.rows;
    let data = y1
        .iter()
        .enumerate()
        .map(|(idx, &v)| w.scales[idx % m] * (alphas[idx / m] * v as f32))
        .collect();
    Ok(Matrix { rows: xm.rows, cols: m, data })
}

/// Activation-side quantizer for the MXFP4-weight GEMM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MxActivationMethod {
    Mxfp8,
    Msd(Mxfp4Variant),
}

impl MxActivationMethod {
    pub fn kind(self) -> GemmPipelineKind {
        match self {
            MxActivationMethod::Mxfp8 => GemmPipelineKind::Mxfp8Baseline,
            MxActivationMethod::Msd(v) => GemmPipelineKind::MsdMxfp4(v),
        }
    }
}

fn check_mx(x: &Matrix, w: &Mxfp4Weight) -> Result<()> {
    if x.cols != w.cols {
        return Err(MsdError::ShapeMismatch(format!(
            "x has {} columns, weight is {}x{}",
            x.cols, w.rows, w.cols
        )));
    }
    if !x.cols.is_multiple_of(BLOCK) {
        return Err(MsdError::BlockMisaligned { dim: x.cols, block: BLOCK });
    }
    Ok(())
}

/// Reference `X_fp32 · dequant(W_mx4)ᵀ`.
pub fn gemm_mx_reference(x: &Matrix, w: &Mxfp4Weight) -> Result<Matrix> {
    check_mx(x, w)?;
    gemm_f64_reference(x, &w.dequantize())
}

/// One activation component: per-block scales `b x (n/32)` and decoded
/// unscaled element values `b x n`.
struct MxComponent {
    scales: Vec<f32>,
    elems: Vec<f32>,
}

fn block_gemm(
    comps: &[MxComponent],
    b: usize,
    n: usize,
    w: &Mxfp4Weight,
    wt_elems: &[f32],
    w_scales: &[f32],
) -> Vec<f32> {
    // Per output and block: exact block sums of decoded products (binary64
    // holds them exactly), block scales applied, binary32 accumulation
    // across blocks in order.
    let m = w.rows;
    let nb = n / BLOCK;
    let mut out = vec![0f32; b * m];
    let mut part = vec![0f64; m];
    let mut blk = vec![0f32; m];
    for r in 0..b {
        let y = &mut out[r * m..(r + 1) * m];
        for k in 0..nb {
            blk.iter_mut().for_each(|v| *v = 0.0);
            for c in comps {
                part.iter_mut().for_each(|p| *p = 0.0);
                let xs = &c.elems[r * n + k * BLOCK..r * n + (k + 1) * BLOCK];
                for (j, &xv) in xs.iter().enumerate() {
                    if xv == 0.0 {
                        continue;
                    }
                    let wrow = &wt_elems[(k * BLOCK + j) * m..(k * BLOCK + j + 1) * m];
                    for (p, &wv) in part.iter_mut().zip(wrow) {
                        *p += xv as f64 * wv as f64;
                    }
                }
                let sa = c.scales[r * nb + k];
                for (o, &p) in blk.iter_mut().zip(&part) {
                    *o += sa * p as f32;
                }
            }
            for (o, (bv, &sw)) in y.iter_mut().zip(blk.iter().zip(&w_scales[k * m..(k + 1) * m])) {
                *o += sw * bv;
            }
        }
    }
    out
}

/// GEMM of block-quantized activations against an MXFP4 weight.
pub fn gemm_mxfp4(x: &Matrix, w: &Mxfp4Weight, method: MxActivationMethod) -> Result<Matrix> {
    check_mx(x, w)?;
    let (b, n, m) = (x.rows, x.cols, w.rows);
    let nb = n / BLOCK;
    let comps: Vec<MxComponent> = match method {
        MxActivationMethod::Mxfp8 => {
            let mut c = MxComponent { scales: Vec::with_capacity(b * nb), elems: Vec::with_capacity(b * n) };
            for blk in x.data.chunks_exact(BLOCK) {
                let q = mxfp8_quantize_block(blk)?;
                c.scales.push(q.scale.value());
                c.elems.extend(q.elems.iter().map(|e| e.decode()));
            }
            vec![c]
        }
        MxActivationMethod::Msd(v) => {
            let mut c1 = MxComponent { scales: Vec::with_capacity(b * nb), elems: Vec::with_capacity(b * n) };
            let mut c2 = MxComponent { scales: Vec::with_capacity(b * nb), elems: Vec::with_capacity(b * n) };
            for blk in x.data.chunks_exact(BLOCK) {
                let d = mxfp4_decompose_block(blk, v)?;
                c1.scales.push(d.alpha.value());
                c2.scales.push(d.beta.value());
                c1.elems.extend(d.q1.iter().map(|c| c.decode()));
                c2.elems.extend(d.q2.iter().map(|c| c.decode()));
            }
            vec![c1, c2]
        }
    };
    // transposed weight: decoded codes (n x m) and block scales (nb x m)
    let mut wt = vec![0f32; n * m];
    let mut ws = vec![0f32; nb * m];
    for o in 0..m {
        for (k, blk) in w.row_blocks(o).iter().enumerate() {
            ws[k * m + o] = blk.scale.value();
            for (j, c) in blk.codes.iter().enumerate() {
                wt[(k * BLOCK + j) * m + o] = c.decode();
            }
        }
    }
    // rows are independent; split them across threads
    let rows_per = 4usize;
    let chunks: Vec<Vec<f32>> = (0..b.div_ceil(rows_per))
        .into_par_iter()
        .map(|t| {
            let lo = t * rows_per;
            let hi = (lo + rows_per).min(b);
            let sub: Vec<MxComponent> = comps
                .iter()
                .map(|c| MxComponent {
                    scales: c.scales[lo * nb..hi * nb].to_vec(),
                    elems: c.elems[lo * n..hi * n].to_vec(),
                })
                .collect();
            block_gemm(&sub, hi - lo, n, w, &wt, &ws)
        })
        .collect();
    Matrix::new(b, m, chunks.concat())
}
