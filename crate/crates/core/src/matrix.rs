//! Dense row-major containers shared by the pipelines.

use crate::error::{MsdError, Result};
use crate::numerics::mask_bf16;

/// Dense row-major binary32 matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(MsdError::ShapeMismatch(format!(
                "{} elements for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.data[i * self.cols + j]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Activation matrix backed by binary32 storage. `bf16` records whether every
/// entry has been truncated to the BF16 grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SimMatrix {
    inner: Matrix,
    bf16: bool,
}

impl SimMatrix {
    pub fn from_fp32(inner: Matrix) -> Self {
        Self { inner, bf16: false }
    }

    /// Truncates every entry to BF16.
    pub fn from_fp32_truncated(mut inner: Matrix) -> Self {
        for v in &mut inner.data {
            *v = mask_bf16(*v);
        }
        Self { inner, bf16: true }
    }

    pub fn to_bf16(&self) -> SimMatrix {
        if self.bf16 {
            self.clone()
        } else {
            Self::from_fp32_truncated(self.inner.clone())
        }
    }

    pub fn is_bf16(&self) -> bool {
        self.bf16
    }

    pub fn matrix(&self) -> &Matrix {
        &self.inner
    }

    pub fn into_matrix(self) -> Matrix {
        self.inner
    }

    pub fn rows(&self) -> usize {
        self.inner.rows
    }

    pub fn cols(&self) -> usize {
        self.inner.cols
    }

    pub fn row(&self, i: usize) -> &[f32] {
        self.inner.row(i)
    }

    pub fn data(&self) -> &[f32] {
        &self.inner.data
    }
}

/// Which dimension the dequantization scales run along.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleAxis {
    /// One scale per row (per output channel of a linear weight).
    Row,
    /// One scale per column (per head-dim channel of a K/V cache).
    Column,
}

/// INT8 tensor plus binary32 dequantization scales.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedWeight {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<i8>,
    pub scales: Vec<f32>,
    pub axis: ScaleAxis,
}

impl QuantizedWeight {
    pub fn new(
        rows: usize,
        cols: usize,
        values: Vec<i8>,
        scales: Vec<f32>,
        axis: ScaleAxis,
    ) -> Result<Self> {
        let expected_scales = match axis {
            ScaleAxis::Row => rows,
            ScaleAxis::Column => cols,
        };
        if values.len() != rows * cols || scales.len() != expected_scales {
            return Err(MsdError::ShapeMismatch(format!(
                "{} values / {} scales for a {rows}x{cols} {axis:?}-scaled tensor",
                values.len(),
                scales.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            values,
            scales,
            axis,
        })
    }

    #[inline]
    pub fn row_values(&self, i: usize) -> &[i8] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn scale(&self, i: usize, j: usize) -> f32 {
        match self.axis {
            ScaleAxis::Row => self.scales[i],
            ScaleAxis::Column => self.scales[j],
        }
    }

    /// `scale ⊙ values` in binary32.
    pub fn dequantize(&self) -> Matrix {
        let mut data = Vec::with_capacity(self.values.len());
        for i in 0..self.rows {
            for (j, &v) in self.row_values(i).iter().enumerate() {
                data.push(v as f32 * self.scale(i, j));
            }
        }
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    /// Dequantizes and then BF16-truncates every entry, as the baseline
    /// pipelines do before a BF16xBF16 GEMM.
    pub fn dequantize_bf16(&self) -> Matrix {
        let mut m = self.dequantize();
        for v in &mut m.data {
            *v = mask_bf16(*v);
        }
        m
    }
}
