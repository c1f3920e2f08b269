//! Dense real and boolean matrix kernels.
//!
//! Both matrix kinds are row-major. All kernels are sequential and the loop
//! order is fixed, so results are bit-reproducible across runs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DenseMatrix {
    /// Builds a matrix from row-major values. Non-finite values are rejected.
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Length {
                expected: rows * cols,
                got: values.len(),
                context: "dense matrix values",
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite value at ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|row| row.len() != c) {
            return Err(Error::Length {
                expected: c,
                got: bad.len(),
                context: "ragged rows",
            });
        }
        Self::new(r, c, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.values[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                values.push(f(i, j));
            }
        }
        Self { rows, cols, values }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn abs(&self) -> Self {
        self.map(f64::abs)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| v * c)
    }

    pub fn max_entry(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        matmul(self, rhs)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoolMatrix {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl BoolMatrix {
    pub fn new(rows: usize, cols: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != rows * cols {
            return Err(Error::Length {
                expected: rows * cols,
                got: bits.len(),
                context: "bool matrix bits",
            });
        }
        Ok(Self { rows, cols, bits })
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|row| row.len() != c) {
            return Err(Error::Length {
                expected: c,
                got: bad.len(),
                context: "ragged rows",
            });
        }
        Self::new(r, c, rows.iter().flatten().map(|&b| b != 0).collect())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![false; rows * cols],
        }
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![true; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.bits[i * n + i] = true;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                bits.push(f(i, j));
            }
        }
        Self { rows, cols, bits }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.bits[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[bool] {
        &self.bits[i * self.cols..(i + 1) * self.cols]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn row_any(&self, i: usize) -> bool {
        self.row(i).iter().any(|&b| b)
    }

    pub fn col_any(&self, j: usize) -> bool {
        (0..self.rows).any(|i| self.get(i, j))
    }

    /// Per-column "has any 1" flags.
    pub fn col_support(&self) -> Vec<bool> {
        let mut out = vec![false; self.cols];
        for i in 0..self.rows {
            for (o, &b) in out.iter_mut().zip(self.row(i)) {
                *o |= b;
            }
        }
        out
    }

    /// Per-row "has any 1" flags.
    pub fn row_support(&self) -> Vec<bool> {
        (0..self.rows).map(|i| self.row_any(i)).collect()
    }

    /// True when every bit of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &BoolMatrix) -> bool {
        self.shape() == other.shape() && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }
}

fn check_inner(a: (usize, usize), b: (usize, usize), context: &'static str) -> Result<()> {
    if a.1 != b.0 {
        return Err(Error::Shape {
            left: a,
            right: b,
            context,
        });
    }
    Ok(())
}

fn check_same(a: (usize, usize), b: (usize, usize), context: &'static str) -> Result<()> {
    if a != b {
        return Err(Error::Shape {
            left: a,
            right: b,
            context,
        });
    }
    Ok(())
}

pub fn matmul(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    check_inner(a.shape(), b.shape(), "matmul")?;
    let (n, m, p) = (a.rows, a.cols, b.cols);
    let mut out = vec![0.0; n * p];
    for i in 0..n {
        let out_row = &mut out[i * p..(i + 1) * p];
        for k in 0..m {
            let aik = a.values[i * m + k];
            if aik == 0.0 {
                continue;
            }
            for (o, &bkj) in out_row.iter_mut().zip(b.row(k)) {
                *o += aik * bkj;
            }
        }
    }
    Ok(DenseMatrix {
        rows: n,
        cols: p,
        values: out,
    })
}

/// Entrywise product with a binary mask. Masked entries are written as `+0.0`.
pub fn hadamard(a: &DenseMatrix, m: &BoolMatrix) -> Result<DenseMatrix> {
    check_same(a.shape(), m.shape(), "hadamard")?;
    let values = a
        .values
        .iter()
        .zip(&m.bits)
        .map(|(&v, &keep)| if keep { v } else { 0.0 })
        .collect();
    Ok(DenseMatrix {
        rows: a.rows,
        cols: a.cols,
        values,
    })
}

pub fn entrywise_pow(a: &DenseMatrix, p: f64) -> Result<DenseMatrix> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::Domain(format!("exponent must be positive, got {p}")));
    }
    if let Some(pos) = a.values.iter().position(|&v| v < 0.0) {
        return Err(Error::Domain(format!(
            "negative entry {} at ({}, {}) raised to {p}",
            a.values[pos],
            pos / a.cols,
            pos % a.cols
        )));
    }
    let out = a.map(|v| v.powf(p));
    if out.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("overflow raising entries to {p}")));
    }
    Ok(out)
}

pub fn bool_matmul(a: &BoolMatrix, b: &BoolMatrix) -> Result<BoolMatrix> {
    check_inner(a.shape(), b.shape(), "bool_matmul")?;
    let mut out = BoolMatrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let out_row = &mut out.bits[i * b.cols..(i + 1) * b.cols];
        for j in 0..a.cols {
            if a.get(i, j) {
                for (o, &bj) in out_row.iter_mut().zip(b.row(j)) {
                    *o |= bj;
                }
            }
        }
    }
    Ok(out)
}

/// Divides every row by its sum of absolute values.
pub fn row_normalize(a: &DenseMatrix) -> Result<DenseMatrix> {
    let mut out = a.clone();
    for i in 0..a.rows {
        let s: f64 = a.row(i).iter().map(|v| v.abs()).sum();
        if s <= 0.0 {
            return Err(Error::DegenerateRow { row: i });
        }
        for v in &mut out.values[i * a.cols..(i + 1) * a.cols] {
            *v /= s;
        }
    }
    Ok(out)
}
