//! Dense double-precision kernel with circular index semantics.
//!
//! Every module above is assembled from the handful of operations here:
//! circular shifts, circular correlation, row softmax, `p`-norms and a
//! lowest-index argmax. All values are immutable once built and every
//! operation returns a fresh value.

use std::ops::{Add, Neg};

use serde::{Deserialize, Serialize};

use crate::error::{param_err, shape_err, Error, Result};

/// Row/column view of a rank-1 or rank-2 grid. A rank-1 grid is one row.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Plane {
    pub rows: usize,
    pub cols: usize,
}

impl Plane {
    pub fn of(shape: &[usize]) -> Self {
        match *shape {
            [n] => Plane { rows: 1, cols: n },
            [h, w] => Plane { rows: h, cols: w },
            _ => unreachable!("grid rank is validated on construction"),
        }
    }

    pub fn len(self) -> usize {
        self.rows * self.cols
    }

    /// Flat index of `(r, c)` after wrapping both coordinates.
    pub fn wrap(self, r: i64, c: i64) -> usize {
        let r = r.rem_euclid(self.rows as i64) as usize;
        let c = c.rem_euclid(self.cols as i64) as usize;
        r * self.cols + c
    }
}

/// A per-axis factor lifted to the plane view.
pub(crate) fn plane_factor(rank: usize, f: usize) -> (usize, usize) {
    if rank == 1 {
        (1, f)
    } else {
        (f, f)
    }
}

pub(crate) fn validate_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() || shape.len() > 2 {
        return shape_err(format!("grid rank must be 1 or 2, got {}", shape.len()));
    }
    if shape.contains(&0) {
        return shape_err(format!("grid axes must be non-empty, got {shape:?}"));
    }
    Ok(())
}

/// A rank-1 or rank-2 multi-channel signal, stored position-major with
/// channels innermost. Reads through [`GridSignal::at`] wrap around every axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSignalRepr")]
pub struct GridSignal {
    shape: Vec<usize>,
    channels: usize,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct GridSignalRepr {
    shape: Vec<usize>,
    channels: usize,
    data: Vec<f64>,
}

impl TryFrom<GridSignalRepr> for GridSignal {
    type Error = Error;

    fn try_from(r: GridSignalRepr) -> Result<Self> {
        GridSignal::new(r.shape, r.channels, r.data)
    }
}

impl GridSignal {
    pub fn new(shape: Vec<usize>, channels: usize, data: Vec<f64>) -> Result<Self> {
        validate_shape(&shape)?;
        if channels == 0 {
            return shape_err("signal needs at least one channel");
        }
        let expected = shape.iter().product::<usize>() * channels;
        if data.len() != expected {
            return shape_err(format!(
                "signal of shape {shape:?} x {channels} needs {expected} values, got {}",
                data.len()
            ));
        }
        Ok(Self { shape, channels, data })
    }

    /// Single-channel rank-1 signal.
    pub fn from_vec(data: Vec<f64>) -> Result<Self> {
        Self::new(vec![data.len()], 1, data)
    }

    pub fn zeros(shape: Vec<usize>, channels: usize) -> Result<Self> {
        let len = shape.iter().product::<usize>() * channels;
        Self::new(shape, channels, vec![0.0; len])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Number of grid positions (product of the shape).
    pub fn positions(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Channel vector at flat position `pos`.
    pub fn position(&self, pos: usize) -> &[f64] {
        &self.data[pos * self.channels..(pos + 1) * self.channels]
    }

    /// Circular read: each coordinate is taken modulo its axis length.
    pub fn at(&self, index: &[i64], channel: usize) -> f64 {
        assert_eq!(index.len(), self.rank(), "index rank mismatch");
        let plane = self.plane();
        let pos = match *index {
            [n] => plane.wrap(0, n),
            [r, c] => plane.wrap(r, c),
            _ => unreachable!(),
        };
        self.data[pos * self.channels + channel]
    }

    pub(crate) fn plane(&self) -> Plane {
        Plane::of(&self.shape)
    }

    pub(crate) fn from_raw(shape: Vec<usize>, channels: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), shape.iter().product::<usize>() * channels);
        Self { shape, channels, data }
    }
}

/// Per-axis integer shift. Offsets may be any integer; they act modulo the
/// axis length of whatever grid they are applied to.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OffsetVector(Vec<i64>);

impl OffsetVector {
    pub fn new(offsets: Vec<i64>) -> Self {
        Self(offsets)
    }

    pub fn zeros(rank: usize) -> Self {
        Self(vec![0; rank])
    }

    /// The same offset on every axis.
    pub fn splat(rank: usize, value: i64) -> Self {
        Self(vec![value; rank])
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[i64] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&o| o == 0)
    }

    /// Offsets reduced into `[0, n)` for each axis length `n`.
    pub fn normalized(&self, shape: &[usize]) -> Vec<usize> {
        self.0.iter().zip(shape).map(|(&o, &n)| o.rem_euclid(n as i64) as usize).collect()
    }

    pub(crate) fn plane(&self) -> (i64, i64) {
        match *self.0.as_slice() {
            [m] => (0, m),
            [r, c] => (r, c),
            _ => unreachable!("offset rank is checked by callers"),
        }
    }
}

impl From<Vec<i64>> for OffsetVector {
    fn from(v: Vec<i64>) -> Self {
        Self(v)
    }
}

impl From<&[usize]> for OffsetVector {
    fn from(v: &[usize]) -> Self {
        Self(v.iter().map(|&x| x as i64).collect())
    }
}

impl Add for &OffsetVector {
    type Output = OffsetVector;

    /// Panics when the ranks differ.
    fn add(self, rhs: &OffsetVector) -> OffsetVector {
        assert_eq!(self.rank(), rhs.rank(), "offset rank mismatch");
        OffsetVector(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl Neg for &OffsetVector {
    type Output = OffsetVector;

    fn neg(self) -> OffsetVector {
        OffsetVector(self.0.iter().map(|o| -o).collect())
    }
}

/// Dense row-major matrix with finite entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct MatrixRepr {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<MatrixRepr> for Matrix {
    type Error = Error;

    fn try_from(r: MatrixRepr) -> Result<Self> {
        Matrix::new(r.rows, r.cols, r.data)
    }
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return shape_err(format!("{rows}x{cols} matrix needs {} entries, got {}", rows * cols, data.len()));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return param_err(format!("matrix entries must be finite, found {bad}"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return shape_err("ragged rows");
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = vec![0.0; self.data.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        Matrix::from_raw(self.cols, self.rows, out)
    }

    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return shape_err(format!("cannot multiply {}x{} by {}x{}", self.rows, self.cols, rhs.rows, rhs.cols));
        }
        let mut out = vec![0.0; self.rows * rhs.cols];
        for r in 0..self.rows {
            let dst = &mut out[r * rhs.cols..(r + 1) * rhs.cols];
            for (k, &a) in self.row(r).iter().enumerate() {
                for (d, &b) in dst.iter_mut().zip(rhs.row(k)) {
                    *d += a * b;
                }
            }
        }
        Ok(Matrix::from_raw(self.rows, rhs.cols, out))
    }

    /// Largest absolute entry-wise difference; infinite when shapes differ.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        if self.rows != other.rows || self.cols != other.cols {
            return f64::INFINITY;
        }
        max_abs_diff(&self.data, &other.data)
    }
}

/// Largest absolute entry-wise difference; infinite when lengths differ.
pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `out[n] = s[(n + off) mod shape]` on every axis and channel.
pub fn circular_shift(s: &GridSignal, off: &OffsetVector) -> Result<GridSignal> {
    if off.rank() != s.rank() {
        return shape_err(format!("offset rank {} does not match signal rank {}", off.rank(), s.rank()));
    }
    let plane = s.plane();
    let (dr, dc) = off.plane();
    let ch = s.channels;
    let mut out = Vec::with_capacity(s.data.len());
    for r in 0..plane.rows {
        for c in 0..plane.cols {
            let src = plane.wrap(r as i64 + dr, c as i64 + dc);
            out.extend_from_slice(&s.data[src * ch..(src + 1) * ch]);
        }
    }
    Ok(GridSignal::from_raw(s.shape.clone(), ch, out))
}

/// Circular correlation `out[n] = sum_l s[(n + l) mod N] * h[l]` with a
/// kernel of the same rank, single channel in and out.
pub fn circular_conv(s: &GridSignal, kernel: &GridSignal) -> Result<GridSignal> {
    if s.channels != 1 || kernel.channels != 1 {
        return shape_err("circular_conv works on single-channel signals");
    }
    if s.rank() != kernel.rank() {
        return shape_err("kernel rank must match signal rank");
    }
    if kernel.shape.iter().zip(&s.shape).any(|(p, n)| p > n) {
        return shape_err(format!("kernel {:?} is longer than signal {:?}", kernel.shape, s.shape));
    }
    let plane = s.plane();
    let kp = kernel.plane();
    let mut out = Vec::with_capacity(plane.len());
    for r in 0..plane.rows {
        for c in 0..plane.cols {
            let mut acc = 0.0;
            for kr in 0..kp.rows {
                for kc in 0..kp.cols {
                    let src = plane.wrap((r + kr) as i64, (c + kc) as i64);
                    acc += s.data[src] * kernel.data[kr * kp.cols + kc];
                }
            }
            out.push(acc);
        }
    }
    Ok(GridSignal::from_raw(s.shape.clone(), 1, out))
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(m: &Matrix) -> Matrix {
    let mut out = Vec::with_capacity(m.data.len());
    for r in 0..m.rows {
        let row = m.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        out.extend(exps.into_iter().map(|e| e / total));
    }
    Matrix::from_raw(m.rows, m.cols, out)
}

fn check_p(p: f64) -> Result<()> {
    if p.is_nan() || p < 1.0 {
        return param_err(format!("p-norm needs p >= 1, got {p}"));
    }
    Ok(())
}

/// `(sum |v_i|^p)^(1/p)`; `p = inf` gives the max-abs norm.
pub fn lp_norm(v: &[f64], p: f64) -> Result<f64> {
    check_p(p)?;
    Ok(if p == 1.0 {
        v.iter().map(|x| x.abs()).sum()
    } else if p == 2.0 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    } else if p.is_infinite() {
        v.iter().map(|x| x.abs()).fold(0.0, f64::max)
    } else {
        v.iter().map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    })
}

/// As [`lp_norm`], but the result does not depend on the order of `v`:
/// the powered terms are summed in sorted order.
pub fn lp_norm_sorted(v: &[f64], p: f64) -> Result<f64> {
    check_p(p)?;
    if p.is_infinite() {
        return lp_norm(v, p);
    }
    let total = sorted_sum(v.iter().map(|x| {
        if p == 1.0 {
            x.abs()
        } else if p == 2.0 {
            x * x
        } else {
            x.abs().powf(p)
        }
    }));
    Ok(if p == 1.0 {
        total
    } else if p == 2.0 {
        total.sqrt()
    } else {
        total.powf(1.0 / p)
    })
}

/// Sum of the values in ascending order. Any permutation of the same
/// multiset gives a bit-identical result.
pub fn sorted_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.into_iter().collect();
    v.sort_by(f64::total_cmp);
    v.into_iter().sum()
}

/// Smallest index attaining the maximum.
pub fn argmax_tiebreak(scores: &[f64]) -> Result<usize> {
    argmax_with_ties(scores).map(|(i, _)| i)
}

/// Lowest-index argmax together with whether another index attains the
/// same maximum exactly.
pub fn argmax_with_ties(scores: &[f64]) -> Result<(usize, bool)> {
    if scores.is_empty() {
        return param_err("argmax of an empty vector");
    }
    if let Some(bad) = scores.iter().find(|s| s.is_nan()) {
        return param_err(format!("argmax input must be finite, found {bad}"));
    }
    let mut best = 0;
    let mut tied = false;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
            tied = false;
        } else if s == scores[best] {
            tied = true;
        }
    }
    Ok((best, tied))
}
