//! Dense row-major tensors with deterministic numerics.
//!
//! Everything downstream (attention kernels, gating, the grouped executor,
//! the loop oracles) is built on this container. Two properties are load
//! bearing and hold for every operation in this module:
//!
//! * **Fixed accumulation order.** Reductions and contractions always add
//!   terms in ascending index order, single threaded. Repeating a call with
//!   identical inputs yields bit-identical output.
//! * **No silent precision changes.** `Tensor<f32>` runs the same algorithm
//!   as `Tensor<f64>` with f32 arithmetic throughout; nothing upcasts behind
//!   the caller's back.
//!
//! Shapes are lists of positive dimension sizes. Rank 0 (shape `[]`,
//! one element) is the scalar produced by reducing over every axis.

use crate::error::{CaaError, Result};

// ───────────────────────────── element types ─────────────────────────────

/// Element dtype tag, used by the on-disk container format and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn tag(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Dtype::F32),
            1 => Some(Dtype::F64),
            _ => None,
        }
    }

    pub fn size_bytes(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dtype::F32 => "f32",
            Dtype::F64 => "f64",
        }
    }
}

/// Scalar element of a tensor: `f32` or `f64`.
pub trait Scalar:
    Copy
    + PartialEq
    + PartialOrd
    + std::fmt::Debug
    + std::fmt::Display
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + std::ops::Neg<Output = Self>
    + std::ops::AddAssign
    + Send
    + Sync
    + 'static
{
    const DTYPE: Dtype;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn abs(self) -> Self;
    fn maximum(self, other: Self) -> Self;
    fn is_finite(self) -> bool;
    /// Raw bit pattern widened to u64; used for bitwise equality checks.
    fn to_bits_u64(self) -> u64;
    /// Smallest positive normal value.
    fn min_positive() -> Self;
    /// Largest representable value strictly below one.
    fn below_one() -> Self;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;

    /// Numerically stable logistic function, clamped into the open interval
    /// (0, 1): saturated inputs return the nearest representable neighbor of
    /// 0 or 1 instead of the endpoints, so gate values never reach an exact
    /// 0 or 1 even for extreme logits.
    fn sigmoid(self) -> Self {
        let one = Self::one();
        let v = if self >= Self::zero() {
            one / (one + (-self).exp())
        } else {
            let e = self.exp();
            e / (one + e)
        };
        let v = if v < Self::min_positive() { Self::min_positive() } else { v };
        if v > Self::below_one() {
            Self::below_one()
        } else {
            v
        }
    }
}

impl Scalar for f32 {
    const DTYPE: Dtype = Dtype::F32;

    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn exp(self) -> Self {
        self.exp()
    }
    fn abs(self) -> Self {
        self.abs()
    }
    fn maximum(self, other: Self) -> Self {
        self.max(other)
    }
    fn is_finite(self) -> bool {
        self.is_finite()
    }
    fn to_bits_u64(self) -> u64 {
        self.to_bits() as u64
    }
    fn min_positive() -> Self {
        f32::MIN_POSITIVE
    }
    fn below_one() -> Self {
        1.0f32.next_down()
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes per f32"))
    }
}

impl Scalar for f64 {
    const DTYPE: Dtype = Dtype::F64;

    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn exp(self) -> Self {
        self.exp()
    }
    fn abs(self) -> Self {
        self.abs()
    }
    fn maximum(self, other: Self) -> Self {
        self.max(other)
    }
    fn is_finite(self) -> bool {
        self.is_finite()
    }
    fn to_bits_u64(self) -> u64 {
        self.to_bits()
    }
    fn min_positive() -> Self {
        f64::MIN_POSITIVE
    }
    fn below_one() -> Self {
        1.0f64.next_down()
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes per f64"))
    }
}

// ───────────────────────────── tensor container ─────────────────────────────

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.contains(&0) {
        return Err(CaaError::ZeroDim { shape: shape.to_vec() });
    }
    Ok(shape.iter().product())
}

/// Row-major strides for a shape (stride of the last axis is 1).
pub fn strides_for(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; shape.len()];
    for axis in (0..shape.len().saturating_sub(1)).rev() {
        strides[axis] = strides[axis + 1] * shape[axis + 1];
    }
    strides
}

/// Advances `idx` to the next row-major position within `shape`.
/// Returns false once every position has been visited.
pub fn next_index(idx: &mut [usize], shape: &[usize]) -> bool {
    for axis in (0..shape.len()).rev() {
        idx[axis] += 1;
        if idx[axis] < shape[axis] {
            return true;
        }
        idx[axis] = 0;
    }
    false
}

impl<T: Scalar> Tensor<T> {
    /// Builds a tensor from a shape and row-major data.
    pub fn from_vec(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let expected = check_shape(&shape)?;
        if expected != data.len() {
            return Err(CaaError::ElementCount {
                shape,
                expected,
                got: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        let len = check_shape(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![T::zero(); len],
        })
    }

    pub fn full(shape: &[usize], value: T) -> Result<Self> {
        let len = check_shape(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![value; len],
        })
    }

    /// Rank-0 tensor holding a single value.
    pub fn scalar(value: T) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    /// Builds a tensor by evaluating `f` at every multi-index in row-major
    /// order.
    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> T) -> Result<Self> {
        let len = check_shape(shape)?;
        let mut data = Vec::with_capacity(len);
        let mut idx = vec![0usize; shape.len()];
        loop {
            data.push(f(&idx));
            if !next_index(&mut idx, shape) {
                break;
            }
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn strides(&self) -> Vec<usize> {
        strides_for(&self.shape)
    }

    /// Flat offset of a multi-index. Panics on rank or bounds violations;
    /// intended for tests and oracles, not inner loops.
    pub fn offset(&self, idx: &[usize]) -> usize {
        assert_eq!(idx.len(), self.rank(), "index rank mismatch");
        let mut flat = 0;
        let strides = self.strides();
        for (axis, (&i, &d)) in idx.iter().zip(self.shape.iter()).enumerate() {
            assert!(i < d, "index {i} out of bounds for axis {axis} (size {d})");
            flat += i * strides[axis];
        }
        flat
    }

    /// Value at a multi-index; see [`Tensor::offset`] for panic conditions.
    pub fn at(&self, idx: &[usize]) -> T {
        self.data[self.offset(idx)]
    }

    pub(crate) fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    // ───────────────────────── elementwise ─────────────────────────

    pub fn relu(&self) -> Self {
        self.map(|v| if v > T::zero() { v } else { T::zero() })
    }

    /// `x` for positive inputs, `slope * x` otherwise.
    pub fn leaky_relu(&self, slope: T) -> Self {
        self.map(|v| if v > T::zero() { v } else { slope * v })
    }

    pub fn sigmoid(&self) -> Self {
        self.map(Scalar::sigmoid)
    }

    pub fn scale(&self, k: T) -> Self {
        self.map(|v| k * v)
    }

    pub fn add(&self, rhs: &Self) -> Result<Self> {
        self.broadcast_binary(rhs, |a, b| a + b)
    }

    pub fn mul(&self, rhs: &Self) -> Result<Self> {
        self.broadcast_binary(rhs, |a, b| a * b)
    }

    /// Applies `f` elementwise under trailing-axis broadcasting: shapes are
    /// right-aligned and each axis pair must be equal or contain a 1.
    fn broadcast_binary(&self, rhs: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        let out_shape = broadcast_shape(&self.shape, &rhs.shape)?;
        let lhs_strides = broadcast_strides(&self.shape, &out_shape);
        let rhs_strides = broadcast_strides(&rhs.shape, &out_shape);
        let len = out_shape.iter().product();
        let mut data = Vec::with_capacity(len);
        let mut idx = vec![0usize; out_shape.len()];
        loop {
            let mut a = 0;
            let mut b = 0;
            for (axis, &i) in idx.iter().enumerate() {
                a += i * lhs_strides[axis];
                b += i * rhs_strides[axis];
            }
            data.push(f(self.data[a], rhs.data[b]));
            if !next_index(&mut idx, &out_shape) {
                break;
            }
        }
        Ok(Self {
            shape: out_shape,
            data,
        })
    }

    // ───────────────────────── softmax ─────────────────────────

    /// Softmax along `axis`, stabilized by subtracting the slice maximum
    /// before exponentiation. Each output slice sums to 1 up to rounding; a
    /// singleton axis yields exactly 1.0.
    pub fn softmax(&self, axis: usize) -> Result<Self> {
        if axis >= self.rank() {
            return Err(CaaError::AxisOutOfRange {
                axis,
                rank: self.rank(),
            });
        }
        let n = self.shape[axis];
        let stride = self.strides()[axis];
        // The tensor decomposes into outer × axis × inner; each (outer, inner)
        // pair addresses one independent slice.
        let inner: usize = self.shape[axis + 1..].iter().product();
        let outer: usize = self.shape[..axis].iter().product();
        let mut out = self.data.clone();
        for o in 0..outer {
            for i in 0..inner {
                let base = o * n * inner + i;
                let mut max = self.data[base];
                for k in 1..n {
                    max = max.maximum(self.data[base + k * stride]);
                }
                let mut sum = T::zero();
                for k in 0..n {
                    let e = (self.data[base + k * stride] - max).exp();
                    out[base + k * stride] = e;
                    sum += e;
                }
                for k in 0..n {
                    out[base + k * stride] = out[base + k * stride] / sum;
                }
            }
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: out,
        })
    }

    // ───────────────────────── reductions ─────────────────────────

    /// Sums over `axes` (removed from the shape), accumulating in ascending
    /// row-major order. Reducing every axis yields a rank-0 scalar.
    pub fn reduce_sum(&self, axes: &[usize]) -> Result<Self> {
        let keep = keep_mask(&self.shape, axes)?;
        let out_shape: Vec<usize> = self
            .shape
            .iter()
            .zip(keep.iter())
            .filter(|&(_, &k)| k)
            .map(|(&d, _)| d)
            .collect();
        let out_strides = strides_for(&out_shape);
        let mut out = vec![T::zero(); out_shape.iter().product::<usize>().max(1)];
        let mut idx = vec![0usize; self.rank()];
        for &v in &self.data {
            let mut o = 0;
            let mut out_axis = 0;
            for (axis, &i) in idx.iter().enumerate() {
                if keep[axis] {
                    o += i * out_strides[out_axis];
                    out_axis += 1;
                }
            }
            out[o] += v;
            next_index(&mut idx, &self.shape);
        }
        Ok(Self {
            shape: out_shape,
            data: out,
        })
    }

    /// Mean over `axes`: the sum divided by the product of the reduced
    /// dimension sizes (one division per output element, after summation).
    pub fn reduce_mean(&self, axes: &[usize]) -> Result<Self> {
        let mut summed = self.reduce_sum(axes)?;
        let count: usize = axes.iter().map(|&a| self.shape[a]).product();
        let denom = T::from_f64(count as f64);
        for v in summed.data.iter_mut() {
            *v = *v / denom;
        }
        Ok(summed)
    }

    // ───────────────────────── shape surgery ─────────────────────────

    pub fn reshape(&self, new_shape: &[usize]) -> Result<Self> {
        let new_len = check_shape(new_shape)?;
        if new_len != self.len() {
            return Err(CaaError::ReshapeMismatch {
                from: self.shape.clone(),
                from_len: self.len(),
                to: new_shape.to_vec(),
                to_len: new_len,
            });
        }
        Ok(Self {
            shape: new_shape.to_vec(),
            data: self.data.clone(),
        })
    }

    /// Reorders axes: output axis `k` is input axis `perm[k]`.
    pub fn transpose(&self, perm: &[usize]) -> Result<Self> {
        let rank = self.rank();
        if perm.len() != rank || {
            let mut seen = vec![false; rank];
            perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true))
        } {
            return Err(CaaError::BadPermutation(perm.to_vec(), rank));
        }
        let out_shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        let in_strides = self.strides();
        let mut data = Vec::with_capacity(self.len());
        let mut idx = vec![0usize; rank];
        loop {
            let mut flat = 0;
            for (axis, &i) in idx.iter().enumerate() {
                flat += i * in_strides[perm[axis]];
            }
            data.push(self.data[flat]);
            if !next_index(&mut idx, &out_shape) {
                break;
            }
        }
        Ok(Self {
            shape: out_shape,
            data,
        })
    }

    /// Appends `count` entries of `value` at the tail of `axis`.
    pub fn pad_axis(&self, axis: usize, count: usize, value: T) -> Result<Self> {
        if axis >= self.rank() {
            return Err(CaaError::AxisOutOfRange {
                axis,
                rank: self.rank(),
            });
        }
        let mut out_shape = self.shape.clone();
        out_shape[axis] += count;
        let mut out = Tensor::full(&out_shape, value)?;
        let in_strides = self.strides();
        let out_strides = out.strides();
        let mut idx = vec![0usize; self.rank()];
        loop {
            let mut src = 0;
            let mut dst = 0;
            for (a, &i) in idx.iter().enumerate() {
                src += i * in_strides[a];
                dst += i * out_strides[a];
            }
            out.data[dst] = self.data[src];
            if !next_index(&mut idx, &self.shape) {
                break;
            }
        }
        Ok(out)
    }

    /// Elementwise conversion to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| U::from_f64(v.to_f64())).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Validates reduction axes and returns a per-axis keep flag (true = axis
/// survives the reduction).
fn keep_mask(shape: &[usize], axes: &[usize]) -> Result<Vec<bool>> {
    let mut keep = vec![true; shape.len()];
    for &axis in axes {
        if axis >= shape.len() {
            return Err(CaaError::AxisOutOfRange {
                axis,
                rank: shape.len(),
            });
        }
        if !std::mem::replace(&mut keep[axis], false) {
            return Err(CaaError::DuplicateAxis { axis });
        }
    }
    Ok(keep)
}

// ───────────────────────── broadcasting helpers ─────────────────────────

/// Right-aligned broadcast shape of two shapes; each aligned axis pair must
/// be equal or contain a 1.
pub fn broadcast_shape(lhs: &[usize], rhs: &[usize]) -> Result<Vec<usize>> {
    let rank = lhs.len().max(rhs.len());
    let mut out = vec![0usize; rank];
    for k in 0..rank {
        let a = if k < rank - lhs.len() { 1 } else { lhs[k - (rank - lhs.len())] };
        let b = if k < rank - rhs.len() { 1 } else { rhs[k - (rank - rhs.len())] };
        if a != b && a != 1 && b != 1 {
            return Err(CaaError::BroadcastMismatch {
                lhs: lhs.to_vec(),
                rhs: rhs.to_vec(),
                a,
                b,
            });
        }
        out[k] = a.max(b);
    }
    Ok(out)
}

/// Per-output-axis strides into an operand, with stride 0 on axes the
/// operand broadcasts over. `out_shape` must come from [`broadcast_shape`].
fn broadcast_strides(shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let own = strides_for(shape);
    let offset = out_shape.len() - shape.len();
    (0..out_shape.len())
        .map(|k| {
            if k < offset || shape[k - offset] == 1 {
                0
            } else {
                own[k - offset]
            }
        })
        .collect()
}

// ───────────────────────── contraction ─────────────────────────

/// Sum-of-products contraction over explicitly paired axes.
///
/// `pairs` lists `(lhs_axis, rhs_axis)` pairs to contract; paired axes must
/// have equal sizes. Output axes are the unpaired lhs axes in order,
/// followed by the unpaired rhs axes in order. Terms accumulate in ascending
/// lexicographic order of the paired indices (pairs iterate in the order
/// given), so results are reproducible bit for bit.
///
/// A plain matrix product is `contract(a, b, &[(1, 0)])`.
pub fn contract<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, pairs: &[(usize, usize)]) -> Result<Tensor<T>> {
    let mut a_paired = vec![false; a.rank()];
    let mut b_paired = vec![false; b.rank()];
    for &(pa, pb) in pairs {
        if pa >= a.rank() {
            return Err(CaaError::AxisOutOfRange { axis: pa, rank: a.rank() });
        }
        if pb >= b.rank() {
            return Err(CaaError::AxisOutOfRange { axis: pb, rank: b.rank() });
        }
        if std::mem::replace(&mut a_paired[pa], true) {
            return Err(CaaError::DuplicateAxis { axis: pa });
        }
        if std::mem::replace(&mut b_paired[pb], true) {
            return Err(CaaError::DuplicateAxis { axis: pb });
        }
        if a.shape()[pa] != b.shape()[pb] {
            return Err(CaaError::ContractMismatch {
                axis_a: pa,
                len_a: a.shape()[pa],
                axis_b: pb,
                len_b: b.shape()[pb],
            });
        }
    }

    let a_free: Vec<usize> = (0..a.rank()).filter(|&x| !a_paired[x]).collect();
    let b_free: Vec<usize> = (0..b.rank()).filter(|&x| !b_paired[x]).collect();
    let out_shape: Vec<usize> = a_free
        .iter()
        .map(|&x| a.shape()[x])
        .chain(b_free.iter().map(|&x| b.shape()[x]))
        .collect();
    let pair_shape: Vec<usize> = pairs.iter().map(|&(pa, _)| a.shape()[pa]).collect();

    let a_strides = a.strides();
    let b_strides = b.strides();
    let out_len = out_shape.iter().product::<usize>().max(1);
    let mut out = Vec::with_capacity(out_len);
    let mut free_idx = vec![0usize; out_shape.len()];
    loop {
        let mut a_base = 0;
        let mut b_base = 0;
        for (k, &axis) in a_free.iter().enumerate() {
            a_base += free_idx[k] * a_strides[axis];
        }
        for (k, &axis) in b_free.iter().enumerate() {
            b_base += free_idx[a_free.len() + k] * b_strides[axis];
        }

        let mut acc = T::zero();
        let mut pair_idx = vec![0usize; pairs.len()];
        loop {
            let mut a_off = a_base;
            let mut b_off = b_base;
            for (k, &(pa, pb)) in pairs.iter().enumerate() {
                a_off += pair_idx[k] * a_strides[pa];
                b_off += pair_idx[k] * b_strides[pb];
            }
            acc += a.data()[a_off] * b.data()[b_off];
            if pairs.is_empty() || !next_index(&mut pair_idx, &pair_shape) {
                break;
            }
        }
        out.push(acc);
        if out_shape.is_empty() || !next_index(&mut free_idx, &out_shape) {
            break;
        }
    }
    Ok(Tensor {
        shape: out_shape,
        data: out,
    })
}

// ───────────────────────── comparison helpers ─────────────────────────

/// Largest elementwise absolute difference, in f64.
pub fn max_abs_diff<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(CaaError::ShapeMismatch {
            what: "comparison operands",
            expected: a.shape().to_vec(),
            got: b.shape().to_vec(),
        });
    }
    Ok(a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x.to_f64() - y.to_f64()).abs())
        .fold(0.0, f64::max))
}

/// Largest elementwise relative difference `|a-b| / max(|a|, |b|, floor)`,
/// in f64. The floor keeps near-zero entries from dominating the metric.
pub fn max_rel_diff<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, floor: f64) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(CaaError::ShapeMismatch {
            what: "comparison operands",
            expected: a.shape().to_vec(),
            got: b.shape().to_vec(),
        });
    }
    Ok(a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let (x, y) = (x.to_f64(), y.to_f64());
            (x - y).abs() / x.abs().max(y.abs()).max(floor)
        })
        .fold(0.0, f64::max))
}

/// True when both tensors have identical shape and identical bit patterns.
pub fn bitwise_eq<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> bool {
    a.shape() == b.shape()
        && a.data()
            .iter()
            .zip(b.data())
            .all(|(&x, &y)| x.to_bits_u64() == y.to_bits_u64())
}
