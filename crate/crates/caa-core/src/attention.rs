//! Attention kernels: projections, full 2D self-attention, and the
//! column/row (axial) decomposition.
//!
//! Layout conventions, used everywhere downstream:
//!
//! * Feature maps are `[C, H, W]` (channel, row, column), row-major.
//! * Projection matrices are `[C, K]`: `project` maps `[C,H,W] -> [K,H,W]`
//!   with `out[k,i,j] = sum_c m[c,k] * x[c,i,j]`.
//! * The column attention map `a_col` is `[H, H, W]` indexed `(i, m, j)`:
//!   the weight of source row `m` within column `j` for a query pixel at
//!   row `i`. Softmax normalizes over `m` (axis 1).
//! * The row attention map `a_row` is `[H, W, W]` indexed `(i, j, n)`: the
//!   weight of source column `n` within row `i` for a query pixel at column
//!   `j`. Softmax normalizes over `n` (axis 2).
//! * Per-pixel column-pass sums `alpha_sum` and row-pass terms `beta` are
//!   `[H, W, W, Cv]` indexed `(i, j, n, c)`.
//!
//! Both attention stages reuse one projection each as query *and* key:
//! column logits are `theta(x)^T theta(x)` within a column, row logits are
//! `phi(x)^T phi(x)` within a row. There is no separate key matrix.
//!
//! The axial output for a query pixel `(i, j)` applies the query pixel's
//! *column* weights to every column `n` during the column pass:
//! `alpha_sum[i,j,n,:] = sum_m a_col[i,m,j] * v[:,m,n]`, then mixes columns
//! with row weights: `y[:,i,j] = sum_n a_row[i,j,n] * alpha_sum[i,j,n,:]`.
//!
//! Every reduction in this module runs in ascending index order, single
//! threaded, so repeated calls are bit-identical.

use crate::error::{CaaError, Result};
use crate::rng::SeedRng;
use crate::tensor::{contract, Scalar, Tensor};

// ───────────────────────── dimensions and parameters ─────────────────────────

/// Geometry of one attention problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttnDims {
    /// Spatial height.
    pub h: usize,
    /// Spatial width.
    pub w: usize,
    /// Input channels.
    pub c: usize,
    /// Query/key channels produced by `theta` and `phi`.
    pub cq: usize,
    /// Value channels produced by `g`.
    pub cv: usize,
}

impl AttnDims {
    /// Square geometry with `cq = cv = c`, the common benchmarking setup.
    pub fn square(h: usize, c: usize) -> Self {
        Self {
            h,
            w: h,
            c,
            cq: c,
            cv: c,
        }
    }

    pub fn hw(&self) -> usize {
        self.h * self.w
    }
}

/// Projection matrices for one attention block.
#[derive(Debug, Clone)]
pub struct AttnParams<T> {
    /// `[C, Cq]` column-stage query/key projection.
    pub theta: Tensor<T>,
    /// `[C, Cq]` row-stage query/key projection.
    pub phi: Tensor<T>,
    /// `[C, Cv]` value projection.
    pub g: Tensor<T>,
    pub dims: AttnDims,
}

fn expect_shape<T: Scalar>(what: &'static str, t: &Tensor<T>, shape: &[usize]) -> Result<()> {
    if t.shape() != shape {
        return Err(CaaError::ShapeMismatch {
            what,
            expected: shape.to_vec(),
            got: t.shape().to_vec(),
        });
    }
    Ok(())
}

impl<T: Scalar> AttnParams<T> {
    pub fn new(dims: AttnDims, theta: Tensor<T>, phi: Tensor<T>, g: Tensor<T>) -> Result<Self> {
        expect_shape("theta projection", &theta, &[dims.c, dims.cq])?;
        expect_shape("phi projection", &phi, &[dims.c, dims.cq])?;
        expect_shape("g projection", &g, &[dims.c, dims.cv])?;
        Ok(Self { theta, phi, g, dims })
    }

    /// Seeded parameters: zero-mean uniform entries scaled by
    /// `1/sqrt(fan_in)`, drawn from the streams `theta`, `phi`, and `g`.
    pub fn seeded(dims: AttnDims, rng: &SeedRng) -> Result<Self> {
        Self::new(
            dims,
            rng.scaled_uniform("theta", dims.c, dims.cq)?,
            rng.scaled_uniform("phi", dims.c, dims.cq)?,
            rng.scaled_uniform("g", dims.c, dims.cv)?,
        )
    }

    /// Validates an input feature map against these parameters.
    pub fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        expect_shape("input feature map", x, &[self.dims.c, self.dims.h, self.dims.w])
    }
}

/// Normalized column and row attention maps.
#[derive(Debug, Clone)]
pub struct AttentionMaps<T> {
    /// `[H, H, W]` indexed `(i, m, j)`, softmax over `m`.
    pub a_col: Tensor<T>,
    /// `[H, W, W]` indexed `(i, j, n)`, softmax over `n`.
    pub a_row: Tensor<T>,
}

/// Requested treatment of the rank-5 per-pair tensor in [`breakdown`].
#[derive(Debug, Clone, Copy)]
pub enum AlphaFull {
    /// Do not materialize the rank-5 tensor (the usual case).
    Skip,
    /// Materialize `[H, W, H, W, Cv]`, refusing if it would exceed
    /// `cap_elements` elements.
    Materialize { cap_elements: usize },
}

/// Intermediates of the two-pass axial computation for one input.
#[derive(Debug, Clone)]
pub struct Breakdown<T> {
    /// `[H, W, W, Cv]`: column-pass sums `sum_m a_col[i,m,j] * v[:,m,n]`.
    pub alpha_sum: Tensor<T>,
    /// `[H, W, W, Cv]`: row-pass terms `a_row[i,j,n] * alpha_sum[i,j,n,:]`.
    pub beta: Tensor<T>,
    /// `[Cv, H, W]`: the axial output `sum_n beta[i,j,n,:]`.
    pub y: Tensor<T>,
    /// `[H, W, H, W, Cv]` per-(source row, source column) products
    /// `a_col[i,m,j] * v[:,m,n]`, present only on request.
    pub alpha_full: Option<Tensor<T>>,
}

// ───────────────────────── projection ─────────────────────────

/// Applies a `[C, K]` projection at every pixel of a `[C, H, W]` map,
/// producing `[K, H, W]`.
pub fn project<T: Scalar>(x: &Tensor<T>, m: &Tensor<T>) -> Result<Tensor<T>> {
    if x.rank() != 3 || m.rank() != 2 {
        return Err(CaaError::DimMismatch {
            what: "project expects a rank-3 map and rank-2 matrix; combined rank",
            expected: 5,
            got: x.rank() + m.rank(),
        });
    }
    if x.shape()[0] != m.shape()[0] {
        return Err(CaaError::DimMismatch {
            what: "projection input channels",
            expected: m.shape()[0],
            got: x.shape()[0],
        });
    }
    // Pairing the channel axes yields out[k,i,j] = sum_c m[c,k] x[c,i,j],
    // accumulated in ascending c.
    contract(m, x, &[(0, 0)])
}

// ───────────────────────── attention maps ─────────────────────────

/// Computes both normalized axial attention maps for an input.
pub fn attention_maps<T: Scalar>(x: &Tensor<T>, p: &AttnParams<T>) -> Result<AttentionMaps<T>> {
    p.check_input(x)?;
    let AttnDims { h, w, cq, .. } = p.dims;
    let hw = h * w;

    let qc = project(x, &p.theta)?;
    let qd = qc.data();
    let mut logits_col = Tensor::zeros(&[h, h, w])?;
    {
        let out = logits_col.data_mut();
        for i in 0..h {
            for m in 0..h {
                for j in 0..w {
                    let mut acc = T::zero();
                    for q in 0..cq {
                        acc += qd[q * hw + i * w + j] * qd[q * hw + m * w + j];
                    }
                    out[(i * h + m) * w + j] = acc;
                }
            }
        }
    }
    let a_col = logits_col.softmax(1)?;

    let qr = project(x, &p.phi)?;
    let rd = qr.data();
    let mut logits_row = Tensor::zeros(&[h, w, w])?;
    {
        let out = logits_row.data_mut();
        for i in 0..h {
            for j in 0..w {
                for n in 0..w {
                    let mut acc = T::zero();
                    for q in 0..cq {
                        acc += rd[q * hw + i * w + j] * rd[q * hw + i * w + n];
                    }
                    out[(i * w + j) * w + n] = acc;
                }
            }
        }
    }
    let a_row = logits_row.softmax(2)?;

    Ok(AttentionMaps { a_col, a_row })
}

// ───────────────────────── shared row-level kernels ─────────────────────────
// The grouped executor processes one row `i` at a time; these helpers are the
// single implementation of the per-row arithmetic, shared between the
// whole-image kernels below and the executor, so both paths add the same
// terms in the same order.

/// Fills `out` (layout `[W(j), W(n), Cv]`) with the column-pass sums for
/// query row `i`: `out[j,n,c] = sum_m a_col[i,m,j] * v[c,m,n]`, ascending `m`.
pub(crate) fn fill_alpha_sum_row<T: Scalar>(a_col: &Tensor<T>, v: &Tensor<T>, i: usize, out: &mut [T]) {
    let h = a_col.shape()[0];
    let w = a_col.shape()[2];
    let cv = v.shape()[0];
    let hw = h * w;
    let (ad, vd) = (a_col.data(), v.data());
    debug_assert_eq!(out.len(), w * w * cv);
    for j in 0..w {
        for n in 0..w {
            for c in 0..cv {
                let mut acc = T::zero();
                for m in 0..h {
                    acc += ad[(i * h + m) * w + j] * vd[c * hw + m * w + n];
                }
                out[(j * w + n) * cv + c] = acc;
            }
        }
    }
}

/// Multiplies a row buffer (layout `[W(j), W(n), Cv]`) by the row weights
/// `a_row[i,j,n]` in place, turning column-pass sums into row-pass terms.
pub(crate) fn combine_beta_row<T: Scalar>(a_row: &Tensor<T>, i: usize, row: &mut [T]) {
    let w = a_row.shape()[1];
    let cv = row.len() / (w * w);
    let rd = a_row.data();
    for j in 0..w {
        for n in 0..w {
            let weight = rd[(i * w + j) * w + n];
            let base = (j * w + n) * cv;
            for c in 0..cv {
                row[base + c] = weight * row[base + c];
            }
        }
    }
}

/// Reduces a row of row-pass terms (layout `[W(j), W(n), Cv]`) over `n` into
/// the output map: `y[c,i,j] = sum_n gate[j,c] * row[j,n,c]`, ascending `n`.
/// `gate` is `[W, Cv]` flattened; pass `None` for ungated reduction.
pub(crate) fn reduce_row_into_y<T: Scalar>(row: &[T], gate: Option<&[T]>, i: usize, y: &mut Tensor<T>) {
    let cv = y.shape()[0];
    let h = y.shape()[1];
    let w = y.shape()[2];
    let yd = y.data_mut();
    for j in 0..w {
        for c in 0..cv {
            let mut acc = T::zero();
            match gate {
                Some(g) => {
                    let gjc = g[j * cv + c];
                    for n in 0..w {
                        acc += gjc * row[(j * w + n) * cv + c];
                    }
                }
                None => {
                    for n in 0..w {
                        acc += row[(j * w + n) * cv + c];
                    }
                }
            }
            yd[(c * h + i) * w + j] = acc;
        }
    }
}

// ───────────────────────── axial decomposition ─────────────────────────

/// Materializes the column-pass/row-pass intermediates of the axial
/// decomposition for the given maps.
pub fn breakdown<T: Scalar>(
    x: &Tensor<T>,
    maps: &AttentionMaps<T>,
    p: &AttnParams<T>,
    alpha_full: AlphaFull,
) -> Result<Breakdown<T>> {
    p.check_input(x)?;
    let AttnDims { h, w, cv, .. } = p.dims;
    let v = project(x, &p.g)?;

    let mut alpha_sum = Tensor::zeros(&[h, w, w, cv])?;
    let row_len = w * w * cv;
    for i in 0..h {
        fill_alpha_sum_row(&maps.a_col, &v, i, &mut alpha_sum.data_mut()[i * row_len..(i + 1) * row_len]);
    }

    let mut beta = alpha_sum.clone();
    for i in 0..h {
        combine_beta_row(&maps.a_row, i, &mut beta.data_mut()[i * row_len..(i + 1) * row_len]);
    }

    let mut y = Tensor::zeros(&[cv, h, w])?;
    for i in 0..h {
        reduce_row_into_y(&beta.data()[i * row_len..(i + 1) * row_len], None, i, &mut y);
    }

    let alpha_full = match alpha_full {
        AlphaFull::Skip => None,
        AlphaFull::Materialize { cap_elements } => {
            let needed = h * w * h * w * cv;
            if needed > cap_elements {
                return Err(CaaError::CapExceeded {
                    needed,
                    cap: cap_elements,
                });
            }
            let hw = h * w;
            let (ad, vd) = (maps.a_col.data(), v.data());
            let mut full = Tensor::zeros(&[h, w, h, w, cv])?;
            {
                let fd = full.data_mut();
                for i in 0..h {
                    for j in 0..w {
                        for m in 0..h {
                            let weight = ad[(i * h + m) * w + j];
                            for n in 0..w {
                                for c in 0..cv {
                                    fd[(((i * w + j) * h + m) * w + n) * cv + c] =
                                        weight * vd[c * hw + m * w + n];
                                }
                            }
                        }
                    }
                }
            }
            Some(full)
        }
    };

    Ok(Breakdown {
        alpha_sum,
        beta,
        y,
        alpha_full,
    })
}

/// Column pass followed by row pass: the ungated axial attention output
/// `[Cv, H, W]`.
pub fn axial_attention<T: Scalar>(x: &Tensor<T>, p: &AttnParams<T>) -> Result<Tensor<T>> {
    let maps = attention_maps(x, p)?;
    Ok(breakdown(x, &maps, p, AlphaFull::Skip)?.y)
}

// ───────────────────────── full self-attention ─────────────────────────

/// Normalized full-pair attention weights `[H, W, H, W]` indexed
/// `(i, j, m, n)`, softmax over the joint source position `(m, n)`.
pub fn self_attention_weights<T: Scalar>(x: &Tensor<T>, p: &AttnParams<T>) -> Result<Tensor<T>> {
    p.check_input(x)?;
    let AttnDims { h, w, cq, .. } = p.dims;
    let hw = h * w;
    let qs = project(x, &p.theta)?;
    let qd = qs.data();
    let mut logits = Tensor::zeros(&[h, w, h, w])?;
    {
        let out = logits.data_mut();
        for i in 0..h {
            for j in 0..w {
                for m in 0..h {
                    for n in 0..w {
                        let mut acc = T::zero();
                        for q in 0..cq {
                            acc += qd[q * hw + i * w + j] * qd[q * hw + m * w + n];
                        }
                        out[((i * w + j) * h + m) * w + n] = acc;
                    }
                }
            }
        }
    }
    // The source axes (m, n) are trailing and contiguous, so the joint
    // softmax is a plain softmax over a flattened final axis.
    logits.reshape(&[h, w, hw])?.softmax(2)?.reshape(&[h, w, h, w])
}

/// Aggregates values with full-pair weights:
/// `y[c,i,j] = sum_{m,n} weights[i,j,m,n] * v[c,m,n]`, ascending `(m, n)`.
pub(crate) fn apply_weights_to_values<T: Scalar>(weights: &Tensor<T>, v: &Tensor<T>) -> Result<Tensor<T>> {
    let (h, w) = (weights.shape()[0], weights.shape()[1]);
    let cv = v.shape()[0];
    let hw = h * w;
    let (wd, vd) = (weights.data(), v.data());
    let mut y = Tensor::zeros(&[cv, h, w])?;
    {
        let yd = y.data_mut();
        for c in 0..cv {
            for i in 0..h {
                for j in 0..w {
                    let mut acc = T::zero();
                    let base = (i * w + j) * hw;
                    for m in 0..h {
                        for n in 0..w {
                            acc += wd[base + m * w + n] * vd[c * hw + m * w + n];
                        }
                    }
                    yd[c * hw + i * w + j] = acc;
                }
            }
        }
    }
    Ok(y)
}

/// Full 2D self-attention over every pixel pair, `[Cv, H, W]`.
pub fn self_attention<T: Scalar>(x: &Tensor<T>, p: &AttnParams<T>) -> Result<Tensor<T>> {
    let weights = self_attention_weights(x, p)?;
    let v = project(x, &p.g)?;
    apply_weights_to_values(&weights, &v)
}
