//! Tape recorders for the attention forwards.
//!
//! The fast kernels compute values only. To differentiate them, this module
//! rebuilds each forward pass out of tape primitives (matmul, broadcast
//! multiply, axis reductions, softmax, sigmoid) so that one reverse sweep
//! yields gradients for the input and every parameter at once.
//!
//! The recorded graphs are mathematically identical to the kernels but may
//! reduce in a different association order, so recorded values match kernel
//! values to f64 round-off rather than bit for bit. The pairwise-product
//! stages are materialized as broadcast tensors (rank 5 for the separable
//! variants), which keeps the recorders simple; they are meant for the
//! small geometries used in gradient validation, not for production-size
//! inputs.

use crate::attention::{AttnDims, AttnParams};
use crate::channelize::{Activation, GateMode, GateParams};
use crate::error::Result;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

// ───────────────────────── lifted parameters ─────────────────────────

/// Attention parameters registered on a tape.
#[derive(Debug, Clone, Copy)]
pub struct DiffAttn {
    pub dims: AttnDims,
    pub theta: Var,
    pub phi: Var,
    pub g: Var,
}

impl DiffAttn {
    pub fn lift(tape: &mut Tape, p: &AttnParams<f64>) -> Self {
        Self {
            dims: p.dims,
            theta: tape.input(p.theta.clone()),
            phi: tape.input(p.phi.clone()),
            g: tape.input(p.g.clone()),
        }
    }
}

/// Gate stack registered on a tape.
#[derive(Debug, Clone)]
pub struct DiffGate {
    pub layers: Vec<Var>,
    activation: Activation,
    mode: GateMode,
}

impl DiffGate {
    pub fn lift(tape: &mut Tape, p: &GateParams<f64>) -> Self {
        Self {
            layers: p.layers().iter().map(|m| tape.input(m.clone())).collect(),
            activation: p.activation(),
            mode: p.mode(),
        }
    }

    /// Record the gate evaluation on a `[sites, cv]` statistic. Returns
    /// `None` in bypass mode: the gate is exactly one, so callers skip the
    /// multiplication instead of recording it.
    pub fn eval(&self, tape: &mut Tape, stat: Var) -> Result<Option<Var>> {
        if matches!(self.mode, GateMode::Bypass) {
            return Ok(None);
        }
        let mut cur = stat;
        let last = self.layers.len() - 1;
        for (k, &m) in self.layers.iter().enumerate() {
            cur = tape.matmul(cur, m)?;
            if k < last {
                cur = match self.activation {
                    Activation::Relu => tape.relu(cur)?,
                    Activation::LeakyRelu(slope) => tape.leaky_relu(cur, slope)?,
                };
            }
        }
        if let GateMode::ShiftLogits(s) = self.mode {
            let shape = tape.shape(cur)?;
            let shift = tape.input(Tensor::full(&shape, s)?);
            cur = tape.add(cur, shift)?;
        }
        Ok(Some(tape.sigmoid(cur)?))
    }
}

// ───────────────────────── shared stages ─────────────────────────

/// `[K,H,W]` projection of `x` through a `[C,K]` matrix.
fn project(tape: &mut Tape, x: Var, m: Var) -> Result<Var> {
    let xs = tape.shape(x)?;
    let (c, h, w) = (xs[0], xs[1], xs[2]);
    let k = tape.shape(m)?[1];
    let x2 = tape.reshape(x, &[c, h * w])?;
    let mt = tape.transpose(m, &[1, 0])?;
    let y = tape.matmul(mt, x2)?;
    tape.reshape(y, &[k, h, w])
}

/// Column attention map `[H,H,W]` indexed `(i,m,j)`.
fn column_map(tape: &mut Tape, q: Var) -> Result<Var> {
    let qs = tape.shape(q)?;
    let (cq, h, w) = (qs[0], qs[1], qs[2]);
    let t1 = tape.reshape(q, &[cq, h, 1, w])?;
    let t2 = tape.reshape(q, &[cq, 1, h, w])?;
    let prod = tape.mul(t1, t2)?;
    let logits = tape.sum(prod, &[0])?;
    tape.softmax(logits, 1)
}

/// Row attention map `[H,W,W]` indexed `(i,j,n)`.
fn row_map(tape: &mut Tape, q: Var) -> Result<Var> {
    let qs = tape.shape(q)?;
    let (cq, h, w) = (qs[0], qs[1], qs[2]);
    let t1 = tape.reshape(q, &[cq, h, w, 1])?;
    let t2 = tape.reshape(q, &[cq, h, 1, w])?;
    let prod = tape.mul(t1, t2)?;
    let logits = tape.sum(prod, &[0])?;
    tape.softmax(logits, 2)
}

/// Column-pass partial sums `[H,W,W,Cv]` indexed `(i,j,n,c)`:
/// `sum_m a_col[i,m,j] * v[c,m,n]`.
fn alpha_sum(tape: &mut Tape, a_col: Var, v: Var) -> Result<Var> {
    let vs = tape.shape(v)?;
    let (cv, h, w) = (vs[0], vs[1], vs[2]);
    let a = tape.transpose(a_col, &[0, 2, 1])?;
    let a = tape.reshape(a, &[h, w, h, 1, 1])?;
    let vv = tape.transpose(v, &[1, 2, 0])?;
    let vv = tape.reshape(vv, &[1, 1, h, w, cv])?;
    let prod = tape.mul(a, vv)?;
    tape.sum(prod, &[2])
}

/// Joint softmax weights for full self-attention, `[HW, HW]` with query
/// pixels as rows, plus the value projection as `[HW, Cv]`.
fn full_weights(tape: &mut Tape, q: Var) -> Result<Var> {
    let qs = tape.shape(q)?;
    let (cq, h, w) = (qs[0], qs[1], qs[2]);
    let t1 = tape.reshape(q, &[cq, h, w, 1, 1])?;
    let t2 = tape.reshape(q, &[cq, 1, 1, h, w])?;
    let prod = tape.mul(t1, t2)?;
    let logits = tape.sum(prod, &[0])?;
    let flat = tape.reshape(logits, &[h, w, h * w])?;
    let wts = tape.softmax(flat, 2)?;
    tape.reshape(wts, &[h * w, h * w])
}

/// Reorder a `[H,W,Cv]` pixel-major result into the `[Cv,H,W]` kernel
/// output layout.
fn to_channel_major(tape: &mut Tape, y: Var) -> Result<Var> {
    tape.transpose(y, &[2, 0, 1])
}

// ───────────────────────── recorders ─────────────────────────

/// Ungated column-then-row attention; output layout `[Cv,H,W]`.
pub fn record_axial(tape: &mut Tape, x: Var, p: &DiffAttn) -> Result<Var> {
    let AttnDims { h, w, .. } = p.dims;
    let tq = project(tape, x, p.theta)?;
    let pq = project(tape, x, p.phi)?;
    let v = project(tape, x, p.g)?;
    let a_col = column_map(tape, tq)?;
    let a_row = row_map(tape, pq)?;
    let asum = alpha_sum(tape, a_col, v)?;
    let ar = tape.reshape(a_row, &[h, w, w, 1])?;
    let beta = tape.mul(ar, asum)?;
    let ysum = tape.sum(beta, &[2])?;
    to_channel_major(tape, ysum)
}

/// Channelized column-then-row attention with both gates; output `[Cv,H,W]`.
pub fn record_caa(
    tape: &mut Tape,
    x: Var,
    p: &DiffAttn,
    gate_col: &DiffGate,
    gate_row: &DiffGate,
) -> Result<Var> {
    let AttnDims { h, w, cv, .. } = p.dims;
    let hw = (h * w) as f64;
    let tq = project(tape, x, p.theta)?;
    let pq = project(tape, x, p.phi)?;
    let v = project(tape, x, p.g)?;
    let a_col = column_map(tape, tq)?;
    let a_row = row_map(tape, pq)?;
    let asum = alpha_sum(tape, a_col, v)?;

    // Column gate on the (i, n, c) statistic: mean over (m, j) of the
    // per-pair terms, which is the j-mean of the column partial sums.
    let stat_col = tape.sum(asum, &[1])?;
    let stat_col = tape.scale(stat_col, 1.0 / hw)?;
    let stat_col = tape.reshape(stat_col, &[h * w, cv])?;
    let gated = match gate_col.eval(tape, stat_col)? {
        Some(gc) => {
            let gc = tape.reshape(gc, &[h, 1, w, cv])?;
            tape.mul(gc, asum)?
        }
        None => asum,
    };

    let ar = tape.reshape(a_row, &[h, w, w, 1])?;
    let beta = tape.mul(ar, gated)?;

    // Row gate on the (j, c) statistic: mean over (i, n) of the row-pass
    // terms. Constant along the n reduction, so it factors out of the sum.
    let stat_row = tape.sum(beta, &[0, 2])?;
    let stat_row = tape.scale(stat_row, 1.0 / hw)?;
    let ysum = tape.sum(beta, &[2])?;
    let y = match gate_row.eval(tape, stat_row)? {
        Some(gr) => {
            let gr = tape.reshape(gr, &[1, w, cv])?;
            tape.mul(gr, ysum)?
        }
        None => ysum,
    };
    to_channel_major(tape, y)
}

/// Full pairwise self-attention; output `[Cv,H,W]`.
pub fn record_self_attention(tape: &mut Tape, x: Var, p: &DiffAttn) -> Result<Var> {
    let AttnDims { h, w, cv, .. } = p.dims;
    let tq = project(tape, x, p.theta)?;
    let v = project(tape, x, p.g)?;
    let wts = full_weights(tape, tq)?;
    let v2 = tape.reshape(v, &[cv, h * w])?;
    let v2 = tape.transpose(v2, &[1, 0])?;
    let ysum = tape.matmul(wts, v2)?;
    let ysum = tape.reshape(ysum, &[h, w, cv])?;
    to_channel_major(tape, ysum)
}

/// Channel-gated full self-attention; output `[Cv,H,W]`.
pub fn record_channelized_self(
    tape: &mut Tape,
    x: Var,
    p: &DiffAttn,
    gate: &DiffGate,
) -> Result<Var> {
    let AttnDims { h, w, cv, .. } = p.dims;
    let hw = (h * w) as f64;
    let tq = project(tape, x, p.theta)?;
    let v = project(tape, x, p.g)?;
    let wts = full_weights(tape, tq)?;
    let v2 = tape.reshape(v, &[cv, h * w])?;
    let v2 = tape.transpose(v2, &[1, 0])?;
    let ysum = tape.matmul(wts, v2)?;
    let stat = tape.scale(ysum, 1.0 / hw)?;
    let y = match gate.eval(tape, stat)? {
        Some(g) => tape.mul(g, ysum)?,
        None => ysum,
    };
    let y = tape.reshape(y, &[h, w, cv])?;
    to_channel_major(tape, y)
}
