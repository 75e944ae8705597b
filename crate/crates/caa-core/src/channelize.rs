//! Per-channel spatial gating for the attention kernels.
//!
//! Plain axial attention collapses all channels with the same spatial
//! weights. The channelized variants insert a learned gate after each
//! attention pass so every channel can scale its own spatial mix:
//!
//! * the **column gate** sees the column-pass statistic
//!   `stat[i,n,:] = (sum_{m,j} alpha[i,j,m,n,:]) / (H*W)` — equivalently
//!   `(sum_j alpha_sum[i,j,n,:]) / (H*W)` — and scales `alpha_sum` before
//!   the row pass;
//! * the **row gate** sees `stat[j,:] = (sum_{i,n} beta[i,j,n,:]) / (H*W)`
//!   over the gated row-pass terms and scales each term inside the final
//!   sum over `n`;
//! * the **full-pair gate** (channelized full self-attention) sees the
//!   per-pixel mean of the weighted values and scales the aggregate.
//!
//! Each gate is constant along the reduction axes of its stage, so applying
//! it outside the reduction (to `alpha_sum` rather than per-`m` terms, to
//! the aggregate rather than per-`(m,n)` terms) is algebraically exact; the
//! loop oracles gate every term explicitly and agree to rounding error.
//!
//! A gate stack is a small MLP on the channel axis: `L >= 1` hidden layers
//! of one width (each followed by the configured activation) and a final
//! projection back to `Cv` channels followed by a sigmoid. The sigmoid
//! saturates into the open interval (0, 1), so gates never erase or pass a
//! channel exactly — except in [`GateMode::Bypass`], which short-circuits
//! the stack to exact ones and turns every gated kernel into its ungated
//! counterpart bit for bit.

use crate::attention::{
    apply_weights_to_values, attention_maps, breakdown, combine_beta_row, project,
    reduce_row_into_y, self_attention_weights, AlphaFull, AttnParams, Breakdown,
};
use crate::error::{CaaError, Result};
use crate::rng::SeedRng;
use crate::tensor::{Scalar, Tensor};

// ───────────────────────── gate configuration ─────────────────────────

/// Nonlinearity applied after each hidden gate layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Relu,
    /// Leaky rectifier with the given negative-side slope.
    LeakyRelu(f64),
}

impl Default for Activation {
    /// Library default: leaky rectifier with slope 0.01.
    fn default() -> Self {
        Activation::LeakyRelu(0.01)
    }
}

/// Which statistic a gate stack consumes (and therefore which axes its
/// output varies over).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateStage {
    /// Column-pass gate, varies over `(i, n, c)`.
    Column,
    /// Row-pass gate, varies over `(j, c)`.
    Row,
    /// Full-pair gate, varies over `(i, j, c)`.
    Full,
}

impl std::fmt::Display for GateStage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GateStage::Column => "column",
            GateStage::Row => "row",
            GateStage::Full => "full",
        })
    }
}

/// How the stack is evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GateMode {
    /// Evaluate the configured matrices.
    Learned,
    /// Skip the stack and emit exact ones (`1.0 * x == x` bitwise, so the
    /// gated kernels reduce to their ungated counterparts bit for bit).
    Bypass,
    /// Evaluate the matrices but add a constant to the pre-sigmoid logits;
    /// large negative shifts drive every gate toward 0 for damping tests.
    ShiftLogits(f64),
}

/// One gate stack: matrices, activation, stage tag, and evaluation mode.
#[derive(Debug, Clone)]
pub struct GateParams<T> {
    stage: GateStage,
    /// `[Cv, w]`, then `L-1` times `[w, w]`, then `[w, Cv]`.
    layers: Vec<Tensor<T>>,
    activation: Activation,
    mode: GateMode,
    cv: usize,
    hidden_width: usize,
    hidden_layers: usize,
}

impl<T: Scalar> GateParams<T> {
    /// Validates and assembles a learned gate stack. `layers` must hold at
    /// least two matrices forming a chain `Cv -> w -> ... -> w -> Cv` with
    /// one uniform hidden width.
    pub fn new(stage: GateStage, layers: Vec<Tensor<T>>, activation: Activation) -> Result<Self> {
        if layers.len() < 2 {
            return Err(CaaError::GateTooShallow {
                min: 2,
                got: layers.len(),
            });
        }
        for (index, m) in layers.iter().enumerate() {
            if m.rank() != 2 {
                return Err(CaaError::DimMismatch {
                    what: "gate matrix rank",
                    expected: 2,
                    got: m.rank(),
                });
            }
            let _ = index;
        }
        let cv = layers[0].shape()[0];
        let width = layers[0].shape()[1];
        let mut prev_out = width;
        for (index, m) in layers.iter().enumerate().skip(1) {
            if m.shape()[0] != prev_out {
                return Err(CaaError::GateWidthMismatch {
                    index,
                    expected: prev_out,
                    got: m.shape()[0],
                });
            }
            let last = index == layers.len() - 1;
            let want_out = if last { cv } else { width };
            if m.shape()[1] != want_out {
                return Err(CaaError::GateWidthMismatch {
                    index,
                    expected: want_out,
                    got: m.shape()[1],
                });
            }
            prev_out = m.shape()[1];
        }
        Ok(Self {
            stage,
            hidden_layers: layers.len() - 1,
            hidden_width: width,
            cv,
            layers,
            activation,
            mode: GateMode::Learned,
        })
    }

    /// Seeded stack: `hidden_layers` hidden layers of width `width`, every
    /// matrix drawn zero-mean uniform scaled by `1/sqrt(fan_in)` from the
    /// streams `<prefix>.layer<k>`.
    pub fn seeded(
        stage: GateStage,
        cv: usize,
        hidden_layers: usize,
        width: usize,
        activation: Activation,
        rng: &SeedRng,
        prefix: &str,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(hidden_layers + 1);
        let mut fan_in = cv;
        for k in 0..hidden_layers {
            layers.push(rng.scaled_uniform(&format!("{prefix}.layer{k}"), fan_in, width)?);
            fan_in = width;
        }
        layers.push(rng.scaled_uniform(&format!("{prefix}.layer{hidden_layers}"), fan_in, cv)?);
        Self::new(stage, layers, activation)
    }

    /// A stack that emits exact ones (see [`GateMode::Bypass`]).
    pub fn bypass(stage: GateStage, cv: usize) -> Self {
        Self {
            stage,
            layers: Vec::new(),
            activation: Activation::default(),
            mode: GateMode::Bypass,
            cv,
            hidden_width: 0,
            hidden_layers: 0,
        }
    }

    pub fn with_mode(mut self, mode: GateMode) -> Self {
        self.mode = mode;
        self
    }

    /// Copy with one weight nudged by `delta`; used to prove that the
    /// verification suites actually see the efficient path's parameters.
    pub fn with_perturbed_weight(mut self, layer: usize, flat_index: usize, delta: f64) -> Result<Self> {
        if layer >= self.layers.len() {
            return Err(CaaError::DimMismatch {
                what: "gate layer index",
                expected: self.layers.len(),
                got: layer,
            });
        }
        let m = &mut self.layers[layer];
        let idx = flat_index % m.len();
        let old = m.data()[idx];
        m.data_mut()[idx] = old + T::from_f64(delta);
        Ok(self)
    }

    pub fn stage(&self) -> GateStage {
        self.stage
    }

    pub fn cv(&self) -> usize {
        self.cv
    }

    pub fn hidden_width(&self) -> usize {
        self.hidden_width
    }

    pub fn hidden_layers(&self) -> usize {
        self.hidden_layers
    }

    pub fn layers(&self) -> &[Tensor<T>] {
        &self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn mode(&self) -> GateMode {
        self.mode
    }

    /// Widest row the evaluation ever materializes, per site.
    pub fn max_width(&self) -> usize {
        self.cv.max(self.hidden_width)
    }

    fn check_stage(&self, expected: GateStage) -> Result<()> {
        if self.stage != expected {
            return Err(CaaError::StageMismatch {
                expected: expected.to_string(),
                got: self.stage.to_string(),
            });
        }
        Ok(())
    }
}

/// Evaluated gate values plus the stage they belong to.
#[derive(Debug, Clone)]
pub struct GateField<T> {
    pub stage: GateStage,
    /// Column: `[H, W, Cv]` indexed `(i, n, c)`. Row: `[W, Cv]` indexed
    /// `(j, c)`. Full: `[H, W, Cv]` indexed `(i, j, c)`.
    pub values: Tensor<T>,
}

// ───────────────────────── gate evaluation ─────────────────────────

fn apply_activation<T: Scalar>(activation: Activation, data: &mut [T]) {
    match activation {
        Activation::Relu => {
            for v in data {
                if *v < T::zero() {
                    *v = T::zero();
                }
            }
        }
        Activation::LeakyRelu(slope) => {
            let slope = T::from_f64(slope);
            for v in data {
                if *v < T::zero() {
                    *v = slope * *v;
                }
            }
        }
    }
}

/// Evaluates the stack on `sites` rows of `stat` (row-major `[sites, Cv]`),
/// writing `[sites, Cv]` gates into `out`. `scratch_a` and `scratch_b` must
/// each hold `sites * p.max_width()` elements; no other memory is touched,
/// which lets the grouped executor account for every live buffer exactly.
pub(crate) fn gate_rows_into<T: Scalar>(
    p: &GateParams<T>,
    stat: &[T],
    sites: usize,
    scratch_a: &mut [T],
    scratch_b: &mut [T],
    out: &mut [T],
) {
    debug_assert_eq!(stat.len(), sites * p.cv);
    debug_assert_eq!(out.len(), sites * p.cv);
    if matches!(p.mode, GateMode::Bypass) {
        for v in out.iter_mut() {
            *v = T::one();
        }
        return;
    }
    debug_assert!(scratch_a.len() >= sites * p.max_width());
    debug_assert!(scratch_b.len() >= sites * p.max_width());

    scratch_a[..stat.len()].copy_from_slice(stat);
    let mut cur: &mut [T] = scratch_a;
    let mut next: &mut [T] = scratch_b;
    let mut width = p.cv;

    let last = p.layers.len() - 1;
    for (k, m) in p.layers.iter().enumerate() {
        let (win, wout) = (m.shape()[0], m.shape()[1]);
        debug_assert_eq!(win, width);
        let md = m.data();
        for s in 0..sites {
            for o in 0..wout {
                let mut acc = T::zero();
                for q in 0..win {
                    acc += cur[s * win + q] * md[q * wout + o];
                }
                next[s * wout + o] = acc;
            }
        }
        if k < last {
            apply_activation(p.activation, &mut next[..sites * wout]);
        }
        width = wout;
        std::mem::swap(&mut cur, &mut next);
    }

    let shift = match p.mode {
        GateMode::ShiftLogits(s) => T::from_f64(s),
        _ => T::zero(),
    };
    for s in 0..sites * p.cv {
        out[s] = (cur[s] + shift).sigmoid();
    }
}

/// Applies a gate stack to a statistic tensor whose trailing axis is the
/// channel axis `Cv`, returning gates of the same shape with every value in
/// the open interval (0, 1) — or exact ones under [`GateMode::Bypass`].
pub fn gate_mlp<T: Scalar>(stat: &Tensor<T>, p: &GateParams<T>) -> Result<Tensor<T>> {
    if stat.rank() == 0 || stat.shape()[stat.rank() - 1] != p.cv {
        return Err(CaaError::DimMismatch {
            what: "gate statistic channel axis",
            expected: p.cv,
            got: if stat.rank() == 0 { 1 } else { stat.shape()[stat.rank() - 1] },
        });
    }
    let sites = stat.len() / p.cv;
    let mut out = Tensor::zeros(stat.shape())?;
    let scratch = sites * p.max_width();
    let mut a = vec![T::zero(); scratch.max(1)];
    let mut b = vec![T::zero(); scratch.max(1)];
    gate_rows_into(p, stat.data(), sites, &mut a, &mut b, out.data_mut());
    Ok(out)
}

// ───────────────────────── stage statistics ─────────────────────────

/// Per-row column-pass statistic: `stat[n,c] = (sum_j row[j,n,c]) / (H*W)`
/// for one query row's buffer (layout `[W(j), W(n), Cv]`). Ascending `j`.
pub(crate) fn column_stat_row<T: Scalar>(row: &[T], w: usize, cv: usize, hw: usize, out: &mut [T]) {
    let denom = T::from_f64(hw as f64);
    for n in 0..w {
        for c in 0..cv {
            let mut acc = T::zero();
            for j in 0..w {
                acc += row[(j * w + n) * cv + c];
            }
            out[n * cv + c] = acc / denom;
        }
    }
}

/// Column-pass statistic `[H, W, Cv]` indexed `(i, n, c)`: the spatial mean
/// of the per-pair products, `(sum_{m,j} alpha[i,j,m,n,:]) / (H*W)`.
pub fn column_stat<T: Scalar>(alpha_sum: &Tensor<T>) -> Result<Tensor<T>> {
    let (h, w, cv) = (alpha_sum.shape()[0], alpha_sum.shape()[1], alpha_sum.shape()[3]);
    let mut stat = Tensor::zeros(&[h, w, cv])?;
    let row_len = w * w * cv;
    for i in 0..h {
        column_stat_row(
            &alpha_sum.data()[i * row_len..(i + 1) * row_len],
            w,
            cv,
            h * w,
            &mut stat.data_mut()[i * w * cv..(i + 1) * w * cv],
        );
    }
    Ok(stat)
}

/// Row-pass statistic `[W, Cv]` indexed `(j, c)`:
/// `(sum_{i,n} gated_beta[i,j,n,:]) / (H*W)`, accumulated ascending `(i, n)`.
pub fn row_stat<T: Scalar>(gated_beta: &Tensor<T>) -> Result<Tensor<T>> {
    let (h, w, cv) = (gated_beta.shape()[0], gated_beta.shape()[1], gated_beta.shape()[3]);
    let mut acc = Tensor::zeros(&[w, cv])?;
    {
        let out = acc.data_mut();
        let bd = gated_beta.data();
        for i in 0..h {
            let row = &bd[i * w * w * cv..(i + 1) * w * w * cv];
            accumulate_row_stat(row, w, cv, out);
        }
    }
    let denom = T::from_f64((h * w) as f64);
    for v in acc.data_mut() {
        *v = *v / denom;
    }
    Ok(acc)
}

/// Adds one query row's contribution to the row statistic accumulator
/// (`[W, Cv]` flattened): `acc[j,c] += sum_n row[j,n,c]`, ascending `n`.
/// Shared with the grouped executor so the accumulation sequence per
/// `(j, c)` is identical no matter how rows are grouped.
pub(crate) fn accumulate_row_stat<T: Scalar>(row: &[T], w: usize, cv: usize, acc: &mut [T]) {
    for j in 0..w {
        for n in 0..w {
            for c in 0..cv {
                acc[j * cv + c] += row[(j * w + n) * cv + c];
            }
        }
    }
}

/// Multiplies one query row's buffer (layout `[W(j), W(n), Cv]`) by a
/// column gate row (`[W(n), Cv]` flattened) in place.
pub(crate) fn scale_row_by_gate<T: Scalar>(row: &mut [T], gate: &[T], w: usize, cv: usize) {
    for j in 0..w {
        for n in 0..w {
            for c in 0..cv {
                row[(j * w + n) * cv + c] = gate[n * cv + c] * row[(j * w + n) * cv + c];
            }
        }
    }
}

// ───────────────────────── gate fields ─────────────────────────

/// Evaluates the column gate from a decomposition's column-pass sums.
pub fn column_gate<T: Scalar>(bd: &Breakdown<T>, p: &GateParams<T>) -> Result<GateField<T>> {
    p.check_stage(GateStage::Column)?;
    let stat = column_stat(&bd.alpha_sum)?;
    Ok(GateField {
        stage: GateStage::Column,
        values: gate_mlp(&stat, p)?,
    })
}

/// Evaluates the row gate from the (column-gated) row-pass terms.
pub fn row_gate<T: Scalar>(gated_beta: &Tensor<T>, p: &GateParams<T>) -> Result<GateField<T>> {
    p.check_stage(GateStage::Row)?;
    let stat = row_stat(gated_beta)?;
    Ok(GateField {
        stage: GateStage::Row,
        values: gate_mlp(&stat, p)?,
    })
}

// ───────────────────────── gated kernels ─────────────────────────

/// Channelized axial attention: column pass, column gate, row weighting,
/// row gate, gated sum over columns. Output `[Cv, H, W]`.
pub fn caa_forward<T: Scalar>(
    x: &Tensor<T>,
    p: &AttnParams<T>,
    gate_col: &GateParams<T>,
    gate_row: &GateParams<T>,
) -> Result<Tensor<T>> {
    gate_col.check_stage(GateStage::Column)?;
    gate_row.check_stage(GateStage::Row)?;
    let maps = attention_maps(x, p)?;
    let bd = breakdown(x, &maps, p, AlphaFull::Skip)?;
    let (h, w, cv) = (p.dims.h, p.dims.w, p.dims.cv);

    let gc = column_gate(&bd, gate_col)?;

    // Gate the column-pass sums, then weight by the row map: beta[i,j,n,:]
    // = a_row[i,j,n] * (gate_col[i,n,:] ⊙ alpha_sum[i,j,n,:]).
    let mut gated = bd.alpha_sum;
    let row_len = w * w * cv;
    for i in 0..h {
        let row = &mut gated.data_mut()[i * row_len..(i + 1) * row_len];
        scale_row_by_gate(row, &gc.values.data()[i * w * cv..(i + 1) * w * cv], w, cv);
        combine_beta_row(&maps.a_row, i, row);
    }

    let gr = row_gate(&gated, gate_row)?;

    // Final reduction applies the row gate to each term before the sum over n;
    // the gate is constant in n, so this matches gating the sum exactly.
    let mut y = Tensor::zeros(&[cv, h, w])?;
    for i in 0..h {
        reduce_row_into_y(&gated.data()[i * row_len..(i + 1) * row_len], Some(gr.values.data()), i, &mut y);
    }
    Ok(y)
}

/// Channelized full self-attention: one full-pair gate on the per-pixel
/// aggregate. Output `[Cv, H, W]`.
pub fn channelized_self_attention<T: Scalar>(
    x: &Tensor<T>,
    p: &AttnParams<T>,
    gate: &GateParams<T>,
) -> Result<Tensor<T>> {
    gate.check_stage(GateStage::Full)?;
    let (h, w, cv) = (p.dims.h, p.dims.w, p.dims.cv);
    let hw = h * w;
    let weights = self_attention_weights(x, p)?;
    let v = project(x, &p.g)?;
    let ysum = apply_weights_to_values(&weights, &v)?;

    // Per-pixel statistic: the mean over source positions of the weighted
    // values, i.e. ysum / (H*W), laid out (i, j, c).
    let denom = T::from_f64(hw as f64);
    let stat = Tensor::from_fn(&[h, w, cv], |idx| {
        ysum.data()[(idx[2] * h + idx[0]) * w + idx[1]] / denom
    })?;
    let gates = gate_mlp(&stat, gate)?;

    let mut y = Tensor::zeros(&[cv, h, w])?;
    {
        let yd = y.data_mut();
        let gd = gates.data();
        let sd = ysum.data();
        for c in 0..cv {
            for i in 0..h {
                for j in 0..w {
                    yd[(c * h + i) * w + j] = gd[(i * w + j) * cv + c] * sd[(c * h + i) * w + j];
                }
            }
        }
    }
    Ok(y)
}

// ───────────────────────── squeeze-excite channel branch ─────────────────────────

/// Weights of a global channel gate: squeeze to the per-channel spatial
/// mean, excite through `w1` (relu) and `w2` (sigmoid), rescale channels.
#[derive(Debug, Clone)]
pub struct SeParams<T> {
    /// `[C, R]` squeeze projection.
    pub w1: Tensor<T>,
    /// `[R, C]` excite projection.
    pub w2: Tensor<T>,
}

impl<T: Scalar> SeParams<T> {
    pub fn new(w1: Tensor<T>, w2: Tensor<T>) -> Result<Self> {
        if w1.rank() != 2 || w2.rank() != 2 || w1.shape()[1] != w2.shape()[0] || w1.shape()[0] != w2.shape()[1] {
            return Err(CaaError::ShapeMismatch {
                what: "squeeze-excite projections (need [C,R] and [R,C])",
                expected: w1.shape().to_vec(),
                got: w2.shape().to_vec(),
            });
        }
        Ok(Self { w1, w2 })
    }

    pub fn seeded(c: usize, r: usize, rng: &SeedRng, prefix: &str) -> Result<Self> {
        Self::new(
            rng.scaled_uniform(&format!("{prefix}.w1"), c, r)?,
            rng.scaled_uniform(&format!("{prefix}.w2"), r, c)?,
        )
    }

    pub fn channels(&self) -> usize {
        self.w1.shape()[0]
    }
}

/// Global channel gate: `y[c,:,:] = sigmoid(w2^T relu(w1^T mean(x[c])))[c]
/// * x[c,:,:]`.
pub fn se_block<T: Scalar>(x: &Tensor<T>, se: &SeParams<T>) -> Result<Tensor<T>> {
    let c = se.channels();
    if x.rank() != 3 || x.shape()[0] != c {
        return Err(CaaError::ShapeMismatch {
            what: "squeeze-excite input",
            expected: vec![c],
            got: x.shape().to_vec(),
        });
    }
    let z = x.reduce_mean(&[1, 2])?.reshape(&[1, c])?;
    let hidden = crate::tensor::contract(&z, &se.w1, &[(1, 0)])?.relu();
    let gates = crate::tensor::contract(&hidden, &se.w2, &[(1, 0)])?.sigmoid();
    // Broadcast the per-channel gate over the spatial axes.
    x.mul(&gates.reshape(&[c, 1, 1])?)
}

// ───────────────────────── dual-branch compositions ─────────────────────────

/// Channelized axial attention and a squeeze-excite branch evaluated on the
/// same input, outputs summed. Requires `Cv == C` so the branches agree.
pub fn dual_parallel<T: Scalar>(
    x: &Tensor<T>,
    p: &AttnParams<T>,
    gate_col: &GateParams<T>,
    gate_row: &GateParams<T>,
    se: &SeParams<T>,
) -> Result<Tensor<T>> {
    if p.dims.cv != p.dims.c {
        return Err(CaaError::DimMismatch {
            what: "parallel branches need matching channel counts (Cv vs C)",
            expected: p.dims.c,
            got: p.dims.cv,
        });
    }
    let spatial = caa_forward(x, p, gate_col, gate_row)?;
    let channel = se_block(x, se)?;
    spatial.add(&channel)
}

/// Channelized axial attention followed by a squeeze-excite gate on its
/// output (the default composition order).
pub fn dual_sequential<T: Scalar>(
    x: &Tensor<T>,
    p: &AttnParams<T>,
    gate_col: &GateParams<T>,
    gate_row: &GateParams<T>,
    se: &SeParams<T>,
) -> Result<Tensor<T>> {
    let spatial = caa_forward(x, p, gate_col, gate_row)?;
    se_block(&spatial, se)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::{axial_attention, self_attention, AttnDims};
    use crate::tensor::bitwise_eq;

    fn setup(dims: AttnDims, seed: u64) -> (Tensor<f64>, AttnParams<f64>) {
        let rng = SeedRng::new(seed);
        let x = rng.uniform("x", &[dims.c, dims.h, dims.w], -1.0, 1.0).unwrap();
        (x, AttnParams::seeded(dims, &rng).unwrap())
    }

    fn gates(dims: AttnDims, seed: u64, depth: usize, width: usize) -> (GateParams<f64>, GateParams<f64>) {
        let rng = SeedRng::new(seed);
        (
            GateParams::seeded(GateStage::Column, dims.cv, depth, width, Activation::default(), &rng, "gate_col").unwrap(),
            GateParams::seeded(GateStage::Row, dims.cv, depth, width, Activation::default(), &rng, "gate_row").unwrap(),
        )
    }

    #[test]
    fn stack_validation_catches_bad_chains() {
        let rng = SeedRng::new(0);
        let one = rng.scaled_uniform::<f64>("m", 3, 4).unwrap();
        assert!(matches!(
            GateParams::new(GateStage::Column, vec![one.clone()], Activation::Relu).unwrap_err(),
            CaaError::GateTooShallow { min: 2, got: 1 }
        ));

        // 3 -> 4 then 5 -> 3 breaks the chain at index 1.
        let bad = rng.scaled_uniform::<f64>("n", 5, 3).unwrap();
        assert!(matches!(
            GateParams::new(GateStage::Column, vec![one.clone(), bad], Activation::Relu).unwrap_err(),
            CaaError::GateWidthMismatch { index: 1, expected: 4, got: 5 }
        ));

        // Final matrix must return to the channel count.
        let wrong_out = rng.scaled_uniform::<f64>("o", 4, 2).unwrap();
        assert!(matches!(
            GateParams::new(GateStage::Column, vec![one, wrong_out], Activation::Relu).unwrap_err(),
            CaaError::GateWidthMismatch { index: 1, expected: 3, got: 2 }
        ));
    }

    #[test]
    fn zero_weight_stack_gates_at_one_half() {
        let layers = vec![
            Tensor::<f64>::zeros(&[3, 4]).unwrap(),
            Tensor::<f64>::zeros(&[4, 3]).unwrap(),
        ];
        let p = GateParams::new(GateStage::Full, layers, Activation::Relu).unwrap();
        let stat = SeedRng::new(1).uniform("s", &[5, 3], -2.0, 2.0).unwrap();
        let g = gate_mlp(&stat, &p).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.5), "sigmoid(0) must be exactly 0.5");
    }

    #[test]
    fn gate_values_stay_strictly_inside_the_unit_interval() {
        let dims = AttnDims { h: 3, w: 4, c: 3, cq: 2, cv: 3 };
        let (x, p) = setup(dims, 23);
        let (gc, gr) = gates(dims, 23, 3, 5);
        let maps = attention_maps(&x, &p).unwrap();
        let bd = breakdown(&x, &maps, &p, AlphaFull::Skip).unwrap();
        let col = column_gate(&bd, &gc).unwrap();
        assert_eq!(col.values.shape(), &[3, 4, 3]);
        assert!(col.values.data().iter().all(|&v| v > 0.0 && v < 1.0));

        let row = row_gate(&bd.beta, &gr).unwrap();
        assert_eq!(row.values.shape(), &[4, 3]);
        assert!(row.values.data().iter().all(|&v| v > 0.0 && v < 1.0));

        // Even absurd logits saturate inside the open interval.
        let shifted = gc.clone().with_mode(GateMode::ShiftLogits(500.0));
        let hi = column_gate(&bd, &shifted).unwrap();
        assert!(hi.values.data().iter().all(|&v| v < 1.0));
        let shifted = gc.with_mode(GateMode::ShiftLogits(-500.0));
        let lo = column_gate(&bd, &shifted).unwrap();
        assert!(lo.values.data().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn relu_and_leaky_activations_disagree_on_negative_hidden_values() {
        let rng = SeedRng::new(9);
        let layers: Vec<Tensor<f64>> = vec![
            rng.scaled_uniform("l0", 3, 6).unwrap(),
            rng.scaled_uniform("l1", 6, 3).unwrap(),
        ];
        let stat = rng.uniform("s", &[4, 3], -3.0, 3.0).unwrap();
        let relu = GateParams::new(GateStage::Full, layers.clone(), Activation::Relu).unwrap();
        let leaky = GateParams::new(GateStage::Full, layers, Activation::LeakyRelu(0.01)).unwrap();
        let a = gate_mlp(&stat, &relu).unwrap();
        let b = gate_mlp(&stat, &leaky).unwrap();
        assert!(!bitwise_eq(&a, &b), "activations must actually differ");
    }

    #[test]
    fn stage_misuse_is_rejected() {
        let dims = AttnDims { h: 2, w: 2, c: 2, cq: 2, cv: 2 };
        let (x, p) = setup(dims, 31);
        let (gc, gr) = gates(dims, 31, 1, 3);
        // Row stack in the column slot and vice versa.
        assert!(matches!(
            caa_forward(&x, &p, &gr, &gc).unwrap_err(),
            CaaError::StageMismatch { .. }
        ));
        let full = GateParams::<f64>::bypass(GateStage::Full, 2);
        assert!(caa_forward(&x, &p, &gc, &gr).is_ok());
        assert!(matches!(
            channelized_self_attention(&x, &p, &gc).unwrap_err(),
            CaaError::StageMismatch { .. }
        ));
        assert!(channelized_self_attention(&x, &p, &full).is_ok());
    }

    #[test]
    fn bypass_gates_reproduce_ungated_kernels_bitwise() {
        let dims = AttnDims { h: 4, w: 3, c: 3, cq: 2, cv: 3 };
        let (x, p) = setup(dims, 37);
        let col = GateParams::bypass(GateStage::Column, dims.cv);
        let row = GateParams::bypass(GateStage::Row, dims.cv);
        let full = GateParams::bypass(GateStage::Full, dims.cv);

        let gated = caa_forward(&x, &p, &col, &row).unwrap();
        assert!(bitwise_eq(&gated, &axial_attention(&x, &p).unwrap()));

        let gated = channelized_self_attention(&x, &p, &full).unwrap();
        assert!(bitwise_eq(&gated, &self_attention(&x, &p).unwrap()));
    }

    #[test]
    fn zero_weight_gates_scale_the_axial_output_by_a_quarter() {
        // Both gates evaluate to exactly 0.5, and multiplying by 0.5 twice
        // is exact in binary floating point, so the gated output is exactly
        // a quarter of the ungated one.
        let dims = AttnDims { h: 3, w: 3, c: 2, cq: 2, cv: 2 };
        let (x, p) = setup(dims, 41);
        let zero_col = GateParams::new(
            GateStage::Column,
            vec![Tensor::zeros(&[2, 3]).unwrap(), Tensor::zeros(&[3, 2]).unwrap()],
            Activation::Relu,
        )
        .unwrap();
        let zero_row = GateParams::new(
            GateStage::Row,
            vec![Tensor::zeros(&[2, 3]).unwrap(), Tensor::zeros(&[3, 2]).unwrap()],
            Activation::Relu,
        )
        .unwrap();
        let gated = caa_forward(&x, &p, &zero_col, &zero_row).unwrap();
        let quartered = axial_attention(&x, &p).unwrap().scale(0.25);
        assert!(bitwise_eq(&gated, &quartered));
    }

    #[test]
    fn strongly_negative_gate_logits_damp_the_output() {
        let dims = AttnDims { h: 3, w: 4, c: 3, cq: 3, cv: 3 };
        let (x, p) = setup(dims, 43);
        let (gc, gr) = gates(dims, 43, 2, 4);
        let damped = caa_forward(
            &x,
            &p,
            &gc.with_mode(GateMode::ShiftLogits(-20.0)),
            &gr.with_mode(GateMode::ShiftLogits(-20.0)),
        )
        .unwrap();
        let reference = axial_attention(&x, &p).unwrap();
        let ref_mag = reference.data().iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        let damped_mag = damped.data().iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        assert!(
            damped_mag < ref_mag * 1e-10,
            "gates near zero must crush the output: {damped_mag} vs {ref_mag}"
        );
    }

    #[test]
    fn single_pixel_column_stat_is_the_value_projection() {
        let dims = AttnDims { h: 1, w: 1, c: 3, cq: 2, cv: 4 };
        let (x, p) = setup(dims, 47);
        let maps = attention_maps(&x, &p).unwrap();
        let bd = breakdown(&x, &maps, &p, AlphaFull::Skip).unwrap();
        let stat = column_stat(&bd.alpha_sum).unwrap();
        let v = project(&x, &p.g).unwrap();
        assert_eq!(stat.shape(), &[1, 1, 4]);
        assert!(bitwise_eq(&stat.reshape(&[4]).unwrap(), &v.reshape(&[4]).unwrap()));
    }

    #[test]
    fn se_block_matches_hand_loop() {
        let rng = SeedRng::new(53);
        let x: Tensor<f64> = rng.uniform("x", &[3, 2, 4], -1.0, 1.0).unwrap();
        let se = SeParams::seeded(3, 2, &rng, "se").unwrap();
        let y = se_block(&x, &se).unwrap();

        for c in 0..3 {
            let mut mean = 0.0;
            for i in 0..2 {
                for j in 0..4 {
                    mean += x.at(&[c, i, j]);
                }
            }
            let _ = mean / 8.0;
        }
        // Recompute the whole gate path with explicit loops.
        let mut z = [0.0f64; 3];
        for (c, zc) in z.iter_mut().enumerate() {
            for i in 0..2 {
                for j in 0..4 {
                    *zc += x.at(&[c, i, j]);
                }
            }
            *zc /= 8.0;
        }
        let mut hidden = [0.0f64; 2];
        for (r, hr) in hidden.iter_mut().enumerate() {
            for (c, zc) in z.iter().enumerate() {
                *hr += zc * se.w1.at(&[c, r]);
            }
            *hr = hr.max(0.0);
        }
        for c in 0..3 {
            let mut logit = 0.0;
            for (r, hr) in hidden.iter().enumerate() {
                logit += hr * se.w2.at(&[r, c]);
            }
            let gate = 1.0 / (1.0 + (-logit).exp());
            for i in 0..2 {
                for j in 0..4 {
                    let expect = gate * x.at(&[c, i, j]);
                    assert!((y.at(&[c, i, j]) - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn dual_compositions_combine_their_branches() {
        let dims = AttnDims { h: 3, w: 3, c: 3, cq: 2, cv: 3 };
        let (x, p) = setup(dims, 59);
        let (gc, gr) = gates(dims, 59, 1, 4);
        let se = SeParams::seeded(3, 2, &SeedRng::new(59), "se").unwrap();

        let par = dual_parallel(&x, &p, &gc, &gr, &se).unwrap();
        let expect = caa_forward(&x, &p, &gc, &gr)
            .unwrap()
            .add(&se_block(&x, &se).unwrap())
            .unwrap();
        assert!(bitwise_eq(&par, &expect));

        let seq = dual_sequential(&x, &p, &gc, &gr, &se).unwrap();
        let expect = se_block(&caa_forward(&x, &p, &gc, &gr).unwrap(), &se).unwrap();
        assert!(bitwise_eq(&seq, &expect));
    }

    #[test]
    fn parallel_composition_requires_matching_channels() {
        let dims = AttnDims { h: 2, w: 2, c: 3, cq: 2, cv: 2 };
        let (x, p) = setup(dims, 61);
        let col = GateParams::bypass(GateStage::Column, 2);
        let row = GateParams::bypass(GateStage::Row, 2);
        let se = SeParams::seeded(3, 2, &SeedRng::new(61), "se").unwrap();
        assert!(matches!(
            dual_parallel(&x, &p, &col, &row, &se).unwrap_err(),
            CaaError::DimMismatch { .. }
        ));
    }

    #[test]
    fn perturbing_a_weight_changes_the_gate() {
        let dims = AttnDims { h: 2, w: 3, c: 2, cq: 2, cv: 2 };
        let (x, p) = setup(dims, 67);
        let (gc, gr) = gates(dims, 67, 1, 3);
        let base = caa_forward(&x, &p, &gc, &gr).unwrap();
        let bumped = gc.clone().with_perturbed_weight(0, 0, 1e-3).unwrap();
        let moved = caa_forward(&x, &p, &bumped, &gr).unwrap();
        assert!(!bitwise_eq(&base, &moved));
    }
}
