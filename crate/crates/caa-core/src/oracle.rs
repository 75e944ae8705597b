//! Independent loop-level reference implementations.
//!
//! Everything here is written against the mathematical definitions with
//! plain nested loops and its own projection, softmax, sigmoid, and gate
//! evaluation code — deliberately sharing no kernel code with the efficient
//! paths it validates (only the parameter containers and the tensor type as
//! a storage container). The fast kernels are correct exactly insofar as
//! they agree with this module.
//!
//! The oracles are f64-only and literal: the axial and channelized-axial
//! oracles materialize the full rank-5 per-pair tensor
//! `alpha[i,j,m,n,c] = a_col[i,m,j] * v[c,m,n]` and gate each term
//! explicitly inside the reductions. That costs `H*W*H*W*Cv` elements, so
//! every oracle refuses inputs whose largest buffer would exceed
//! [`OracleCaps::max_elements`].

use crate::attention::{AttnDims, AttnParams};
use crate::channelize::{Activation, GateMode, GateParams};
use crate::error::{CaaError, Result};
use crate::tensor::Tensor;

/// Size limits for the oracle's materialized buffers.
#[derive(Debug, Clone, Copy)]
pub struct OracleCaps {
    /// Largest buffer (in elements) an oracle may allocate.
    pub max_elements: usize,
}

impl Default for OracleCaps {
    fn default() -> Self {
        Self {
            max_elements: 1 << 22,
        }
    }
}

impl OracleCaps {
    /// Default cap, overridable through the `CAA_ORACLE_CAP` environment
    /// variable (a plain element count; unparsable values are ignored).
    pub fn from_env() -> Self {
        match std::env::var("CAA_ORACLE_CAP").ok().and_then(|v| v.parse().ok()) {
            Some(max_elements) => Self { max_elements },
            None => Self::default(),
        }
    }

    fn check(&self, needed: usize) -> Result<()> {
        if needed > self.max_elements {
            return Err(CaaError::CapExceeded {
                needed,
                cap: self.max_elements,
            });
        }
        Ok(())
    }
}

// ───────────────────────── primitive loops ─────────────────────────

/// In-place stable softmax over a slice.
fn softmax_slice(v: &mut [f64]) {
    let mut max = v[0];
    for &x in v.iter() {
        if x > max {
            max = x;
        }
    }
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// Stable logistic function clamped into the open interval (0, 1), matching
/// the saturation contract of the efficient path.
fn sigmoid(x: f64) -> f64 {
    let v = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    v.max(f64::MIN_POSITIVE).min(1.0f64.next_down())
}

/// Per-pixel projection: `out[k,i,j] = sum_c m[c,k] * x[c,i,j]`.
fn project_loop(x: &Tensor<f64>, m: &Tensor<f64>) -> Vec<f64> {
    let (c_in, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let k_out = m.shape()[1];
    let hw = h * w;
    let (xd, md) = (x.data(), m.data());
    let mut out = vec![0.0; k_out * hw];
    for k in 0..k_out {
        for i in 0..h {
            for j in 0..w {
                let mut acc = 0.0;
                for c in 0..c_in {
                    acc += md[c * k_out + k] * xd[c * hw + i * w + j];
                }
                out[k * hw + i * w + j] = acc;
            }
        }
    }
    out
}

/// Column attention map `[H,H,W]` indexed `(i,m,j)` from a projected map.
fn column_map_loop(q: &[f64], h: usize, w: usize, cq: usize) -> Vec<f64> {
    let hw = h * w;
    let mut a = vec![0.0; h * h * w];
    let mut slice = vec![0.0; h];
    for i in 0..h {
        for j in 0..w {
            for (m, s) in slice.iter_mut().enumerate() {
                let mut acc = 0.0;
                for qc in 0..cq {
                    acc += q[qc * hw + i * w + j] * q[qc * hw + m * w + j];
                }
                *s = acc;
            }
            softmax_slice(&mut slice);
            for (m, &s) in slice.iter().enumerate() {
                a[(i * h + m) * w + j] = s;
            }
        }
    }
    a
}

/// Row attention map `[H,W,W]` indexed `(i,j,n)` from a projected map.
fn row_map_loop(q: &[f64], h: usize, w: usize, cq: usize) -> Vec<f64> {
    let hw = h * w;
    let mut a = vec![0.0; h * w * w];
    let mut slice = vec![0.0; w];
    for i in 0..h {
        for j in 0..w {
            for (n, s) in slice.iter_mut().enumerate() {
                let mut acc = 0.0;
                for qc in 0..cq {
                    acc += q[qc * hw + i * w + j] * q[qc * hw + i * w + n];
                }
                *s = acc;
            }
            softmax_slice(&mut slice);
            for (n, &s) in slice.iter().enumerate() {
                a[(i * w + j) * w + n] = s;
            }
        }
    }
    a
}

/// Full-pair attention weights `[H,W,H,W]` indexed `(i,j,m,n)`.
fn full_weights_loop(q: &[f64], h: usize, w: usize, cq: usize) -> Vec<f64> {
    let hw = h * w;
    let mut weights = vec![0.0; hw * hw];
    let mut slice = vec![0.0; hw];
    for i in 0..h {
        for j in 0..w {
            for m in 0..h {
                for n in 0..w {
                    let mut acc = 0.0;
                    for qc in 0..cq {
                        acc += q[qc * hw + i * w + j] * q[qc * hw + m * w + n];
                    }
                    slice[m * w + n] = acc;
                }
            }
            softmax_slice(&mut slice);
            weights[(i * w + j) * hw..(i * w + j + 1) * hw].copy_from_slice(&slice);
        }
    }
    weights
}

/// Gate stack evaluated with explicit loops: hidden layers with the
/// configured activation, final projection, optional logit shift, clamped
/// sigmoid. `stat` is `[sites, cv]` row-major.
pub fn oracle_gate(stat: &[f64], sites: usize, p: &GateParams<f64>) -> Vec<f64> {
    let cv = p.cv();
    if matches!(p.mode(), GateMode::Bypass) {
        return vec![1.0; sites * cv];
    }
    let shift = match p.mode() {
        GateMode::ShiftLogits(s) => s,
        _ => 0.0,
    };
    let mut out = vec![0.0; sites * cv];
    for s in 0..sites {
        let mut cur: Vec<f64> = stat[s * cv..(s + 1) * cv].to_vec();
        for (k, m) in p.layers().iter().enumerate() {
            let (win, wout) = (m.shape()[0], m.shape()[1]);
            let md = m.data();
            let mut next = vec![0.0; wout];
            for (o, n) in next.iter_mut().enumerate() {
                let mut acc = 0.0;
                for q in 0..win {
                    acc += cur[q] * md[q * wout + o];
                }
                *n = acc;
            }
            if k < p.layers().len() - 1 {
                for v in next.iter_mut() {
                    match p.activation() {
                        Activation::Relu => {
                            if *v < 0.0 {
                                *v = 0.0;
                            }
                        }
                        Activation::LeakyRelu(slope) => {
                            if *v < 0.0 {
                                *v *= slope;
                            }
                        }
                    }
                }
            }
            cur = next;
        }
        for c in 0..cv {
            out[s * cv + c] = sigmoid(cur[c] + shift);
        }
    }
    out
}

// ───────────────────────── oracles ─────────────────────────

struct AxialPieces {
    a_row: Vec<f64>,
    /// Rank-5 `alpha[i,j,m,n,c]`, layout `(((i*w+j)*h+m)*w+n)*cv+c`.
    alpha: Vec<f64>,
}

fn axial_pieces(x: &Tensor<f64>, p: &AttnParams<f64>, caps: &OracleCaps) -> Result<AxialPieces> {
    p.check_input(x)?;
    let AttnDims { h, w, cq, cv, .. } = p.dims;
    let hw = h * w;
    caps.check(hw * hw * cv)?;

    let tq = project_loop(x, &p.theta);
    let pq = project_loop(x, &p.phi);
    let v = project_loop(x, &p.g);
    let a_col = column_map_loop(&tq, h, w, cq);
    let a_row = row_map_loop(&pq, h, w, cq);

    let mut alpha = vec![0.0; hw * hw * cv];
    for i in 0..h {
        for j in 0..w {
            for m in 0..h {
                for n in 0..w {
                    for c in 0..cv {
                        alpha[(((i * w + j) * h + m) * w + n) * cv + c] =
                            a_col[(i * h + m) * w + j] * v[c * hw + m * w + n];
                    }
                }
            }
        }
    }
    Ok(AxialPieces { a_row, alpha })
}

/// Axial (column pass then row pass) attention by direct translation of the
/// definitions: materializes the rank-5 per-pair tensor and reduces it.
pub fn oracle_axial(x: &Tensor<f64>, p: &AttnParams<f64>, caps: &OracleCaps) -> Result<Tensor<f64>> {
    let AttnDims { h, w, cv, .. } = p.dims;
    let pieces = axial_pieces(x, p, caps)?;
    let mut y = Tensor::zeros(&[cv, h, w])?;
    let yd = y.data_mut();
    for i in 0..h {
        for j in 0..w {
            for c in 0..cv {
                let mut total = 0.0;
                for n in 0..w {
                    let mut col_sum = 0.0;
                    for m in 0..h {
                        col_sum += pieces.alpha[(((i * w + j) * h + m) * w + n) * cv + c];
                    }
                    total += pieces.a_row[(i * w + j) * w + n] * col_sum;
                }
                yd[(c * h + i) * w + j] = total;
            }
        }
    }
    Ok(y)
}

/// Channelized axial attention by direct translation: every gate multiplies
/// its terms inside the reductions rather than being factored out.
pub fn oracle_caa(
    x: &Tensor<f64>,
    p: &AttnParams<f64>,
    gate_col: &GateParams<f64>,
    gate_row: &GateParams<f64>,
    caps: &OracleCaps,
) -> Result<Tensor<f64>> {
    let AttnDims { h, w, cv, .. } = p.dims;
    let hw = h * w;
    let pieces = axial_pieces(x, p, caps)?;

    // Column-gate statistic: mean over (m, j) of the per-pair products,
    // per (i, n, c).
    let mut stat_col = vec![0.0; h * w * cv];
    for i in 0..h {
        for n in 0..w {
            for c in 0..cv {
                let mut acc = 0.0;
                for j in 0..w {
                    for m in 0..h {
                        acc += pieces.alpha[(((i * w + j) * h + m) * w + n) * cv + c];
                    }
                }
                stat_col[(i * w + n) * cv + c] = acc / hw as f64;
            }
        }
    }
    let gc = oracle_gate(&stat_col, h * w, gate_col);

    // Row-pass terms with the column gate applied to each rank-5 term.
    let mut beta = vec![0.0; h * w * w * cv];
    for i in 0..h {
        for j in 0..w {
            for n in 0..w {
                for c in 0..cv {
                    let mut col_sum = 0.0;
                    for m in 0..h {
                        col_sum += gc[(i * w + n) * cv + c]
                            * pieces.alpha[(((i * w + j) * h + m) * w + n) * cv + c];
                    }
                    beta[((i * w + j) * w + n) * cv + c] =
                        pieces.a_row[(i * w + j) * w + n] * col_sum;
                }
            }
        }
    }

    // Row-gate statistic: mean over (i, n) per (j, c).
    let mut stat_row = vec![0.0; w * cv];
    for j in 0..w {
        for c in 0..cv {
            let mut acc = 0.0;
            for i in 0..h {
                for n in 0..w {
                    acc += beta[((i * w + j) * w + n) * cv + c];
                }
            }
            stat_row[j * cv + c] = acc / hw as f64;
        }
    }
    let gr = oracle_gate(&stat_row, w, gate_row);

    let mut y = Tensor::zeros(&[cv, h, w])?;
    let yd = y.data_mut();
    for i in 0..h {
        for j in 0..w {
            for c in 0..cv {
                let mut total = 0.0;
                for n in 0..w {
                    total += gr[j * cv + c] * beta[((i * w + j) * w + n) * cv + c];
                }
                yd[(c * h + i) * w + j] = total;
            }
        }
    }
    Ok(y)
}

/// Full-pair self-attention by quintuple loop.
pub fn oracle_self_attention(x: &Tensor<f64>, p: &AttnParams<f64>, caps: &OracleCaps) -> Result<Tensor<f64>> {
    p.check_input(x)?;
    let AttnDims { h, w, cq, cv, .. } = p.dims;
    let hw = h * w;
    caps.check(hw * hw)?;

    let tq = project_loop(x, &p.theta);
    let v = project_loop(x, &p.g);
    let weights = full_weights_loop(&tq, h, w, cq);

    let mut y = Tensor::zeros(&[cv, h, w])?;
    let yd = y.data_mut();
    for c in 0..cv {
        for i in 0..h {
            for j in 0..w {
                let mut acc = 0.0;
                for m in 0..h {
                    for n in 0..w {
                        acc += weights[(i * w + j) * hw + m * w + n] * v[c * hw + m * w + n];
                    }
                }
                yd[c * hw + i * w + j] = acc;
            }
        }
    }
    Ok(y)
}

/// Channelized full self-attention by direct translation: materializes the
/// rank-5 weighted values and gates each `(m, n)` term explicitly.
pub fn oracle_channelized_self(
    x: &Tensor<f64>,
    p: &AttnParams<f64>,
    gate: &GateParams<f64>,
    caps: &OracleCaps,
) -> Result<Tensor<f64>> {
    p.check_input(x)?;
    let AttnDims { h, w, cq, cv, .. } = p.dims;
    let hw = h * w;
    caps.check(hw * hw * cv)?;

    let tq = project_loop(x, &p.theta);
    let v = project_loop(x, &p.g);
    let weights = full_weights_loop(&tq, h, w, cq);

    let mut alpha = vec![0.0; hw * hw * cv];
    for i in 0..h {
        for j in 0..w {
            for m in 0..h {
                for n in 0..w {
                    for c in 0..cv {
                        alpha[(((i * w + j) * h + m) * w + n) * cv + c] =
                            weights[(i * w + j) * hw + m * w + n] * v[c * hw + m * w + n];
                    }
                }
            }
        }
    }

    let mut stat = vec![0.0; hw * cv];
    for i in 0..h {
        for j in 0..w {
            for c in 0..cv {
                let mut acc = 0.0;
                for m in 0..h {
                    for n in 0..w {
                        acc += alpha[(((i * w + j) * h + m) * w + n) * cv + c];
                    }
                }
                stat[(i * w + j) * cv + c] = acc / hw as f64;
            }
        }
    }
    let gates = oracle_gate(&stat, hw, gate);

    let mut y = Tensor::zeros(&[cv, h, w])?;
    let yd = y.data_mut();
    for i in 0..h {
        for j in 0..w {
            for c in 0..cv {
                let mut acc = 0.0;
                for m in 0..h {
                    for n in 0..w {
                        acc += gates[(i * w + j) * cv + c]
                            * alpha[(((i * w + j) * h + m) * w + n) * cv + c];
                    }
                }
                yd[(c * h + i) * w + j] = acc;
            }
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channelize::GateStage;
    use crate::rng::SeedRng;
    use crate::tensor::bitwise_eq;

    fn setup(dims: AttnDims, seed: u64) -> (Tensor<f64>, AttnParams<f64>) {
        let rng = SeedRng::new(seed);
        let x = rng.uniform("x", &[dims.c, dims.h, dims.w], -1.0, 1.0).unwrap();
        (x, AttnParams::seeded(dims, &rng).unwrap())
    }

    #[test]
    fn single_pixel_is_the_value_projection() {
        let dims = AttnDims { h: 1, w: 1, c: 3, cq: 2, cv: 4 };
        let (x, p) = setup(dims, 1);
        let caps = OracleCaps::default();
        let v = Tensor::from_vec(vec![4, 1, 1], project_loop(&x, &p.g)).unwrap();
        assert!(bitwise_eq(&oracle_self_attention(&x, &p, &caps).unwrap(), &v));
        assert!(bitwise_eq(&oracle_axial(&x, &p, &caps).unwrap(), &v));
    }

    #[test]
    fn zero_query_weights_give_source_means() {
        // theta = 0 makes every logit zero, so attention averages the values
        // uniformly: full attention over all H*W sources, the axial oracle
        // over its column-then-row mixture (which also averages uniformly).
        let dims = AttnDims { h: 3, w: 4, c: 2, cq: 2, cv: 2 };
        let rng = SeedRng::new(2);
        let x: Tensor<f64> = rng.uniform("x", &[2, 3, 4], -1.0, 1.0).unwrap();
        let p = AttnParams::new(
            dims,
            Tensor::zeros(&[2, 2]).unwrap(),
            Tensor::zeros(&[2, 2]).unwrap(),
            rng.scaled_uniform("g", 2, 2).unwrap(),
        )
        .unwrap();
        let caps = OracleCaps::default();
        let v = project_loop(&x, &p.g);
        let hw = 12.0;
        let y = oracle_self_attention(&x, &p, &caps).unwrap();
        for c in 0..2 {
            let mean: f64 = v[c * 12..(c + 1) * 12].iter().sum::<f64>() / hw;
            for i in 0..3 {
                for j in 0..4 {
                    assert!((y.at(&[c, i, j]) - mean).abs() < 1e-12);
                }
            }
        }
        let y = oracle_axial(&x, &p, &caps).unwrap();
        for c in 0..2 {
            let mean: f64 = v[c * 12..(c + 1) * 12].iter().sum::<f64>() / hw;
            for i in 0..3 {
                for j in 0..4 {
                    assert!((y.at(&[c, i, j]) - mean).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn bypass_gates_collapse_to_the_ungated_oracles() {
        let dims = AttnDims { h: 3, w: 4, c: 3, cq: 2, cv: 3 };
        let (x, p) = setup(dims, 3);
        let caps = OracleCaps::default();
        let col = GateParams::bypass(GateStage::Column, 3);
        let row = GateParams::bypass(GateStage::Row, 3);
        let full = GateParams::bypass(GateStage::Full, 3);
        assert!(bitwise_eq(
            &oracle_caa(&x, &p, &col, &row, &caps).unwrap(),
            &oracle_axial(&x, &p, &caps).unwrap(),
        ));
        assert!(bitwise_eq(
            &oracle_channelized_self(&x, &p, &full, &caps).unwrap(),
            &oracle_self_attention(&x, &p, &caps).unwrap(),
        ));
    }

    #[test]
    fn zero_weight_gate_is_one_half_everywhere() {
        let p = GateParams::new(
            GateStage::Row,
            vec![Tensor::<f64>::zeros(&[2, 5]).unwrap(), Tensor::<f64>::zeros(&[5, 2]).unwrap()],
            Activation::Relu,
        )
        .unwrap();
        let stat = vec![0.3, -1.0, 2.0, 0.0, -0.5, 0.25];
        let g = oracle_gate(&stat, 3, &p);
        assert!(g.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn caps_are_enforced() {
        let dims = AttnDims { h: 4, w: 4, c: 2, cq: 2, cv: 2 };
        let (x, p) = setup(dims, 4);
        let caps = OracleCaps { max_elements: 100 };
        match oracle_axial(&x, &p, &caps).unwrap_err() {
            CaaError::CapExceeded { needed, cap } => {
                assert_eq!(needed, 16 * 16 * 2);
                assert_eq!(cap, 100);
            }
            other => panic!("expected CapExceeded, got {other:?}"),
        }
        assert!(oracle_self_attention(&x, &p, &OracleCaps { max_elements: 255 }).is_err());
        assert!(oracle_self_attention(&x, &p, &OracleCaps { max_elements: 256 }).is_ok());
    }

    #[test]
    fn oracle_sigmoid_clamps_into_the_open_interval() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(1e6) < 1.0);
        assert!(sigmoid(-1e6) > 0.0);
    }
}
