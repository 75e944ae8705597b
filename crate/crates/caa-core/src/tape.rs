//! Reverse-mode automatic differentiation over f64 tensors.
//!
//! A [`Tape`] records every operation applied to its variables; calling
//! [`Tape::backward`] on a scalar output walks the record once in reverse
//! and accumulates gradients for every variable on the tape. The walk is
//! single threaded and visits nodes in descending creation order, so
//! gradient accumulation order — like every forward reduction — is fixed
//! and results are reproducible bit for bit.
//!
//! The operation set is exactly what the attention and gating kernels need:
//! matrix products, shape surgery, broadcast add/multiply, scaling, axis
//! sums, softmax, and the sigmoid / relu / leaky-relu nonlinearities.
//! Subgradient convention: relu and leaky-relu propagate the negative-side
//! slope (0 and `slope` respectively) at exactly zero.
//!
//! Gradients are checked against [`finite_diff`], a central-difference
//! probe evaluated coordinate by coordinate in f64.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{CaaError, Result};
use crate::tensor::{contract, Tensor};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    node: usize,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Matmul { a: usize, b: usize },
    Reshape { x: usize },
    Transpose { x: usize, perm: Vec<usize> },
    Add { a: usize, b: usize },
    Mul { a: usize, b: usize },
    Scale { x: usize, k: f64 },
    SumAxes { x: usize, axes: Vec<usize> },
    Softmax { x: usize, axis: usize },
    Sigmoid { x: usize },
    Relu { x: usize },
    LeakyRelu { x: usize, slope: f64 },
}

struct Node {
    value: Tensor<f64>,
    op: Op,
}

/// Operation record supporting one reverse sweep per scalar output.
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var {
            tape: self.id,
            node: self.nodes.len() - 1,
        }
    }

    fn check(&self, v: Var) -> Result<usize> {
        if v.tape != self.id {
            return Err(CaaError::TapeMismatch {
                var_tape: v.tape,
                tape: self.id,
            });
        }
        Ok(v.node)
    }

    /// Registers a tensor on the tape. Gradients are available for every
    /// registered tensor after a backward sweep.
    pub fn input(&mut self, t: Tensor<f64>) -> Var {
        self.push(t, Op::Leaf)
    }

    /// Forward value of a recorded variable.
    pub fn value(&self, v: Var) -> Result<&Tensor<f64>> {
        Ok(&self.nodes[self.check(v)?].value)
    }

    pub fn shape(&self, v: Var) -> Result<Vec<usize>> {
        Ok(self.value(v)?.shape().to_vec())
    }

    /// Rank-2 matrix product `[m,k] x [k,n] -> [m,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ai, bi) = (self.check(a)?, self.check(b)?);
        let (av, bv) = (&self.nodes[ai].value, &self.nodes[bi].value);
        if av.rank() != 2 || bv.rank() != 2 {
            return Err(CaaError::DimMismatch {
                what: "matmul operand rank",
                expected: 2,
                got: av.rank().max(bv.rank()),
            });
        }
        let value = contract(av, bv, &[(1, 0)])?;
        Ok(self.push(value, Op::Matmul { a: ai, b: bi }))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let xi = self.check(x)?;
        let value = self.nodes[xi].value.reshape(shape)?;
        Ok(self.push(value, Op::Reshape { x: xi }))
    }

    pub fn transpose(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let xi = self.check(x)?;
        let value = self.nodes[xi].value.transpose(perm)?;
        Ok(self.push(
            value,
            Op::Transpose {
                x: xi,
                perm: perm.to_vec(),
            },
        ))
    }

    /// Elementwise sum under trailing-axis broadcasting.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ai, bi) = (self.check(a)?, self.check(b)?);
        let value = self.nodes[ai].value.add(&self.nodes[bi].value)?;
        Ok(self.push(value, Op::Add { a: ai, b: bi }))
    }

    /// Elementwise product under trailing-axis broadcasting.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ai, bi) = (self.check(a)?, self.check(b)?);
        let value = self.nodes[ai].value.mul(&self.nodes[bi].value)?;
        Ok(self.push(value, Op::Mul { a: ai, b: bi }))
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Result<Var> {
        let xi = self.check(x)?;
        let value = self.nodes[xi].value.scale(k);
        Ok(self.push(value, Op::Scale { x: xi, k }))
    }

    /// Sum over `axes` (removed from the shape).
    pub fn sum(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let xi = self.check(x)?;
        let value = self.nodes[xi].value.reduce_sum(axes)?;
        Ok(self.push(
            value,
            Op::SumAxes {
                x: xi,
                axes: axes.to_vec(),
            },
        ))
    }

    /// Sum over every axis, yielding the rank-0 scalar that `backward`
    /// expects.
    pub fn sum_all(&mut self, x: Var) -> Result<Var> {
        let rank = self.value(x)?.rank();
        let axes: Vec<usize> = (0..rank).collect();
        self.sum(x, &axes)
    }

    /// Mean over `axes`: recorded as a sum followed by a scale, so the
    /// derivative falls out of the composition.
    pub fn mean(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let count: usize = {
            let shape = self.shape(x)?;
            axes.iter().map(|&a| shape[a]).product()
        };
        let summed = self.sum(x, axes)?;
        self.scale(summed, 1.0 / count as f64)
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let xi = self.check(x)?;
        let value = self.nodes[xi].value.softmax(axis)?;
        Ok(self.push(value, Op::Softmax { x: xi, axis }))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let xi = self.check(x)?;
        let value = self.nodes[xi].value.sigmoid();
        Ok(self.push(value, Op::Sigmoid { x: xi }))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let xi = self.check(x)?;
        let value = self.nodes[xi].value.relu();
        Ok(self.push(value, Op::Relu { x: xi }))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var> {
        let xi = self.check(x)?;
        let value = self.nodes[xi].value.leaky_relu(slope);
        Ok(self.push(value, Op::LeakyRelu { x: xi, slope }))
    }

    /// Reverse sweep from a scalar output. Returns the gradient of the
    /// output with respect to every variable recorded on the tape.
    pub fn backward(&self, out: Var) -> Result<Gradients> {
        let out_idx = self.check(out)?;
        let out_value = &self.nodes[out_idx].value;
        if out_value.len() != 1 {
            return Err(CaaError::NonScalarOutput {
                shape: out_value.shape().to_vec(),
            });
        }

        let mut grads: Vec<Option<Tensor<f64>>> = vec![None; self.nodes.len()];
        grads[out_idx] = Some(Tensor::full(out_value.shape(), 1.0)?);

        for idx in (0..=out_idx).rev() {
            let Some(g) = grads[idx].clone() else { continue };
            match &self.nodes[idx].op {
                Op::Leaf => {}
                Op::Matmul { a, b } => {
                    let (av, bv) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    // dA[m,k] = sum_n dY[m,n] B[k,n]; dB[k,n] = sum_m A[m,k] dY[m,n]
                    accumulate(&mut grads, *a, contract(&g, bv, &[(1, 1)])?)?;
                    accumulate(&mut grads, *b, contract(av, &g, &[(0, 0)])?)?;
                }
                Op::Reshape { x } => {
                    let shape = self.nodes[*x].value.shape().to_vec();
                    accumulate(&mut grads, *x, g.reshape(&shape)?)?;
                }
                Op::Transpose { x, perm } => {
                    let mut inverse = vec![0usize; perm.len()];
                    for (k, &p) in perm.iter().enumerate() {
                        inverse[p] = k;
                    }
                    accumulate(&mut grads, *x, g.transpose(&inverse)?)?;
                }
                Op::Add { a, b } => {
                    accumulate(&mut grads, *a, unbroadcast(&g, self.nodes[*a].value.shape())?)?;
                    accumulate(&mut grads, *b, unbroadcast(&g, self.nodes[*b].value.shape())?)?;
                }
                Op::Mul { a, b } => {
                    let (av, bv) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    accumulate(&mut grads, *a, unbroadcast(&g.mul(bv)?, av.shape())?)?;
                    accumulate(&mut grads, *b, unbroadcast(&g.mul(av)?, bv.shape())?)?;
                }
                Op::Scale { x, k } => {
                    accumulate(&mut grads, *x, g.scale(*k))?;
                }
                Op::SumAxes { x, axes } => {
                    // Re-insert the summed axes as size 1, then let broadcast
                    // addition against zeros expand the gradient.
                    let xshape = self.nodes[*x].value.shape().to_vec();
                    let mut keep_shape = xshape.clone();
                    for &a in axes {
                        keep_shape[a] = 1;
                    }
                    let expanded = Tensor::zeros(&xshape)?.add(&g.reshape(&keep_shape)?)?;
                    accumulate(&mut grads, *x, expanded)?;
                }
                Op::Softmax { x, axis } => {
                    // dX = (dY - sum_axis(dY * Y)) * Y
                    let y = &self.nodes[idx].value;
                    let gy = g.mul(y)?;
                    let mut keep_shape = y.shape().to_vec();
                    keep_shape[*axis] = 1;
                    let s = gy.reduce_sum(&[*axis])?.reshape(&keep_shape)?;
                    let dx = g.add(&s.scale(-1.0))?.mul(y)?;
                    accumulate(&mut grads, *x, dx)?;
                }
                Op::Sigmoid { x } => {
                    let y = &self.nodes[idx].value;
                    let dx = g.mul(y)?.mul(&y.map(|v| 1.0 - v))?;
                    accumulate(&mut grads, *x, dx)?;
                }
                Op::Relu { x } => {
                    let mask = self.nodes[*x].value.map(|v| if v > 0.0 { 1.0 } else { 0.0 });
                    accumulate(&mut grads, *x, g.mul(&mask)?)?;
                }
                Op::LeakyRelu { x, slope } => {
                    let slope = *slope;
                    let mask = self.nodes[*x].value.map(|v| if v > 0.0 { 1.0 } else { slope });
                    accumulate(&mut grads, *x, g.mul(&mask)?)?;
                }
            }
        }

        Ok(Gradients {
            tape: self.id,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
            grads,
        })
    }
}

fn accumulate(grads: &mut [Option<Tensor<f64>>], node: usize, delta: Tensor<f64>) -> Result<()> {
    grads[node] = Some(match grads[node].take() {
        Some(g) => g.add(&delta)?,
        None => delta,
    });
    Ok(())
}

/// Sums a broadcast gradient back down to the operand's shape.
fn unbroadcast(g: &Tensor<f64>, target: &[usize]) -> Result<Tensor<f64>> {
    if g.shape() == target {
        return Ok(g.clone());
    }
    let extra = g.rank() - target.len();
    let axes: Vec<usize> = (0..g.rank())
        .filter(|&k| k < extra || (target[k - extra] == 1 && g.shape()[k] != 1))
        .collect();
    g.reduce_sum(&axes)?.reshape(target)
}

/// Gradient of a scalar output with respect to every tape variable.
#[derive(Debug)]
pub struct Gradients {
    tape: u64,
    shapes: Vec<Vec<usize>>,
    grads: Vec<Option<Tensor<f64>>>,
}

impl Gradients {
    /// Gradient for `v`; variables the output does not depend on get zeros.
    pub fn get(&self, v: Var) -> Result<Tensor<f64>> {
        if v.tape != self.tape {
            return Err(CaaError::TapeMismatch {
                var_tape: v.tape,
                tape: self.tape,
            });
        }
        match &self.grads[v.node] {
            Some(g) => Ok(g.clone()),
            None => Tensor::zeros(&self.shapes[v.node]),
        }
    }
}

/// Central-difference gradient probe: perturbs one coordinate of `x` at a
/// time by `±eps` and evaluates `(f(x+) - f(x-)) / (2 eps)`, entirely in
/// f64. `f` must be deterministic.
pub fn finite_diff(
    f: &mut dyn FnMut(&Tensor<f64>) -> Result<f64>,
    x: &Tensor<f64>,
    eps: f64,
) -> Result<Tensor<f64>> {
    let mut grad = Tensor::zeros(x.shape())?;
    for k in 0..x.len() {
        let mut hi = x.clone();
        hi.data_mut()[k] += eps;
        let mut lo = x.clone();
        lo.data_mut()[k] -= eps;
        grad.data_mut()[k] = (f(&hi)? - f(&lo)?) / (2.0 * eps);
    }
    Ok(grad)
}

/// Largest relative disagreement between an analytic and a numeric
/// gradient: `|a-b| / max(|a|, |b|, 1e-6)`. The floor keeps finite-
/// difference noise on true zeros from registering as disagreement.
pub fn grad_rel_err(analytic: &Tensor<f64>, numeric: &Tensor<f64>) -> Result<f64> {
    crate::tensor::max_rel_diff(analytic, numeric, 1e-6)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedRng;

    const EPS: f64 = 1e-5;
    const TOL: f64 = 1e-5;

    /// Checks the tape gradient of `build` with respect to `x` against
    /// central differences. `build` records a graph from one input variable
    /// and returns the (scalar) output variable.
    fn check_grad(
        x: &Tensor<f64>,
        build: &mut dyn FnMut(&mut Tape, Var) -> Result<Var>,
    ) -> Result<f64> {
        let mut tape = Tape::new();
        let xv = tape.input(x.clone());
        let out = build(&mut tape, xv)?;
        let analytic = tape.backward(out)?.get(xv)?;

        let numeric = finite_diff(
            &mut |probe| {
                let mut tape = Tape::new();
                let xv = tape.input(probe.clone());
                let out = build(&mut tape, xv)?;
                Ok(out_scalar(&tape, out))
            },
            x,
            EPS,
        )?;
        grad_rel_err(&analytic, &numeric)
    }

    fn out_scalar(tape: &Tape, v: Var) -> f64 {
        tape.value(v).unwrap().data()[0]
    }

    fn sample(shape: &[usize], name: &str) -> Tensor<f64> {
        SeedRng::new(99).uniform(name, shape, -1.5, 1.5).unwrap()
    }

    #[test]
    fn product_rule_against_constant() {
        let x = sample(&[2, 3], "x");
        let w = sample(&[2, 3], "w");
        let mut tape = Tape::new();
        let xv = tape.input(x.clone());
        let wv = tape.input(w.clone());
        let prod = tape.mul(xv, wv).unwrap();
        let out = tape.sum_all(prod).unwrap();
        let grads = tape.backward(out).unwrap();
        // d/dx sum(x*w) = w, exactly.
        assert!(crate::tensor::bitwise_eq(&grads.get(xv).unwrap(), &w));
        assert!(crate::tensor::bitwise_eq(&grads.get(wv).unwrap(), &x));
    }

    #[test]
    fn matmul_grads_match_finite_diff() {
        let a = sample(&[3, 4], "a");
        let b = sample(&[4, 2], "b");

        // Gradient w.r.t. the left operand.
        let err = check_grad(&a, &mut |tape, av| {
            let bv = tape.input(b.clone());
            let y = tape.matmul(av, bv)?;
            tape.sum_all(y)
        })
        .unwrap();
        assert!(err < TOL, "dA relative error {err}");

        // Gradient w.r.t. the right operand.
        let err = check_grad(&b, &mut |tape, bv| {
            let av = tape.input(a.clone());
            let y = tape.matmul(av, bv)?;
            tape.sum_all(y)
        })
        .unwrap();
        assert!(err < TOL, "dB relative error {err}");
    }

    #[test]
    fn nonlinearity_chain_matches_finite_diff() {
        let x = sample(&[3, 3], "x");
        let w = sample(&[3, 2], "w2");
        let err = check_grad(&x, &mut |tape, xv| {
            let wv = tape.input(w.clone());
            let h = tape.matmul(xv, wv)?;
            let h = tape.leaky_relu(h, 0.01)?;
            let h = tape.sigmoid(h)?;
            tape.sum_all(h)
        })
        .unwrap();
        assert!(err < TOL, "relative error {err}");
    }

    #[test]
    fn relu_grad_matches_finite_diff_away_from_zero() {
        let x = Tensor::from_vec(vec![4], vec![-2.0, -0.3, 0.4, 1.7]).unwrap();
        let err = check_grad(&x, &mut |tape, xv| {
            let y = tape.relu(xv)?;
            tape.sum_all(y)
        })
        .unwrap();
        assert!(err < TOL, "relative error {err}");
    }

    #[test]
    fn softmax_of_plain_sum_has_zero_gradient() {
        // sum(softmax(x)) is constant 1 per slice, so the gradient vanishes.
        let x = sample(&[2, 5], "x");
        let mut tape = Tape::new();
        let xv = tape.input(x);
        let s = tape.softmax(xv, 1).unwrap();
        let out = tape.sum_all(s).unwrap();
        let g = tape.backward(out).unwrap().get(xv).unwrap();
        assert!(g.data().iter().all(|&v| v.abs() < 1e-12), "grad {:?}", g.data());
    }

    #[test]
    fn weighted_softmax_matches_finite_diff() {
        let x = sample(&[2, 5], "x");
        let w = sample(&[2, 5], "w");
        let err = check_grad(&x, &mut |tape, xv| {
            let wv = tape.input(w.clone());
            let s = tape.softmax(xv, 1)?;
            let weighted = tape.mul(s, wv)?;
            tape.sum_all(weighted)
        })
        .unwrap();
        assert!(err < TOL, "relative error {err}");
    }

    #[test]
    fn broadcast_and_shape_ops_match_finite_diff() {
        let bias = sample(&[4], "bias");
        let x = sample(&[3, 4], "x");
        let err = check_grad(&bias, &mut |tape, bv| {
            let xv = tape.input(x.clone());
            let shifted = tape.add(xv, bv)?; // broadcast [3,4] + [4]
            let t = tape.transpose(shifted, &[1, 0])?;
            let r = tape.reshape(t, &[2, 6])?;
            let m = tape.mean(r, &[1])?;
            tape.sum_all(m)
        })
        .unwrap();
        assert!(err < TOL, "relative error {err}");
    }

    #[test]
    fn sum_axes_expands_gradient_evenly() {
        let x = sample(&[2, 3], "x");
        let mut tape = Tape::new();
        let xv = tape.input(x);
        let s = tape.sum(xv, &[1]).unwrap();
        let out = tape.sum_all(s).unwrap();
        let g = tape.backward(out).unwrap().get(xv).unwrap();
        assert!(g.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn backward_rejects_non_scalar_output() {
        let mut tape = Tape::new();
        let x = tape.input(sample(&[2, 2], "x"));
        match tape.backward(x) {
            Err(CaaError::NonScalarOutput { shape }) => assert_eq!(shape, vec![2, 2]),
            other => panic!("expected NonScalarOutput, got {other:?}"),
        }
    }

    #[test]
    fn foreign_variables_are_rejected() {
        let mut t1 = Tape::new();
        let mut t2 = Tape::new();
        let a = t1.input(Tensor::scalar(1.0));
        let b = t2.input(Tensor::scalar(2.0));
        assert!(matches!(t1.add(a, b), Err(CaaError::TapeMismatch { .. })));
        assert!(t1.value(b).is_err());
    }

    #[test]
    fn untouched_variables_get_zero_gradients() {
        let mut tape = Tape::new();
        let x = tape.input(Tensor::scalar(3.0));
        let unused = tape.input(sample(&[2, 2], "unused"));
        let out = tape.sum_all(x).unwrap();
        let grads = tape.backward(out).unwrap();
        let g = grads.get(unused).unwrap();
        assert_eq!(g.shape(), &[2, 2]);
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn finite_diff_recovers_quadratic_gradient() {
        let x = sample(&[5], "x");
        let g = finite_diff(
            &mut |t| Ok(t.data().iter().map(|v| v * v).sum()),
            &x,
            EPS,
        )
        .unwrap();
        let expected = x.scale(2.0);
        assert!(grad_rel_err(&expected, &g).unwrap() < 1e-8);
    }
}
