//! Fixture generation and replay.
//!
//! A fixture set is a directory of container tensors holding the inputs,
//! parameters, and loop-reference outputs for one geometry. Everything is
//! derived deterministically from one seed, so a set can be regenerated and
//! compared bit for bit against a committed copy to detect any numerical
//! drift in the kernels, the reference implementations, or the RNG.

use std::path::Path;

use caa_core::attention::{AttnDims, AttnParams};
use caa_core::channelize::{Activation, GateParams, GateStage};
use caa_core::container::{load_set, save_set, DynTensor};
use caa_core::oracle::{
    oracle_axial, oracle_caa, oracle_channelized_self, oracle_self_attention, OracleCaps,
};
use caa_core::{Result, SeedRng, Tensor};

/// Seed the committed fixture sets were generated with.
pub const DEFAULT_SEED: u64 = 42;

/// Geometries written by `caa fixtures`, as (H, W, C); Cq = min(C, 2) and
/// Cv = C.
pub const SIZES: [(usize, usize, usize); 3] = [(3, 3, 2), (4, 4, 3), (5, 4, 4)];

const GATE_DEPTH: usize = 2;
const GATE_WIDTH: usize = 6;

pub fn set_name(h: usize, w: usize, c: usize) -> String {
    format!("size_{h}x{w}x{c}")
}

pub struct FixtureSet {
    pub name: String,
    pub tensors: Vec<(String, DynTensor)>,
}

fn generate_one(h: usize, w: usize, c: usize, seed: u64, caps: &OracleCaps) -> Result<FixtureSet> {
    let name = set_name(h, w, c);
    let dims = AttnDims { h, w, c, cq: c.min(2), cv: c };
    let rng = SeedRng::new(seed);

    // Stream names carry the set name so no two sets share draws.
    let x: Tensor<f64> = rng.uniform(&format!("{name}.x"), &[c, h, w], -1.0, 1.0)?;
    let theta: Tensor<f64> = rng.scaled_uniform(&format!("{name}.theta"), c, dims.cq)?;
    let phi: Tensor<f64> = rng.scaled_uniform(&format!("{name}.phi"), c, dims.cq)?;
    let g: Tensor<f64> = rng.scaled_uniform(&format!("{name}.g"), c, dims.cv)?;
    let p = AttnParams::new(dims, theta.clone(), phi.clone(), g.clone())?;

    let gc = GateParams::seeded(
        GateStage::Column,
        dims.cv,
        GATE_DEPTH,
        GATE_WIDTH,
        Activation::LeakyRelu(0.01),
        &rng,
        &format!("{name}.gate_col"),
    )?;
    let gr = GateParams::seeded(
        GateStage::Row,
        dims.cv,
        GATE_DEPTH,
        GATE_WIDTH,
        Activation::Relu,
        &rng,
        &format!("{name}.gate_row"),
    )?;
    let gf = GateParams::seeded(
        GateStage::Full,
        dims.cv,
        GATE_DEPTH,
        GATE_WIDTH,
        Activation::LeakyRelu(0.01),
        &rng,
        &format!("{name}.gate_full"),
    )?;

    let mut tensors: Vec<(String, DynTensor)> = vec![
        ("x".into(), x.clone().into()),
        ("theta".into(), theta.into()),
        ("phi".into(), phi.into()),
        ("g".into(), g.into()),
    ];
    for (prefix, stack) in [("gate_col", &gc), ("gate_row", &gr), ("gate_full", &gf)] {
        for (k, layer) in stack.layers().iter().enumerate() {
            tensors.push((format!("{prefix}.layer{k}"), layer.clone().into()));
        }
    }
    tensors.push(("y_axial".into(), oracle_axial(&x, &p, caps)?.into()));
    tensors.push(("y_self".into(), oracle_self_attention(&x, &p, caps)?.into()));
    tensors.push(("y_caa".into(), oracle_caa(&x, &p, &gc, &gr, caps)?.into()));
    tensors.push((
        "y_channelized_self".into(),
        oracle_channelized_self(&x, &p, &gf, caps)?.into(),
    ));

    Ok(FixtureSet { name, tensors })
}

/// Builds every fixture set in memory.
pub fn generate(seed: u64, caps: &OracleCaps) -> Result<Vec<FixtureSet>> {
    SIZES
        .iter()
        .map(|&(h, w, c)| generate_one(h, w, c, seed, caps))
        .collect()
}

/// Writes every fixture set under `dir`, one subdirectory per set, and
/// returns the set names in the order written.
pub fn write(dir: &Path, seed: u64, caps: &OracleCaps) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for set in generate(seed, caps)? {
        save_set(&dir.join(&set.name), &set.tensors)?;
        names.push(set.name);
    }
    Ok(names)
}

/// Regenerates every set from `seed` and compares it bit for bit against
/// the copy stored under `dir`. A missing directory, a missing or extra
/// tensor, and any differing byte are all failures.
pub fn replay(dir: &Path, seed: u64, caps: &OracleCaps) -> std::result::Result<(), String> {
    let fresh = generate(seed, caps).map_err(|e| format!("regeneration: {e}"))?;
    for set in fresh {
        let stored = load_set(&dir.join(&set.name))
            .map_err(|e| format!("{}: {e}", set.name))?;
        if stored.len() != set.tensors.len() {
            return Err(format!(
                "{}: stored set has {} tensors, regenerated set has {}",
                set.name,
                stored.len(),
                set.tensors.len()
            ));
        }
        for ((want_name, want), (got_name, got)) in set.tensors.iter().zip(&stored) {
            if want_name != got_name {
                return Err(format!(
                    "{}: manifest order differs: expected {want_name:?}, found {got_name:?}",
                    set.name
                ));
            }
            if !want.bitwise_eq(got) {
                return Err(format!("{}: tensor {want_name:?} differs bitwise", set.name));
            }
        }
    }
    Ok(())
}

// ─────────────────────────── tests ───────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use caa_core::container::find;

    #[test]
    fn sets_carry_inputs_parameters_gates_and_all_four_outputs() {
        let sets = generate(7, &OracleCaps::default()).unwrap();
        assert_eq!(sets.len(), SIZES.len());
        let set = &sets[0];
        assert_eq!(set.name, "size_3x3x2");
        for name in ["x", "theta", "phi", "g", "y_axial", "y_self", "y_caa", "y_channelized_self"] {
            find(&set.tensors, name).unwrap();
        }
        for prefix in ["gate_col", "gate_row", "gate_full"] {
            for k in 0..=GATE_DEPTH {
                find(&set.tensors, &format!("{prefix}.layer{k}")).unwrap();
            }
        }
        assert_eq!(find(&set.tensors, "y_caa").unwrap().shape(), &[2, 3, 3]);
    }

    #[test]
    fn distinct_sets_use_distinct_streams() {
        let sets = generate(7, &OracleCaps::default()).unwrap();
        let a = find(&sets[1].tensors, "x").unwrap().to_f64();
        let b = find(&sets[2].tensors, "x").unwrap().to_f64();
        // Same leading element count would alias if the streams matched.
        assert_ne!(a.data()[0].to_bits(), b.data()[0].to_bits());
    }
}
