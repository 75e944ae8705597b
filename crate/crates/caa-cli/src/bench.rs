//! Grouped-execution benchmark behind `caa bench`.
//!
//! Emits CSV: a versioned comment line, the column header, then one row per
//! (resolution, channel count, group count) combination. Wall times vary
//! run to run, but every other column is a pure function of the
//! configuration and seed.

use caa_core::attention::{AttnDims, AttnParams};
use caa_core::channelize::{Activation, GateParams, GateStage};
use caa_core::groupexec::{csv_header, measure};
use caa_core::tensor::Dtype;
use caa_core::{Result, Scalar, SeedRng, Tensor};

pub const CSV_VERSION: &str = "caa-bench-csv v1";

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub heights: Vec<usize>,
    pub widths: Vec<usize>,
    pub channels: Vec<usize>,
    pub groups: Vec<usize>,
    pub repeats: usize,
    pub seed: u64,
    pub dtype: Dtype,
    pub gate_depth: usize,
    pub gate_width: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            heights: vec![16, 24, 32],
            widths: vec![16, 24, 32],
            channels: vec![8],
            groups: vec![1, 2, 4, 8, 16],
            repeats: 5,
            seed: 42,
            dtype: Dtype::F32,
            gate_depth: 1,
            gate_width: 16,
        }
    }
}

/// Heights and widths pair positionally; a shorter width list is extended
/// with its last entry, and an empty one falls back to square inputs.
fn resolutions(cfg: &BenchConfig) -> Vec<(usize, usize)> {
    cfg.heights
        .iter()
        .enumerate()
        .map(|(i, &h)| (h, *cfg.widths.get(i).or(cfg.widths.last()).unwrap_or(&h)))
        .collect()
}

pub fn run(cfg: &BenchConfig) -> Result<String> {
    match cfg.dtype {
        Dtype::F32 => run_typed::<f32>(cfg),
        Dtype::F64 => run_typed::<f64>(cfg),
    }
}

fn run_typed<T: Scalar>(cfg: &BenchConfig) -> Result<String> {
    let mut out = format!(
        "# {CSV_VERSION} seed={} dtype={} repeats={}\n{}\n",
        cfg.seed,
        cfg.dtype.name(),
        cfg.repeats,
        csv_header(),
    );
    for (h, w) in resolutions(cfg) {
        for &c in &cfg.channels {
            let dims = AttnDims { h, w, c, cq: c, cv: c };
            let rng = SeedRng::new(cfg.seed);
            let tag = format!("bench_{h}x{w}x{c}");
            let x: Tensor<T> = rng.uniform(&format!("{tag}.x"), &[1, c, h, w], -1.0, 1.0)?;
            let p = AttnParams::seeded(dims, &rng)?;
            let gc = GateParams::seeded(
                GateStage::Column,
                c,
                cfg.gate_depth,
                cfg.gate_width,
                Activation::LeakyRelu(0.01),
                &rng,
                &format!("{tag}.gate_col"),
            )?;
            let gr = GateParams::seeded(
                GateStage::Row,
                c,
                cfg.gate_depth,
                cfg.gate_width,
                Activation::LeakyRelu(0.01),
                &rng,
                &format!("{tag}.gate_row"),
            )?;
            for &g in &cfg.groups {
                // An individual group count can be infeasible (G = 0);
                // record why and keep the sweep going.
                match measure(&x, &p, &gc, &gr, &[g], cfg.repeats) {
                    Ok(stats) => {
                        out.push_str(&stats[0].csv_row(&dims));
                        out.push('\n');
                    }
                    Err(e) => {
                        out.push_str(&format!("# skipped G={g} H={h} W={w} C={c}: {e}\n"));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Drops the wall-time column from a CSV body, leaving only the columns
/// that are deterministic for a fixed seed. Used by tests and callers that
/// want to diff two runs.
pub fn strip_wall_time(csv: &str) -> String {
    let mut out = String::new();
    for line in csv.lines() {
        if line.starts_with('#') || !line.contains(',') {
            out.push_str(line);
        } else {
            // wall_time_s is the second-to-last column.
            let fields: Vec<&str> = line.split(',').collect();
            let keep: Vec<&str> = fields
                .iter()
                .enumerate()
                .filter(|(i, _)| i + 2 != fields.len())
                .map(|(_, f)| *f)
                .collect();
            out.push_str(&keep.join(","));
        }
        out.push('\n');
    }
    out
}

// ─────────────────────────── tests ───────────────────────────

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolutions_pair_positionally_and_extend_the_last_width() {
        let cfg = BenchConfig {
            heights: vec![16, 24, 32],
            widths: vec![8],
            ..BenchConfig::default()
        };
        assert_eq!(resolutions(&cfg), vec![(16, 8), (24, 8), (32, 8)]);

        let cfg = BenchConfig {
            heights: vec![16, 24],
            widths: vec![10, 12, 99],
            ..BenchConfig::default()
        };
        assert_eq!(resolutions(&cfg), vec![(16, 10), (24, 12)]);
    }

    #[test]
    fn strip_wall_time_removes_only_the_second_to_last_column() {
        let csv = "# comment line\nG,H,W,C,padding,peak_elements,wall_time_s,repeats\n1,5,4,2,0,100,0.0123,3\n";
        let want = "# comment line\nG,H,W,C,padding,peak_elements,repeats\n1,5,4,2,0,100,3\n";
        assert_eq!(strip_wall_time(csv), want);
    }
}
