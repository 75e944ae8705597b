//! Deterministic text rendering for `caa flops`.

use caa_core::attention::AttnDims;
use caa_core::flops::{flops, AttnKind, GateConfig};

#[derive(Debug, Clone, Copy)]
pub struct FlopsConfig {
    pub dims: AttnDims,
    pub gate: GateConfig,
}

impl Default for FlopsConfig {
    /// The reference geometry: 33x33 sites, 512 channels, default gates.
    fn default() -> Self {
        Self {
            dims: AttnDims { h: 33, w: 33, c: 512, cq: 512, cv: 512 },
            gate: GateConfig::default(),
        }
    }
}

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 { a } else { gcd(b, a % b) }
}

pub fn render(cfg: &FlopsConfig) -> String {
    let d = cfg.dims;
    let mut out = format!(
        "cost model at H={} W={} C={} Cq={} Cv={} (gate stacks: {} hidden layers of width {})\n",
        d.h, d.w, d.c, d.cq, d.cv, cfg.gate.hidden_layers, cfg.gate.hidden_width,
    );
    out.push_str(&format!(
        "{:<18} {:>15} {:>15} {:>15} {:>12} {:>17} {:>17}\n",
        "variant", "projection", "map", "apply", "gate", "total MACs", "total FLOPs",
    ));
    for kind in [
        AttnKind::SelfAttention,
        AttnKind::Axial,
        AttnKind::ChannelizedAxial,
        AttnKind::ChannelizedSelf,
    ] {
        let r = flops(kind, d, cfg.gate);
        out.push_str(&format!(
            "{:<18} {:>15} {:>15} {:>15} {:>12} {:>17} {:>17}\n",
            kind.name(),
            r.projection_macs,
            r.map_macs,
            r.apply_macs,
            r.gate_macs,
            r.total_macs(),
            r.total_flops(),
        ));
    }

    // The core ratio is exact: separable and full schedules both scale map
    // and apply by their site count, so the quotient reduces to the site
    // ratio (H+W)/(HW) with no rounding.
    let hw = (d.h * d.w) as u128;
    let hpw = (d.h + d.w) as u128;
    let g = gcd(hpw, hw).max(1);
    out.push_str(&format!(
        "separable/full core-MAC ratio: (H+W)/(HW) = {}/{} = {:.9}\n",
        hpw / g,
        hw / g,
        hpw as f64 / hw as f64,
    ));
    let r = flops(AttnKind::ChannelizedAxial, d, cfg.gate);
    out.push_str(&format!(
        "channelized-axial gate overhead: {:.6e} of attention MACs\n",
        r.gate_fraction(),
    ));
    out
}

// ─────────────────────────── tests ───────────────────────────

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_line_reduces_the_fraction() {
        let cfg = FlopsConfig {
            dims: AttnDims { h: 4, w: 4, c: 1, cq: 1, cv: 1 },
            gate: GateConfig::default(),
        };
        let text = render(&cfg);
        assert!(text.contains("(H+W)/(HW) = 1/2 = 0.500000000"), "got:\n{text}");
    }

    #[test]
    fn every_variant_has_one_table_row() {
        let text = render(&FlopsConfig::default());
        for name in ["self", "axial", "channelized-axial", "channelized-self"] {
            let rows = text
                .lines()
                .filter(|l| {
                    let mut fields = l.split_whitespace();
                    // A data row is the variant name plus six integer counts.
                    fields.next() == Some(name)
                        && fields.clone().count() == 6
                        && fields.all(|f| f.parse::<u128>().is_ok())
                })
                .count();
            assert_eq!(rows, 1, "variant {name} in:\n{text}");
        }
    }
}
