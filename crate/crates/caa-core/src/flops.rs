//! Analytic operation counts for the attention variants.
//!
//! The model counts multiply-accumulate operations (MACs) and converts at
//! 1 MAC = 2 FLOPs. Counts are split into components so callers can compare
//! the parts that differ between variants:
//!
//! * `projection` — the 1x1 projections onto the query/value channels. The
//!   axial variants carry two query projections (one per pass), the full
//!   variants one.
//! * `map` — attention-logit construction: `(HW)^2 * Cq` for full pairwise
//!   attention, `HW * (H + W) * Cq` for the separable column-then-row
//!   schedule (each output position attends H column entries and W row
//!   entries).
//! * `apply` — weighted value aggregation: same shapes with `Cv` in place
//!   of `Cq`.
//! * `gate` — channel-gate evaluation, modeled as the weight matrices of
//!   each attached gate stack evaluated once per forward pass (the gates
//!   act on pooled channel statistics). The channelized-axial variant
//!   carries two stacks, the channelized-self variant one.
//!
//! Under this model the separable/full core ratio is exactly
//! `(H + W) / (H * W)` for any `Cq = Cv`, and the default gate stack
//! (5 hidden layers of width 128) adds less than 0.1% on top of the
//! attention cost at the reference geometry `H = W = 33`, `C = 512`.

use crate::attention::AttnDims;

// ───────────────────────── configuration ─────────────────────────

/// Attention variant being costed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttnKind {
    /// Full pairwise self-attention.
    SelfAttention,
    /// Separable column-then-row attention, ungated.
    Axial,
    /// Separable attention with column and row channel gates.
    ChannelizedAxial,
    /// Full pairwise attention with a single channel gate.
    ChannelizedSelf,
}

impl AttnKind {
    /// Number of gate stacks the variant carries.
    pub fn gate_stacks(self) -> u128 {
        match self {
            AttnKind::SelfAttention | AttnKind::Axial => 0,
            AttnKind::ChannelizedAxial => 2,
            AttnKind::ChannelizedSelf => 1,
        }
    }

    /// Number of query projections the variant carries.
    fn query_projections(self) -> u128 {
        match self {
            AttnKind::SelfAttention | AttnKind::ChannelizedSelf => 1,
            AttnKind::Axial | AttnKind::ChannelizedAxial => 2,
        }
    }

    fn separable(self) -> bool {
        matches!(self, AttnKind::Axial | AttnKind::ChannelizedAxial)
    }

    pub fn name(self) -> &'static str {
        match self {
            AttnKind::SelfAttention => "self",
            AttnKind::Axial => "axial",
            AttnKind::ChannelizedAxial => "channelized-axial",
            AttnKind::ChannelizedSelf => "channelized-self",
        }
    }
}

/// Gate-stack geometry used for the gate component of the count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GateConfig {
    /// Number of hidden layers (all of `hidden_width`).
    pub hidden_layers: usize,
    /// Uniform hidden width.
    pub hidden_width: usize,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            hidden_layers: 5,
            hidden_width: 128,
        }
    }
}

impl GateConfig {
    /// MACs for one evaluation of one gate stack on `cv` channels:
    /// `[cv,w]`, `hidden_layers - 1` times `[w,w]`, `[w,cv]`.
    pub fn stack_macs(&self, cv: usize) -> u128 {
        let (w, cv) = (self.hidden_width as u128, cv as u128);
        let l = self.hidden_layers as u128;
        cv * w + (l - 1) * w * w + w * cv
    }
}

// ───────────────────────── report ─────────────────────────

/// Component-wise MAC counts for one attention variant at one geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlopReport {
    pub kind: AttnKind,
    pub dims: AttnDims,
    pub projection_macs: u128,
    pub map_macs: u128,
    pub apply_macs: u128,
    pub gate_macs: u128,
}

impl FlopReport {
    /// Attention core: logit construction plus value aggregation.
    pub fn core_macs(&self) -> u128 {
        self.map_macs + self.apply_macs
    }

    /// Full attention cost: projections plus core, without gates.
    pub fn attention_macs(&self) -> u128 {
        self.projection_macs + self.core_macs()
    }

    pub fn total_macs(&self) -> u128 {
        self.attention_macs() + self.gate_macs
    }

    /// FLOPs at 1 MAC = 2 FLOPs.
    pub fn total_flops(&self) -> u128 {
        2 * self.total_macs()
    }

    /// Gate cost as a fraction of the attention cost.
    pub fn gate_fraction(&self) -> f64 {
        self.gate_macs as f64 / self.attention_macs() as f64
    }
}

/// Build the analytic count for one variant.
pub fn flops(kind: AttnKind, dims: AttnDims, gate: GateConfig) -> FlopReport {
    let (h, w) = (dims.h as u128, dims.w as u128);
    let (c, cq, cv) = (dims.c as u128, dims.cq as u128, dims.cv as u128);
    let hw = h * w;

    let projection_macs = hw * c * (kind.query_projections() * cq + cv);
    let sites = if kind.separable() { hw * (h + w) } else { hw * hw };
    let map_macs = sites * cq;
    let apply_macs = sites * cv;
    let gate_macs = kind.gate_stacks() * gate.stack_macs(dims.cv);

    FlopReport {
        kind,
        dims,
        projection_macs,
        map_macs,
        apply_macs,
        gate_macs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims(h: usize, w: usize, c: usize, cq: usize, cv: usize) -> AttnDims {
        AttnDims { h, w, c, cq, cv }
    }

    #[test]
    fn separable_to_full_core_ratio_is_exact() {
        // Integer cross-multiplication: core_axial * HW == core_self * (H+W)
        // whenever Cq = Cv, i.e. the ratio is (H+W)/(HW) with no rounding.
        for (h, w) in [(2usize, 3usize), (5, 5), (33, 33), (7, 64), (128, 96)] {
            for cch in [1usize, 3, 512] {
                let d = dims(h, w, cch, cch, cch);
                let a = flops(AttnKind::Axial, d, GateConfig::default());
                let s = flops(AttnKind::SelfAttention, d, GateConfig::default());
                assert_eq!(
                    a.core_macs() * (h as u128 * w as u128),
                    s.core_macs() * (h as u128 + w as u128),
                );
            }
        }
    }

    #[test]
    fn four_by_four_single_channel_examples() {
        let d = dims(4, 4, 1, 1, 1);
        let s = flops(AttnKind::SelfAttention, d, GateConfig::default());
        let a = flops(AttnKind::Axial, d, GateConfig::default());
        assert_eq!(s.core_macs(), 512);
        assert_eq!(a.core_macs(), 256);
    }

    #[test]
    fn gate_overhead_is_small_at_reference_geometry() {
        let d = dims(33, 33, 512, 512, 512);
        let r = flops(AttnKind::ChannelizedAxial, d, GateConfig::default());
        assert_eq!(r.gate_macs, 2 * (512 * 128 + 4 * 128 * 128 + 128 * 512));
        assert!(r.gate_macs > 0);
        assert!(r.gate_fraction() < 1e-3, "fraction {}", r.gate_fraction());
    }

    #[test]
    fn component_bookkeeping() {
        let d = dims(3, 4, 5, 2, 6);
        let g = GateConfig {
            hidden_layers: 2,
            hidden_width: 7,
        };
        let r = flops(AttnKind::ChannelizedAxial, d, g);
        // Two query projections plus a value projection.
        assert_eq!(r.projection_macs, 12 * 5 * (2 * 2 + 6));
        assert_eq!(r.map_macs, 12 * 7 * 2);
        assert_eq!(r.apply_macs, 12 * 7 * 6);
        assert_eq!(r.gate_macs, 2 * (6 * 7 + 7 * 7 + 7 * 6));
        assert_eq!(r.total_macs(), r.projection_macs + r.map_macs + r.apply_macs + r.gate_macs);
        assert_eq!(r.total_flops(), 2 * r.total_macs());

        let rs = flops(AttnKind::ChannelizedSelf, d, g);
        assert_eq!(rs.projection_macs, 12 * 5 * (2 + 6));
        assert_eq!(rs.map_macs, 12 * 12 * 2);
        assert_eq!(rs.gate_macs, 6 * 7 + 7 * 7 + 7 * 6);

        let plain = flops(AttnKind::SelfAttention, d, g);
        assert_eq!(plain.gate_macs, 0);
        assert_eq!(plain.total_macs(), plain.attention_macs());
    }
}
