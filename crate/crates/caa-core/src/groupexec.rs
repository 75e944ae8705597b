//! Grouped execution of channelized axial attention under a memory budget.
//!
//! The channelized forward materializes a `[H, W, W, Cv]` column-pass buffer
//! — the dominant intermediate. This module splits the output-row axis into
//! `G` groups and streams the same arithmetic `rows_per_group` rows at a
//! time, shrinking that buffer by a factor of `G`. Per-row work reuses the
//! exact helpers of the ungated/gated kernels and cross-group state (the
//! row-gate statistic and the pre-gate output accumulator) is combined in
//! ascending row order, so the output is **bit-identical for every group
//! count**, in both element types.
//!
//! Two kinds of state exist while streaming:
//!
//! * per-group buffers, all proportional to `rows_per_group`: the dominant
//!   `rows_per_group * W * W * Cv` slice, the column-gate statistic and
//!   gate values (`rows_per_group * W * Cv` each), and the column-gate
//!   evaluation scratch (`2 * rows_per_group * W * column_gate_width`);
//! * persistent accumulators, independent of `G`: the pre-gate output
//!   (`Cv * H * W`), the row-gate statistic (`W * Cv`), and — after the
//!   groups finish — the row-gate values and their scratch.
//!
//! Every one of those allocations is registered with a tracker, and
//! [`predicted_peak`] reproduces the tracker's peak exactly; tests assert
//! equality, not approximation. The attention maps and channel projections
//! are inputs to the grouped stage — their size is fixed by the geometry
//! and independent of `G` — and are not part of the tracked set.
//!
//! Rows appended to make `H` divisible by `G` are never computed: padding
//! exists only in the plan arithmetic and buffer shapes, so padded rows
//! cannot leak into any softmax or gate statistic.

use std::time::Instant;

use crate::attention::{
    attention_maps, combine_beta_row, fill_alpha_sum_row, project, reduce_row_into_y, AttnDims,
    AttnParams,
};
use crate::channelize::{
    accumulate_row_stat, column_stat_row, gate_rows_into, scale_row_by_gate, GateParams, GateStage,
};
use crate::error::{CaaError, Result};
use crate::tensor::{Dtype, Scalar, Tensor};

// ───────────────────────── planning ─────────────────────────

/// Widest layer of each gate stack, which sizes the evaluation scratch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GateWidths {
    pub column: usize,
    pub row: usize,
}

impl GateWidths {
    pub fn of<T: Scalar>(column: &GateParams<T>, row: &GateParams<T>) -> Self {
        Self {
            column: column.max_width(),
            row: row.max_width(),
        }
    }
}

/// What the planner should solve for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanTarget {
    /// Fixed group count.
    Groups(usize),
    /// Smallest group count whose predicted peak fits in `bytes`.
    MemoryBudget { bytes: usize, dtype: Dtype },
}

/// A grouping of the output-row axis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupPlan {
    /// Group count.
    pub g: usize,
    /// Original (unpadded) row count.
    pub h: usize,
    /// Rows appended so `h + padding` divides evenly into `g` groups.
    pub padding: usize,
    /// `(h + padding) / g`.
    pub rows_per_group: usize,
    /// Half-open row intervals over the padded axis, one per group.
    pub ranges: Vec<(usize, usize)>,
    /// Exact peak intermediate element count of the executor under this plan.
    pub predicted_peak_elements: usize,
}

/// Elements of the dominant per-group buffer.
pub fn dominant_elements(dims: &AttnDims, rows_per_group: usize) -> usize {
    rows_per_group * dims.w * dims.w * dims.cv
}

/// Exact peak intermediate element count for one group size: persistent
/// accumulators plus the larger of the group phase (dominant buffer, column
/// statistics and gates, column scratch) and the row-gate phase (row gates
/// and scratch, after all group buffers are freed).
pub fn predicted_peak(dims: &AttnDims, widths: &GateWidths, rows_per_group: usize) -> usize {
    let AttnDims { h, w, cv, .. } = *dims;
    let persistent = cv * h * w + w * cv;
    let group_phase = dominant_elements(dims, rows_per_group)
        + 2 * rows_per_group * w * cv
        + 2 * rows_per_group * w * widths.column;
    let row_gate_phase = w * cv + 2 * w * widths.row;
    persistent + group_phase.max(row_gate_phase)
}

/// Build a plan for a fixed group count or a memory budget.
pub fn plan(dims: &AttnDims, widths: &GateWidths, target: PlanTarget) -> Result<GroupPlan> {
    if dims.h == 0 {
        return Err(CaaError::ZeroHeight);
    }
    match target {
        PlanTarget::Groups(g) => {
            if g == 0 {
                return Err(CaaError::ZeroGroups);
            }
            let h = dims.h;
            let padding = (g - h % g) % g;
            let rows_per_group = (h + padding) / g;
            let ranges = (0..g)
                .map(|k| (k * rows_per_group, (k + 1) * rows_per_group))
                .collect();
            Ok(GroupPlan {
                g,
                h,
                padding,
                rows_per_group,
                ranges,
                predicted_peak_elements: predicted_peak(dims, widths, rows_per_group),
            })
        }
        PlanTarget::MemoryBudget { bytes, dtype } => {
            for g in 1..=dims.h {
                let candidate = plan(dims, widths, PlanTarget::Groups(g))?;
                if candidate.predicted_peak_elements * dtype.size_bytes() <= bytes {
                    return Ok(candidate);
                }
            }
            let tightest = plan(dims, widths, PlanTarget::Groups(dims.h))?;
            Err(CaaError::InfeasibleBudget {
                budget_bytes: bytes,
                max_groups: dims.h,
                needed_bytes: tightest.predicted_peak_elements * dtype.size_bytes(),
            })
        }
    }
}

// ───────────────────────── instrumentation ─────────────────────────

/// Running count of live intermediate elements.
#[derive(Debug, Default)]
struct MemTracker {
    current: usize,
    peak: usize,
}

impl MemTracker {
    fn alloc(&mut self, elements: usize) {
        self.current += elements;
        self.peak = self.peak.max(self.current);
    }

    fn free(&mut self, elements: usize) {
        debug_assert!(elements <= self.current);
        self.current -= elements;
    }
}

/// One measured execution.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecStats {
    pub g: usize,
    pub padding: usize,
    /// Peak live intermediate elements, from exact instrumentation.
    pub peak_intermediate_elements: usize,
    /// Minimum wall time over the repeats, in seconds.
    pub wall_time_s: f64,
    /// Groups that contained at least one real (non-padding) row.
    pub groups_executed: usize,
    pub repeats: usize,
}

/// Header for [`ExecStats::csv_row`].
pub fn csv_header() -> &'static str {
    "G,H,W,C,padding,peak_elements,wall_time_s,repeats"
}

impl ExecStats {
    pub fn csv_row(&self, dims: &AttnDims) -> String {
        format!(
            "{},{},{},{},{},{},{:.9},{}",
            self.g,
            dims.h,
            dims.w,
            dims.c,
            self.padding,
            self.peak_intermediate_elements,
            self.wall_time_s,
            self.repeats,
        )
    }
}

// ───────────────────────── execution ─────────────────────────

fn check_gates<T: Scalar>(
    dims: &AttnDims,
    gate_col: &GateParams<T>,
    gate_row: &GateParams<T>,
) -> Result<()> {
    for (gate, stage) in [(gate_col, GateStage::Column), (gate_row, GateStage::Row)] {
        if gate.stage() != stage {
            return Err(CaaError::StageMismatch {
                expected: stage.to_string(),
                got: gate.stage().to_string(),
            });
        }
        if gate.cv() != dims.cv {
            return Err(CaaError::DimMismatch {
                what: "gate channel count",
                expected: dims.cv,
                got: gate.cv(),
            });
        }
    }
    Ok(())
}

/// Grouped channelized axial attention over a batch. `x` is `[N, C, H, W]`;
/// the result is `[N, Cv, H, W]` and is bit-identical for every valid plan
/// over the same geometry.
pub fn grouped_caa<T: Scalar>(
    x: &Tensor<T>,
    p: &AttnParams<T>,
    gate_col: &GateParams<T>,
    gate_row: &GateParams<T>,
    plan: &GroupPlan,
) -> Result<Tensor<T>> {
    Ok(grouped_caa_traced(x, p, gate_col, gate_row, plan)?.0)
}

/// [`grouped_caa`] plus the measured peak intermediate element count.
pub fn grouped_caa_traced<T: Scalar>(
    x: &Tensor<T>,
    p: &AttnParams<T>,
    gate_col: &GateParams<T>,
    gate_row: &GateParams<T>,
    plan: &GroupPlan,
) -> Result<(Tensor<T>, usize)> {
    let AttnDims { h, w, c, cv, .. } = p.dims;
    if x.rank() != 4 || x.shape()[1] != c || x.shape()[2] != h || x.shape()[3] != w {
        return Err(CaaError::ShapeMismatch {
            what: "grouped attention input",
            expected: vec![x.shape().first().copied().unwrap_or(1), c, h, w],
            got: x.shape().to_vec(),
        });
    }
    if plan.h != h {
        return Err(CaaError::PlanMismatch {
            plan_h: plan.h,
            input_h: h,
        });
    }
    check_gates(&p.dims, gate_col, gate_row)?;

    let n = x.shape()[0];
    let hw = h * w;
    let item_len = c * hw;
    let rows = plan.rows_per_group;
    let row_len = w * w * cv;
    let col_width = gate_col.max_width();
    let row_width = gate_row.max_width();

    let mut out = Tensor::zeros(&[n, cv, h, w])?;
    let mut tracker = MemTracker::default();

    for item in 0..n {
        let xi = Tensor::from_vec(
            vec![c, h, w],
            x.data()[item * item_len..(item + 1) * item_len].to_vec(),
        )?;
        // Inputs to the grouped stage: projections and attention maps are
        // geometry-sized regardless of G, so they sit outside the tracker.
        let maps = attention_maps(&xi, p)?;
        let v = project(&xi, &p.g)?;

        tracker.alloc(cv * hw);
        let mut ysum = Tensor::zeros(&[cv, h, w])?;
        tracker.alloc(w * cv);
        let mut stat_acc = vec![T::zero(); w * cv];

        for &(start, end) in &plan.ranges {
            let real_end = end.min(h);
            if start >= real_end {
                continue;
            }
            let real_rows = real_end - start;

            tracker.alloc(rows * row_len);
            let mut alpha = vec![T::zero(); rows * row_len];
            for i in start..real_end {
                let row = &mut alpha[(i - start) * row_len..(i - start + 1) * row_len];
                fill_alpha_sum_row(&maps.a_col, &v, i, row);
            }

            tracker.alloc(rows * w * cv);
            let mut stat = vec![T::zero(); rows * w * cv];
            for i in start..real_end {
                column_stat_row(
                    &alpha[(i - start) * row_len..(i - start + 1) * row_len],
                    w,
                    cv,
                    hw,
                    &mut stat[(i - start) * w * cv..(i - start + 1) * w * cv],
                );
            }

            tracker.alloc(rows * w * cv);
            let mut gates = vec![T::zero(); rows * w * cv];
            tracker.alloc(2 * rows * w * col_width);
            {
                let mut scratch_a = vec![T::zero(); rows * w * col_width];
                let mut scratch_b = vec![T::zero(); rows * w * col_width];
                gate_rows_into(
                    gate_col,
                    &stat[..real_rows * w * cv],
                    real_rows * w,
                    &mut scratch_a,
                    &mut scratch_b,
                    &mut gates[..real_rows * w * cv],
                );
            }
            tracker.free(2 * rows * w * col_width);

            for i in start..real_end {
                let row = &mut alpha[(i - start) * row_len..(i - start + 1) * row_len];
                scale_row_by_gate(row, &gates[(i - start) * w * cv..(i - start + 1) * w * cv], w, cv);
            }
            drop(gates);
            drop(stat);
            tracker.free(2 * rows * w * cv);

            for i in start..real_end {
                let row = &mut alpha[(i - start) * row_len..(i - start + 1) * row_len];
                combine_beta_row(&maps.a_row, i, row);
                accumulate_row_stat(row, w, cv, &mut stat_acc);
                reduce_row_into_y(row, None, i, &mut ysum);
            }
            drop(alpha);
            tracker.free(rows * row_len);
        }

        let denom = T::from_f64(hw as f64);
        for s in stat_acc.iter_mut() {
            *s = *s / denom;
        }

        tracker.alloc(w * cv);
        let mut row_gates = vec![T::zero(); w * cv];
        tracker.alloc(2 * w * row_width);
        {
            let mut scratch_a = vec![T::zero(); w * row_width];
            let mut scratch_b = vec![T::zero(); w * row_width];
            gate_rows_into(gate_row, &stat_acc, w, &mut scratch_a, &mut scratch_b, &mut row_gates);
        }
        tracker.free(2 * w * row_width);

        {
            let yd = ysum.data_mut();
            for ch in 0..cv {
                for i in 0..h {
                    for j in 0..w {
                        let idx = (ch * h + i) * w + j;
                        yd[idx] = row_gates[j * cv + ch] * yd[idx];
                    }
                }
            }
        }
        drop(row_gates);
        tracker.free(w * cv);
        drop(stat_acc);
        tracker.free(w * cv);

        out.data_mut()[item * cv * hw..(item + 1) * cv * hw].copy_from_slice(ysum.data());
        drop(ysum);
        tracker.free(cv * hw);
    }

    Ok((out, tracker.peak))
}

/// Run the executor once per group count, timing it `repeats` times and
/// keeping the fastest run. The instrumented peak is identical across
/// repeats, so it is taken from the first.
pub fn measure<T: Scalar>(
    x: &Tensor<T>,
    p: &AttnParams<T>,
    gate_col: &GateParams<T>,
    gate_row: &GateParams<T>,
    group_list: &[usize],
    repeats: usize,
) -> Result<Vec<ExecStats>> {
    let widths = GateWidths::of(gate_col, gate_row);
    let repeats = repeats.max(1);
    let mut all = Vec::with_capacity(group_list.len());
    for &g in group_list {
        let plan = plan(&p.dims, &widths, PlanTarget::Groups(g))?;
        let mut peak = 0;
        let mut best = f64::INFINITY;
        for r in 0..repeats {
            let start = Instant::now();
            let (_, run_peak) = grouped_caa_traced(x, p, gate_col, gate_row, &plan)?;
            best = best.min(start.elapsed().as_secs_f64());
            if r == 0 {
                peak = run_peak;
            }
        }
        all.push(ExecStats {
            g,
            padding: plan.padding,
            peak_intermediate_elements: peak,
            wall_time_s: best,
            groups_executed: plan.ranges.iter().filter(|&&(start, _)| start < p.dims.h).count(),
            repeats,
        });
    }
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::axial_attention;
    use crate::channelize::{caa_forward, Activation};
    use crate::rng::SeedRng;
    use crate::tensor::{bitwise_eq, max_rel_diff};

    fn dims(h: usize, w: usize, c: usize, cq: usize, cv: usize) -> AttnDims {
        AttnDims { h, w, c, cq, cv }
    }

    fn setup<T: Scalar>(
        d: AttnDims,
        seed: u64,
        n: usize,
    ) -> (Tensor<T>, AttnParams<T>, GateParams<T>, GateParams<T>) {
        let rng = SeedRng::new(seed);
        let x = rng.uniform("x", &[n, d.c, d.h, d.w], -1.0, 1.0).unwrap();
        let p = AttnParams::seeded(d, &rng).unwrap();
        let gc = GateParams::seeded(
            GateStage::Column, d.cv, 2, 6, Activation::LeakyRelu(0.01), &rng, "gate_col",
        )
        .unwrap();
        let gr = GateParams::seeded(
            GateStage::Row, d.cv, 2, 6, Activation::LeakyRelu(0.01), &rng, "gate_row",
        )
        .unwrap();
        (x, p, gc, gr)
    }

    #[test]
    fn plan_arithmetic() {
        let widths = GateWidths { column: 4, row: 4 };
        let p = plan(&dims(32, 4, 2, 2, 2), &widths, PlanTarget::Groups(4)).unwrap();
        assert_eq!((p.padding, p.rows_per_group), (0, 8));
        let p = plan(&dims(33, 4, 2, 2, 2), &widths, PlanTarget::Groups(4)).unwrap();
        assert_eq!((p.padding, p.rows_per_group), (3, 9));
        assert_eq!(p.ranges.last(), Some(&(27, 36)));
        let p = plan(&dims(5, 4, 2, 2, 2), &widths, PlanTarget::Groups(1)).unwrap();
        assert_eq!((p.padding, p.rows_per_group), (0, 5));
        assert_eq!(p.ranges, vec![(0, 5)]);
        assert!(matches!(
            plan(&dims(5, 4, 2, 2, 2), &widths, PlanTarget::Groups(0)),
            Err(CaaError::ZeroGroups)
        ));
        assert!(matches!(
            plan(&dims(0, 4, 2, 2, 2), &widths, PlanTarget::Groups(1)),
            Err(CaaError::ZeroHeight)
        ));
    }

    #[test]
    fn plans_partition_the_padded_axis() {
        let widths = GateWidths { column: 3, row: 3 };
        for h in 1..12 {
            for g in 1..=h + 3 {
                let d = dims(h, 3, 2, 2, 2);
                let p = plan(&d, &widths, PlanTarget::Groups(g)).unwrap();
                assert_eq!(p.ranges.len(), g);
                assert_eq!((h + p.padding) % g, 0);
                assert!(p.padding < g.max(1));
                let mut cursor = 0;
                for &(s, e) in &p.ranges {
                    assert_eq!(s, cursor);
                    assert_eq!(e - s, p.rows_per_group);
                    cursor = e;
                }
                assert_eq!(cursor, h + p.padding);
            }
        }
    }

    #[test]
    fn budget_planner_finds_the_smallest_feasible_group_count() {
        let d = dims(6, 4, 3, 2, 3);
        let widths = GateWidths { column: 5, row: 5 };
        let per3 = predicted_peak(&d, &widths, plan(&d, &widths, PlanTarget::Groups(3)).unwrap().rows_per_group);
        let chosen = plan(
            &d,
            &widths,
            PlanTarget::MemoryBudget { bytes: per3 * 8, dtype: Dtype::F64 },
        )
        .unwrap();
        assert_eq!(chosen.g, 3);
        assert!(chosen.predicted_peak_elements * 8 <= per3 * 8);

        match plan(&d, &widths, PlanTarget::MemoryBudget { bytes: 1, dtype: Dtype::F32 }) {
            Err(CaaError::InfeasibleBudget { budget_bytes, max_groups, needed_bytes }) => {
                assert_eq!(budget_bytes, 1);
                assert_eq!(max_groups, 6);
                assert!(needed_bytes > 1);
            }
            other => panic!("expected InfeasibleBudget, got {other:?}"),
        }
    }

    #[test]
    fn grouped_output_is_bitwise_invariant_in_g() {
        let d = dims(5, 4, 3, 2, 3);
        let (x, p, gc, gr) = setup::<f64>(d, 7, 2);
        let widths = GateWidths::of(&gc, &gr);
        let base = grouped_caa(&x, &p, &gc, &gr, &plan(&d, &widths, PlanTarget::Groups(1)).unwrap()).unwrap();
        for g in [2, 3, 4, 5, 7] {
            let y = grouped_caa(&x, &p, &gc, &gr, &plan(&d, &widths, PlanTarget::Groups(g)).unwrap()).unwrap();
            assert!(bitwise_eq(&y, &base), "f64 mismatch at G={g}");
        }

        let (x, p, gc, gr) = setup::<f32>(d, 7, 2);
        let base = grouped_caa(&x, &p, &gc, &gr, &plan(&d, &widths, PlanTarget::Groups(1)).unwrap()).unwrap();
        for g in [2, 3, 4, 5, 7] {
            let y = grouped_caa(&x, &p, &gc, &gr, &plan(&d, &widths, PlanTarget::Groups(g)).unwrap()).unwrap();
            assert!(bitwise_eq(&y, &base), "f32 mismatch at G={g}");
        }
    }

    #[test]
    fn grouped_matches_the_single_item_kernel() {
        let d = dims(4, 5, 3, 2, 3);
        let (x, p, gc, gr) = setup::<f64>(d, 8, 3);
        let widths = GateWidths::of(&gc, &gr);
        let y = grouped_caa(&x, &p, &gc, &gr, &plan(&d, &widths, PlanTarget::Groups(3)).unwrap()).unwrap();
        let item_in = d.c * d.h * d.w;
        let item_out = d.cv * d.h * d.w;
        for item in 0..3 {
            let xi = Tensor::from_vec(
                vec![d.c, d.h, d.w],
                x.data()[item * item_in..(item + 1) * item_in].to_vec(),
            )
            .unwrap();
            let yi = caa_forward(&xi, &p, &gc, &gr).unwrap();
            let got = Tensor::from_vec(
                vec![d.cv, d.h, d.w],
                y.data()[item * item_out..(item + 1) * item_out].to_vec(),
            )
            .unwrap();
            let rel = max_rel_diff(&got, &yi, 1e-12).unwrap();
            assert!(rel < 1e-12, "item {item}: rel {rel}");
        }
    }

    #[test]
    fn bypass_gates_reduce_to_ungated_axial_attention_bitwise() {
        let d = dims(4, 4, 2, 2, 2);
        let rng = SeedRng::new(9);
        let x: Tensor<f64> = rng.uniform("x", &[1, 2, 4, 4], -1.0, 1.0).unwrap();
        let p = AttnParams::seeded(d, &rng).unwrap();
        let gc = GateParams::bypass(GateStage::Column, 2);
        let gr = GateParams::bypass(GateStage::Row, 2);
        let widths = GateWidths::of(&gc, &gr);
        let y = grouped_caa(&x, &p, &gc, &gr, &plan(&d, &widths, PlanTarget::Groups(2)).unwrap()).unwrap();
        let xi = Tensor::from_vec(vec![2, 4, 4], x.data().to_vec()).unwrap();
        let axial = axial_attention(&xi, &p).unwrap();
        let got = Tensor::from_vec(vec![2, 4, 4], y.data().to_vec()).unwrap();
        assert!(bitwise_eq(&got, &axial));
    }

    #[test]
    fn measured_peak_equals_the_prediction_exactly() {
        let d = dims(6, 5, 3, 2, 4);
        let (x, p, gc, gr) = setup::<f64>(d, 10, 1);
        let widths = GateWidths::of(&gc, &gr);
        let mut last = usize::MAX;
        for g in [1, 2, 3, 4, 6] {
            let pl = plan(&d, &widths, PlanTarget::Groups(g)).unwrap();
            let (_, peak) = grouped_caa_traced(&x, &p, &gc, &gr, &pl).unwrap();
            assert_eq!(peak, pl.predicted_peak_elements, "G={g}");
            assert!(peak <= last, "peak must be non-increasing in G");
            last = peak;
        }
    }

    #[test]
    fn budget_plans_hold_their_budget_when_executed() {
        let d = dims(8, 4, 2, 2, 2);
        let (x, p, gc, gr) = setup::<f64>(d, 11, 1);
        let widths = GateWidths::of(&gc, &gr);
        let tight = predicted_peak(&d, &widths, 2) * Dtype::F64.size_bytes();
        let pl = plan(&d, &widths, PlanTarget::MemoryBudget { bytes: tight, dtype: Dtype::F64 }).unwrap();
        let (_, peak) = grouped_caa_traced(&x, &p, &gc, &gr, &pl).unwrap();
        assert!(peak * Dtype::F64.size_bytes() <= tight);
    }

    #[test]
    fn mismatched_plans_and_stages_are_rejected() {
        let d = dims(4, 4, 2, 2, 2);
        let (x, p, gc, gr) = setup::<f64>(d, 12, 1);
        let widths = GateWidths::of(&gc, &gr);
        let other = dims(5, 4, 2, 2, 2);
        let stale = plan(&other, &widths, PlanTarget::Groups(1)).unwrap();
        assert!(matches!(
            grouped_caa(&x, &p, &gc, &gr, &stale),
            Err(CaaError::PlanMismatch { plan_h: 5, input_h: 4 })
        ));
        let good = plan(&d, &widths, PlanTarget::Groups(2)).unwrap();
        assert!(matches!(
            grouped_caa(&x, &p, &gr, &gc, &good),
            Err(CaaError::StageMismatch { .. })
        ));
    }

    #[test]
    fn measure_reports_consistent_instrumentation() {
        let d = dims(5, 4, 2, 2, 2);
        let (x, p, gc, gr) = setup::<f64>(d, 13, 1);
        let stats = measure(&x, &p, &gc, &gr, &[1, 2, 5], 2).unwrap();
        assert_eq!(stats.len(), 3);
        assert_eq!(stats[0].groups_executed, 1);
        assert_eq!(stats[2].g, 5);
        assert_eq!(stats[2].groups_executed, 5);
        for s in &stats {
            assert!(s.wall_time_s >= 0.0);
            assert_eq!(s.repeats, 2);
        }
        assert!(stats.windows(2).all(|p| p[0].peak_intermediate_elements >= p[1].peak_intermediate_elements));
        let row = stats[1].csv_row(&d);
        assert!(row.starts_with("2,5,4,2,"));
        assert_eq!(csv_header().split(',').count(), row.split(',').count());
    }

    #[test]
    fn oversized_group_counts_skip_all_pad_groups() {
        let d = dims(5, 3, 2, 2, 2);
        let (x, p, gc, gr) = setup::<f64>(d, 14, 1);
        let widths = GateWidths::of(&gc, &gr);
        let base = grouped_caa(&x, &p, &gc, &gr, &plan(&d, &widths, PlanTarget::Groups(1)).unwrap()).unwrap();
        let pl = plan(&d, &widths, PlanTarget::Groups(9)).unwrap();
        assert_eq!(pl.padding, 4);
        let y = grouped_caa(&x, &p, &gc, &gr, &pl).unwrap();
        assert!(bitwise_eq(&y, &base));
        let stats = measure(&x, &p, &gc, &gr, &[9], 1).unwrap();
        assert_eq!(stats[0].groups_executed, 5);
    }
}
