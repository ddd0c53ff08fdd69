// SPDX-License-Identifier: Apache-2.0

//! Cycle model of the PE array and its hand-off to the reduction network.
//!
//! Each outer iteration is a *step*. In a step, row `r` of the array spends
//! `L` cycles (the product of the local loops) reducing into its PE
//! accumulators, starting `r` cycles after the step begins, then puts
//! every column's partial sum on the column output bus in the cycle of its
//! last MAC. The network spends one cycle per stage and the oAct lands in
//! the stationary buffer the cycle after. Steps start `max(L, rows)`
//! cycles apart, which keeps every column bus to one driver per cycle.
//!
//! Cycle 0 of a trace is the first compute cycle; the initial weight
//! preload happens before it.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::arch::ArchSpec;
use crate::birrd::{route, BirrdProgram, BirrdTopology, ReductionSpec};
use crate::dims::Dim;
use crate::error::{Error, Result};
use crate::layout::{regime_allows, LayoutDescriptor, Placement, Transition};
use crate::mapping::{Factors, Mapping};
use crate::workload::LayerShape;

/// Step timing shared by traces and the cost model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub local_len: u64,
    pub rows: u64,
    pub cols: u64,
    pub period: u64,
    pub steps: u64,
    /// Consecutive steps that reuse one set of weights.
    pub steps_per_tile: u64,
    pub tiles: u64,
    pub preload: u64,
    /// Cycles the array waits before each new weight tile because the
    /// next preload is longer than the current tile's run.
    pub stall_per_tile: u64,
    pub birrd_stages: u64,
}

impl Schedule {
    pub fn new(m: &Mapping, arch: &ArchSpec) -> Result<Self> {
        let topo_stages = BirrdTopology::new(arch.aw)?.stages as u64;
        let local_len = m.local_len();
        let rows = m.rows_used();
        let period = local_len.max(rows);
        let steps = m.steps();
        let tiles = m.weight_tiles();
        let steps_per_tile = steps / tiles;
        let preload = (arch.ah * arch.ah) as u64;
        let run = steps_per_tile * period;
        Ok(Schedule {
            local_len,
            rows,
            cols: m.cols_used(),
            period,
            steps,
            steps_per_tile,
            tiles,
            preload,
            stall_per_tile: preload.saturating_sub(run),
            birrd_stages: topo_stages,
        })
    }

    pub fn step_start(&self, k: u64) -> u64 {
        k * self.period + (k / self.steps_per_tile) * self.stall_per_tile
    }

    /// Cycle row `r` of step `k` drives its column buses.
    pub fn inject(&self, k: u64, r: u64) -> u64 {
        self.step_start(k) + r + self.local_len - 1
    }

    pub fn write(&self, k: u64, r: u64) -> u64 {
        self.inject(k, r) + self.birrd_stages
    }

    /// From the first MAC to the cycle after the last write.
    pub fn compute_cycles(&self) -> u64 {
        self.write(self.steps - 1, self.rows - 1) + 1
    }

    pub fn total_cycles(&self) -> u64 {
        self.preload + self.compute_cycles()
    }

    /// Exposed weight-load cycles: the first preload plus reload stalls.
    pub fn exposed_preload(&self) -> u64 {
        self.preload + (self.tiles - 1) * self.stall_per_tile
    }

    pub fn pipeline_cycles(&self) -> u64 {
        self.compute_cycles() - (self.tiles - 1) * self.stall_per_tile
    }

    pub fn steady_utilization(&self, macs: u64, arch: &ArchSpec) -> f64 {
        macs as f64 / (arch.pes() * self.steps * self.period) as f64
    }
}

/// One group of columns that reduce into the same oAct.
#[derive(Debug, Clone)]
struct ColGroup {
    cols: Vec<usize>,
}

/// A layer bound to one mapping: digit tables for every spatial and local
/// position, row groups that share an iAct stream, and the schedule.
pub struct LayerModel<'a> {
    pub shape: &'a LayerShape,
    pub mapping: &'a Mapping,
    pub arch: &'a ArchSpec,
    pub schedule: Schedule,
    f: Factors,
    ext: [u64; 7],
    cols: Vec<[u64; 7]>,
    rows: Vec<[u64; 7]>,
    locals: Vec<[u64; 7]>,
    /// Rows that fetch from the buffer; the others receive the same iActs
    /// forwarded from the row above.
    leaders: Vec<u64>,
    groups: Vec<ColGroup>,
}

/// One partial-sum emission of a row: an oAct and the columns feeding it.
#[derive(Debug, Clone)]
pub struct Emission {
    pub oact: [u64; 4],
    pub cols: Vec<usize>,
}

impl<'a> LayerModel<'a> {
    pub fn new(shape: &'a LayerShape, mapping: &'a Mapping, arch: &'a ArchSpec) -> Result<Self> {
        mapping.validate(shape, arch)?;
        let schedule = Schedule::new(mapping, arch)?;
        let cols: Vec<[u64; 7]> = (0..mapping.cols_used()).map(|c| mapping.col_digits(c)).collect();
        let rows: Vec<[u64; 7]> = (0..mapping.rows_used()).map(|r| mapping.row_digits(r)).collect();
        let locals: Vec<[u64; 7]> = (0..mapping.local_len()).map(|l| mapping.local_digits(l)).collect();
        let relevant: Vec<usize> = Dim::ALL.iter().filter(|d| shape.input_depends_on(**d)).map(|d| d.index()).collect();
        let mut seen: Vec<Vec<u64>> = Vec::new();
        let mut leaders = Vec::new();
        for (r, digits) in rows.iter().enumerate() {
            let key: Vec<u64> = relevant.iter().map(|&i| digits[i]).collect();
            if !seen.contains(&key) {
                seen.push(key);
                leaders.push(r as u64);
            }
        }
        let keep: Vec<usize> = Dim::ALL.iter().filter(|d| !d.is_reduction()).map(|d| d.index()).collect();
        let mut keys: Vec<Vec<u64>> = Vec::new();
        let mut groups: Vec<ColGroup> = Vec::new();
        for (c, digits) in cols.iter().enumerate() {
            let key: Vec<u64> = keep.iter().map(|&i| digits[i]).collect();
            match keys.iter().position(|k| *k == key) {
                Some(g) => groups[g].cols.push(c),
                None => {
                    keys.push(key);
                    groups.push(ColGroup { cols: vec![c] });
                }
            }
        }
        Ok(LayerModel {
            shape,
            mapping,
            arch,
            schedule,
            f: mapping.factors(),
            ext: shape.extents(),
            cols,
            rows,
            locals,
            leaders,
            groups,
        })
    }

    pub fn leaders(&self) -> &[u64] {
        &self.leaders
    }

    pub fn outer(&self, step: u64) -> [u64; 7] {
        self.mapping.outer_digits(step)
    }

    #[inline]
    fn idx(&self, o: &[u64; 7], c: usize, r: u64, l: usize) -> [u64; 7] {
        Mapping::index(&self.f, o, &self.cols[c], &self.rows[r as usize], &self.locals[l])
    }

    #[inline]
    fn in_range(&self, idx: &[u64; 7]) -> bool {
        idx.iter().zip(&self.ext).all(|(i, e)| i < e)
    }

    /// Every iAct fetch of `step` as `(cycle, [n, c, h, w])`, relative to
    /// the step start, across all leader rows.
    pub fn for_each_read(&self, step: u64, mut f: impl FnMut(u64, [u64; 4])) {
        let o = self.outer(step);
        for &r in &self.leaders {
            for l in 0..self.locals.len() {
                for c in 0..self.cols.len() {
                    let idx = self.idx(&o, c, r, l);
                    if self.in_range(&idx) {
                        if let Some(coord) = self.shape.input_coord(&idx) {
                            f(r + l as u64, coord);
                        }
                    }
                }
            }
        }
    }

    /// Partial sums row `r` emits in `step`.
    pub fn emissions(&self, step: u64, r: u64) -> Vec<Emission> {
        let o = self.outer(step);
        let mut out = Vec::with_capacity(self.groups.len());
        for g in &self.groups {
            let mut cols = Vec::new();
            for &c in &g.cols {
                // Local digit 0 gives the smallest index, so it is in range
                // whenever any local index is.
                if self.in_range(&self.idx(&o, c, r, 0)) {
                    cols.push(c);
                }
            }
            if let Some(&c0) = cols.first() {
                let idx = self.idx(&o, c0, r, 0);
                let oact = [idx[Dim::N.index()], idx[Dim::M.index()], idx[Dim::P.index()], idx[Dim::Q.index()]];
                out.push(Emission { oact, cols });
            }
        }
        out
    }

    /// Partial sums each oAct receives over the layer.
    pub fn partials_per_output(&self) -> u64 {
        let f = &self.f;
        [Dim::C, Dim::R, Dim::S]
            .iter()
            .map(|d| {
                let i = d.index();
                let (cf, rf, lf) = (f.col[i], f.row[i], f.local[i]);
                let mut n = 0;
                for o in 0..f.outer[i] {
                    for r in 0..rf {
                        if (0..cf).any(|c| ((o * cf + c) * rf + r) * lf < self.ext[i]) {
                            n += 1;
                        }
                    }
                }
                n
            })
            .product()
    }

    pub fn groups_per_row(&self) -> usize {
        self.groups.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Buffer {
    Ping,
    Pong,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceEvent {
    StabRead { cycle: i64, buffer: Buffer, line: u64, bank: u64 },
    StrbRead { cycle: i64, line: u64 },
    Inject { cycle: i64, row: u64, step: u64 },
    ObAccumulate { cycle: i64, oact: [u64; 4] },
    StabWrite { cycle: i64, buffer: Buffer, line: u64, bank: u64, oact: [u64; 4] },
}

impl TraceEvent {
    pub fn cycle(&self) -> i64 {
        match *self {
            TraceEvent::StabRead { cycle, .. }
            | TraceEvent::StrbRead { cycle, .. }
            | TraceEvent::Inject { cycle, .. }
            | TraceEvent::ObAccumulate { cycle, .. }
            | TraceEvent::StabWrite { cycle, .. } => cycle,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub schedule: Schedule,
    pub macs: u64,
    pub first_output_cycle: u64,
    pub compute_cycles: u64,
    pub total_cycles: u64,
    pub steady_utilization: f64,
    /// Sorted by cycle.
    pub events: Vec<TraceEvent>,
}

fn oact_name(o: &[u64; 4]) -> String {
    format!("N{}M{}P{}Q{}", o[0], o[1], o[2], o[3])
}

impl ExecutionTrace {
    /// At most one row drives the column buses in any cycle.
    pub fn bus_exclusive(&self) -> bool {
        let mut cycles: Vec<i64> =
            self.events.iter().filter(|e| matches!(e, TraceEvent::Inject { .. })).map(|e| e.cycle()).collect();
        let n = cycles.len();
        cycles.sort_unstable();
        cycles.dedup();
        cycles.len() == n
    }

    /// `(line, banks)` read from the stationary buffer in `cycle`.
    pub fn reads_at(&self, cycle: i64) -> Vec<(u64, Vec<u64>)> {
        let mut out: Vec<(u64, Vec<u64>)> = Vec::new();
        for e in &self.events {
            if let TraceEvent::StabRead { cycle: c, line, bank, .. } = *e {
                if c == cycle {
                    match out.iter_mut().find(|(l, _)| *l == line) {
                        Some((_, banks)) => banks.push(bank),
                        None => out.push((line, vec![bank])),
                    }
                }
            }
        }
        for (_, b) in &mut out {
            b.sort_unstable();
        }
        out.sort();
        out
    }

    pub fn writes(&self) -> impl Iterator<Item = &TraceEvent> {
        self.events.iter().filter(|e| matches!(e, TraceEvent::StabWrite { .. }))
    }

    /// One event per line, in cycle order.
    pub fn dump(&self) -> String {
        let mut events: Vec<&TraceEvent> = self.events.iter().collect();
        events.sort_by_key(|e| e.cycle());
        let mut s = String::new();
        let buf = |b: Buffer| if b == Buffer::Ping { "StaB-ping" } else { "StaB-pong" };
        for e in events {
            let _ = match e {
                TraceEvent::StabRead { cycle, buffer, line, bank } => {
                    writeln!(s, "cycle {cycle}: read {} line {line} bank {bank}", buf(*buffer))
                }
                TraceEvent::StrbRead { cycle, line } => writeln!(s, "cycle {cycle}: read StrB line {line}"),
                TraceEvent::Inject { cycle, row, step } => {
                    writeln!(s, "cycle {cycle}: inject BIRRD row {row} step {step}")
                }
                TraceEvent::ObAccumulate { cycle, oact } => writeln!(s, "cycle {cycle}: accumulate OB {}", oact_name(oact)),
                TraceEvent::StabWrite { cycle, buffer, line, bank, oact } => {
                    writeln!(s, "cycle {cycle}: write {} line {line} bank {bank} {}", buf(*buffer), oact_name(oact))
                }
            };
        }
        s
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TraceOptions {
    /// Stop after this many steps (timing fields still describe the whole
    /// layer).
    pub max_steps: Option<u64>,
}

fn check_transition(arch: &ArchSpec, from: &LayoutDescriptor, to: &LayoutDescriptor) -> Result<()> {
    if regime_allows(arch.reorder_regime, from, to) == Transition::Illegal {
        return Err(Error::RegimeViolation {
            regime: arch.reorder_regime.to_string(),
            from: from.to_string(),
            to: to.to_string(),
        });
    }
    Ok(())
}

/// Checks that one emission's oActs leave the network on distinct ports.
fn check_ports(arch: &ArchSpec, out: &Placement, em: &[Emission], cycle: u64) -> Result<Vec<usize>> {
    let mut ports = Vec::with_capacity(em.len());
    let mut used = vec![0usize; arch.aw];
    for e in em {
        let port = (out.address_unchecked(e.oact).bank % arch.aw as u64) as usize;
        used[port] += 1;
        if used[port] > 1 {
            return Err(Error::WritePortOverflow { cycle, port, count: used[port] });
        }
        ports.push(port);
    }
    Ok(ports)
}

/// Reads from StaB ping, writes to StaB pong.
pub fn simulate_layer(
    shape: &LayerShape,
    m: &Mapping,
    in_layout: &LayoutDescriptor,
    out_layout: &LayoutDescriptor,
    arch: &ArchSpec,
) -> Result<ExecutionTrace> {
    simulate_layer_with(shape, m, in_layout, out_layout, arch, TraceOptions::default())
}

pub fn simulate_layer_with(
    shape: &LayerShape,
    m: &Mapping,
    in_layout: &LayoutDescriptor,
    out_layout: &LayoutDescriptor,
    arch: &ArchSpec,
    opts: TraceOptions,
) -> Result<ExecutionTrace> {
    check_transition(arch, in_layout, out_layout)?;
    let model = LayerModel::new(shape, m, arch)?;
    let sched = model.schedule;
    let input = in_layout.place(shape.input_extents(), &arch.stab)?;
    let output = out_layout.place(shape.output_extents(), &arch.stab)?;
    let steps = opts.max_steps.map_or(sched.steps, |n| n.min(sched.steps));
    let partials = model.partials_per_output();
    let mut remaining: HashMap<[u64; 4], u64> = HashMap::new();
    let mut events = Vec::new();

    // Weight loads: the first tile before cycle 0, later tiles during the
    // previous tile's run.
    let strb_lines = arch.ah as u64;
    for t in 0..sched.tiles.min(steps.div_ceil(sched.steps_per_tile) + 1) {
        let start = if t == 0 {
            -(sched.preload as i64)
        } else {
            sched.step_start((t - 1) * sched.steps_per_tile) as i64
        };
        for j in 0..sched.preload {
            events.push(TraceEvent::StrbRead { cycle: start + j as i64, line: (t * strb_lines + j / strb_lines) });
        }
    }

    let mut first_output = None;
    for k in 0..steps {
        let base = sched.step_start(k);
        let mut reads: Vec<(u64, u64, u64)> = Vec::new();
        model.for_each_read(k, |dt, coord| {
            let a = input.address_unchecked(coord);
            reads.push((base + dt, a.line, a.bank));
        });
        reads.sort_unstable();
        reads.dedup();
        events.extend(reads.into_iter().map(|(cycle, line, bank)| TraceEvent::StabRead {
            cycle: cycle as i64,
            buffer: Buffer::Ping,
            line,
            bank,
        }));
        for r in 0..sched.rows {
            let em = model.emissions(k, r);
            let inject = sched.inject(k, r);
            let write = sched.write(k, r);
            events.push(TraceEvent::Inject { cycle: inject as i64, row: r, step: k });
            check_ports(arch, &output, &em, write)?;
            for e in em {
                let left = remaining.entry(e.oact).or_insert(partials);
                *left -= 1;
                if *left > 0 {
                    events.push(TraceEvent::ObAccumulate { cycle: write as i64, oact: e.oact });
                    continue;
                }
                let a = output.address_unchecked(e.oact);
                first_output.get_or_insert(write);
                events.push(TraceEvent::StabWrite {
                    cycle: write as i64,
                    buffer: Buffer::Pong,
                    line: a.line,
                    bank: a.bank,
                    oact: e.oact,
                });
            }
        }
    }
    events.sort_by_key(|e| e.cycle());
    Ok(ExecutionTrace {
        schedule: sched,
        macs: shape.macs(),
        first_output_cycle: first_output.unwrap_or(0),
        compute_cycles: sched.compute_cycles(),
        total_cycles: sched.total_cycles(),
        steady_utilization: sched.steady_utilization(shape.macs(), arch),
        events,
    })
}

/// Direct 7-loop convolution; outputs in `[N, M, P, Q]` row-major order.
/// Weights are `[M, C/groups, R, S]`.
pub fn reference_conv(shape: &LayerShape, inputs: &[i64], weights: &[i64]) -> Vec<i64> {
    let [n_, m_, c_, p_, q_, r_, s_] = shape.extents();
    let [_, ci, hi, wi] = shape.input_extents();
    let mut out = vec![0i64; (n_ * m_ * p_ * q_) as usize];
    for n in 0..n_ {
        for m in 0..m_ {
            for p in 0..p_ {
                for q in 0..q_ {
                    let mut acc = 0i64;
                    for c in 0..c_ {
                        for r in 0..r_ {
                            for s in 0..s_ {
                                if let Some([_, ch, h, w]) = shape.input_coord(&[n, m, c, p, q, r, s]) {
                                    let x = inputs[(((n * ci + ch) * hi + h) * wi + w) as usize];
                                    acc += x * weights[(((m * c_ + c) * r_ + r) * s_ + s) as usize];
                                }
                            }
                        }
                    }
                    out[(((n * m_ + m) * p_ + p) * q_ + q) as usize] = acc;
                }
            }
        }
    }
    out
}

/// Runs the layer value by value: iActs are stored in StaB ping under
/// `in_layout`, every PE reduces over its local loop, every row emission is
/// routed through a compiled network program, partial sums accumulate in
/// the output buffer and finished oActs land in StaB pong under
/// `out_layout`. Returns the oActs read back from pong in `[N, M, P, Q]`
/// order after checking them against [`reference_conv`].
pub fn functional_check(
    shape: &LayerShape,
    m: &Mapping,
    in_layout: &LayoutDescriptor,
    out_layout: &LayoutDescriptor,
    arch: &ArchSpec,
    inputs: &[i64],
    weights: &[i64],
) -> Result<Vec<i64>> {
    check_transition(arch, in_layout, out_layout)?;
    let model = LayerModel::new(shape, m, arch)?;
    let sched = model.schedule;
    let input = in_layout.place(shape.input_extents(), &arch.stab)?;
    let output = out_layout.place(shape.output_extents(), &arch.stab)?;
    let topo = BirrdTopology::new(arch.aw)?;
    let line = arch.stab.line_size;
    let [n_, m_, c_, _, _, r_, s_] = shape.extents();

    let mut ping = vec![0i64; (input.lines() * line) as usize];
    let [ni, ci, hi, wi] = shape.input_extents();
    for n in 0..ni {
        for c in 0..ci {
            for h in 0..hi {
                for w in 0..wi {
                    let a = input.address_unchecked([n, c, h, w]);
                    ping[(a.line * line + a.offset) as usize] = inputs[(((n * ci + c) * hi + h) * wi + w) as usize];
                }
            }
        }
    }
    let mut pong: Vec<Option<i64>> = vec![None; (output.lines() * line) as usize];
    let mut ob: HashMap<[u64; 4], (i64, u64)> = HashMap::new();
    let mut programs: HashMap<ReductionSpec, BirrdProgram> = HashMap::new();
    let partials = model.partials_per_output();

    for k in 0..sched.steps {
        let o = model.outer(k);
        for r in 0..sched.rows {
            let em = model.emissions(k, r);
            let ports = check_ports(arch, &output, &em, sched.write(k, r))?;
            // Phase 1: every PE reduces over its local loop.
            let mut bus = vec![0i64; arch.aw];
            for c in 0..model.cols.len() {
                let mut acc = 0i64;
                for l in 0..model.locals.len() {
                    let idx = model.idx(&o, c, r, l);
                    if !model.in_range(&idx) {
                        continue;
                    }
                    if let Some(coord) = shape.input_coord(&idx) {
                        let a = input.address_unchecked(coord);
                        let x = ping[(a.line * line + a.offset) as usize];
                        let [_, mm, cc, _, _, rr, ss] = idx;
                        acc += x * weights[(((mm * c_ + cc) * r_ + rr) * s_ + ss) as usize];
                    }
                }
                bus[c] = acc;
            }
            // Phase 2: the network sums each column group onto its port.
            let groups: Vec<Vec<usize>> = em.iter().map(|e| e.cols.clone()).collect();
            let spec = ReductionSpec::new(arch.aw, groups, ports.clone())?;
            let prog = match programs.get(&spec) {
                Some(p) => p,
                None => {
                    let p = route(&spec, &topo)?;
                    programs.entry(spec.clone()).or_insert(p)
                }
            };
            let out = topo.simulate(prog, &bus);
            for (e, &port) in em.iter().zip(&ports) {
                let slot = ob.entry(e.oact).or_insert((0, 0));
                slot.0 += out[port];
                slot.1 += 1;
                if slot.1 == partials {
                    let a = output.address_unchecked(e.oact);
                    pong[(a.line * line + a.offset) as usize] = Some(slot.0);
                }
            }
        }
    }

    let [_, _, po, qo] = shape.output_extents();
    let mut got = Vec::with_capacity((n_ * m_ * po * qo) as usize);
    for n in 0..n_ {
        for mm in 0..m_ {
            for p in 0..po {
                for q in 0..qo {
                    let a = output.address_unchecked([n, mm, p, q]);
                    got.push(pong[(a.line * line + a.offset) as usize]);
                }
            }
        }
    }
    compare_outputs(shape, &got, &reference_conv(shape, inputs, weights))
}

/// Fails on the first oAct (in `[N, M, P, Q]` order) that is missing or
/// differs from `expected`.
pub fn compare_outputs(shape: &LayerShape, got: &[Option<i64>], expected: &[i64]) -> Result<Vec<i64>> {
    let [_, m_, po, qo] = shape.output_extents();
    for (i, (g, want)) in got.iter().zip(expected).enumerate() {
        if *g != Some(*want) {
            let i = i as u64;
            let (n, rest) = (i / (m_ * po * qo), i % (m_ * po * qo));
            let (m, rest) = (rest / (po * qo), rest % (po * qo));
            return Err(Error::Mismatch { n, m, p: rest / qo, q: rest % qo, got: g.unwrap_or(i64::MIN), expected: *want });
        }
    }
    Ok(expected.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::derive_output_extents;
    use crate::LayerKind;

    fn walkthrough() -> (LayerShape, Mapping, ArchSpec) {
        let shape = derive_output_extents(&LayerShape::conv(1, 4, 4, 4, 4, 2, 2)).unwrap();
        let arch = ArchSpec::compact(4, 4);
        let m = Mapping::new(&shape, &[Dim::P, Dim::Q], vec![(Dim::C, 4)], vec![(Dim::M, 4)], vec![(Dim::R, 2), (Dim::S, 2)]);
        (shape, m, arch)
    }

    fn conv(t: &str) -> LayoutDescriptor {
        LayoutDescriptor::parse(t, LayerKind::Conv).unwrap()
    }

    #[test]
    fn first_read_and_write_match_walkthrough() {
        let (shape, m, arch) = walkthrough();
        let t = simulate_layer(&shape, &m, &conv("HWC_C4"), &conv("MPQ_Q4(CHW_W4)"), &arch).unwrap();
        assert_eq!(t.reads_at(0), vec![(0, vec![0, 1, 2, 3])]);
        let first = t.writes().next().unwrap();
        assert_eq!(
            *first,
            TraceEvent::StabWrite { cycle: 6, buffer: Buffer::Pong, line: 0, bank: 0, oact: [0, 0, 0, 0] }
        );
        assert_eq!(t.first_output_cycle, 6);
        assert!(t.bus_exclusive());
        assert_eq!(t.schedule.preload, 16);
    }

    #[test]
    fn all_ones_give_full_window_sums() {
        let (shape, m, arch) = walkthrough();
        let x = vec![1; shape.input_elements() as usize];
        let w = vec![1; (shape.m * shape.c * 4) as usize];
        let out = functional_check(&shape, &m, &conv("HWC_C4"), &conv("MPQ_Q4(CHW_W4)"), &arch, &x, &w).unwrap();
        assert!(out.iter().all(|&v| v == 16));
        let zero = vec![0; w.len()];
        let out = functional_check(&shape, &m, &conv("HWC_C4"), &conv("CHW_W4"), &arch, &x, &zero).unwrap();
        assert!(out.iter().all(|&v| v == 0));
    }

    #[test]
    fn mismatch_names_first_bad_oact() {
        let (shape, _, _) = walkthrough();
        let want = vec![16i64; shape.output_elements() as usize];
        let mut got: Vec<Option<i64>> = want.iter().map(|&v| Some(v)).collect();
        got[9 + 3 + 2] = Some(15);
        got[20] = None;
        let err = compare_outputs(&shape, &got, &want).unwrap_err();
        assert!(matches!(err, Error::Mismatch { n: 0, m: 1, p: 1, q: 2, got: 15, expected: 16 }), "{err}");
    }

    #[test]
    fn schedule_counts() {
        let (_, m, arch) = walkthrough();
        let s = Schedule::new(&m, &arch).unwrap();
        assert_eq!((s.period, s.steps, s.birrd_stages), (4, 9, 3));
        assert_eq!(s.inject(0, 0), 3);
        assert_eq!(s.write(0, 0), 6);
        assert_eq!(s.compute_cycles(), 8 * 4 + 3 + 3 + 3 + 1);
    }
}
