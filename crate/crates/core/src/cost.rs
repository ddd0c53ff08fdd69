// SPDX-License-Identifier: Apache-2.0

//! Slowdown, latency, energy and EDP of one layer under one mapping and
//! layout pair.
//!
//! Buffer traffic is measured on a few sampled steady-state windows (one
//! step period each) and scaled to the whole layer; the remaining counts
//! are exact.

use serde::{Deserialize, Serialize};

use crate::arch::{ArchSpec, EnergyTable};
use crate::error::{Error, Result};
use crate::layout::{regime_allows, LayoutDescriptor, Placement, ReorderRegime, Transition};
use crate::mapping::Mapping;
use crate::nest::{ExecutionTrace, LayerModel, Schedule, TraceEvent};
use crate::workload::LayerShape;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostOptions {
    /// Use `ceil(N_L / N_P)` instead of the ratio.
    pub ceil_slowdown: bool,
    /// Steady-state windows sampled per layer.
    pub samples: usize,
}

impl Default for CostOptions {
    fn default() -> Self {
        CostOptions { ceil_slowdown: false, samples: 4 }
    }
}

/// Slowdown of one bank that serves `n_l` distinct lines through `n_p`
/// ports in one cycle.
pub fn slowdown(n_l: u64, n_p: u64) -> f64 {
    (n_l as f64 / n_p as f64).max(1.0)
}

pub fn slowdown_ceil(n_l: u64, n_p: u64) -> f64 {
    (n_l.div_ceil(n_p) as f64).max(1.0)
}

/// Access counts per level, in words unless noted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AccessCounts {
    pub macs: f64,
    /// Weight words written into PE registers.
    pub register: f64,
    /// Streaming-buffer line reads.
    pub strb_reads: f64,
    /// Stationary-buffer line fetches: distinct lines per cycle, however
    /// many of their words are used.
    pub stab_reads: f64,
    pub stab_writes: f64,
    pub ob_accesses: f64,
    /// Partial sums times network stages traversed.
    pub birrd_hops: f64,
    pub dram: f64,
}

impl AccessCounts {
    /// Counts what a trace recorded.
    pub fn from_trace(t: &ExecutionTrace) -> Self {
        let mut c = AccessCounts { macs: t.macs as f64, ..Default::default() };
        let hops = (t.schedule.cols * t.schedule.birrd_stages) as f64;
        let mut lines = Vec::new();
        for e in &t.events {
            match *e {
                TraceEvent::StabRead { cycle, line, .. } => lines.push((cycle, line)),
                TraceEvent::StrbRead { .. } => c.strb_reads += 1.0,
                TraceEvent::Inject { .. } => c.birrd_hops += hops,
                TraceEvent::ObAccumulate { .. } => c.ob_accesses += 2.0,
                TraceEvent::StabWrite { .. } => c.stab_writes += 1.0,
            }
        }
        lines.sort_unstable();
        lines.dedup();
        c.stab_reads = lines.len() as f64;
        c
    }

    fn add(&mut self, o: &AccessCounts) {
        self.macs += o.macs;
        self.register += o.register;
        self.strb_reads += o.strb_reads;
        self.stab_reads += o.stab_reads;
        self.stab_writes += o.stab_writes;
        self.ob_accesses += o.ob_accesses;
        self.birrd_hops += o.birrd_hops;
        self.dram += o.dram;
    }
}

pub fn energy_of(c: &AccessCounts, table: &EnergyTable) -> Result<f64> {
    let terms = [
        ("mac", c.macs),
        ("register", c.register),
        ("strb_read", c.strb_reads),
        ("stab_read", c.stab_reads),
        ("stab_write", c.stab_writes),
        ("ob_access", c.ob_accesses),
        ("birrd_hop", c.birrd_hops),
        ("dram", c.dram),
    ];
    let mut e = 0.0;
    for (k, n) in terms {
        if n != 0.0 {
            e += n * table.get(k)?;
        }
    }
    Ok(e)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ReorderCharge {
    pub exposed_cycles: u64,
    pub energy: f64,
    pub accesses: AccessCounts,
}

/// Cost of converting one tensor of `tensor_bytes` between layouts under
/// `regime`, given the producing layer's compute cycles.
pub fn reorder_charge(
    regime: ReorderRegime,
    tensor_bytes: u64,
    compute_cycles: u64,
    arch: &ArchSpec,
) -> Result<ReorderCharge> {
    let elements = tensor_bytes.div_ceil(arch.stab.word_bytes.max(1));
    let line = arch.stab.line_size;
    let mut a = AccessCounts::default();
    let exposed = match regime {
        ReorderRegime::ArbitraryRir | ReorderRegime::FixedLayout => return Ok(ReorderCharge::default()),
        ReorderRegime::Transpose | ReorderRegime::RowReorder | ReorderRegime::TransposePlusRowReorder => {
            a.stab_reads = elements as f64;
            a.stab_writes = elements as f64;
            2 * elements.div_ceil(line)
        }
        ReorderRegime::OffChip => {
            a.dram = 2.0 * elements as f64;
            let transfer = (2.0 * tensor_bytes as f64 / arch.offchip_bandwidth).ceil() as u64;
            transfer.saturating_sub(compute_cycles)
        }
        ReorderRegime::LineRotation => {
            let lines = elements.div_ceil(line) as f64;
            a.stab_reads = lines;
            a.stab_writes = lines;
            0
        }
    };
    Ok(ReorderCharge { exposed_cycles: exposed, energy: energy_of(&a, &arch.energy)?, accesses: a })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub cycles: u64,
    pub slowdown: f64,
    pub read_slowdown: f64,
    pub write_slowdown: f64,
    pub theoretical_utilization: f64,
    pub practical_utilization: f64,
    pub energy: f64,
    pub pj_per_compute: f64,
    pub edp: f64,
    pub macs: u64,
    pub accesses: AccessCounts,
    pub exposed_reorder_cycles: u64,
    pub reorder_energy: f64,
}

/// Buffer reads of sampled windows, measured under one input layout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReadStats {
    pub slowdown: f64,
    /// Line fetches over the layer (scaled from the samples).
    pub lines: f64,
}

/// Layout-independent part of a layer's cost under one mapping.
pub struct MappingProfile<'a> {
    pub model: LayerModel<'a>,
    pub schedule: Schedule,
    /// Per window: `(cycle, iAct coordinate)` of every fetch.
    windows: Vec<Vec<(u64, [u64; 4])>>,
    /// Full-layer reads are `window average * scale`.
    scale: f64,
    /// oActs of each sampled emission.
    emissions: Vec<Vec<[u64; 4]>>,
    /// Everything but buffer reads and reordering.
    pub base: AccessCounts,
    opts: CostOptions,
}

fn sample_steps(steps: u64, n: usize) -> Vec<u64> {
    let n = (n as u64).max(1).min(steps);
    let mut v: Vec<u64> = (0..n).map(|i| if n == 1 { 0 } else { i * (steps - 1) / (n - 1) }).collect();
    v.dedup();
    v
}

impl<'a> MappingProfile<'a> {
    /// Exact counts only; call [`MappingProfile::sampled`] before measuring
    /// buffer traffic.
    pub fn new(shape: &'a LayerShape, m: &'a Mapping, arch: &'a ArchSpec, opts: CostOptions) -> Result<Self> {
        let model = LayerModel::new(shape, m, arch)?;
        let s = model.schedule;
        let outputs = shape.output_elements() as f64;
        let partials = model.partials_per_output() as f64;
        let base = AccessCounts {
            macs: shape.macs() as f64,
            register: (s.tiles * s.cols * s.rows * s.local_len) as f64,
            strb_reads: (s.tiles * s.preload) as f64,
            stab_reads: 0.0,
            stab_writes: outputs,
            ob_accesses: 2.0 * outputs * (partials - 1.0),
            birrd_hops: (s.steps * s.rows * s.cols * s.birrd_stages) as f64,
            dram: 0.0,
        };
        Ok(MappingProfile { model, schedule: s, windows: Vec::new(), scale: 0.0, emissions: Vec::new(), base, opts })
    }

    /// Collects the read windows and emissions that layouts are measured on.
    pub fn sampled(mut self) -> Self {
        let model = &self.model;
        let s = self.schedule;
        if s.steps == 1 {
            let mut w = Vec::new();
            model.for_each_read(0, |dt, c| w.push((dt, c)));
            w.sort_unstable();
            w.dedup();
            self.windows.push(w);
            self.scale = 1.0;
        } else {
            // Window k covers one period from the start of step k + 1,
            // including the tail of step k.
            for k in sample_steps(s.steps - 1, self.opts.samples) {
                let (a, b) = (s.step_start(k), s.step_start(k + 1));
                let mut w = Vec::new();
                model.for_each_read(k, |dt, c| {
                    if a + dt >= b {
                        w.push((a + dt - b, c));
                    }
                });
                model.for_each_read(k + 1, |dt, c| {
                    if dt < s.period {
                        w.push((dt, c));
                    }
                });
                w.sort_unstable();
                w.dedup();
                self.windows.push(w);
            }
            self.scale = s.steps as f64;
        }
        for k in sample_steps(s.steps, self.opts.samples) {
            for r in 0..s.rows {
                self.emissions.push(model.emissions(k, r).into_iter().map(|e| e.oact).collect());
            }
        }
        self
    }

    fn bank_slowdown(&self, n_l: u64, n_p: u64) -> f64 {
        if self.opts.ceil_slowdown {
            slowdown_ceil(n_l, n_p)
        } else {
            slowdown(n_l, n_p)
        }
    }

    /// Worst bank slowdown within one cycle and the distinct (bank, line)
    /// accesses it makes.
    fn cycle_slowdown(&self, accesses: &mut [(u64, u64)], ports: u64) -> (f64, u64) {
        accesses.sort_unstable();
        let (mut worst, mut count) = (1.0f64, 0u64);
        let mut i = 0;
        while i < accesses.len() {
            let bank = accesses[i].0;
            let mut lines = 0;
            let mut last = None;
            while i < accesses.len() && accesses[i].0 == bank {
                if last != Some(accesses[i].1) {
                    lines += 1;
                    last = Some(accesses[i].1);
                }
                i += 1;
            }
            count += lines;
            worst = worst.max(self.bank_slowdown(lines, ports));
        }
        (worst, count)
    }

    /// Read slowdown is the access-weighted mean over cycles of the worst
    /// bank's slowdown.
    pub fn read(&self, input: &Placement) -> ReadStats {
        assert!(!self.windows.is_empty(), "profile was not sampled");
        let ports = self.model.arch.stab.read_ports as u64;
        let (mut num, mut den, mut lines) = (0.0, 0.0, 0usize);
        let mut buf = Vec::new();
        let mut fetched = Vec::new();
        for w in &self.windows {
            // Windows are sorted by cycle.
            for group in w.chunk_by(|a, b| a.0 == b.0) {
                buf.clear();
                buf.extend(group.iter().map(|&(_, coord)| {
                    let a = input.address_unchecked(coord);
                    (a.bank, a.line)
                }));
                let (sd, n) = self.cycle_slowdown(&mut buf, ports);
                num += sd * n as f64;
                den += n as f64;
                fetched.clear();
                fetched.extend(buf.iter().map(|&(_, line)| line));
                fetched.sort_unstable();
                fetched.dedup();
                lines += fetched.len();
            }
        }
        let lines = lines as f64 / self.windows.len() as f64 * self.scale;
        ReadStats { slowdown: if den > 0.0 { num / den } else { 1.0 }, lines }
    }

    /// Write slowdown under `output`. The oActs leaving the reduction
    /// network in one cycle must use distinct output ports.
    pub fn write(&self, output: &Placement) -> Result<f64> {
        let arch = self.model.arch;
        let ports = arch.stab.write_ports as u64;
        let (mut num, mut den) = (0.0, 0.0);
        let mut buf = Vec::new();
        let mut used = vec![0usize; arch.aw];
        for (i, em) in self.emissions.iter().enumerate() {
            buf.clear();
            used.iter_mut().for_each(|u| *u = 0);
            for &o in em {
                let a = output.address_unchecked(o);
                let p = (a.bank % arch.aw as u64) as usize;
                used[p] += 1;
                if used[p] > 1 {
                    return Err(Error::WritePortOverflow { cycle: i as u64, port: p, count: used[p] });
                }
                buf.push((a.bank, a.line));
            }
            let (sd, n) = self.cycle_slowdown(&mut buf, ports);
            num += sd * n as f64;
            den += n as f64;
        }
        Ok(if den > 0.0 { num / den } else { 1.0 })
    }

    /// Cycles and energy with no bank conflicts, no buffer reads and no
    /// reordering. Both are lower bounds for any layout pair.
    pub fn lower_bound(&self) -> Result<(f64, f64)> {
        let s = &self.schedule;
        let cycles = (s.exposed_preload() + s.pipeline_cycles()) as f64;
        Ok((cycles, energy_of(&self.base, &self.model.arch.energy)?))
    }

    pub fn report(&self, read: ReadStats, write_slowdown: f64, charge: ReorderCharge) -> Result<CostReport> {
        let arch = self.model.arch;
        let s = &self.schedule;
        let sd = read.slowdown.max(write_slowdown);
        let compute = s.exposed_preload() as f64 + s.pipeline_cycles() as f64 * sd;
        let cycles = compute.ceil() as u64 + charge.exposed_cycles;
        let mut acc = self.base;
        acc.stab_reads = read.lines;
        let core = energy_of(&acc, &arch.energy)?;
        acc.add(&charge.accesses);
        let energy = core + charge.energy;
        let macs = self.model.shape.macs();
        let theoretical = s.steady_utilization(macs, arch);
        Ok(CostReport {
            cycles,
            slowdown: sd,
            read_slowdown: read.slowdown,
            write_slowdown,
            theoretical_utilization: theoretical,
            practical_utilization: theoretical / sd,
            energy,
            pj_per_compute: if macs == 0 { 0.0 } else { energy / macs as f64 },
            edp: energy * cycles as f64,
            macs,
            accesses: acc,
            exposed_reorder_cycles: charge.exposed_cycles,
            reorder_energy: charge.energy,
        })
    }
}

/// How a layer reading `in_layout` hands its output to a consumer reading
/// `out_layout`: the layout it writes, and the reorder charge if any.
pub fn handoff<'l>(
    arch: &ArchSpec,
    in_layout: &'l LayoutDescriptor,
    out_layout: &'l LayoutDescriptor,
) -> Result<(&'l LayoutDescriptor, bool)> {
    match regime_allows(arch.reorder_regime, in_layout, out_layout) {
        Transition::Illegal => Err(Error::RegimeViolation {
            regime: arch.reorder_regime.to_string(),
            from: in_layout.to_string(),
            to: out_layout.to_string(),
        }),
        Transition::Free => Ok((out_layout, false)),
        Transition::Charged(_) => Ok((in_layout, true)),
    }
}

pub fn evaluate(
    shape: &LayerShape,
    m: &Mapping,
    in_layout: &LayoutDescriptor,
    out_layout: &LayoutDescriptor,
    arch: &ArchSpec,
    opts: CostOptions,
) -> Result<CostReport> {
    let (written, charged) = handoff(arch, in_layout, out_layout)?;
    let profile = MappingProfile::new(shape, m, arch, opts)?.sampled();
    let input = in_layout.place(shape.input_extents(), &arch.stab)?;
    let output = written.place(shape.output_extents(), &arch.stab)?;
    let read = profile.read(&input);
    let write = profile.write(&output)?;
    let charge = if charged {
        let bytes = shape.output_elements() * arch.stab.word_bytes;
        let base = profile.report(read, write, ReorderCharge::default())?;
        reorder_charge(arch.reorder_regime, bytes, base.cycles, arch)?
    } else {
        ReorderCharge::default()
    };
    profile.report(read, write, charge)
}
