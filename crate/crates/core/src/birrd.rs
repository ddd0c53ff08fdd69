// SPDX-License-Identifier: Apache-2.0

//! Butterfly reduce-and-reorder network: topology, switch semantics,
//! routing and functional simulation.

use std::collections::HashSet;
use std::fmt;
use std::num::Wrapping;
use std::ops::Add;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reverses the low `bit_range` bits of `data`, keeping the higher bits.
pub fn reverse_bits(data: usize, bit_range: u32) -> usize {
    let mask = (1usize << bit_range) - 1;
    let mut reversed = 0;
    for i in 0..bit_range {
        if data & (1 << i) != 0 {
            reversed |= 1 << (bit_range - 1 - i);
        }
    }
    (data & !mask) | reversed
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BirrdTopology {
    pub aw: usize,
    pub stages: usize,
    /// `wiring[i][j]`: output port `j` of stage `i` feeds input port
    /// `wiring[i][j]` of stage `i + 1` (or the network output after the
    /// last stage).
    pub wiring: Vec<Vec<usize>>,
    /// `reach[i][p]`: bitmask of network outputs reachable from input port
    /// `p` of stage `i`. `reach[stages][p] = 1 << p`.
    reach: Vec<Vec<u64>>,
}

impl BirrdTopology {
    pub fn new(aw: usize) -> Result<Self> {
        if aw < 4 || !aw.is_power_of_two() || aw > 64 {
            return Err(Error::InvalidWidth(aw));
        }
        let log = aw.trailing_zeros() as usize;
        let stages = if aw == 4 { 3 } else { 2 * log };
        let wiring: Vec<Vec<usize>> = (0..stages)
            .map(|i| {
                let range = log.min(2 + i).min((2 * log).saturating_sub(i)).max(1);
                (0..aw).map(|j| reverse_bits(j, range as u32)).collect()
            })
            .collect();
        let mut reach = vec![vec![0u64; aw]; stages + 1];
        for p in 0..aw {
            reach[stages][p] = 1 << p;
        }
        for i in (0..stages).rev() {
            for p in 0..aw {
                let base = p & !1;
                reach[i][p] = reach[i + 1][wiring[i][base]] | reach[i + 1][wiring[i][base + 1]];
            }
        }
        Ok(BirrdTopology { aw, stages, wiring, reach })
    }

    pub fn switches_per_stage(&self) -> usize {
        self.aw / 2
    }

    /// Pipeline latency in cycles.
    pub fn latency(&self) -> usize {
        self.stages
    }

    pub fn all_pass(&self) -> BirrdProgram {
        BirrdProgram { ops: vec![vec![EggOp::Pass; self.aw / 2]; self.stages] }
    }

    pub fn simulate<T: Copy + Add<Output = T>>(&self, program: &BirrdProgram, inputs: &[T]) -> Vec<T> {
        assert_eq!(inputs.len(), self.aw, "BIRRD input count");
        assert_eq!(program.ops.len(), self.stages, "program stage count");
        let mut cur = inputs.to_vec();
        let mut next = cur.clone();
        for (i, row) in program.ops.iter().enumerate() {
            for (k, op) in row.iter().enumerate() {
                let (l, r) = op.apply(cur[2 * k], cur[2 * k + 1]);
                next[self.wiring[i][2 * k]] = l;
                next[self.wiring[i][2 * k + 1]] = r;
            }
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    /// Simulation with adders of `bits` width that saturate.
    pub fn simulate_saturating(&self, program: &BirrdProgram, inputs: &[i64], bits: u32) -> Vec<i64> {
        let max = (1i128 << (bits - 1)) - 1;
        let min = -(1i128 << (bits - 1));
        let wide: Vec<Sat> = inputs.iter().map(|&v| Sat { v: (v as i128).clamp(min, max), min, max }).collect();
        self.simulate(program, &wide).into_iter().map(|s| s.v as i64).collect()
    }
}

#[derive(Clone, Copy)]
struct Sat {
    v: i128,
    min: i128,
    max: i128,
}

impl Add for Sat {
    type Output = Sat;
    fn add(self, o: Sat) -> Sat {
        Sat { v: (self.v + o.v).clamp(self.min, self.max), ..self }
    }
}

/// The four 2-input switch functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EggOp {
    Pass,
    Swap,
    AddLeft,
    AddRight,
}

impl EggOp {
    pub const ALL: [EggOp; 4] = [EggOp::Pass, EggOp::Swap, EggOp::AddLeft, EggOp::AddRight];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<EggOp> {
        Self::ALL.get(code as usize).copied()
    }

    #[inline]
    pub fn apply<T: Copy + Add<Output = T>>(self, l: T, r: T) -> (T, T) {
        match self {
            EggOp::Pass => (l, r),
            EggOp::Swap => (r, l),
            EggOp::AddLeft => (l + r, r),
            EggOp::AddRight => (l, l + r),
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            EggOp::Pass => "=",
            EggOp::Swap => "x",
            EggOp::AddLeft => "+L",
            EggOp::AddRight => "+R",
        }
    }
}

pub fn egg_apply<T: Copy + Add<Output = T>>(op: EggOp, left: T, right: T) -> (T, T) {
    op.apply(left, right)
}

/// Per-stage, per-switch configuration.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BirrdProgram {
    pub ops: Vec<Vec<EggOp>>,
}

impl BirrdProgram {
    pub fn adds(&self) -> usize {
        self.ops.iter().flatten().filter(|o| matches!(o, EggOp::AddLeft | EggOp::AddRight)).count()
    }
}

/// One stage per line, switches separated by spaces.
impl fmt::Display for BirrdProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, row) in self.ops.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            let syms: Vec<&str> = row.iter().map(|o| o.symbol()).collect();
            f.write_str(&syms.join(" "))?;
        }
        Ok(())
    }
}

impl FromStr for BirrdProgram {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let mut ops = Vec::new();
        for line in s.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let row = line
                .split_whitespace()
                .map(|t| match t {
                    "=" => Ok(EggOp::Pass),
                    "x" => Ok(EggOp::Swap),
                    "+L" => Ok(EggOp::AddLeft),
                    "+R" => Ok(EggOp::AddRight),
                    _ => Err(Error::Grammar { text: t.to_string(), message: "unknown switch op".into() }),
                })
                .collect::<Result<Vec<_>>>()?;
            ops.push(row);
        }
        let width = ops.first().map_or(0, Vec::len);
        if ops.is_empty() || ops.iter().any(|r| r.len() != width) {
            return Err(Error::Grammar { text: s.to_string(), message: "ragged or empty program".into() });
        }
        Ok(BirrdProgram { ops })
    }
}

/// Which inputs to sum and where each result must leave the network.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReductionSpec {
    pub aw: usize,
    /// Disjoint sets of input ports; a singleton is a plain passthrough.
    pub groups: Vec<Vec<usize>>,
    /// Output port of each group.
    pub placement: Vec<usize>,
}

impl ReductionSpec {
    pub fn new(aw: usize, groups: Vec<Vec<usize>>, placement: Vec<usize>) -> Result<Self> {
        let spec = ReductionSpec { aw, groups, placement };
        spec.validate()?;
        Ok(spec)
    }

    /// Adds passthrough `(input, output)` pairs as singleton groups.
    pub fn with_passthrough(mut self, pairs: &[(usize, usize)]) -> Result<Self> {
        for &(i, o) in pairs {
            self.groups.push(vec![i]);
            self.placement.push(o);
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidReductionSpec(m));
        if self.groups.len() != self.placement.len() {
            return bad("one output port per group".into());
        }
        if self.groups.len() > self.aw {
            return bad(format!("{} groups exceed AW={}", self.groups.len(), self.aw));
        }
        let mut seen_in = 0u64;
        let mut seen_out = 0u64;
        for (g, &out) in self.groups.iter().zip(&self.placement) {
            if g.is_empty() {
                return bad("empty group".into());
            }
            if out >= self.aw || seen_out & (1 << out) != 0 {
                return bad(format!("output port {out} out of range or reused"));
            }
            seen_out |= 1 << out;
            for &i in g {
                if i >= self.aw || seen_in & (1 << i) != 0 {
                    return bad(format!("input port {i} out of range or in two groups"));
                }
                seen_in |= 1 << i;
            }
        }
        Ok(())
    }

    /// Expected value at each output port (`None` = don't care).
    pub fn expected<T: Copy + Add<Output = T>>(&self, inputs: &[T]) -> Vec<Option<T>> {
        let mut out = vec![None; self.aw];
        for (g, &port) in self.groups.iter().zip(&self.placement) {
            let sum = g[1..].iter().fold(inputs[g[0]], |acc, &i| acc + inputs[i]);
            out[port] = Some(sum);
        }
        out
    }

    /// Whether `outputs` agrees with the group sums on every placed port.
    pub fn check<T: Copy + Add<Output = T> + PartialEq>(&self, inputs: &[T], outputs: &[T]) -> bool {
        self.expected(inputs).iter().zip(outputs).all(|(e, o)| e.is_none_or(|e| e == *o))
    }
}

// Router. A tag names the partial sum a port carries: group index in the
// high half, bitmask of accumulated inputs in the low half; 0 is garbage.
type Tag = u128;

fn tag(group: usize, mask: u64) -> Tag {
    ((group as u128 + 1) << 64) | mask as u128
}

fn tag_group(t: Tag) -> usize {
    (t >> 64) as usize - 1
}

fn tag_mask(t: Tag) -> u64 {
    t as u64
}

struct Router<'a> {
    topo: &'a BirrdTopology,
    full: Vec<u64>,
    target: Vec<usize>,
    failed: HashSet<(usize, Vec<Tag>)>,
    nodes: u64,
    budget: u64,
}

impl Router<'_> {
    /// Every input bit of every group still has a carrier that can reach
    /// the group's output.
    fn feasible(&self, ports: &[Tag], reach: &dyn Fn(usize) -> u64) -> bool {
        let mut covered = vec![0u64; self.full.len()];
        for (p, &t) in ports.iter().enumerate() {
            if t != 0 {
                let g = tag_group(t);
                if reach(p) & (1 << self.target[g]) != 0 {
                    covered[g] |= tag_mask(t);
                }
            }
        }
        covered.iter().zip(&self.full).all(|(c, f)| c == f)
    }

    fn stage(&mut self, i: usize, ports: Vec<Tag>, prog: &mut Vec<Vec<EggOp>>) -> bool {
        if i == self.topo.stages {
            return ports.iter().enumerate().all(|(p, &t)| {
                self.target.iter().position(|&o| o == p).is_none_or(|g| t == tag(g, self.full[g]))
            });
        }
        if self.failed.contains(&(i, ports.clone())) {
            return false;
        }
        let mut next = vec![0; self.topo.aw];
        let mut row = vec![EggOp::Pass; self.topo.aw / 2];
        let ok = self.switch(i, 0, &ports, &mut next, &mut row, prog);
        if !ok && self.nodes < self.budget {
            self.failed.insert((i, ports));
        }
        ok
    }

    fn switch(
        &mut self,
        i: usize,
        k: usize,
        ports: &[Tag],
        next: &mut Vec<Tag>,
        row: &mut Vec<EggOp>,
        prog: &mut Vec<Vec<EggOp>>,
    ) -> bool {
        self.nodes += 1;
        if self.nodes > self.budget {
            return false;
        }
        let topo = self.topo;
        if k == topo.aw / 2 {
            prog.push(row.clone());
            if self.stage(i + 1, next.clone(), prog) {
                return true;
            }
            prog.pop();
            return false;
        }
        let (l, r) = (ports[2 * k], ports[2 * k + 1]);
        let mut ops: Vec<EggOp> = vec![EggOp::Pass, EggOp::Swap];
        if l != 0 && r != 0 && tag_group(l) == tag_group(r) && tag_mask(l) & tag_mask(r) == 0 {
            ops = vec![EggOp::AddLeft, EggOp::AddRight, EggOp::Pass, EggOp::Swap];
        } else if l == r {
            ops.truncate(1);
        }
        let (dl, dr) = (topo.wiring[i][2 * k], topo.wiring[i][2 * k + 1]);
        for op in ops {
            let (a, b) = match op {
                EggOp::Pass => (l, r),
                EggOp::Swap => (r, l),
                EggOp::AddLeft => (l | tag_mask(r) as u128, r),
                EggOp::AddRight => (l, r | tag_mask(l) as u128),
            };
            next[dl] = a;
            next[dr] = b;
            row[k] = op;
            // Ports of this stage not yet switched still use this stage's
            // reach; finished ones use the next stage's.
            let feasible = {
                let mut view = vec![0; topo.aw];
                let mut where_: Vec<usize> = vec![0; topo.aw];
                let mut src_stage = vec![i; topo.aw];
                for s in 0..=k {
                    for side in 0..2 {
                        let d = topo.wiring[i][2 * s + side];
                        view[2 * s + side] = next[d];
                        where_[2 * s + side] = d;
                        src_stage[2 * s + side] = i + 1;
                    }
                }
                for p in 2 * (k + 1)..topo.aw {
                    view[p] = ports[p];
                    where_[p] = p;
                }
                self.feasible(&view, &|p| topo.reach[src_stage[p]][where_[p]])
            };
            if feasible && self.switch(i, k + 1, ports, next, row, prog) {
                return true;
            }
        }
        false
    }
}

/// Finds a switch configuration that realises `spec`.
///
/// Each half of the network has exactly one path between any input and
/// any middle port (and between any middle port and any output), so a
/// route is a choice of middle port per input. Inputs of one group that
/// share a middle port merge on the way there; fragments that still differ
/// merge in the second half. A depth-first search over switch settings
/// backs this up on narrow networks.
pub fn route(spec: &ReductionSpec, topo: &BirrdTopology) -> Result<BirrdProgram> {
    spec.validate()?;
    if spec.aw != topo.aw {
        return Err(Error::InvalidReductionSpec(format!("spec AW {} != topology AW {}", spec.aw, topo.aw)));
    }
    if let Some(p) = PathSolver::new(topo, spec).solve() {
        return Ok(p);
    }
    if topo.aw <= 8 {
        let mut ports = vec![0; topo.aw];
        let mut full = Vec::new();
        for (g, members) in spec.groups.iter().enumerate() {
            full.push(members.iter().fold(0u64, |m, &i| m | 1 << i));
            for &i in members {
                ports[i] = tag(g, 1 << i);
            }
        }
        let mut router =
            Router { topo, full, target: spec.placement.clone(), failed: HashSet::new(), nodes: 0, budget: 500_000 };
        let mut prog = Vec::new();
        if router.stage(0, ports, &mut prog) {
            return Ok(BirrdProgram { ops: prog });
        }
    }
    if topo.aw == 4 {
        if let Some(p) = exhaustive(spec, topo) {
            return Ok(p);
        }
    }
    Err(Error::Unroutable(format!("{:?} -> {:?}", spec.groups, spec.placement)))
}

/// One hop: at `stage`, the value on input `port` leaves on `side`.
#[derive(Clone, Copy)]
struct Hop {
    stage: usize,
    port: usize,
    side: usize,
}

struct PathSolver<'a> {
    topo: &'a BirrdTopology,
    spec: &'a ReductionSpec,
    half: usize,
    /// `mid_reach[i][p]`: middle ports reachable from port `p` of stage `i`.
    mid_reach: Vec<Vec<u64>>,
    /// Occupant of the link entering port `p` of stage `i` (first half):
    /// (group, middle port).
    occ1: Vec<Vec<Option<(usize, usize)>>>,
    /// Second-half link occupant: group.
    occ2: Vec<Vec<Option<usize>>>,
    /// Middle ports already claimed per group.
    mids: Vec<Vec<usize>>,
    choice: Vec<usize>,
    order: Vec<(usize, usize)>,
    nodes: u64,
}

impl<'a> PathSolver<'a> {
    fn new(topo: &'a BirrdTopology, spec: &'a ReductionSpec) -> Self {
        let half = topo.stages / 2;
        let aw = topo.aw;
        let mut mid_reach = vec![vec![0u64; aw]; half + 1];
        for p in 0..aw {
            mid_reach[half][p] = 1 << p;
        }
        for i in (0..half).rev() {
            for p in 0..aw {
                let b = p & !1;
                mid_reach[i][p] = mid_reach[i + 1][topo.wiring[i][b]] | mid_reach[i + 1][topo.wiring[i][b + 1]];
            }
        }
        let mut groups: Vec<usize> = (0..spec.groups.len()).collect();
        groups.sort_by_key(|&g| std::cmp::Reverse(spec.groups[g].len()));
        let order = groups.iter().flat_map(|&g| spec.groups[g].iter().map(move |&i| (g, i))).collect();
        PathSolver {
            topo,
            spec,
            half,
            mid_reach,
            occ1: vec![vec![None; aw]; topo.stages + 1],
            occ2: vec![vec![None; aw]; topo.stages + 1],
            mids: vec![Vec::new(); spec.groups.len()],
            choice: vec![usize::MAX; aw],
            order,
            nodes: 0,
        }
    }

    fn path(&self, from: usize, to: usize, mut port: usize, dest: usize, reach: &[Vec<u64>]) -> Option<Vec<Hop>> {
        let mut hops = Vec::with_capacity(to - from);
        for i in from..to {
            let b = port & !1;
            let side = (0..2).find(|&s| reach[i + 1 - from][self.topo.wiring[i][b + s]] & (1 << dest) != 0)?;
            hops.push(Hop { stage: i, port, side });
            port = self.topo.wiring[i][b + side];
        }
        Some(hops)
    }

    fn first_half(&self, input: usize, mid: usize) -> Option<Vec<Hop>> {
        self.path(0, self.half, input, mid, &self.mid_reach)
    }

    fn second_half(&self, mid: usize, out: usize) -> Option<Vec<Hop>> {
        self.path(self.half, self.topo.stages, mid, out, &self.topo.reach[self.half..])
    }

    fn next_port(&self, h: &Hop) -> usize {
        self.topo.wiring[h.stage][(h.port & !1) + h.side]
    }

    fn search(&mut self, k: usize) -> bool {
        if k == self.order.len() {
            return true;
        }
        self.nodes += 1;
        if self.nodes > 200_000 {
            return false;
        }
        let (g, input) = self.order[k];
        let target = self.spec.placement[g];
        let mut cands: Vec<usize> = self.mids[g].clone();
        cands.extend((0..self.topo.aw).filter(|m| !self.mids[g].contains(m)));
        for m in cands {
            if self.mid_reach[0][input] & (1 << m) == 0 {
                continue;
            }
            let Some(p1) = self.first_half(input, m) else { continue };
            if p1.iter().any(|h| self.occ1[h.stage + 1][self.next_port(h)].is_some_and(|o| o != (g, m))) {
                continue;
            }
            let fresh = !self.mids[g].contains(&m);
            let p2 = if fresh {
                let Some(p2) = self.second_half(m, target) else { continue };
                if p2.iter().any(|h| self.occ2[h.stage + 1][self.next_port(h)].is_some_and(|o| o != g)) {
                    continue;
                }
                p2
            } else {
                Vec::new()
            };
            let mut undo1 = Vec::new();
            for h in &p1 {
                let slot = &mut self.occ1[h.stage + 1][self.topo.wiring[h.stage][(h.port & !1) + h.side]];
                if slot.is_none() {
                    *slot = Some((g, m));
                    undo1.push((h.stage + 1, self.topo.wiring[h.stage][(h.port & !1) + h.side]));
                }
            }
            let mut undo2 = Vec::new();
            for h in &p2 {
                let q = self.topo.wiring[h.stage][(h.port & !1) + h.side];
                if self.occ2[h.stage + 1][q].is_none() {
                    self.occ2[h.stage + 1][q] = Some(g);
                    undo2.push((h.stage + 1, q));
                }
            }
            if fresh {
                self.mids[g].push(m);
            }
            self.choice[input] = m;
            if self.search(k + 1) {
                return true;
            }
            self.choice[input] = usize::MAX;
            if fresh {
                self.mids[g].pop();
            }
            for (s, q) in undo1 {
                self.occ1[s][q] = None;
            }
            for (s, q) in undo2 {
                self.occ2[s][q] = None;
            }
        }
        false
    }

    fn solve(mut self) -> Option<BirrdProgram> {
        if !self.search(0) {
            return None;
        }
        let topo = self.topo;
        let mut side: Vec<Vec<Option<usize>>> = vec![vec![None; topo.aw]; topo.stages];
        for &(g, input) in &self.order {
            let m = self.choice[input];
            for h in self.first_half(input, m)?.into_iter().chain(self.second_half(m, self.spec.placement[g])?) {
                side[h.stage][h.port] = Some(h.side);
            }
        }
        let ops = side
            .iter()
            .map(|row| {
                (0..topo.aw / 2)
                    .map(|k| match (row[2 * k], row[2 * k + 1]) {
                        (Some(a), Some(b)) if a == b => [EggOp::AddLeft, EggOp::AddRight][a],
                        (Some(a), _) => [EggOp::Pass, EggOp::Swap][a],
                        (None, Some(b)) => [EggOp::Swap, EggOp::Pass][b],
                        (None, None) => EggOp::Pass,
                    })
                    .collect()
            })
            .collect();
        let prog = BirrdProgram { ops };
        let probe: Vec<Wrapping<u64>> = (0..topo.aw).map(|i| Wrapping(1u64 << i)).collect();
        self.spec.check(&probe, &topo.simulate(&prog, &probe)).then_some(prog)
    }
}

/// Tries every program; only sensible at AW = 4 (4^6 programs).
pub fn exhaustive(spec: &ReductionSpec, topo: &BirrdTopology) -> Option<BirrdProgram> {
    let switches = topo.stages * topo.aw / 2;
    if switches > 12 {
        return None;
    }
    // Distinct powers of two identify which inputs reached each output.
    let probe: Vec<u64> = (0..topo.aw).map(|i| 1 << i).collect();
    let want: Vec<Option<u64>> = spec.expected(&probe);
    (0..4u64.pow(switches as u32)).map(|w| program_from_word(topo, w)).find(|p| {
        let out = topo.simulate(p, &probe);
        want.iter().zip(&out).all(|(e, o)| e.is_none_or(|e| e == *o))
    })
}

/// Program whose switch `s` (row-major) has op `(word >> 2s) & 3`.
pub fn program_from_word(topo: &BirrdTopology, word: u64) -> BirrdProgram {
    let per = topo.aw / 2;
    let ops = (0..topo.stages)
        .map(|i| (0..per).map(|k| EggOp::from_code(((word >> (2 * (i * per + k))) & 3) as u8).unwrap()).collect())
        .collect();
    BirrdProgram { ops }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reverse_bits_examples() {
        assert_eq!(reverse_bits(0b110, 3), 0b011);
        assert_eq!(reverse_bits(0b101, 3), 0b101);
        assert_eq!(reverse_bits(0b1101, 2), 0b1110);
    }

    #[test]
    fn topology_examples() {
        let t = BirrdTopology::new(8).unwrap();
        assert_eq!((t.stages, t.switches_per_stage()), (6, 4));
        assert_eq!(t.wiring[0][1], 2);
        assert_eq!(t.wiring[2][1], 4);
        let t = BirrdTopology::new(4).unwrap();
        assert_eq!((t.stages, t.switches_per_stage()), (3, 2));
        assert!(matches!(BirrdTopology::new(6), Err(Error::InvalidWidth(6))));
        assert!(matches!(BirrdTopology::new(2), Err(Error::InvalidWidth(2))));
    }

    #[test]
    fn egg_examples() {
        assert_eq!(egg_apply(EggOp::Pass, 3, 7), (3, 7));
        assert_eq!(egg_apply(EggOp::Swap, 3, 7), (7, 3));
        assert_eq!(egg_apply(EggOp::AddLeft, 3, 7), (10, 7));
        assert_eq!(egg_apply(EggOp::AddRight, 3, 7), (3, 10));
    }

    #[test]
    fn program_text_round_trip() {
        let t = BirrdTopology::new(8).unwrap();
        let p = program_from_word(&t, 0x1234_5678_9abc);
        let back: BirrdProgram = p.to_string().parse().unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn full_reduction_at_aw4() {
        let t = BirrdTopology::new(4).unwrap();
        let spec = ReductionSpec::new(4, vec![vec![0, 1, 2, 3]], vec![2]).unwrap();
        let p = route(&spec, &t).unwrap();
        assert_eq!(t.simulate(&p, &[1, 1, 1, 1])[2], 4);
        assert_eq!(t.simulate(&p, &[1, 2, 3, 4])[2], 10);
    }

    #[test]
    fn two_pair_reduction_at_aw4() {
        let t = BirrdTopology::new(4).unwrap();
        let spec = ReductionSpec::new(4, vec![vec![0, 1], vec![2, 3]], vec![3, 0]).unwrap();
        let p = route(&spec, &t).unwrap();
        let out = t.simulate(&p, &[1, 2, 30, 40]);
        assert_eq!((out[3], out[0]), (3, 70));
    }

    #[test]
    fn invalid_specs() {
        assert!(ReductionSpec::new(4, vec![vec![0, 1], vec![1]], vec![0, 1]).is_err());
        assert!(ReductionSpec::new(4, vec![vec![0], vec![1]], vec![2, 2]).is_err());
        assert!(ReductionSpec::new(4, vec![vec![]], vec![0]).is_err());
    }

    #[test]
    fn saturating_width() {
        let t = BirrdTopology::new(4).unwrap();
        let spec = ReductionSpec::new(4, vec![vec![0, 1, 2, 3]], vec![0]).unwrap();
        let p = route(&spec, &t).unwrap();
        assert_eq!(t.simulate_saturating(&p, &[100, 100, 100, 100], 8)[0], 127);
    }
}
