// SPDX-License-Identifier: Apache-2.0

//! Dataflows as loop nests over the PE array, and the mapspace a design
//! can reach.
//!
//! A [`Mapping`] has four loop groups. `outer` loops run over time at the
//! stationary buffer, `cols` and `rows` are unrolled across the array, and
//! `local` loops run inside a PE over its weight registers. The per-dimension
//! index of one MAC is
//!
//! ```text
//! ((outer * col_f + col) * row_f + row) * local_f + local
//! ```
//!
//! Outer factors are always `ceil(extent / (col_f * row_f * local_f))`, so
//! edge tiles fall out of range and those PEs idle.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arch::ArchSpec;
use crate::dims::Dim;
use crate::error::{Error, Result};
use crate::workload::LayerShape;

/// Which of tiling, ordering, parallelism and shape a design can change
/// at run time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Flexibility {
    pub t: bool,
    pub o: bool,
    pub p: bool,
    pub s: bool,
}

impl Flexibility {
    pub const ALL: Flexibility = Flexibility { t: true, o: true, p: true, s: true };
    pub const NONE: Flexibility = Flexibility { t: false, o: false, p: false, s: false };

    pub fn is_subset(self, other: Flexibility) -> bool {
        (!self.t || other.t) && (!self.o || other.o) && (!self.p || other.p) && (!self.s || other.s)
    }
}

impl fmt::Display for Flexibility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        for (on, c) in [(self.t, 'T'), (self.o, 'O'), (self.p, 'P'), (self.s, 'S')] {
            if on {
                s.push(c);
            }
        }
        if s.is_empty() {
            s.push('-');
        }
        f.write_str(&s)
    }
}

impl FromStr for Flexibility {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let mut flex = Flexibility::NONE;
        for c in s.trim().chars() {
            match c.to_ascii_uppercase() {
                'T' => flex.t = true,
                'O' => flex.o = true,
                'P' => flex.p = true,
                'S' => flex.s = true,
                '-' => {}
                _ => return Err(Error::Config(format!("unknown flexibility letter '{c}' in '{s}'"))),
            }
        }
        Ok(flex)
    }
}

impl From<Flexibility> for String {
    fn from(f: Flexibility) -> String {
        f.to_string()
    }
}

impl TryFrom<String> for Flexibility {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

pub type Loop = (Dim, u64);

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Mapping {
    /// Temporal loops at the stationary buffer, outermost first.
    pub outer: Vec<Loop>,
    /// Column unrolling, slowest-varying first.
    pub cols: Vec<Loop>,
    pub rows: Vec<Loop>,
    /// Temporal loops inside a PE, outermost first. Reduction dims only.
    pub local: Vec<Loop>,
}

/// Per-dimension factors of a mapping, indexed by [`Dim::index`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Factors {
    pub outer: [u64; 7],
    pub col: [u64; 7],
    pub row: [u64; 7],
    pub local: [u64; 7],
}

fn factor_array(loops: &[Loop]) -> [u64; 7] {
    let mut f = [1; 7];
    for &(d, n) in loops {
        f[d.index()] *= n;
    }
    f
}

fn product(loops: &[Loop]) -> u64 {
    loops.iter().map(|l| l.1).product()
}

/// Mixed-radix digits of `index` over `loops` (first slowest), accumulated
/// per dimension.
fn digits(loops: &[Loop], mut index: u64) -> [u64; 7] {
    let mut out = [0; 7];
    let mut scale = [1u64; 7];
    for &(d, n) in loops.iter().rev() {
        let i = d.index();
        out[i] += (index % n) * scale[i];
        scale[i] *= n;
        index /= n;
    }
    out
}

/// Where a loop is bound.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Binding {
    TemporalAtBuffer(String),
    SpatialAcrossColumns,
    SpatialAcrossRows,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Level {
    pub dim: Dim,
    pub tile: u64,
    pub binding: Binding,
}

impl Mapping {
    /// Builds a mapping whose outer factors cover `shape`, with the outer
    /// loops in `order` (dims missing from `order` go innermost).
    pub fn new(shape: &LayerShape, order: &[Dim], cols: Vec<Loop>, rows: Vec<Loop>, local: Vec<Loop>) -> Self {
        let (cf, rf, lf) = (factor_array(&cols), factor_array(&rows), factor_array(&local));
        let outer_f = |d: Dim| {
            let i = d.index();
            shape.extent(d).div_ceil(cf[i] * rf[i] * lf[i])
        };
        let mut outer: Vec<Loop> = Vec::new();
        for &d in order.iter().chain(Dim::ALL.iter()) {
            if !outer.iter().any(|l| l.0 == d) && outer_f(d) > 1 {
                outer.push((d, outer_f(d)));
            }
        }
        Mapping { outer, cols, rows, local }
    }

    pub fn factors(&self) -> Factors {
        Factors {
            outer: factor_array(&self.outer),
            col: factor_array(&self.cols),
            row: factor_array(&self.rows),
            local: factor_array(&self.local),
        }
    }

    pub fn cols_used(&self) -> u64 {
        product(&self.cols)
    }

    pub fn rows_used(&self) -> u64 {
        product(&self.rows)
    }

    /// MACs a PE performs per step before handing a partial sum over.
    pub fn local_len(&self) -> u64 {
        product(&self.local)
    }

    /// Number of outer iterations.
    pub fn steps(&self) -> u64 {
        product(&self.outer)
    }

    pub fn col_digits(&self, col: u64) -> [u64; 7] {
        digits(&self.cols, col)
    }

    pub fn row_digits(&self, row: u64) -> [u64; 7] {
        digits(&self.rows, row)
    }

    pub fn local_digits(&self, l: u64) -> [u64; 7] {
        digits(&self.local, l)
    }

    pub fn outer_digits(&self, step: u64) -> [u64; 7] {
        digits(&self.outer, step)
    }

    /// Loop indices `[N, M, C, P, Q, R, S]` of one MAC.
    #[inline]
    pub fn index(f: &Factors, outer: &[u64; 7], col: &[u64; 7], row: &[u64; 7], local: &[u64; 7]) -> [u64; 7] {
        let mut idx = [0; 7];
        for i in 0..7 {
            idx[i] = ((outer[i] * f.col[i] + col[i]) * f.row[i] + row[i]) * f.local[i] + local[i];
        }
        idx
    }

    /// Loops in `(dim, tile, binding)` form, outermost first.
    pub fn levels(&self) -> Vec<Level> {
        let level = |b: Binding| move |&(dim, tile): &Loop| Level { dim, tile, binding: b.clone() };
        self.outer
            .iter()
            .map(level(Binding::TemporalAtBuffer("StaB".into())))
            .chain(self.cols.iter().map(level(Binding::SpatialAcrossColumns)))
            .chain(self.rows.iter().map(level(Binding::SpatialAcrossRows)))
            .chain(self.local.iter().map(level(Binding::TemporalAtBuffer("PE".into()))))
            .collect()
    }

    /// Outer loops from the outermost down to the innermost loop that
    /// changes the weights; everything below reuses the loaded weights.
    pub fn weight_tiles(&self) -> u64 {
        let last = self.outer.iter().rposition(|l| l.0.indexes_weights());
        last.map_or(1, |k| product(&self.outer[..=k]))
    }

    pub fn validate(&self, shape: &LayerShape, arch: &ArchSpec) -> Result<()> {
        let bad = |m: String| Err(Error::IllegalMapping(format!("{self}: {m}")));
        if self.cols_used() > arch.aw as u64 {
            return bad(format!("{} columns exceed AW={}", self.cols_used(), arch.aw));
        }
        if self.rows_used() > arch.ah as u64 {
            return bad(format!("{} rows exceed AH={}", self.rows_used(), arch.ah));
        }
        if let Some(l) = self.local.iter().find(|l| !l.0.is_reduction()) {
            return bad(format!("local loop over {} is not a reduction", l.0));
        }
        if self.local_len() > arch.pe_registers {
            return bad(format!("{} local weights exceed {} registers", self.local_len(), arch.pe_registers));
        }
        let all = [&self.outer, &self.cols, &self.rows, &self.local];
        if all.iter().any(|g| g.iter().any(|l| l.1 == 0)) {
            return bad("zero factor".into());
        }
        for (i, g) in all.iter().enumerate() {
            for (k, l) in g.iter().enumerate() {
                if (i == 0 || i == 3) && g[..k].iter().any(|e| e.0 == l.0) {
                    return bad(format!("{} repeated", l.0));
                }
            }
        }
        let f = self.factors();
        for d in Dim::ALL {
            let i = d.index();
            let inner = f.col[i] * f.row[i] * f.local[i];
            if f.outer[i] != shape.extent(d).div_ceil(inner) {
                return bad(format!("{d} factors do not cover extent {}", shape.extent(d)));
            }
        }
        Ok(())
    }
}

fn write_loops(f: &mut fmt::Formatter<'_>, name: &str, loops: &[Loop]) -> fmt::Result {
    write!(f, "{name}:")?;
    for (k, (d, n)) in loops.iter().enumerate() {
        if k > 0 {
            f.write_str(",")?;
        }
        write!(f, "{d}{n}")?;
    }
    Ok(())
}

/// `outer:M2,P3|cols:M2,C2|rows:M4|local:R2,S2`.
impl fmt::Display for Mapping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_loops(f, "outer", &self.outer)?;
        f.write_str("|")?;
        write_loops(f, "cols", &self.cols)?;
        f.write_str("|")?;
        write_loops(f, "rows", &self.rows)?;
        f.write_str("|")?;
        write_loops(f, "local", &self.local)
    }
}

fn parse_loops(text: &str, part: &str) -> Result<Vec<Loop>> {
    let grammar = |m: &str| Error::Grammar { text: text.to_string(), message: m.to_string() };
    part.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            let mut chars = t.chars();
            let d = chars.next().and_then(Dim::from_letter).ok_or_else(|| grammar("expected a loop dimension"))?;
            let n = chars.as_str().parse().map_err(|_| grammar("expected a loop factor"))?;
            Ok((d, n))
        })
        .collect()
}

impl FromStr for Mapping {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let mut m = Mapping { outer: vec![], cols: vec![], rows: vec![], local: vec![] };
        for part in s.split('|') {
            let (name, body) = part
                .split_once(':')
                .ok_or_else(|| Error::Grammar { text: s.to_string(), message: "expected name:loops".into() })?;
            let loops = parse_loops(s, body)?;
            match name.trim() {
                "outer" => m.outer = loops,
                "cols" => m.cols = loops,
                "rows" => m.rows = loops,
                "local" => m.local = loops,
                other => {
                    return Err(Error::Grammar { text: s.to_string(), message: format!("unknown loop group '{other}'") })
                }
            }
        }
        Ok(m)
    }
}

impl From<Mapping> for String {
    fn from(m: Mapping) -> String {
        m.to_string()
    }
}

impl TryFrom<String> for Mapping {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// `(cols_used, rows_used, outputs per row emission)`.
pub fn spatial_footprint(m: &Mapping) -> (u64, u64, u64) {
    let reduce: u64 = m.cols.iter().filter(|l| l.0.is_reduction()).map(|l| l.1).product();
    (m.cols_used(), m.rows_used(), m.cols_used() / reduce)
}

/// What a design lets the mapper choose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapspaceConstraint {
    pub flexibility: Flexibility,
    /// Dims allowed across columns when parallelism is fixed.
    #[serde(default)]
    pub col_dims: Vec<Dim>,
    #[serde(default)]
    pub row_dims: Vec<Dim>,
    /// Outer loop order (outermost first) when ordering is fixed.
    #[serde(default = "default_order")]
    pub loop_order: Vec<Dim>,
    /// Exact loop groups, overriding the choices above.
    #[serde(default)]
    pub pinned_cols: Option<Vec<Loop>>,
    #[serde(default)]
    pub pinned_rows: Option<Vec<Loop>>,
    #[serde(default)]
    pub pinned_local: Option<Vec<Loop>>,
    /// Most distinct oActs one row may emit per cycle.
    #[serde(default)]
    pub write_port_cap: Option<u64>,
}

fn default_order() -> Vec<Dim> {
    vec![Dim::M, Dim::C, Dim::R, Dim::S, Dim::N, Dim::P, Dim::Q]
}

impl MapspaceConstraint {
    pub fn new(flexibility: Flexibility) -> Self {
        MapspaceConstraint {
            flexibility,
            col_dims: Vec::new(),
            row_dims: Vec::new(),
            loop_order: default_order(),
            pinned_cols: None,
            pinned_rows: None,
            pinned_local: None,
            write_port_cap: None,
        }
    }

    pub fn with_spatial(mut self, cols: &[Dim], rows: &[Dim]) -> Self {
        self.col_dims = cols.to_vec();
        self.row_dims = rows.to_vec();
        self
    }

    pub fn pinned(mut self, cols: Vec<Loop>, rows: Vec<Loop>, local: Option<Vec<Loop>>) -> Self {
        self.pinned_cols = Some(cols);
        self.pinned_rows = Some(rows);
        self.pinned_local = local;
        self
    }
}

/// Candidate factors for a loop of `extent` on an axis of size `cap`:
/// divisors, powers of two and the clipped extent, all in `2..=min(cap, extent)`.
pub fn factor_candidates(extent: u64, cap: u64) -> Vec<u64> {
    let top = extent.min(cap);
    let mut out: Vec<u64> = (2..=top).filter(|f| extent.is_multiple_of(*f) || f.is_power_of_two()).collect();
    if top >= 2 && !out.contains(&top) {
        out.push(top);
    }
    out
}

// Spatial dims are listed with non-reduction dims first so that columns
// reducing into one output are adjacent.
const SPATIAL_ORDER: [Dim; 7] = [Dim::N, Dim::M, Dim::P, Dim::Q, Dim::C, Dim::R, Dim::S];

fn spatial_options(shape: &LayerShape, cap: u64, dims: &[Dim], two: bool, fixed_factor: bool) -> Vec<Vec<Loop>> {
    let dims: Vec<Dim> = SPATIAL_ORDER.iter().copied().filter(|d| dims.contains(d) && shape.extent(*d) > 1).collect();
    let cands = |d: Dim| -> Vec<u64> {
        if fixed_factor {
            vec![shape.extent(d).min(cap)]
        } else {
            factor_candidates(shape.extent(d), cap)
        }
    };
    let mut out = vec![Vec::new()];
    for (k, &a) in dims.iter().enumerate() {
        for fa in cands(a) {
            out.push(vec![(a, fa)]);
            if two {
                for &b in &dims[k + 1..] {
                    for fb in cands(b) {
                        if fa * fb <= cap {
                            out.push(vec![(a, fa), (b, fb)]);
                        }
                    }
                }
            }
        }
    }
    out
}

fn local_options(shape: &LayerShape, cap: u64, tiling: bool) -> Vec<Vec<Loop>> {
    let red = [Dim::C, Dim::R, Dim::S];
    if !tiling {
        let full: Vec<Loop> =
            [Dim::R, Dim::S].iter().filter(|d| shape.extent(**d) > 1).map(|&d| (d, shape.extent(d))).collect();
        return if product(&full) <= cap { vec![full] } else { vec![] };
    }
    let mut out: Vec<Vec<Loop>> = vec![Vec::new()];
    for d in red {
        if shape.extent(d) <= 1 {
            continue;
        }
        let mut next = out.clone();
        for base in &out {
            for f in factor_candidates(shape.extent(d), cap) {
                if product(base) * f <= cap {
                    let mut l = base.clone();
                    l.push((d, f));
                    next.push(l);
                }
            }
        }
        out = next;
    }
    out
}

/// Outer-loop order classes. Cost only depends on which of N, P, Q sit
/// below the innermost weight-changing loop, so each class is one subset;
/// `order_for` turns it into a concrete order.
fn order_for(inner: u8) -> Vec<Dim> {
    let irr = [Dim::N, Dim::P, Dim::Q];
    let mut v: Vec<Dim> = irr.iter().enumerate().filter(|(k, _)| inner & (1 << k) == 0).map(|(_, d)| *d).collect();
    v.extend([Dim::M, Dim::C, Dim::R, Dim::S]);
    v.extend(irr.iter().enumerate().filter(|(k, _)| inner & (1 << k) != 0).map(|(_, d)| *d));
    v
}

/// Class of an arbitrary order: the weight-irrelevant dims after the last
/// weight-relevant one.
fn class_of(order: &[Dim]) -> u8 {
    let irr = [Dim::N, Dim::P, Dim::Q];
    let last = order.iter().rposition(|d| d.indexes_weights()).map_or(0, |k| k + 1);
    let mut class = 0;
    for (k, d) in irr.iter().enumerate() {
        if order[last..].contains(d) || !order.contains(d) {
            class |= 1 << k;
        }
    }
    class
}

/// Index into a product of choice lists.
#[derive(Debug, Clone)]
pub struct Mapspace {
    shape: LayerShape,
    cols: Vec<Vec<Loop>>,
    rows: Vec<Vec<Loop>>,
    local: Vec<Vec<Loop>>,
    classes: Vec<u8>,
    /// Leading entries of `cols`, `rows` and `local` that fill their
    /// resource well and divide their extents evenly; sampled first.
    cols_full: usize,
    rows_full: usize,
    local_full: usize,
    write_cap: u64,
}

/// Useful fraction of the iterations `loops` issue on their own.
fn edge_efficiency(shape: &LayerShape, loops: &[Loop]) -> f64 {
    let mut f = [1u64; 7];
    for &(d, n) in loops {
        f[d.index()] *= n;
    }
    Dim::ALL
        .iter()
        .map(|d| {
            let (e, n) = (shape.extent(*d), f[d.index()]);
            e as f64 / (e.div_ceil(n) * n) as f64
        })
        .product()
}

/// Moves options scoring within a quarter of the best to the front and
/// returns how many there are.
fn split_full(opts: &mut [Vec<Loop>], score: impl Fn(&[Loop]) -> f64) -> usize {
    let mut scored: Vec<(f64, Vec<Loop>)> = opts.iter().map(|o| (score(o), o.clone())).collect();
    let best = scored.iter().map(|x| x.0).fold(0.0, f64::max);
    // Stable: ties keep generation order.
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    for (slot, (_, o)) in opts.iter_mut().zip(scored.iter()) {
        *slot = o.clone();
    }
    scored.iter().filter(|x| x.0 >= 0.75 * best).count()
}

impl Mapspace {
    pub fn new(shape: &LayerShape, arch: &ArchSpec, c: &MapspaceConstraint) -> Result<Self> {
        let flex = c.flexibility;
        let all = Dim::ALL.to_vec();
        let (aw, ah) = (arch.aw as u64, arch.ah as u64);
        let mut cols = match &c.pinned_cols {
            Some(p) => vec![p.clone()],
            None => spatial_options(shape, aw, if flex.p { &all } else { &c.col_dims }, flex.s, !flex.s),
        };
        let mut rows = match &c.pinned_rows {
            Some(p) => vec![p.clone()],
            None => spatial_options(shape, ah, if flex.p { &all } else { &c.row_dims }, flex.s, !flex.s),
        };
        let mut local = match &c.pinned_local {
            Some(p) => vec![p.clone()],
            None => local_options(shape, arch.pe_registers, flex.t),
        };
        let classes = if flex.o { (0..8).collect() } else { vec![class_of(&c.loop_order)] };
        let cols_full = split_full(&mut cols, |o| product(o) as f64 * edge_efficiency(shape, o));
        let rows_full = split_full(&mut rows, |o| product(o) as f64 * edge_efficiency(shape, o));
        // A local loop shorter than the array height leaves rows idle.
        let local_full = split_full(&mut local, |o| {
            product(o).min(ah) as f64 * edge_efficiency(shape, o)
        });
        let space = Mapspace {
            shape: shape.clone(),
            cols,
            rows,
            local,
            classes,
            cols_full,
            rows_full,
            local_full,
            write_cap: c.write_port_cap.unwrap_or(arch.aw as u64),
        };
        if space.is_empty() {
            return Err(Error::EmptyMapspace(format!("no local tiling fits for {:?}", shape)));
        }
        Ok(space)
    }

    pub fn len(&self) -> u64 {
        (self.cols.len() * self.rows.len() * self.local.len() * self.classes.len()) as u64
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Blocks of the index space in sampling order, well-filled first.
    fn blocks(&self) -> Vec<[std::ops::Range<usize>; 3]> {
        let split = |full: usize, n: usize| [0..full, full..n];
        let c = split(self.cols_full, self.cols.len());
        let r = split(self.rows_full, self.rows.len());
        let l = split(self.local_full, self.local.len());
        let mut out = Vec::new();
        for tier in 0..4 {
            for (i, j, k) in [(0, 0, 0), (0, 0, 1), (0, 1, 0), (1, 0, 0), (0, 1, 1), (1, 0, 1), (1, 1, 0), (1, 1, 1)] {
                if i + j + k == tier {
                    out.push([c[i].clone(), r[j].clone(), l[k].clone()]);
                }
            }
        }
        out
    }

    /// The mapping at position `i`, or `None` when that point is pruned
    /// (an order class that differs from a canonical one only in trivial
    /// loops, or an illegal combination).
    pub fn get(&self, i: u64, arch: &ArchSpec) -> Option<Mapping> {
        let nl = self.local.len() as u64;
        let nk = self.classes.len() as u64;
        let mut rest = i;
        let class = self.classes[(rest % nk) as usize];
        rest /= nk;
        let local = &self.local[(rest % nl) as usize];
        rest /= nl;
        let nr = self.rows.len() as u64;
        let rows = &self.rows[(rest % nr) as usize];
        rest /= nr;
        let cols = self.cols.get(rest as usize)?;
        let m = Mapping::new(&self.shape, &order_for(class), cols.clone(), rows.clone(), local.clone());
        // Canonical class: only dims that actually loop, and none at all
        // when no weight-changing loop is left outside.
        let looping: u8 = [Dim::N, Dim::P, Dim::Q]
            .iter()
            .enumerate()
            .filter(|(_, d)| m.outer.iter().any(|l| l.0 == **d))
            .fold(0, |acc, (k, _)| acc | 1 << k);
        let any_weight = m.outer.iter().any(|l| l.0.indexes_weights());
        if self.classes.len() > 1 && (class & !looping != 0 || (!any_weight && class != 0)) {
            return None;
        }
        if spatial_footprint(&m).2 > self.write_cap {
            return None;
        }
        m.validate(&self.shape, arch).ok()?;
        Some(m)
    }

    /// Legal mappings in a seeded order that visits every point once.
    /// Points in the well-filled block come first.
    pub fn sample<'a>(&'a self, arch: &'a ArchSpec, seed: u64) -> impl Iterator<Item = Mapping> + 'a {
        let nk = self.classes.len() as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let blocks: Vec<_> = self
            .blocks()
            .into_iter()
            .map(|b| {
                let total = b.iter().map(|r| r.len() as u64).product::<u64>() * nk;
                let (a, k) = coprime_step(total, &mut rng);
                (b, total, a, k)
            })
            .collect();
        let (nr, nl) = (self.rows.len() as u64, self.local.len() as u64);
        blocks.into_iter().flat_map(move |([c, r, l], total, a, b)| {
            (0..total).filter_map(move |k| {
                let mut j = ((a as u128 * k as u128 + b as u128) % total as u128) as u64;
                let ki = j % nk;
                j /= nk;
                let li = l.start as u64 + j % l.len() as u64;
                j /= l.len() as u64;
                let ri = r.start as u64 + j % r.len() as u64;
                let ci = c.start as u64 + j / r.len() as u64;
                self.get(((ci * nr + ri) * nl + li) * nk + ki, arch)
            })
        })
    }
}

/// `(a, b)` with `gcd(a, n) = 1`, so `k -> (a k + b) mod n` permutes `0..n`.
fn coprime_step(n: u64, rng: &mut ChaCha8Rng) -> (u64, u64) {
    if n <= 1 {
        return (1, 0);
    }
    let gcd = |mut x: u64, mut y: u64| {
        while y != 0 {
            (x, y) = (y, x % y);
        }
        x
    };
    let mut a = rng.gen_range(1..n);
    while gcd(a, n) != 1 {
        a = rng.gen_range(1..n);
    }
    (a, rng.gen_range(0..n))
}

/// Up to `budget` legal mappings in seeded order.
pub fn enumerate_mapspace(
    shape: &LayerShape,
    arch: &ArchSpec,
    constraint: &MapspaceConstraint,
    budget: usize,
    seed: u64,
) -> Result<Vec<Mapping>> {
    let space = Mapspace::new(shape, arch, constraint)?;
    let out: Vec<Mapping> = space.sample(arch, seed).take(budget.max(1)).collect();
    if out.is_empty() {
        return Err(Error::EmptyMapspace(format!("constraints admit no mapping for {:?}", shape)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::derive_output_extents;

    fn shape(n: u64, m: u64, c: u64, h: u64, w: u64, r: u64, s: u64) -> LayerShape {
        derive_output_extents(&LayerShape::conv(n, m, c, h, w, r, s)).unwrap()
    }

    #[test]
    fn flexibility_text() {
        let f: Flexibility = "TOPS".parse().unwrap();
        assert_eq!(f, Flexibility::ALL);
        assert_eq!("TS".parse::<Flexibility>().unwrap().to_string(), "TS");
        assert!("TX".parse::<Flexibility>().is_err());
        assert!(Flexibility { t: true, ..Flexibility::NONE }.is_subset(f));
    }

    #[test]
    fn mapping_text_round_trip() {
        let m: Mapping = "outer:M2,P3,Q3|cols:M2,C2|rows:M4|local:R2,S2".parse().unwrap();
        assert_eq!(m.to_string(), "outer:M2,P3,Q3|cols:M2,C2|rows:M4|local:R2,S2");
        assert!("outer:Z2".parse::<Mapping>().is_err());
    }

    #[test]
    fn footprints() {
        let steady: Mapping = "outer:|cols:M2,C2|rows:M4|local:R2,S2".parse().unwrap();
        assert_eq!(spatial_footprint(&steady), (4, 4, 2));
        let single: Mapping = "outer:|cols:|rows:|local:".parse().unwrap();
        assert_eq!(spatial_footprint(&single), (1, 1, 1));
        let walkthrough: Mapping = "outer:P3,Q3|cols:C4|rows:M4|local:R2,S2".parse().unwrap();
        assert_eq!(spatial_footprint(&walkthrough).2, 1);
    }

    #[test]
    fn trivial_layer_has_one_mapping() {
        let s = shape(1, 1, 1, 1, 1, 1, 1);
        let arch = ArchSpec::feather(4, 4);
        let all = enumerate_mapspace(&s, &arch, &MapspaceConstraint::new(Flexibility::ALL), 1000, 1).unwrap();
        assert_eq!(all.len(), 1);
    }

    #[test]
    fn pinned_singleton() {
        let s = shape(1, 4, 4, 4, 4, 1, 1);
        let arch = ArchSpec::feather(4, 4);
        let c = MapspaceConstraint::new(Flexibility::NONE).pinned(vec![(Dim::C, 4)], vec![(Dim::M, 4)], None);
        let all = enumerate_mapspace(&s, &arch, &c, 1000, 1).unwrap();
        assert_eq!(all.len(), 1);
        assert_eq!(all[0].cols, vec![(Dim::C, 4)]);
    }

    #[test]
    fn oversized_spatial_tile_rejected() {
        let s = shape(1, 4, 8, 4, 4, 1, 1);
        let arch = ArchSpec::feather(4, 4);
        let c = MapspaceConstraint::new(Flexibility::NONE).pinned(vec![(Dim::C, 8)], vec![], None);
        assert!(matches!(enumerate_mapspace(&s, &arch, &c, 10, 1), Err(Error::EmptyMapspace(_))));
    }

    #[test]
    fn weight_tiles_follow_order() {
        let m: Mapping = "outer:P2,M2,Q3|cols:|rows:|local:".parse().unwrap();
        assert_eq!(m.weight_tiles(), 4);
        assert_eq!(class_of(&[Dim::P, Dim::M, Dim::Q]), 0b101);
    }
}
