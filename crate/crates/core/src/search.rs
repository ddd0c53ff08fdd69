// SPDX-License-Identifier: Apache-2.0

//! Per-layer (mapping, layout) co-search minimising EDP.
//!
//! Mapping samples are drawn in a fixed order and evaluated in chunks of
//! [`CHUNK`]. Each chunk is split across the worker pool against the best
//! candidate known before the chunk, and the chunk results are merged in
//! sample order, so the outcome does not depend on the worker count.

use std::cmp::Ordering;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arch::ArchSpec;
use crate::cost::{handoff, reorder_charge, CostOptions, CostReport, MappingProfile, ReorderCharge};
use crate::error::{Error, Result};
use crate::layout::{fixtures, LayoutDescriptor, Placement, ReorderRegime};
use crate::mapping::{Mapping, MapspaceConstraint, Mapspace};
use crate::workload::{LayerKind, LayerShape, ModelSpec};

/// Mapping samples evaluated between two merges.
pub const CHUNK: usize = 64;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Layout texts; empty means the shipped space for the layer kind.
    pub layout_space: Vec<String>,
    /// Mapping samples per layer (each is paired with every layout).
    pub mapping_budget: usize,
    pub seed: u64,
    /// Stop after this many consecutive samples that set no new best in
    /// any row or column of the layout-pair table.
    pub victory: usize,
    /// 0 uses the global pool.
    pub workers: usize,
    /// Overrides the arch's regime.
    pub regime: Option<ReorderRegime>,
    /// Restrict the model to the `k` layouts most often picked by an
    /// unrestricted pass.
    pub top_k_layout: Option<usize>,
    pub constraint: MapspaceConstraint,
    pub cost: CostOptions,
    /// Per-layer bests are saved here after every layer and reloaded on
    /// the next run with the same config.
    pub checkpoint: Option<PathBuf>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            layout_space: Vec::new(),
            mapping_budget: 6000,
            seed: 0,
            victory: 2000,
            workers: 0,
            regime: None,
            top_k_layout: None,
            constraint: MapspaceConstraint::new(crate::mapping::Flexibility::ALL),
            cost: CostOptions::default(),
            checkpoint: None,
        }
    }
}

impl SearchConfig {
    pub fn layouts(&self, kind: LayerKind) -> Result<Vec<LayoutDescriptor>> {
        if self.layout_space.is_empty() {
            return Ok(fixtures::space_for(kind));
        }
        // A space may list conv and GEMM layouts side by side; keep the ones
        // of this kind but reject texts that fit neither.
        let mut out = Vec::new();
        for t in &self.layout_space {
            match LayoutDescriptor::parse(t, kind) {
                Ok(l) => out.push(l),
                Err(e) => {
                    let other = match kind {
                        LayerKind::Conv => LayerKind::Gemm,
                        LayerKind::Gemm => LayerKind::Conv,
                    };
                    if LayoutDescriptor::parse(t, other).is_err() {
                        return Err(e);
                    }
                }
            }
        }
        if out.is_empty() {
            return Err(Error::Config(format!("layout space has no {kind:?} layouts")));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub mapping: Mapping,
    pub in_layout: LayoutDescriptor,
    pub out_layout: LayoutDescriptor,
    pub report: CostReport,
}

impl Candidate {
    /// EDP, then cycles, then energy, then the mapping and layout texts.
    pub fn better_than(&self, other: &Candidate) -> bool {
        let a = &self.report;
        let b = &other.report;
        let ord = a
            .edp
            .total_cmp(&b.edp)
            .then(a.cycles.cmp(&b.cycles))
            .then(a.energy.total_cmp(&b.energy))
            .then_with(|| self.mapping.to_string().cmp(&other.mapping.to_string()))
            .then_with(|| self.in_layout.text().cmp(other.in_layout.text()))
            .then_with(|| self.out_layout.text().cmp(other.out_layout.text()));
        ord == Ordering::Less
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerResult {
    pub label: String,
    #[serde(flatten)]
    pub best: Candidate,
    /// Mapping samples evaluated.
    pub evaluated: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchResult {
    pub model: String,
    pub regime: ReorderRegime,
    /// In model order.
    pub layers: Vec<LayerResult>,
    /// `(label, error)` for layers without a legal candidate.
    pub failures: Vec<(String, String)>,
    pub geomean_cycles: f64,
    pub geomean_pj_per_compute: f64,
}

pub fn geomean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for x in xs {
        s += x.ln();
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        (s / n as f64).exp()
    }
}

/// Best candidate found for every (input layout, output layout) pair of
/// one layer shape. Entry `i * n + j` pairs `layouts[i]` with
/// `layouts[j]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerTable {
    pub layouts: Vec<LayoutDescriptor>,
    pub best: Vec<Option<Candidate>>,
    /// Mapping samples evaluated.
    pub evaluated: usize,
}

impl LayerTable {
    pub fn get(&self, i: usize, j: usize) -> Option<&Candidate> {
        self.best[i * self.layouts.len() + j].as_ref()
    }

    /// Best entry overall, or with the output layout fixed.
    pub fn best_to(&self, out: Option<&LayoutDescriptor>) -> Option<&Candidate> {
        self.best
            .iter()
            .flatten()
            .filter(|c| out.is_none_or(|o| c.out_layout == *o))
            .fold(None, |acc: Option<&Candidate>, c| match acc {
                Some(a) if !c.better_than(a) => Some(a),
                _ => Some(c),
            })
    }
}

struct LayerSearch<'a> {
    shape: &'a LayerShape,
    arch: &'a ArchSpec,
    config: &'a SearchConfig,
    layouts: Vec<LayoutDescriptor>,
    placements: Vec<Placement>,
    /// Pairs the regime admits.
    legal: Vec<bool>,
}

impl LayerSearch<'_> {
    /// Candidates of one mapping that beat the current entry of their pair.
    fn evaluate(&self, m: &Mapping, table: &[Option<Candidate>]) -> Result<Vec<(usize, Candidate)>> {
        let arch = self.arch;
        let n = self.layouts.len();
        let profile = match MappingProfile::new(self.shape, m, arch, self.config.cost) {
            Ok(p) => p,
            Err(Error::IllegalMapping(_)) => return Ok(Vec::new()),
            Err(e) => return Err(e),
        };
        let (lc, le) = profile.lower_bound()?;
        let lb = lc * le;
        let beats_bound = |k: usize| table[k].as_ref().is_none_or(|b| lb <= b.report.edp);
        if !(0..n * n).any(|k| self.legal[k] && beats_bound(k)) {
            return Ok(Vec::new());
        }
        let profile = profile.sampled();
        let mut writes: Vec<Option<Option<f64>>> = vec![None; n];
        let mut out = Vec::new();
        for (i, in_l) in self.layouts.iter().enumerate() {
            let mut read = None;
            for (j, out_l) in self.layouts.iter().enumerate() {
                let k = i * n + j;
                if !self.legal[k] || !beats_bound(k) {
                    continue;
                }
                let (written, charged) = handoff(arch, in_l, out_l)?;
                let w = if written == out_l { j } else { i };
                if writes[w].is_none() {
                    writes[w] = Some(match profile.write(&self.out_placement(w)?) {
                        Ok(v) => Some(v),
                        Err(Error::WritePortOverflow { .. }) => None,
                        Err(e) => return Err(e),
                    });
                }
                let Some(Some(write)) = writes[w] else { continue };
                let read = *read.get_or_insert_with(|| profile.read(&self.placements[i]));
                let mut charge = ReorderCharge::default();
                if charged {
                    let base = profile.report(read, write, charge)?;
                    let bytes = self.shape.output_elements() * arch.stab.word_bytes;
                    charge = reorder_charge(arch.reorder_regime, bytes, base.cycles, arch)?;
                }
                let c = Candidate {
                    mapping: m.clone(),
                    in_layout: in_l.clone(),
                    out_layout: out_l.clone(),
                    report: profile.report(read, write, charge)?,
                };
                if table[k].as_ref().is_none_or(|b| c.better_than(b)) {
                    out.push((k, c));
                }
            }
        }
        Ok(out)
    }

    fn out_placement(&self, j: usize) -> Result<Placement> {
        self.layouts[j].place(self.shape.output_extents(), &self.arch.stab)
    }

    fn run(&self) -> Result<LayerTable> {
        let arch = self.arch;
        let n = self.layouts.len();
        let space = Mapspace::new(self.shape, arch, &self.config.constraint)?;
        let mut samples = space.sample(arch, self.config.seed).take(self.config.mapping_budget);
        let mut table: Vec<Option<Candidate>> = vec![None; n * n];
        let (mut evaluated, mut stale) = (0usize, 0usize);
        'outer: loop {
            let chunk: Vec<Mapping> = samples.by_ref().take(CHUNK).collect();
            if chunk.is_empty() {
                break;
            }
            let snapshot = table.clone();
            let results: Vec<Result<Vec<(usize, Candidate)>>> =
                chunk.par_iter().map(|m| self.evaluate(m, &snapshot)).collect();
            for r in results {
                evaluated += 1;
                let mut improved = false;
                for (k, c) in r? {
                    if table[k].as_ref().is_none_or(|b| c.better_than(b)) {
                        // Only a new best per input or output layout can change the chain.
                        let (i, j) = (k / n, k % n);
                        let row = (0..n).filter_map(|x| table[i * n + x].as_ref()).all(|b| c.better_than(b));
                        let col = (0..n).filter_map(|x| table[x * n + j].as_ref()).all(|b| c.better_than(b));
                        improved |= row || col;
                        table[k] = Some(c);
                    }
                }
                if improved {
                    stale = 0;
                } else {
                    stale += 1;
                    if stale >= self.config.victory {
                        break 'outer;
                    }
                }
            }
        }
        if table.iter().all(Option::is_none) {
            return Err(Error::EmptyMapspace(format!(
                "no legal (mapping, layout) pair for {:?} layer",
                self.shape.kind
            )));
        }
        Ok(LayerTable { layouts: self.layouts.clone(), best: table, evaluated })
    }
}

fn with_regime(arch: &ArchSpec, config: &SearchConfig) -> ArchSpec {
    let mut a = arch.clone();
    if let Some(r) = config.regime {
        a.reorder_regime = r;
    }
    a
}

fn in_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Searches every layout pair of one layer.
pub fn layer_table(shape: &LayerShape, arch: &ArchSpec, config: &SearchConfig) -> Result<LayerTable> {
    let arch = with_regime(arch, config);
    // Layouts whose lines do not fit this buffer are left out.
    let mut layouts = Vec::new();
    let mut placements = Vec::new();
    let mut misfit = None;
    for l in config.layouts(shape.kind)? {
        let placed = l.place(shape.input_extents(), &arch.stab).and_then(|p| {
            l.place(shape.output_extents(), &arch.stab)?;
            Ok(p)
        });
        match placed {
            Ok(p) => {
                layouts.push(l);
                placements.push(p);
            }
            Err(e @ Error::DimensionMismatch { .. }) => misfit = Some(e),
            Err(e) => return Err(e),
        }
    }
    if layouts.is_empty() {
        return Err(misfit.unwrap_or_else(|| Error::Config("empty layout space".into())));
    }
    let legal = layouts
        .iter()
        .flat_map(|a| layouts.iter().map(|b| handoff(&arch, a, b).is_ok()))
        .collect();
    let s = LayerSearch { shape, arch: &arch, config, layouts, placements, legal };
    in_pool(config.workers, || s.run())?
}

/// Best candidate for `shape`, optionally with the consumer's layout fixed.
pub fn cosearch_layer_to(
    shape: &LayerShape,
    arch: &ArchSpec,
    config: &SearchConfig,
    out_layout: Option<&LayoutDescriptor>,
) -> Result<Candidate> {
    let t = layer_table(shape, arch, config)?;
    t.best_to(out_layout).cloned().ok_or_else(|| {
        Error::EmptyMapspace(format!("no legal candidate writes {}", out_layout.map_or("", |l| l.text())))
    })
}

pub fn cosearch_layer(shape: &LayerShape, arch: &ArchSpec, config: &SearchConfig) -> Result<Candidate> {
    cosearch_layer_to(shape, arch, config, None)
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    fingerprint: String,
    /// Tables of finished layers by model index.
    tables: Vec<Option<LayerTable>>,
}

fn fingerprint(model: &ModelSpec, arch: &ArchSpec, config: &SearchConfig) -> String {
    let mut c = config.clone();
    c.checkpoint = None;
    c.workers = 0;
    let shapes: Vec<&LayerShape> = model.layers.iter().map(|l| &l.shape).collect();
    serde_json::to_string(&(shapes, arch, &c)).unwrap_or_default()
}

fn load_checkpoint(path: &Path, fp: &str, n: usize) -> Vec<Option<LayerTable>> {
    std::fs::read_to_string(path)
        .ok()
        .and_then(|s| serde_json::from_str::<Checkpoint>(&s).ok())
        .filter(|c| c.fingerprint == fp && c.tables.len() == n)
        .map(|c| c.tables)
        .unwrap_or_else(|| vec![None; n])
}

fn save_checkpoint(path: &Path, fp: &str, tables: &[Option<LayerTable>]) -> Result<()> {
    let c = Checkpoint { fingerprint: fp.to_string(), tables: tables.to_vec() };
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, serde_json::to_string(&c).map_err(|e| Error::Config(e.to_string()))?)?;
    std::fs::rename(tmp, path)?;
    Ok(())
}

/// Searches each distinct layer shape once, then picks one table entry per
/// layer so that every layer writes the layout its consumer reads,
/// minimising the sum of log-EDPs over the model.
pub fn cosearch_model(model: &ModelSpec, arch: &ArchSpec, config: &SearchConfig) -> Result<SearchResult> {
    let mut result = cosearch_chain(model, arch, config)?;
    if let Some(k) = config.top_k_layout {
        let mut counts: Vec<(String, usize)> = Vec::new();
        for l in &result.layers {
            for t in [l.best.in_layout.text(), l.best.out_layout.text()] {
                match counts.iter_mut().find(|(x, _)| x == t) {
                    Some((_, n)) => *n += 1,
                    None => counts.push((t.to_string(), 1)),
                }
            }
        }
        counts.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut restricted = config.clone();
        restricted.top_k_layout = None;
        restricted.checkpoint = None;
        restricted.layout_space = counts.into_iter().take(k).map(|(t, _)| t).collect();
        result = cosearch_chain(model, arch, &restricted)?;
    }
    Ok(result)
}

fn cosearch_chain(model: &ModelSpec, arch: &ArchSpec, config: &SearchConfig) -> Result<SearchResult> {
    let n = model.layers.len();
    let fp = fingerprint(model, arch, config);
    let mut tables = match &config.checkpoint {
        Some(p) => load_checkpoint(p, &fp, n),
        None => vec![None; n],
    };
    let mut failures: Vec<(String, String)> = Vec::new();
    for k in 0..n {
        if tables[k].is_some() {
            continue;
        }
        let shape = &model.layers[k].shape;
        let cached = (0..k).find(|&j| model.layers[j].shape == *shape).and_then(|j| tables[j].clone());
        let t = match cached {
            Some(t) => Ok(t),
            None => layer_table(shape, arch, config),
        };
        match t {
            Ok(t) => tables[k] = Some(t),
            Err(e) => failures.push((model.layers[k].label.clone(), e.to_string())),
        }
        if let Some(p) = &config.checkpoint {
            save_checkpoint(p, &fp, &tables)?;
        }
    }
    // A layer hands its output to the next one only when the tensor shapes
    // line up; branches and sampled layer lists break the chain.
    let handover: Vec<bool> = (0..n)
        .map(|k| k + 1 < n && model.layers[k].shape.output_extents() == model.layers[k + 1].shape.input_extents())
        .collect();
    let picks = chain(&tables, &handover);
    let mut layers = Vec::new();
    for (k, pick) in picks.into_iter().enumerate() {
        let (Some(t), Some((i, j))) = (&tables[k], pick) else { continue };
        let best = t.get(i, j).expect("chain picks filled entries").clone();
        layers.push(LayerResult { label: model.layers[k].label.clone(), best, evaluated: t.evaluated });
    }
    Ok(SearchResult {
        model: model.name.clone(),
        regime: config.regime.unwrap_or(arch.reorder_regime),
        geomean_cycles: geomean(layers.iter().map(|l| l.best.report.cycles as f64)),
        geomean_pj_per_compute: geomean(layers.iter().map(|l| l.best.report.pj_per_compute)),
        layers,
        failures,
    })
}

/// Entry `(in, out)` per layer. Consecutive layers with `handover[k]` set
/// and the same layout space must agree on the boundary layout; the chain
/// restarts anywhere else.
fn chain(tables: &[Option<LayerTable>], handover: &[bool]) -> Vec<Option<(usize, usize)>> {
    let n = tables.len();
    let linked = |k: usize| -> bool {
        k + 1 < n
            && handover[k]
            && matches!((&tables[k], &tables[k + 1]), (Some(a), Some(b)) if a.layouts == b.layouts)
    };
    // value[k][i]: best cost of layers k.. with layer k reading layout i.
    let mut value: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut choice: Vec<Vec<Option<usize>>> = vec![Vec::new(); n];
    for k in (0..n).rev() {
        let Some(t) = &tables[k] else { continue };
        let m = t.layouts.len();
        value[k] = vec![f64::INFINITY; m];
        choice[k] = vec![None; m];
        for i in 0..m {
            for j in 0..m {
                let Some(c) = t.get(i, j) else { continue };
                // An unlinked tail adds the same cost to every choice.
                let tail = if linked(k) { value[k + 1][j] } else { 0.0 };
                let v = c.report.edp.max(f64::MIN_POSITIVE).ln() + tail;
                if v < value[k][i] {
                    value[k][i] = v;
                    choice[k][i] = Some(j);
                }
            }
        }
    }
    let mut picks = vec![None; n];
    let mut next: Option<usize> = None;
    for k in 0..n {
        let Some(t) = &tables[k] else {
            next = None;
            continue;
        };
        let i = match next {
            Some(i) => i,
            None => (0..t.layouts.len()).fold(0, |b, i| if value[k][i] < value[k][b] { i } else { b }),
        };
        match choice[k].get(i).copied().flatten() {
            Some(j) => {
                picks[k] = Some((i, j));
                next = if linked(k) { Some(j) } else { None };
            }
            None => next = None,
        }
    }
    picks
}
