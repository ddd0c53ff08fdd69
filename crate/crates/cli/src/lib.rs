// SPDX-License-Identifier: Apache-2.0

//! Command-line driver: loads configs, runs the co-search per profile and
//! writes CSV/JSON reports or a per-cycle trace.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::Parser;
use featherloop_core::baselines::{self, BaselineProfile};
use featherloop_core::nest::simulate_layer;
use featherloop_core::search::{cosearch_layer, cosearch_model, geomean, SearchResult};
use featherloop_core::workload::{fixtures, load_model, ModelSpec};
use featherloop_core::{ArchSpec, Error, LayoutDescriptor, Mapping, SearchConfig};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Parser, Debug, Clone)]
#[command(name = "featherloop", version, about = "Layout-aware dataflow co-search and cycle-level traces")]
pub struct Args {
    /// Architecture file (TOML). Defaults to a 16x16 array.
    #[arg(long)]
    pub arch: Option<PathBuf>,
    /// Workload file, or one of the shipped models (resnet50, mobilenet_v3, bert).
    #[arg(long)]
    pub workload: String,
    /// Shipped profile name or profile file. Repeatable.
    #[arg(long = "profile", default_value = "feather")]
    pub profiles: Vec<String>,
    /// Search config file (TOML).
    #[arg(long)]
    pub search: Option<PathBuf>,
    /// Report directory. Traces go to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the per-cycle trace of this layer instead of reports.
    #[arg(long)]
    pub trace_layer: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Search threads; 0 uses all cores.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Round per-bank slowdowns up to whole cycles.
    #[arg(long)]
    pub ceil_slowdown: bool,
    /// Use each profile's original array size where it has one.
    #[arg(long)]
    pub native_scale: bool,
    /// Mapping samples per layer.
    #[arg(long)]
    pub budget: Option<usize>,
    /// Stop a layer after this many samples without improvement.
    #[arg(long)]
    pub victory: Option<usize>,
    /// Comma-separated layer labels to keep, in this order.
    #[arg(long, value_delimiter = ',')]
    pub layers: Vec<String>,
    /// Pinned mapping for the traced layer.
    #[arg(long)]
    pub mapping: Option<String>,
    #[arg(long)]
    pub in_layout: Option<String>,
    #[arg(long)]
    pub out_layout: Option<String>,
    /// Reports to write (slowdown, utilization, pj_compute, cycle).
    #[arg(long, value_delimiter = ',', default_value = "slowdown,utilization,pj_compute,cycle")]
    pub reports: Vec<Metric>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Slowdown,
    Utilization,
    PjCompute,
    Cycle,
}

impl Metric {
    pub fn file_suffix(self) -> &'static str {
        match self {
            Metric::Slowdown => "slowdown",
            Metric::Utilization => "utilization",
            Metric::PjCompute => "pj_compute",
            Metric::Cycle => "cycle",
        }
    }

    fn value(self, r: &featherloop_core::CostReport) -> f64 {
        match self {
            Metric::Slowdown => r.slowdown,
            Metric::Utilization => r.practical_utilization,
            Metric::PjCompute => r.pj_per_compute,
            Metric::Cycle => r.cycles as f64,
        }
    }
}

impl FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "slowdown" => Ok(Metric::Slowdown),
            "utilization" => Ok(Metric::Utilization),
            // The misspelt name is accepted for existing scripts.
            "pj_compute" | "pj_commpute" => Ok(Metric::PjCompute),
            "cycle" => Ok(Metric::Cycle),
            other => Err(format!("unknown report `{other}`")),
        }
    }
}

/// Everything a run reads, resolved from the command line.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub arch: ArchSpec,
    pub model: ModelSpec,
    pub profiles: Vec<BaselineProfile>,
    pub search: SearchConfig,
    pub native_scale: bool,
    pub out: Option<PathBuf>,
    pub reports: Vec<Metric>,
}

impl RunManifest {
    pub fn from_args(args: &Args) -> Result<Self> {
        let arch = match &args.arch {
            Some(p) => ArchSpec::load(p).with_context(|| format!("arch file {}", p.display()))?,
            None => ArchSpec::feather(16, 16),
        };
        let model = select_layers(load_workload(&args.workload)?, &args.layers)?;
        let mut search = match &args.search {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("search file {}", p.display()))?;
                toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => SearchConfig::default(),
        };
        if let Some(s) = args.seed {
            search.seed = s;
        }
        if let Some(w) = args.workers {
            search.workers = w;
        }
        if let Some(b) = args.budget {
            search.mapping_budget = b;
        }
        if let Some(v) = args.victory {
            search.victory = v;
        }
        search.cost.ceil_slowdown |= args.ceil_slowdown;
        let profiles = args.profiles.iter().map(|p| load_profile(p)).collect::<Result<Vec<_>>>()?;
        Ok(RunManifest {
            arch,
            model,
            profiles,
            search,
            native_scale: args.native_scale,
            out: args.out.clone(),
            reports: args.reports.clone(),
        })
    }

    /// Hash of everything that can change a profile's results. Worker
    /// count and checkpoint path are left out.
    pub fn config_hash(&self, profile: &BaselineProfile) -> String {
        let mut search = profile.search_config(&self.search);
        search.workers = 0;
        search.checkpoint = None;
        let key = serde_json::json!({
            "arch": profile.arch(&self.arch, self.native_scale),
            "model": self.model,
            "profile": profile,
            "search": search,
        });
        hex::encode(Sha256::digest(key.to_string().as_bytes()))
    }
}

fn load_workload(w: &str) -> Result<ModelSpec> {
    let path = Path::new(w);
    if path.exists() {
        return Ok(load_model(path)?);
    }
    fixtures::by_name(w).ok_or_else(|| {
        anyhow!("workload `{w}` is neither a file nor a shipped model ({})", fixtures::NAMES.join(", "))
    })
}

fn select_layers(model: ModelSpec, labels: &[String]) -> Result<ModelSpec> {
    if labels.is_empty() {
        return Ok(model);
    }
    let layers = labels
        .iter()
        .map(|l| model.layer(l).cloned().ok_or_else(|| Error::LayerNotFound(l.clone())))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(ModelSpec { name: model.name, layers })
}

fn load_profile(p: &str) -> Result<BaselineProfile> {
    let path = Path::new(p);
    if path.extension().is_some_and(|e| e == "toml") && path.exists() {
        return Ok(BaselineProfile::load(path)?);
    }
    Ok(baselines::profile(p)?)
}

/// Report file stem for a profile.
pub fn report_stem(profile: &BaselineProfile) -> String {
    format!("{}_{}", profile.name, profile.regime.name())
}

#[derive(Debug, Serialize)]
struct ProfileSummary<'a> {
    profile: &'a str,
    config_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    result: Option<&'a SearchResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

/// CSV text for one metric: a hash comment, a header, one row per layer
/// (empty for failed layers) and a geomean row.
pub fn metric_csv(model: &ModelSpec, result: &SearchResult, metric: Metric, hash: &str) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["layer", metric.file_suffix()])?;
    let mut values = Vec::new();
    for layer in &model.layers {
        match result.layers.iter().find(|l| l.label == layer.label) {
            Some(l) => {
                let v = metric.value(&l.best.report);
                values.push(v);
                w.write_record([layer.label.as_str(), &v.to_string()])?;
            }
            None => w.write_record([layer.label.as_str(), ""])?,
        }
    }
    w.write_record(["geomean", &geomean(values).to_string()])?;
    let body = String::from_utf8(w.into_inner().map_err(|e| anyhow!("csv: {e}"))?)?;
    Ok(format!("# config-sha256: {hash}\n{body}"))
}

/// Runs every profile and writes the reports. Reports of profiles that
/// finished are kept when a later one fails.
pub fn run_reports(m: &RunManifest) -> Result<Vec<SearchResult>> {
    let out = m.out.as_ref().ok_or_else(|| anyhow!("--out is required for reports"))?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut results = Vec::new();
    let mut error = None;
    for p in &m.profiles {
        let arch = p.arch(&m.arch, m.native_scale);
        match cosearch_model(&m.model, &arch, &p.search_config(&m.search)) {
            Ok(r) => {
                let hash = m.config_hash(p);
                for &metric in &m.reports {
                    let path = out.join(format!("{}_{}.csv", report_stem(p), metric.file_suffix()));
                    fs::write(&path, metric_csv(&m.model, &r, metric, &hash)?)?;
                }
                results.push(r);
            }
            Err(e) => {
                error = Some((p.name.clone(), e));
                break;
            }
        }
    }
    let mut summaries: Vec<ProfileSummary> = results
        .iter()
        .zip(&m.profiles)
        .map(|(r, p)| ProfileSummary {
            profile: &p.name,
            config_hash: m.config_hash(p),
            result: Some(r),
            error: None,
        })
        .collect();
    if let Some((name, e)) = &error {
        let p = m.profiles.iter().find(|p| &p.name == name).expect("failed profile is listed");
        summaries.push(ProfileSummary {
            profile: name,
            config_hash: m.config_hash(p),
            result: None,
            error: Some(e.to_string()),
        });
    }
    let json = serde_json::to_string_pretty(&serde_json::json!({ "model": m.model.name, "profiles": summaries }))?;
    fs::write(out.join("summary.json"), json + "\n")?;
    match error {
        Some((name, e)) => Err(anyhow::Error::new(e).context(format!("profile {name}"))),
        None => Ok(results),
    }
}

/// Per-cycle event log of one layer under the first profile. Without a
/// pinned mapping the co-search picks one.
pub fn run_trace(m: &RunManifest, label: &str, args: &Args) -> Result<String> {
    let layer = m.model.layer(label).ok_or_else(|| Error::LayerNotFound(label.to_string()))?;
    let profile = m.profiles.first().ok_or_else(|| anyhow!("no profile"))?;
    let arch = profile.arch(&m.arch, m.native_scale);
    let shape = &layer.shape;
    let parse_layout = |t: &str| LayoutDescriptor::parse(t, shape.kind);
    let (mapping, in_l, out_l) = match &args.mapping {
        Some(text) => {
            let mapping: Mapping = text.parse()?;
            let in_l = parse_layout(args.in_layout.as_deref().ok_or_else(|| anyhow!("--mapping needs --in-layout"))?)?;
            let out_l = match &args.out_layout {
                Some(t) => parse_layout(t)?,
                None => in_l.clone(),
            };
            (mapping, in_l, out_l)
        }
        None => {
            let c = cosearch_layer(shape, &arch, &profile.search_config(&m.search))?;
            (c.mapping, c.in_layout, c.out_layout)
        }
    };
    let t = simulate_layer(shape, &mapping, &in_l, &out_l, &arch)?;
    let mut s = String::new();
    writeln!(s, "# layer {label}")?;
    writeln!(s, "# mapping {mapping}")?;
    writeln!(s, "# layouts {} -> {}", in_l.text(), out_l.text())?;
    writeln!(s, "# preload {} compute {} total {}", t.schedule.preload, t.compute_cycles, t.total_cycles)?;
    s.push_str(&t.dump());
    Ok(s)
}

pub fn run(args: &Args) -> Result<()> {
    let m = RunManifest::from_args(args)?;
    if let Some(label) = &args.trace_layer {
        let text = run_trace(&m, label, args)?;
        match &m.out {
            Some(dir) => {
                fs::create_dir_all(dir)?;
                fs::write(dir.join(format!("{label}_trace.txt")), text)?;
            }
            None => print!("{text}"),
        }
        return Ok(());
    }
    if m.out.is_none() {
        bail!("--out is required for reports");
    }
    run_reports(&m)?;
    Ok(())
}

/// One-line diagnostic naming the error kind when it comes from the model.
pub fn diagnostic(e: &anyhow::Error) -> String {
    match e.chain().find_map(|c| c.downcast_ref::<Error>()) {
        Some(core) => {
            let debug = format!("{core:?}");
            let kind: String = debug.chars().take_while(|c| c.is_alphanumeric()).collect();
            format!("error[{kind}]: {e:#}")
        }
        None => format!("error: {e:#}"),
    }
}
