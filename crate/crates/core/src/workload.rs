// SPDX-License-Identifier: Apache-2.0

//! Layer shapes and multi-layer model files.
//!
//! A workload file is CSV with a header row. Lines starting with `#` are
//! comments. Columns are `kind,label,N,M,C,H,W,R,S,stride,padding` with an
//! optional trailing `groups` column (depthwise layers set it to `C`).
//! GEMM layers `(rows x K) * (K x cols)` are written with `M = cols`,
//! `C = K`, `H = rows`, `W = 1` and a unit kernel.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dims::Dim;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Conv,
    Gemm,
}

impl LayerKind {
    fn as_str(self) -> &'static str {
        match self {
            LayerKind::Conv => "conv",
            LayerKind::Gemm => "gemm",
        }
    }
}

/// A 7D convolution problem instance. `p` and `q` are derived.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerShape {
    pub kind: LayerKind,
    pub n: u64,
    pub m: u64,
    pub c: u64,
    pub h: u64,
    pub w: u64,
    pub r: u64,
    pub s: u64,
    pub stride: u64,
    pub padding: u64,
    pub groups: u64,
    pub p: u64,
    pub q: u64,
}

impl LayerShape {
    /// A convolution with unit stride, no padding and a single group.
    /// Output extents are left unset.
    pub fn conv(n: u64, m: u64, c: u64, h: u64, w: u64, r: u64, s: u64) -> Self {
        LayerShape { kind: LayerKind::Conv, n, m, c, h, w, r, s, stride: 1, padding: 0, groups: 1, p: 0, q: 0 }
    }

    pub fn with_stride(mut self, stride: u64, padding: u64) -> Self {
        self.stride = stride;
        self.padding = padding;
        self
    }

    pub fn with_groups(mut self, groups: u64) -> Self {
        self.groups = groups;
        self
    }

    /// `(rows x k) * (k x cols)`, already derived.
    pub fn gemm(rows: u64, k: u64, cols: u64) -> Self {
        LayerShape {
            kind: LayerKind::Gemm,
            n: 1,
            m: cols,
            c: k,
            h: rows,
            w: 1,
            r: 1,
            s: 1,
            stride: 1,
            padding: 0,
            groups: 1,
            p: rows,
            q: 1,
        }
    }

    pub fn is_derived(&self) -> bool {
        self.p > 0 && self.q > 0
    }

    /// Loop extent of `d`. The channel loop covers one group.
    pub fn extent(&self, d: Dim) -> u64 {
        match d {
            Dim::N => self.n,
            Dim::M => self.m,
            Dim::C => self.c / self.groups,
            Dim::P => self.p,
            Dim::Q => self.q,
            Dim::R => self.r,
            Dim::S => self.s,
        }
    }

    pub fn extents(&self) -> [u64; 7] {
        Dim::ALL.map(|d| self.extent(d))
    }

    pub fn macs(&self) -> u64 {
        self.extents().iter().product()
    }

    /// Number of products accumulated into each output.
    pub fn reduction_size(&self) -> u64 {
        self.extent(Dim::C) * self.r * self.s
    }

    /// Input activation extents in `[N, C, H, W]` order.
    pub fn input_extents(&self) -> [u64; 4] {
        [self.n, self.c, self.h, self.w]
    }

    /// Output activation extents in `[N, C(=M), H(=P), W(=Q)]` order.
    pub fn output_extents(&self) -> [u64; 4] {
        [self.n, self.m, self.p, self.q]
    }

    pub fn input_elements(&self) -> u64 {
        self.input_extents().iter().product()
    }

    pub fn output_elements(&self) -> u64 {
        self.output_extents().iter().product()
    }

    /// Channel of the input activation read by output channel `m` and
    /// in-group channel `c`.
    pub fn input_channel(&self, m: u64, c: u64) -> u64 {
        if self.groups == 1 {
            c
        } else {
            (m / (self.m / self.groups)) * (self.c / self.groups) + c
        }
    }

    /// Input activation `[n, c, h, w]` touched by one MAC, or `None` when it
    /// falls in the zero padding.
    pub fn input_coord(&self, idx: &[u64; 7]) -> Option<[u64; 4]> {
        let [n, m, c, p, q, r, s] = *idx;
        let h = (p * self.stride + r).checked_sub(self.padding)?;
        let w = (q * self.stride + s).checked_sub(self.padding)?;
        if h >= self.h || w >= self.w {
            return None;
        }
        Some([n, self.input_channel(m, c), h, w])
    }

    /// Whether the input activation depends on loop dimension `d`.
    pub fn input_depends_on(&self, d: Dim) -> bool {
        match d {
            Dim::M => self.groups > 1,
            _ => d != Dim::M,
        }
    }
}

/// Fill in `p` and `q` with `floor((H + 2*pad - R) / stride) + 1`.
pub fn derive_output_extents(shape: &LayerShape) -> Result<LayerShape> {
    derive_labeled(shape, "")
}

fn derive_labeled(shape: &LayerShape, label: &str) -> Result<LayerShape> {
    let invalid = |message: String| Error::InvalidLayer { label: label.to_string(), message };
    let s = shape;
    for (name, v) in [("N", s.n), ("M", s.m), ("C", s.c), ("H", s.h), ("W", s.w), ("R", s.r), ("S", s.s)] {
        if v == 0 {
            return Err(invalid(format!("{name} must be >= 1")));
        }
    }
    if s.stride == 0 {
        return Err(invalid("stride must be >= 1".into()));
    }
    if s.groups == 0 || !s.c.is_multiple_of(s.groups) || !s.m.is_multiple_of(s.groups) {
        return Err(invalid(format!("groups={} must divide C={} and M={}", s.groups, s.c, s.m)));
    }
    let out = |extent: u64, kernel: u64| -> Result<u64> {
        let span = extent + 2 * s.padding;
        if span < kernel {
            return Err(Error::NonIntegralOutput {
                label: label.to_string(),
                detail: format!("input {extent} + 2*{} padding is smaller than kernel {kernel}", s.padding),
            });
        }
        Ok((span - kernel) / s.stride + 1)
    };
    let mut derived = shape.clone();
    derived.p = out(s.h, s.r)?;
    derived.q = out(s.w, s.s)?;
    if derived.kind == LayerKind::Gemm
        && (s.r != 1 || s.s != 1 || s.stride != 1 || s.padding != 0 || s.groups != 1)
    {
        return Err(invalid("gemm layers need R=S=1, stride=1, padding=0, groups=1".into()));
    }
    Ok(derived)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layer {
    pub label: String,
    pub shape: LayerShape,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub layers: Vec<Layer>,
}

impl ModelSpec {
    pub fn layer(&self, label: &str) -> Option<&Layer> {
        self.layers.iter().find(|l| l.label == label)
    }

    /// Serialize in the workload file format.
    pub fn to_workload_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# model: {}", self.name);
        out.push_str("kind,label,N,M,C,H,W,R,S,stride,padding,groups\n");
        for l in &self.layers {
            let s = &l.shape;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                s.kind.as_str(),
                l.label,
                s.n,
                s.m,
                s.c,
                s.h,
                s.w,
                s.r,
                s.s,
                s.stride,
                s.padding,
                s.groups
            );
        }
        out
    }
}

const REQUIRED_COLUMNS: [&str; 11] = ["kind", "label", "N", "M", "C", "H", "W", "R", "S", "stride", "padding"];

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_model(&name, &text)
}

pub fn parse_model(name: &str, text: &str) -> Result<ModelSpec> {
    let parse_err = |line: usize, field: &str, message: String| Error::Parse { line, field: field.to_string(), message };
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| parse_err(line_of(&e), "header", e.to_string()))?.clone();
    if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
        return Err(parse_err(1, "header", "empty workload file".into()));
    }
    let mut columns = Vec::new();
    for col in REQUIRED_COLUMNS {
        let idx = headers
            .iter()
            .position(|h| h == col)
            .ok_or_else(|| parse_err(1, col, "missing column".into()))?;
        columns.push(idx);
    }
    let groups_col = headers.iter().position(|h| h == "groups");

    let mut layers = Vec::new();
    let mut labels = HashSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| parse_err(line_of(&e), "record", e.to_string()))?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |i: usize| record.get(columns[i]).unwrap_or("");
        let num = |i: usize| -> Result<u64> {
            field(i)
                .parse::<u64>()
                .map_err(|e| parse_err(line, REQUIRED_COLUMNS[i], format!("`{}`: {e}", field(i))))
        };
        let kind = match field(0).to_ascii_lowercase().as_str() {
            "conv" => LayerKind::Conv,
            "gemm" => LayerKind::Gemm,
            other => return Err(parse_err(line, "kind", format!("unknown kind `{other}`"))),
        };
        let label = field(1).to_string();
        if label.is_empty() {
            return Err(parse_err(line, "label", "empty label".into()));
        }
        if !labels.insert(label.clone()) {
            return Err(parse_err(line, "label", format!("duplicate label `{label}`")));
        }
        let mut shape = LayerShape {
            kind,
            n: num(2)?,
            m: num(3)?,
            c: num(4)?,
            h: num(5)?,
            w: num(6)?,
            r: num(7)?,
            s: num(8)?,
            stride: num(9)?,
            padding: num(10)?,
            groups: 1,
            p: 0,
            q: 0,
        };
        if let Some(g) = groups_col.and_then(|i| record.get(i)).filter(|g| !g.is_empty()) {
            shape.groups = g.parse().map_err(|e| parse_err(line, "groups", format!("`{g}`: {e}")))?;
        }
        for (i, v) in [(2, shape.n), (3, shape.m), (4, shape.c), (5, shape.h), (6, shape.w), (7, shape.r), (8, shape.s), (9, shape.stride)] {
            if v == 0 {
                return Err(parse_err(line, REQUIRED_COLUMNS[i], "must be >= 1".into()));
            }
        }
        let shape = derive_labeled(&shape, &label).map_err(|e| match e {
            Error::InvalidLayer { message, .. } => parse_err(line, "layer", format!("{label}: {message}")),
            other => other,
        })?;
        layers.push(Layer { label, shape });
    }
    if layers.is_empty() {
        return Err(parse_err(1, "records", "workload has no layers".into()));
    }
    Ok(ModelSpec { name: name.to_string(), layers })
}

fn line_of(e: &csv::Error) -> usize {
    e.position().map(|p| p.line() as usize).unwrap_or(0)
}

/// Shipped fixture models.
pub mod fixtures {
    use super::{parse_model, ModelSpec};

    pub const RESNET50: &str = include_str!("../data/workloads/resnet50.workload");
    pub const MOBILENET_V3: &str = include_str!("../data/workloads/mobilenet_v3.workload");
    pub const BERT: &str = include_str!("../data/workloads/bert.workload");

    pub fn resnet50() -> ModelSpec {
        parse_model("resnet50", RESNET50).expect("shipped fixture parses")
    }

    pub fn mobilenet_v3() -> ModelSpec {
        parse_model("mobilenet_v3", MOBILENET_V3).expect("shipped fixture parses")
    }

    pub fn bert() -> ModelSpec {
        parse_model("bert", BERT).expect("shipped fixture parses")
    }

    pub const NAMES: [&str; 3] = ["resnet50", "mobilenet_v3", "bert"];

    pub fn by_name(name: &str) -> Option<ModelSpec> {
        match name {
            "resnet50" => Some(resnet50()),
            "mobilenet_v3" => Some(mobilenet_v3()),
            "bert" => Some(bert()),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_extents_standard_formula() {
        let s = derive_output_extents(&LayerShape::conv(1, 64, 3, 224, 224, 7, 7).with_stride(2, 3)).unwrap();
        assert_eq!((s.p, s.q), (112, 112));
        let s = derive_output_extents(&LayerShape::conv(1, 4, 4, 4, 4, 2, 2)).unwrap();
        assert_eq!((s.p, s.q), (3, 3));
        let s = derive_output_extents(&LayerShape::conv(1, 1, 1, 1, 1, 1, 1)).unwrap();
        assert_eq!((s.p, s.q), (1, 1));
    }

    #[test]
    fn kernel_larger_than_input_is_rejected() {
        let err = derive_output_extents(&LayerShape::conv(1, 1, 1, 2, 2, 3, 3)).unwrap_err();
        assert!(matches!(err, Error::NonIntegralOutput { .. }));
        assert!(derive_output_extents(&LayerShape::conv(1, 1, 1, 2, 2, 3, 3).with_stride(1, 1)).is_ok());
    }

    #[test]
    fn empty_file_and_zero_stride_are_parse_errors() {
        assert!(matches!(parse_model("x", ""), Err(Error::Parse { .. })));
        assert!(matches!(parse_model("x", "# nothing\n"), Err(Error::Parse { .. })));
        let hdr = "kind,label,N,M,C,H,W,R,S,stride,padding\n";
        assert!(matches!(parse_model("x", hdr), Err(Error::Parse { .. })));
        let err = parse_model("x", &format!("{hdr}conv,a,1,1,1,4,4,1,1,0,0\n")).unwrap_err();
        match err {
            Error::Parse { line, field, .. } => {
                assert_eq!(line, 2);
                assert_eq!(field, "stride");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn duplicate_labels_rejected() {
        let text = "kind,label,N,M,C,H,W,R,S,stride,padding\nconv,a,1,1,1,4,4,1,1,1,0\nconv,a,1,1,1,4,4,1,1,1,0\n";
        assert!(matches!(parse_model("x", text), Err(Error::Parse { .. })));
    }

    #[test]
    fn gemm_constraints() {
        let text = "kind,label,N,M,C,H,W,R,S,stride,padding\ngemm,g,1,8,8,4,1,3,1,1,0\n";
        assert!(matches!(parse_model("x", text), Err(Error::Parse { .. })));
        let g = LayerShape::gemm(128, 768, 64);
        assert_eq!(g.reduction_size(), 768);
        assert_eq!(derive_output_extents(&g).unwrap(), g);
    }

    #[test]
    fn fixtures_load() {
        let resnet = fixtures::resnet50();
        assert_eq!(resnet.layers.len(), 53);
        assert_eq!(resnet.layers[0].shape.p, 112);
        assert!(!fixtures::mobilenet_v3().layers.is_empty());
        assert!(fixtures::bert().layers.iter().all(|l| l.shape.kind == LayerKind::Gemm));
    }

    #[test]
    fn depthwise_reads_its_own_channel() {
        let dw = derive_output_extents(&LayerShape::conv(1, 8, 8, 5, 5, 3, 3).with_groups(8)).unwrap();
        assert_eq!(dw.extent(Dim::C), 1);
        assert_eq!(dw.input_coord(&[0, 5, 0, 1, 1, 0, 0]), Some([0, 5, 1, 1]));
        assert!(dw.input_depends_on(Dim::M));
    }
}
