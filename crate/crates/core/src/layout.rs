// SPDX-License-Identifier: Apache-2.0

//! Layout descriptors such as `HWC_C4W8`, their placement in a banked 2D
//! buffer, and the reorder regimes that decide which layout switches a
//! design can perform between layers.
//!
//! A descriptor has two parts separated by `_`. The inter-line list orders
//! whole lines (leftmost outermost). The intra-line list packs `(dim, size)`
//! tiles into one line (leftmost slowest). Dimensions missing from the
//! inter-line list are treated as implicit outermost loops.

use std::fmt;
use std::hash::{Hash, Hasher};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::arch::BufferSpec;
use crate::dims::TensorDim;
use crate::error::{Error, Result};
use crate::workload::LayerKind;

#[derive(Debug, Clone, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct LayoutDescriptor {
    text: String,
    pub inter: Vec<TensorDim>,
    pub intra: Vec<(TensorDim, u64)>,
}

impl PartialEq for LayoutDescriptor {
    fn eq(&self, other: &Self) -> bool {
        self.inter == other.inter && self.intra == other.intra
    }
}

impl Hash for LayoutDescriptor {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.inter.hash(state);
        self.intra.hash(state);
    }
}

impl fmt::Display for LayoutDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

impl From<LayoutDescriptor> for String {
    fn from(l: LayoutDescriptor) -> String {
        l.text
    }
}

impl TryFrom<String> for LayoutDescriptor {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        let kind = if s.contains('K') { LayerKind::Gemm } else { LayerKind::Conv };
        LayoutDescriptor::parse(&s, kind)
    }
}

fn letter_of(c: char, kind: LayerKind) -> Option<TensorDim> {
    use TensorDim::*;
    match kind {
        LayerKind::Conv => match c {
            'N' => Some(N),
            'C' | 'M' => Some(C),
            'H' | 'P' => Some(H),
            'W' | 'Q' => Some(W),
            _ => None,
        },
        LayerKind::Gemm => match c {
            'M' => Some(H),
            'K' => Some(C),
            _ => None,
        },
    }
}

fn grammar(text: &str, message: impl Into<String>) -> Error {
    Error::Grammar { text: text.to_string(), message: message.into() }
}

fn mismatch(text: &str, message: impl Into<String>) -> Error {
    Error::DimensionMismatch { text: text.to_string(), message: message.into() }
}

impl LayoutDescriptor {
    /// Parses `INTER_INTRA`, or `OUT(IN)` where `OUT` names output dims
    /// (M, P, Q) and `IN` is the same layout in input dims.
    pub fn parse(text: &str, kind: LayerKind) -> Result<Self> {
        let text = text.trim();
        if let Some(open) = text.find('(') {
            let inner = text[open + 1..]
                .strip_suffix(')')
                .ok_or_else(|| grammar(text, "unbalanced parenthesis"))?;
            let outer = Self::parse_plain(&text[..open], kind)?;
            let inner = Self::parse_plain(inner, kind)?;
            if outer != inner {
                return Err(mismatch(text, "the two spellings describe different layouts"));
            }
            return Ok(LayoutDescriptor { text: text.to_string(), ..outer });
        }
        Self::parse_plain(text, kind)
    }

    fn parse_plain(text: &str, kind: LayerKind) -> Result<Self> {
        let (inter_s, intra_s) = text.split_once('_').ok_or_else(|| grammar(text, "missing '_'"))?;
        if inter_s.is_empty() {
            return Err(grammar(text, "empty inter-line order"));
        }
        if intra_s.is_empty() {
            return Err(grammar(text, "empty intra-line order"));
        }
        let mut inter = Vec::new();
        for c in inter_s.chars() {
            let d = letter_of(c, kind).ok_or_else(|| mismatch(text, format!("unknown dimension '{c}'")))?;
            if inter.contains(&d) {
                return Err(mismatch(text, format!("'{c}' repeated in inter-line order")));
            }
            inter.push(d);
        }
        let mut intra: Vec<(TensorDim, u64)> = Vec::new();
        let mut chars = intra_s.chars().peekable();
        while let Some(c) = chars.next() {
            if !c.is_ascii_alphabetic() {
                return Err(grammar(text, format!("expected a dimension letter, found '{c}'")));
            }
            let d = letter_of(c, kind).ok_or_else(|| mismatch(text, format!("unknown dimension '{c}'")))?;
            let mut digits = String::new();
            while let Some(&n) = chars.peek().filter(|n| n.is_ascii_digit()) {
                digits.push(n);
                chars.next();
            }
            let size: u64 = digits.parse().map_err(|_| grammar(text, format!("'{c}' needs a size")))?;
            if size == 0 {
                return Err(grammar(text, "intra-line sizes must be >= 1"));
            }
            if intra.iter().any(|(e, _)| *e == d) {
                return Err(mismatch(text, format!("'{c}' repeated in intra-line order")));
            }
            intra.push((d, size));
        }
        Ok(LayoutDescriptor { text: text.to_string(), inter, intra })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn line_words(&self) -> u64 {
        self.intra.iter().map(|(_, s)| s).product()
    }

    pub fn intra_size(&self, d: TensorDim) -> u64 {
        self.intra.iter().find(|(e, _)| *e == d).map_or(1, |(_, s)| *s)
    }

    /// Binds the descriptor to tensor extents `[N, C, H, W]`.
    ///
    /// Intra sizes larger than the extent leave the tail of each line empty.
    pub fn place(&self, extents: [u64; 4], buf: &BufferSpec) -> Result<Placement> {
        if self.line_words() > buf.line_size {
            return Err(mismatch(
                &self.text,
                format!("{} words per line exceed the {}-word buffer line", self.line_words(), buf.line_size),
            ));
        }
        if extents.contains(&0) {
            return Err(mismatch(&self.text, "tensor has an empty extent"));
        }
        let mut intra_stride = [0u64; 4];
        let mut intra_size = [1u64; 4];
        let mut stride = 1;
        for &(d, size) in self.intra.iter().rev() {
            intra_stride[d.index()] = stride;
            intra_size[d.index()] = size;
            stride *= size;
        }
        let mut order: Vec<TensorDim> = TensorDim::ALL.iter().copied().filter(|d| !self.inter.contains(d)).collect();
        order.extend(&self.inter);
        let mut inter_stride = [0u64; 4];
        let mut lines = 1u64;
        for &d in order.iter().rev() {
            inter_stride[d.index()] = lines;
            lines *= extents[d.index()].div_ceil(intra_size[d.index()]);
        }
        Ok(Placement { extents, intra_stride, intra_size, inter_stride, lines, buf: buf.clone() })
    }
}

/// A descriptor bound to concrete extents and a buffer.
#[derive(Debug, Clone)]
pub struct Placement {
    extents: [u64; 4],
    intra_stride: [u64; 4],
    intra_size: [u64; 4],
    inter_stride: [u64; 4],
    lines: u64,
    buf: BufferSpec,
}

/// Where one tensor element lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Address {
    pub line: u64,
    pub bank: u64,
    pub offset: u64,
}

impl Placement {
    pub fn lines(&self) -> u64 {
        self.lines
    }

    pub fn extents(&self) -> [u64; 4] {
        self.extents
    }

    pub fn buffer(&self) -> &BufferSpec {
        &self.buf
    }

    /// `(line, bank, offset)` of coordinate `[n, c, h, w]`.
    pub fn address_of(&self, coord: [u64; 4]) -> Result<Address> {
        if coord.iter().zip(&self.extents).any(|(c, e)| c >= e) {
            return Err(Error::OutOfRange { coord, extents: self.extents });
        }
        Ok(self.address_unchecked(coord))
    }

    #[inline]
    pub fn address_unchecked(&self, coord: [u64; 4]) -> Address {
        let mut line = 0;
        let mut offset = 0;
        for i in 0..4 {
            let size = self.intra_size[i];
            offset += (coord[i] % size) * self.intra_stride[i];
            line += (coord[i] / size) * self.inter_stride[i];
        }
        Address { line, bank: self.buf.bank_of(line, offset), offset }
    }
}

/// Free-function form of [`Placement::address_of`].
pub fn address_of(l: &LayoutDescriptor, extents: [u64; 4], coord: [u64; 4], buf: &BufferSpec) -> Result<Address> {
    l.place(extents, buf)?.address_of(coord)
}

/// Per-bank count of distinct lines touched by one cycle's accesses,
/// sorted by bank.
pub fn concurrent_access_profile<I>(addrs: I) -> Vec<(u64, u64)>
where
    I: IntoIterator<Item = Address>,
{
    let mut pairs: Vec<(u64, u64)> = addrs.into_iter().map(|a| (a.bank, a.line)).collect();
    pairs.sort_unstable();
    pairs.dedup();
    let mut out: Vec<(u64, u64)> = Vec::new();
    for (bank, _) in pairs {
        match out.last_mut() {
            Some((b, n)) if *b == bank => *n += 1,
            _ => out.push((bank, 1)),
        }
    }
    out
}

/// Which layout switches a design supports between consecutive layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReorderRegime {
    FixedLayout,
    /// Round trip through DRAM; bandwidth comes from the arch.
    OffChip,
    LineRotation,
    Transpose,
    RowReorder,
    TransposePlusRowReorder,
    #[default]
    ArbitraryRir,
}

impl ReorderRegime {
    pub fn name(self) -> &'static str {
        match self {
            ReorderRegime::FixedLayout => "fixed_layout",
            ReorderRegime::OffChip => "off_chip",
            ReorderRegime::LineRotation => "line_rotation",
            ReorderRegime::Transpose => "transpose",
            ReorderRegime::RowReorder => "row_reorder",
            ReorderRegime::TransposePlusRowReorder => "transpose_plus_row_reorder",
            ReorderRegime::ArbitraryRir => "arbitrary_rir",
        }
    }
}

impl fmt::Display for ReorderRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How a layout switch is paid for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChargeKind {
    /// Read-after-read reorder through a dedicated on-chip unit.
    Rar,
    OffChip,
    /// Whole lines move; costs an extra buffer port, no stall.
    LineRotation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transition {
    Free,
    Charged(ChargeKind),
    Illegal,
}

/// Single intra dim on both sides, different dims: the 2D view's rows and
/// columns trade places.
fn is_transpose(from: &LayoutDescriptor, to: &LayoutDescriptor) -> bool {
    from.intra.len() == 1 && to.intra.len() == 1 && from.intra[0].0 != to.intra[0].0
}

/// Same words in each line, in a different order.
fn is_row_reorder(from: &LayoutDescriptor, to: &LayoutDescriptor) -> bool {
    let mut a = from.intra.clone();
    let mut b = to.intra.clone();
    a.sort();
    b.sort();
    from.inter == to.inter && a == b && from.intra != to.intra
}

pub fn regime_allows(regime: ReorderRegime, from: &LayoutDescriptor, to: &LayoutDescriptor) -> Transition {
    use ReorderRegime::*;
    if from == to {
        return Transition::Free;
    }
    let charged = |ok: bool, kind| if ok { Transition::Charged(kind) } else { Transition::Illegal };
    match regime {
        ArbitraryRir => Transition::Free,
        FixedLayout => Transition::Illegal,
        OffChip => Transition::Charged(ChargeKind::OffChip),
        Transpose => charged(is_transpose(from, to), ChargeKind::Rar),
        RowReorder => charged(is_row_reorder(from, to), ChargeKind::Rar),
        TransposePlusRowReorder => charged(is_transpose(from, to) || is_row_reorder(from, to), ChargeKind::Rar),
        LineRotation => charged(from.intra == to.intra, ChargeKind::LineRotation),
    }
}

/// Reads a layout list: one descriptor per line, `#` comments allowed.
pub fn parse_layout_list(text: &str, kind: LayerKind) -> Result<Vec<LayoutDescriptor>> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(|l| LayoutDescriptor::parse(l, kind))
        .collect()
}

pub fn load_layout_list(path: impl AsRef<Path>, kind: LayerKind) -> Result<Vec<LayoutDescriptor>> {
    parse_layout_list(&std::fs::read_to_string(path)?, kind)
}

pub mod fixtures {
    use super::*;

    pub const CONV: &str = include_str!("../data/layouts/conv.layouts");
    pub const GEMM: &str = include_str!("../data/layouts/gemm.layouts");

    /// The seven shipped convolution layouts.
    pub fn conv_space() -> Vec<LayoutDescriptor> {
        parse_layout_list(CONV, LayerKind::Conv).expect("shipped conv layouts parse")
    }

    pub fn gemm_space() -> Vec<LayoutDescriptor> {
        parse_layout_list(GEMM, LayerKind::Gemm).expect("shipped gemm layouts parse")
    }

    pub fn space_for(kind: LayerKind) -> Vec<LayoutDescriptor> {
        match kind {
            LayerKind::Conv => conv_space(),
            LayerKind::Gemm => gemm_space(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use TensorDim::*;

    fn conv(text: &str) -> LayoutDescriptor {
        LayoutDescriptor::parse(text, LayerKind::Conv).unwrap()
    }

    fn stab(line: u64) -> BufferSpec {
        BufferSpec::word_banked(1 << 20, line, line, 2)
    }

    #[test]
    fn parses_descriptors() {
        let l = conv("CHW_W4H2C2");
        assert_eq!(l.inter, vec![C, H, W]);
        assert_eq!(l.intra, vec![(W, 4), (H, 2), (C, 2)]);
        let l = conv("HWC_C32");
        assert_eq!(l.intra, vec![(C, 32)]);
        assert!(matches!(LayoutDescriptor::parse("HWC_", LayerKind::Conv), Err(Error::Grammar { .. })));
        assert!(matches!(LayoutDescriptor::parse("HWC", LayerKind::Conv), Err(Error::Grammar { .. })));
        assert!(matches!(LayoutDescriptor::parse("HWC_C", LayerKind::Conv), Err(Error::Grammar { .. })));
        assert!(matches!(LayoutDescriptor::parse("HWZ_C4", LayerKind::Conv), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(LayoutDescriptor::parse("HWC_C4C2", LayerKind::Conv), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn output_spelling_with_input_equivalent() {
        let l = conv("MPQ_Q4(CHW_W4)");
        assert_eq!(l, conv("CHW_W4"));
        assert!(LayoutDescriptor::parse("MPQ_Q4(HWC_C4)", LayerKind::Conv).is_err());
        let g = LayoutDescriptor::parse("MK_K32", LayerKind::Gemm).unwrap();
        assert_eq!(g.inter, vec![H, C]);
    }

    #[test]
    fn channel_last_walkthrough_addresses() {
        let p = conv("HWC_C4").place([1, 4, 3, 4], &stab(4)).unwrap();
        let a = p.address_of([0, 2, 0, 0]).unwrap();
        assert_eq!((a.line, a.bank, a.offset), (0, 2, 2));
        assert_eq!(p.address_of([0, 0, 0, 1]).unwrap().line, 1);
        assert_eq!(p.address_of([0, 0, 1, 0]).unwrap().line, 4);
        assert!(matches!(p.address_of([0, 4, 0, 0]), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn mixed_radix_intra_offset() {
        let p = conv("CHW_W4H2C2").place([1, 2, 2, 4], &stab(16)).unwrap();
        let a = p.address_of([0, 1, 1, 3]).unwrap();
        assert_eq!((a.line, a.offset), (0, 15));
        assert_eq!(p.address_of([0, 0, 0, 0]).unwrap().offset, 0);
    }

    #[test]
    fn oversized_line_rejected() {
        assert!(conv("HWC_C32").place([1, 64, 4, 4], &stab(16)).is_err());
    }

    #[test]
    fn access_profile_counts_distinct_lines() {
        // Row-major 4-wide lines: four channels of one pixel sit in four lines
        // of the same bank.
        let p = conv("CHW_W4").place([1, 4, 4, 4], &stab(4)).unwrap();
        let addrs = (0..4).map(|c| p.address_of([0, c, 0, 0]).unwrap());
        assert_eq!(concurrent_access_profile(addrs), vec![(0, 4)]);
        let one = concurrent_access_profile([p.address_of([0, 1, 2, 3]).unwrap()]);
        assert_eq!(one, vec![(3, 1)]);
    }

    #[test]
    fn regimes() {
        use ReorderRegime::*;
        let c32 = conv("HWC_C32");
        let w32 = conv("HWC_W32");
        let c4w8 = conv("HWC_C4W8");
        assert_eq!(regime_allows(ArbitraryRir, &conv("HWC_C4"), &conv("MPQ_Q4(CHW_W4)")), Transition::Free);
        assert_eq!(regime_allows(FixedLayout, &c32, &c32), Transition::Free);
        assert_eq!(regime_allows(FixedLayout, &c32, &w32), Transition::Illegal);
        assert_eq!(regime_allows(Transpose, &c4w8, &c32), Transition::Illegal);
        assert_eq!(regime_allows(Transpose, &w32, &c32), Transition::Charged(ChargeKind::Rar));
        assert_eq!(regime_allows(RowReorder, &c4w8, &conv("HWC_W8C4")), Transition::Charged(ChargeKind::Rar));
        assert_eq!(regime_allows(RowReorder, &w32, &c32), Transition::Illegal);
        assert_eq!(regime_allows(TransposePlusRowReorder, &w32, &c32), Transition::Charged(ChargeKind::Rar));
        assert_eq!(regime_allows(OffChip, &c4w8, &c32), Transition::Charged(ChargeKind::OffChip));
        assert_eq!(regime_allows(LineRotation, &c32, &w32), Transition::Illegal);
        assert_eq!(regime_allows(LineRotation, &c32, &conv("WHC_C32")), Transition::Charged(ChargeKind::LineRotation));
    }

    #[test]
    fn shipped_spaces() {
        let conv = fixtures::conv_space();
        assert_eq!(conv.len(), 7);
        assert!(conv.iter().all(|l| l.line_words() == 32));
        assert_eq!(fixtures::gemm_space().len(), 3);
    }
}
