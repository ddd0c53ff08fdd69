// SPDX-License-Identifier: Apache-2.0

//! Named comparison designs as (mapspace constraint, reorder regime,
//! fixed layouts) triples. The shipped profiles live in `data/profiles/`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::arch::ArchSpec;
use crate::error::{Error, Result};
use crate::layout::ReorderRegime;
use crate::mapping::MapspaceConstraint;
use crate::search::SearchConfig;

const SHIPPED: &[(&str, &str)] = &[
    ("feather", include_str!("../data/profiles/feather.toml")),
    ("nvdla-like", include_str!("../data/profiles/nvdla-like.toml")),
    ("eyeriss-like", include_str!("../data/profiles/eyeriss-like.toml")),
    ("sigma-like-c32", include_str!("../data/profiles/sigma-like-c32.toml")),
    ("sigma-like-c4w8", include_str!("../data/profiles/sigma-like-c4w8.toml")),
    ("sigma-like-offchip", include_str!("../data/profiles/sigma-like-offchip.toml")),
    ("medusa-like", include_str!("../data/profiles/medusa-like.toml")),
    ("mtia-like", include_str!("../data/profiles/mtia-like.toml")),
    ("tpu-like", include_str!("../data/profiles/tpu-like.toml")),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineProfile {
    pub name: String,
    pub regime: ReorderRegime,
    /// Layouts the design is locked to; conv and GEMM texts may both
    /// appear, each layer uses the ones of its kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_layouts: Option<Vec<String>>,
    /// Array size of the original design, used instead of the desk-scale
    /// array when asked for.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub native_array: Option<[usize; 2]>,
    pub constraint: MapspaceConstraint,
}

impl BaselineProfile {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("profile: {e}")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("profile: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// `base` restricted to this design.
    pub fn search_config(&self, base: &SearchConfig) -> SearchConfig {
        let mut c = base.clone();
        c.constraint = self.constraint.clone();
        c.regime = Some(self.regime);
        if let Some(f) = &self.fixed_layouts {
            c.layout_space = f.clone();
        }
        c
    }

    /// `arch` with this design's regime, resized to the original array
    /// when `native_scale` is set.
    pub fn arch(&self, arch: &ArchSpec, native_scale: bool) -> ArchSpec {
        let mut a = arch.clone();
        if let (true, Some([aw, ah])) = (native_scale, self.native_array) {
            a = a.resized(aw, ah);
        }
        a.reorder_regime = self.regime;
        a
    }
}

/// Names of the shipped profiles.
pub fn names() -> Vec<&'static str> {
    SHIPPED.iter().map(|(n, _)| *n).collect()
}

/// A shipped profile by name.
pub fn profile(name: &str) -> Result<BaselineProfile> {
    let (_, text) = SHIPPED.iter().find(|(n, _)| *n == name).ok_or_else(|| Error::UnknownBaseline(name.to_string()))?;
    BaselineProfile::from_toml(text)
}
