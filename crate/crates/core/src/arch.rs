// SPDX-License-Identifier: Apache-2.0

//! Architecture description: array size, buffers, energy table.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::ReorderRegime;

/// How the lines of a logical 2D buffer are spread over physical banks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Organization {
    /// Each line spans all banks; a bank holds `line_size / banks` adjacent
    /// words of every line.
    WordBanked { banks: u64 },
    /// Each bank holds whole lines; line `l` lives in bank `l % banks` where
    /// `banks = num_line / conflict_depth`.
    LineBanked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferSpec {
    pub num_line: u64,
    pub line_size: u64,
    pub conflict_depth: u64,
    pub read_ports: u32,
    pub write_ports: u32,
    #[serde(default = "one")]
    pub word_bytes: u64,
    pub organization: Organization,
}

fn one() -> u64 {
    1
}

fn default_registers() -> u64 {
    64
}

impl BufferSpec {
    /// Stationary-buffer organisation: one word (or a few adjacent words)
    /// per bank in every line.
    pub fn word_banked(num_line: u64, line_size: u64, banks: u64, ports: u32) -> Self {
        BufferSpec {
            num_line,
            line_size,
            conflict_depth: num_line,
            read_ports: ports,
            write_ports: ports,
            word_bytes: 1,
            organization: Organization::WordBanked { banks },
        }
    }

    /// A buffer whose banks hold whole lines.
    pub fn line_banked(num_line: u64, line_size: u64, conflict_depth: u64, ports: u32) -> Self {
        BufferSpec {
            num_line,
            line_size,
            conflict_depth,
            read_ports: ports,
            write_ports: ports,
            word_bytes: 1,
            organization: Organization::LineBanked,
        }
    }

    pub fn banks(&self) -> u64 {
        match self.organization {
            Organization::WordBanked { banks } => banks,
            Organization::LineBanked => self.num_line / self.conflict_depth,
        }
    }

    pub fn bank_of(&self, line: u64, offset: u64) -> u64 {
        match self.organization {
            Organization::WordBanked { banks } => offset * banks / self.line_size,
            Organization::LineBanked => line % self.banks(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArch(m));
        if self.num_line == 0 || self.line_size == 0 || self.conflict_depth == 0 {
            return bad("buffer extents must be >= 1".into());
        }
        if !self.num_line.is_multiple_of(self.conflict_depth) {
            return bad(format!("num_line {} not divisible by conflict_depth {}", self.num_line, self.conflict_depth));
        }
        // A bank serves either reads (ping role) or writes (pong role) within
        // one layer, so the two-port limit applies to each role.
        if self.read_ports == 0 || self.read_ports > 2 || self.write_ports > 2 {
            return bad(format!("ports per bank must be in 1..=2 (read {}, write {})", self.read_ports, self.write_ports));
        }
        if let Organization::WordBanked { banks } = self.organization {
            if banks == 0 || !self.line_size.is_multiple_of(banks) {
                return bad(format!("{banks} banks cannot evenly split a {}-word line", self.line_size));
            }
        }
        Ok(())
    }
}

/// Per-access energies in arbitrary units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EnergyTable(pub BTreeMap<String, f64>);

impl EnergyTable {
    pub const KEYS: [&'static str; 8] =
        ["mac", "register", "birrd_hop", "stab_read", "stab_write", "strb_read", "ob_access", "dram"];

    pub fn get(&self, key: &str) -> Result<f64> {
        self.0.get(key).copied().ok_or_else(|| Error::MissingEnergyEntry(key.to_string()))
    }

    /// Every entry set to `value`.
    pub fn uniform(value: f64) -> Self {
        EnergyTable(Self::KEYS.iter().map(|k| (k.to_string(), value)).collect())
    }
}

impl Default for EnergyTable {
    /// Relative costs in the usual register < network < SRAM << DRAM order.
    fn default() -> Self {
        let entries = [
            ("mac", 1.0),
            ("register", 0.5),
            ("birrd_hop", 0.3),
            ("stab_read", 6.0),
            ("stab_write", 6.0),
            ("strb_read", 6.0),
            ("ob_access", 2.0),
            ("dram", 200.0),
        ];
        EnergyTable(entries.iter().map(|(k, v)| (k.to_string(), *v)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub name: String,
    /// PE-array width; also the BIRRD input count.
    pub aw: usize,
    pub ah: usize,
    /// Stationary buffer (iActs in, oActs out); ping and pong are identical.
    pub stab: BufferSpec,
    /// Streaming buffer for weights: one wide single-bank line per access.
    pub strb: BufferSpec,
    /// Output buffer holding partial sums between reduction passes.
    pub ob: BufferSpec,
    /// Weight registers per PE; bounds the in-PE temporal reduction.
    #[serde(default = "default_registers")]
    pub pe_registers: u64,
    /// Bytes per cycle to and from DRAM.
    pub offchip_bandwidth: f64,
    #[serde(default)]
    pub energy: EnergyTable,
    #[serde(default)]
    pub reorder_regime: ReorderRegime,
}

impl ArchSpec {
    /// The default FEATHER configuration: 32-word StaB lines over 32
    /// dual-port banks, so every shipped layout fits one line.
    pub fn feather(aw: usize, ah: usize) -> Self {
        let line = (aw as u64).max(32);
        ArchSpec {
            name: format!("feather-{aw}x{ah}"),
            aw,
            ah,
            stab: BufferSpec::word_banked(1 << 20, line, line, 2),
            strb: BufferSpec::line_banked(1 << 16, aw as u64, 1 << 16, 2),
            ob: BufferSpec::word_banked(1 << 12, aw as u64, aw as u64, 2),
            pe_registers: default_registers(),
            offchip_bandwidth: 16.0,
            energy: EnergyTable::default(),
            reorder_regime: ReorderRegime::ArbitraryRir,
        }
    }

    /// A small array whose StaB line is exactly `aw` words with one word per
    /// bank, as in the walk-through examples.
    pub fn compact(aw: usize, ah: usize) -> Self {
        let mut arch = Self::feather(aw, ah);
        arch.name = format!("compact-{aw}x{ah}");
        arch.stab = BufferSpec::word_banked(1 << 16, aw as u64, aw as u64, 2);
        arch
    }

    /// The same buffers and energies on an `aw` x `ah` array, widening
    /// the buffers that must hold at least one word per column.
    pub fn resized(&self, aw: usize, ah: usize) -> Self {
        let mut a = self.clone();
        a.name = format!("{}-{aw}x{ah}", self.name);
        a.aw = aw;
        a.ah = ah;
        let w = aw as u64;
        if let Organization::WordBanked { banks } = a.stab.organization {
            if banks < w {
                a.stab = BufferSpec::word_banked(a.stab.num_line, a.stab.line_size.max(w), w, a.stab.read_ports);
            }
        }
        a.strb = BufferSpec::line_banked(a.strb.num_line, w, a.strb.conflict_depth, a.strb.read_ports);
        a.ob = BufferSpec::word_banked(a.ob.num_line, w, w, a.ob.read_ports);
        a
    }

    pub fn validate(&self) -> Result<()> {
        if !self.aw.is_power_of_two() || self.aw < 4 {
            return Err(Error::InvalidArch(format!("AW must be a power of two >= 4, got {}", self.aw)));
        }
        if self.ah == 0 {
            return Err(Error::InvalidArch("AH must be >= 1".into()));
        }
        if let Organization::WordBanked { banks } = self.stab.organization {
            if banks < self.aw as u64 {
                return Err(Error::InvalidArch(format!("StaB needs at least AW={} banks, has {banks}", self.aw)));
            }
        }
        if self.pe_registers == 0 {
            return Err(Error::InvalidArch("pe_registers must be >= 1".into()));
        }
        if self.offchip_bandwidth <= 0.0 {
            return Err(Error::InvalidArch("offchip_bandwidth must be positive".into()));
        }
        self.stab.validate()?;
        self.strb.validate()?;
        self.ob.validate()
    }

    pub fn pes(&self) -> u64 {
        (self.aw * self.ah) as u64
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let arch: ArchSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        arch.validate()?;
        Ok(arch)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("arch serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_arch_is_valid_and_round_trips() {
        let arch = ArchSpec::feather(16, 16);
        arch.validate().unwrap();
        assert_eq!(ArchSpec::from_toml(&arch.to_toml()).unwrap(), arch);
        assert_eq!(arch.stab.banks(), 32);
    }

    #[test]
    fn rejects_bad_widths() {
        assert!(ArchSpec::feather(12, 4).validate().is_err());
        assert!(ArchSpec::feather(2, 4).validate().is_err());
        let mut arch = ArchSpec::feather(8, 8);
        arch.stab.read_ports = 3;
        assert!(arch.validate().is_err());
    }

    #[test]
    fn bank_mapping() {
        let word = BufferSpec::word_banked(64, 32, 16, 2);
        assert_eq!(word.bank_of(7, 5), 2);
        let line = BufferSpec::line_banked(64, 8, 16, 2);
        assert_eq!(line.banks(), 4);
        assert_eq!(line.bank_of(7, 5), 3);
    }

    #[test]
    fn missing_energy_entry() {
        let mut table = EnergyTable::default();
        table.0.remove("dram");
        assert!(matches!(table.get("dram"), Err(Error::MissingEnergyEntry(_))));
    }
}
