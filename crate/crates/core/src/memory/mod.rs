//! HBM, Type-1 SRAM and V-Cache byte, cycle and energy accounting.

mod ledger;
mod placement;

use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};

pub use ledger::{AccessLedger, Category, CategoryTotals, ExpertFetchStats};
pub use placement::{fetch_expert, place_expert, ExpertPlacement, FetchResult, Placer, Precision};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyCoefficients {
    pub dram_pj_per_byte: f64,
    pub tsv_pj_per_byte: f64,
    pub serdes_pj_per_byte: f64,
    pub noc_pj_per_byte_mm: f64,
    pub sram_pj_per_byte: f64,
    pub mac_pj: f64,
}

impl Default for EnergyCoefficients {
    fn default() -> Self {
        Self {
            dram_pj_per_byte: 3.5,
            tsv_pj_per_byte: 0.4,
            serdes_pj_per_byte: 1.5,
            noc_pj_per_byte_mm: 0.8,
            sram_pj_per_byte: 0.2,
            mac_pj: 0.8,
        }
    }
}

impl EnergyCoefficients {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.dram_pj_per_byte,
            self.tsv_pj_per_byte,
            self.serdes_pj_per_byte,
            self.noc_pj_per_byte_mm,
            self.sram_pj_per_byte,
            self.mac_pj,
        ];
        if all.iter().any(|c| !(*c >= 0.0) || !c.is_finite()) {
            bail!(Config, "energy coefficients must be finite and non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryConfig {
    pub hbm_count: u32,
    /// Bytes per second per stack.
    pub bandwidth_per_hbm: f64,
    /// Bytes per stack.
    pub hbm_capacity: u64,
    pub type1_sram: u64,
    /// V-Cache bytes.
    pub type2_sram: u64,
    pub dram_row_bytes: u64,
    pub energy: EnergyCoefficients,
    /// Off-die traffic crosses SerDes and the interposer NoC instead of TSVs.
    pub interposer: bool,
    pub interposer_distance_mm: f64,
}

impl MemoryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hbm_count == 0 {
            bail!(Config, "at least one HBM stack is required");
        }
        if !(self.bandwidth_per_hbm > 0.0) || !self.bandwidth_per_hbm.is_finite() {
            bail!(Config, "HBM bandwidth must be positive");
        }
        if self.dram_row_bytes == 0 {
            bail!(Config, "dram_row_bytes must be positive");
        }
        if !(self.interposer_distance_mm >= 0.0) {
            bail!(Config, "interposer distance must be non-negative");
        }
        self.energy.validate()
    }

    /// Bytes per second over all stacks.
    pub fn aggregate_bandwidth(&self) -> f64 {
        self.bandwidth_per_hbm * self.hbm_count as f64
    }

    pub fn total_capacity(&self) -> u64 {
        self.hbm_capacity * self.hbm_count as u64
    }

    pub fn total_rows(&self) -> u64 {
        self.total_capacity() / self.dram_row_bytes
    }

    /// Path taken by bytes leaving the DRAM dies toward the NPU.
    pub fn npu_path(&self) -> TransportPath {
        if self.interposer {
            TransportPath::SerdesNoc
        } else {
            TransportPath::Tsv
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportPath {
    Tsv,
    SerdesNoc,
    OnDieNoc,
    /// Consumed where it is read (in-DRAM compute).
    Local,
}

/// Picojoules to move `bytes` over `path`.
pub fn transport_energy(bytes: u64, path: TransportPath, distance_mm: f64, cfg: &MemoryConfig) -> Result<f64> {
    if !(distance_mm >= 0.0) {
        bail!(Config, "distance must be non-negative, got {distance_mm}");
    }
    let e = &cfg.energy;
    let per_byte = match path {
        TransportPath::Tsv => e.tsv_pj_per_byte,
        TransportPath::SerdesNoc => e.serdes_pj_per_byte + e.noc_pj_per_byte_mm * distance_mm,
        TransportPath::OnDieNoc => e.noc_pj_per_byte_mm * distance_mm,
        TransportPath::Local => 0.0,
    };
    Ok(bytes as f64 * per_byte)
}

/// Charges `bytes` read from DRAM and moved over `path`.
pub fn charge_dram_read(bytes: u64, path: TransportPath, cfg: &MemoryConfig, ledger: &mut AccessLedger) {
    let rows = bytes.div_ceil(cfg.dram_row_bytes);
    ledger.record(Category::Dram, rows, bytes, bytes as f64 * cfg.energy.dram_pj_per_byte);
    charge_transport(bytes, path, cfg, ledger);
}

pub fn charge_transport(bytes: u64, path: TransportPath, cfg: &MemoryConfig, ledger: &mut AccessLedger) {
    let e = &cfg.energy;
    match path {
        TransportPath::Tsv => ledger.record(Category::Tsv, 1, bytes, bytes as f64 * e.tsv_pj_per_byte),
        TransportPath::SerdesNoc => {
            ledger.record(Category::Serdes, 1, bytes, bytes as f64 * e.serdes_pj_per_byte);
            let bmm = bytes as f64 * cfg.interposer_distance_mm;
            ledger.record(Category::Noc, 1, bytes, bmm * e.noc_pj_per_byte_mm);
            ledger.noc_byte_mm += bmm;
        }
        TransportPath::OnDieNoc => {
            let bmm = bytes as f64 * cfg.interposer_distance_mm;
            ledger.record(Category::Noc, 1, bytes, bmm * e.noc_pj_per_byte_mm);
            ledger.noc_byte_mm += bmm;
        }
        TransportPath::Local => {}
    }
}

pub fn charge_sram(bytes: u64, cfg: &MemoryConfig, ledger: &mut AccessLedger) {
    ledger.record(Category::Sram, 1, bytes, bytes as f64 * cfg.energy.sram_pj_per_byte);
}

pub fn charge_macs(macs: u64, mac_pj: f64, ledger: &mut AccessLedger) {
    ledger.record(Category::Mac, macs, 0, macs as f64 * mac_pj);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VcacheSession {
    pub hbm_bytes: u64,
    pub vcache_write_bytes: u64,
    pub vcache_read_bytes: u64,
    pub energy_pj: f64,
}

/// Pins one weight panel in the V-Cache for `reuse_count` consumers: one
/// HBM read, one SRAM write, `reuse_count` SRAM reads. The panel is dropped
/// when the session ends.
pub fn vcache_session(
    panel_bytes: u64,
    reuse_count: u64,
    cfg: &MemoryConfig,
    ledger: &mut AccessLedger,
) -> Result<VcacheSession> {
    if panel_bytes > cfg.type2_sram {
        bail!(Contract, "panel of {panel_bytes} B exceeds the {} B V-Cache", cfg.type2_sram);
    }
    let before = ledger.total_pj();
    charge_dram_read(panel_bytes, TransportPath::Tsv, cfg, ledger);
    charge_sram(panel_bytes, cfg, ledger);
    charge_sram(panel_bytes * reuse_count, cfg, ledger);
    Ok(VcacheSession {
        hbm_bytes: panel_bytes,
        vcache_write_bytes: panel_bytes,
        vcache_read_bytes: panel_bytes * reuse_count,
        energy_pj: ledger.total_pj() - before,
    })
}
