use serde::{Deserialize, Serialize};

use super::{charge_dram_read, AccessLedger, MemoryConfig, TransportPath};
use crate::error::{bail, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    Fp8,
    Bf16,
}

impl core::str::FromStr for Precision {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fp8" => Ok(Self::Fp8),
            "bf16" => Ok(Self::Bf16),
            other => bail!(Config, "unknown precision `{other}`"),
        }
    }
}

/// Rows of one split expert. FP8 halves sit on odd rows starting at
/// `base_row`; the residual bytes sit on the even row right after each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertPlacement {
    pub expert_id: u32,
    pub layer: u32,
    pub base_row: u64,
    pub rows_per_half: u64,
    pub bytes_fp8: u64,
    pub bytes_residual: u64,
}

impl ExpertPlacement {
    pub fn fp8_rows(&self) -> impl Iterator<Item = u64> {
        let base = self.base_row;
        (0..self.rows_per_half).map(move |i| base + 2 * i)
    }

    pub fn residual_rows(&self) -> impl Iterator<Item = u64> {
        let base = self.base_row + 1;
        (0..self.rows_per_half).map(move |i| base + 2 * i)
    }

    pub fn rows_touched(&self, precision: Precision) -> u64 {
        match precision {
            Precision::Fp8 => self.rows_per_half,
            Precision::Bf16 => 2 * self.rows_per_half,
        }
    }
}

/// Static row allocator over the whole HBM address space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Placer {
    next_row: u64,
    total_rows: u64,
    row_bytes: u64,
}

impl Placer {
    pub fn new(cfg: &MemoryConfig) -> Self {
        Self { next_row: 0, total_rows: cfg.total_rows(), row_bytes: cfg.dram_row_bytes }
    }

    pub fn rows_used(&self) -> u64 {
        self.next_row
    }

    /// Reserves plain rows (dense weights, KV cache) ahead of the experts.
    pub fn reserve(&mut self, bytes: u64) -> Result<()> {
        let rows = bytes.div_ceil(self.row_bytes);
        if self.next_row + rows > self.total_rows {
            bail!(Placement, "{bytes} B does not fit in the remaining HBM capacity");
        }
        self.next_row += rows;
        Ok(())
    }
}

/// Places a BF16 expert of `bytes` bytes, alternating odd (FP8) and even
/// (residual) rows from the next odd row.
pub fn place_expert(placer: &mut Placer, expert_id: u32, layer: u32, bytes: u64) -> Result<ExpertPlacement> {
    if bytes == 0 || bytes % 2 != 0 {
        bail!(Contract, "expert size must be even and positive, got {bytes}");
    }
    let half = bytes / 2;
    let rows_per_half = half.div_ceil(placer.row_bytes);
    let base_row = placer.next_row | 1;
    let end = base_row + 2 * rows_per_half;
    if end > placer.total_rows {
        bail!(
            Placement,
            "expert {expert_id} of layer {layer} needs rows up to {end}, HBM has {}",
            placer.total_rows
        );
    }
    placer.next_row = end;
    Ok(ExpertPlacement { expert_id, layer, base_row, rows_per_half, bytes_fp8: half, bytes_residual: half })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FetchResult {
    pub bytes: u64,
    pub row_activations: u64,
    pub cycles: f64,
    pub energy_pj: f64,
}

/// Reads an expert at `precision` and moves it over `path`. Whole rows are
/// transferred, so FP8 and BF16 fetches stream at the same bytes per cycle.
pub fn fetch_expert(
    placement: &ExpertPlacement,
    precision: Precision,
    cfg: &MemoryConfig,
    frequency_hz: f64,
    path: TransportPath,
    ledger: &mut AccessLedger,
) -> FetchResult {
    let rows = placement.rows_touched(precision);
    let bytes = rows * cfg.dram_row_bytes;
    let before = ledger.total_pj();
    charge_dram_read(bytes, path, cfg, ledger);
    match precision {
        Precision::Fp8 => ledger.expert.fp8_fetches += 1,
        Precision::Bf16 => ledger.expert.bf16_fetches += 1,
    }
    ledger.expert.bytes += bytes;
    ledger.expert.row_activations += rows;
    FetchResult {
        bytes,
        row_activations: rows,
        cycles: bytes as f64 / cfg.aggregate_bandwidth() * frequency_hz,
        energy_pj: ledger.total_pj() - before,
    }
}
