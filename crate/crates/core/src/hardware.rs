//! Hardware configurations and the bundled presets.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::memory::{EnergyCoefficients, MemoryConfig};
use crate::systolic::{ArrayKind, ArrayShape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimdLocation {
    /// Processing-in-memory next to the DRAM banks.
    InDram,
    /// Vector units on the HBM base die, reached through TSVs.
    HbmLogicDie,
}

/// Memory-side vector compute of the baseline systems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimdPool {
    pub location: SimdLocation,
    pub flops_per_cycle: f64,
    /// Independently schedulable lanes.
    pub lanes: u32,
    pub mac_pj: f64,
    pub runs_decode_attn: bool,
    pub runs_low_ai_moe: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerCaps {
    /// Watts with liquid cooling.
    pub cooled_w: f64,
    pub uncooled_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareConfig {
    pub name: String,
    /// Edge-fed GEMM arrays.
    pub nsa: Vec<ArrayShape>,
    /// Reconfigurable 3D arrays (GEMM, SIMD and SIMD-V-Cache modes).
    pub a3d: Option<ArrayShape>,
    pub simd: Option<SimdPool>,
    pub memory: MemoryConfig,
    pub frequency_hz: f64,
    pub power: PowerCaps,
}

impl HardwareConfig {
    pub fn validate(&self) -> Result<()> {
        self.memory.validate()?;
        for s in &self.nsa {
            s.validate()?;
            if s.kind != ArrayKind::Nsa {
                bail!(Config, "GEMM pools must be edge-fed arrays");
            }
        }
        if let Some(a) = &self.a3d {
            a.validate()?;
            if a.kind != ArrayKind::Array3d {
                bail!(Config, "the reconfigurable pool must be a 3D array");
            }
        }
        if self.nsa.iter().all(|s| s.count == 0) && self.a3d.map_or(true, |a| a.count == 0) {
            bail!(Config, "no GEMM-capable arrays configured");
        }
        if let Some(p) = &self.simd {
            if !(p.flops_per_cycle > 0.0) || p.lanes == 0 || !(p.mac_pj >= 0.0) {
                bail!(Config, "invalid memory-side SIMD pool");
            }
        }
        if !(self.frequency_hz > 0.0) {
            bail!(Config, "frequency must be positive");
        }
        if !(self.power.cooled_w > 0.0) || !(self.power.uncooled_w > 0.0) {
            bail!(Config, "power caps must be positive");
        }
        Ok(())
    }

    /// Array MACs per cycle over the GEMM and 3D pools.
    pub fn array_macs_per_cycle(&self) -> u64 {
        self.nsa.iter().map(ArrayShape::peak_macs).sum::<u64>() + self.a3d.map_or(0, |a| a.peak_macs())
    }

    pub fn peak_flops(&self) -> f64 {
        2.0 * self.array_macs_per_cycle() as f64 * self.frequency_hz
    }

    /// Roofline ridge point in FLOPs per byte.
    pub fn ridge_point(&self) -> f64 {
        self.peak_flops() / self.memory.aggregate_bandwidth()
    }

    pub fn bytes_per_cycle(&self) -> f64 {
        self.memory.aggregate_bandwidth() / self.frequency_hz
    }

    pub fn power_cap(&self, cooled: bool) -> f64 {
        if cooled {
            self.power.cooled_w
        } else {
            self.power.uncooled_w
        }
    }

    fn a3d_base(name: &str, scale: u32) -> Self {
        Self {
            name: name.to_string(),
            nsa: vec![ArrayShape { rows: 32, cols: 32, count: 384 * scale, kind: ArrayKind::Nsa }],
            a3d: Some(ArrayShape { rows: 16, cols: 16, count: 512 * scale, kind: ArrayKind::Array3d }),
            simd: None,
            memory: MemoryConfig {
                hbm_count: scale,
                bandwidth_per_hbm: 9600e9,
                hbm_capacity: 36 << 30,
                type1_sram: (16 << 20) * scale as u64,
                type2_sram: (16 << 20) * scale as u64,
                dram_row_bytes: 1024,
                energy: EnergyCoefficients::default(),
                interposer: false,
                interposer_distance_mm: 5.0,
            },
            frequency_hz: 1e9,
            power: PowerCaps { cooled_w: 100.0 * scale as f64, uncooled_w: 50.0 * scale as f64 },
        }
    }

    pub fn a3d_moe_1() -> Self {
        Self::a3d_base("a3d-moe-1", 1)
    }

    pub fn a3d_moe_2() -> Self {
        Self::a3d_base("a3d-moe-2", 2)
    }

    /// 2.5D NPU plus in-DRAM SIMD for decode attention. The 16x16 arrays
    /// become plain edge-fed arrays.
    pub fn neupim_like() -> Self {
        let mut h = Self::a3d_base("neupim-like", 1);
        h.nsa.push(ArrayShape { rows: 16, cols: 16, count: 512, kind: ArrayKind::Nsa });
        h.a3d = None;
        h.memory.type2_sram = 0;
        h.memory.interposer = true;
        let mac_pj = 3.0 * h.memory.energy.mac_pj;
        h.simd = Some(SimdPool {
            location: SimdLocation::InDram,
            flops_per_cycle: 16_000.0,
            lanes: 64,
            mac_pj,
            runs_decode_attn: true,
            runs_low_ai_moe: false,
        });
        h
    }

    /// 2.5D NPU plus vector units on the HBM logic die for decode attention
    /// and low-intensity experts.
    pub fn duplex_like() -> Self {
        let mut h = Self::neupim_like();
        h.name = "duplex-like".to_string();
        let mac_pj = 2.0 * h.memory.energy.mac_pj;
        h.simd = Some(SimdPool {
            location: SimdLocation::HbmLogicDie,
            flops_per_cycle: 64_000.0,
            lanes: 64,
            mac_pj,
            runs_decode_attn: true,
            runs_low_ai_moe: true,
        });
        h.power = PowerCaps { cooled_w: 80.0, uncooled_w: 40.0 };
        h
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "a3d1" | "a3d-moe-1" => Some(Self::a3d_moe_1()),
            "a3d2" | "a3d-moe-2" => Some(Self::a3d_moe_2()),
            "neupim" | "neupim-like" => Some(Self::neupim_like()),
            "duplex" | "duplex-like" => Some(Self::duplex_like()),
            _ => None,
        }
    }

    pub const PRESETS: [&'static str; 4] = ["a3d-moe-1", "a3d-moe-2", "neupim-like", "duplex-like"];
}
