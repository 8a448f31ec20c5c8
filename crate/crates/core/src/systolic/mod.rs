//! Functional and cycle models of the 3D-stacked systolic array and of a
//! conventional edge-fed array.

mod cycles;
mod functional;
mod matrix;

use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};

pub use cycles::{decompose_low_ai, schedule_gemm, tile_cycles, GemmSchedule, GemvJob};
pub use functional::{functional_sim, restore_output, CycleTrace, OutputLayout, Phase, SimOutput};
pub use matrix::{deinterleave, interleave, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArrayKind {
    /// Conventional array, loaded from one edge.
    Nsa,
    /// TSV-fed array with ring-connected row and column buffers.
    Array3d,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayShape {
    pub rows: u32,
    pub cols: u32,
    pub count: u32,
    pub kind: ArrayKind,
}

impl ArrayShape {
    pub fn new(kind: ArrayKind, rows: u32, cols: u32, count: u32) -> Result<Self> {
        let s = Self { rows, cols, count, kind };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            bail!(Shape, "array dimensions must be positive");
        }
        if self.kind == ArrayKind::Array3d && self.rows != self.cols {
            bail!(Shape, "3D arrays must be square, got {}x{}", self.rows, self.cols);
        }
        Ok(())
    }

    pub fn pes(&self) -> u64 {
        self.rows as u64 * self.cols as u64
    }

    /// Peak MACs per cycle over all instances.
    pub fn peak_macs(&self) -> u64 {
        self.pes() * self.count as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    GemmWs,
    GemmIs,
    GemmOs,
    Gemv,
    GemvVcache,
}

impl JobKind {
    pub const ALL: [JobKind; 5] =
        [JobKind::GemmWs, JobKind::GemmIs, JobKind::GemmOs, JobKind::Gemv, JobKind::GemvVcache];

    pub fn is_gemv(self) -> bool {
        matches!(self, JobKind::Gemv | JobKind::GemvVcache)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSource {
    Hbm,
    VCache,
    Type1Sram,
}

/// One tile of work. For GEMV kinds `m` counts independent vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileJob {
    pub kind: JobKind,
    pub m: u32,
    pub k: u32,
    pub n: u32,
    pub source: WeightSource,
}

impl TileJob {
    pub fn new(kind: JobKind, m: u32, k: u32, n: u32) -> Self {
        let source = if kind == JobKind::GemvVcache { WeightSource::VCache } else { WeightSource::Hbm };
        Self { kind, m, k, n, source }
    }
}
