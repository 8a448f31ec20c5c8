use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::{ArrayKind, ArrayShape, JobKind, TileJob, WeightSource};
use crate::error::{bail, Result};

/// Cycles to run one tile on one array instance.
///
/// 3D arrays: 2 TSV load cycles + `R` compute + 1 drain. Edge-fed arrays:
/// `R` weight preload + `M_t + 2R - 2` skewed stream, where `M_t` is `R` for
/// GEMM tiles and 1 for a GEMV vector.
pub fn tile_cycles(job: &TileJob, array: &ArrayShape) -> Result<u64> {
    array.validate()?;
    let r = array.rows as u64;
    Ok(match (array.kind, job.kind) {
        (ArrayKind::Array3d, _) => r + 3,
        (ArrayKind::Nsa, JobKind::GemvVcache) => {
            bail!(UnsupportedMode, "V-Cache GEMV needs a 3D array")
        }
        (ArrayKind::Nsa, JobKind::Gemv) => r + 1 + 2 * r - 2,
        (ArrayKind::Nsa, _) => r + r + 2 * r - 2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GemmSchedule {
    pub tiles: u64,
    pub tile_cycles: u64,
    /// Single instance, tiles back to back.
    pub cycles: u64,
}

/// Tiles an `m x k x n` product onto one array. Edge tiles cost full tiles.
pub fn schedule_gemm(m: u64, k: u64, n: u64, array: &ArrayShape, kind: JobKind) -> Result<GemmSchedule> {
    if m == 0 || k == 0 || n == 0 {
        bail!(Shape, "GEMM dimensions must be positive, got {m}x{k}x{n}");
    }
    let r = array.rows as u64;
    let c = array.cols as u64;
    let tc = tile_cycles(&TileJob { kind, m: 1, k: 1, n: 1, source: WeightSource::Hbm }, array)?;
    let m_tiles = match (array.kind, kind) {
        (ArrayKind::Nsa, JobKind::Gemv) => m,
        _ => m.div_ceil(r),
    };
    let tiles = m_tiles * k.div_ceil(r) * n.div_ceil(c);
    Ok(GemmSchedule { tiles, tile_cycles: tc, cycles: tiles * tc })
}

/// One vector-times-panel product produced by [`decompose_low_ai`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GemvJob {
    pub vector: u64,
    pub col_start: u64,
    pub cols: u64,
    pub k: u64,
    pub source: WeightSource,
}

impl GemvJob {
    pub fn weight_bytes(&self, element_bytes: u64) -> u64 {
        self.k * self.cols * element_bytes
    }
}

/// Splits a low-intensity `m x k x n` GEMM into `m` GEMVs per weight panel.
///
/// The `k x n` panel is cut column-wise into the widest pieces that fit the
/// V-Cache. Each piece is read from HBM by the first vector and from the
/// V-Cache by the rest. When not even one column fits, every vector reads
/// the whole panel from HBM.
pub fn decompose_low_ai(m: u64, k: u64, n: u64, vcache_bytes: u64, element_bytes: u64) -> Result<Vec<GemvJob>> {
    if element_bytes == 0 {
        bail!(Config, "element size must be positive");
    }
    if m == 0 || k == 0 || n == 0 {
        bail!(Shape, "GEMM dimensions must be positive, got {m}x{k}x{n}");
    }
    let width = (vcache_bytes / (k * element_bytes)).min(n);
    let mut jobs = Vec::new();
    if width == 0 {
        for vector in 0..m {
            jobs.push(GemvJob { vector, col_start: 0, cols: n, k, source: WeightSource::Hbm });
        }
        return Ok(jobs);
    }
    let mut col_start = 0;
    while col_start < n {
        let cols = width.min(n - col_start);
        for vector in 0..m {
            let source = if vector == 0 { WeightSource::Hbm } else { WeightSource::VCache };
            jobs.push(GemvJob { vector, col_start, cols, k, source });
        }
        col_start += cols;
    }
    Ok(jobs)
}
