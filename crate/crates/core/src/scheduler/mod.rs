//! Per-iteration operation DAGs under barrier scheduling and under
//! hardware-resource-aware operation fusion (HR-OFS).

mod build;
mod classify;

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;
use core::ops::Range;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::hardware::HardwareConfig;
use crate::rng::{stream, tag};
use crate::workload::OpCost;

pub use build::{build_conventional, build_hrofs, build_iteration_dag, LayerDag};
pub use classify::{classify_experts, detect_bottleneck, AiClass, AiLevel, Bottleneck, Thresholds};

/// First layer (1-based) whose DAG is fused.
pub const FUSION_ONSET_LAYER: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    QkvGen,
    PrefillAttn,
    DecodeAttn,
    Gating,
    OutProj,
    MoeHigh,
    MoeMid,
    MoeLow,
    Barrier,
}

impl OpKind {
    pub fn name(self) -> &'static str {
        match self {
            OpKind::QkvGen => "qkv_gen",
            OpKind::PrefillAttn => "prefill_attn",
            OpKind::DecodeAttn => "decode_attn",
            OpKind::Gating => "gating",
            OpKind::OutProj => "out_proj",
            OpKind::MoeHigh => "moe_high",
            OpKind::MoeMid => "moe_mid",
            OpKind::MoeLow => "moe_low",
            OpKind::Barrier => "barrier",
        }
    }

    pub fn is_moe(self) -> bool {
        matches!(self, OpKind::MoeHigh | OpKind::MoeMid | OpKind::MoeLow)
    }

    pub fn is_attention(self) -> bool {
        matches!(self, OpKind::PrefillAttn | OpKind::DecodeAttn)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResourceClass {
    /// Edge-fed arrays plus 3D arrays in GEMM mode.
    Gemm,
    A3dSimd,
    A3dSimdVcache,
    /// Baseline vector units in or beside the DRAM dies.
    MemorySimd,
    /// Zero-cost synchronization.
    Control,
}

impl ResourceClass {
    pub fn name(self) -> &'static str {
        match self {
            ResourceClass::Gemm => "gemm",
            ResourceClass::A3dSimd => "a3d_simd",
            ResourceClass::A3dSimdVcache => "a3d_simd_vcache",
            ResourceClass::MemorySimd => "memory_simd",
            ResourceClass::Control => "control",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertWork {
    pub expert: u32,
    pub shared: bool,
    pub level: AiLevel,
    /// Normalized gating score per token, aligned with the node's tokens.
    pub scores: Vec<f64>,
    /// The early expert prediction missed; one extra full fetch is charged.
    pub mispredicted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpNode {
    pub id: usize,
    pub kind: OpKind,
    pub layer: u32,
    /// Indices into the batch token order.
    pub tokens: Vec<u32>,
    pub resource: ResourceClass,
    pub cost: OpCost,
    pub deps: Vec<usize>,
    pub expert: Option<ExpertWork>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Conventional,
    Hrofs,
}

impl core::str::FromStr for Policy {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s.to_ascii_lowercase().replace('-', "").as_str() {
            "conventional" => Ok(Policy::Conventional),
            "hrofs" => Ok(Policy::Hrofs),
            other => crate::error::bail!(Config, "unknown policy `{other}`"),
        }
    }
}

impl Policy {
    pub fn name(self) -> &'static str {
        match self {
            Policy::Conventional => "conventional",
            Policy::Hrofs => "hrofs",
        }
    }
}

/// Cross-layer gating prediction modelled as an independent hit with
/// probability `accuracy` per predicted expert.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Predictor {
    pub accuracy: f64,
    pub seed: u64,
}

impl Predictor {
    pub fn new(accuracy: f64, seed: u64) -> crate::Result<Self> {
        if !(0.0..=1.0).contains(&accuracy) {
            crate::error::bail!(Config, "predictor accuracy must be in [0, 1], got {accuracy}");
        }
        Ok(Self { accuracy, seed })
    }

    pub fn mispredicted(&self, iteration: u64, layer: u32, expert: u32) -> bool {
        let mut rng = stream(&[tag::PREDICTOR, self.seed, iteration, layer as u64, expert as u64]);
        rng.random::<f64>() >= self.accuracy
    }
}

/// Maps op kinds onto the resource classes the hardware offers.
pub fn assign_resources(nodes: &mut [OpNode], hw: &HardwareConfig) {
    let a3d = hw.a3d.is_some_and(|a| a.count > 0);
    let simd = hw.simd;
    for n in nodes {
        n.resource = match n.kind {
            OpKind::Barrier => ResourceClass::Control,
            OpKind::QkvGen | OpKind::PrefillAttn | OpKind::OutProj | OpKind::Gating | OpKind::MoeHigh => {
                ResourceClass::Gemm
            }
            OpKind::DecodeAttn if a3d => ResourceClass::A3dSimd,
            OpKind::DecodeAttn if simd.is_some_and(|s| s.runs_decode_attn) => ResourceClass::MemorySimd,
            OpKind::MoeLow if a3d => ResourceClass::A3dSimd,
            OpKind::MoeMid if a3d => ResourceClass::A3dSimdVcache,
            OpKind::MoeLow | OpKind::MoeMid if simd.is_some_and(|s| s.runs_low_ai_moe) => ResourceClass::MemorySimd,
            _ => ResourceClass::Gemm,
        };
    }
}

/// All layers of one iteration, ids global and in priority order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationDag {
    pub nodes: Vec<OpNode>,
    pub layers: Vec<Range<usize>>,
    pub regimes: Vec<Bottleneck>,
}

impl IterationDag {
    pub fn layer_nodes(&self, layer: usize) -> &[OpNode] {
        &self.nodes[self.layers[layer].clone()]
    }

    /// One node per line: id, kind, layer, resource, cost, deps.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for n in &self.nodes {
            let deps: Vec<String> = n.deps.iter().map(|d| d.to_string()).collect();
            let expert = n.expert.as_ref().map_or(String::new(), |e| format!(" expert={}", e.expert));
            let _ = writeln!(
                out,
                "{} {} layer={} resource={} tokens={} flops={} hbm_bytes={}{} deps=[{}]",
                n.id,
                n.kind.name(),
                n.layer + 1,
                n.resource.name(),
                n.tokens.len(),
                n.cost.flops,
                n.cost.hbm_bytes(),
                expert,
                deps.join(",")
            );
        }
        out
    }

    /// Kahn's algorithm; `Err` names a node on a cycle.
    pub fn check_acyclic(&self) -> crate::Result<()> {
        let n = self.nodes.len();
        let mut indeg = alloc::vec![0usize; n];
        let mut succ: Vec<Vec<usize>> = alloc::vec![Vec::new(); n];
        for node in &self.nodes {
            for &d in &node.deps {
                if d >= n {
                    crate::error::bail!(Scheduler, "node {} depends on missing node {d}", node.id);
                }
                indeg[node.id] += 1;
                succ[d].push(node.id);
            }
        }
        let mut stack: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut seen = 0;
        while let Some(i) = stack.pop() {
            seen += 1;
            for &s in &succ[i] {
                indeg[s] -= 1;
                if indeg[s] == 0 {
                    stack.push(s);
                }
            }
        }
        if seen != n {
            let bad = (0..n).find(|&i| indeg[i] > 0).unwrap_or(0);
            crate::error::bail!(Scheduler, "dependency cycle through node {bad}");
        }
        Ok(())
    }
}
