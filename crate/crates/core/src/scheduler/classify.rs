use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::hardware::HardwareConfig;
use crate::workload::{ExpertLoad, LayerCost};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AiLevel {
    High,
    Mid,
    Low,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AiClass {
    pub expert: u32,
    pub tokens: u64,
    pub level: AiLevel,
}

/// Token-count cut-offs. An expert's arithmetic intensity is roughly its
/// token count, so the ridge point doubles as the High threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub high: f64,
    pub low: f64,
}

impl Thresholds {
    pub fn for_hardware(hw: &HardwareConfig) -> Self {
        Self { high: hw.ridge_point(), low: 2.0 }
    }

    pub fn level(&self, tokens: u64) -> AiLevel {
        let t = tokens as f64;
        if t >= self.high {
            AiLevel::High
        } else if t <= self.low {
            AiLevel::Low
        } else {
            AiLevel::Mid
        }
    }
}

pub fn classify_experts(loads: &[ExpertLoad], thresholds: &Thresholds) -> Vec<AiClass> {
    loads
        .iter()
        .map(|l| AiClass { expert: l.expert, tokens: l.num_tokens(), level: thresholds.level(l.num_tokens()) })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bottleneck {
    DecodeDominant,
    PrefillDominant,
    DecodeOnly,
}

/// Decode attention time at full bandwidth against prefill attention time
/// at peak FLOP/s.
pub fn detect_bottleneck(cost: &LayerCost, hw: &HardwareConfig) -> Bottleneck {
    if cost.prefill_attn.is_empty() {
        return Bottleneck::DecodeOnly;
    }
    let decode_bytes: u64 = cost.decode_attn.iter().map(|c| c.hbm_bytes()).sum();
    let prefill_flops: u64 = cost.prefill_attn.iter().map(|c| c.flops).sum();
    let decode_s = decode_bytes as f64 / hw.memory.aggregate_bandwidth();
    let prefill_s = prefill_flops as f64 / hw.peak_flops();
    if decode_s > prefill_s {
        Bottleneck::DecodeDominant
    } else {
        Bottleneck::PrefillDominant
    }
}
