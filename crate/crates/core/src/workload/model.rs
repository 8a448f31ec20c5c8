use alloc::string::{String, ToString};
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionKind {
    Mha,
    Gqa,
    Mla,
}

impl core::str::FromStr for AttentionKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mha" => Ok(Self::Mha),
            "gqa" => Ok(Self::Gqa),
            "mla" => Ok(Self::Mla),
            other => bail!(Config, "unknown attention kind `{other}`"),
        }
    }
}

/// Dimensions and expert topology of a fine-grained MoE transformer.
///
/// Only shapes are modelled: every weight matrix exists as a byte and FLOP
/// count derived from these fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub name: String,
    pub hidden_dim: u64,
    pub num_heads: u64,
    pub head_dim: u64,
    /// Intermediate width of one expert.
    pub ffn_dim: u64,
    pub num_layers: u32,
    /// Routed experts per layer.
    pub num_experts: u32,
    pub top_k: u32,
    pub num_shared_experts: u32,
    pub attention: AttentionKind,
    /// Key/value groups, used when `attention` is GQA.
    pub gqa_groups: u64,
    /// Compressed KV width for MLA. `None` means `hidden_dim / 4`.
    pub mla_latent_dim: Option<u64>,
    pub weight_bits: u32,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hidden_dim", self.hidden_dim),
            ("num_heads", self.num_heads),
            ("head_dim", self.head_dim),
            ("ffn_dim", self.ffn_dim),
            ("num_layers", self.num_layers as u64),
            ("num_experts", self.num_experts as u64),
            ("top_k", self.top_k as u64),
            ("gqa_groups", self.gqa_groups),
        ];
        for (name, v) in positive {
            if v == 0 {
                bail!(Config, "{name} must be positive");
            }
        }
        if self.hidden_dim != self.num_heads * self.head_dim {
            bail!(
                Config,
                "hidden_dim {} != num_heads {} * head_dim {}",
                self.hidden_dim,
                self.num_heads,
                self.head_dim
            );
        }
        if self.top_k > self.num_experts {
            bail!(Config, "top_k {} exceeds num_experts {}", self.top_k, self.num_experts);
        }
        if self.gqa_groups > self.num_heads {
            bail!(Config, "gqa_groups {} exceeds num_heads {}", self.gqa_groups, self.num_heads);
        }
        if self.weight_bits == 0 || self.weight_bits % 8 != 0 {
            bail!(Config, "weight_bits must be a positive multiple of 8, got {}", self.weight_bits);
        }
        if self.mla_latent_dim == Some(0) {
            bail!(Config, "mla_latent_dim must be positive");
        }
        Ok(())
    }

    pub fn bytes_per_element(&self) -> u64 {
        (self.weight_bits / 8) as u64
    }

    /// Width of the per-token K (and V) cache entry.
    pub fn kv_dim(&self) -> u64 {
        match self.attention {
            AttentionKind::Mha => self.hidden_dim,
            AttentionKind::Gqa => self.hidden_dim * self.gqa_groups / self.num_heads,
            AttentionKind::Mla => self.mla_latent_dim.unwrap_or(self.hidden_dim / 4),
        }
    }

    /// Routed plus shared experts per layer.
    pub fn experts_per_layer(&self) -> u32 {
        self.num_experts + self.num_shared_experts
    }

    /// W^G, W^U and W^D of one expert.
    pub fn expert_bytes(&self) -> u64 {
        3 * self.hidden_dim * self.ffn_dim * self.bytes_per_element()
    }

    pub fn total_expert_bytes(&self) -> u64 {
        self.expert_bytes() * self.experts_per_layer() as u64 * self.num_layers as u64
    }

    fn preset(
        name: &str,
        ffn_dim: u64,
        num_layers: u32,
        num_experts: u32,
        top_k: u32,
        num_shared_experts: u32,
        attention: AttentionKind,
    ) -> Self {
        Self {
            name: name.to_string(),
            hidden_dim: 2048,
            num_heads: 16,
            head_dim: 128,
            ffn_dim,
            num_layers,
            num_experts,
            top_k,
            num_shared_experts,
            attention,
            gqa_groups: 16,
            mla_latent_dim: None,
            weight_bits: 16,
        }
    }

    /// OLMoE-1B-7B: 64 experts, 8 active, MHA.
    pub fn olmoe_1b_7b() -> Self {
        Self::preset("OLMoE-1B-7B", 1024, 16, 64, 8, 0, AttentionKind::Mha)
    }

    /// DeepSeek-V2-Lite: 64 routed experts, 6 active plus 1 shared, MLA.
    pub fn deepseek_v2_lite() -> Self {
        let mut m = Self::preset("DeepSeek-V2-Lite", 1408, 27, 64, 6, 1, AttentionKind::Mla);
        m.mla_latent_dim = Some(512);
        m
    }

    /// Qwen1.5-MoE-A2.7B: 60 routed experts, 2 active plus 1 shared, MHA.
    pub fn qwen15_moe_a27b() -> Self {
        Self::preset("Qwen-1.5-MoE-A2.7B", 1408, 24, 60, 2, 1, AttentionKind::Mha)
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "olmoe" | "olmoe-1b-7b" => Some(Self::olmoe_1b_7b()),
            "deepseek" | "deepseek-v2-lite" => Some(Self::deepseek_v2_lite()),
            "qwen" | "qwen1.5-moe-a2.7b" | "qwen-1.5-moe-a2.7b" | "qwen15" => Some(Self::qwen15_moe_a27b()),
            _ => None,
        }
    }
}
