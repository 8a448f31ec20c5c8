use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::{ExpertChoice, IterationBatch, ModelConfig};
use crate::error::{bail, Result};

/// `count` independent `(m x k) * (k x n)` products.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gemm {
    pub m: u64,
    pub k: u64,
    pub n: u64,
    pub count: u64,
}

impl Gemm {
    pub fn flops(&self) -> u64 {
        2 * self.m * self.k * self.n * self.count
    }
}

/// FLOPs and bytes of one operation, split by where the bytes live.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OpCost {
    pub gemms: Vec<Gemm>,
    pub flops: u64,
    pub weight_bytes: u64,
    pub act_bytes: u64,
    pub kv_read_bytes: u64,
    pub kv_write_bytes: u64,
}

impl OpCost {
    fn from_gemms(gemms: Vec<Gemm>) -> Self {
        let flops = gemms.iter().map(Gemm::flops).sum();
        Self { gemms, flops, ..Self::default() }
    }

    /// Bytes that must cross the HBM interface.
    pub fn hbm_bytes(&self) -> u64 {
        self.weight_bytes + self.kv_read_bytes + self.kv_write_bytes
    }

    pub fn total_bytes(&self) -> u64 {
        self.hbm_bytes() + self.act_bytes
    }

    pub fn is_zero(&self) -> bool {
        self.flops == 0 && self.total_bytes() == 0
    }

    pub fn merge(&mut self, other: &OpCost) {
        self.gemms.extend_from_slice(&other.gemms);
        self.flops += other.flops;
        self.weight_bytes += other.weight_bytes;
        self.act_bytes += other.act_bytes;
        self.kv_read_bytes += other.kv_read_bytes;
        self.kv_write_bytes += other.kv_write_bytes;
    }
}

/// Q, K and V projections for `tokens` tokens; appends K and V to the cache.
pub fn qkv_cost(model: &ModelConfig, tokens: u64) -> OpCost {
    let b = model.bytes_per_element();
    let d = model.hidden_dim;
    let out = d + 2 * model.kv_dim();
    if tokens == 0 {
        return OpCost::default();
    }
    let mut c = OpCost::from_gemms(vec![Gemm { m: tokens, k: d, n: out, count: 1 }]);
    c.weight_bytes = d * out * b;
    c.act_bytes = tokens * (d + out) * b;
    c.kv_write_bytes = tokens * 2 * model.kv_dim() * b;
    c
}

/// Attention of a `tokens`-token chunk over `context` keys (chunk included).
///
/// Per head: `Q K^T` as `(t x d)(d x ctx)` and `S V` as `(t x ctx)(ctx x d)`.
/// Keys of earlier chunks are read back from the cache.
pub fn prefill_attention_cost(model: &ModelConfig, tokens: u64, context: u64) -> OpCost {
    if tokens == 0 {
        return OpCost::default();
    }
    let b = model.bytes_per_element();
    let h = model.num_heads;
    let hd = model.head_dim;
    let mut c = OpCost::from_gemms(vec![
        Gemm { m: tokens, k: hd, n: context, count: h },
        Gemm { m: tokens, k: context, n: hd, count: h },
    ]);
    c.act_bytes = 2 * tokens * model.hidden_dim * b;
    c.kv_read_bytes = 2 * context.saturating_sub(tokens) * model.kv_dim() * b;
    c
}

/// One decode token attending over a `context`-entry KV cache.
pub fn decode_attention_cost(model: &ModelConfig, context: u64) -> OpCost {
    let b = model.bytes_per_element();
    let h = model.num_heads;
    let hd = model.head_dim;
    let mut c = OpCost::from_gemms(vec![
        Gemm { m: 1, k: hd, n: context, count: h },
        Gemm { m: 1, k: context, n: hd, count: h },
    ]);
    c.act_bytes = 2 * model.hidden_dim * b;
    c.kv_read_bytes = 2 * context * model.kv_dim() * b;
    c
}

pub fn out_proj_cost(model: &ModelConfig, tokens: u64) -> OpCost {
    if tokens == 0 {
        return OpCost::default();
    }
    let b = model.bytes_per_element();
    let d = model.hidden_dim;
    let mut c = OpCost::from_gemms(vec![Gemm { m: tokens, k: d, n: d, count: 1 }]);
    c.weight_bytes = d * d * b;
    c.act_bytes = 2 * tokens * d * b;
    c
}

/// Router logits `x W^g`.
pub fn gating_cost(model: &ModelConfig, tokens: u64) -> OpCost {
    if tokens == 0 {
        return OpCost::default();
    }
    let b = model.bytes_per_element();
    let d = model.hidden_dim;
    let n = model.num_experts as u64;
    let mut c = OpCost::from_gemms(vec![Gemm { m: tokens, k: d, n, count: 1 }]);
    c.weight_bytes = d * n * b;
    c.act_bytes = tokens * (d + n) * b;
    c
}

/// Gate, up and down projections of one expert over `tokens` tokens.
pub fn expert_cost(model: &ModelConfig, tokens: u64) -> OpCost {
    if tokens == 0 {
        return OpCost::default();
    }
    let b = model.bytes_per_element();
    let d = model.hidden_dim;
    let f = model.ffn_dim;
    let mut c = OpCost::from_gemms(vec![
        Gemm { m: tokens, k: d, n: f, count: 2 },
        Gemm { m: tokens, k: f, n: d, count: 1 },
    ]);
    c.weight_bytes = model.expert_bytes();
    c.act_bytes = tokens * (2 * d + 2 * f) * b;
    c
}

/// The tokens one expert serves in one layer of one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertLoad {
    /// Routed experts use `0..N`; shared experts follow at `N..`.
    pub expert: u32,
    pub shared: bool,
    /// Indices into the batch token order.
    pub tokens: Vec<u32>,
    /// Normalized gating score of each routed token, aligned with `tokens`.
    pub scores: Vec<f64>,
    pub cost: OpCost,
}

impl ExpertLoad {
    pub fn num_tokens(&self) -> u64 {
        self.tokens.len() as u64
    }
}

/// Per-op costs of one layer for one iteration batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCost {
    pub layer: u32,
    pub qkv: OpCost,
    /// One entry per prefill chunk, in batch order.
    pub prefill_attn: Vec<OpCost>,
    /// One entry per decode token, in batch order.
    pub decode_attn: Vec<OpCost>,
    pub out_proj: OpCost,
    pub gating: OpCost,
    /// Experts with at least one token, ordered by expert id.
    pub experts: Vec<ExpertLoad>,
}

impl LayerCost {
    pub fn total(&self) -> OpCost {
        let mut t = self.qkv.clone();
        for c in self.prefill_attn.iter().chain(&self.decode_attn) {
            t.merge(c);
        }
        t.merge(&self.out_proj);
        t.merge(&self.gating);
        for e in &self.experts {
            t.merge(&e.cost);
        }
        t
    }
}

/// Costs every op of `layer` for `batch`. `routing[i]` is the top-k routing
/// of the i-th token in [`IterationBatch::token_keys`] order.
pub fn iteration_cost_profile(
    batch: &IterationBatch,
    routing: &[Vec<ExpertChoice>],
    model: &ModelConfig,
    layer: u32,
) -> Result<LayerCost> {
    if batch.is_empty() {
        bail!(Contract, "cost profile requested for an empty batch");
    }
    let t = batch.num_tokens() as u64;
    if routing.len() as u64 != t {
        bail!(Contract, "routing covers {} tokens, batch has {t}", routing.len());
    }
    let n = model.num_experts as usize;
    let mut per_expert: Vec<(Vec<u32>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); n];
    for (i, choices) in routing.iter().enumerate() {
        for c in choices {
            let Some(slot) = per_expert.get_mut(c.expert as usize) else {
                bail!(Contract, "expert {} out of range for {n} experts", c.expert);
            };
            slot.0.push(i as u32);
            slot.1.push(c.score);
        }
    }
    let mut experts: Vec<ExpertLoad> = per_expert
        .into_iter()
        .enumerate()
        .filter(|(_, (tok, _))| !tok.is_empty())
        .map(|(e, (tokens, scores))| ExpertLoad {
            expert: e as u32,
            shared: false,
            cost: expert_cost(model, tokens.len() as u64),
            tokens,
            scores,
        })
        .collect();
    for s in 0..model.num_shared_experts {
        experts.push(ExpertLoad {
            expert: model.num_experts + s,
            shared: true,
            tokens: (0..t as u32).collect(),
            scores: vec![1.0; t as usize],
            cost: expert_cost(model, t),
        });
    }

    Ok(LayerCost {
        layer,
        qkv: qkv_cost(model, t),
        prefill_attn: batch
            .prefill_chunks
            .iter()
            .map(|c| prefill_attention_cost(model, c.tokens as u64, c.context() as u64))
            .collect(),
        decode_attn: batch
            .decode_tokens
            .iter()
            .map(|d| decode_attention_cost(model, d.context as u64))
            .collect(),
        out_proj: out_proj_cost(model, t),
        gating: gating_cost(model, t),
        experts,
    })
}
