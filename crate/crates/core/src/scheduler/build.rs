use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::{
    assign_resources, classify::Thresholds, detect_bottleneck, AiLevel, Bottleneck, ExpertWork, IterationDag,
    OpKind, OpNode, Policy, Predictor, ResourceClass, FUSION_ONSET_LAYER,
};
use crate::error::{bail, Result};
use crate::hardware::HardwareConfig;
use crate::workload::{gating_cost, out_proj_cost, qkv_cost, ExpertLoad, IterationBatch, LayerCost, ModelConfig, OpCost};

/// One layer with layer-local node ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDag {
    pub layer: u32,
    pub regime: Bottleneck,
    pub fused: bool,
    pub nodes: Vec<OpNode>,
}

struct Builder {
    layer: u32,
    nodes: Vec<OpNode>,
}

impl Builder {
    fn push(&mut self, kind: OpKind, tokens: Vec<u32>, cost: OpCost, deps: Vec<usize>, expert: Option<ExpertWork>) -> usize {
        let id = self.nodes.len();
        self.nodes.push(OpNode {
            id,
            kind,
            layer: self.layer,
            tokens,
            resource: ResourceClass::Control,
            cost,
            deps,
            expert,
        });
        id
    }

    fn push_expert(&mut self, load: &ExpertLoad, level: AiLevel, deps: Vec<usize>, mispredicted: bool) -> usize {
        let kind = match level {
            AiLevel::High => OpKind::MoeHigh,
            AiLevel::Mid => OpKind::MoeMid,
            AiLevel::Low => OpKind::MoeLow,
        };
        let work = ExpertWork {
            expert: load.expert,
            shared: load.shared,
            level,
            scores: load.scores.clone(),
            mispredicted,
        };
        self.push(kind, load.tokens.clone(), load.cost.clone(), deps, Some(work))
    }
}

/// Batch indices covered by each prefill chunk.
fn chunk_tokens(batch: &IterationBatch) -> Vec<Vec<u32>> {
    let mut next = batch.decode_tokens.len() as u32;
    batch
        .prefill_chunks
        .iter()
        .map(|c| {
            let t: Vec<u32> = (next..next + c.tokens).collect();
            next += c.tokens;
            t
        })
        .collect()
}

fn check_shapes(batch: &IterationBatch, cost: &LayerCost) -> Result<()> {
    if batch.is_empty() {
        bail!(Contract, "cannot schedule an empty batch");
    }
    if cost.decode_attn.len() != batch.decode_tokens.len() || cost.prefill_attn.len() != batch.prefill_chunks.len() {
        bail!(Contract, "layer cost does not match batch composition");
    }
    Ok(())
}

fn by_tokens_desc(loads: &[ExpertLoad]) -> Vec<&ExpertLoad> {
    let mut v: Vec<&ExpertLoad> = loads.iter().collect();
    v.sort_by(|a, b| b.num_tokens().cmp(&a.num_tokens()).then(a.expert.cmp(&b.expert)));
    v
}

/// Barrier schedule: all attention, then gating, then every expert.
pub fn build_conventional(batch: &IterationBatch, cost: &LayerCost, hw: &HardwareConfig) -> Result<LayerDag> {
    check_shapes(batch, cost)?;
    let th = Thresholds::for_hardware(hw);
    let total = batch.num_tokens();
    let mut b = Builder { layer: cost.layer, nodes: Vec::new() };
    let qkv = b.push(OpKind::QkvGen, (0..total).collect(), cost.qkv.clone(), vec![], None);
    let mut attn = Vec::new();
    for (c, toks) in chunk_tokens(batch).into_iter().enumerate() {
        attn.push(b.push(OpKind::PrefillAttn, toks, cost.prefill_attn[c].clone(), vec![qkv], None));
    }
    for (i, c) in cost.decode_attn.iter().enumerate() {
        attn.push(b.push(OpKind::DecodeAttn, vec![i as u32], c.clone(), vec![qkv], None));
    }
    let out = b.push(OpKind::OutProj, (0..total).collect(), cost.out_proj.clone(), attn, None);
    let gate = b.push(OpKind::Gating, (0..total).collect(), cost.gating.clone(), vec![out], None);
    let barrier = b.push(OpKind::Barrier, vec![], OpCost::default(), vec![gate], None);
    for load in by_tokens_desc(&cost.experts) {
        b.push_expert(load, th.level(load.num_tokens()), vec![barrier], false);
    }
    Ok(LayerDag { layer: cost.layer, regime: detect_bottleneck(cost, hw), fused: false, nodes: b.nodes })
}

/// Fused schedule. Layers before the onset fall back to the barrier schedule.
pub fn build_hrofs(
    batch: &IterationBatch,
    cost: &LayerCost,
    model: &ModelConfig,
    hw: &HardwareConfig,
    predictor: &Predictor,
) -> Result<LayerDag> {
    if cost.layer + 1 < FUSION_ONSET_LAYER {
        return build_conventional(batch, cost, hw);
    }
    check_shapes(batch, cost)?;
    let th = Thresholds::for_hardware(hw);
    let regime = detect_bottleneck(cost, hw);
    let total = batch.num_tokens() as usize;
    let n_dec = batch.decode_tokens.len();

    let mut high_token = vec![false; total];
    for load in &cost.experts {
        if th.level(load.num_tokens()) == AiLevel::High {
            for &t in &load.tokens {
                high_token[t as usize] = true;
            }
        }
    }
    let in_a: Vec<bool> = (0..total)
        .map(|t| match regime {
            Bottleneck::PrefillDominant => t < n_dec,
            _ => t >= n_dec || high_token[t],
        })
        .collect();
    let mut groups: Vec<Vec<u32>> = vec![
        (0..total as u32).filter(|&t| in_a[t as usize]).collect(),
        (0..total as u32).filter(|&t| !in_a[t as usize]).collect(),
    ];
    groups.retain(|g| !g.is_empty());
    let mut group_of = vec![0usize; total];
    for (g, toks) in groups.iter().enumerate() {
        for &t in toks {
            group_of[t as usize] = g;
        }
    }
    let touching = |tokens: &[u32], per_group: &[usize]| -> Vec<usize> {
        let mut hit = vec![false; per_group.len()];
        for &t in tokens {
            hit[group_of[t as usize]] = true;
        }
        per_group.iter().zip(hit).filter(|(_, h)| *h).map(|(&n, _)| n).collect()
    };

    let mut b = Builder { layer: cost.layer, nodes: Vec::new() };
    let qkv: Vec<usize> = groups
        .iter()
        .map(|g| b.push(OpKind::QkvGen, g.clone(), qkv_cost(model, g.len() as u64), vec![], None))
        .collect();
    let mut attn_by_group: Vec<Vec<usize>> = vec![Vec::new(); groups.len()];
    for (c, toks) in chunk_tokens(batch).into_iter().enumerate() {
        let deps = touching(&toks, &qkv);
        let gs = touching(&toks, &(0..groups.len()).collect::<Vec<_>>());
        let id = b.push(OpKind::PrefillAttn, toks, cost.prefill_attn[c].clone(), deps, None);
        for g in gs {
            attn_by_group[g].push(id);
        }
    }
    for (i, c) in cost.decode_attn.iter().enumerate() {
        let g = group_of[i];
        let id = b.push(OpKind::DecodeAttn, vec![i as u32], c.clone(), vec![qkv[g]], None);
        attn_by_group[g].push(id);
    }
    let gating: Vec<usize> = groups
        .iter()
        .enumerate()
        .map(|(g, toks)| {
            let n = toks.len() as u64;
            let out = b.push(OpKind::OutProj, toks.clone(), out_proj_cost(model, n), attn_by_group[g].clone(), None);
            b.push(OpKind::Gating, toks.clone(), gating_cost(model, n), vec![out], None)
        })
        .collect();

    let order: [AiLevel; 3] = match regime {
        Bottleneck::PrefillDominant => [AiLevel::Low, AiLevel::Mid, AiLevel::High],
        _ => [AiLevel::High, AiLevel::Mid, AiLevel::Low],
    };
    let waits_for_all = match regime {
        Bottleneck::PrefillDominant => AiLevel::High,
        _ => AiLevel::Low,
    };
    let sorted = by_tokens_desc(&cost.experts);
    for level in order {
        for load in sorted.iter().filter(|l| th.level(l.num_tokens()) == level) {
            let deps = if level == waits_for_all { gating.clone() } else { touching(&load.tokens, &gating) };
            let miss = !load.shared && predictor.mispredicted(batch.index, cost.layer, load.expert);
            b.push_expert(load, level, deps, miss);
        }
    }
    Ok(LayerDag { layer: cost.layer, regime, fused: true, nodes: b.nodes })
}

/// Stitches per-layer DAGs into one iteration DAG. The first QKV ops of a
/// fused layer wait only for the previous layer's experts sharing a token.
pub fn build_iteration_dag(
    policy: Policy,
    batch: &IterationBatch,
    costs: &[LayerCost],
    model: &ModelConfig,
    hw: &HardwareConfig,
    predictor: &Predictor,
) -> Result<IterationDag> {
    let total = batch.num_tokens() as usize;
    let mut nodes: Vec<OpNode> = Vec::new();
    let mut layers = Vec::new();
    let mut regimes = Vec::new();
    let mut prev_moe: Vec<usize> = Vec::new();
    for cost in costs {
        let dag = match policy {
            Policy::Conventional => build_conventional(batch, cost, hw)?,
            Policy::Hrofs => build_hrofs(batch, cost, model, hw, predictor)?,
        };
        let base = nodes.len();
        for mut n in dag.nodes {
            n.id += base;
            for d in &mut n.deps {
                *d += base;
            }
            if n.kind == OpKind::QkvGen && !prev_moe.is_empty() {
                if dag.fused {
                    let mut mine = vec![false; total];
                    for &t in &n.tokens {
                        mine[t as usize] = true;
                    }
                    n.deps.extend(
                        prev_moe.iter().copied().filter(|&m| nodes[m].tokens.iter().any(|&t| mine[t as usize])),
                    );
                } else {
                    n.deps.extend(prev_moe.iter().copied());
                }
            }
            nodes.push(n);
        }
        prev_moe = (base..nodes.len()).filter(|&i| nodes[i].kind.is_moe()).collect();
        layers.push(base..nodes.len());
        regimes.push(dag.regime);
    }
    assign_resources(&mut nodes, hw);
    let dag = IterationDag { nodes, layers, regimes };
    dag.check_acyclic()?;
    Ok(dag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::{iteration_cost_profile, DecodeToken, ExpertChoice, PrefillChunk};

    fn choice(e: u32) -> ExpertChoice {
        ExpertChoice { expert: e, raw_score: 1.0, score: 1.0 }
    }

    fn model() -> ModelConfig {
        let mut m = ModelConfig::olmoe_1b_7b();
        m.num_layers = 6;
        m
    }

    fn batch(decode: u32, chunk: u32) -> IterationBatch {
        IterationBatch {
            index: 7,
            decode_tokens: (0..decode).map(|r| DecodeToken { request: r as u64, context: 300 }).collect(),
            prefill_chunks: if chunk > 0 {
                vec![PrefillChunk { request: 1000, start: 0, tokens: chunk }]
            } else {
                vec![]
            },
            chunk_budget: 256,
        }
    }

    fn costs(b: &IterationBatch, route: impl Fn(u32) -> Vec<ExpertChoice>) -> Vec<LayerCost> {
        let m = model();
        let routing: Vec<Vec<ExpertChoice>> = (0..b.num_tokens()).map(route).collect();
        (0..m.num_layers).map(|l| iteration_cost_profile(b, &routing, &m, l).unwrap()).collect()
    }

    fn reaches(dag: &IterationDag, from: usize, to: usize) -> bool {
        let mut stack = vec![to];
        let mut seen = vec![false; dag.nodes.len()];
        while let Some(n) = stack.pop() {
            if n == from {
                return true;
            }
            for &d in &dag.nodes[n].deps {
                if !seen[d] {
                    seen[d] = true;
                    stack.push(d);
                }
            }
        }
        false
    }

    #[test]
    fn single_token_chain() {
        let b = batch(1, 0);
        let c = costs(&b, |_| vec![choice(3)]);
        let hw = HardwareConfig::a3d_moe_1();
        let dag = build_conventional(&b, &c[0], &hw).unwrap();
        let kinds: Vec<OpKind> = dag.nodes.iter().map(|n| n.kind).collect();
        assert_eq!(
            kinds,
            [OpKind::QkvGen, OpKind::DecodeAttn, OpKind::OutProj, OpKind::Gating, OpKind::Barrier, OpKind::MoeLow]
        );
        for (i, n) in dag.nodes.iter().enumerate().skip(1) {
            assert_eq!(n.deps, vec![i - 1]);
        }
    }

    #[test]
    fn conventional_moe_waits_for_every_attention() {
        let b = batch(8, 64);
        let c = costs(&b, |t| vec![choice(t % 5), choice(5 + t % 3)]);
        let hw = HardwareConfig::a3d_moe_1();
        let p = Predictor::new(0.9, 0).unwrap();
        let dag = build_iteration_dag(Policy::Conventional, &b, &c, &model(), &hw, &p).unwrap();
        for l in 0..c.len() {
            let ids: Vec<usize> = dag.layers[l].clone().collect();
            for &m in ids.iter().filter(|&&i| dag.nodes[i].kind.is_moe()) {
                for &a in ids.iter().filter(|&&i| dag.nodes[i].kind.is_attention()) {
                    assert!(reaches(&dag, a, m));
                }
            }
        }
    }

    #[test]
    fn hrofs_decode_dominant_lets_low_ai_tokens_trail() {
        let b = batch(16, 8);
        let hw = HardwareConfig::a3d_moe_1();
        let th = Thresholds::for_hardware(&hw);
        let c = costs(&b, |t| if t < 4 { vec![choice(60)] } else { vec![choice(t)] });
        let m = model();
        let p = Predictor::new(1.0, 0).unwrap();
        let cost = &c[4];
        let regime = detect_bottleneck(cost, &hw);
        assert_eq!(regime, Bottleneck::DecodeDominant);
        let dag = build_hrofs(&b, cost, &m, &hw, &p).unwrap();
        assert!(dag.fused);
        let qkv: Vec<&OpNode> = dag.nodes.iter().filter(|n| n.kind == OpKind::QkvGen).collect();
        assert_eq!(qkv.len(), 2);
        // group A: all prefill tokens, no decode token routes to a High expert here
        assert!(qkv[0].tokens.iter().all(|&t| t >= 16));
        let gating: Vec<usize> = dag.nodes.iter().filter(|n| n.kind == OpKind::Gating).map(|n| n.id).collect();
        for n in dag.nodes.iter().filter(|n| n.kind == OpKind::MoeLow) {
            assert_eq!(n.deps, gating);
        }
        let big = dag.nodes.iter().find(|n| n.expert.as_ref().is_some_and(|e| e.expert == 60)).unwrap();
        assert_eq!(th.level(big.tokens.len() as u64), AiLevel::Mid);
        assert_eq!(big.deps, vec![gating[1]]);
        let low_ids: Vec<usize> = dag.nodes.iter().filter(|n| n.kind == OpKind::MoeLow).map(|n| n.id).collect();
        let first_low = *low_ids.iter().min().unwrap();
        assert!(dag.nodes.iter().filter(|n| n.kind != OpKind::MoeLow && n.kind.is_moe()).all(|n| n.id < first_low));
    }

    #[test]
    fn onset_layer() {
        let b = batch(8, 64);
        let c = costs(&b, |t| vec![choice(t % 7)]);
        let hw = HardwareConfig::a3d_moe_1();
        let p = Predictor::new(0.9, 0).unwrap();
        for (l, cost) in c.iter().enumerate() {
            let dag = build_hrofs(&b, cost, &model(), &hw, &p).unwrap();
            assert_eq!(dag.fused, l + 1 >= FUSION_ONSET_LAYER as usize);
        }
    }

    #[test]
    fn resources_follow_hardware() {
        let b = batch(4, 16);
        let c = costs(&b, |t| vec![choice(t % 3)]);
        let p = Predictor::new(1.0, 0).unwrap();
        let m = model();
        for hw in [HardwareConfig::a3d_moe_1(), HardwareConfig::neupim_like(), HardwareConfig::duplex_like()] {
            let dag = build_iteration_dag(Policy::Conventional, &b, &c, &m, &hw, &p).unwrap();
            for n in &dag.nodes {
                let want = match (n.kind, hw.a3d.is_some(), hw.simd) {
                    (OpKind::Barrier, ..) => ResourceClass::Control,
                    (OpKind::DecodeAttn, true, _) => ResourceClass::A3dSimd,
                    (OpKind::DecodeAttn, false, Some(_)) => ResourceClass::MemorySimd,
                    (OpKind::MoeLow, true, _) => ResourceClass::A3dSimd,
                    (OpKind::MoeMid, true, _) => ResourceClass::A3dSimdVcache,
                    (OpKind::MoeLow | OpKind::MoeMid, false, Some(s)) if s.runs_low_ai_moe => ResourceClass::MemorySimd,
                    _ => ResourceClass::Gemm,
                };
                assert_eq!(n.resource, want, "{:?} on {}", n.kind, hw.name);
            }
        }
    }

    #[test]
    fn empty_batch_rejected() {
        let b = batch(2, 0);
        let c = costs(&b, |_| vec![choice(0)]);
        let empty = batch(0, 0);
        assert!(build_conventional(&empty, &c[0], &HardwareConfig::a3d_moe_1()).is_err());
    }
}
