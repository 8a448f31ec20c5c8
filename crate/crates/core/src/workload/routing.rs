use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::ModelConfig;
use crate::error::{bail, Result};
use crate::rng::{stream, tag};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpertChoice {
    pub expert: u32,
    pub raw_score: f64,
    /// Min-max normalized over the token's top-k, in `[0, 1]`.
    pub score: f64,
}

/// Identifies one token of one request, so that its routing can be
/// regenerated independently of which iteration processes it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TokenKey {
    pub request: u64,
    pub position: u32,
}

/// Per-layer categorical distribution over routed experts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Popularity {
    layers: Vec<Vec<f64>>,
}

impl Popularity {
    pub fn new(layers: Vec<Vec<f64>>, num_experts: u32) -> Result<Self> {
        if layers.is_empty() {
            bail!(Config, "popularity profile has no layers");
        }
        for (l, p) in layers.iter().enumerate() {
            if p.len() != num_experts as usize {
                bail!(
                    Config,
                    "popularity layer {l} has {} entries, model has {num_experts} experts",
                    p.len()
                );
            }
            if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                bail!(Config, "popularity layer {l} has a negative or non-finite entry");
            }
            let sum: f64 = p.iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                bail!(Config, "popularity layer {l} sums to {sum}, expected 1");
            }
        }
        Ok(Self { layers })
    }

    pub fn uniform(num_layers: u32, num_experts: u32) -> Self {
        let p = 1.0 / num_experts as f64;
        Self { layers: vec![vec![p; num_experts as usize]; num_layers as usize] }
    }

    /// Zipf(s) over experts; which expert holds which rank is shuffled per layer.
    pub fn zipf(num_layers: u32, num_experts: u32, exponent: f64, seed: u64) -> Self {
        let weights: Vec<f64> = (1..=num_experts)
            .map(|rank| 1.0 / libm::pow(rank as f64, exponent))
            .collect();
        let total: f64 = weights.iter().sum();
        let layers = (0..num_layers)
            .map(|l| {
                let mut order: Vec<usize> = (0..num_experts as usize).collect();
                order.shuffle(&mut stream(&[tag::POPULARITY, seed, l as u64]));
                let mut p = vec![0.0; num_experts as usize];
                for (rank, &e) in order.iter().enumerate() {
                    p[e] = weights[rank] / total;
                }
                p
            })
            .collect();
        Self { layers }
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn num_experts(&self) -> usize {
        self.layers[0].len()
    }

    pub fn layer(&self, layer: usize) -> &[f64] {
        &self.layers[layer]
    }

    pub fn check_model(&self, model: &ModelConfig) -> Result<()> {
        if self.layers.len() != model.num_layers as usize {
            bail!(
                Config,
                "popularity covers {} layers, model has {}",
                self.layers.len(),
                model.num_layers
            );
        }
        if self.num_experts() != model.num_experts as usize {
            bail!(
                Config,
                "popularity covers {} experts, model has {}",
                self.num_experts(),
                model.num_experts
            );
        }
        for (l, p) in self.layers.iter().enumerate() {
            let support = p.iter().filter(|&&x| x > 0.0).count();
            if support < model.top_k as usize {
                bail!(Config, "layer {l} has {support} experts with nonzero mass, top_k is {}", model.top_k);
            }
        }
        Ok(())
    }
}

/// Min-max normalization over one token's top-k raw scores.
///
/// A single score, or a set of identical scores, normalizes to 1.0 so the
/// dominant expert is never demoted to reduced precision.
pub fn minmax_normalize(raw: &[f64]) -> Vec<f64> {
    let (lo, hi) = raw
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    if raw.len() < 2 || !(hi > lo) {
        return vec![1.0; raw.len()];
    }
    raw.iter().map(|&x| (x - lo) / (hi - lo)).collect()
}

/// Draws top-k routings for individual tokens.
///
/// Experts are drawn without replacement, weighted by the layer popularity.
/// Gating mass comes from a symmetric Dirichlet over the k picks; the largest
/// share goes to the first (most probable) draw.
#[derive(Debug, Clone)]
pub struct RoutingSampler<'a> {
    popularity: &'a Popularity,
    top_k: usize,
    gamma: Gamma<f64>,
    seed: u64,
}

impl<'a> RoutingSampler<'a> {
    pub fn new(popularity: &'a Popularity, top_k: u32, alpha: f64, seed: u64) -> Result<Self> {
        let gamma = match Gamma::new(alpha, 1.0) {
            Ok(g) if alpha > 0.0 => g,
            _ => bail!(Config, "dirichlet concentration must be positive, got {alpha}"),
        };
        if top_k as usize > popularity.num_experts() {
            bail!(Config, "top_k {top_k} exceeds expert count {}", popularity.num_experts());
        }
        Ok(Self { popularity, top_k: top_k as usize, gamma, seed })
    }

    pub fn sample(&self, layer: usize, key: TokenKey) -> Vec<ExpertChoice> {
        let mut rng = stream(&[tag::ROUTING, self.seed, key.request, key.position as u64, layer as u64]);
        let mut weights = self.popularity.layer(layer).to_vec();
        let mut picks = Vec::with_capacity(self.top_k);
        for _ in 0..self.top_k {
            let total: f64 = weights.iter().sum();
            let mut u = rng.random::<f64>() * total;
            let mut pick = weights.iter().rposition(|&w| w > 0.0).expect("support checked");
            for (i, &w) in weights.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                if u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            weights[pick] = 0.0;
            picks.push(pick as u32);
        }

        let mut raw: Vec<f64> = (0..self.top_k).map(|_| self.gamma.sample(&mut rng)).collect();
        let sum: f64 = raw.iter().sum();
        if sum > 0.0 && sum.is_finite() {
            raw.iter_mut().for_each(|x| *x /= sum);
        } else {
            raw.iter_mut().for_each(|x| *x = 1.0 / self.top_k as f64);
        }
        raw.sort_by(|a, b| b.total_cmp(a));
        let norm = minmax_normalize(&raw);
        picks
            .into_iter()
            .zip(raw)
            .zip(norm)
            .map(|((expert, raw_score), score)| ExpertChoice { expert, raw_score, score })
            .collect()
    }
}

/// Routing of a set of tokens through one layer.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LayerRouting {
    pub tokens: Vec<Vec<ExpertChoice>>,
}

impl LayerRouting {
    pub fn histogram(&self, num_experts: u32) -> Vec<u64> {
        let mut h = vec![0u64; num_experts as usize];
        for choice in self.tokens.iter().flatten() {
            h[choice.expert as usize] += 1;
        }
        h
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingTrace {
    pub top_k: u32,
    pub num_experts: u32,
    pub layers: Vec<LayerRouting>,
}

impl RoutingTrace {
    pub fn histogram(&self, layer: usize) -> Vec<u64> {
        self.layers[layer].histogram(self.num_experts)
    }
}

/// Synthesizes routing for `tokens` tokens across every layer of `model`.
pub fn sample_routing(
    model: &ModelConfig,
    tokens: u32,
    popularity: &Popularity,
    alpha: f64,
    seed: u64,
) -> Result<RoutingTrace> {
    popularity.check_model(model)?;
    let sampler = RoutingSampler::new(popularity, model.top_k, alpha, seed)?;
    let layers = (0..model.num_layers as usize)
        .map(|layer| LayerRouting {
            tokens: (0..tokens)
                .map(|position| sampler.sample(layer, TokenKey { request: 0, position }))
                .collect(),
        })
        .collect();
    Ok(RoutingTrace { top_k: model.top_k, num_experts: model.num_experts, layers })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_model(experts: u32, top_k: u32) -> ModelConfig {
        let mut m = ModelConfig::olmoe_1b_7b();
        m.num_layers = 2;
        m.num_experts = experts;
        m.top_k = top_k;
        m
    }

    #[test]
    fn top1_normalizes_to_one() {
        let m = small_model(8, 1);
        let pop = Popularity::zipf(2, 8, 1.0, 0);
        let trace = sample_routing(&m, 200, &pop, 0.3, 1).unwrap();
        for c in trace.layers.iter().flat_map(|l| l.tokens.iter().flatten()) {
            assert_eq!(c.score, 1.0);
        }
    }

    #[test]
    fn entries_are_distinct_and_normalized() {
        let m = small_model(64, 8);
        let pop = Popularity::zipf(2, 64, 1.0, 5);
        let trace = sample_routing(&m, 500, &pop, 0.3, 2).unwrap();
        for tok in trace.layers.iter().flat_map(|l| l.tokens.iter()) {
            assert_eq!(tok.len(), 8);
            let mut ids: Vec<u32> = tok.iter().map(|c| c.expert).collect();
            ids.sort_unstable();
            ids.dedup();
            assert_eq!(ids.len(), 8);
            let max = tok.iter().map(|c| c.score).fold(f64::MIN, f64::max);
            let min = tok.iter().map(|c| c.score).fold(f64::MAX, f64::min);
            assert_eq!(max, 1.0);
            assert_eq!(min, 0.0);
        }
    }

    #[test]
    fn near_infinite_concentration_top2() {
        let m = small_model(16, 2);
        let pop = Popularity::uniform(2, 16);
        let trace = sample_routing(&m, 100, &pop, 1e9, 3).unwrap();
        for tok in &trace.layers[0].tokens {
            assert!((tok[0].raw_score - tok[1].raw_score).abs() < 1e-3);
            let mut s: Vec<f64> = tok.iter().map(|c| c.score).collect();
            s.sort_by(f64::total_cmp);
            assert!(s == [0.0, 1.0] || s == [1.0, 1.0]);
        }
    }

    #[test]
    fn degenerate_minmax() {
        assert_eq!(minmax_normalize(&[0.4]), [1.0]);
        assert_eq!(minmax_normalize(&[0.2, 0.2, 0.2]), [1.0, 1.0, 1.0]);
        assert_eq!(minmax_normalize(&[0.5, 0.25, 0.0]), [1.0, 0.5, 0.0]);
        assert!(minmax_normalize(&[]).is_empty());
    }

    #[test]
    fn popularity_length_mismatch() {
        let m = small_model(64, 8);
        let pop = Popularity::uniform(2, 32);
        assert!(matches!(sample_routing(&m, 1, &pop, 0.3, 0), Err(crate::Error::Config(_))));
        assert!(Popularity::new(vec![vec![0.5, 0.4]], 2).is_err());
        assert!(Popularity::new(vec![vec![0.5, 0.5]], 3).is_err());
    }

    #[test]
    fn zipf_layers_are_distributions() {
        let pop = Popularity::zipf(3, 64, 1.0, 9);
        for l in 0..3 {
            let s: f64 = pop.layer(l).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert_ne!(pop.layer(0), pop.layer(1));
    }

    #[test]
    fn sampling_is_keyed() {
        let pop = Popularity::zipf(1, 64, 1.0, 0);
        let s = RoutingSampler::new(&pop, 8, 0.3, 11).unwrap();
        let a = s.sample(0, TokenKey { request: 3, position: 9 });
        assert_eq!(a, s.sample(0, TokenKey { request: 3, position: 9 }));
        assert_ne!(a, s.sample(0, TokenKey { request: 3, position: 10 }));
    }
}
