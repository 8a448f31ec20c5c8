use std::collections::BTreeSet;

use a3d_core::workload::{
    build_iteration, generate_requests, Arrivals, DecodeLength, ModelConfig, Popularity, PrefillLength, RequestState,
    RoutingSampler, TokenKey, WorkloadSpec,
};
use proptest::prelude::*;

fn spec_strategy() -> impl Strategy<Value = WorkloadSpec> {
    (1u32..24, 1u32..200, 0u32..300, 1.05f64..6.0, 1u32..300, any::<u64>(), any::<bool>()).prop_map(
        |(requests, min, span, ratio, budget, seed, burst)| WorkloadSpec {
            requests,
            arrivals: if burst { Arrivals::Burst } else { Arrivals::Poisson { rate: 50.0 } },
            prefill: PrefillLength::Uniform { min, max: min + span },
            decode: DecodeLength::Ratio(ratio),
            chunk_budget: budget,
            seed,
            ..WorkloadSpec::default()
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn ratio_generator_makes_decode_longer(spec in spec_strategy()) {
        for r in generate_requests(&spec).unwrap() {
            prop_assert!(r.decode_len > r.prefill_len, "{} <= {}", r.decode_len, r.prefill_len);
        }
    }

    /// Drives requests to completion with a fake clock and checks every
    /// batch and every request on the way.
    #[test]
    fn batching_invariants(spec in spec_strategy()) {
        let mut reqs = generate_requests(&spec).unwrap();
        let mut now = 0.0f64;
        let mut index = 0;
        while reqs.iter().any(|r| r.state != RequestState::Done) {
            let b = build_iteration(&reqs, spec.chunk_budget, now, index);
            if b.is_empty() {
                now = reqs
                    .iter()
                    .filter(|r| r.state == RequestState::Queued)
                    .map(|r| r.arrival_time)
                    .fold(f64::INFINITY, f64::min);
                prop_assert!(now.is_finite());
                continue;
            }
            prop_assert!(b.prefill_tokens() <= spec.chunk_budget);
            let mut seen = BTreeSet::new();
            for id in b.decode_tokens.iter().map(|d| d.request).chain(b.prefill_chunks.iter().map(|c| c.request)) {
                prop_assert!(seen.insert(id), "request {id} twice in one iteration");
            }
            now += 1e-3;
            for d in &b.decode_tokens {
                reqs[d.request as usize].complete_decode(now);
            }
            for c in &b.prefill_chunks {
                reqs[c.request as usize].complete_chunk(c.tokens, now);
            }
            for r in &reqs {
                prop_assert!(r.prefill_progress <= r.prefill_len);
                prop_assert!(r.decode_progress <= r.decode_len);
                prop_assert!(r.token_times.windows(2).all(|w| w[1] > w[0]));
            }
            index += 1;
        }
        for r in &reqs {
            prop_assert_eq!(r.token_times.len() as u32, r.decode_len);
        }
    }

    #[test]
    fn routing_shape(
        seed in any::<u64>(),
        request in any::<u64>(),
        position in 0u32..10_000,
        layer in 0usize..16,
        alpha in 0.05f64..3.0,
        which in 0usize..3,
    ) {
        let model = [ModelConfig::olmoe_1b_7b(), ModelConfig::deepseek_v2_lite(), ModelConfig::qwen15_moe_a27b()][which].clone();
        let pop = Popularity::zipf(model.num_layers, model.num_experts, 1.0, seed);
        let s = RoutingSampler::new(&pop, model.top_k, alpha, seed).unwrap();
        let picks = s.sample(layer % model.num_layers as usize, TokenKey { request, position });
        prop_assert_eq!(picks.len(), model.top_k as usize);
        let ids: BTreeSet<u32> = picks.iter().map(|c| c.expert).collect();
        prop_assert_eq!(ids.len(), picks.len());
        prop_assert!(ids.iter().all(|&e| e < model.num_experts));
        let max = picks.iter().map(|c| c.score).fold(f64::MIN, f64::max);
        let min = picks.iter().map(|c| c.score).fold(f64::MAX, f64::min);
        prop_assert_eq!(max, 1.0);
        let distinct = picks.windows(2).any(|w| w[0].raw_score != w[1].raw_score);
        if model.top_k >= 2 && distinct {
            prop_assert_eq!(min, 0.0);
        }
    }
}

#[test]
fn routing_follows_popularity() {
    let mut model = ModelConfig::olmoe_1b_7b();
    model.num_layers = 1;
    let pop = Popularity::zipf(1, model.num_experts, 1.0, 9);
    let s = RoutingSampler::new(&pop, 1, 0.3, 9).unwrap();
    let n = 200_000u32;
    let mut hist = vec![0u32; model.num_experts as usize];
    for p in 0..n {
        hist[s.sample(0, TokenKey { request: 0, position: p })[0].expert as usize] += 1;
    }
    for (e, &h) in hist.iter().enumerate() {
        let want = pop.layer(0)[e];
        let sd = (want * (1.0 - want) / n as f64).sqrt();
        assert!((h as f64 / n as f64 - want).abs() < 5.0 * sd + 1e-4, "expert {e}: {h} vs {want}");
    }
}
