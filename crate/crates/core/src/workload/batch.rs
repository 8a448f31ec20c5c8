use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::{Request, RequestState, TokenKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeToken {
    pub request: u64,
    /// KV-cache length this token attends over.
    pub context: u32,
}

impl DecodeToken {
    pub fn key(&self) -> TokenKey {
        TokenKey { request: self.request, position: self.context }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrefillChunk {
    pub request: u64,
    /// Prompt offset of the first token in the chunk.
    pub start: u32,
    pub tokens: u32,
}

impl PrefillChunk {
    /// Keys attended by the last token of the chunk.
    pub fn context(&self) -> u32 {
        self.start + self.tokens
    }

    pub fn keys(&self) -> impl Iterator<Item = TokenKey> + '_ {
        (self.start..self.start + self.tokens)
            .map(move |position| TokenKey { request: self.request, position })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationBatch {
    pub index: u64,
    pub decode_tokens: Vec<DecodeToken>,
    pub prefill_chunks: Vec<PrefillChunk>,
    pub chunk_budget: u32,
}

impl IterationBatch {
    pub fn is_empty(&self) -> bool {
        self.decode_tokens.is_empty() && self.prefill_chunks.is_empty()
    }

    pub fn prefill_tokens(&self) -> u32 {
        self.prefill_chunks.iter().map(|c| c.tokens).sum()
    }

    pub fn num_tokens(&self) -> u32 {
        self.decode_tokens.len() as u32 + self.prefill_tokens()
    }

    /// Every token in batch order: decode tokens first, then chunk tokens.
    pub fn token_keys(&self) -> Vec<TokenKey> {
        let mut keys: Vec<TokenKey> = self.decode_tokens.iter().map(DecodeToken::key).collect();
        for chunk in &self.prefill_chunks {
            keys.extend(chunk.keys());
        }
        keys
    }
}

/// Stall-free continuous batching with chunked prefill.
///
/// Each decoding request contributes one token. The chunk budget then goes
/// to arrived prefill work in (arrival, id) order, splitting the last request
/// that does not fit.
pub fn build_iteration(queue: &[Request], chunk_budget: u32, now: f64, index: u64) -> IterationBatch {
    let decode_tokens = queue
        .iter()
        .filter(|r| r.state == RequestState::Decoding)
        .map(|r| DecodeToken { request: r.id, context: r.context_len() })
        .collect();

    let mut pending: Vec<&Request> = queue
        .iter()
        .filter(|r| {
            matches!(r.state, RequestState::Queued | RequestState::Prefilling)
                && r.arrival_time <= now
                && r.remaining_prefill() > 0
        })
        .collect();
    pending.sort_by(|a, b| a.arrival_time.total_cmp(&b.arrival_time).then(a.id.cmp(&b.id)));

    let mut budget = chunk_budget;
    let mut prefill_chunks = Vec::new();
    for r in pending {
        if budget == 0 {
            break;
        }
        let tokens = r.remaining_prefill().min(budget);
        prefill_chunks.push(PrefillChunk { request: r.id, start: r.prefill_progress, tokens });
        budget -= tokens;
    }

    IterationBatch { index, decode_tokens, prefill_chunks, chunk_budget }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn decoding(id: u64) -> Request {
        let mut r = Request::new(id, 0.0, 10, 40);
        r.complete_chunk(10, 0.5);
        r
    }

    #[test]
    fn decode_plus_one_chunk() {
        let q = vec![decoding(0), decoding(1), decoding(2), Request::new(3, 0.0, 600, 2400)];
        let b = build_iteration(&q, 256, 1.0, 0);
        assert_eq!(b.decode_tokens.len(), 3);
        assert_eq!(b.prefill_chunks, [PrefillChunk { request: 3, start: 0, tokens: 256 }]);
    }

    #[test]
    fn short_prompt_fits() {
        let b = build_iteration(&[Request::new(0, 0.0, 100, 400)], 256, 0.0, 0);
        assert!(b.decode_tokens.is_empty());
        assert_eq!(b.prefill_tokens(), 100);
    }

    #[test]
    fn fcfs_split() {
        let q = vec![Request::new(1, 0.2, 200, 800), Request::new(0, 0.1, 200, 800)];
        let b = build_iteration(&q, 256, 1.0, 0);
        let got: Vec<(u64, u32)> = b.prefill_chunks.iter().map(|c| (c.request, c.tokens)).collect();
        assert_eq!(got, [(0, 200), (1, 56)]);
    }

    #[test]
    fn future_arrivals_wait() {
        let q = vec![Request::new(0, 2.0, 50, 200)];
        assert!(build_iteration(&q, 256, 1.0, 0).is_empty());
    }

    #[test]
    fn resumes_partial_prefill() {
        let mut r = Request::new(0, 0.0, 300, 1200);
        r.complete_chunk(256, 0.1);
        let b = build_iteration(&[r], 256, 0.2, 1);
        assert_eq!(b.prefill_chunks, [PrefillChunk { request: 0, start: 256, tokens: 44 }]);
        assert_eq!(b.prefill_chunks[0].context(), 300);
    }
}
