use alloc::vec::Vec;
use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::rng::{stream, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RequestState {
    Queued,
    Prefilling,
    Decoding,
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    /// Seconds.
    pub arrival_time: f64,
    pub prefill_len: u32,
    pub decode_len: u32,
    pub state: RequestState,
    pub prefill_progress: u32,
    /// Generated tokens so far, including the one emitted by the last prefill chunk.
    pub decode_progress: u32,
    /// Completion time of every generated token, seconds.
    pub token_times: Vec<f64>,
}

impl Request {
    pub fn new(id: u64, arrival_time: f64, prefill_len: u32, decode_len: u32) -> Self {
        Self {
            id,
            arrival_time,
            prefill_len,
            decode_len,
            state: RequestState::Queued,
            prefill_progress: 0,
            decode_progress: 0,
            token_times: Vec::new(),
        }
    }

    pub fn remaining_prefill(&self) -> u32 {
        self.prefill_len - self.prefill_progress
    }

    /// Tokens currently held in this request's KV cache.
    pub fn context_len(&self) -> u32 {
        self.prefill_len + self.decode_progress
    }

    /// Applies a finished prefill chunk. The chunk that completes the prompt
    /// emits the first output token at `now`.
    pub fn complete_chunk(&mut self, tokens: u32, now: f64) {
        debug_assert!(tokens <= self.remaining_prefill());
        self.prefill_progress += tokens;
        self.state = RequestState::Prefilling;
        if self.prefill_progress == self.prefill_len {
            self.emit_token(now);
        }
    }

    /// Applies a finished decode step.
    pub fn complete_decode(&mut self, now: f64) {
        debug_assert_eq!(self.state, RequestState::Decoding);
        self.emit_token(now);
    }

    fn emit_token(&mut self, now: f64) {
        if let Some(&last) = self.token_times.last() {
            debug_assert!(now > last, "token completion times must increase");
        }
        self.token_times.push(now);
        self.decode_progress += 1;
        self.state = if self.decode_progress >= self.decode_len {
            RequestState::Done
        } else {
            RequestState::Decoding
        };
    }

    pub fn ttft(&self) -> Option<f64> {
        self.token_times.first().map(|t| t - self.arrival_time)
    }
}

/// Arrival times of a Poisson process: i.i.d. exponential gaps with mean `1 / rate`.
pub fn poisson_arrivals(rate: f64, count: usize, seed: u64) -> Result<Vec<f64>> {
    if !(rate > 0.0) || !rate.is_finite() {
        bail!(Config, "arrival rate must be positive and finite, got {rate}");
    }
    let exp = Exp::new(rate).expect("rate checked above");
    let mut rng = stream(&[tag::ARRIVALS, seed]);
    let mut t = 0.0f64;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let next = t + exp.sample(&mut rng);
        t = if next > t { next } else { t.next_up() };
        out.push(t);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arrivals {
    /// Every request is present at time zero.
    Burst,
    Poisson { rate: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrefillLength {
    Fixed(u32),
    /// Inclusive range.
    Uniform { min: u32, max: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeLength {
    Fixed(u32),
    /// `ceil(ratio * L_pre)`; ratio must exceed 1 so decode outlasts prefill.
    Ratio(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub requests: u32,
    pub arrivals: Arrivals,
    pub prefill: PrefillLength,
    pub decode: DecodeLength,
    /// Maximum prefill tokens per iteration.
    pub chunk_budget: u32,
    pub zipf_exponent: f64,
    pub dirichlet_alpha: f64,
    pub seed: u64,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        Self {
            requests: 32,
            arrivals: Arrivals::Burst,
            prefill: PrefillLength::Uniform { min: 64, max: 256 },
            decode: DecodeLength::Ratio(4.0),
            chunk_budget: 256,
            zipf_exponent: 1.0,
            dirichlet_alpha: 0.3,
            seed: 0,
        }
    }
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<()> {
        if self.chunk_budget == 0 {
            bail!(Config, "chunk_budget must be at least 1");
        }
        match self.prefill {
            PrefillLength::Fixed(0) => bail!(Config, "prefill length must be positive"),
            PrefillLength::Uniform { min, max } if min == 0 || min > max => {
                bail!(Config, "invalid prefill range {min}..={max}")
            }
            _ => {}
        }
        match self.decode {
            DecodeLength::Fixed(0) => bail!(Config, "decode length must be positive"),
            DecodeLength::Ratio(r) if !(r > 1.0) || !r.is_finite() => {
                bail!(Config, "decode ratio must exceed 1, got {r}")
            }
            _ => {}
        }
        if let Arrivals::Poisson { rate } = self.arrivals {
            if !(rate > 0.0) || !rate.is_finite() {
                bail!(Config, "arrival rate must be positive, got {rate}");
            }
        }
        if !(self.dirichlet_alpha > 0.0) {
            bail!(Config, "dirichlet_alpha must be positive");
        }
        if !(self.zipf_exponent >= 0.0) {
            bail!(Config, "zipf_exponent must be non-negative");
        }
        Ok(())
    }
}

pub fn generate_requests(spec: &WorkloadSpec) -> Result<Vec<Request>> {
    spec.validate()?;
    let n = spec.requests as usize;
    let arrivals = match spec.arrivals {
        Arrivals::Burst => alloc::vec![0.0; n],
        Arrivals::Poisson { rate } => poisson_arrivals(rate, n, spec.seed)?,
    };
    let mut rng = stream(&[tag::LENGTHS, spec.seed]);
    let requests = arrivals
        .into_iter()
        .enumerate()
        .map(|(i, arrival)| {
            let prefill = match spec.prefill {
                PrefillLength::Fixed(l) => l,
                PrefillLength::Uniform { min, max } => rng.random_range(min..=max),
            };
            let decode = match spec.decode {
                DecodeLength::Fixed(l) => l,
                DecodeLength::Ratio(r) => libm::ceil(r * prefill as f64) as u32,
            };
            Request::new(i as u64, arrival, prefill, decode)
        })
        .collect();
    Ok(requests)
}
