//! Serving workload: model shapes, requests, chunked-prefill batching,
//! Poisson arrivals and synthetic expert routing.

mod batch;
mod cost;
mod model;
mod request;
mod routing;

pub use batch::{build_iteration, DecodeToken, IterationBatch, PrefillChunk};
pub use cost::{
    decode_attention_cost, expert_cost, gating_cost, iteration_cost_profile, out_proj_cost,
    prefill_attention_cost, qkv_cost, ExpertLoad, Gemm, LayerCost, OpCost,
};
pub use model::{AttentionKind, ModelConfig};
pub use request::{
    generate_requests, poisson_arrivals, Arrivals, DecodeLength, PrefillLength, Request,
    RequestState, WorkloadSpec,
};
pub use routing::{
    minmax_normalize, sample_routing, ExpertChoice, LayerRouting, Popularity, RoutingSampler,
    RoutingTrace, TokenKey,
};
