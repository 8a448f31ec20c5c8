//! Executes iteration DAGs on a hardware configuration and collects
//! latency, throughput, energy and DRAM-access metrics.

mod exec;
mod metrics;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::codec::{expert_precision, DEFAULT_THRESHOLD};
use crate::error::{bail, Result};
use crate::hardware::{HardwareConfig, SimdLocation};
use crate::memory::{
    charge_dram_read, charge_macs, charge_sram, charge_transport, fetch_expert, place_expert, vcache_session,
    AccessLedger, Category, ExpertPlacement, Placer, Precision, TransportPath,
};
use crate::scheduler::{build_iteration_dag, Bottleneck, IterationDag, OpNode, Policy, Predictor, ResourceClass};
use crate::systolic::{decompose_low_ai, WeightSource};
use crate::workload::{
    build_iteration, generate_requests, iteration_cost_profile, IterationBatch, ModelConfig, Popularity,
    RequestState, RoutingSampler, WorkloadSpec,
};

pub use exec::{critical_path, execute, plan_compute, DurationMode, Machine, OpPlan, Partition, Pool, PoolKind, PoolWork, Timeline};
pub use metrics::{apply_throttle, percentile, tbt_p99};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub policy: Policy,
    pub duration: DurationMode,
    /// Score-gated FP8 expert fetches.
    pub codec: bool,
    pub threshold: f64,
    pub predictor_accuracy: f64,
    pub cooling: bool,
    pub throttle: bool,
}

impl EngineConfig {
    /// Fusion and the codec on 3D-array hardware, barrier scheduling elsewhere.
    pub fn for_hardware(hw: &HardwareConfig) -> Self {
        let a3d = hw.a3d.is_some_and(|a| a.count > 0);
        Self {
            policy: if a3d { Policy::Hrofs } else { Policy::Conventional },
            duration: DurationMode::Max,
            codec: a3d,
            threshold: DEFAULT_THRESHOLD,
            predictor_accuracy: 0.9,
            cooling: true,
            throttle: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub config_id: String,
    pub model: ModelConfig,
    pub hardware: HardwareConfig,
    pub workload: WorkloadSpec,
    /// Zipf popularity from the workload spec when absent.
    pub popularity: Option<Popularity>,
    pub engine: EngineConfig,
}

impl RunSpec {
    pub fn new(model: ModelConfig, hardware: HardwareConfig, workload: WorkloadSpec) -> Self {
        let engine = EngineConfig::for_hardware(&hardware);
        Self { config_id: String::new(), model, hardware, workload, popularity: None, engine }
    }

    pub fn id(&self) -> String {
        if self.config_id.is_empty() {
            format!(
                "{}-{}-{}-s{}",
                self.hardware.name,
                self.model.name,
                self.engine.policy.name(),
                self.workload.seed
            )
        } else {
            self.config_id.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub index: u64,
    pub start_s: f64,
    pub span_cycles: f64,
    pub critical_path_cycles: f64,
    pub decode_tokens: u32,
    pub prefill_tokens: u32,
    pub regime: Bottleneck,
    pub energy_pj: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub config_id: String,
    pub hardware: String,
    pub model: String,
    pub policy: Policy,
    pub seed: u64,
    pub requests: u32,
    pub completed_tokens: u64,
    pub makespan_s: f64,
    pub throughput_tps: f64,
    pub tbt_p99_s: Option<f64>,
    pub tbt_samples: Vec<f64>,
    pub ttft_s: Vec<f64>,
    pub energy_pj: f64,
    pub energy_breakdown_pj: BTreeMap<String, f64>,
    pub ledger: AccessLedger,
    pub dram_accesses: u64,
    pub avg_power_w: f64,
    pub power_cap_w: f64,
    pub cooling: bool,
    /// Wall-time stretch from the power cap (1 when not power-bound).
    pub throttle: f64,
    pub iterations: Vec<IterationRecord>,
}

/// Everything the engine produced for one iteration.
#[derive(Debug, Clone)]
pub struct IterationOutcome {
    pub batch: IterationBatch,
    pub dag: IterationDag,
    pub plans: Vec<OpPlan>,
    pub timeline: Timeline,
    pub critical_path: f64,
    pub ledger: AccessLedger,
}

/// Per-run state that outlives iterations: expert placement, routing and
/// the execution resources.
pub struct Simulator<'a> {
    spec: &'a RunSpec,
    machine: Machine,
    placements: Vec<Vec<ExpertPlacement>>,
    sampler: RoutingSampler<'a>,
    predictor: Predictor,
}

impl<'a> Simulator<'a> {
    pub fn new(spec: &'a RunSpec, popularity: &'a Popularity) -> Result<Self> {
        spec.model.validate()?;
        spec.hardware.validate()?;
        spec.workload.validate()?;
        if !(0.0..=1.0).contains(&spec.engine.threshold) {
            bail!(Config, "codec threshold must be in [0, 1], got {}", spec.engine.threshold);
        }
        popularity.check_model(&spec.model)?;
        let m = &spec.model;
        let mut placer = Placer::new(&spec.hardware.memory);
        let mut placements = Vec::with_capacity(m.num_layers as usize);
        for layer in 0..m.num_layers {
            let row: Result<Vec<ExpertPlacement>> =
                (0..m.experts_per_layer()).map(|e| place_expert(&mut placer, e, layer, m.expert_bytes())).collect();
            placements.push(row?);
        }
        Ok(Self {
            spec,
            machine: Machine::new(&spec.hardware),
            placements,
            sampler: RoutingSampler::new(popularity, m.top_k, spec.workload.dirichlet_alpha, spec.workload.seed)?,
            predictor: Predictor::new(spec.engine.predictor_accuracy, spec.workload.seed)?,
        })
    }

    pub fn machine(&self) -> &Machine {
        &self.machine
    }

    pub fn placement(&self, layer: u32, expert: u32) -> &ExpertPlacement {
        &self.placements[layer as usize][expert as usize]
    }

    fn weight_path(&self, node: &OpNode) -> TransportPath {
        let hw = &self.spec.hardware;
        match (node.resource, hw.simd) {
            (ResourceClass::MemorySimd, Some(s)) => match s.location {
                SimdLocation::InDram => TransportPath::Local,
                SimdLocation::HbmLogicDie => TransportPath::Tsv,
            },
            _ if hw.a3d.is_some() => TransportPath::Tsv,
            _ => hw.memory.npu_path(),
        }
    }

    /// Charges one op's traffic and MACs; returns its HBM bytes.
    fn account(&self, node: &OpNode, ledger: &mut AccessLedger) -> Result<u64> {
        let hw = &self.spec.hardware;
        let mem = &hw.memory;
        let path = self.weight_path(node);
        let mut bytes = 0u64;
        if let Some(work) = &node.expert {
            let placement = self.placement(node.layer, work.expert);
            let precision = if self.spec.engine.codec {
                expert_precision(&work.scores, self.spec.engine.threshold, work.shared)?
            } else {
                Precision::Bf16
            };
            bytes += self.fetch_weights(node, placement, precision, path, ledger)?;
            if work.mispredicted {
                bytes += fetch_expert(placement, Precision::Bf16, mem, hw.frequency_hz, path, ledger).bytes;
                ledger.expert.mispredicted_fetches += 1;
            }
        } else {
            let b = node.cost.hbm_bytes();
            charge_dram_read(b, path, mem, ledger);
            bytes += b;
        }
        charge_sram(node.cost.act_bytes, mem, ledger);
        let mac_pj = match (node.resource, hw.simd) {
            (ResourceClass::MemorySimd, Some(s)) => {
                charge_transport(node.cost.act_bytes, TransportPath::SerdesNoc, mem, ledger);
                s.mac_pj
            }
            _ => mem.energy.mac_pj,
        };
        charge_macs(node.cost.flops / 2, mac_pj, ledger);
        Ok(bytes)
    }

    fn fetch_weights(
        &self,
        node: &OpNode,
        placement: &ExpertPlacement,
        precision: Precision,
        path: TransportPath,
        ledger: &mut AccessLedger,
    ) -> Result<u64> {
        let hw = &self.spec.hardware;
        let mem = &hw.memory;
        let t = node.tokens.len() as u64;
        if node.resource != ResourceClass::A3dSimdVcache {
            return Ok(fetch_expert(placement, precision, mem, hw.frequency_hz, path, ledger).bytes);
        }
        let m = &self.spec.model;
        let eb = match precision {
            Precision::Fp8 => 1,
            Precision::Bf16 => m.bytes_per_element(),
        };
        let (d, f) = (m.hidden_dim, m.ffn_dim);
        let mut panels = Vec::new();
        for (k, n) in [(d, f), (d, f), (f, d)] {
            let jobs = decompose_low_ai(t, k, n, mem.type2_sram, eb)?;
            if t > 1 && jobs.iter().all(|j| j.source == WeightSource::Hbm) {
                let mut total = 0;
                for _ in 0..t {
                    total += fetch_expert(placement, precision, mem, hw.frequency_hz, path, ledger).bytes;
                }
                return Ok(total);
            }
            panels.extend(jobs.iter().filter(|j| j.source == WeightSource::Hbm).map(|j| j.weight_bytes(eb)));
        }
        let mut total = 0;
        let dram_before = ledger.get(Category::Dram).count;
        for p in panels {
            total += vcache_session(p, t, mem, ledger)?.hbm_bytes;
        }
        match precision {
            Precision::Fp8 => ledger.expert.fp8_fetches += 1,
            Precision::Bf16 => ledger.expert.bf16_fetches += 1,
        }
        ledger.expert.bytes += total;
        ledger.expert.row_activations += ledger.get(Category::Dram).count - dram_before;
        Ok(total)
    }

    /// Routes, costs, schedules and executes one batch.
    pub fn step(&self, batch: &IterationBatch) -> Result<IterationOutcome> {
        let m = &self.spec.model;
        let keys = batch.token_keys();
        let mut costs = Vec::with_capacity(m.num_layers as usize);
        for layer in 0..m.num_layers {
            let routing: Vec<_> = keys.iter().map(|&k| self.sampler.sample(layer as usize, k)).collect();
            costs.push(iteration_cost_profile(batch, &routing, m, layer)?);
        }
        let dag = build_iteration_dag(self.spec.engine.policy, batch, &costs, m, &self.spec.hardware, &self.predictor)?;
        let mut ledger = AccessLedger::default();
        let mut plans = Vec::with_capacity(dag.nodes.len());
        for node in &dag.nodes {
            let bytes = self.account(node, &mut ledger)?;
            plans.push(OpPlan { work: plan_compute(node, &self.machine)?, hbm_bytes: bytes as f64 });
        }
        let mode = self.spec.engine.duration;
        let timeline = execute(&dag, &plans, &self.machine, mode)?;
        let critical_path = critical_path(&dag, &plans, &self.machine, mode);
        Ok(IterationOutcome { batch: batch.clone(), dag, plans, timeline, critical_path, ledger })
    }
}

pub fn run(spec: &RunSpec) -> Result<RunMetrics> {
    run_observed(spec, |_| {})
}

/// [`run`], handing every iteration to `observe` before it retires.
pub fn run_observed(spec: &RunSpec, mut observe: impl FnMut(&IterationOutcome)) -> Result<RunMetrics> {
    let popularity = match &spec.popularity {
        Some(p) => p.clone(),
        None => Popularity::zipf(
            spec.model.num_layers,
            spec.model.num_experts,
            spec.workload.zipf_exponent,
            spec.workload.seed,
        ),
    };
    let sim = Simulator::new(spec, &popularity)?;
    let hw = &spec.hardware;
    let mut requests = generate_requests(&spec.workload)?;
    let mut ledger = AccessLedger::default();
    let mut iterations = Vec::new();
    let mut now = 0.0f64;
    let mut index = 0u64;
    while requests.iter().any(|r| r.state != RequestState::Done) {
        let batch = build_iteration(&requests, spec.workload.chunk_budget, now, index);
        if batch.is_empty() {
            let next = requests
                .iter()
                .filter(|r| r.state == RequestState::Queued && r.arrival_time > now)
                .map(|r| r.arrival_time)
                .fold(f64::INFINITY, f64::min);
            if !next.is_finite() {
                bail!(Scheduler, "requests remain but none can be scheduled");
            }
            now = next;
            continue;
        }
        let out = sim.step(&batch)?;
        observe(&out);
        let start = now;
        now += out.timeline.span / hw.frequency_hz;
        for d in &batch.decode_tokens {
            requests[d.request as usize].complete_decode(now);
        }
        for c in &batch.prefill_chunks {
            requests[c.request as usize].complete_chunk(c.tokens, now);
        }
        iterations.push(IterationRecord {
            index,
            start_s: start,
            span_cycles: out.timeline.span,
            critical_path_cycles: out.critical_path,
            decode_tokens: batch.decode_tokens.len() as u32,
            prefill_tokens: batch.prefill_tokens(),
            regime: out.dag.regimes[0],
            energy_pj: out.ledger.total_pj(),
        });
        ledger.merge(&out.ledger);
        index += 1;
    }

    let energy_pj = ledger.total_pj();
    let cap = hw.power_cap(spec.engine.cooling);
    let throttle = if spec.engine.throttle { apply_throttle(energy_pj * 1e-12, now, cap)? } else { 1.0 };
    let makespan_s = now * throttle;
    let mut tbt_samples = Vec::new();
    let mut ttft_s = Vec::new();
    let mut completed_tokens = 0u64;
    for r in &requests {
        completed_tokens += r.token_times.len() as u64;
        tbt_samples.extend(r.token_times.windows(2).map(|w| (w[1] - w[0]) * throttle));
        if let Some(t) = r.ttft() {
            ttft_s.push(t * throttle);
        }
    }
    for it in &mut iterations {
        it.start_s *= throttle;
    }
    let tbt_p99_s = if tbt_samples.is_empty() { None } else { Some(tbt_p99(&tbt_samples)?) };
    let energy_breakdown_pj = ledger.rows().map(|(c, t)| (c.name().to_string(), t.pj)).collect();
    Ok(RunMetrics {
        config_id: spec.id(),
        hardware: hw.name.clone(),
        model: spec.model.name.clone(),
        policy: spec.engine.policy,
        seed: spec.workload.seed,
        requests: spec.workload.requests,
        completed_tokens,
        makespan_s,
        throughput_tps: if makespan_s > 0.0 { completed_tokens as f64 / makespan_s } else { 0.0 },
        tbt_p99_s,
        tbt_samples,
        ttft_s,
        energy_pj,
        energy_breakdown_pj,
        dram_accesses: ledger.dram_accesses(),
        ledger,
        avg_power_w: if makespan_s > 0.0 { energy_pj * 1e-12 / makespan_s } else { 0.0 },
        power_cap_w: cap,
        cooling: spec.engine.cooling,
        throttle,
        iterations,
    })
}
