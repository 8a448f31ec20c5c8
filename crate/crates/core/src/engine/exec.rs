use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::hardware::HardwareConfig;
use crate::scheduler::{IterationDag, OpNode, ResourceClass};
use crate::systolic::{schedule_gemm, ArrayShape, JobKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DurationMode {
    /// Compute and memory overlap (double buffering).
    Max,
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolKind {
    Nsa,
    Array3d,
    MemorySimd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pool {
    pub kind: PoolKind,
    pub instances: u32,
    pub shape: Option<ArrayShape>,
    /// FLOPs per cycle of one lane; memory-side pools only.
    pub lane_flops: f64,
}

/// Execution resources of one accelerator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Machine {
    pub pools: Vec<Pool>,
    pub bytes_per_cycle: f64,
    pub a3d: Option<usize>,
}

impl Machine {
    pub fn new(hw: &HardwareConfig) -> Self {
        let mut pools: Vec<Pool> = hw
            .nsa
            .iter()
            .filter(|s| s.count > 0)
            .map(|&s| Pool { kind: PoolKind::Nsa, instances: s.count, shape: Some(s), lane_flops: 0.0 })
            .collect();
        let a3d = hw.a3d.filter(|a| a.count > 0).map(|a| {
            pools.push(Pool { kind: PoolKind::Array3d, instances: a.count, shape: Some(a), lane_flops: 0.0 });
            pools.len() - 1
        });
        if let Some(s) = hw.simd {
            pools.push(Pool {
                kind: PoolKind::MemorySimd,
                instances: s.lanes,
                shape: None,
                lane_flops: s.flops_per_cycle / s.lanes as f64,
            });
        }
        Self { pools, bytes_per_cycle: hw.bytes_per_cycle(), a3d }
    }

    fn pools_of(&self, kind: PoolKind) -> impl Iterator<Item = usize> + '_ {
        self.pools.iter().enumerate().filter(move |(_, p)| p.kind == kind).map(|(i, _)| i)
    }
}

/// Work an op can place on one pool.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolWork {
    pub pool: usize,
    /// Cycles on a single instance.
    pub instance_cycles: f64,
    /// Independent pieces (tiles or lanes); more instances than this do not help.
    pub max_instances: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpPlan {
    /// Fastest pool first.
    pub work: Vec<PoolWork>,
    pub hbm_bytes: f64,
}

impl OpPlan {
    /// Highest compute rate (op fractions per cycle) with the whole machine.
    pub fn peak_rate(&self, machine: &Machine) -> f64 {
        let free: Vec<u32> = machine.pools.iter().map(|p| p.instances).collect();
        greedy(&self.work, &free, f64::INFINITY).1
    }

    pub fn min_cycles(&self, machine: &Machine, mode: DurationMode) -> f64 {
        let compute = if self.work.is_empty() { 0.0 } else { 1.0 / self.peak_rate(machine) };
        let memory = self.hbm_bytes / machine.bytes_per_cycle;
        match mode {
            DurationMode::Max => compute.max(memory),
            DurationMode::Sum => compute + memory,
        }
    }
}

/// Fills pools fastest first up to the piece limit and a rate ceiling.
/// Returns per-pool instance counts and the resulting rate.
fn greedy(work: &[PoolWork], free: &[u32], rate_cap: f64) -> (Vec<(usize, u32)>, f64) {
    let mut frac = 0.0;
    let mut rate = 0.0;
    let mut taken = Vec::new();
    for w in work {
        if frac >= 1.0 - 1e-12 || rate >= rate_cap {
            break;
        }
        let by_pieces = libm::ceil((1.0 - frac) * w.max_instances as f64 - 1e-9).max(0.0);
        let by_rate = if rate_cap.is_finite() {
            libm::ceil((rate_cap - rate) * w.instance_cycles - 1e-9).max(1.0)
        } else {
            f64::INFINITY
        };
        let n = (free[w.pool] as f64).min(by_pieces).min(by_rate) as u32;
        if n == 0 {
            continue;
        }
        taken.push((w.pool, n));
        frac += n as f64 / w.max_instances as f64;
        rate += n as f64 / w.instance_cycles;
    }
    (taken, rate)
}

fn gemm_work(node: &OpNode, pool: usize, shape: &ArrayShape, kind: JobKind) -> Result<Option<PoolWork>> {
    let mut cycles = 0u64;
    let mut tiles = 0u64;
    for g in &node.cost.gemms {
        if g.count == 0 {
            continue;
        }
        let s = schedule_gemm(g.m, g.k, g.n, shape, kind)?;
        cycles += s.cycles * g.count;
        tiles += s.tiles * g.count;
    }
    if cycles == 0 {
        return Ok(None);
    }
    Ok(Some(PoolWork {
        pool,
        instance_cycles: cycles as f64,
        max_instances: tiles.min(u32::MAX as u64) as u32,
    }))
}

/// Compute side of an op on the pools its resource class may use.
pub fn plan_compute(node: &OpNode, machine: &Machine) -> Result<Vec<PoolWork>> {
    let mut work = Vec::new();
    let mut add = |pool: usize, kind: JobKind| -> Result<()> {
        let shape = machine.pools[pool].shape.expect("array pool");
        if let Some(w) = gemm_work(node, pool, &shape, kind)? {
            work.push(w);
        }
        Ok(())
    };
    match node.resource {
        ResourceClass::Control => {}
        ResourceClass::Gemm => {
            for p in machine.pools_of(PoolKind::Nsa).chain(machine.a3d) {
                add(p, JobKind::GemmWs)?;
            }
        }
        ResourceClass::A3dSimd | ResourceClass::A3dSimdVcache => {
            let Some(p) = machine.a3d else {
                bail!(Scheduler, "{} op on hardware without 3D arrays", node.resource.name());
            };
            let kind = if node.resource == ResourceClass::A3dSimd { JobKind::Gemv } else { JobKind::GemvVcache };
            add(p, kind)?;
        }
        ResourceClass::MemorySimd => {
            let Some(p) = machine.pools_of(PoolKind::MemorySimd).next() else {
                bail!(Scheduler, "memory-side op on hardware without SIMD units");
            };
            let pool = machine.pools[p];
            if node.cost.flops > 0 {
                work.push(PoolWork {
                    pool: p,
                    instance_cycles: node.cost.flops as f64 / pool.lane_flops,
                    max_instances: pool.instances,
                });
            }
        }
    }
    work.sort_by(|a, b| a.instance_cycles.total_cmp(&b.instance_cycles).then(a.pool.cmp(&b.pool)));
    Ok(work)
}

/// Instances of the 3D pool per mode at one event: GEMM, SIMD, SIMD-V-Cache.
pub type Partition = [u32; 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub start: Vec<f64>,
    pub finish: Vec<f64>,
    pub span: f64,
    pub partitions: Vec<Partition>,
}

fn mode_slot(class: ResourceClass) -> Option<usize> {
    match class {
        ResourceClass::Gemm => Some(0),
        ResourceClass::A3dSimd => Some(1),
        ResourceClass::A3dSimdVcache => Some(2),
        _ => None,
    }
}

/// Max-min fair split of `capacity` among `demands`.
fn water_fill(demands: &[f64], capacity: f64) -> Vec<f64> {
    let mut grant = vec![0.0; demands.len()];
    let mut order: Vec<usize> = (0..demands.len()).collect();
    order.sort_by(|&a, &b| demands[a].total_cmp(&demands[b]).then(a.cmp(&b)));
    let mut left = capacity;
    let mut n = demands.len();
    for i in order {
        let share = left / n as f64;
        grant[i] = demands[i].min(share);
        left -= grant[i];
        n -= 1;
    }
    grant
}

/// Fluid list scheduling of one iteration DAG. Ready ops are served in id
/// order; instances and bandwidth are re-divided at every completion.
pub fn execute(dag: &IterationDag, plans: &[OpPlan], machine: &Machine, mode: DurationMode) -> Result<Timeline> {
    let n = dag.nodes.len();
    if plans.len() != n {
        bail!(Contract, "{} plans for {n} nodes", plans.len());
    }
    let mut pending = vec![0usize; n];
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
    for node in &dag.nodes {
        pending[node.id] = node.deps.len();
        for &d in &node.deps {
            succ[d].push(node.id);
        }
    }
    let mut ready: BTreeSet<usize> = (0..n).filter(|&i| pending[i] == 0).collect();
    let mut rem = vec![1.0f64; n];
    let mut start = vec![f64::NAN; n];
    let mut finish = vec![f64::NAN; n];
    let mut partitions = Vec::new();
    let mut now = 0.0f64;
    let mut done = 0usize;

    let complete = |i: usize, now: f64, ready: &mut BTreeSet<usize>, pending: &mut [usize], finish: &mut [f64]| {
        finish[i] = now;
        ready.remove(&i);
        for &s in &succ[i] {
            pending[s] -= 1;
            if pending[s] == 0 {
                ready.insert(s);
            }
        }
    };

    while done < n {
        let instant: Vec<usize> =
            ready.iter().copied().filter(|&i| plans[i].work.is_empty() && plans[i].hbm_bytes == 0.0).collect();
        if !instant.is_empty() {
            for i in instant {
                start[i] = now;
                complete(i, now, &mut ready, &mut pending, &mut finish);
                done += 1;
            }
            continue;
        }
        if ready.is_empty() {
            bail!(Scheduler, "dependency cycle: {} of {n} ops never became ready", n - done);
        }

        let mut free: Vec<u32> = machine.pools.iter().map(|p| p.instances).collect();
        let mut used_by_mode: Partition = [0; 3];
        let mut active: Vec<(usize, f64)> = Vec::new();
        for &i in &ready {
            let plan = &plans[i];
            let mem_cap = if plan.hbm_bytes > 0.0 { machine.bytes_per_cycle / plan.hbm_bytes } else { f64::INFINITY };
            let compute = if plan.work.is_empty() {
                f64::INFINITY
            } else {
                let (taken, rate) = greedy(&plan.work, &free, mem_cap);
                for &(p, k) in &taken {
                    free[p] -= k;
                    if Some(p) == machine.a3d {
                        if let Some(s) = mode_slot(dag.nodes[i].resource) {
                            used_by_mode[s] += k;
                        }
                    }
                }
                rate
            };
            if compute > 0.0 {
                active.push((i, compute));
            }
        }
        if let Some(p) = machine.a3d {
            let idle = free[p];
            let has = |c: ResourceClass| ready.iter().any(|&i| dag.nodes[i].resource == c);
            let slot = if has(ResourceClass::A3dSimd) {
                1
            } else if has(ResourceClass::A3dSimdVcache) {
                2
            } else if has(ResourceClass::Gemm) {
                0
            } else {
                1
            };
            used_by_mode[slot] += idle;
            partitions.push(used_by_mode);
        }

        let demands: Vec<f64> = active
            .iter()
            .map(|&(i, c)| match (plans[i].hbm_bytes > 0.0, mode) {
                (false, _) => 0.0,
                (true, DurationMode::Max) => c * plans[i].hbm_bytes,
                (true, DurationMode::Sum) => machine.bytes_per_cycle,
            })
            .collect();
        let grants = water_fill(&demands, machine.bytes_per_cycle);
        let mut rates: Vec<(usize, f64)> = Vec::with_capacity(active.len());
        for (k, &(i, compute)) in active.iter().enumerate() {
            let bytes = plans[i].hbm_bytes;
            let mem = if bytes > 0.0 { grants[k] / bytes } else { f64::INFINITY };
            let r = match mode {
                DurationMode::Max => compute.min(mem),
                DurationMode::Sum => {
                    let c = if compute.is_finite() { 1.0 / compute } else { 0.0 };
                    let m = if mem.is_finite() { 1.0 / mem } else { 0.0 };
                    1.0 / (c + m)
                }
            };
            if r > 0.0 {
                rates.push((i, r));
            }
        }
        if rates.is_empty() {
            bail!(Scheduler, "no ready op can make progress at cycle {now}");
        }
        let (first, dt) = rates
            .iter()
            .map(|&(i, r)| (i, rem[i] / r))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .expect("nonempty");
        for &(i, r) in &rates {
            if start[i].is_nan() {
                start[i] = now;
            }
            rem[i] -= r * dt;
        }
        now += dt;
        rem[first] = 0.0;
        let finished: Vec<usize> = rates.iter().map(|&(i, _)| i).filter(|&i| rem[i] <= 1e-12).collect();
        for i in finished {
            complete(i, now, &mut ready, &mut pending, &mut finish);
            done += 1;
        }
    }
    Ok(Timeline { start, finish, span: now, partitions })
}

/// Longest dependency path when every op runs alone on the whole machine.
pub fn critical_path(dag: &IterationDag, plans: &[OpPlan], machine: &Machine, mode: DurationMode) -> f64 {
    let mut end = vec![0.0f64; dag.nodes.len()];
    for node in &dag.nodes {
        let ready = node.deps.iter().map(|&d| end[d]).fold(0.0, f64::max);
        end[node.id] = ready + plans[node.id].min_cycles(machine, mode);
    }
    end.into_iter().fold(0.0, f64::max)
}
