//! The subcommands, as library functions the binary and tests share.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use a3d_core::codec::{profile_exponents, synthetic_gaussian_weights, Bf16Split, CodecMaps};
use a3d_core::engine::{run, run_observed, RunMetrics, RunSpec};
use a3d_core::scheduler::Policy;
use a3d_core::systolic::{functional_sim, ArrayKind, ArrayShape, JobKind, Matrix, TileJob};
use toml::Value;

use crate::config::{build_spec, Layer};
use crate::error::{Result, SimError};
use crate::formats::{
    atomic_write, comparison_csv, comparison_rows, decode_maps, encode_maps, ledger_csv, read_bf16, report_json,
    summary_csv, trace_csv,
};

/// Sibling of `path` with `suffix` replacing its extension.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

pub fn summary_line(m: &RunMetrics) -> String {
    let tbt = m.tbt_p99_s.map_or_else(|| "n/a".to_string(), |s| format!("{:.4} ms", s * 1e3));
    format!(
        "{}: tbt_p99 {tbt}, {:.1} tok/s, {:.4} J, {} DRAM accesses, throttle {:.3}",
        m.config_id,
        m.throughput_tps,
        m.energy_pj * 1e-12,
        m.dram_accesses,
        m.throttle
    )
}

pub struct RunArgs {
    pub config: Option<PathBuf>,
    pub overrides: Vec<(String, Value)>,
    pub out: PathBuf,
    pub timestamp: bool,
}

/// Writes `<out>` (JSON), `<stem>.csv` (summary) and `<stem>.ledger.csv`.
pub fn cmd_run(args: &RunArgs) -> Result<RunMetrics> {
    let spec = crate::config::load(args.config.as_deref(), &args.overrides)?;
    log::info!("running {}", spec.id());
    let mut m = run(&spec)?;
    m.config_id = spec.id();
    atomic_write(&args.out, &report_json(&m, args.timestamp.then(now_unix)))?;
    atomic_write(&sibling(&args.out, ".csv"), &summary_csv(std::slice::from_ref(&m)))?;
    atomic_write(&sibling(&args.out, ".ledger.csv"), &ledger_csv(&m.ledger))?;
    println!("{}", summary_line(&m));
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoolingSweep {
    On,
    Off,
    Both,
}

pub struct CompareArgs {
    /// `preset` or `preset:policy`.
    pub presets: Vec<String>,
    pub workload: Option<PathBuf>,
    pub overrides: Vec<(String, Value)>,
    pub cooling: CoolingSweep,
    pub out_dir: PathBuf,
}

/// Every preset runs on the same workload layer, so all specs share the
/// request and routing traces.
pub fn compare_specs(args: &CompareArgs) -> Result<Vec<RunSpec>> {
    if args.presets.len() < 2 {
        return Err(SimError::Config("compare needs at least two presets".into()));
    }
    let mut base = match &args.workload {
        Some(p) => Layer::read(p)?,
        None => Layer::default(),
    };
    for (k, v) in &args.overrides {
        base.set(k.clone(), v.clone());
    }
    let coolings: &[bool] = match args.cooling {
        CoolingSweep::On => &[true],
        CoolingSweep::Off => &[false],
        CoolingSweep::Both => &[true, false],
    };
    let mut specs = Vec::new();
    for entry in &args.presets {
        let (preset, policy) = match entry.split_once(':') {
            Some((p, pol)) => (p, Some(pol.parse::<Policy>()?)),
            None => (entry.as_str(), None),
        };
        for &cooling in coolings {
            let mut layer = base.clone();
            layer.set("preset", Value::String(preset.into()));
            layer.set("engine.cooling", Value::Boolean(cooling));
            if let Some(p) = policy {
                layer.set("engine.policy", Value::String(p.name().into()));
            }
            let mut spec = build_spec(&layer)?;
            let suffix = if args.cooling == CoolingSweep::Both {
                if cooling { "-cooled" } else { "-uncooled" }
            } else {
                ""
            };
            spec.config_id = format!("{}{suffix}", spec.id());
            specs.push(spec);
        }
    }
    Ok(specs)
}

/// Writes `comparison.csv` and `summary.csv` into the output directory.
pub fn cmd_compare(args: &CompareArgs) -> Result<Vec<RunMetrics>> {
    let specs = compare_specs(args)?;
    std::fs::create_dir_all(&args.out_dir).map_err(|e| SimError::write(&args.out_dir, e))?;
    let results: Vec<Result<RunMetrics>> = std::thread::scope(|s| {
        let handles: Vec<_> = specs
            .iter()
            .map(|spec| s.spawn(move || run(spec).map_err(SimError::from)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("simulation thread panicked")).collect()
    });
    let mut runs = Vec::with_capacity(results.len());
    for (spec, r) in specs.iter().zip(results) {
        let mut m = r?;
        m.config_id = spec.config_id.clone();
        println!("{}", summary_line(&m));
        runs.push(m);
    }
    atomic_write(&args.out_dir.join("comparison.csv"), &comparison_csv(&comparison_rows(&runs)))?;
    atomic_write(&args.out_dir.join("summary.csv"), &summary_csv(&runs))?;
    Ok(runs)
}

/// `n=65536,sigma=0.02,seed=0,layers=1`; every field is optional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticWeights {
    pub n: usize,
    pub sigma: f64,
    pub seed: u64,
    pub layers: u32,
}

impl Default for SyntheticWeights {
    fn default() -> Self {
        Self { n: 1 << 16, sigma: 0.02, seed: 0, layers: 1 }
    }
}

impl std::str::FromStr for SyntheticWeights {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        let mut out = Self::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part.split_once('=').ok_or_else(|| SimError::Config(format!("expected key=value, got `{part}`")))?;
            let bad = |_| SimError::Config(format!("bad value for `{k}`: `{v}`"));
            match k {
                "n" => out.n = v.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                "sigma" => out.sigma = v.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
                "seed" => out.seed = v.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                "layers" => out.layers = v.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                _ => return Err(SimError::Config(format!("unknown synthetic weight key `{k}`"))),
            }
        }
        if out.layers == 0 {
            return Err(SimError::Config("layers must be positive".into()));
        }
        Ok(out)
    }
}

pub enum WeightInput {
    /// Raw little-endian BF16, split evenly into `layers` layers.
    File { path: PathBuf, layers: u32 },
    Synthetic(SyntheticWeights),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerCoverage {
    pub layer: usize,
    pub exp_min: u8,
    pub exp_max: u8,
    pub coverage: f64,
    pub outliers: usize,
}

/// Profiles each layer, writes the map file to `out` and the coverage table
/// to `<stem>.coverage.csv`.
pub fn cmd_codec_profile(input: &WeightInput, out: &Path) -> Result<Vec<LayerCoverage>> {
    let layers: Vec<Vec<u16>> = match input {
        WeightInput::File { path, layers } => {
            let w = read_bf16(path)?;
            if *layers == 0 {
                return Err(SimError::Config("layers must be positive".into()));
            }
            let per = w.len().div_ceil(*layers as usize).max(1);
            let mut chunks: Vec<Vec<u16>> = w.chunks(per).map(<[u16]>::to_vec).collect();
            chunks.resize(*layers as usize, Vec::new());
            chunks
        }
        WeightInput::Synthetic(s) => (0..s.layers)
            .map(|l| synthetic_gaussian_weights(s.n, s.sigma, s.seed.wrapping_add(l as u64)))
            .collect::<a3d_core::Result<_>>()?,
    };
    let mut maps = CodecMaps::default();
    let mut report = Vec::new();
    let mut csv = String::from("layer,exp_min,exp_max,coverage,outliers\n");
    for (l, w) in layers.iter().enumerate() {
        let p = profile_exponents(w)?;
        let row = LayerCoverage {
            layer: l,
            exp_min: p.map.exp_min,
            exp_max: p.map.exp_max,
            coverage: p.coverage,
            outliers: p.outliers.len(),
        };
        csv.push_str(&format!("{},{},{},{},{}\n", row.layer, row.exp_min, row.exp_max, row.coverage, row.outliers));
        println!(
            "layer {l}: window [{}, {}], coverage {:.6}, {} outliers",
            row.exp_min, row.exp_max, row.coverage, row.outliers
        );
        maps.layers.push((p.map, p.outlier_map()));
        report.push(row);
    }
    let bytes = encode_maps(&maps);
    decode_maps(&bytes, out)?;
    atomic_write(out, &bytes)?;
    atomic_write(&sibling(out, ".coverage.csv"), csv.as_bytes())?;
    Ok(report)
}

/// Splits and reassembles every 16-bit pattern; returns `(exact, total)`.
pub fn cmd_codec_roundtrip() -> (u32, u32) {
    let exact = (0..=u16::MAX).filter(|&b| Bf16Split::new(b).reassemble() == b).count() as u32;
    println!("roundtrip: {exact}/65536 exact reassemblies, {}", if exact == 65536 { "pass" } else { "FAIL" });
    (exact, 65536)
}

/// The DAG of iteration `index`, one node per line.
pub fn cmd_dag(config: Option<&Path>, overrides: &[(String, Value)], index: u64) -> Result<String> {
    let spec = crate::config::load(config, overrides)?;
    let mut dump = None;
    run_observed(&spec, |o| {
        if o.batch.index == index {
            dump = Some(o.dag.dump());
        }
    })?;
    dump.ok_or_else(|| SimError::Config(format!("the run has no iteration {index}")))
}

pub struct TraceArgs {
    pub array: ArrayKind,
    pub size: u32,
    pub kind: JobKind,
    pub m: u32,
    pub out: PathBuf,
}

/// Runs one `m x size x size` tile with small integer operands and writes
/// the per-PE busy trace.
pub fn cmd_trace(args: &TraceArgs) -> Result<usize> {
    let array = ArrayShape::new(args.array, args.size, args.size, 1)?;
    let (m, k, n) = (args.m as usize, args.size as usize, args.size as usize);
    let job = TileJob::new(args.kind, args.m, args.size, args.size);
    let x = Matrix::from_fn(m, k, |i, j| (i + 2 * j) as i64 % 7 - 3);
    let w = Matrix::from_fn(k, n, |i, j| (3 * i + j) as i64 % 5 - 2);
    let sim = functional_sim(&job, &array, &x, &w)?;
    atomic_write(&args.out, &trace_csv(&sim.trace))?;
    println!("{} cycles, {} busy PE-cycles", sim.trace.len(), sim.trace.busy_total());
    Ok(sim.trace.len())
}
