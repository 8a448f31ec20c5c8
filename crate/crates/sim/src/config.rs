//! Flat dotted-key run configuration.
//!
//! A config file is TOML; nested tables are flattened so `[workload]
//! requests = 8` and `workload.requests = 8` mean the same thing. Layers are
//! merged preset, then file, then command-line `--set key=value` pairs.
//!
//! | key | meaning |
//! |-----|---------|
//! | `preset` | hardware preset (`a3d-moe-1`, `a3d-moe-2`, `neupim-like`, `duplex-like`) |
//! | `model` | `olmoe-1b-7b`, `deepseek-v2-lite`, `qwen1.5-moe-a2.7b` |
//! | `config_id` | label carried into reports |
//! | `model.*` | `hidden_dim`, `num_heads`, `head_dim`, `ffn_dim`, `num_layers`, `num_experts`, `top_k`, `num_shared_experts`, `attention` (`mha`/`gqa`/`mla`), `gqa_groups`, `mla_latent_dim`, `weight_bits` |
//! | `hardware.frequency_hz`, `hardware.nsa_count`, `hardware.a3d_count` | array overrides |
//! | `memory.*` | `hbm_count`, `bandwidth_per_hbm`, `hbm_capacity`, `type1_sram`, `type2_sram`, `dram_row_bytes`, `interposer`, `interposer_distance_mm` |
//! | `energy.*` | `dram_pj_per_byte`, `tsv_pj_per_byte`, `serdes_pj_per_byte`, `noc_pj_per_byte_mm`, `sram_pj_per_byte`, `mac_pj` |
//! | `power.*` | `cooled_w`, `uncooled_w` |
//! | `workload.*` | `requests`, `arrivals` (`burst`/`poisson`), `rate`, `prefill_len` or `prefill_min`+`prefill_max`, `decode_len` or `decode_ratio`, `chunk_budget`, `zipf_exponent`, `dirichlet_alpha`, `seed`, `popularity` (CSV path) |
//! | `engine.*` | `policy`, `duration` (`max`/`sum`), `codec`, `threshold`, `predictor_accuracy`, `cooling`, `throttle` |

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use a3d_core::engine::{DurationMode, EngineConfig, RunSpec};
use a3d_core::hardware::HardwareConfig;
use a3d_core::scheduler::Policy;
use a3d_core::workload::{Arrivals, AttentionKind, DecodeLength, ModelConfig, PrefillLength, WorkloadSpec};
use toml::Value;

use crate::error::{Result, SimError};
use crate::formats::read_popularity;

/// Flattened key/value pairs of one configuration layer.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Layer(pub BTreeMap<String, Value>);

impl Layer {
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| e.message().to_string())?;
        let mut out = BTreeMap::new();
        flatten("", Value::Table(table), &mut out);
        Ok(Layer(out))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::read(path, e))?;
        let mut layer = Self::parse(&text).map_err(|m| SimError::format(path, m))?;
        if let Some(Value::String(p)) = layer.0.get("workload.popularity") {
            let resolved = path.parent().unwrap_or(Path::new(".")).join(p);
            layer.0.insert("workload.popularity".into(), Value::String(resolved.display().to_string()));
        }
        Ok(layer)
    }

    /// `key=value`, the value read as a TOML literal or else as a bare string.
    pub fn parse_assignment(s: &str) -> Result<(String, Value)> {
        let Some((k, v)) = s.split_once('=') else {
            return Err(SimError::Config(format!("expected key=value, got `{s}`")));
        };
        let v = v.trim();
        let value = format!("v = {v}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| Value::String(v.to_string()));
        Ok((k.trim().to_string(), value))
    }

    pub fn set(&mut self, key: impl Into<String>, value: Value) {
        self.0.insert(key.into(), value);
    }

    pub fn merge(&mut self, other: &Layer) {
        for (k, v) in &other.0 {
            self.0.insert(k.clone(), v.clone());
        }
    }
}

fn flatten(prefix: &str, v: Value, out: &mut BTreeMap<String, Value>) {
    match v {
        Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() { k } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        other => {
            out.insert(prefix.to_string(), other);
        }
    }
}

struct Keys(BTreeMap<String, Value>);

impl Keys {
    fn take(&mut self, key: &str) -> Option<Value> {
        self.0.remove(key)
    }

    fn str(&mut self, key: &str) -> Result<Option<String>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(v) => Err(bad(key, "a string", &v)),
        }
    }

    fn f64(&mut self, key: &str) -> Result<Option<f64>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Float(f)) => Ok(Some(f)),
            Some(Value::Integer(i)) => Ok(Some(i as f64)),
            Some(v) => Err(bad(key, "a number", &v)),
        }
    }

    fn u64(&mut self, key: &str) -> Result<Option<u64>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if i >= 0 => Ok(Some(i as u64)),
            Some(v) => Err(bad(key, "a non-negative integer", &v)),
        }
    }

    fn u32(&mut self, key: &str) -> Result<Option<u32>> {
        match self.u64(key)? {
            None => Ok(None),
            Some(v) => u32::try_from(v).map(Some).map_err(|_| SimError::Config(format!("`{key}` is too large"))),
        }
    }

    fn bool(&mut self, key: &str) -> Result<Option<bool>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(b)),
            Some(Value::String(s)) if s == "on" => Ok(Some(true)),
            Some(Value::String(s)) if s == "off" => Ok(Some(false)),
            Some(v) => Err(bad(key, "a boolean", &v)),
        }
    }
}

fn bad(key: &str, want: &str, got: &Value) -> SimError {
    SimError::Config(format!("`{key}` must be {want}, got {got}"))
}

macro_rules! set {
    ($keys:ident, $kind:ident, $key:literal => $target:expr) => {
        if let Some(v) = $keys.$kind($key)? {
            $target = v;
        }
    };
}

/// Builds a run spec from merged layers. Unknown keys are an error.
pub fn build_spec(layer: &Layer) -> Result<RunSpec> {
    let mut k = Keys(layer.0.clone());
    let preset = k.str("preset")?.unwrap_or_else(|| HardwareConfig::PRESETS[0].to_string());
    let mut hw = HardwareConfig::by_name(&preset).ok_or_else(|| {
        SimError::Config(format!("unknown preset `{preset}` (known: {})", HardwareConfig::PRESETS.join(", ")))
    })?;
    let model_name = k.str("model")?.unwrap_or_else(|| "olmoe-1b-7b".into());
    let mut model = ModelConfig::by_name(&model_name)
        .ok_or_else(|| SimError::Config(format!("unknown model `{model_name}`")))?;
    let config_id = k.str("config_id")?.unwrap_or_default();

    set!(k, u64, "model.hidden_dim" => model.hidden_dim);
    set!(k, u64, "model.num_heads" => model.num_heads);
    set!(k, u64, "model.head_dim" => model.head_dim);
    set!(k, u64, "model.ffn_dim" => model.ffn_dim);
    set!(k, u32, "model.num_layers" => model.num_layers);
    set!(k, u32, "model.num_experts" => model.num_experts);
    set!(k, u32, "model.top_k" => model.top_k);
    set!(k, u32, "model.num_shared_experts" => model.num_shared_experts);
    set!(k, u64, "model.gqa_groups" => model.gqa_groups);
    set!(k, u32, "model.weight_bits" => model.weight_bits);
    if let Some(d) = k.u64("model.mla_latent_dim")? {
        model.mla_latent_dim = Some(d);
    }
    if let Some(a) = k.str("model.attention")? {
        model.attention = match a.as_str() {
            "mha" => AttentionKind::Mha,
            "gqa" => AttentionKind::Gqa,
            "mla" => AttentionKind::Mla,
            other => return Err(SimError::Config(format!("unknown attention kind `{other}`"))),
        };
    }

    set!(k, f64, "hardware.frequency_hz" => hw.frequency_hz);
    if let Some(n) = k.u32("hardware.nsa_count")? {
        match hw.nsa.first_mut() {
            Some(s) => s.count = n,
            None => return Err(SimError::Config("preset has no edge-fed arrays".into())),
        }
    }
    if let Some(n) = k.u32("hardware.a3d_count")? {
        match hw.a3d.as_mut() {
            Some(a) => a.count = n,
            None => return Err(SimError::Config("preset has no 3D arrays".into())),
        }
    }
    let m = &mut hw.memory;
    set!(k, u32, "memory.hbm_count" => m.hbm_count);
    set!(k, f64, "memory.bandwidth_per_hbm" => m.bandwidth_per_hbm);
    set!(k, u64, "memory.hbm_capacity" => m.hbm_capacity);
    set!(k, u64, "memory.type1_sram" => m.type1_sram);
    set!(k, u64, "memory.type2_sram" => m.type2_sram);
    set!(k, u64, "memory.dram_row_bytes" => m.dram_row_bytes);
    set!(k, bool, "memory.interposer" => m.interposer);
    set!(k, f64, "memory.interposer_distance_mm" => m.interposer_distance_mm);
    let e = &mut m.energy;
    set!(k, f64, "energy.dram_pj_per_byte" => e.dram_pj_per_byte);
    set!(k, f64, "energy.tsv_pj_per_byte" => e.tsv_pj_per_byte);
    set!(k, f64, "energy.serdes_pj_per_byte" => e.serdes_pj_per_byte);
    set!(k, f64, "energy.noc_pj_per_byte_mm" => e.noc_pj_per_byte_mm);
    set!(k, f64, "energy.sram_pj_per_byte" => e.sram_pj_per_byte);
    set!(k, f64, "energy.mac_pj" => e.mac_pj);
    set!(k, f64, "power.cooled_w" => hw.power.cooled_w);
    set!(k, f64, "power.uncooled_w" => hw.power.uncooled_w);

    let mut w = WorkloadSpec::default();
    set!(k, u32, "workload.requests" => w.requests);
    set!(k, u32, "workload.chunk_budget" => w.chunk_budget);
    set!(k, f64, "workload.zipf_exponent" => w.zipf_exponent);
    set!(k, f64, "workload.dirichlet_alpha" => w.dirichlet_alpha);
    set!(k, u64, "workload.seed" => w.seed);
    let rate = k.f64("workload.rate")?;
    w.arrivals = match k.str("workload.arrivals")?.as_deref() {
        None | Some("burst") if rate.is_none() => Arrivals::Burst,
        Some("burst") => return Err(SimError::Config("`workload.rate` needs poisson arrivals".into())),
        None | Some("poisson") => Arrivals::Poisson { rate: rate.unwrap_or(1.0) },
        Some(other) => return Err(SimError::Config(format!("unknown arrival process `{other}`"))),
    };
    match (k.u32("workload.prefill_len")?, k.u32("workload.prefill_min")?, k.u32("workload.prefill_max")?) {
        (Some(l), None, None) => w.prefill = PrefillLength::Fixed(l),
        (None, None, None) => {}
        (None, min, max) => {
            let PrefillLength::Uniform { min: dmin, max: dmax } = w.prefill else { unreachable!() };
            w.prefill = PrefillLength::Uniform { min: min.unwrap_or(dmin), max: max.unwrap_or(dmax) };
        }
        _ => return Err(SimError::Config("give either `prefill_len` or `prefill_min`/`prefill_max`".into())),
    }
    match (k.u32("workload.decode_len")?, k.f64("workload.decode_ratio")?) {
        (Some(l), None) => w.decode = DecodeLength::Fixed(l),
        (None, Some(r)) => w.decode = DecodeLength::Ratio(r),
        (None, None) => {}
        _ => return Err(SimError::Config("give either `decode_len` or `decode_ratio`".into())),
    }
    let popularity_path = k.str("workload.popularity")?.map(PathBuf::from);

    let mut engine = EngineConfig::for_hardware(&hw);
    if let Some(p) = k.str("engine.policy")? {
        engine.policy = p.parse::<Policy>()?;
    }
    if let Some(d) = k.str("engine.duration")? {
        engine.duration = match d.as_str() {
            "max" => DurationMode::Max,
            "sum" => DurationMode::Sum,
            other => return Err(SimError::Config(format!("unknown duration mode `{other}`"))),
        };
    }
    set!(k, bool, "engine.codec" => engine.codec);
    set!(k, f64, "engine.threshold" => engine.threshold);
    set!(k, f64, "engine.predictor_accuracy" => engine.predictor_accuracy);
    set!(k, bool, "engine.cooling" => engine.cooling);
    set!(k, bool, "engine.throttle" => engine.throttle);

    if !k.0.is_empty() {
        let unknown: Vec<&str> = k.0.keys().map(String::as_str).collect();
        return Err(SimError::Config(format!("unknown key(s): {}", unknown.join(", "))));
    }
    model.validate()?;
    hw.validate()?;
    w.validate()?;
    let popularity = match popularity_path {
        Some(p) => Some(read_popularity(&p, &model)?),
        None => None,
    };
    Ok(RunSpec { config_id, model, hardware: hw, workload: w, popularity, engine })
}

/// Reads `path` (if any), applies `overrides` on top and builds the spec.
pub fn load(path: Option<&Path>, overrides: &[(String, Value)]) -> Result<RunSpec> {
    let mut layer = match path {
        Some(p) => Layer::read(p)?,
        None => Layer::default(),
    };
    for (k, v) in overrides {
        layer.set(k.clone(), v.clone());
    }
    build_spec(&layer)
}
