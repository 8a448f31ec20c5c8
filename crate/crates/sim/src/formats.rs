//! Report, profile and map-file formats.
//!
//! Every writer produces the whole file in memory and hands it to
//! [`atomic_write`], so readers never see a partial file.
//!
//! Summary CSV columns: `config_id, policy, tbt_p99_ms, throughput_tps,
//! energy_mj, dram_accesses, throttle`. Comparison CSV columns:
//! `config_id, hardware, policy, cooling` and the summary metrics, followed by
//! `tbt_p99_gain, dram_gain, energy_gain, throughput_gain` relative to the
//! first row. A gain above 1 is an improvement: baseline over row for the
//! three lower-is-better metrics, row over baseline for throughput.
//!
//! Map file (little-endian):
//!
//! ```text
//! magic "A3DM" | version u16 | layers u32
//! per layer: exp_min u8 | pivot u8 | high_below u8 | high_geq u8 | outliers u64
//!            outliers x (address u64 | exp_high u8)
//! ```

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use a3d_core::codec::{CodecMaps, OutlierMap, RegularMap};
use a3d_core::engine::RunMetrics;
use a3d_core::memory::AccessLedger;
use a3d_core::systolic::CycleTrace;
use a3d_core::workload::{ModelConfig, Popularity};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

pub const MAP_MAGIC: [u8; 4] = *b"A3DM";
pub const MAP_VERSION: u16 = 1;

pub const SUMMARY_COLUMNS: [&str; 7] =
    ["config_id", "policy", "tbt_p99_ms", "throughput_tps", "energy_mj", "dram_accesses", "throttle"];

pub const COMPARISON_COLUMNS: [&str; 13] = [
    "config_id",
    "hardware",
    "policy",
    "cooling",
    "tbt_p99_ms",
    "throughput_tps",
    "energy_mj",
    "dram_accesses",
    "throttle",
    "tbt_p99_gain",
    "dram_gain",
    "energy_gain",
    "throughput_gain",
];

/// Writes through a sibling temp file and a rename, creating missing parents.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    std::fs::create_dir_all(dir).map_err(|e| SimError::write(dir, e))?;
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let result = std::fs::File::create(&tmp)
        .and_then(|mut f| {
            f.write_all(bytes)?;
            f.sync_all()
        })
        .and_then(|()| std::fs::rename(&tmp, path));
    if let Err(e) = result {
        let _ = std::fs::remove_file(&tmp);
        return Err(SimError::write(path, e));
    }
    Ok(())
}

fn csv_bytes<R: Serialize>(rows: impl IntoIterator<Item = R>, header: &[&str]) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory write")
}

/// Flat summary row of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub config_id: String,
    pub policy: String,
    /// Empty when the run produced no inter-token gaps.
    pub tbt_p99_ms: Option<f64>,
    pub throughput_tps: f64,
    pub energy_mj: f64,
    pub dram_accesses: u64,
    pub throttle: f64,
}

impl SummaryRow {
    pub fn new(m: &RunMetrics) -> Self {
        Self {
            config_id: m.config_id.clone(),
            policy: m.policy.name().to_string(),
            tbt_p99_ms: m.tbt_p99_s.map(|s| s * 1e3),
            throughput_tps: m.throughput_tps,
            energy_mj: m.energy_pj * 1e-9,
            dram_accesses: m.dram_accesses,
            throttle: m.throttle,
        }
    }
}

pub fn summary_csv(runs: &[RunMetrics]) -> Vec<u8> {
    csv_bytes(runs.iter().map(SummaryRow::new), &SUMMARY_COLUMNS)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub config_id: String,
    pub hardware: String,
    pub policy: String,
    pub cooling: bool,
    pub tbt_p99_ms: Option<f64>,
    pub throughput_tps: f64,
    pub energy_mj: f64,
    pub dram_accesses: u64,
    pub throttle: f64,
    pub tbt_p99_gain: Option<f64>,
    pub dram_gain: f64,
    pub energy_gain: f64,
    pub throughput_gain: f64,
}

/// Gains use the same rounded values that land in the file, so a reader can
/// recompute every ratio from the row and the baseline row.
pub fn comparison_rows(runs: &[RunMetrics]) -> Vec<ComparisonRow> {
    let mut rows: Vec<ComparisonRow> = runs
        .iter()
        .map(|m| {
            let s = SummaryRow::new(m);
            ComparisonRow {
                config_id: s.config_id,
                hardware: m.hardware.clone(),
                policy: s.policy,
                cooling: m.cooling,
                tbt_p99_ms: s.tbt_p99_ms,
                throughput_tps: s.throughput_tps,
                energy_mj: s.energy_mj,
                dram_accesses: s.dram_accesses,
                throttle: s.throttle,
                tbt_p99_gain: None,
                dram_gain: 1.0,
                energy_gain: 1.0,
                throughput_gain: 1.0,
            }
        })
        .collect();
    let Some(base) = rows.first().cloned() else { return rows };
    for r in &mut rows {
        r.tbt_p99_gain = base.tbt_p99_ms.zip(r.tbt_p99_ms).map(|(b, x)| b / x);
        r.dram_gain = base.dram_accesses as f64 / r.dram_accesses as f64;
        r.energy_gain = base.energy_mj / r.energy_mj;
        r.throughput_gain = r.throughput_tps / base.throughput_tps;
    }
    rows
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> Vec<u8> {
    csv_bytes(rows, &COMPARISON_COLUMNS)
}

pub fn read_comparison(path: &Path) -> Result<Vec<ComparisonRow>> {
    let text = std::fs::read(path).map_err(|e| SimError::read(path, e))?;
    csv::Reader::from_reader(text.as_slice())
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| SimError::format(path, e.to_string()))
}

pub fn ledger_csv(ledger: &AccessLedger) -> Vec<u8> {
    let mut out = String::from("category,count,bytes,picojoules\n");
    for (cat, t) in ledger.rows() {
        let _ = writeln!(out, "{},{},{},{}", cat.name(), t.count, t.bytes, t.pj);
    }
    out.into_bytes()
}

pub fn trace_csv(trace: &CycleTrace) -> Vec<u8> {
    let mut out = String::from("cycle,pe_row,pe_col,busy\n");
    for (cycle, r, c, busy) in trace.records() {
        let _ = writeln!(out, "{cycle},{r},{c},{}", u8::from(busy));
    }
    out.into_bytes()
}

/// Full metrics as JSON, with `generated_unix` added when `timestamp` is set.
pub fn report_json(m: &RunMetrics, timestamp: Option<u64>) -> Vec<u8> {
    let mut v = serde_json::to_value(m).expect("metrics serialize");
    if let (Some(t), Some(obj)) = (timestamp, v.as_object_mut()) {
        obj.insert("generated_unix".into(), t.into());
    }
    let mut s = serde_json::to_string_pretty(&v).expect("metrics serialize");
    s.push('\n');
    s.into_bytes()
}

#[derive(Deserialize)]
struct PopularityRow {
    layer: u32,
    expert_id: u32,
    probability: f64,
}

/// Reads a `layer, expert_id, probability` profile. Missing pairs are zero.
pub fn read_popularity(path: &Path, model: &ModelConfig) -> Result<Popularity> {
    let text = std::fs::read(path).map_err(|e| SimError::read(path, e))?;
    let mut layers = vec![vec![None; model.num_experts as usize]; model.num_layers as usize];
    for row in csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_slice()).deserialize() {
        let r: PopularityRow = row.map_err(|e| SimError::format(path, e.to_string()))?;
        let slot = layers
            .get_mut(r.layer as usize)
            .and_then(|l| l.get_mut(r.expert_id as usize))
            .ok_or_else(|| {
                SimError::format(path, format!("layer {} expert {} is outside the model", r.layer, r.expert_id))
            })?;
        if slot.replace(r.probability).is_some() {
            return Err(SimError::format(path, format!("duplicate row for layer {} expert {}", r.layer, r.expert_id)));
        }
    }
    let dense = layers.into_iter().map(|l| l.into_iter().map(|p| p.unwrap_or(0.0)).collect()).collect();
    Ok(Popularity::new(dense, model.num_experts)?)
}

pub fn popularity_csv(p: &Popularity) -> Vec<u8> {
    let mut out = String::from("layer,expert_id,probability\n");
    for l in 0..p.num_layers() {
        for (e, prob) in p.layer(l).iter().enumerate() {
            let _ = writeln!(out, "{l},{e},{prob}");
        }
    }
    out.into_bytes()
}

pub fn encode_maps(maps: &CodecMaps) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAP_MAGIC);
    out.extend_from_slice(&MAP_VERSION.to_le_bytes());
    out.extend_from_slice(&(maps.layers.len() as u32).to_le_bytes());
    for (map, outliers) in &maps.layers {
        out.extend_from_slice(&[map.exp_min, map.pivot, map.high_below, map.high_geq]);
        out.extend_from_slice(&(outliers.len() as u64).to_le_bytes());
        for (addr, high) in outliers.iter() {
            out.extend_from_slice(&addr.to_le_bytes());
            out.push(high);
        }
    }
    out
}

struct Cursor<'a>(&'a [u8]);

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> Option<[u8; N]> {
        let (head, rest) = self.0.split_first_chunk::<N>()?;
        self.0 = rest;
        Some(*head)
    }
}

/// Inverse of [`encode_maps`]; `what` names the source in errors.
pub fn decode_maps(bytes: &[u8], what: &Path) -> Result<CodecMaps> {
    let truncated = || SimError::format(what, "truncated map file");
    let mut c = Cursor(bytes);
    if c.take::<4>() != Some(MAP_MAGIC) {
        return Err(SimError::format(what, "not a map file (bad magic)"));
    }
    let version = u16::from_le_bytes(c.take().ok_or_else(truncated)?);
    if version != MAP_VERSION {
        return Err(SimError::format(what, format!("unsupported map version {version}")));
    }
    let n = u32::from_le_bytes(c.take().ok_or_else(truncated)?);
    let mut layers = Vec::new();
    for l in 0..n {
        let [exp_min, pivot, high_below, high_geq] = c.take().ok_or_else(truncated)?;
        let map = RegularMap::from_window(exp_min);
        if (map.pivot, map.high_below, map.high_geq) != (pivot, high_below, high_geq) {
            return Err(SimError::format(what, format!("layer {l}: pivot fields disagree with exp_min {exp_min}")));
        }
        let count = u64::from_le_bytes(c.take().ok_or_else(truncated)?);
        if count > (c.0.len() / 9) as u64 {
            return Err(truncated());
        }
        let mut outliers = OutlierMap::default();
        for _ in 0..count {
            let addr = u64::from_le_bytes(c.take().ok_or_else(truncated)?);
            let [high] = c.take().ok_or_else(truncated)?;
            if high > 0xF {
                return Err(SimError::format(what, format!("layer {l}: exp_high {high} exceeds 4 bits")));
            }
            outliers.insert(addr, high);
        }
        layers.push((map, outliers));
    }
    if !c.0.is_empty() {
        return Err(SimError::format(what, "trailing bytes after last layer"));
    }
    Ok(CodecMaps { layers })
}

/// Little-endian BF16 words of a raw weight file.
pub fn read_bf16(path: &Path) -> Result<Vec<u16>> {
    let bytes = std::fs::read(path).map_err(|e| SimError::read(path, e))?;
    if bytes.len() % 2 != 0 {
        return Err(SimError::format(path, "odd byte count for BF16 data"));
    }
    Ok(bytes.chunks_exact(2).map(|b| u16::from_le_bytes([b[0], b[1]])).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn atomic_write_replaces_whole_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.csv");
        atomic_write(&p, b"first, and longer\n").unwrap();
        atomic_write(&p, b"second\n").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"second\n");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn ledger_rows() {
        let mut l = AccessLedger::default();
        l.record(a3d_core::memory::Category::Dram, 3, 3072, 12.5);
        let text = String::from_utf8(ledger_csv(&l)).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "category,count,bytes,picojoules");
        assert_eq!(lines[1], "dram,3,3072,12.5");
        assert_eq!(lines.len(), 7);
    }

    #[test]
    fn popularity_roundtrip_and_errors() {
        let mut m = ModelConfig::olmoe_1b_7b();
        m.num_layers = 2;
        let p = Popularity::zipf(2, m.num_experts, 1.0, 3);
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("pop.csv");
        std::fs::write(&f, popularity_csv(&p)).unwrap();
        let back = read_popularity(&f, &m).unwrap();
        assert_eq!(back, p);

        std::fs::write(&f, "layer,expert_id,probability\n0,0,0.5\n0,0,0.5\n").unwrap();
        assert!(read_popularity(&f, &m).is_err());
        std::fs::write(&f, "layer,expert_id,probability\n5,0,1.0\n").unwrap();
        assert!(read_popularity(&f, &m).is_err());
    }

    #[test]
    fn map_header_layout() {
        let maps = CodecMaps { layers: vec![(RegularMap::from_window(107), [(0x0102, 7)].into_iter().collect())] };
        let b = encode_maps(&maps);
        assert_eq!(&b[..4], b"A3DM");
        assert_eq!(&b[4..6], &[1, 0]);
        assert_eq!(&b[6..10], &[1, 0, 0, 0]);
        assert_eq!(&b[10..14], &[107, 11, 7, 6]);
        assert_eq!(&b[14..22], &[1, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(&b[22..31], &[2, 1, 0, 0, 0, 0, 0, 0, 7]);
        assert_eq!(b.len(), 31);
    }

    #[test]
    fn map_decode_rejects_damage() {
        let maps = CodecMaps { layers: vec![(RegularMap::from_window(112), [(9, 0)].into_iter().collect())] };
        let b = encode_maps(&maps);
        let p = Path::new("m.bin");
        assert!(decode_maps(&b[..b.len() - 1], p).is_err());
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(decode_maps(&bad, p).is_err());
        let mut bad = b.clone();
        bad[11] ^= 1;
        assert!(decode_maps(&bad, p).is_err());
        let mut long = b;
        long.push(0);
        assert!(decode_maps(&long, p).is_err());
    }

    proptest! {
        #[test]
        fn map_roundtrip(
            layers in prop::collection::vec(
                (1u8..=239, prop::collection::btree_map(any::<u64>(), 0u8..16, 0..20)),
                0..5,
            )
        ) {
            let maps = CodecMaps {
                layers: layers
                    .into_iter()
                    .map(|(e, o)| (RegularMap::from_window(e), o.into_iter().collect()))
                    .collect(),
            };
            let back = decode_maps(&encode_maps(&maps), Path::new("x")).unwrap();
            prop_assert_eq!(back, maps);
        }
    }
}
