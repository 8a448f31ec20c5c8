use std::path::PathBuf;
use std::process::ExitCode;

use a3d_core::systolic::{ArrayKind, JobKind};
use a3d_sim::commands::{self, CompareArgs, CoolingSweep, RunArgs, SyntheticWeights, TraceArgs, WeightInput};
use a3d_sim::config::Layer;
use a3d_sim::{Result, SimError};
use clap::{Parser, Subcommand, ValueEnum};
use toml::Value;

/// A3D-MoE accelerator simulator.
///
/// Set `A3D_LOG` (e.g. `info`, `debug`) for log output on stderr.
#[derive(Parser)]
#[command(name = "a3d-moe", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum Sweep {
    On,
    Off,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum Array {
    Nsa,
    A3d,
}

#[derive(Clone, Copy, ValueEnum)]
enum Dataflow {
    Ws,
    Is,
    Os,
    Gemv,
    GemvVcache,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate one configuration and write its reports.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        policy: Option<String>,
        #[arg(long, value_enum)]
        cooling: Option<OnOff>,
        /// Extra `key=value` overrides, applied last.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// JSON report; the summary and ledger CSVs go next to it.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        no_timestamp: bool,
    },
    /// Run several presets on one workload and write a comparison table.
    Compare {
        /// `name` or `name:policy`, at least twice.
        #[arg(long = "preset", required = true)]
        presets: Vec<String>,
        #[arg(long)]
        workload: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "on")]
        cooling: Sweep,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exponent profiling and the split-precision round trip.
    Codec {
        #[command(subcommand)]
        cmd: CodecCmd,
    },
    /// Print the operator DAG of one iteration.
    Dag {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        iteration: u64,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Cycle-by-cycle PE activity of one tile, as CSV.
    Trace {
        #[arg(long, value_enum, default_value = "a3d")]
        array: Array,
        #[arg(long, default_value_t = 4)]
        size: u32,
        #[arg(long, value_enum, default_value = "ws")]
        dataflow: Dataflow,
        #[arg(long, default_value_t = 4)]
        m: u32,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum CodecCmd {
    /// Pick per-layer exponent windows and write the map file.
    Profile {
        /// Raw little-endian BF16 weights.
        #[arg(long, conflicts_with = "synthetic")]
        weights: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        layers: u32,
        /// `n=...,sigma=...,seed=...,layers=...`
        #[arg(long)]
        synthetic: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split and reassemble all 2^16 bit patterns.
    Roundtrip,
}

fn overrides(set: &[String]) -> Result<Vec<(String, Value)>> {
    set.iter().map(|s| Layer::parse_assignment(s)).collect()
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Run { config, seed, policy, cooling, set, out, no_timestamp } => {
            let mut ov = Vec::new();
            if let Some(s) = seed {
                ov.push(("workload.seed".to_string(), Value::Integer(s as i64)));
            }
            if let Some(p) = policy {
                ov.push(("engine.policy".to_string(), Value::String(p)));
            }
            if let Some(c) = cooling {
                ov.push(("engine.cooling".to_string(), Value::Boolean(matches!(c, OnOff::On))));
            }
            ov.extend(overrides(&set)?);
            commands::cmd_run(&RunArgs { config, overrides: ov, out, timestamp: !no_timestamp })?;
        }
        Cmd::Compare { presets, workload, cooling, set, out } => {
            let cooling = match cooling {
                Sweep::On => CoolingSweep::On,
                Sweep::Off => CoolingSweep::Off,
                Sweep::Both => CoolingSweep::Both,
            };
            let args = CompareArgs { presets, workload, overrides: overrides(&set)?, cooling, out_dir: out };
            commands::cmd_compare(&args)?;
        }
        Cmd::Codec { cmd: CodecCmd::Profile { weights, layers, synthetic, out } } => {
            let input = match (weights, synthetic) {
                (Some(path), None) => WeightInput::File { path, layers },
                (None, Some(s)) => WeightInput::Synthetic(s.parse::<SyntheticWeights>()?),
                (None, None) => WeightInput::Synthetic(SyntheticWeights::default()),
                (Some(_), Some(_)) => unreachable!("clap rejects both"),
            };
            commands::cmd_codec_profile(&input, &out)?;
        }
        Cmd::Codec { cmd: CodecCmd::Roundtrip } => {
            let (exact, total) = commands::cmd_codec_roundtrip();
            if exact != total {
                return Err(SimError::Core(a3d_core::Error::Contract(format!("{exact}/{total} exact"))));
            }
        }
        Cmd::Dag { config, iteration, set } => {
            print!("{}", commands::cmd_dag(config.as_deref(), &overrides(&set)?, iteration)?);
        }
        Cmd::Trace { array, size, dataflow, m, out } => {
            let array = match array {
                Array::Nsa => ArrayKind::Nsa,
                Array::A3d => ArrayKind::Array3d,
            };
            let kind = match dataflow {
                Dataflow::Ws => JobKind::GemmWs,
                Dataflow::Is => JobKind::GemmIs,
                Dataflow::Os => JobKind::GemmOs,
                Dataflow::Gemv => JobKind::Gemv,
                Dataflow::GemvVcache => JobKind::GemvVcache,
            };
            commands::cmd_trace(&TraceArgs { array, size, kind, m, out })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("A3D_LOG", "warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
