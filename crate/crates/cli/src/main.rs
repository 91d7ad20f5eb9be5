//! `cep3` command-line tool.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod data;
mod error;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{ForecastArgs, Preset, VizArgs};
use crate::config::{ModelKind, RunConfig};
use crate::data::SplitName;
use crate::error::{CliError, CliResult};
use crate::manifest::Run;

const FORMATS: &str = "\
FILE FORMATS
  events CSV        header `source,dest,time[,f0,f1,...]`; integer node ids, real
                    non-negative times, optional real edge features. UTF-8, LF.
                    Rows are stably sorted by time; ids are compacted in ascending order.
  communities CSV   header `node,community`; one row per node, external ids.
  split.json        {fractions:{train,val,test}, boundaries:[train_end,val_end],
                    total_events, start_times:[3], time_scale:{offset,factor}};
                    rescaled time is (t - offset) * factor.
  model.bin         8-byte magic `CEP3PRM\\0`, u32 LE manifest length M, M bytes of
                    JSON {seed, entries:[{name,shape,dtype,offset}], meta:<model config>},
                    then every array as row-major little-endian f32 at `offset`
                    bytes past the manifest.
  trace.csv         `epoch,batch,time_nll,entity_nll,total`
  epochs.csv        `epoch,train_loss,val_loss,grad_norm`
  report.csv        `community,pp,mae,k_effective,windows` plus a final `mean` row;
                    report.json holds the same with model, split and seed.
  forecast.csv      `step,source,dest,dt,t_abs` in original ids and time units;
                    forecast.json (with --json) adds lambda_total, p_source, p_dest.
  spec.json         {nodes, pairs:[{source,dest,process:{kind:poisson,rate} |
                    {kind:hawkes,mu,alpha,beta}}], horizon, seed}
  poisson.csv       `u,v,lambda`;  hawkes.csv `u,v,mu,alpha`;
  baseline_losses.csv `community,epoch,loss`
  viz.csv           `rank,source,dest,count,frequency`
  bench.csv         `size,head,ns_per_step,logit_evals_per_step`
  manifest.json     command, argv, version, effective config, seed, sha256 of
                    every input and output, start time and wall-clock seconds.

CONFIG
  A flat TOML file of `key = value` pairs (see RunConfig). Precedence:
  defaults < --config file < --set key=value < command flags.

EXIT CODES
  0 success; 1 usage error; 2 data error; 3 runtime error. Failures print one
  stderr line `error kind=<usage|data|runtime> code=<n> reason=<text>`.";

#[derive(Parser, Debug)]
#[command(name = "cep3", version, about = "Forecast community interaction events on continuous-time dynamic graphs", after_long_help = FORMATS)]
struct Cli {
    /// Random seed for initialization, shuffling and sampling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Flat TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; created if missing.
    #[arg(long, global = true, default_value = "cep3-out")]
    out: PathBuf,
    /// Config override `key=value`; repeatable.
    #[arg(long = "set", global = true, value_parser = parse_kv)]
    set: Vec<(String, String)>,
    #[command(subcommand)]
    command: Command,
}

fn parse_kv(s: &str) -> Result<(String, String), String> {
    s.split_once('=').map(|(k, v)| (k.trim().to_string(), v.trim().to_string())).ok_or_else(|| format!("expected key=value, got {s:?}"))
}

#[derive(clap::Args, Debug)]
struct DataArgs {
    /// Events CSV.
    #[arg(long)]
    input: PathBuf,
    /// Communities CSV; detected with Louvain when omitted.
    #[arg(long)]
    communities: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse, sort and compact an events CSV; write it back with split metadata.
    Ingest {
        /// Events CSV.
        #[arg(long)]
        input: PathBuf,
        /// Add the 10 degree and recency features to every event.
        #[arg(long)]
        synthesize_features: bool,
    },
    /// Detect communities with Louvain on the train split.
    Communities {
        /// Events CSV.
        #[arg(long)]
        input: PathBuf,
        /// Use the whole stream instead of the train split.
        #[arg(long)]
        full_stream: bool,
    },
    /// Train a model on the train split.
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// Model to use; defaults to the config `model`.
        #[arg(long, value_enum)]
        model: Option<ModelKind>,
        /// Overrides the config `epochs`.
        #[arg(long)]
        epochs: Option<usize>,
        /// Overrides the config `lr`.
        #[arg(long)]
        lr: Option<f64>,
        /// Windows per optimizer step, run concurrently.
        #[arg(long)]
        parallel_windows: Option<usize>,
        /// Write `checkpoint-epoch-N.bin` every N epochs (0 disables).
        #[arg(long)]
        checkpoint_every: Option<usize>,
    },
    /// Score a model: teacher-forced perplexity and free-running MAE.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        /// Checkpoint for model cep3; baselines are refitted on the train split.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Model to use; defaults to the config `model`.
        #[arg(long, value_enum)]
        model: Option<ModelKind>,
        /// Split whose windows are scored.
        #[arg(long, value_enum, default_value = "test")]
        split: SplitName,
    },
    /// Forecast the next events of one community.
    Forecast {
        #[command(flatten)]
        data: DataArgs,
        /// Checkpoint for model cep3.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Model to use; defaults to the config `model`.
        #[arg(long, value_enum)]
        model: Option<ModelKind>,
        /// Community index as listed in the communities CSV.
        #[arg(long)]
        community: usize,
        /// Number of events; defaults to the config `k`.
        #[arg(long)]
        steps: Option<usize>,
        /// Start time in original units; defaults to the test split start.
        #[arg(long)]
        horizon: Option<f64>,
        /// Sample instead of greedy decoding (cep3 only).
        #[arg(long)]
        sample: bool,
        /// Also write forecast.json with full distributions.
        #[arg(long)]
        json: bool,
    },
    /// Simulate a ground-truth point-process stream.
    Simulate {
        /// Built-in six-node process.
        #[arg(long, value_enum, default_value = "poisson")]
        preset: Preset,
        /// JSON spec; overrides --preset.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Pair frequencies over sampled rollouts, keeping the most frequent pairs.
    ExportViz {
        #[command(flatten)]
        data: DataArgs,
        /// Checkpoint of a cep3 model.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Community index as listed in the communities CSV.
        #[arg(long)]
        community: usize,
        /// Events per rollout; defaults to the config `k`.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Per-step decode time of the hierarchical and joint heads.
    BenchScaling {
        /// Community sizes, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "32,128,512")]
        sizes: Vec<usize>,
        /// Decode steps per timing.
        #[arg(long, default_value_t = 3)]
        steps: usize,
        /// Timings per size; the fastest is reported.
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        /// Node state dimension.
        #[arg(long, default_value_t = 16)]
        state_dim: usize,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest { .. } => "ingest",
            Command::Communities { .. } => "communities",
            Command::Train { .. } => "train",
            Command::Evaluate { .. } => "evaluate",
            Command::Forecast { .. } => "forecast",
            Command::Simulate { .. } => "simulate",
            Command::ExportViz { .. } => "export-viz",
            Command::BenchScaling { .. } => "bench-scaling",
        }
    }

    fn inputs(&self) -> Vec<&Path> {
        let mut v: Vec<&Path> = Vec::new();
        match self {
            Command::Ingest { input, .. } | Command::Communities { input, .. } => v.push(input),
            Command::Train { data, .. } => v.extend(data.paths()),
            Command::Evaluate { data, checkpoint, .. } | Command::Forecast { data, checkpoint, .. } | Command::ExportViz { data, checkpoint, .. } => {
                v.extend(data.paths());
                v.extend(checkpoint.as_deref());
            }
            Command::Simulate { spec, .. } => v.extend(spec.as_deref()),
            Command::BenchScaling { .. } => {}
        }
        v
    }

    /// Command flags as config overrides.
    fn overrides(&self) -> Vec<(String, String)> {
        let mut o = Vec::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                o.push((k.to_string(), v));
            }
        };
        let model = |m: &Option<ModelKind>| m.map(|m| format!("{:?}", serde_json::to_value(m).unwrap_or_default().as_str().unwrap_or_default()));
        match self {
            Command::Communities { full_stream: true, .. } => put("louvain_full_stream", Some("true".into())),
            Command::Train { model: m, epochs, lr, parallel_windows, checkpoint_every, .. } => {
                put("model", model(m));
                put("epochs", epochs.map(|v| v.to_string()));
                put("lr", lr.map(|v| format!("{v:e}")));
                put("parallel_windows", parallel_windows.map(|v| v.to_string()));
                put("checkpoint_every", checkpoint_every.map(|v| v.to_string()));
            }
            Command::Evaluate { model: m, .. } | Command::Forecast { model: m, .. } => put("model", model(m)),
            _ => {}
        }
        o
    }
}

impl DataArgs {
    fn paths(&self) -> Vec<&Path> {
        std::iter::once(self.input.as_path()).chain(self.communities.as_deref()).collect()
    }
}

/// Checks flags and paths before anything is read or written.
fn validate(cli: &Cli) -> CliResult<RunConfig> {
    let mut overrides = cli.set.clone();
    overrides.extend(cli.command.overrides());
    if let Some(seed) = cli.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    let cfg = RunConfig::resolve(cli.config.as_deref(), &overrides)?;
    for path in cli.command.inputs() {
        if !path.is_file() {
            return Err(CliError::data(format!("input {} does not exist", path.display())));
        }
        let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        if let (Ok(a), Ok(b)) = (parent.canonicalize(), cli.out.canonicalize()) {
            if a == b {
                return Err(CliError::usage(format!("--out must not be the directory holding input {}", path.display())));
            }
        }
    }
    if cli.out.join(manifest::MANIFEST_NAME).exists() {
        return Err(CliError::usage(format!("{} already holds a run manifest", cli.out.display())));
    }
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<String> {
    let cfg = validate(&cli)?;
    std::fs::create_dir_all(&cli.out).map_err(|e| CliError::runtime(format!("{}: {e}", cli.out.display())))?;
    let mut run = Run::new(cli.command.name(), &cli.out, cfg);
    let line = match &cli.command {
        Command::Ingest { input, synthesize_features } => commands::ingest(&mut run, input, *synthesize_features)?,
        Command::Communities { input, .. } => commands::communities(&mut run, input)?,
        Command::Train { data, .. } => commands::train_cmd(&mut run, &data.input, data.communities.as_deref())?,
        Command::Evaluate { data, checkpoint, split, .. } => {
            commands::evaluate(&mut run, &data.input, data.communities.as_deref(), checkpoint.as_deref(), *split)?
        }
        Command::Forecast { data, checkpoint, community, steps, horizon, sample, json, .. } => commands::forecast(
            &mut run,
            ForecastArgs {
                input: &data.input,
                communities: data.communities.as_deref(),
                checkpoint: checkpoint.as_deref(),
                community: *community,
                steps: *steps,
                horizon: *horizon,
                sample: *sample,
                json: *json,
            },
        )?,
        Command::Simulate { preset, spec } => commands::simulate_cmd(&mut run, *preset, spec.as_deref())?,
        Command::ExportViz { data, checkpoint, community, steps } => commands::export_viz(
            &mut run,
            VizArgs { input: &data.input, communities: data.communities.as_deref(), checkpoint: checkpoint.as_deref(), community: *community, steps: *steps },
        )?,
        Command::BenchScaling { sizes, steps, repeats, state_dim } => commands::bench_scaling(&mut run, sizes, *steps, *repeats, *state_dim)?,
    };
    run.finish()?;
    Ok(line)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("{}", CliError::usage(first).line());
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(line) => {
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.kind.code() as u8)
        }
    }
}
