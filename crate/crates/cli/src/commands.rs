//! One function per subcommand. Each reads its inputs, writes its outputs
//! through [`Run`], and returns a one-line stdout summary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use cep3::baselines::{HawkesBaseline, MarkerHead, PoissonBaseline, RmtppModel, GruGaussianModel};
use cep3::ctdg::{modularity, synthesize_edge_features, chronological_split, WeightedGraph};
use cep3::evaluation::{evaluate_model, EventModel};
use cep3::forecaster::{decode_cost, forecast_csv, ForecastStep, HeadKind, OpCounter};
use cep3::synth::{hawkes_preset, pair_seed, poisson_preset, simulate, GroundTruthSpec};
use cep3::training::{train, trace_csv, EpochSummary, Window};
use cep3::{Cep3, Real};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::config::{ModelKind, Precision};
use crate::data::{read_stream, Dataset, SplitName};
use crate::error::{CliError, CliResult};
use crate::manifest::Run;

pub fn ingest(run: &mut Run, input: &Path, synthesize_features: bool) -> CliResult<String> {
    run.input(input);
    let mut stream = read_stream(input)?;
    if synthesize_features {
        stream = synthesize_edge_features(&stream)?;
    }
    let (rescaled, scale) = stream.rescale_time(run.config.time_span);
    let (_, _, _, mut meta) = chronological_split(&rescaled, run.config.split())?;
    meta.time_scale = scale;
    run.write("events.csv", stream.to_csv())?;
    run.write("split.json", serde_json::to_string_pretty(&meta).map_err(|e| CliError::runtime(e.to_string()))?)?;
    run.summary = json!({ "events": stream.len(), "nodes": stream.node_count(), "feature_dim": stream.feature_dim() });
    Ok(format!("events={} nodes={} feature_dim={}", stream.len(), stream.node_count(), stream.feature_dim()))
}

pub fn communities(run: &mut Run, input: &Path) -> CliResult<String> {
    let ds = Dataset::load(run, input, None)?;
    let source = if run.config.louvain_full_stream { &ds.stream } else { &ds.splits[0] };
    let q = modularity(&WeightedGraph::from_stream(source), &ds.communities.community_of);
    run.write("communities.csv", ds.communities.to_csv(&ds.stream))?;
    let sizes: Vec<usize> = ds.communities.communities.iter().map(Vec::len).collect();
    run.summary = json!({ "communities": sizes.len(), "modularity": q, "sizes": sizes });
    Ok(format!("communities={} modularity={q:.6}", sizes.len()))
}

fn json_text<S: serde::Serialize>(value: &S) -> CliResult<String> {
    serde_json::to_string_pretty(value).map_err(|e| CliError::runtime(e.to_string()))
}

fn epochs_csv(epochs: &[EpochSummary]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss,grad_norm\n");
    for e in epochs {
        let val = e.val_loss.map_or(String::new(), |v| v.to_string());
        let _ = writeln!(out, "{},{},{val},{}", e.epoch, e.train_loss, e.grad_norm);
    }
    out
}

fn train_cep3<T: Real>(run: &mut Run, ds: &Dataset) -> CliResult<String> {
    let cfg = run.config.clone();
    let windows = ds.windows(SplitName::Train, &cfg)?;
    let val = ds.windows(SplitName::Val, &cfg)?;
    let mut model = Cep3::<T>::new(cfg.model_config(ds.stream.feature_dim()), cfg.seed)?;
    let mut checkpoints: Vec<(String, Vec<u8>)> = Vec::new();
    let report = train(&mut model, &ds.graph, &windows, &val, &cfg.train_config(), |summary, m| {
        log::info!("epoch {} train_loss {:.6} val_loss {:?}", summary.epoch, summary.train_loss, summary.val_loss);
        if cfg.checkpoint_every > 0 && (summary.epoch + 1) % cfg.checkpoint_every == 0 {
            let mut buf = Vec::new();
            m.save(&mut buf)?;
            checkpoints.push((format!("checkpoint-epoch-{}.bin", summary.epoch + 1), buf));
        }
        Ok(())
    })?;
    for (name, bytes) in checkpoints {
        run.write(&name, bytes)?;
    }
    let mut buf = Vec::new();
    model.save(&mut buf)?;
    run.write("model.bin", buf)?;
    run.write("trace.csv", trace_csv(&report.trace))?;
    run.write("epochs.csv", epochs_csv(&report.epochs))?;
    let final_loss = report.final_loss().unwrap_or(f64::NAN);
    run.summary = json!({
        "final_loss": final_loss,
        "epochs": report.epochs.len(),
        "windows": windows.len(),
        "skipped_windows": report.skipped_windows,
        "parameters": model.params.num_scalars(),
    });
    Ok(format!("model=cep3 final_loss={final_loss:.6} epochs={} windows={}", report.epochs.len(), windows.len()))
}

/// Fits a baseline on the train split.
fn fit_baseline(run: &Run, ds: &Dataset) -> CliResult<Box<dyn EventModel>> {
    let cfg = &run.config;
    let (t0, t1) = ds.train_span()?;
    Ok(match cfg.model {
        ModelKind::Cep3 => return Err(CliError::usage("cep3 is not a baseline")),
        ModelKind::Poisson => Box::new(PoissonBaseline::fit(&ds.splits[0], &ds.communities, t1 - t0)?),
        ModelKind::Hawkes => {
            let fit = HawkesBaseline::fit(&ds.splits[0], &ds.communities, t0, t1)?;
            if !fit.converged() {
                log::warn!("some Hawkes fits hit the iteration limit; keeping the best iterate");
            }
            Box::new(fit)
        }
        ModelKind::Rmtpp | ModelKind::RmtppHrchy => {
            let marker = if cfg.model == ModelKind::Rmtpp { MarkerHead::Flat } else { MarkerHead::Hierarchical };
            let windows = ds.windows(SplitName::Train, cfg)?;
            Box::new(RmtppModel::fit(&ds.graph, &windows, &ds.communities, &cfg.neural_config(marker))?)
        }
        ModelKind::GruGaussian => {
            let windows = ds.windows(SplitName::Train, cfg)?;
            Box::new(GruGaussianModel::fit(&ds.graph, &windows, &ds.communities, &cfg.neural_config(MarkerHead::Hierarchical))?)
        }
    })
}

fn train_baseline(run: &mut Run, ds: &Dataset) -> CliResult<String> {
    let cfg = run.config.clone();
    let (t0, t1) = ds.train_span()?;
    let label = |v: usize| ds.label(v);
    match cfg.model {
        ModelKind::Poisson => {
            let fit = PoissonBaseline::fit(&ds.splits[0], &ds.communities, t1 - t0)?;
            run.write("poisson.csv", fit.to_csv(label))?;
        }
        ModelKind::Hawkes => {
            let fit = HawkesBaseline::fit(&ds.splits[0], &ds.communities, t0, t1)?;
            run.write("hawkes.csv", fit.to_csv(label))?;
            run.summary = json!({ "converged": fit.converged() });
        }
        ModelKind::Rmtpp | ModelKind::RmtppHrchy | ModelKind::GruGaussian => {
            let windows = ds.windows(SplitName::Train, &cfg)?;
            let losses: BTreeMap<usize, Vec<f64>> = match cfg.model {
                ModelKind::GruGaussian => {
                    let m = GruGaussianModel::fit(&ds.graph, &windows, &ds.communities, &cfg.neural_config(MarkerHead::Hierarchical))?;
                    m.nets.iter().map(|(c, n)| (*c, n.losses.clone())).collect()
                }
                kind => {
                    let marker = if kind == ModelKind::Rmtpp { MarkerHead::Flat } else { MarkerHead::Hierarchical };
                    let m = RmtppModel::fit(&ds.graph, &windows, &ds.communities, &cfg.neural_config(marker))?;
                    m.nets.iter().map(|(c, n)| (*c, n.losses.clone())).collect()
                }
            };
            let mut csv = String::from("community,epoch,loss\n");
            for (c, ls) in &losses {
                for (e, l) in ls.iter().enumerate() {
                    let _ = writeln!(csv, "{c},{e},{l}");
                }
            }
            run.write("baseline_losses.csv", csv)?;
        }
        ModelKind::Cep3 => unreachable!("handled by train_cep3"),
    }
    Ok(format!("model={} fitted communities={}", model_label(cfg.model), ds.communities.len()))
}

fn model_label(kind: ModelKind) -> String {
    serde_json::to_value(kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

pub fn train_cmd(run: &mut Run, input: &Path, communities: Option<&Path>) -> CliResult<String> {
    let ds = Dataset::load(run, input, communities)?;
    match (run.config.model, run.config.precision) {
        (ModelKind::Cep3, Precision::F64) => train_cep3::<f64>(run, &ds),
        (ModelKind::Cep3, Precision::F32) => train_cep3::<f32>(run, &ds),
        _ => train_baseline(run, &ds),
    }
}

fn load_cep3(run: &mut Run, checkpoint: Option<&Path>) -> CliResult<Cep3<f64>> {
    let path = checkpoint.ok_or_else(|| CliError::usage("model cep3 needs --checkpoint"))?;
    run.input(path);
    let bytes = std::fs::read(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    Ok(Cep3::<f64>::load(&bytes)?)
}

fn resolve_model(run: &mut Run, ds: &Dataset, checkpoint: Option<&Path>) -> CliResult<Box<dyn EventModel>> {
    match run.config.model {
        ModelKind::Cep3 => {
            let model = load_cep3(run, checkpoint)?;
            if model.config.encoder.edge_feature_dim != ds.stream.feature_dim() {
                return Err(CliError::data(format!(
                    "checkpoint expects {} edge features, input has {}",
                    model.config.encoder.edge_feature_dim,
                    ds.stream.feature_dim()
                )));
            }
            Ok(Box::new(model))
        }
        _ if checkpoint.is_some() => Err(CliError::usage("--checkpoint only applies to model cep3")),
        _ => fit_baseline(run, ds),
    }
}

pub fn evaluate(run: &mut Run, input: &Path, communities: Option<&Path>, checkpoint: Option<&Path>, split: SplitName) -> CliResult<String> {
    let ds = Dataset::load(run, input, communities)?;
    let model = resolve_model(run, &ds, checkpoint)?;
    let windows = ds.windows(split, &run.config)?;
    let report = evaluate_model(model.as_ref(), &ds.graph, &windows, split.label(), run.config.seed)?;
    run.write("report.json", json_text(&report)?)?;
    run.write("report.csv", report.to_csv())?;
    let mae = report.mean_mae.map_or("nan".to_string(), |m| format!("{m:.6}"));
    run.summary = json!({ "model": report.model, "split": split.label(), "pp": report.mean_pp, "mae": report.mean_mae, "floor_hits": report.floor_hits });
    Ok(format!("model={} split={} pp={:.6} mae={mae}", report.model, split.label(), report.mean_pp))
}

/// Steps in original time units.
fn to_original(ds: &Dataset, steps: &[ForecastStep]) -> Vec<ForecastStep> {
    steps
        .iter()
        .map(|s| ForecastStep { dt: ds.scale.inverse_duration(s.dt), t_abs: ds.scale.inverse(s.t_abs), ..s.clone() })
        .collect()
}

pub struct ForecastArgs<'a> {
    pub input: &'a Path,
    pub communities: Option<&'a Path>,
    pub checkpoint: Option<&'a Path>,
    pub community: usize,
    pub steps: Option<usize>,
    pub horizon: Option<f64>,
    pub sample: bool,
    pub json: bool,
}

pub fn forecast(run: &mut Run, args: ForecastArgs<'_>) -> CliResult<String> {
    let ds = Dataset::load(run, args.input, args.communities)?;
    let members = ds.community(args.community)?.clone();
    let k = args.steps.unwrap_or(run.config.k);
    let horizon = args.horizon.map_or(ds.meta.start_times[2], |t| ds.scale.forward(t));
    let mut ops = OpCounter::default();
    let steps = match run.config.model {
        ModelKind::Cep3 => {
            let model = load_cep3(run, args.checkpoint)?;
            let mut rng = ChaCha8Rng::seed_from_u64(run.config.seed);
            model.forecast(&ds.graph, &members, horizon, k, args.sample.then_some(&mut rng), &mut ops)?
        }
        _ if args.sample => return Err(CliError::usage("--sample is only available for model cep3")),
        _ => {
            let model = resolve_model(run, &ds, args.checkpoint)?;
            let window = Window { community: args.community, members: members.clone(), horizon, events: Vec::new() };
            model.forecast(&ds.graph, &window, k)?
        }
    };
    let steps = to_original(&ds, &steps);
    run.write("forecast.csv", forecast_csv(&steps, |v| ds.label(v)))?;
    if args.json {
        run.write("forecast.json", json_text(&steps)?)?;
    }
    run.summary = json!({ "community": args.community, "steps": steps.len(), "logit_evals": ops.logit_evals });
    Ok(format!("community={} steps={} last_t={}", args.community, steps.len(), steps.last().map_or(f64::NAN, |s| s.t_abs)))
}

pub fn simulate_cmd(run: &mut Run, preset: Preset, spec_path: Option<&Path>) -> CliResult<String> {
    let spec: GroundTruthSpec = match spec_path {
        Some(path) => {
            run.input(path);
            serde_json::from_str(&crate::data::read_text(path)?).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?
        }
        None => match preset {
            Preset::Poisson => poisson_preset(run.config.seed),
            Preset::Hawkes => hawkes_preset(run.config.seed),
        },
    };
    let (stream, stats) = simulate(&spec)?;
    run.write("events.csv", stream.to_csv())?;
    run.write("spec.json", json_text(&spec)?)?;
    run.summary = json!({ "events": stream.len(), "acceptance_rate": stats.acceptance_rate() });
    Ok(format!("events={} acceptance_rate={:.4}", stream.len(), stats.acceptance_rate()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    Poisson,
    Hawkes,
}

pub struct VizArgs<'a> {
    pub input: &'a Path,
    pub communities: Option<&'a Path>,
    pub checkpoint: Option<&'a Path>,
    pub community: usize,
    pub steps: Option<usize>,
}

/// Pairs ranked by how often sampled rollouts predicted them; only the top
/// `viz_keep` fraction of all ordered member pairs is kept.
pub fn export_viz(run: &mut Run, args: VizArgs<'_>) -> CliResult<String> {
    if run.config.model != ModelKind::Cep3 {
        return Err(CliError::usage("export-viz samples rollouts and needs model cep3"));
    }
    let ds = Dataset::load(run, args.input, args.communities)?;
    let members = ds.community(args.community)?.clone();
    let model = load_cep3(run, args.checkpoint)?;
    let k = args.steps.unwrap_or(run.config.k);
    let horizon = ds.meta.start_times[2];
    let mut counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for r in 0..run.config.rollouts {
        let mut rng = ChaCha8Rng::seed_from_u64(pair_seed(run.config.seed, r));
        for s in model.forecast(&ds.graph, &members, horizon, k, Some(&mut rng), &mut OpCounter::default())? {
            *counts.entry((s.source, s.dest)).or_default() += 1;
        }
    }
    let candidates = members.len() * members.len();
    let keep = ((candidates as f64 * run.config.viz_keep) + 1e-9).floor() as usize;
    let mut ranked: Vec<((usize, usize), usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(keep);
    let total = (run.config.rollouts * k) as f64;
    let mut csv = String::from("rank,source,dest,count,frequency\n");
    for (i, ((u, v), c)) in ranked.iter().enumerate() {
        let _ = writeln!(csv, "{},{},{},{c},{}", i + 1, ds.label(*u), ds.label(*v), *c as f64 / total);
    }
    run.write("viz.csv", csv)?;
    run.summary = json!({ "candidates": candidates, "kept": ranked.len(), "rollouts": run.config.rollouts, "steps": k });
    Ok(format!("candidates={candidates} kept={}", ranked.len()))
}

pub fn bench_scaling(run: &mut Run, sizes: &[usize], steps: usize, repeats: usize, state_dim: usize) -> CliResult<String> {
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(CliError::usage("--sizes needs positive community sizes"));
    }
    let cfg = run.config.clone();
    let mut csv = String::from("size,head,ns_per_step,logit_evals_per_step\n");
    let mut ratios = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let mut per_head = [0.0; 2];
        for (i, head) in [HeadKind::Hierarchical, HeadKind::Joint].into_iter().enumerate() {
            let cost = decode_cost(n, head, state_dim, cfg.forecaster_hidden, cfg.time_dim, steps, repeats, cfg.seed)?;
            let name = if head == HeadKind::Joint { "joint" } else { "hierarchical" };
            let _ = writeln!(csv, "{n},{name},{},{}", cost.ns_per_step, cost.logit_evals_per_step);
            per_head[i] = cost.ns_per_step;
        }
        ratios.push(per_head[1] / per_head[0]);
    }
    run.write("bench.csv", csv)?;
    let increasing = ratios.windows(2).all(|w| w[1] > w[0]);
    run.summary = json!({ "sizes": sizes, "joint_over_hierarchical": ratios, "strictly_increasing": increasing });
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.3}")).collect();
    Ok(format!("ratios={} strictly_increasing={increasing}", shown.join(",")))
}
