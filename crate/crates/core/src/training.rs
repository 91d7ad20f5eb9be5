//! Windowing, the per-step loss, and the teacher-forced training loop.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ctdg::{CommunityAssignment, Event, EventStream, NodeId, TemporalGraph};
use crate::error::{Error, Result};
use crate::model::{Cep3, PROB_FLOOR};
use crate::scalar::Real;
use crate::tensor::{clip_global_norm, Adam, AdamConfig, ParamGrads, Tape};

/// A community, a history horizon, and the ground-truth events after it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub community: usize,
    /// Sorted member ids.
    pub members: Vec<NodeId>,
    pub horizon: f64,
    pub events: Vec<Event>,
}

impl Window {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

pub type WindowBatch = Vec<Window>;

/// Cuts each community's restricted event stream into windows of up to `k`
/// events starting every `stride` events. A window's horizon is the time of
/// the community event just before it, or `split_start` for the first.
pub fn make_windows(split: &EventStream, communities: &CommunityAssignment, k: usize, stride: usize, split_start: f64) -> Result<Vec<Window>> {
    if k == 0 || stride == 0 {
        return Err(Error::InvalidArgument("window length and stride must be at least 1".into()));
    }
    let mut out = Vec::new();
    for (c, members) in communities.communities.iter().enumerate() {
        let events = split.restrict(&communities.mask(c)).events().to_vec();
        let mut start = 0;
        while start < events.len() {
            let end = (start + k).min(events.len());
            let horizon = if start == 0 { split_start } else { events[start - 1].time };
            out.push(Window { community: c, members: members.clone(), horizon, events: events[start..end].to_vec() });
            if end == events.len() {
                break;
            }
            start += stride;
        }
    }
    Ok(out)
}

/// Loss totals, summed or averaged over steps.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub time_nll: f64,
    pub entity_nll: f64,
    pub total: f64,
    /// `(time_nll, entity_nll)` per step.
    pub per_step: Vec<(f64, f64)>,
}

/// `[-ln lambda + dt * lambda] + [-ln p_u - ln p_v]` with floored logs.
pub fn step_loss(lambda_total: f64, dt: f64, p_source: f64, p_dest: f64) -> LossTerms {
    let time_nll = -lambda_total.max(PROB_FLOOR).ln() + dt * lambda_total;
    let entity_nll = -p_source.max(PROB_FLOOR).ln() - p_dest.max(PROB_FLOOR).ln();
    LossTerms { time_nll, entity_nll, total: time_nll + entity_nll, per_step: vec![(time_nll, entity_nll)] }
}

impl LossTerms {
    fn mean_of(parts: &[LossTerms]) -> Self {
        let n = parts.len().max(1) as f64;
        Self {
            time_nll: parts.iter().map(|p| p.time_nll).sum::<f64>() / n,
            entity_nll: parts.iter().map(|p| p.entity_nll).sum::<f64>() / n,
            total: parts.iter().map(|p| p.total).sum::<f64>() / n,
            per_step: parts.iter().flat_map(|p| p.per_step.iter().copied()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub k: usize,
    /// Defaults to `k` (non-overlapping windows).
    pub stride: Option<usize>,
    pub parallel_windows: usize,
    pub seed: u64,
    pub clip_norm: f64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 100, lr: 1e-4, k: 200, stride: None, parallel_windows: 1, seed: 0, clip_norm: 5.0, shuffle: true }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.parallel_windows == 0 || self.stride == Some(0) {
            return Err(Error::InvalidArgument("k, stride and parallel_windows must be at least 1".into()));
        }
        if !(self.lr > 0.0) || !(self.clip_norm > 0.0) {
            return Err(Error::InvalidArgument("lr and clip_norm must be positive".into()));
        }
        Ok(())
    }

    pub fn stride(&self) -> usize {
        self.stride.unwrap_or(self.k)
    }
}

/// One line of the loss trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub epoch: usize,
    pub batch: usize,
    pub time_nll: f64,
    pub entity_nll: f64,
    pub total: f64,
}

/// CSV `epoch,batch,time_nll,entity_nll,total`.
pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from("epoch,batch,time_nll,entity_nll,total\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{}", r.epoch, r.batch, r.time_nll, r.entity_nll, r.total);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub grad_norm: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub trace: Vec<TraceRow>,
    pub epochs: Vec<EpochSummary>,
    pub skipped_windows: usize,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_loss)
    }
}

/// Gradient and loss of one window's mean per-step loss.
pub fn window_gradient<T: Real>(model: &Cep3<T>, graph: &TemporalGraph, window: &Window) -> Result<(ParamGrads<T>, LossTerms)> {
    let mut tape = Tape::new(&model.params);
    let tf = model.teacher_forced(&mut tape, graph, window)?;
    let grads = tape.backward(tf.loss)?.into_params();
    Ok((grads, summarize(&tf.steps)))
}

fn summarize(steps: &[crate::model::StepRecord]) -> LossTerms {
    let parts: Vec<LossTerms> = steps
        .iter()
        .map(|s| LossTerms { time_nll: s.time_nll, entity_nll: s.entity_nll, total: s.time_nll + s.entity_nll, per_step: vec![(s.time_nll, s.entity_nll)] })
        .collect();
    LossTerms::mean_of(&parts)
}

/// Mean teacher-forced loss over windows without gradients.
pub fn evaluate_loss<T: Real>(model: &Cep3<T>, graph: &TemporalGraph, windows: &[Window]) -> Result<Option<f64>> {
    let losses = windows
        .par_iter()
        .filter(|w| !w.is_empty())
        .map(|w| {
            let mut tape = Tape::new(&model.params);
            let tf = model.teacher_forced(&mut tape, graph, w)?;
            Ok(tape.item(tf.loss).as_f64())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok((!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64))
}

/// One pass over `batches`: windows of a batch run concurrently on a shared
/// parameter snapshot, their gradients are summed in batch order, averaged,
/// clipped, and applied with one optimizer step.
pub fn train_epoch<T: Real>(
    model: &mut Cep3<T>,
    graph: &TemporalGraph,
    batches: &[&[Window]],
    adam: &mut Adam<T>,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<(Vec<TraceRow>, f64)> {
    let mut rows = Vec::with_capacity(batches.len());
    let mut last_norm = 0.0;
    for (b, batch) in batches.iter().enumerate() {
        let results = {
            let snapshot: &Cep3<T> = model;
            batch.par_iter().map(|w| window_gradient(snapshot, graph, w)).collect::<Result<Vec<_>>>()?
        };
        let mut grads = model.params.zero_grads();
        let mut terms = Vec::with_capacity(results.len());
        for (g, t) in results {
            grads.accumulate(&g);
            terms.push(t);
        }
        grads.scale(T::one() / T::lit(batch.len() as f64));
        last_norm = clip_global_norm(&mut grads, T::lit(cfg.clip_norm)).as_f64();
        adam.step(&mut model.params, &grads);
        let mean = LossTerms::mean_of(&terms);
        rows.push(TraceRow { epoch, batch: b, time_nll: mean.time_nll, entity_nll: mean.entity_nll, total: mean.total });
    }
    Ok((rows, last_norm))
}

/// Trains for `cfg.epochs` epochs, calling `on_epoch` after each.
pub fn train<T: Real>(
    model: &mut Cep3<T>,
    graph: &TemporalGraph,
    windows: &[Window],
    val: &[Window],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochSummary, &Cep3<T>) -> Result<()>,
) -> Result<TrainReport> {
    cfg.validate()?;
    let mut report = TrainReport::default();
    let mut usable: Vec<Window> = Vec::with_capacity(windows.len());
    for w in windows {
        if w.is_empty() {
            report.skipped_windows += 1;
        } else {
            usable.push(w.clone());
        }
    }
    if report.skipped_windows > 0 {
        log::warn!("skipped {} empty windows", report.skipped_windows);
    }
    if usable.is_empty() {
        return Err(Error::InvalidArgument("no non-empty training windows".into()));
    }
    let mut adam = Adam::new(&model.params, AdamConfig { lr: cfg.lr, ..AdamConfig::default() });
    let mut order: Vec<usize> = (0..usable.len()).collect();
    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            order.shuffle(&mut rng);
        }
        let ordered: Vec<Window> = order.iter().map(|&i| usable[i].clone()).collect();
        let batches: Vec<&[Window]> = ordered.chunks(cfg.parallel_windows).collect();
        let (rows, grad_norm) = train_epoch(model, graph, &batches, &mut adam, cfg, epoch)?;
        let train_loss = rows.iter().map(|r| r.total).sum::<f64>() / rows.len() as f64;
        let val_loss = evaluate_loss(model, graph, val)?;
        let summary = EpochSummary { epoch, train_loss, val_loss, grad_norm };
        log::info!("epoch {epoch}: train {train_loss:.5} val {val_loss:?}");
        on_epoch(&summary, model)?;
        report.trace.extend(rows);
        report.epochs.push(summary);
    }
    Ok(report)
}
