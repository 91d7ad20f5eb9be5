use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{community_history, position};
use crate::ctdg::{CommunityAssignment, NodeId, TemporalGraph};
use crate::error::{Error, Result};
use crate::evaluation::EventModel;
use crate::forecaster::{argmax, ForecastStep, OpCounter};
use crate::model::PROB_FLOOR;
use crate::synth::pair_seed;
use crate::tensor::{clip_global_norm, Adam, AdamConfig, Axis, GruCell, Linear, Mlp, ParamId, ParameterSet, Tape, Tensor, Var};
use crate::training::Window;

/// How a neural baseline scores the `(source, dest)` pair.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkerHead {
    /// One softmax over all `n^2` ordered pairs.
    Flat,
    /// Source softmax, then destination softmax given the source.
    #[default]
    Hierarchical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NeuralConfig {
    pub marker: MarkerHead,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    /// Community events fed to the GRU before each window.
    pub history_len: usize,
    pub epochs: usize,
    pub lr: f64,
    pub clip_norm: f64,
    pub seed: u64,
    pub pair_budget: usize,
}

impl Default for NeuralConfig {
    fn default() -> Self {
        Self {
            marker: MarkerHead::Hierarchical,
            embed_dim: 8,
            hidden_dim: 32,
            history_len: 64,
            epochs: 20,
            lr: 5e-3,
            clip_norm: 5.0,
            seed: 0,
            pair_budget: 1 << 20,
        }
    }
}

/// An event in member positions: `(source, dest, time)`.
pub type LocalEvent = (usize, usize, f64);

/// Embeds events and runs them through a GRU.
#[derive(Clone, Debug)]
pub(super) struct EventEncoder {
    embedding: ParamId,
    pub gru: GruCell,
    embed_dim: usize,
}

impl EventEncoder {
    pub fn new(params: &mut ParameterSet<f64>, name: &str, n: usize, cfg: &NeuralConfig) -> Self {
        Self {
            embedding: params.add_weight(format!("{name}.embedding"), n, cfg.embed_dim),
            gru: GruCell::new(params, &format!("{name}.gru"), 2 * cfg.embed_dim + 1, cfg.hidden_dim),
            embed_dim: cfg.embed_dim,
        }
    }

    /// `[emb_u | emb_v | ln(1 + dt)]`.
    fn input(&self, tape: &mut Tape<'_, f64>, u: usize, v: usize, dt: f64) -> Result<Var> {
        let table = tape.param(self.embedding);
        let rows = tape.gather_rows(table, &[u, v])?;
        let pair = tape.reshape(rows, 1, 2 * self.embed_dim)?;
        let dt = tape.constant(Tensor::scalar(dt.max(0.0).ln_1p()))?;
        tape.concat(&[pair, dt], Axis::Cols)
    }

    pub fn zero_state(&self, tape: &mut Tape<'_, f64>) -> Result<Var> {
        tape.constant(Tensor::zeros(1, self.gru.hidden_dim))
    }

    pub fn step(&self, tape: &mut Tape<'_, f64>, h: Var, u: usize, v: usize, dt: f64) -> Result<Var> {
        self.step_with(&self.gru, tape, h, u, v, dt)
    }

    /// Steps another cell that shares this encoder's event embedding.
    pub fn step_with(&self, cell: &GruCell, tape: &mut Tape<'_, f64>, h: Var, u: usize, v: usize, dt: f64) -> Result<Var> {
        let x = self.input(tape, u, v, dt)?;
        cell.forward(tape, x, h)
    }

    pub fn input_dim(&self) -> usize {
        2 * self.embed_dim + 1
    }

    /// Runs `events` from state `h`; returns the final state and last time.
    pub fn run(&self, tape: &mut Tape<'_, f64>, mut h: Var, events: &[LocalEvent], mut last: Option<f64>) -> Result<(Var, Option<f64>)> {
        for &(u, v, t) in events {
            h = self.step(tape, h, u, v, last.map_or(0.0, |l| t - l))?;
            last = Some(t);
        }
        Ok((h, last))
    }
}

/// Mean of scalar terms; zero when there are none.
pub(super) fn mean_of(tape: &mut Tape<'_, f64>, terms: &[Var]) -> Result<Var> {
    if terms.is_empty() {
        return tape.constant(Tensor::scalar(0.0));
    }
    let row = tape.concat(terms, Axis::Cols)?;
    tape.mean(row)
}

/// Pair scoring head.
#[derive(Clone, Debug)]
pub(super) enum Markers {
    Flat { pairs: Linear, n: usize },
    Hierarchical { source: Linear, dest: Mlp, n: usize },
}

impl Markers {
    pub fn new(params: &mut ParameterSet<f64>, name: &str, n: usize, cfg: &NeuralConfig) -> Result<Self> {
        Ok(match cfg.marker {
            MarkerHead::Flat => {
                let pairs = n * n;
                if pairs > cfg.pair_budget {
                    return Err(Error::PairBudget { size: n, pairs, budget: cfg.pair_budget });
                }
                Self::Flat { pairs: Linear::new(params, &format!("{name}.pairs"), cfg.hidden_dim, pairs), n }
            }
            MarkerHead::Hierarchical => Self::Hierarchical {
                source: Linear::new(params, &format!("{name}.source"), cfg.hidden_dim, n),
                dest: Mlp::new(params, &format!("{name}.dest"), cfg.hidden_dim + n, cfg.hidden_dim, n),
                n,
            },
        })
    }

    fn dest_probs(dest: &Mlp, n: usize, tape: &mut Tape<'_, f64>, h: Var, u: usize) -> Result<Var> {
        let mut onehot = Tensor::zeros(1, n);
        onehot.set(0, u, 1.0);
        let onehot = tape.constant(onehot)?;
        let x = tape.concat(&[h, onehot], Axis::Cols)?;
        let logits = dest.forward(tape, x)?;
        tape.softmax(logits, Axis::Cols)
    }

    /// `-ln p(u) - ln p(v | u)` and the two probabilities.
    pub fn nll(&self, tape: &mut Tape<'_, f64>, h: Var, u: usize, v: usize, ops: &mut OpCounter) -> Result<(Var, f64, f64)> {
        match self {
            Self::Flat { pairs, n } => {
                let logits = pairs.forward(tape, h)?;
                ops.logit_evals += (n * n) as u64;
                let joint = tape.softmax(logits, Axis::Cols)?;
                let probs = tape.value(joint).data();
                let pu: f64 = probs[u * n..(u + 1) * n].iter().sum();
                let pv = probs[u * n + v] / pu;
                let p = tape.slice_cols(joint, u * n + v, 1)?;
                let lp = tape.log(p, PROB_FLOOR)?;
                Ok((tape.neg(lp)?, pu, pv))
            }
            Self::Hierarchical { source, dest, n } => {
                let logits = source.forward(tape, h)?;
                let ps = tape.softmax(logits, Axis::Cols)?;
                let pd = Self::dest_probs(dest, *n, tape, h, u)?;
                ops.logit_evals += 2 * *n as u64;
                let (pu, pv) = (tape.value(ps).get(0, u), tape.value(pd).get(0, v));
                let a = tape.slice_cols(ps, u, 1)?;
                let b = tape.slice_cols(pd, v, 1)?;
                let la = tape.log(a, PROB_FLOOR)?;
                let lb = tape.log(b, PROB_FLOOR)?;
                let sum = tape.add(la, lb)?;
                Ok((tape.neg(sum)?, pu, pv))
            }
        }
    }

    /// Most likely pair, with the source marginal and chosen source's
    /// destination conditional.
    pub fn greedy(&self, tape: &mut Tape<'_, f64>, h: Var, ops: &mut OpCounter) -> Result<(usize, usize, Vec<f64>, Vec<f64>)> {
        match self {
            Self::Flat { pairs, n } => {
                let logits = pairs.forward(tape, h)?;
                ops.logit_evals += (n * n) as u64;
                let joint = tape.softmax(logits, Axis::Cols)?;
                let probs = tape.value(joint).data().to_vec();
                let best = argmax(&probs);
                let (ps, pd) = super::split_joint(&probs, *n, best / n);
                Ok((best / n, best % n, ps, pd))
            }
            Self::Hierarchical { source, dest, n } => {
                let logits = source.forward(tape, h)?;
                let ps = tape.softmax(logits, Axis::Cols)?;
                let ps = tape.value(ps).data().to_vec();
                let u = argmax(&ps);
                let pd = Self::dest_probs(dest, *n, tape, h, u)?;
                let pd = tape.value(pd).data().to_vec();
                ops.logit_evals += 2 * *n as u64;
                Ok((u, argmax(&pd), ps, pd))
            }
        }
    }
}

/// A per-community sequence model over member positions.
pub trait SequenceNet: Sized + Send + Sync {
    fn label(&self) -> String;

    fn build(params: &mut ParameterSet<f64>, n: usize, cfg: &NeuralConfig) -> Result<Self>;

    /// Teacher-forced mean loss over `events` after `history`, with each
    /// step's `(p(u), p(v | u))`.
    fn window_loss(&self, tape: &mut Tape<'_, f64>, history: &[LocalEvent], horizon: f64, events: &[LocalEvent]) -> Result<(Var, Vec<(f64, f64)>)>;

    /// Greedy rollout of `k` events; `source` and `dest` are member positions.
    fn forecast(&self, params: &ParameterSet<f64>, history: &[LocalEvent], horizon: f64, k: usize, ops: &mut OpCounter) -> Result<Vec<ForecastStep>>;
}

#[derive(Clone, Debug)]
pub struct CommunityNet<M> {
    pub members: Vec<NodeId>,
    pub params: ParameterSet<f64>,
    pub net: M,
    /// Mean training loss per epoch.
    pub losses: Vec<f64>,
}

/// Independent networks, one per community.
#[derive(Clone, Debug)]
pub struct NeuralBaseline<M> {
    pub config: NeuralConfig,
    pub nets: BTreeMap<usize, CommunityNet<M>>,
}

fn localize(members: &[NodeId], events: impl IntoIterator<Item = (NodeId, NodeId, f64)>) -> Result<Vec<LocalEvent>> {
    events.into_iter().map(|(s, d, t)| Ok((position(members, s)?, position(members, d)?, t))).collect()
}

impl<M: SequenceNet> NeuralBaseline<M> {
    /// Trains one network per community on its windows with one Adam step
    /// per window.
    pub fn fit(graph: &TemporalGraph, windows: &[Window], communities: &CommunityAssignment, cfg: &NeuralConfig) -> Result<Self> {
        if cfg.epochs > 0 && !(cfg.lr > 0.0) {
            return Err(Error::InvalidArgument(format!("learning rate must be positive, got {}", cfg.lr)));
        }
        let nets = communities
            .communities
            .par_iter()
            .enumerate()
            .map(|(c, members)| {
                let mine: Vec<&Window> = windows.iter().filter(|w| w.community == c && !w.is_empty()).collect();
                Ok((c, Self::fit_community(graph, members, &mine, cfg, pair_seed(cfg.seed, c))?))
            })
            .collect::<Result<BTreeMap<_, _>>>()?;
        Ok(Self { config: cfg.clone(), nets })
    }

    fn fit_community(graph: &TemporalGraph, members: &[NodeId], windows: &[&Window], cfg: &NeuralConfig, seed: u64) -> Result<CommunityNet<M>> {
        if members.is_empty() {
            return Err(Error::EmptyCommunity);
        }
        let mut params = ParameterSet::new(seed);
        let net = M::build(&mut params, members.len(), cfg)?;
        let prepared = windows
            .iter()
            .map(|w| Ok((Self::history(graph, members, w.horizon, cfg)?, w.horizon, localize(members, w.events.iter().map(|e| (e.source, e.dest, e.time)))?)))
            .collect::<Result<Vec<_>>>()?;
        let mut adam = Adam::new(&params, AdamConfig { lr: cfg.lr, ..AdamConfig::default() });
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..prepared.len()).collect();
        let mut losses = Vec::with_capacity(cfg.epochs);
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for &i in &order {
                let (history, horizon, events) = &prepared[i];
                let mut grads = {
                    let mut tape = Tape::new(&params);
                    let (loss, _) = net.window_loss(&mut tape, history, *horizon, events)?;
                    total += tape.item(loss);
                    tape.backward(loss)?.into_params()
                };
                clip_global_norm(&mut grads, cfg.clip_norm);
                adam.step(&mut params, &grads);
            }
            losses.push(if prepared.is_empty() { f64::NAN } else { total / prepared.len() as f64 });
        }
        Ok(CommunityNet { members: members.to_vec(), params, net, losses })
    }

    fn history(graph: &TemporalGraph, members: &[NodeId], horizon: f64, cfg: &NeuralConfig) -> Result<Vec<LocalEvent>> {
        let events = community_history(graph, members, horizon, cfg.history_len, |_| true);
        localize(members, events.iter().map(|e| (e.source, e.dest, e.time)))
    }

    fn net(&self, community: usize) -> Result<&CommunityNet<M>> {
        self.nets.get(&community).ok_or_else(|| Error::InvalidArgument(format!("no fitted model for community {community}")))
    }

    /// Mean teacher-forced loss of `window`.
    pub fn window_loss(&self, graph: &TemporalGraph, window: &Window) -> Result<f64> {
        let cn = self.net(window.community)?;
        let history = Self::history(graph, &cn.members, window.horizon, &self.config)?;
        let events = localize(&cn.members, window.events.iter().map(|e| (e.source, e.dest, e.time)))?;
        let mut tape = Tape::new(&cn.params);
        let (loss, _) = cn.net.window_loss(&mut tape, &history, window.horizon, &events)?;
        Ok(tape.item(loss))
    }

    /// Greedy forecast that also counts pair-logit evaluations.
    pub fn forecast_counted(&self, graph: &TemporalGraph, window: &Window, k: usize, ops: &mut OpCounter) -> Result<Vec<ForecastStep>> {
        let cn = self.net(window.community)?;
        let history = Self::history(graph, &cn.members, window.horizon, &self.config)?;
        let mut steps = cn.net.forecast(&cn.params, &history, window.horizon, k, ops)?;
        for s in &mut steps {
            s.source = cn.members[s.source];
            s.dest = cn.members[s.dest];
        }
        Ok(steps)
    }
}

impl<M: SequenceNet> EventModel for NeuralBaseline<M> {
    fn name(&self) -> String {
        self.nets.values().next().map_or_else(|| "neural".into(), |n| n.net.label())
    }

    fn entity_probabilities(&self, graph: &TemporalGraph, window: &Window) -> Result<Vec<(f64, f64)>> {
        let cn = self.net(window.community)?;
        let history = Self::history(graph, &cn.members, window.horizon, &self.config)?;
        let events = localize(&cn.members, window.events.iter().map(|e| (e.source, e.dest, e.time)))?;
        let mut tape = Tape::new(&cn.params);
        Ok(cn.net.window_loss(&mut tape, &history, window.horizon, &events)?.1)
    }

    fn forecast(&self, graph: &TemporalGraph, window: &Window, k: usize) -> Result<Vec<ForecastStep>> {
        self.forecast_counted(graph, window, k, &mut OpCounter::default())
    }
}
