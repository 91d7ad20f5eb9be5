//! The full forecaster: encoder, point-process head, and rollout update
//! sharing one parameter set and one time encoder.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ar_update::{Provenance, RolloutGraph, UpdateNetwork, UpdateScope};
use crate::ctdg::{NodeId, TemporalGraph};
use crate::encoder::{Encoder, EncoderConfig, TimeEncoder};
use crate::error::{Error, Result};
use crate::forecaster::{ForecastStep, Forecaster, ForecasterConfig, HeadKind, OpCounter};
use crate::scalar::Real;
use crate::tensor::{read_container, read_manifest, write_container, ParameterSet, Tape, Tensor, Var};
use crate::training::Window;

/// Probability floor inside every log of the loss and the metrics.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub forecaster_hidden: usize,
    pub head: HeadKind,
    pub update_scope: UpdateScope,
    /// Hop bound for seeding the rollout graph.
    pub rollout_hops: usize,
    pub message_layers: usize,
    /// Feed the window's first inter-event time to every GRU update instead
    /// of the current step's.
    pub literal_first_dt: bool,
    pub mask_self_loops: bool,
    pub pair_budget: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            forecaster_hidden: 50,
            head: HeadKind::Hierarchical,
            update_scope: UpdateScope::Full,
            rollout_hops: 2,
            message_layers: 1,
            literal_first_dt: false,
            mask_self_loops: false,
            pair_budget: 1 << 20,
        }
    }
}

/// Values of one teacher-forced step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub lambda_total: f64,
    pub dt: f64,
    pub p_source: f64,
    pub p_dest: f64,
    pub time_nll: f64,
    pub entity_nll: f64,
}

/// Output of a teacher-forced pass over one window.
pub struct TeacherForced {
    /// Mean per-step loss, `1 x 1`.
    pub loss: Var,
    pub steps: Vec<StepRecord>,
    pub rollout: RolloutGraph,
}

#[derive(Clone, Debug)]
pub struct Cep3<T: Real> {
    pub config: ModelConfig,
    pub params: ParameterSet<T>,
    pub time: TimeEncoder,
    pub encoder: Encoder,
    pub forecaster: Forecaster,
    pub update: UpdateNetwork,
}

impl<T: Real> Cep3<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut params = ParameterSet::new(seed);
        let d = config.encoder.hidden_dim;
        let dt = config.encoder.time_dim;
        let time = TimeEncoder::new(&mut params, "time", dt);
        let encoder = Encoder::new(&mut params, "encoder", config.encoder.clone())?;
        let forecaster = Forecaster::new(
            &mut params,
            "forecaster",
            ForecasterConfig {
                state_dim: d,
                hidden_dim: config.forecaster_hidden,
                time_dim: dt,
                head: config.head,
                mask_self_loops: config.mask_self_loops,
                pair_budget: config.pair_budget,
            },
        );
        let update = UpdateNetwork::new(&mut params, "update", d, dt, config.message_layers);
        Ok(Self { config, params, time, encoder, forecaster, update })
    }

    /// Initial member states at the window horizon.
    pub fn encode(&self, tape: &mut Tape<'_, T>, graph: &TemporalGraph, members: &[NodeId], horizon: f64) -> Result<Var> {
        if members.is_empty() {
            return Err(Error::EmptyCommunity);
        }
        self.encoder.encode(tape, &self.time, graph, members, horizon)
    }

    /// Rollout graph seeded from the history before `horizon`.
    pub fn rollout_graph(&self, graph: &TemporalGraph, members: &[NodeId], horizon: f64) -> RolloutGraph {
        RolloutGraph::init(graph, members, self.config.rollout_hops, horizon)
    }

    /// Runs the window's ground-truth events through the model, scoring each
    /// before folding it into the states.
    pub fn teacher_forced(&self, tape: &mut Tape<'_, T>, graph: &TemporalGraph, window: &Window) -> Result<TeacherForced> {
        if window.events.is_empty() {
            return Err(Error::InvalidArgument("window has no events".into()));
        }
        let members = &window.members;
        let mut h = self.encode(tape, graph, members, window.horizon)?;
        let mut rollout = self.rollout_graph(graph, members, window.horizon);
        let mut ops = OpCounter::default();
        let floor = T::lit(PROB_FLOOR);
        let first_dt = window.events[0].time - window.horizon;
        let mut t_prev = window.horizon;
        let mut terms = Vec::with_capacity(window.events.len());
        let mut steps = Vec::with_capacity(window.events.len());
        for ev in &window.events {
            let u = rollout.position(ev.source).ok_or(Error::NotInCommunity { node: ev.source })?;
            let v = rollout.position(ev.dest).ok_or(Error::NotInCommunity { node: ev.dest })?;
            let dt = ev.time - t_prev;
            let (_, total) = self.forecaster.intensities(tape, h)?;
            let log_total = tape.log(total, floor)?;
            let survival = tape.scale(total, T::lit(dt))?;
            let time_term = tape.sub(survival, log_total)?;
            let phi = self.time.encode(tape, &[T::lit(dt)])?;
            let (pu, pv) = self.forecaster.pair_probabilities(tape, h, u, v, phi, &mut ops)?;
            let log_pu = tape.log(pu, floor)?;
            let log_pv = tape.log(pv, floor)?;
            let log_pair = tape.add(log_pu, log_pv)?;
            let entity_term = tape.neg(log_pair)?;
            terms.push(tape.add(time_term, entity_term)?);
            steps.push(StepRecord {
                lambda_total: tape.item(total).as_f64(),
                dt,
                p_source: tape.item(pu).as_f64(),
                p_dest: tape.item(pv).as_f64(),
                time_nll: tape.item(time_term).as_f64(),
                entity_nll: tape.item(entity_term).as_f64(),
            });
            rollout.apply_event(ev.source, ev.dest, ev.time, Provenance::Observed)?;
            let update_phi = if self.config.literal_first_dt { self.time.encode(tape, &[T::lit(first_dt)])? } else { phi };
            h = self.update.update(tape, self.config.update_scope, &rollout, h, update_phi, u, v)?;
            t_prev = ev.time;
        }
        let stacked = tape.concat(&terms, crate::tensor::Axis::Rows)?;
        let loss = tape.mean(stacked)?;
        Ok(TeacherForced { loss, steps, rollout })
    }

    /// Free-running rollout of `k` events after `horizon`: greedy when `rng`
    /// is `None`, ancestral sampling otherwise.
    pub fn forecast<R: Rng>(
        &self,
        graph: &TemporalGraph,
        members: &[NodeId],
        horizon: f64,
        k: usize,
        mut rng: Option<&mut R>,
        ops: &mut OpCounter,
    ) -> Result<Vec<ForecastStep>> {
        let mut states = {
            let mut tape = Tape::new(&self.params);
            let h = self.encode(&mut tape, graph, members, horizon)?;
            tape.value(h).clone()
        };
        let mut rollout = self.rollout_graph(graph, members, horizon);
        let mut out = Vec::with_capacity(k);
        let mut t_prev = horizon;
        let mut first_dt = None;
        for _ in 0..k {
            let step = match rng.as_deref_mut() {
                Some(r) => self.forecaster.sample_step(&self.params, &self.time, &states, members, t_prev, ops, r)?,
                None => self.forecaster.greedy_step(&self.params, &self.time, &states, members, t_prev, ops)?,
            };
            rollout.apply_event(step.source, step.dest, step.t_abs, Provenance::Predicted)?;
            let gru_dt = if self.config.literal_first_dt { *first_dt.get_or_insert(step.dt) } else { step.dt };
            states = self.advance(&rollout, &states, gru_dt, step.source, step.dest)?;
            t_prev = step.t_abs;
            out.push(step);
        }
        Ok(out)
    }

    fn advance(&self, rollout: &RolloutGraph, states: &Tensor<T>, dt: f64, source: NodeId, dest: NodeId) -> Result<Tensor<T>> {
        let mut tape = Tape::new(&self.params);
        let h = tape.constant(states.clone())?;
        let phi = self.time.encode(&mut tape, &[T::lit(dt)])?;
        let u = rollout.position(source).ok_or(Error::NotInCommunity { node: source })?;
        let v = rollout.position(dest).ok_or(Error::NotInCommunity { node: dest })?;
        let next = self.update.update(&mut tape, self.config.update_scope, rollout, h, phi, u, v)?;
        Ok(tape.value(next).clone())
    }

    /// Writes the parameters as an `f32` container with the config as metadata.
    pub fn save<W: Write>(&self, out: W) -> Result<()> {
        write_container(out, &self.params, serde_json::to_value(&self.config)?)
    }

    /// Rebuilds a model from a container written by [`Cep3::save`].
    pub fn load(bytes: &[u8]) -> Result<Self> {
        let manifest = read_manifest(bytes)?;
        let config: ModelConfig = serde_json::from_value(manifest.meta)?;
        let mut model = Self::new(config, manifest.seed)?;
        read_container(bytes, &mut model.params)?;
        Ok(model)
    }

    /// Converts to another scalar type, keeping the architecture.
    pub fn cast<U: Real>(&self) -> Cep3<U> {
        Cep3 {
            config: self.config.clone(),
            params: self.params.cast(),
            time: self.time.clone(),
            encoder: self.encoder.clone(),
            forecaster: self.forecaster.clone(),
            update: self.update.clone(),
        }
    }
}
