//! Point-process head: per-node intensities, the time prediction, and the
//! entity distributions restricted to a community.
//!
//! The hierarchical chain scores `|C|` source logits and then `|C|`
//! destination logits per step; the joint head scores all `|C|^2` ordered
//! pairs at once.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ctdg::NodeId;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::{Axis, Mlp, ParameterSet, Tape, Tensor, Var};

/// Lower bound applied to the summed intensity.
pub const MIN_TOTAL_INTENSITY: f64 = 1e-9;

/// Which entity head scores the next pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    #[default]
    Hierarchical,
    Joint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecasterConfig {
    pub state_dim: usize,
    pub hidden_dim: usize,
    pub time_dim: usize,
    pub head: HeadKind,
    /// Forbid `dest == source` (ignored for single-node communities).
    pub mask_self_loops: bool,
    /// Largest `|C|^2` the joint head may materialize.
    pub pair_budget: usize,
}

impl Default for ForecasterConfig {
    fn default() -> Self {
        Self { state_dim: 100, hidden_dim: 50, time_dim: 16, head: HeadKind::Hierarchical, mask_self_loops: false, pair_budget: 1 << 20 }
    }
}

#[derive(Clone, Debug)]
enum EntityHead {
    Chain { source: Mlp, dest: Mlp },
    Joint { pair: Mlp },
}

/// Counts logit evaluations, one per scored candidate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OpCounter {
    pub logit_evals: u64,
}

/// How the inter-event time is turned into a number.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DtMode {
    /// Exponential mean `1 / lambda`.
    Mean,
    /// Inverse-CDF draw `-ln(U) / lambda`.
    Sample,
}

/// `1 / rate` or an exponential draw with that rate.
pub fn predict_dt<R: Rng + ?Sized>(rate: f64, mode: DtMode, rng: &mut R) -> Result<f64> {
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(Error::InvalidArgument(format!("rate must be positive, got {rate}")));
    }
    Ok(match mode {
        DtMode::Mean => 1.0 / rate,
        DtMode::Sample => {
            let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            -u.ln() / rate
        }
    })
}

/// Index of the first maximum; ties resolve to the lowest position.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Draws an index from a categorical distribution.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let total: f64 = probs.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, &p) in probs.iter().enumerate() {
        if u < p {
            return i;
        }
        u -= p;
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// One forecast event.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastStep {
    pub dt: f64,
    pub t_abs: f64,
    pub source: NodeId,
    pub dest: NodeId,
    pub lambda_total: f64,
    /// Over the community members, in member order.
    pub p_source: Vec<f64>,
    /// Conditional on the chosen source, in member order.
    pub p_dest: Vec<f64>,
}

/// CSV `step,source,dest,dt,t_abs`; node ids pass through `label`.
pub fn forecast_csv(steps: &[ForecastStep], label: impl Fn(NodeId) -> u64) -> String {
    let mut out = String::from("step,source,dest,dt,t_abs\n");
    for (i, s) in steps.iter().enumerate() {
        let _ = writeln!(out, "{},{},{},{},{}", i + 1, label(s.source), label(s.dest), s.dt, s.t_abs);
    }
    out
}

#[derive(Clone, Debug)]
pub struct Forecaster {
    pub config: ForecasterConfig,
    intensity: Mlp,
    entity: EntityHead,
}

impl Forecaster {
    pub fn new<T: Real>(params: &mut ParameterSet<T>, name: &str, config: ForecasterConfig) -> Self {
        let d = config.state_dim;
        let m = config.hidden_dim;
        let dt = config.time_dim;
        let intensity = Mlp::new(params, &format!("{name}.intensity"), d, m, 1);
        let entity = match config.head {
            HeadKind::Hierarchical => EntityHead::Chain {
                source: Mlp::new(params, &format!("{name}.source"), d + dt, m, 1),
                dest: Mlp::new(params, &format!("{name}.dest"), 2 * d + dt, m, 1),
            },
            HeadKind::Joint => EntityHead::Joint { pair: Mlp::new(params, &format!("{name}.pair"), 2 * d + dt, m, 1) },
        };
        Self { config, intensity, entity }
    }

    fn check_states<T: Real>(&self, tape: &Tape<'_, T>, h: Var) -> Result<usize> {
        let [n, d] = tape.shape(h);
        if n == 0 {
            return Err(Error::EmptyCommunity);
        }
        if d != self.config.state_dim {
            return Err(Error::Shape { op: "forecaster", detail: format!("states have width {d}, expected {}", self.config.state_dim) });
        }
        Ok(n)
    }

    /// Per-node intensities (`n x 1`) and their floored sum (`1 x 1`).
    pub fn intensities<T: Real>(&self, tape: &mut Tape<'_, T>, h: Var) -> Result<(Var, Var)> {
        self.check_states(tape, h)?;
        let raw = self.intensity.forward(tape, h)?;
        let per_node = tape.softplus(raw)?;
        let total = tape.sum(per_node)?;
        let total = tape.clamp_min(total, T::lit(MIN_TOTAL_INTENSITY))?;
        Ok((per_node, total))
    }

    /// `p(u)` over members as a `1 x n` row.
    pub fn source_distribution<T: Real>(&self, tape: &mut Tape<'_, T>, h: Var, phi: Var, ops: &mut OpCounter) -> Result<Var> {
        let n = self.check_states(tape, h)?;
        match &self.entity {
            EntityHead::Chain { source, .. } => {
                let phi_n = tape.repeat_rows(phi, n)?;
                let x = tape.concat(&[h, phi_n], Axis::Cols)?;
                let logits = source.forward(tape, x)?;
                ops.logit_evals += n as u64;
                let row = tape.transpose(logits)?;
                tape.softmax(row, Axis::Cols)
            }
            EntityHead::Joint { .. } => {
                let joint = self.joint_distribution(tape, h, phi, ops)?;
                let grid = tape.reshape(joint, n, n)?;
                let col = tape.sum_axis(grid, Axis::Cols)?;
                tape.transpose(col)
            }
        }
    }

    /// `p(v | u)` over members as a `1 x n` row, `u` a member position.
    pub fn dest_distribution<T: Real>(&self, tape: &mut Tape<'_, T>, h: Var, u: usize, phi: Var, ops: &mut OpCounter) -> Result<Var> {
        let n = self.check_states(tape, h)?;
        if u >= n {
            return Err(Error::NotInCommunity { node: u });
        }
        match &self.entity {
            EntityHead::Chain { dest, .. } => {
                let hu = tape.row(h, u)?;
                let hu_n = tape.repeat_rows(hu, n)?;
                let phi_n = tape.repeat_rows(phi, n)?;
                let x = tape.concat(&[h, hu_n, phi_n], Axis::Cols)?;
                let logits = dest.forward(tape, x)?;
                ops.logit_evals += n as u64;
                let row = tape.transpose(logits)?;
                let row = self.mask_diagonal(tape, row, u, n)?;
                tape.softmax(row, Axis::Cols)
            }
            EntityHead::Joint { .. } => {
                let logits = self.joint_logits(tape, h, phi, ops)?;
                let slice = tape.slice_cols(logits, u * n, n)?;
                tape.softmax(slice, Axis::Cols)
            }
        }
    }

    /// Probabilities of the observed pair as `(p(u), p(v | u))`, each `1 x 1`,
    /// for member positions `u`, `v`.
    pub fn pair_probabilities<T: Real>(&self, tape: &mut Tape<'_, T>, h: Var, u: usize, v: usize, phi: Var, ops: &mut OpCounter) -> Result<(Var, Var)> {
        let n = self.check_states(tape, h)?;
        if u >= n || v >= n {
            return Err(Error::NotInCommunity { node: u.max(v) });
        }
        match &self.entity {
            EntityHead::Chain { .. } => {
                let ps = self.source_distribution(tape, h, phi, ops)?;
                let pd = self.dest_distribution(tape, h, u, phi, ops)?;
                Ok((tape.slice_cols(ps, u, 1)?, tape.slice_cols(pd, v, 1)?))
            }
            EntityHead::Joint { .. } => {
                let joint = self.joint_distribution(tape, h, phi, ops)?;
                let row = tape.slice_cols(joint, u * n, n)?;
                let pu = tape.sum(row)?;
                let puv = tape.slice_cols(joint, u * n + v, 1)?;
                let log_pu = tape.log(pu, T::lit(1e-300))?;
                let log_puv = tape.log(puv, T::lit(1e-300))?;
                let log_cond = tape.sub(log_puv, log_pu)?;
                Ok((pu, tape.exp(log_cond)?))
            }
        }
    }

    fn mask_diagonal<T: Real>(&self, tape: &mut Tape<'_, T>, row: Var, u: usize, n: usize) -> Result<Var> {
        if !self.config.mask_self_loops || n == 1 {
            return Ok(row);
        }
        let mut mask = Tensor::zeros(1, n);
        mask.set(0, u, T::lit(-1e30));
        let mask = tape.constant(mask)?;
        tape.add(row, mask)
    }

    /// Softmax over all `n^2` ordered pairs, flattened `u * n + v`.
    pub fn joint_distribution<T: Real>(&self, tape: &mut Tape<'_, T>, h: Var, phi: Var, ops: &mut OpCounter) -> Result<Var> {
        let logits = self.joint_logits(tape, h, phi, ops)?;
        tape.softmax(logits, Axis::Cols)
    }

    fn joint_logits<T: Real>(&self, tape: &mut Tape<'_, T>, h: Var, phi: Var, ops: &mut OpCounter) -> Result<Var> {
        let n = self.check_states(tape, h)?;
        let EntityHead::Joint { pair } = &self.entity else {
            return Err(Error::InvalidArgument("model was built with the hierarchical head".into()));
        };
        let pairs = n * n;
        if pairs > self.config.pair_budget {
            return Err(Error::PairBudget { size: n, pairs, budget: self.config.pair_budget });
        }
        let us: Vec<usize> = (0..pairs).map(|k| k / n).collect();
        let vs: Vec<usize> = (0..pairs).map(|k| k % n).collect();
        let hu = tape.gather_rows(h, &us)?;
        let hv = tape.gather_rows(h, &vs)?;
        let phi_p = tape.repeat_rows(phi, pairs)?;
        let x = tape.concat(&[hu, hv, phi_p], Axis::Cols)?;
        let logits = pair.forward(tape, x)?;
        ops.logit_evals += pairs as u64;
        let row = tape.transpose(logits)?;
        if !self.config.mask_self_loops || n == 1 {
            return Ok(row);
        }
        let mut mask = Tensor::zeros(1, pairs);
        for u in 0..n {
            mask.set(0, u * n + u, T::lit(-1e30));
        }
        let mask = tape.constant(mask)?;
        tape.add(row, mask)
    }

    /// Greedy next event from plain states (`n x d`, member order):
    /// mean inter-event time, argmax source, argmax destination.
    pub fn greedy_step<T: Real>(
        &self,
        params: &ParameterSet<T>,
        time: &crate::encoder::TimeEncoder,
        states: &Tensor<T>,
        members: &[NodeId],
        t_prev: f64,
        ops: &mut OpCounter,
    ) -> Result<ForecastStep> {
        self.decode_step(params, time, states, members, t_prev, ops, None::<&mut rand_chacha::ChaCha8Rng>)
    }

    /// Ancestral sample of the next event.
    #[allow(clippy::too_many_arguments)]
    pub fn sample_step<T: Real, R: Rng>(
        &self,
        params: &ParameterSet<T>,
        time: &crate::encoder::TimeEncoder,
        states: &Tensor<T>,
        members: &[NodeId],
        t_prev: f64,
        ops: &mut OpCounter,
        rng: &mut R,
    ) -> Result<ForecastStep> {
        self.decode_step(params, time, states, members, t_prev, ops, Some(rng))
    }

    #[allow(clippy::too_many_arguments)]
    fn decode_step<T: Real, R: Rng>(
        &self,
        params: &ParameterSet<T>,
        time: &crate::encoder::TimeEncoder,
        states: &Tensor<T>,
        members: &[NodeId],
        t_prev: f64,
        ops: &mut OpCounter,
        mut rng: Option<&mut R>,
    ) -> Result<ForecastStep> {
        if members.len() != states.rows() {
            return Err(Error::Shape { op: "decode_step", detail: format!("{} members, {} state rows", members.len(), states.rows()) });
        }
        let mut tape = Tape::new(params);
        let h = tape.constant(states.clone())?;
        let (_, total) = self.intensities(&mut tape, h)?;
        let lambda_total = tape.item(total).as_f64();
        let dt = match rng.as_deref_mut() {
            Some(r) => predict_dt(lambda_total, DtMode::Sample, r)?,
            None => 1.0 / lambda_total,
        };
        let phi = time.encode(&mut tape, &[T::lit(dt)])?;
        let to_f64 = |t: &Tape<'_, T>, v: Var| -> Vec<f64> { t.value(v).data().iter().map(|x| x.as_f64()).collect() };
        let (u, v, p_source, p_dest) = match &self.entity {
            EntityHead::Chain { .. } => {
                let ps = self.source_distribution(&mut tape, h, phi, ops)?;
                let p_source = to_f64(&tape, ps);
                let u = pick(&p_source, rng.as_deref_mut());
                let pd = self.dest_distribution(&mut tape, h, u, phi, ops)?;
                let p_dest = to_f64(&tape, pd);
                let v = pick(&p_dest, rng.as_deref_mut());
                (u, v, p_source, p_dest)
            }
            EntityHead::Joint { .. } => {
                let n = members.len();
                let pj = self.joint_distribution(&mut tape, h, phi, ops)?;
                let joint = to_f64(&tape, pj);
                let k = pick(&joint, rng);
                let (u, v) = (k / n, k % n);
                let p_source: Vec<f64> = (0..n).map(|a| joint[a * n..(a + 1) * n].iter().sum()).collect();
                let p_dest: Vec<f64> = joint[u * n..(u + 1) * n].iter().map(|p| p / p_source[u]).collect();
                (u, v, p_source, p_dest)
            }
        };
        Ok(ForecastStep { dt, t_abs: t_prev + dt, source: members[u], dest: members[v], lambda_total, p_source, p_dest })
    }
}

fn pick<R: Rng>(probs: &[f64], rng: Option<&mut R>) -> usize {
    match rng {
        Some(r) => sample_categorical(probs, r),
        None => argmax(probs),
    }
}

/// Measured cost of greedy decode steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeCost {
    pub size: usize,
    pub head: HeadKind,
    /// Fastest of the repeats, divided by the step count.
    pub ns_per_step: f64,
    pub logit_evals_per_step: u64,
}

/// Times `steps` greedy decode steps of a randomly initialized head over
/// `size` members with random states, keeping the fastest of `repeats`.
#[allow(clippy::too_many_arguments)]
pub fn decode_cost(size: usize, head: HeadKind, state_dim: usize, hidden_dim: usize, time_dim: usize, steps: usize, repeats: usize, seed: u64) -> Result<DecodeCost> {
    use rand::SeedableRng;
    if size == 0 || steps == 0 || repeats == 0 {
        return Err(Error::InvalidArgument("size, steps and repeats must be at least 1".into()));
    }
    let mut params = ParameterSet::<f64>::new(seed);
    let time = crate::encoder::TimeEncoder::new(&mut params, "time", time_dim);
    let cfg = ForecasterConfig { state_dim, hidden_dim, time_dim, head, mask_self_loops: false, pair_budget: usize::MAX };
    let forecaster = Forecaster::new(&mut params, "forecaster", cfg);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let states = Tensor::from_vec(size, state_dim, (0..size * state_dim).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
    let members: Vec<NodeId> = (0..size).collect();
    let mut best = f64::INFINITY;
    let mut evals = 0;
    for _ in 0..repeats {
        let mut ops = OpCounter::default();
        let start = std::time::Instant::now();
        for _ in 0..steps {
            std::hint::black_box(forecaster.greedy_step(&params, &time, &states, &members, 0.0, &mut ops)?);
        }
        best = best.min(start.elapsed().as_nanos() as f64);
        evals = ops.logit_evals / steps as u64;
    }
    Ok(DecodeCost { size, head, ns_per_step: best / steps as f64, logit_evals_per_step: evals })
}
