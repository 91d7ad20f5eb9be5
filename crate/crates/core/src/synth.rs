//! Ground-truth point-process generators and their exact likelihoods.
//!
//! Each ordered pair runs an independent process on `[0, horizon]`: either
//! homogeneous Poisson with rate `lambda`, or a univariate Hawkes process with
//! intensity `mu + sum_j alpha * exp(-beta (t - t_j))` (stable iff
//! `alpha < beta`). Pair `i` draws from its own generator seeded with
//! `splitmix64(seed + (i + 1) * 0x9E3779B97F4A7C15)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ctdg::{Event, EventStream, NodeId};
use crate::error::{Error, Result};
use crate::stats::simpson;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProcessKind {
    Poisson { rate: f64 },
    Hawkes { mu: f64, alpha: f64, beta: f64 },
}

impl ProcessKind {
    fn validate(&self) -> Result<()> {
        let finite_nonneg = |x: f64| x.is_finite() && x >= 0.0;
        match *self {
            ProcessKind::Poisson { rate } if finite_nonneg(rate) => Ok(()),
            ProcessKind::Poisson { rate } => Err(Error::InvalidArgument(format!("bad Poisson rate {rate}"))),
            ProcessKind::Hawkes { mu, alpha, beta } => {
                if !finite_nonneg(mu) || !finite_nonneg(alpha) || !(beta > 0.0 && beta.is_finite()) {
                    return Err(Error::InvalidArgument(format!("bad Hawkes parameters mu={mu} alpha={alpha} beta={beta}")));
                }
                if alpha >= beta {
                    return Err(Error::UnstableHawkes { alpha, beta });
                }
                Ok(())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairProcess {
    pub source: NodeId,
    pub dest: NodeId,
    pub process: ProcessKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthSpec {
    pub nodes: usize,
    pub pairs: Vec<PairProcess>,
    pub horizon: f64,
    pub seed: u64,
}

/// Thinning bookkeeping from one simulation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SimulationStats {
    pub proposals: u64,
    pub accepted: u64,
}

impl SimulationStats {
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposals == 0 {
            1.0
        } else {
            self.accepted as f64 / self.proposals as f64
        }
    }
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of pair `index` under `seed`.
pub fn pair_seed(seed: u64, index: usize) -> u64 {
    splitmix64(seed.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

impl GroundTruthSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {}", self.horizon)));
        }
        for p in &self.pairs {
            if p.source >= self.nodes || p.dest >= self.nodes {
                return Err(Error::InvalidArgument(format!("pair ({}, {}) outside {} nodes", p.source, p.dest, self.nodes)));
            }
            p.process.validate()?;
        }
        Ok(())
    }
}

/// Event times of one process on `[0, horizon]`.
pub fn simulate_process<R: Rng>(process: ProcessKind, horizon: f64, rng: &mut R, stats: &mut SimulationStats) -> Vec<f64> {
    let exp = |rng: &mut R, rate: f64| -rng.gen_range(f64::MIN_POSITIVE..1.0f64).ln() / rate;
    let mut times = Vec::new();
    match process {
        ProcessKind::Poisson { rate } => {
            if rate <= 0.0 {
                return times;
            }
            let mut t = exp(rng, rate);
            while t <= horizon {
                times.push(t);
                t += exp(rng, rate);
            }
        }
        ProcessKind::Hawkes { mu, alpha, beta } => {
            // excitation carried as S(t) = sum_j alpha exp(-beta (t - t_j))
            let mut t = 0.0;
            let mut excitation = 0.0;
            loop {
                let bound = mu + excitation;
                if bound <= 0.0 {
                    break;
                }
                let w = exp(rng, bound);
                t += w;
                if t > horizon {
                    break;
                }
                excitation *= (-beta * w).exp();
                let intensity = mu + excitation;
                assert!(intensity <= bound * (1.0 + 1e-12), "thinning bound violated");
                stats.proposals += 1;
                if rng.gen::<f64>() * bound <= intensity {
                    stats.accepted += 1;
                    times.push(t);
                    excitation += alpha;
                }
            }
        }
    }
    times
}

/// Simulates every pair and merges the streams in time order.
pub fn simulate(spec: &GroundTruthSpec) -> Result<(EventStream, SimulationStats)> {
    spec.validate()?;
    let per_pair: Vec<(Vec<f64>, SimulationStats)> = spec
        .pairs
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut rng = ChaCha8Rng::seed_from_u64(pair_seed(spec.seed, i));
            let mut stats = SimulationStats::default();
            (simulate_process(p.process, spec.horizon, &mut rng, &mut stats), stats)
        })
        .collect();
    let mut stats = SimulationStats::default();
    let mut events = Vec::new();
    for (p, (times, s)) in spec.pairs.iter().zip(per_pair) {
        stats.proposals += s.proposals;
        stats.accepted += s.accepted;
        events.extend(times.into_iter().map(|t| Event::new(p.source, p.dest, t)));
    }
    if stats.proposals > 0 {
        log::info!("thinning acceptance rate {:.3}", stats.acceptance_rate());
    }
    Ok((EventStream::new(events, spec.nodes)?, stats))
}

/// Exact NLL of one process's event times on `[0, horizon]`.
pub fn process_nll(process: ProcessKind, times: &[f64], horizon: f64) -> f64 {
    match process {
        ProcessKind::Poisson { rate } => {
            if times.is_empty() {
                rate * horizon
            } else if rate <= 0.0 {
                f64::INFINITY
            } else {
                -(times.len() as f64) * rate.ln() + rate * horizon
            }
        }
        ProcessKind::Hawkes { mu, alpha, beta } => {
            let mut log_sum = 0.0;
            let mut excitation = 0.0;
            let mut prev = 0.0;
            for (i, &t) in times.iter().enumerate() {
                if i > 0 {
                    excitation = (excitation + alpha) * (-beta * (t - prev)).exp();
                }
                log_sum += (mu + excitation).ln();
                prev = t;
            }
            let compensator = mu * horizon + (alpha / beta) * times.iter().map(|&t| 1.0 - (-beta * (horizon - t)).exp()).sum::<f64>();
            compensator - log_sum
        }
    }
}

/// Intensity at `t` counting every event in `history`.
fn intensity_from(process: ProcessKind, history: &[f64], t: f64) -> f64 {
    match process {
        ProcessKind::Poisson { rate } => rate,
        ProcessKind::Hawkes { mu, alpha, beta } => mu + history.iter().map(|&s| alpha * (-beta * (t - s)).exp()).sum::<f64>(),
    }
}

/// Intensity at `t` given all event times; only those strictly before `t`
/// count.
pub fn intensity_at(process: ProcessKind, times: &[f64], t: f64) -> f64 {
    let before = times.partition_point(|&s| s < t);
    intensity_from(process, &times[..before], t)
}

/// The same NLL with the compensator integrated numerically between events.
pub fn process_nll_quadrature(process: ProcessKind, times: &[f64], horizon: f64, panels: usize) -> f64 {
    let log_sum: f64 = times.iter().map(|&t| intensity_at(process, times, t).ln()).sum();
    let mut knots = vec![0.0];
    knots.extend(times.iter().copied());
    knots.push(horizon);
    // on the panel (a, b] the history is every event at or before a
    let integral: f64 = knots
        .windows(2)
        .map(|w| {
            let history = &times[..times.partition_point(|&s| s <= w[0])];
            simpson(|t| intensity_from(process, history, t), w[0], w[1], panels)
        })
        .sum();
    integral - log_sum
}

/// NLL of a stream under the spec; infinite if it contains an event of a
/// pair the spec does not generate.
pub fn oracle_nll(spec: &GroundTruthSpec, stream: &EventStream) -> f64 {
    let mut times: Vec<Vec<f64>> = vec![Vec::new(); spec.pairs.len()];
    let index: std::collections::HashMap<(NodeId, NodeId), usize> =
        spec.pairs.iter().enumerate().map(|(i, p)| ((p.source, p.dest), i)).collect();
    for e in stream.events() {
        match index.get(&(e.source, e.dest)) {
            Some(&i) => times[i].push(e.time),
            None => return f64::INFINITY,
        }
    }
    spec.pairs.iter().zip(&times).map(|(p, t)| process_nll(p.process, t, spec.horizon)).sum()
}

/// Two communities `{0..6}` and `{6..12}`; every ordered in-community pair
/// (no self-loops) is active with a pair-dependent weight in `{1/3 .. 5/3}`.
fn two_communities(make: impl Fn(f64) -> ProcessKind, horizon: f64, seed: u64) -> GroundTruthSpec {
    let mut pairs = Vec::new();
    for base in [0, 6] {
        for u in 0..6 {
            for v in 0..6 {
                if u != v {
                    let weight = (1 + (u * 7 + v * 3) % 5) as f64 / 3.0;
                    pairs.push(PairProcess { source: base + u, dest: base + v, process: make(weight) });
                }
            }
        }
    }
    GroundTruthSpec { nodes: 12, pairs, horizon, seed }
}

/// Poisson preset: in-community pair rates `0.05 * weight` over `[0, 1000]`.
pub fn poisson_preset(seed: u64) -> GroundTruthSpec {
    two_communities(|w| ProcessKind::Poisson { rate: 0.05 * w }, 1000.0, seed)
}

/// Hawkes preset: in-community pairs with `mu = 0.02 * weight`,
/// `alpha = 0.8`, `beta = 1.0` over `[0, 1000]`.
pub fn hawkes_preset(seed: u64) -> GroundTruthSpec {
    two_communities(|w| ProcessKind::Hawkes { mu: 0.02 * w, alpha: 0.8, beta: 1.0 }, 1000.0, seed)
}
