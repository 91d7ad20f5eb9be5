use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use super::{community_history, expected_wait, position, split_joint, unseen_pair_rate};
use crate::ctdg::{CommunityAssignment, Event, EventStream, NodeId, TemporalGraph};
use crate::error::{Error, Result};
use crate::evaluation::EventModel;
use crate::forecaster::{argmax, ForecastStep};
use crate::training::Window;

/// Decay of the exponential kernel `alpha * beta * exp(-beta * s)`.
pub const HAWKES_BETA: f64 = 1.0;
const MIN_MU: f64 = 1e-12;
const MAX_ALPHA: f64 = 1.0 - 1e-6;
const MAX_ITERS: usize = 200;
/// Excitation older than this many decay lengths is dropped.
const MEMORY: f64 = 50.0 / HAWKES_BETA;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HawkesFit {
    pub mu: f64,
    pub alpha: f64,
    pub nll: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Kernel sums `R_i = sum_{j<i} beta exp(-beta (t_i - t_j))`.
fn excitations(times: &[f64]) -> Vec<f64> {
    let mut r = Vec::with_capacity(times.len());
    let mut acc = 0.0;
    for (i, &t) in times.iter().enumerate() {
        if i > 0 {
            acc = (-HAWKES_BETA * (t - times[i - 1])).exp() * (acc + HAWKES_BETA);
        }
        r.push(acc);
    }
    r
}

fn compensator_mass(times: &[f64], t1: f64) -> f64 {
    times.iter().map(|&t| 1.0 - (-HAWKES_BETA * (t1 - t)).exp()).sum()
}

/// Negative log-likelihood of sorted `times` on `[t0, t1]`.
pub fn hawkes_pair_nll(times: &[f64], t0: f64, t1: f64, mu: f64, alpha: f64) -> f64 {
    let r = excitations(times);
    let log_sum: f64 = r.iter().map(|ri| (mu + alpha * ri).ln()).sum();
    -log_sum + mu * (t1 - t0) + alpha * compensator_mass(times, t1)
}

struct Objective {
    r: Vec<f64>,
    span: f64,
    mass: f64,
}

impl Objective {
    fn value(&self, mu: f64, alpha: f64) -> f64 {
        let mut v = mu * self.span + alpha * self.mass;
        for ri in &self.r {
            let l = mu + alpha * ri;
            if l <= 0.0 {
                return f64::INFINITY;
            }
            v -= l.ln();
        }
        v
    }

    /// Gradient and Hessian in `(mu, alpha)`.
    fn derivatives(&self, mu: f64, alpha: f64) -> ([f64; 2], [f64; 3]) {
        let mut g = [self.span, self.mass];
        let mut h = [0.0; 3];
        for ri in &self.r {
            let l = mu + alpha * ri;
            g[0] -= 1.0 / l;
            g[1] -= ri / l;
            let l2 = l * l;
            h[0] += 1.0 / l2;
            h[1] += ri / l2;
            h[2] += ri * ri / l2;
        }
        (g, h)
    }
}

fn project(mu: f64, alpha: f64, alpha_fixed: Option<f64>) -> (f64, f64) {
    (mu.max(MIN_MU), alpha_fixed.unwrap_or_else(|| alpha.clamp(0.0, MAX_ALPHA)))
}

/// Maximum-likelihood `(mu, alpha)` by projected Newton steps with
/// backtracking, started from the Poisson solution so the result never has
/// a worse likelihood than it. `alpha_fixed` pins `alpha`.
pub fn fit_hawkes_pair(times: &[f64], t0: f64, t1: f64, alpha_fixed: Option<f64>) -> Result<HawkesFit> {
    let span = t1 - t0;
    if !(span > 0.0) {
        return Err(Error::InvalidArgument(format!("fit interval must be positive, got [{t0}, {t1}]")));
    }
    if let Some(a) = alpha_fixed {
        if !(0.0..=MAX_ALPHA).contains(&a) {
            return Err(Error::UnstableHawkes { alpha: a, beta: 1.0 });
        }
    }
    let obj = Objective { r: excitations(times), span, mass: compensator_mass(times, t1) };
    let (mut mu, mut alpha) = project(times.len() as f64 / span, 0.0, alpha_fixed);
    let mut nll = obj.value(mu, alpha);
    let mut iterations = 0;
    let mut converged = times.is_empty() && alpha_fixed.unwrap_or(0.0) == 0.0;
    while !converged && iterations < MAX_ITERS {
        iterations += 1;
        let (g, h) = obj.derivatives(mu, alpha);
        let det = h[0] * h[2] - h[1] * h[1];
        let newton = if alpha_fixed.is_none() && det > 1e-12 * (h[0] * h[2]).max(1e-300) {
            [-(h[2] * g[0] - h[1] * g[1]) / det, -(h[0] * g[1] - h[1] * g[0]) / det]
        } else {
            [-g[0] / h[0].max(1e-300), 0.0]
        };
        let mut accepted = None;
        for direction in [newton, [-g[0], -g[1]]] {
            let mut step = 1.0;
            while step > 1e-12 {
                let (m, a) = project(mu + step * direction[0], alpha + step * direction[1], alpha_fixed);
                let v = obj.value(m, a);
                if v < nll {
                    accepted = Some((m, a, v));
                    break;
                }
                step *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
        }
        match accepted {
            Some((m, a, v)) => {
                let gain = nll - v;
                let moved = (m - mu).abs() + (a - alpha).abs();
                (mu, alpha, nll) = (m, a, v);
                converged = gain <= 1e-12 * (1.0 + nll.abs()) || moved <= 1e-14;
            }
            None => converged = true,
        }
    }
    Ok(HawkesFit { mu, alpha, nll, iterations, converged })
}

/// Independent Hawkes processes, one per ordered member pair.
#[derive(Clone, Debug, PartialEq)]
pub struct HawkesModel {
    pub members: Vec<NodeId>,
    /// Flattened `u * n + v` over member positions.
    pub fits: Vec<HawkesFit>,
}

pub fn fit_hawkes(events: &[Event], members: &[NodeId], t0: f64, t1: f64) -> Result<HawkesModel> {
    let n = members.len();
    let mut times = vec![Vec::new(); n * n];
    for e in events {
        times[position(members, e.source)? * n + position(members, e.dest)?].push(e.time);
    }
    let default = unseen_pair_rate(n, t1 - t0);
    let fits = times
        .par_iter()
        .map(|ts| {
            if ts.is_empty() {
                Ok(HawkesFit { mu: default, alpha: 0.0, nll: default * (t1 - t0), iterations: 0, converged: true })
            } else {
                fit_hawkes_pair(ts, t0, t1, None)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HawkesModel { members: members.to_vec(), fits })
}

/// Per-pair excitation `sum beta exp(-beta (t - t_j))` carried forward in time.
struct Excitation {
    values: Vec<f64>,
    time: f64,
}

impl Excitation {
    fn new(n_pairs: usize, time: f64) -> Self {
        Self { values: vec![0.0; n_pairs], time }
    }

    fn advance(&mut self, t: f64) {
        let decay = (-HAWKES_BETA * (t - self.time)).exp();
        self.values.iter_mut().for_each(|v| *v *= decay);
        self.time = t;
    }

    fn bump(&mut self, pair: usize) {
        self.values[pair] += HAWKES_BETA;
    }
}

impl HawkesModel {
    fn intensities(&self, ex: &Excitation) -> Vec<f64> {
        self.fits.iter().zip(&ex.values).map(|(f, e)| f.mu + f.alpha * e).collect()
    }

    fn pair(&self, e: &Event) -> Result<usize> {
        Ok(position(&self.members, e.source)? * self.members.len() + position(&self.members, e.dest)?)
    }

    /// Excitation just after every community event strictly before `horizon`.
    fn state_at(&self, graph: &TemporalGraph, horizon: f64) -> Result<Excitation> {
        let history = community_history(graph, &self.members, horizon, usize::MAX, |e| e.time > horizon - MEMORY);
        let mut ex = Excitation::new(self.fits.len(), history.first().map_or(horizon, |e| e.time));
        for e in &history {
            ex.advance(e.time);
            ex.bump(self.pair(e)?);
        }
        Ok(ex)
    }
}

/// One Hawkes model per community.
#[derive(Clone, Debug, Default)]
pub struct HawkesBaseline {
    pub models: BTreeMap<usize, HawkesModel>,
}

impl HawkesBaseline {
    /// Fits every community on the events of `train`, observed over `[t0, t1]`.
    pub fn fit(train: &EventStream, communities: &CommunityAssignment, t0: f64, t1: f64) -> Result<Self> {
        let models = communities
            .communities
            .par_iter()
            .enumerate()
            .map(|(c, members)| Ok((c, fit_hawkes(train.restrict(&communities.mask(c)).events(), members, t0, t1)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        Ok(Self { models })
    }

    fn model(&self, community: usize) -> Result<&HawkesModel> {
        self.models.get(&community).ok_or_else(|| Error::InvalidArgument(format!("no fitted model for community {community}")))
    }

    /// CSV `u,v,mu,alpha` over every ordered member pair.
    pub fn to_csv(&self, label: impl Fn(NodeId) -> u64) -> String {
        let mut out = String::from("u,v,mu,alpha\n");
        for m in self.models.values() {
            let n = m.members.len();
            for (k, f) in m.fits.iter().enumerate() {
                let _ = writeln!(out, "{},{},{},{}", label(m.members[k / n]), label(m.members[k % n]), f.mu, f.alpha);
            }
        }
        out
    }

    pub fn converged(&self) -> bool {
        self.models.values().all(|m| m.fits.iter().all(|f| f.converged))
    }
}

impl EventModel for HawkesBaseline {
    fn name(&self) -> String {
        "hawkes".into()
    }

    fn entity_probabilities(&self, graph: &TemporalGraph, window: &Window) -> Result<Vec<(f64, f64)>> {
        let m = self.model(window.community)?;
        let n = m.members.len();
        let mut ex = m.state_at(graph, window.horizon)?;
        let mut pending: Vec<usize> = Vec::new();
        let mut out = Vec::with_capacity(window.len());
        for e in &window.events {
            if e.time > ex.time {
                ex.advance(e.time);
                pending.drain(..).for_each(|p| ex.bump(p));
            }
            let pair = m.pair(e)?;
            let rates = m.intensities(&ex);
            let total: f64 = rates.iter().sum();
            let u = pair / n;
            let source: f64 = rates[u * n..(u + 1) * n].iter().sum();
            out.push((source / total, rates[pair] / source));
            pending.push(pair);
        }
        Ok(out)
    }

    fn forecast(&self, graph: &TemporalGraph, window: &Window, k: usize) -> Result<Vec<ForecastStep>> {
        let m = self.model(window.community)?;
        let n = m.members.len();
        let mut ex = m.state_at(graph, window.horizon)?;
        ex.advance(window.horizon);
        let base: f64 = m.fits.iter().map(|f| f.mu).sum();
        let knee = 30.0 / HAWKES_BETA;
        let mut steps = Vec::with_capacity(k);
        for _ in 0..k {
            let excited: f64 = m.fits.iter().zip(&ex.values).map(|(f, e)| f.alpha * e).sum();
            let cumulative = |s: f64| base * s + excited * (1.0 - (-HAWKES_BETA * s).exp()) / HAWKES_BETA;
            let dt = expected_wait(cumulative, knee, base, excited / HAWKES_BETA)?;
            ex.advance(ex.time + dt);
            let rates = m.intensities(&ex);
            let lambda_total: f64 = rates.iter().sum();
            let joint: Vec<f64> = rates.iter().map(|r| r / lambda_total).collect();
            let best = argmax(&joint);
            let (p_source, p_dest) = split_joint(&joint, n, best / n);
            steps.push(ForecastStep {
                dt,
                t_abs: ex.time,
                source: m.members[best / n],
                dest: m.members[best % n],
                lambda_total,
                p_source,
                p_dest,
            });
            ex.bump(best);
        }
        Ok(steps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{simulate_process, ProcessKind, SimulationStats};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Brute-force likelihood straight from the definition.
    fn direct_nll(times: &[f64], t0: f64, t1: f64, mu: f64, alpha: f64) -> f64 {
        let mut v = mu * (t1 - t0);
        for (i, &t) in times.iter().enumerate() {
            let l: f64 = mu + times[..i].iter().map(|&s| alpha * HAWKES_BETA * (-HAWKES_BETA * (t - s)).exp()).sum::<f64>();
            v -= l.ln();
            v += alpha * (1.0 - (-HAWKES_BETA * (t1 - t)).exp());
        }
        v
    }

    #[test]
    fn recursion_matches_direct_sum() {
        let times = [0.3, 0.5, 1.9, 2.0, 4.4];
        for (mu, alpha) in [(0.4, 0.0), (0.2, 0.5), (1.1, 0.9)] {
            let a = hawkes_pair_nll(&times, 0.0, 6.0, mu, alpha);
            let b = direct_nll(&times, 0.0, 6.0, mu, alpha);
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn pinned_alpha_zero_gives_poisson_mle() {
        let times: Vec<f64> = (0..23).map(|i| i as f64 * 0.4).collect();
        let fit = fit_hawkes_pair(&times, 0.0, 10.0, Some(0.0)).unwrap();
        assert!((fit.mu - 2.3).abs() < 1e-9);
        assert!(fit.converged);
    }

    #[test]
    fn fit_is_a_grid_minimum_and_beats_poisson() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let process = ProcessKind::Hawkes { mu: 0.3, alpha: 0.6, beta: 1.0 };
        let times = simulate_process(process, 400.0, &mut rng, &mut SimulationStats::default());
        let fit = fit_hawkes_pair(&times, 0.0, 400.0, None).unwrap();
        assert!(fit.converged);
        let poisson = fit_hawkes_pair(&times, 0.0, 400.0, Some(0.0)).unwrap();
        assert!(fit.nll <= poisson.nll);
        for i in 1..60 {
            for j in 0..50 {
                let (mu, alpha) = (i as f64 * 0.01, j as f64 * 0.02);
                assert!(hawkes_pair_nll(&times, 0.0, 400.0, mu, alpha) >= fit.nll - 1e-9);
            }
        }
        assert!((fit.alpha - 0.6).abs() < 0.2 && (fit.mu - 0.3).abs() < 0.15, "{fit:?}");
    }

    #[test]
    fn alpha_stays_below_one() {
        // bursts that a near-critical process explains best
        let times: Vec<f64> = (0..200).map(|i| i as f64 * 0.05).collect();
        let fit = fit_hawkes_pair(&times, 0.0, 10.0, None).unwrap();
        assert!(fit.alpha <= MAX_ALPHA && fit.mu >= MIN_MU);
        assert!(fit_hawkes_pair(&times, 0.0, 10.0, Some(1.5)).is_err());
    }

    #[test]
    fn excitation_raises_repeat_pair_probability() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut stats = SimulationStats::default();
        let bursty = simulate_process(ProcessKind::Hawkes { mu: 0.2, alpha: 0.8, beta: 1.0 }, 80.0, &mut rng, &mut stats);
        let steady = simulate_process(ProcessKind::Poisson { rate: 1.0 }, 80.0, &mut rng, &mut stats);
        let mut events: Vec<Event> = bursty.iter().map(|&t| Event::new(0, 1, t)).collect();
        events.extend(steady.iter().map(|&t| Event::new(1, 0, t)));
        let stream = EventStream::new(events, 2).unwrap();
        let communities = CommunityAssignment::from_labels(&[0, 0]);
        let b = HawkesBaseline::fit(&stream, &communities, 0.0, 80.0).unwrap();
        assert!(b.converged());
        let graph = TemporalGraph::new(&stream);
        let w = Window { community: 0, members: vec![0, 1], horizon: 80.0, events: vec![Event::new(0, 1, 80.01), Event::new(0, 1, 80.02)] };
        let probs = b.entity_probabilities(&graph, &w).unwrap();
        assert!(b.models[&0].fits[1].alpha > 0.3);
        assert!(probs[1].0 > probs[0].0);
        let steps = b.forecast(&graph, &w, 4).unwrap();
        assert!(steps.windows(2).all(|s| s[1].t_abs > s[0].t_abs));
        assert!(steps.iter().all(|s| (s.p_source.iter().sum::<f64>() - 1.0).abs() < 1e-9));
        assert!(b.to_csv(|v| v as u64).starts_with("u,v,mu,alpha\n"));
    }

    #[test]
    fn expected_wait_matches_poisson_without_excitation() {
        let m = HawkesModel {
            members: vec![0],
            fits: vec![HawkesFit { mu: 0.25, alpha: 0.0, nll: 0.0, iterations: 0, converged: true }],
        };
        let b = HawkesBaseline { models: BTreeMap::from([(0, m)]) };
        let graph = TemporalGraph::new(&EventStream::new(vec![], 1).unwrap());
        let w = Window { community: 0, members: vec![0], horizon: 0.0, events: vec![] };
        let steps = b.forecast(&graph, &w, 2).unwrap();
        assert!((steps[0].dt - 4.0).abs() < 1e-6);
    }

    #[test]
    fn close_pair_is_more_likely_under_excitation() {
        use crate::synth::process_nll_quadrature;
        let process = ProcessKind::Hawkes { mu: 0.2, alpha: 0.5, beta: HAWKES_BETA };
        let (close, far) = ([0.0, 0.1], [0.0, 10.0]);
        let q_close = process_nll_quadrature(process, &close, 12.0, 20_000);
        let q_far = process_nll_quadrature(process, &far, 12.0, 20_000);
        assert!(q_close < q_far);
        assert!((hawkes_pair_nll(&close, 0.0, 12.0, 0.2, 0.5) - q_close).abs() < 1e-4);
        assert!((hawkes_pair_nll(&far, 0.0, 12.0, 0.2, 0.5) - q_far).abs() < 1e-4);
    }
}
