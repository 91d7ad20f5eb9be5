//! Perplexity of the entity predictions and normalized time MAE, computed
//! per community and averaged.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ctdg::TemporalGraph;
use crate::error::Result;
use crate::forecaster::{ForecastStep, OpCounter};
use crate::model::{Cep3, PROB_FLOOR};
use crate::scalar::Real;
use crate::tensor::Tape;
use crate::training::Window;

/// Anything that scores and forecasts community windows.
pub trait EventModel: Sync {
    fn name(&self) -> String;

    /// `(p(u_i), p(v_i | u_i))` at each ground-truth step, given the true
    /// history up to that step.
    fn entity_probabilities(&self, graph: &TemporalGraph, window: &Window) -> Result<Vec<(f64, f64)>>;

    /// Greedy free-running forecast of `k` events after the horizon.
    fn forecast(&self, graph: &TemporalGraph, window: &Window, k: usize) -> Result<Vec<ForecastStep>>;
}

impl<T: Real> EventModel for Cep3<T> {
    fn name(&self) -> String {
        let mut name = String::from("cep3");
        if self.config.head == crate::forecaster::HeadKind::Joint {
            name.push_str("-joint");
        }
        if self.config.update_scope == crate::ar_update::UpdateScope::IncidentOnly {
            name.push_str("-incident");
        }
        name
    }

    fn entity_probabilities(&self, graph: &TemporalGraph, window: &Window) -> Result<Vec<(f64, f64)>> {
        let mut tape = Tape::new(&self.params);
        let tf = self.teacher_forced(&mut tape, graph, window)?;
        Ok(tf.steps.iter().map(|s| (s.p_source, s.p_dest)).collect())
    }

    fn forecast(&self, graph: &TemporalGraph, window: &Window, k: usize) -> Result<Vec<ForecastStep>> {
        Cep3::forecast::<ChaCha8Rng>(self, graph, &window.members, window.horizon, k, None, &mut OpCounter::default())
    }
}

/// `exp(-mean(ln p_u + ln p_v))` with each probability floored; also returns
/// how many probabilities hit the floor.
pub fn perplexity(probs: &[(f64, f64)]) -> (f64, usize) {
    if probs.is_empty() {
        return (f64::NAN, 0);
    }
    let mut floored = 0;
    let mut sum = 0.0;
    for &(pu, pv) in probs {
        for p in [pu, pv] {
            if p < PROB_FLOOR {
                floored += 1;
            }
            sum += p.max(PROB_FLOOR).ln();
        }
    }
    ((-sum / probs.len() as f64).exp(), floored)
}

/// `sum |t_i - min(t_K, t_hat_i)| / (K (t_K - t_0))`; `None` when the window
/// is degenerate (`t_K == t_0`), empty, or the lengths differ.
pub fn mae(truth: &[f64], predicted: &[f64], t0: f64) -> Option<f64> {
    let k = truth.len();
    if k == 0 || predicted.len() != k {
        return None;
    }
    let t_k = truth[k - 1];
    let span = t_k - t0;
    if !(span > 0.0) {
        return None;
    }
    let err: f64 = truth.iter().zip(predicted).map(|(&t, &p)| (t - t_k.min(p)).abs()).sum();
    Some(err / (k as f64 * span))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommunityMetrics {
    pub pp: f64,
    pub mae: Option<f64>,
    /// Ground-truth steps scored.
    pub k_effective: usize,
    pub windows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub model: String,
    pub split: String,
    pub seed: u64,
    pub per_community: BTreeMap<usize, CommunityMetrics>,
    pub mean_pp: f64,
    /// Over communities with a defined MAE.
    pub mean_mae: Option<f64>,
    /// Probabilities that fell below the floor.
    pub floor_hits: usize,
}

impl MetricReport {
    /// Assembles averages from per-community values.
    pub fn from_communities(model: String, split: String, seed: u64, per_community: BTreeMap<usize, CommunityMetrics>, floor_hits: usize) -> Self {
        let pps: Vec<f64> = per_community.values().map(|m| m.pp).collect();
        let maes: Vec<f64> = per_community.values().filter_map(|m| m.mae).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        Self {
            model,
            split,
            seed,
            mean_pp: if pps.is_empty() { f64::NAN } else { mean(&pps) },
            mean_mae: (!maes.is_empty()).then(|| mean(&maes)),
            per_community,
            floor_hits,
        }
    }

    /// CSV `community,pp,mae,k_effective,windows` with a final `mean` row.
    pub fn to_csv(&self) -> String {
        let fmt = |m: Option<f64>| m.map_or(String::new(), |v| v.to_string());
        let mut out = String::from("community,pp,mae,k_effective,windows\n");
        for (c, m) in &self.per_community {
            let _ = writeln!(out, "{c},{},{},{},{}", m.pp, fmt(m.mae), m.k_effective, m.windows);
        }
        let k: usize = self.per_community.values().map(|m| m.k_effective).sum();
        let w: usize = self.per_community.values().map(|m| m.windows).sum();
        let _ = writeln!(out, "mean,{},{},{k},{w}", self.mean_pp, fmt(self.mean_mae));
        out
    }
}

/// Scores every window: PP pools each community's teacher-forced step
/// probabilities; MAE averages the per-window values of a greedy rollout
/// over windows with at least two events and a positive span.
pub fn evaluate_model(model: &dyn EventModel, graph: &TemporalGraph, windows: &[Window], split: &str, seed: u64) -> Result<MetricReport> {
    let mut by_community: BTreeMap<usize, Vec<&Window>> = BTreeMap::new();
    for w in windows.iter().filter(|w| !w.is_empty()) {
        by_community.entry(w.community).or_default().push(w);
    }
    let scored: Vec<(usize, CommunityMetrics, usize)> = by_community
        .into_par_iter()
        .map(|(c, ws)| {
            let mut probs = Vec::new();
            let mut maes = Vec::new();
            for w in &ws {
                probs.extend(model.entity_probabilities(graph, w)?);
                if w.len() >= 2 {
                    let steps = model.forecast(graph, w, w.len())?;
                    let truth: Vec<f64> = w.events.iter().map(|e| e.time).collect();
                    let pred: Vec<f64> = steps.iter().map(|s| s.t_abs).collect();
                    if let Some(m) = mae(&truth, &pred, w.horizon) {
                        maes.push(m);
                    }
                }
            }
            let (pp, floored) = perplexity(&probs);
            let mae = (!maes.is_empty()).then(|| maes.iter().sum::<f64>() / maes.len() as f64);
            Ok((c, CommunityMetrics { pp, mae, k_effective: probs.len(), windows: ws.len() }, floored))
        })
        .collect::<Result<Vec<_>>>()?;
    let floor_hits = scored.iter().map(|s| s.2).sum();
    let per_community = scored.into_iter().map(|(c, m, _)| (c, m)).collect();
    Ok(MetricReport::from_communities(model.name(), split.to_string(), seed, per_community, floor_hits))
}
