use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{position, split_joint, unseen_pair_rate};
use crate::ctdg::{CommunityAssignment, Event, EventStream, NodeId, TemporalGraph};
use crate::error::{Error, Result};
use crate::evaluation::EventModel;
use crate::forecaster::{argmax, ForecastStep};
use crate::training::Window;

/// Constant rate per ordered member pair.
#[derive(Clone, Debug, PartialEq)]
pub struct PoissonModel {
    pub members: Vec<NodeId>,
    /// Flattened `u * n + v` over member positions.
    pub rates: Vec<f64>,
    pub observed: Vec<bool>,
}

/// Maximum-likelihood rates `count / span`; unseen pairs get the smoothed
/// default rate.
pub fn fit_poisson(events: &[Event], members: &[NodeId], span: f64) -> Result<PoissonModel> {
    if !(span > 0.0) {
        return Err(Error::InvalidArgument(format!("training span must be positive, got {span}")));
    }
    let n = members.len();
    let mut counts = vec![0usize; n * n];
    for e in events {
        counts[position(members, e.source)? * n + position(members, e.dest)?] += 1;
    }
    let default = unseen_pair_rate(n, span);
    Ok(PoissonModel {
        members: members.to_vec(),
        rates: counts.iter().map(|&c| if c > 0 { c as f64 / span } else { default }).collect(),
        observed: counts.iter().map(|&c| c > 0).collect(),
    })
}

impl PoissonModel {
    pub fn total_rate(&self) -> f64 {
        self.rates.iter().sum()
    }

    pub fn rate(&self, source: NodeId, dest: NodeId) -> Result<f64> {
        let n = self.members.len();
        Ok(self.rates[position(&self.members, source)? * n + position(&self.members, dest)?])
    }

    fn joint(&self) -> Vec<f64> {
        let total = self.total_rate();
        self.rates.iter().map(|r| r / total).collect()
    }
}

/// One Poisson model per community.
#[derive(Clone, Debug, Default)]
pub struct PoissonBaseline {
    pub models: BTreeMap<usize, PoissonModel>,
}

impl PoissonBaseline {
    pub fn fit(train: &EventStream, communities: &CommunityAssignment, span: f64) -> Result<Self> {
        let mut models = BTreeMap::new();
        for (c, members) in communities.communities.iter().enumerate() {
            let restricted = train.restrict(&communities.mask(c));
            models.insert(c, fit_poisson(restricted.events(), members, span)?);
        }
        Ok(Self { models })
    }

    fn model(&self, community: usize) -> Result<&PoissonModel> {
        self.models.get(&community).ok_or_else(|| Error::InvalidArgument(format!("no fitted model for community {community}")))
    }

    /// CSV `u,v,lambda` over every ordered member pair of every community.
    pub fn to_csv(&self, label: impl Fn(NodeId) -> u64) -> String {
        let mut out = String::from("u,v,lambda\n");
        for m in self.models.values() {
            let n = m.members.len();
            for (k, r) in m.rates.iter().enumerate() {
                let _ = writeln!(out, "{},{},{}", label(m.members[k / n]), label(m.members[k % n]), r);
            }
        }
        out
    }
}

impl EventModel for PoissonBaseline {
    fn name(&self) -> String {
        "poisson".into()
    }

    fn entity_probabilities(&self, _: &TemporalGraph, window: &Window) -> Result<Vec<(f64, f64)>> {
        let m = self.model(window.community)?;
        let n = m.members.len();
        let joint = m.joint();
        window
            .events
            .iter()
            .map(|e| {
                let (u, v) = (position(&m.members, e.source)?, position(&m.members, e.dest)?);
                let pu: f64 = joint[u * n..(u + 1) * n].iter().sum();
                Ok((pu, joint[u * n + v] / pu))
            })
            .collect()
    }

    fn forecast(&self, _: &TemporalGraph, window: &Window, k: usize) -> Result<Vec<ForecastStep>> {
        let m = self.model(window.community)?;
        let n = m.members.len();
        let joint = m.joint();
        let best = argmax(&joint);
        let (p_source, p_dest) = split_joint(&joint, n, best / n);
        let lambda_total = m.total_rate();
        let dt = 1.0 / lambda_total;
        Ok((1..=k)
            .map(|i| ForecastStep {
                dt,
                t_abs: window.horizon + i as f64 * dt,
                source: m.members[best / n],
                dest: m.members[best % n],
                lambda_total,
                p_source: p_source.clone(),
                p_dest: p_dest.clone(),
            })
            .collect())
    }
}
