//! Comparison models: per-pair Poisson and Hawkes processes, RMTPP with a
//! flat or factorized marker head, and a GRU seq2seq with a Gaussian time
//! head. All implement [`EventModel`](crate::evaluation::EventModel).

mod gru_gaussian;
mod hawkes;
mod neural;
mod poisson;
mod rmtpp;

pub use gru_gaussian::{GruGaussian, GruGaussianModel};
pub use hawkes::{fit_hawkes, fit_hawkes_pair, hawkes_pair_nll, HawkesBaseline, HawkesFit, HawkesModel, HAWKES_BETA};
pub use neural::{CommunityNet, LocalEvent, MarkerHead, NeuralBaseline, NeuralConfig, SequenceNet};
pub use poisson::{fit_poisson, PoissonBaseline, PoissonModel};
pub use rmtpp::{Rmtpp, RmtppModel};

use crate::ctdg::{Event, NodeId, TemporalGraph};
use crate::error::{Error, Result};
use crate::stats::simpson;

/// Additive smoothing rate for a pair never seen in training.
pub fn unseen_pair_rate(community_size: usize, span: f64) -> f64 {
    0.5 / ((community_size * community_size) as f64 * span)
}

/// Up to `limit` most recent community events strictly before `horizon`,
/// oldest first, keeping only those with `keep(event)`.
pub fn community_history(graph: &TemporalGraph, members: &[NodeId], horizon: f64, limit: usize, keep: impl Fn(&Event) -> bool) -> Vec<Event> {
    let events = graph.events();
    let end = events.partition_point(|e| e.time < horizon);
    let mut out: Vec<Event> = events[..end]
        .iter()
        .rev()
        .filter(|e| members.binary_search(&e.source).is_ok() && members.binary_search(&e.dest).is_ok() && keep(e))
        .take(limit)
        .cloned()
        .collect();
    out.reverse();
    out
}

/// Splits a joint over `n x n` ordered pairs (flattened `u * n + v`) into the
/// source marginal and the destination conditional of source `u`.
pub fn split_joint(joint: &[f64], n: usize, u: usize) -> (Vec<f64>, Vec<f64>) {
    let p_source: Vec<f64> = (0..n).map(|a| joint[a * n..(a + 1) * n].iter().sum()).collect();
    let p_dest = joint[u * n..(u + 1) * n].iter().map(|p| p / p_source[u]).collect();
    (p_source, p_dest)
}

/// `E[T] = int_0^inf exp(-Lambda(s)) ds` for a cumulative hazard that is
/// smooth on `[0, knee]` and equal to `tail_rate * s + tail_offset` beyond.
pub fn expected_wait(cumulative: impl Fn(f64) -> f64, knee: f64, tail_rate: f64, tail_offset: f64) -> Result<f64> {
    if !(tail_rate > 0.0) {
        return Err(Error::InvalidArgument("process has no positive baseline rate".into()));
    }
    let head = simpson(|s| (-cumulative(s)).exp(), 0.0, knee, 4000);
    let tail = (-(tail_rate * knee + tail_offset)).exp() / tail_rate;
    Ok(head + tail)
}

fn position(members: &[NodeId], node: NodeId) -> Result<usize> {
    members.binary_search(&node).map_err(|_| Error::NotInCommunity { node })
}
