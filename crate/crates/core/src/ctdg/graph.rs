use std::collections::{HashSet, VecDeque};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Event, EventStream, NodeId};

#[derive(Clone, Copy, Debug, PartialEq)]
struct Incidence {
    neighbor: NodeId,
    time: f64,
    event: usize,
}

/// Per-node, time-sorted incidence lists over an [`EventStream`].
///
/// Self-loops appear once in their node's list; every other event appears
/// in both endpoints' lists.
#[derive(Clone, Debug)]
pub struct TemporalGraph {
    events: Vec<Event>,
    adjacency: Vec<Vec<Incidence>>,
    feature_dim: usize,
}

/// One sampled temporal neighbor.
#[derive(Clone, Debug, PartialEq)]
pub struct Neighbor {
    /// The node this neighbor was expanded from.
    pub anchor: NodeId,
    pub node: NodeId,
    /// Index of the connecting event in the graph's event list.
    pub event: usize,
    pub time: f64,
    /// Query time minus event time; always positive.
    pub dt: f64,
}

/// How up to `fanout` prior events are chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum NeighborSampler {
    /// The `fanout` most recent events.
    #[default]
    MostRecent,
    /// Uniform without replacement, seeded per `(seed, node, query time)`.
    Uniform { seed: u64 },
}

/// Layered neighborhood: `layers[k]` holds hop `k + 1`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NeighborhoodSample {
    pub layers: Vec<Vec<Neighbor>>,
}

impl TemporalGraph {
    pub fn new(stream: &EventStream) -> Self {
        let mut adjacency = vec![Vec::new(); stream.node_count()];
        for (i, e) in stream.events().iter().enumerate() {
            adjacency[e.source].push(Incidence { neighbor: e.dest, time: e.time, event: i });
            if e.dest != e.source {
                adjacency[e.dest].push(Incidence { neighbor: e.source, time: e.time, event: i });
            }
        }
        Self { events: stream.events().to_vec(), adjacency, feature_dim: stream.feature_dim() }
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn event(&self, idx: usize) -> &Event {
        &self.events[idx]
    }

    pub fn degree(&self, node: NodeId) -> usize {
        self.adjacency[node].len()
    }

    fn prior(&self, node: NodeId, before: f64) -> &[Incidence] {
        let list = &self.adjacency[node];
        &list[..list.partition_point(|inc| inc.time < before)]
    }

    /// Up to `fanout` events incident to `node` strictly before `t_src`.
    /// Most-recent sampling returns them newest first.
    pub fn sample_prior(&self, node: NodeId, t_src: f64, fanout: usize, sampler: NeighborSampler) -> Vec<Neighbor> {
        let prior = self.prior(node, t_src);
        let to_neighbor = |inc: &Incidence| Neighbor {
            anchor: node,
            node: inc.neighbor,
            event: inc.event,
            time: inc.time,
            dt: t_src - inc.time,
        };
        match sampler {
            NeighborSampler::MostRecent => prior.iter().rev().take(fanout).map(to_neighbor).collect(),
            NeighborSampler::Uniform { seed } => {
                if prior.len() <= fanout {
                    return prior.iter().rev().map(to_neighbor).collect();
                }
                let mix = seed ^ (node as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ t_src.to_bits().rotate_left(17);
                let mut rng = ChaCha8Rng::seed_from_u64(mix);
                let mut picks = sample(&mut rng, prior.len(), fanout).into_vec();
                picks.sort_unstable_by(|a, b| b.cmp(a));
                picks.into_iter().map(|i| to_neighbor(&prior[i])).collect()
            }
        }
    }

    /// Nodes within `hops` of each other in the static projection of events
    /// strictly before `before`; returns hop distances from `start` (capped).
    pub fn bfs_within(&self, start: NodeId, hops: usize, before: f64) -> Vec<(NodeId, usize)> {
        let mut seen = HashSet::from([start]);
        let mut out = vec![(start, 0)];
        let mut queue = VecDeque::from([(start, 0usize)]);
        while let Some((node, d)) = queue.pop_front() {
            if d == hops {
                continue;
            }
            for inc in self.prior(node, before) {
                if seen.insert(inc.neighbor) {
                    out.push((inc.neighbor, d + 1));
                    queue.push_back((inc.neighbor, d + 1));
                }
            }
        }
        out
    }
}

/// Samples a `hops`-layer neighborhood of `node` where every layer is bounded
/// by the original query time `t_src` (not by the parent event's time).
/// Layer `k` expands every occurrence in layer `k - 1`.
pub fn temporal_neighbors(
    graph: &TemporalGraph,
    node: NodeId,
    t_src: f64,
    hops: usize,
    fanout: usize,
    sampler: NeighborSampler,
) -> NeighborhoodSample {
    let mut layers: Vec<Vec<Neighbor>> = Vec::with_capacity(hops);
    let mut frontier = vec![node];
    for _ in 0..hops {
        let layer: Vec<Neighbor> =
            frontier.iter().flat_map(|&a| graph.sample_prior(a, t_src, fanout, sampler)).collect();
        frontier = layer.iter().map(|n| n.node).collect();
        layers.push(layer);
    }
    NeighborhoodSample { layers }
}
