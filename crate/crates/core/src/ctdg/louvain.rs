//! Louvain modularity maximization on the count-weighted static projection
//! of an event stream.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{EventStream, NodeId};
use crate::error::{Error, Result};

const GAIN_EPS: f64 = 1e-12;

/// Undirected weighted graph with explicit self-loop weights.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedGraph {
    neighbors: Vec<BTreeMap<usize, f64>>,
    self_loops: Vec<f64>,
}

impl WeightedGraph {
    pub fn new(n: usize) -> Self {
        Self { neighbors: vec![BTreeMap::new(); n], self_loops: vec![0.0; n] }
    }

    /// Edge weight = number of events between the pair, either direction.
    pub fn from_stream(stream: &EventStream) -> Self {
        let mut g = Self::new(stream.node_count());
        for e in stream.events() {
            g.add_edge(e.source, e.dest, 1.0);
        }
        g
    }

    pub fn add_edge(&mut self, a: usize, b: usize, w: f64) {
        if a == b {
            self.self_loops[a] += w;
        } else {
            *self.neighbors[a].entry(b).or_insert(0.0) += w;
            *self.neighbors[b].entry(a).or_insert(0.0) += w;
        }
    }

    pub fn node_count(&self) -> usize {
        self.self_loops.len()
    }

    /// Weighted degree; a self-loop counts twice.
    pub fn degree(&self, i: usize) -> f64 {
        self.neighbors[i].values().sum::<f64>() + 2.0 * self.self_loops[i]
    }

    /// Twice the total edge weight.
    pub fn two_m(&self) -> f64 {
        (0..self.node_count()).map(|i| self.degree(i)).sum()
    }

    fn aggregate(&self, comm: &[usize], count: usize) -> Self {
        let mut g = Self::new(count);
        for i in 0..self.node_count() {
            g.self_loops[comm[i]] += self.self_loops[i];
            for (&j, &w) in &self.neighbors[i] {
                if i < j {
                    g.add_edge(comm[i], comm[j], w);
                }
            }
        }
        g
    }
}

/// Partition of the node universe into non-empty communities.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommunityAssignment {
    pub community_of: Vec<usize>,
    pub communities: Vec<Vec<NodeId>>,
}

impl CommunityAssignment {
    /// Builds from a label per node; communities are renumbered by their
    /// smallest member.
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut remap: BTreeMap<usize, usize> = BTreeMap::new();
        let mut community_of = Vec::with_capacity(labels.len());
        let mut communities: Vec<Vec<NodeId>> = Vec::new();
        for (node, &l) in labels.iter().enumerate() {
            let next = remap.len();
            let c = *remap.entry(l).or_insert(next);
            if c == communities.len() {
                communities.push(Vec::new());
            }
            communities[c].push(node);
            community_of.push(c);
        }
        Self { community_of, communities }
    }

    pub fn len(&self) -> usize {
        self.communities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.communities.is_empty()
    }

    /// Membership mask of community `c` over all nodes.
    pub fn mask(&self, c: usize) -> Vec<bool> {
        let mut m = vec![false; self.community_of.len()];
        for &n in &self.communities[c] {
            m[n] = true;
        }
        m
    }

    /// CSV `node,community` using external ids.
    pub fn to_csv(&self, stream: &EventStream) -> String {
        let mut out = String::from("node,community\n");
        for (node, &c) in self.community_of.iter().enumerate() {
            let _ = writeln!(out, "{},{}", stream.original_id(node), c);
        }
        out
    }

    /// Parses `node,community` CSV against a stream's id mapping. Nodes of
    /// the stream missing from the file become singleton communities.
    pub fn from_csv(text: &str, stream: &EventStream) -> Result<Self> {
        let mut labels: Vec<Option<usize>> = vec![None; stream.node_count()];
        for (idx, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |reason: String| Error::MalformedRow { line: idx + 1, reason };
            let (n, c) = line.split_once(',').ok_or_else(|| bad("expected node,community".into()))?;
            let n: u64 = n.trim().parse().map_err(|_| bad(format!("bad node {n:?}")))?;
            let c: usize = c.trim().parse().map_err(|_| bad(format!("bad community {c:?}")))?;
            if let Some(node) = stream.compact_id(n) {
                labels[node] = Some(c);
            }
        }
        let base = labels.iter().flatten().max().map_or(0, |m| m + 1);
        let filled: Vec<usize> = labels.iter().enumerate().map(|(i, l)| l.unwrap_or(base + i)).collect();
        Ok(Self::from_labels(&filled))
    }
}

/// Modularity of a labelling at resolution 1.
pub fn modularity(graph: &WeightedGraph, labels: &[usize]) -> f64 {
    let two_m = graph.two_m();
    if two_m == 0.0 {
        return 0.0;
    }
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut internal = vec![0.0; k];
    let mut total = vec![0.0; k];
    for i in 0..graph.node_count() {
        let c = labels[i];
        total[c] += graph.degree(i);
        internal[c] += 2.0 * graph.self_loops[i];
        for (&j, &w) in &graph.neighbors[i] {
            if labels[j] == c {
                internal[c] += w;
            }
        }
    }
    internal.iter().zip(&total).map(|(&a, &t)| a / two_m - (t / two_m).powi(2)).sum()
}

/// One local-moving phase. Nodes are visited in ascending id; a node moves
/// only for a gain strictly above staying put (plus `GAIN_EPS`), and among
/// equally good targets the lowest community id wins. Returns whether any
/// node moved.
fn local_moves(graph: &WeightedGraph, comm: &mut [usize]) -> bool {
    let n = graph.node_count();
    let two_m = graph.two_m();
    if two_m == 0.0 {
        return false;
    }
    let degree: Vec<f64> = (0..n).map(|i| graph.degree(i)).collect();
    let mut total = vec![0.0; n];
    for i in 0..n {
        total[comm[i]] += degree[i];
    }
    let mut moved_any = false;
    loop {
        let mut moved = false;
        for i in 0..n {
            let own = comm[i];
            total[own] -= degree[i];
            let mut links: BTreeMap<usize, f64> = BTreeMap::new();
            links.insert(own, 0.0);
            for (&j, &w) in &graph.neighbors[i] {
                *links.entry(comm[j]).or_insert(0.0) += w;
            }
            let gain = |c: usize, k_in: f64| k_in - total[c] * degree[i] / two_m;
            let mut best = own;
            let mut best_gain = gain(own, links[&own]);
            for (&c, &k_in) in &links {
                let g = gain(c, k_in);
                if g > best_gain + GAIN_EPS {
                    best = c;
                    best_gain = g;
                }
            }
            total[best] += degree[i];
            if best != own {
                comm[i] = best;
                moved = true;
                moved_any = true;
            }
        }
        if !moved {
            return moved_any;
        }
    }
}

fn compact(labels: &mut [usize]) -> usize {
    let mut remap: BTreeMap<usize, usize> = BTreeMap::new();
    for l in labels.iter_mut() {
        let next = remap.len();
        *l = *remap.entry(*l).or_insert(next);
    }
    remap.len()
}

/// Louvain on a weighted graph; alternates local moving and aggregation
/// until no move improves modularity, then re-runs node-level moves on the
/// original graph so the final partition is locally optimal there too.
pub fn louvain(graph: &WeightedGraph) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..graph.node_count()).collect();
    loop {
        let mut member = labels.clone();
        let count = compact(&mut member);
        let mut level_graph = graph.aggregate(&member, count);
        loop {
            let mut comm: Vec<usize> = (0..level_graph.node_count()).collect();
            if !local_moves(&level_graph, &mut comm) {
                break;
            }
            let k = compact(&mut comm);
            for m in member.iter_mut() {
                *m = comm[*m];
            }
            level_graph = level_graph.aggregate(&comm, k);
        }
        labels = member;
        if !local_moves(graph, &mut labels) {
            compact(&mut labels);
            return labels;
        }
    }
}

/// Communities of the count-weighted static projection of `stream`.
pub fn detect_communities_louvain(stream: &EventStream) -> CommunityAssignment {
    CommunityAssignment::from_labels(&louvain(&WeightedGraph::from_stream(stream)))
}
