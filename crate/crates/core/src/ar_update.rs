//! Rollout graph and the message-passing GRU that folds each forecast event
//! back into the community's node states.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::ctdg::{NodeId, TemporalGraph};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::{Axis, GruCell, Mlp, ParameterSet, Tape, Tensor, Var};

/// Where a rollout edge came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Seeded from L-hop connectivity in the history.
    History,
    /// A ground-truth event appended under teacher forcing.
    Observed,
    /// A model forecast appended during free-running rollout.
    Predicted,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RolloutEdge {
    /// Member positions.
    pub a: usize,
    pub b: usize,
    pub time: Option<f64>,
    pub provenance: Provenance,
}

/// Undirected multigraph over a community's members.
#[derive(Clone, Debug)]
pub struct RolloutGraph {
    members: Vec<NodeId>,
    position: HashMap<NodeId, usize>,
    edges: Vec<RolloutEdge>,
    /// Neighbor positions per member, with multiplicity.
    adjacency: Vec<Vec<usize>>,
}

impl RolloutGraph {
    /// A graph with no edges.
    pub fn empty(members: &[NodeId]) -> Self {
        Self {
            members: members.to_vec(),
            position: members.iter().enumerate().map(|(i, &v)| (v, i)).collect(),
            edges: Vec::new(),
            adjacency: vec![Vec::new(); members.len()],
        }
    }

    /// Connects every pair of members within `hops` of each other in the
    /// static projection of events strictly before `before`.
    pub fn init(graph: &TemporalGraph, members: &[NodeId], hops: usize, before: f64) -> Self {
        let mut g = Self::empty(members);
        for (i, &a) in members.iter().enumerate() {
            let reach: HashMap<NodeId, usize> = graph.bfs_within(a, hops, before).into_iter().collect();
            for (j, b) in members.iter().enumerate().skip(i + 1) {
                if reach.contains_key(b) {
                    g.push(RolloutEdge { a: i, b: j, time: None, provenance: Provenance::History });
                }
            }
        }
        g
    }

    fn push(&mut self, edge: RolloutEdge) {
        self.adjacency[edge.a].push(edge.b);
        if edge.a != edge.b {
            self.adjacency[edge.b].push(edge.a);
        }
        self.edges.push(edge);
    }

    /// Appends one event; both endpoints must be members.
    pub fn apply_event(&mut self, source: NodeId, dest: NodeId, time: f64, provenance: Provenance) -> Result<()> {
        let a = *self.position.get(&source).ok_or(Error::NotInCommunity { node: source })?;
        let b = *self.position.get(&dest).ok_or(Error::NotInCommunity { node: dest })?;
        self.push(RolloutEdge { a, b, time: Some(time), provenance });
        Ok(())
    }

    pub fn members(&self) -> &[NodeId] {
        &self.members
    }

    pub fn position(&self, node: NodeId) -> Option<usize> {
        self.position.get(&node).copied()
    }

    pub fn edges(&self) -> &[RolloutEdge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, pos: usize) -> &[usize] {
        &self.adjacency[pos]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UpdateScope {
    /// Every member is recomputed.
    #[default]
    Full,
    /// Only the event's endpoints are recomputed.
    IncidentOnly,
}

/// `P` mean-aggregated message-passing layers followed by a GRU cell.
#[derive(Clone, Debug)]
pub struct UpdateNetwork {
    pub messages: Vec<Mlp>,
    pub gru: GruCell,
    pub state_dim: usize,
}

impl UpdateNetwork {
    pub fn new<T: Real>(params: &mut ParameterSet<T>, name: &str, state_dim: usize, time_dim: usize, layers: usize) -> Self {
        let messages = (0..layers)
            .map(|l| Mlp::new(params, &format!("{name}.msg{l}"), 2 * state_dim, state_dim, state_dim))
            .collect();
        let gru = GruCell::new(params, &format!("{name}.gru"), state_dim + time_dim, state_dim);
        Self { messages, gru, state_dim }
    }

    /// Mean of `msg([w_u | w_v])` over `u` in `N(v)`; zero for isolated `v`.
    fn message_layer<T: Real>(&self, tape: &mut Tape<'_, T>, mlp: &Mlp, graph: &RolloutGraph, w: Var) -> Result<Var> {
        let n = graph.members().len();
        let mut from = Vec::new();
        let mut to = Vec::new();
        for v in 0..n {
            for &u in graph.neighbors(v) {
                from.push(u);
                to.push(v);
            }
        }
        if from.is_empty() {
            return tape.constant(Tensor::zeros(n, self.state_dim));
        }
        let wu = tape.gather_rows(w, &from)?;
        let wv = tape.gather_rows(w, &to)?;
        let x = tape.concat(&[wu, wv], Axis::Cols)?;
        let msgs = mlp.forward(tape, x)?;
        let mut agg = Tensor::zeros(n, from.len());
        for (k, &v) in to.iter().enumerate() {
            let deg = graph.neighbors(v).len();
            agg.set(v, k, T::one() / T::lit(deg as f64));
        }
        let agg = tape.constant(agg)?;
        tape.matmul(agg, msgs)
    }

    /// Recomputes every member's state: `h' = GRU([w_P | phi], h)`.
    pub fn propagate<T: Real>(&self, tape: &mut Tape<'_, T>, graph: &RolloutGraph, h: Var, phi: Var) -> Result<Var> {
        let [n, d] = tape.shape(h);
        if n != graph.members().len() || d != self.state_dim {
            return Err(Error::Shape {
                op: "propagate_update",
                detail: format!("states {n}x{d} for {} members of width {}", graph.members().len(), self.state_dim),
            });
        }
        let mut w = h;
        for mlp in &self.messages {
            w = self.message_layer(tape, mlp, graph, w)?;
        }
        let phi_n = tape.repeat_rows(phi, n)?;
        let x = tape.concat(&[w, phi_n], Axis::Cols)?;
        self.gru.forward(tape, x, h)
    }

    /// Same update, but only rows `u` and `v` take the new value.
    pub fn propagate_incident<T: Real>(
        &self,
        tape: &mut Tape<'_, T>,
        graph: &RolloutGraph,
        h: Var,
        phi: Var,
        u: usize,
        v: usize,
    ) -> Result<Var> {
        let n = graph.members().len();
        let updated = self.propagate(tape, graph, h, phi)?;
        let both = tape.concat(&[h, updated], Axis::Rows)?;
        let pick: Vec<usize> = (0..n).map(|i| if i == u || i == v { n + i } else { i }).collect();
        tape.gather_rows(both, &pick)
    }

    /// Dispatches on `scope`; `u`, `v` are member positions of the event.
    #[allow(clippy::too_many_arguments)]
    pub fn update<T: Real>(
        &self,
        tape: &mut Tape<'_, T>,
        scope: UpdateScope,
        graph: &RolloutGraph,
        h: Var,
        phi: Var,
        u: usize,
        v: usize,
    ) -> Result<Var> {
        match scope {
            UpdateScope::Full => self.propagate(tape, graph, h, phi),
            UpdateScope::IncidentOnly => self.propagate_incident(tape, graph, h, phi, u, v),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctdg::{Event, EventStream};
    use crate::encoder::TimeEncoder;
    use crate::tensor::gradcheck;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn path_graph() -> TemporalGraph {
        TemporalGraph::new(&EventStream::new(vec![Event::new(0, 1, 1.0), Event::new(1, 2, 2.0)], 4).unwrap())
    }

    fn net(seed: u64) -> (ParameterSet<f64>, TimeEncoder, UpdateNetwork) {
        let mut p = ParameterSet::new(seed);
        let time = TimeEncoder::new(&mut p, "time", 3);
        let net = UpdateNetwork::new(&mut p, "upd", 4, 3, 1);
        (p, time, net)
    }

    fn states(n: usize, seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_vec(n, 4, (0..n * 4).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn init_respects_hop_bound() {
        let g = path_graph();
        assert_eq!(RolloutGraph::init(&g, &[0, 2], 2, 5.0).edge_count(), 1);
        assert_eq!(RolloutGraph::init(&g, &[0, 2], 1, 5.0).edge_count(), 0);
        assert_eq!(RolloutGraph::init(&g, &[0, 3], 2, 5.0).edge_count(), 0);
        // events at or after the bound are invisible
        assert_eq!(RolloutGraph::init(&g, &[0, 2], 2, 2.0).edge_count(), 0);
    }

    #[test]
    fn events_accumulate_as_multiset() {
        let mut r = RolloutGraph::empty(&[3, 5]);
        r.apply_event(3, 5, 1.0, Provenance::Observed).unwrap();
        r.apply_event(5, 3, 2.0, Provenance::Predicted).unwrap();
        assert_eq!(r.edge_count(), 2);
        assert_eq!(r.neighbors(0), &[1, 1]);
        assert!(matches!(r.apply_event(3, 9, 3.0, Provenance::Observed), Err(Error::NotInCommunity { node: 9 })));
        assert_eq!(r.edge_count(), 2);
    }

    #[test]
    fn zero_network_halves_states() {
        let (mut p, time, net) = net(1);
        p.fill_prefix("upd", 0.0);
        let mut r = RolloutGraph::empty(&[0, 1, 2]);
        r.apply_event(0, 1, 1.0, Provenance::Observed).unwrap();
        let h0 = states(3, 2);
        let mut t = Tape::new(&p);
        let h = t.constant(h0.clone()).unwrap();
        let phi = time.encode(&mut t, &[0.5]).unwrap();
        let out = net.propagate(&mut t, &r, h, phi).unwrap();
        for (a, b) in t.value(out).data().iter().zip(h0.data()) {
            assert!((a - 0.5 * b).abs() < 1e-15);
        }
    }

    #[test]
    fn isolated_member_ignores_others() {
        let (p, time, net) = net(3);
        let mut r = RolloutGraph::empty(&[0, 1, 2]);
        r.apply_event(0, 1, 1.0, Provenance::Observed).unwrap();
        let run = |h0: Tensor<f64>| {
            let mut t = Tape::new(&p);
            let h = t.constant(h0).unwrap();
            let phi = time.encode(&mut t, &[0.5]).unwrap();
            let out = net.propagate(&mut t, &r, h, phi).unwrap();
            t.value(out).row_slice(2).to_vec()
        };
        let mut a = states(3, 4);
        let b_row2 = run(a.clone());
        for c in 0..4 {
            a.set(0, c, 9.0);
            a.set(1, c, -9.0);
        }
        assert_eq!(run(a), b_row2);
    }

    #[test]
    fn incident_only_leaves_others_untouched() {
        let (p, time, net) = net(5);
        let mut r = RolloutGraph::empty(&[0, 1, 2, 3]);
        r.apply_event(1, 2, 1.0, Provenance::Observed).unwrap();
        r.apply_event(0, 3, 1.0, Provenance::Observed).unwrap();
        let h0 = states(4, 6);
        let mut t = Tape::new(&p);
        let h = t.constant(h0.clone()).unwrap();
        let phi = time.encode(&mut t, &[0.5]).unwrap();
        let out = net.propagate_incident(&mut t, &r, h, phi, 1, 2).unwrap();
        let v = t.value(out);
        assert_eq!(v.row_slice(0), h0.row_slice(0));
        assert_eq!(v.row_slice(3), h0.row_slice(3));
        assert_ne!(v.row_slice(1), h0.row_slice(1));
        assert_ne!(v.row_slice(2), h0.row_slice(2));
    }

    #[test]
    fn incident_only_equals_full_on_two_members() {
        let (p, time, net) = net(7);
        let mut r = RolloutGraph::empty(&[4, 8]);
        r.apply_event(4, 8, 1.0, Provenance::Observed).unwrap();
        let mut t = Tape::new(&p);
        let h = t.constant(states(2, 8)).unwrap();
        let phi = time.encode(&mut t, &[0.5]).unwrap();
        let a = net.propagate(&mut t, &r, h, phi).unwrap();
        let b = net.propagate_incident(&mut t, &r, h, phi, 0, 1).unwrap();
        assert_eq!(t.value(a), t.value(b));
    }

    #[test]
    fn neighbor_order_invariant() {
        let (p, time, net) = net(9);
        let mut r1 = RolloutGraph::empty(&[0, 1, 2]);
        let mut r2 = RolloutGraph::empty(&[0, 1, 2]);
        for (a, b) in [(0, 1), (0, 2), (0, 1)] {
            r1.apply_event(a, b, 1.0, Provenance::Observed).unwrap();
        }
        for (a, b) in [(0, 1), (0, 1), (2, 0)] {
            r2.apply_event(a, b, 1.0, Provenance::Observed).unwrap();
        }
        let run = |r: &RolloutGraph| {
            let mut t = Tape::new(&p);
            let h = t.constant(states(3, 10)).unwrap();
            let phi = time.encode(&mut t, &[0.5]).unwrap();
            let out = net.propagate(&mut t, r, h, phi).unwrap();
            t.value(out).clone()
        };
        let (a, b) = (run(&r1), run(&r2));
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn long_rollout_stays_finite() {
        let (p, time, net) = net(11);
        let members = [0, 1, 2, 3, 4];
        let mut r = RolloutGraph::empty(&members);
        let mut h = states(5, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for step in 0..500 {
            let (a, b) = (rng.gen_range(0..5), rng.gen_range(0..5));
            r.apply_event(a, b, step as f64, Provenance::Predicted).unwrap();
            let mut t = Tape::new(&p);
            let hv = t.constant(h).unwrap();
            let phi = time.encode(&mut t, &[rng.gen_range(0.0..3.0)]).unwrap();
            let out = net.propagate(&mut t, &r, hv, phi).unwrap();
            h = t.value(out).clone();
        }
        assert!(h.is_finite());
        assert_eq!(h.shape(), [5, 4]);
        assert_eq!(r.edge_count(), 500);
    }

    #[test]
    fn gradient_through_one_step() {
        let (p, time, net) = net(14);
        let mut r = RolloutGraph::empty(&[0, 1, 2, 3]);
        for (a, b) in [(0, 1), (1, 2), (2, 3), (3, 3)] {
            r.apply_event(a, b, 1.0, Provenance::Observed).unwrap();
        }
        let h0 = states(4, 15);
        let report = gradcheck::check(&p, 1e-5, |t| {
            let h = t.constant(h0.clone())?;
            let phi = time.encode(t, &[0.8])?;
            let out = net.propagate(t, &r, h, phi)?;
            let c = t.cos(out)?;
            t.mean(c)
        })
        .unwrap();
        assert!(report.max_rel_error <= 1e-4, "{report:?}");
    }
}
