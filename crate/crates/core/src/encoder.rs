//! Temporal graph-attention encoder producing the initial node states.
//!
//! Every layer attends from `[z_self | phi(0)]` over the node's sampled
//! prior events `[z_neighbor | e | phi(t_src - t_event)]`, then mixes the
//! result with the node's previous representation through a 2-layer MLP.
//! All hops are bounded by the single query time `t_src`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::ctdg::{Neighbor, NeighborSampler, NodeId, TemporalGraph};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::{Axis, Init, Mlp, MultiHeadAttention, ParamId, ParameterSet, Tape, Tensor, Var};

/// Learnable harmonic time encoding `phi(dt) = cos(omega * dt + b)`.
#[derive(Clone, Debug)]
pub struct TimeEncoder {
    pub omega: ParamId,
    pub phase: ParamId,
    pub dim: usize,
}

impl TimeEncoder {
    /// Frequencies start log-uniform over `[1e-3, 10]`, phases at zero.
    pub fn new<T: Real>(params: &mut ParameterSet<T>, name: &str, dim: usize) -> Self {
        let omega = params.add(format!("{name}.omega"), 1, dim, Init::LogUniform { lo: 1e-3, hi: 10.0 });
        let phase = params.add_bias(format!("{name}.phase"), dim);
        Self { omega, phase, dim }
    }

    /// One row per duration; errors on a negative duration.
    pub fn encode<T: Real>(&self, tape: &mut Tape<'_, T>, dts: &[T]) -> Result<Var> {
        if let Some(bad) = dts.iter().find(|&&d| d < T::zero()) {
            return Err(Error::InvalidArgument(format!("negative time difference {bad}")));
        }
        let col = tape.constant(Tensor::from_vec(dts.len(), 1, dts.to_vec())?)?;
        let omega = tape.param(self.omega);
        let phase = tape.param(self.phase);
        let scaled = tape.matmul(col, omega)?;
        let shifted = tape.add_bias(scaled, phase)?;
        tape.cos(shifted)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub layers: usize,
    pub hidden_dim: usize,
    pub heads: usize,
    pub fanout: usize,
    pub time_dim: usize,
    /// Width of the edge features the graph must carry (0 for none).
    pub edge_feature_dim: usize,
    #[serde(default)]
    pub uniform_sampling_seed: Option<u64>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { layers: 2, hidden_dim: 100, heads: 4, fanout: 15, time_dim: 16, edge_feature_dim: 0, uniform_sampling_seed: None }
    }
}

impl EncoderConfig {
    pub fn sampler(&self) -> NeighborSampler {
        match self.uniform_sampling_seed {
            Some(seed) => NeighborSampler::Uniform { seed },
            None => NeighborSampler::MostRecent,
        }
    }
}

/// Node representation handed from the encoder to the forecaster.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeState<T> {
    pub node: NodeId,
    pub h: Vec<T>,
    pub as_of: f64,
}

/// One attention layer plus its output MLP.
#[derive(Clone, Debug)]
pub struct EncoderLayer {
    pub attention: MultiHeadAttention,
    pub mlp: Mlp,
    hidden_dim: usize,
    edge_dim: usize,
}

/// Neighbor inputs of one node for one layer.
pub struct LayerInput<'a, T> {
    /// `n x hidden` previous-layer representations of the neighbors (`None` when `n = 0`).
    pub neighbor_reps: Option<Var>,
    /// `n` rows of edge features, already preprocessed.
    pub edge_features: &'a [Vec<T>],
    /// `t_src - t_event` per neighbor.
    pub dts: &'a [T],
}

impl EncoderLayer {
    fn new<T: Real>(params: &mut ParameterSet<T>, name: &str, cfg: &EncoderConfig) -> Result<Self> {
        let d = cfg.hidden_dim;
        let attention = MultiHeadAttention::new(
            params,
            &format!("{name}.attn"),
            d + cfg.time_dim,
            d + cfg.edge_feature_dim + cfg.time_dim,
            d,
            cfg.heads,
        )?;
        let mlp = Mlp::new(params, &format!("{name}.mlp"), 2 * d, d, d);
        Ok(Self { attention, mlp, hidden_dim: d, edge_dim: cfg.edge_feature_dim })
    }

    /// `z' = MLP([z | attn])` with `attn = 0` for an empty neighborhood.
    pub fn forward<T: Real>(&self, tape: &mut Tape<'_, T>, time: &TimeEncoder, z_self: Var, input: &LayerInput<'_, T>) -> Result<Var> {
        let n = input.dts.len();
        if input.edge_features.len() != n || input.edge_features.iter().any(|f| f.len() != self.edge_dim) {
            return Err(Error::Shape {
                op: "encode_layer",
                detail: format!("edge features do not match configured width {}", self.edge_dim),
            });
        }
        let attended = match input.neighbor_reps {
            Some(reps) if n > 0 => {
                let phi_self = time.encode(tape, &[T::zero()])?;
                let query = tape.concat(&[z_self, phi_self], Axis::Cols)?;
                let phi = time.encode(tape, input.dts)?;
                let mut parts = vec![reps];
                if self.edge_dim > 0 {
                    let flat: Vec<T> = input.edge_features.iter().flatten().copied().collect();
                    parts.push(tape.constant(Tensor::from_vec(n, self.edge_dim, flat)?)?);
                }
                parts.push(phi);
                let keys = tape.concat(&parts, Axis::Cols)?;
                self.attention.forward(tape, query, keys)?
            }
            _ => tape.constant(Tensor::zeros(1, self.hidden_dim))?,
        };
        let joined = tape.concat(&[z_self, attended], Axis::Cols)?;
        self.mlp.forward(tape, joined)
    }
}

/// Stacked temporal attention layers.
#[derive(Clone, Debug)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub layers: Vec<EncoderLayer>,
}

/// Signed `ln(1 + |x|)`, keeping count- and duration-valued features on a
/// comparable scale.
pub fn squash_feature(x: f64) -> f64 {
    x.signum() * x.abs().ln_1p()
}

impl Encoder {
    pub fn new<T: Real>(params: &mut ParameterSet<T>, name: &str, config: EncoderConfig) -> Result<Self> {
        let layers = (0..config.layers)
            .map(|l| EncoderLayer::new(params, &format!("{name}.layer{l}"), &config))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { config, layers })
    }

    /// Encodes `nodes` at horizon `t_n` using only events strictly before
    /// `t_n`; returns a `|nodes| x hidden` matrix in the order given.
    pub fn encode<T: Real>(
        &self,
        tape: &mut Tape<'_, T>,
        time: &TimeEncoder,
        graph: &TemporalGraph,
        nodes: &[NodeId],
        t_n: f64,
    ) -> Result<Var> {
        if graph.feature_dim() != self.config.edge_feature_dim {
            return Err(Error::Shape {
                op: "encode",
                detail: format!("graph has {}-dim edge features, encoder expects {}", graph.feature_dim(), self.config.edge_feature_dim),
            });
        }
        let sampler = self.config.sampler();
        let depth = self.layers.len();
        let mut samples: HashMap<NodeId, Vec<Neighbor>> = HashMap::new();
        // needed[l]: nodes whose layer-l representation is required
        let mut needed: Vec<Vec<NodeId>> = vec![Vec::new(); depth + 1];
        needed[depth] = dedup(nodes.iter().copied());
        for l in (0..depth).rev() {
            let upper = needed[l + 1].clone();
            let mut lower = upper.clone();
            for &v in &upper {
                let s = samples
                    .entry(v)
                    .or_insert_with(|| graph.sample_prior(v, t_n, self.config.fanout, sampler));
                lower.extend(s.iter().map(|nb| nb.node));
            }
            needed[l] = dedup(lower);
        }

        let mut reps = tape.constant(Tensor::zeros(needed[0].len(), self.config.hidden_dim))?;
        let mut index: HashMap<NodeId, usize> = needed[0].iter().enumerate().map(|(i, &v)| (v, i)).collect();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut rows = Vec::with_capacity(needed[l + 1].len());
            for &v in &needed[l + 1] {
                let z_self = tape.row(reps, index[&v])?;
                let sample = &samples[&v];
                let idx: Vec<usize> = sample.iter().map(|nb| index[&nb.node]).collect();
                let neighbor_reps = if idx.is_empty() { None } else { Some(tape.gather_rows(reps, &idx)?) };
                let edge_features: Vec<Vec<T>> = sample
                    .iter()
                    .map(|nb| graph.event(nb.event).features.iter().map(|&x| T::lit(squash_feature(x))).collect())
                    .collect();
                let dts: Vec<T> = sample.iter().map(|nb| T::lit(nb.dt)).collect();
                let input = LayerInput { neighbor_reps, edge_features: &edge_features, dts: &dts };
                rows.push(layer.forward(tape, time, z_self, &input)?);
            }
            reps = tape.concat(&rows, Axis::Rows)?;
            index = needed[l + 1].iter().enumerate().map(|(i, &v)| (v, i)).collect();
        }
        let order: Vec<usize> = nodes.iter().map(|v| index[v]).collect();
        tape.gather_rows(reps, &order)
    }

    /// Convenience wrapper returning plain [`NodeState`]s.
    pub fn node_states<T: Real>(
        &self,
        params: &ParameterSet<T>,
        time: &TimeEncoder,
        graph: &TemporalGraph,
        nodes: &[NodeId],
        t_n: f64,
    ) -> Result<Vec<NodeState<T>>> {
        let mut tape = Tape::new(params);
        let h = self.encode(&mut tape, time, graph, nodes, t_n)?;
        let value = tape.value(h);
        Ok(nodes
            .iter()
            .enumerate()
            .map(|(i, &node)| NodeState { node, h: value.row_slice(i).to_vec(), as_of: t_n })
            .collect())
    }
}

fn dedup(it: impl IntoIterator<Item = NodeId>) -> Vec<NodeId> {
    let mut seen = std::collections::HashSet::new();
    it.into_iter().filter(|v| seen.insert(*v)).collect()
}
