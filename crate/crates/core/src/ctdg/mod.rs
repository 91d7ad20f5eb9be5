//! Continuous-time dynamic graph data model: event streams, chronological
//! splits, edge-feature synthesis, temporal neighborhoods and communities.

mod event;
mod features;
mod graph;
mod louvain;
mod split;

pub use event::{ingest_events, Event, EventStream, NodeId, TimeScale};
pub use features::{synthesize_edge_features, SYNTHETIC_FEATURE_DIM};
pub use graph::{temporal_neighbors, Neighbor, NeighborSampler, NeighborhoodSample, TemporalGraph};
pub use louvain::{detect_communities_louvain, modularity, CommunityAssignment, WeightedGraph};
pub use split::{chronological_split, SplitMeta, SplitSpec};
