use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Compact node index, `0..node_count`.
pub type NodeId = usize;

/// One timestamped interaction `(source, dest, time)` with optional edge features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub source: NodeId,
    pub dest: NodeId,
    pub time: f64,
    #[serde(default)]
    pub features: Vec<f64>,
}

impl Event {
    pub fn new(source: NodeId, dest: NodeId, time: f64) -> Self {
        Self { source, dest, time, features: Vec::new() }
    }

    pub fn touches(&self, node: NodeId) -> bool {
        self.source == node || self.dest == node
    }
}

/// Time-ordered events over a fixed node universe.
///
/// Events are sorted non-decreasing by time; equal timestamps keep their
/// input order. `original_ids[i]` is the external id of compact node `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct EventStream {
    events: Vec<Event>,
    node_count: usize,
    feature_dim: usize,
    original_ids: Vec<u64>,
}

impl EventStream {
    /// Builds a stream, stably sorting by time and validating ids and feature arity.
    pub fn new(mut events: Vec<Event>, node_count: usize) -> Result<Self> {
        let feature_dim = events.first().map_or(0, |e| e.features.len());
        for (i, e) in events.iter().enumerate() {
            if e.source >= node_count || e.dest >= node_count {
                return Err(Error::InvalidArgument(format!(
                    "event {i} references node {} outside universe of {node_count}",
                    e.source.max(e.dest)
                )));
            }
            if !e.time.is_finite() || e.time < 0.0 {
                return Err(Error::InvalidArgument(format!("event {i} has invalid time {}", e.time)));
            }
            if e.features.len() != feature_dim {
                return Err(Error::FeatureArity { line: i, expected: feature_dim, found: e.features.len() });
            }
        }
        events.sort_by(|a, b| a.time.total_cmp(&b.time));
        Ok(Self { events, node_count, feature_dim, original_ids: (0..node_count as u64).collect() })
    }

    /// Replaces the external id mapping.
    pub fn with_original_ids(mut self, ids: Vec<u64>) -> Result<Self> {
        if ids.len() != self.node_count {
            return Err(Error::InvalidArgument(format!("{} ids for {} nodes", ids.len(), self.node_count)));
        }
        self.original_ids = ids;
        Ok(self)
    }

    /// A stream over the same node universe holding `events`, which must
    /// already be sorted.
    pub(crate) fn derive(&self, events: Vec<Event>) -> Self {
        let feature_dim = events.first().map_or(self.feature_dim, |e| e.features.len());
        Self { events, node_count: self.node_count, feature_dim, original_ids: self.original_ids.clone() }
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn original_ids(&self) -> &[u64] {
        &self.original_ids
    }

    pub fn original_id(&self, node: NodeId) -> u64 {
        self.original_ids[node]
    }

    /// Compact id of an external id, if present.
    pub fn compact_id(&self, original: u64) -> Option<NodeId> {
        self.original_ids.binary_search(&original).ok().or_else(|| self.original_ids.iter().position(|&x| x == original))
    }

    pub fn start_time(&self) -> Option<f64> {
        self.events.first().map(|e| e.time)
    }

    pub fn end_time(&self) -> Option<f64> {
        self.events.last().map(|e| e.time)
    }

    /// Events with both endpoints in `members` (a membership mask over compact ids).
    pub fn restrict(&self, members: &[bool]) -> Self {
        let events = self.events.iter().filter(|e| members[e.source] && members[e.dest]).cloned().collect();
        self.derive(events)
    }

    /// Affinely maps times onto `[0, span]`; returns the mapped stream and the map.
    pub fn rescale_time(&self, span: f64) -> (Self, TimeScale) {
        let scale = TimeScale::fit(self, span);
        let events = self.events.iter().map(|e| Event { time: scale.forward(e.time), ..e.clone() }).collect();
        (self.derive(events), scale)
    }

    /// Applies an existing time map.
    pub fn apply_time_scale(&self, scale: &TimeScale) -> Self {
        let events = self.events.iter().map(|e| Event { time: scale.forward(e.time), ..e.clone() }).collect();
        self.derive(events)
    }

    /// CSV with header `source,dest,time[,f0,...]`, using external ids.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("source,dest,time");
        for k in 0..self.feature_dim {
            let _ = write!(out, ",f{k}");
        }
        out.push('\n');
        for e in &self.events {
            let _ = write!(out, "{},{},{}", self.original_ids[e.source], self.original_ids[e.dest], e.time);
            for f in &e.features {
                let _ = write!(out, ",{f}");
            }
            out.push('\n');
        }
        out
    }
}

/// Affine time map `t' = (t - offset) * factor`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeScale {
    pub offset: f64,
    pub factor: f64,
}

impl TimeScale {
    pub const IDENTITY: TimeScale = TimeScale { offset: 0.0, factor: 1.0 };

    /// Maps the stream's first event to 0 and its last to `span`.
    pub fn fit(stream: &EventStream, span: f64) -> Self {
        match (stream.start_time(), stream.end_time()) {
            (Some(a), Some(b)) if b > a => Self { offset: a, factor: span / (b - a) },
            (Some(a), _) => Self { offset: a, factor: 1.0 },
            _ => Self::IDENTITY,
        }
    }

    pub fn forward(&self, t: f64) -> f64 {
        (t - self.offset) * self.factor
    }

    pub fn inverse(&self, t: f64) -> f64 {
        t / self.factor + self.offset
    }

    /// Converts a duration back to original units.
    pub fn inverse_duration(&self, dt: f64) -> f64 {
        dt / self.factor
    }
}

/// Parses CSV text with header `source,dest,time[,f0,f1,...]`.
///
/// Rows are stably sorted by time and external ids are compacted to
/// `0..node_count` in ascending order. Blank lines are ignored; line
/// numbers in errors are 1-based and count the header.
pub fn ingest_events(text: &str) -> Result<EventStream> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .by_ref()
        .find(|(_, l)| !l.trim().is_empty())
        .ok_or(Error::MalformedRow { line: 1, reason: "missing header".into() })?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    if columns.len() < 3 || columns[..3] != ["source", "dest", "time"] {
        return Err(Error::MalformedRow { line: 1, reason: format!("bad header {header:?}") });
    }
    let feature_dim = columns.len() - 3;

    let mut raw: Vec<(u64, u64, f64, Vec<f64>)> = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 3 {
            return Err(Error::MalformedRow { line: line_no, reason: format!("expected at least 3 fields, got {}", fields.len()) });
        }
        if fields.len() - 3 != feature_dim {
            return Err(Error::FeatureArity { line: line_no, expected: feature_dim, found: fields.len() - 3 });
        }
        let id = |s: &str| {
            s.parse::<u64>().map_err(|_| Error::MalformedRow { line: line_no, reason: format!("bad node id {s:?}") })
        };
        let real = |s: &str| -> Result<f64> {
            match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::MalformedRow { line: line_no, reason: format!("bad number {s:?}") }),
            }
        };
        let (u, v, t) = (id(fields[0])?, id(fields[1])?, real(fields[2])?);
        if t < 0.0 {
            return Err(Error::NegativeTime { line: line_no, time: t });
        }
        let features = fields[3..].iter().map(|s| real(s)).collect::<Result<Vec<_>>>()?;
        raw.push((u, v, t, features));
    }

    let mut ids: BTreeMap<u64, NodeId> = BTreeMap::new();
    for (u, v, _, _) in &raw {
        ids.insert(*u, 0);
        ids.insert(*v, 0);
    }
    for (i, slot) in ids.values_mut().enumerate() {
        *slot = i;
    }
    let original_ids: Vec<u64> = ids.keys().copied().collect();
    let events = raw.into_iter().map(|(u, v, time, features)| Event { source: ids[&u], dest: ids[&v], time, features }).collect();
    let mut stream = EventStream::new(events, original_ids.len())?.with_original_ids(original_ids)?;
    if stream.is_empty() {
        stream.feature_dim = feature_dim;
    }
    Ok(stream)
}
