use super::{Event, EventStream};
use crate::error::{Error, Result};

pub const SYNTHETIC_FEATURE_DIM: usize = 10;

/// Splits a duration in seconds into `[days, hours, minutes, seconds]`.
fn radix(delta: f64) -> [f64; 4] {
    let days = (delta / 86_400.0).floor();
    let rem = delta - days * 86_400.0;
    let hours = (rem / 3_600.0).floor();
    let rem = rem - hours * 3_600.0;
    let minutes = (rem / 60.0).floor();
    [days, hours, minutes, rem - minutes * 60.0]
}

/// Gives every event a 10-dimensional feature built only from earlier events:
/// `[deg(u), deg(v), dt_u as d/h/m/s, dt_v as d/h/m/s]`, where `deg` counts
/// prior incident events and `dt_x` is the time since node `x` last
/// interacted (zero on first appearance). Times are taken to be seconds.
pub fn synthesize_edge_features(stream: &EventStream) -> Result<EventStream> {
    if stream.feature_dim() != 0 {
        return Err(Error::FeaturesPresent(stream.feature_dim()));
    }
    let n = stream.node_count();
    let mut degree = vec![0usize; n];
    let mut last: Vec<Option<f64>> = vec![None; n];
    let mut out = Vec::with_capacity(stream.len());
    for e in stream.events() {
        let delta = |x: usize| last[x].map_or(0.0, |t| e.time - t);
        let mut f = Vec::with_capacity(SYNTHETIC_FEATURE_DIM);
        f.push(degree[e.source] as f64);
        f.push(degree[e.dest] as f64);
        f.extend(radix(delta(e.source)));
        f.extend(radix(delta(e.dest)));
        out.push(Event { features: f, ..e.clone() });

        degree[e.source] += 1;
        if e.dest != e.source {
            degree[e.dest] += 1;
        }
        last[e.source] = Some(e.time);
        last[e.dest] = Some(e.time);
    }
    Ok(stream.derive(out))
}
