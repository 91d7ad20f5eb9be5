use serde::{Deserialize, Serialize};

use super::{EventStream, TimeScale};
use crate::error::{Error, Result};

/// Train / validation / test fractions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train: 0.70, val: 0.15, test: 0.15 }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::InvalidSplit(format!("fractions {parts:?} outside [0, 1]")));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidSplit(format!("fractions {parts:?} do not sum to 1")));
        }
        Ok(())
    }
}

/// Where a stream was cut, plus the time map applied to it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitMeta {
    pub fractions: SplitSpec,
    /// `[train_end, val_end]` event indices (exclusive ends).
    pub boundaries: [usize; 2],
    pub total_events: usize,
    /// Horizon of each split: time of the last event before it, or the
    /// stream's first event time for the train split.
    pub start_times: [f64; 3],
    pub time_scale: TimeScale,
}

// floor with slack for products like 0.15 * 100 = 15.000000000000002
fn floor_count(frac: f64, total: usize) -> usize {
    ((frac * total as f64) + 1e-9).floor() as usize
}

/// Cuts a time-sorted stream into train / val / test by event index:
/// `floor(train * T)` events, then `floor(val * T)`, remainder to test.
pub fn chronological_split(stream: &EventStream, spec: SplitSpec) -> Result<(EventStream, EventStream, EventStream, SplitMeta)> {
    spec.validate()?;
    if stream.is_empty() {
        return Err(Error::EmptyStream);
    }
    let total = stream.len();
    let train_end = floor_count(spec.train, total).min(total);
    let val_end = (train_end + floor_count(spec.val, total)).min(total);
    let ev = stream.events();
    let first = ev[0].time;
    let start = |idx: usize| if idx == 0 { first } else { ev[idx - 1].time };
    let meta = SplitMeta {
        fractions: spec,
        boundaries: [train_end, val_end],
        total_events: total,
        start_times: [first, start(train_end), start(val_end)],
        time_scale: TimeScale::IDENTITY,
    };
    Ok((
        stream.derive(ev[..train_end].to_vec()),
        stream.derive(ev[train_end..val_end].to_vec()),
        stream.derive(ev[val_end..].to_vec()),
        meta,
    ))
}
