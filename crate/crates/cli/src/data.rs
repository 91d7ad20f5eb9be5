//! Loading an event file into rescaled splits, a temporal graph, and
//! communities.

use std::path::Path;

use cep3::ctdg::{chronological_split, detect_communities_louvain, ingest_events, CommunityAssignment, EventStream, SplitMeta, TemporalGraph, TimeScale};
use cep3::training::{make_windows, Window};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::Run;

pub fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

pub fn read_stream(path: &Path) -> CliResult<EventStream> {
    Ok(ingest_events(&read_text(path)?)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl SplitName {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        ["train", "val", "test"][self.index()]
    }
}

pub struct Dataset {
    /// Stream in rescaled time; ids are compact.
    pub stream: EventStream,
    pub scale: TimeScale,
    pub graph: TemporalGraph,
    pub splits: [EventStream; 3],
    pub meta: SplitMeta,
    pub communities: CommunityAssignment,
}

impl Dataset {
    /// Reads `input`, rescales times onto `[0, time_span]`, splits it, and
    /// loads communities from `communities` or detects them on the train
    /// split (or the whole stream with `louvain_full_stream`).
    pub fn load(run: &mut Run, input: &Path, communities: Option<&Path>) -> CliResult<Self> {
        run.input(input);
        let raw = read_stream(input)?;
        let (stream, scale) = raw.rescale_time(run.config.time_span);
        let (train, val, test, mut meta) = chronological_split(&stream, run.config.split())?;
        meta.time_scale = scale;
        let communities = match communities {
            Some(path) => {
                run.input(path);
                CommunityAssignment::from_csv(&read_text(path)?, &stream)?
            }
            None if run.config.louvain_full_stream => detect_communities_louvain(&stream),
            None => detect_communities_louvain(&train),
        };
        let graph = TemporalGraph::new(&stream);
        Ok(Self { stream, scale, graph, splits: [train, val, test], meta, communities })
    }

    pub fn windows(&self, split: SplitName, cfg: &RunConfig) -> CliResult<Vec<Window>> {
        let i = split.index();
        Ok(make_windows(&self.splits[i], &self.communities, cfg.k, cfg.stride(), self.meta.start_times[i])?)
    }

    /// `(t0, t1)` of the train split in rescaled time.
    pub fn train_span(&self) -> CliResult<(f64, f64)> {
        let train = &self.splits[0];
        match (train.start_time(), train.end_time()) {
            (Some(a), Some(b)) if b > a => Ok((a, b)),
            _ => Err(CliError::data("train split spans zero time")),
        }
    }

    pub fn label(&self, node: usize) -> u64 {
        self.stream.original_id(node)
    }

    pub fn community(&self, c: usize) -> CliResult<&Vec<usize>> {
        self.communities
            .communities
            .get(c)
            .ok_or_else(|| CliError::usage(format!("community {c} out of range (have {})", self.communities.len())))
    }
}
