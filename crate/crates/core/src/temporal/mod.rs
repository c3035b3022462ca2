//! Follow events, cumulative weekly networks and the weekly score panel.

mod events;
mod network;
mod scores;

pub use events::{
    ingest_events, parse_timestamp, read_events, AgentId, EventTime, FollowEvent, IngestReport,
    RawEvent, WeekBinning,
};
pub use network::{build_cumulative, Node, Roster, Snapshot, TemporalNetwork};
pub(crate) use network::edge_key;
pub use scores::{
    impute_scores, read_scores, standardize_scores, NodeScores, ScoreObservation, ScorePanel,
    StandardizeScope, StandardizedScores,
};
