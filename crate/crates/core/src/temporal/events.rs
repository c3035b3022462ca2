use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::Read;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Opaque, stable agent identifier as it appears in the input files.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub String);

impl AgentId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for AgentId {
    fn from(s: &str) -> Self {
        AgentId(s.to_owned())
    }
}

impl From<String> for AgentId {
    fn from(s: String) -> Self {
        AgentId(s)
    }
}

/// When a raw follow record happened: either a pre-binned week or a Unix
/// timestamp in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventTime {
    Week(u32),
    Timestamp(i64),
}

/// One row of the events file, before cleaning.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawEvent {
    pub line: usize,
    pub follower: AgentId,
    pub followee: AgentId,
    pub time: EventTime,
}

/// A cleaned follow event: `follower` started following `followee` in `week`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FollowEvent {
    pub follower: AgentId,
    pub followee: AgentId,
    pub week: u32,
}

impl FollowEvent {
    pub fn new(follower: impl Into<AgentId>, followee: impl Into<AgentId>, week: u32) -> Self {
        Self {
            follower: follower.into(),
            followee: followee.into(),
            week,
        }
    }
}

/// Half-open 7-day bins counted from an epoch at UTC midnight. Week 1 is
/// `[epoch, epoch + 7d)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WeekBinning {
    epoch_secs: i64,
}

const WEEK_SECS: i64 = 7 * 24 * 3600;

impl WeekBinning {
    pub fn new(epoch: NaiveDate) -> Self {
        let epoch_secs = epoch
            .and_hms_opt(0, 0, 0)
            .expect("midnight is a valid time")
            .and_utc()
            .timestamp();
        Self { epoch_secs }
    }

    pub fn week_of(&self, timestamp: i64) -> Option<u32> {
        let delta = timestamp - self.epoch_secs;
        if delta < 0 {
            return None;
        }
        u32::try_from(delta / WEEK_SECS + 1).ok()
    }
}

/// Accepts Unix seconds, RFC 3339, `YYYY-MM-DD HH:MM:SS` (UTC) or a bare date.
pub fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(secs) = s.parse::<i64>() {
        return Some(secs);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    if let Ok(dt) = NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S") {
        return Some(dt.and_utc().timestamp());
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Some(d.and_hms_opt(0, 0, 0)?.and_utc().timestamp());
    }
    None
}

fn parse_week(field: &str, line: usize) -> Result<u32> {
    let week: u32 = field.trim().parse().map_err(|_| Error::MalformedRecord {
        line,
        message: format!("week {field:?} is not a non-negative integer"),
    })?;
    if week == 0 {
        return Err(Error::MalformedRecord {
            line,
            message: "weeks are numbered from 1".into(),
        });
    }
    Ok(week)
}

/// Reads a delimited events table with header `follower,followee,week` or
/// `follower,followee,timestamp`. Lines starting with `#` are ignored.
pub fn read_events<R: Read>(reader: R) -> Result<Vec<RawEvent>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(fi), Some(ei)) = (col("follower"), col("followee")) else {
        return Err(Error::MalformedRecord {
            line: 1,
            message: "header must contain follower and followee".into(),
        });
    };
    let (week_col, ts_col) = (col("week"), col("timestamp"));
    if week_col.is_none() && ts_col.is_none() {
        return Err(Error::MalformedRecord {
            line: 1,
            message: "header must contain week or timestamp".into(),
        });
    }

    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::MalformedRecord {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| -> Result<&str> {
            record
                .get(i)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| Error::MalformedRecord {
                    line,
                    message: format!("missing column {}", &headers[i]),
                })
        };
        let time = match (week_col, ts_col) {
            (Some(w), _) => EventTime::Week(parse_week(field(w)?, line)?),
            (None, Some(t)) => {
                let raw = field(t)?;
                EventTime::Timestamp(parse_timestamp(raw).ok_or_else(|| {
                    Error::MalformedRecord {
                        line,
                        message: format!("unparseable timestamp {raw:?}"),
                    }
                })?)
            }
            (None, None) => unreachable!(),
        };
        out.push(RawEvent {
            line,
            follower: AgentId::from(field(fi)?),
            followee: AgentId::from(field(ei)?),
            time,
        });
    }
    Ok(out)
}

/// Result of [`ingest_events`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestReport {
    /// Cleaned events, sorted by `(week, follower, followee)`.
    pub events: Vec<FollowEvent>,
    pub dropped_outside_roster: usize,
    pub dropped_self_loops: usize,
    pub collapsed_duplicates: usize,
}

/// Cleans raw follow records: drops ties with an endpoint outside
/// `roster_filter` (when given), drops self-loops, bins timestamps into weeks
/// and keeps only the earliest occurrence of each ordered pair.
pub fn ingest_events(
    rows: &[RawEvent],
    roster_filter: Option<&HashSet<AgentId>>,
    binning: Option<&WeekBinning>,
) -> Result<IngestReport> {
    let mut report = IngestReport::default();
    let mut earliest: HashMap<(&AgentId, &AgentId), u32> = HashMap::new();
    let mut kept = 0usize;

    for row in rows {
        let week = match row.time {
            EventTime::Week(w) if w >= 1 => w,
            EventTime::Week(_) => {
                return Err(Error::MalformedRecord {
                    line: row.line,
                    message: "weeks are numbered from 1".into(),
                })
            }
            EventTime::Timestamp(ts) => {
                let bins = binning.ok_or_else(|| Error::MalformedRecord {
                    line: row.line,
                    message: "timestamped event but no epoch configured".into(),
                })?;
                bins.week_of(ts).ok_or_else(|| Error::MalformedRecord {
                    line: row.line,
                    message: format!("timestamp {ts} precedes the epoch"),
                })?
            }
        };
        if let Some(filter) = roster_filter {
            if !filter.contains(&row.follower) || !filter.contains(&row.followee) {
                report.dropped_outside_roster += 1;
                continue;
            }
        }
        if row.follower == row.followee {
            report.dropped_self_loops += 1;
            continue;
        }
        kept += 1;
        earliest
            .entry((&row.follower, &row.followee))
            .and_modify(|w| *w = (*w).min(week))
            .or_insert(week);
    }

    report.collapsed_duplicates = kept - earliest.len();
    let mut events: Vec<FollowEvent> = earliest
        .into_iter()
        .map(|((a, b), week)| FollowEvent {
            follower: a.clone(),
            followee: b.clone(),
            week,
        })
        .collect();
    if events.is_empty() {
        return Err(Error::EmptyDataset("no follow events survive cleaning".into()));
    }
    events.sort_by(|x, y| {
        (x.week, &x.follower, &x.followee).cmp(&(y.week, &y.follower, &y.followee))
    });
    report.events = events;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(line: usize, a: &str, b: &str, week: u32) -> RawEvent {
        RawEvent {
            line,
            follower: a.into(),
            followee: b.into(),
            time: EventTime::Week(week),
        }
    }

    #[test]
    fn self_loops_are_dropped() {
        let rows = vec![raw(2, "a", "b", 1), raw(3, "c", "c", 1), raw(4, "b", "c", 2)];
        let rep = ingest_events(&rows, None, None).unwrap();
        assert_eq!(rep.events.len(), 2);
        assert_eq!(rep.dropped_self_loops, 1);
    }

    #[test]
    fn earliest_duplicate_wins() {
        let rows = vec![raw(2, "a", "b", 5), raw(3, "a", "b", 2)];
        let rep = ingest_events(&rows, None, None).unwrap();
        assert_eq!(rep.events, vec![FollowEvent::new("a", "b", 2)]);
        assert_eq!(rep.collapsed_duplicates, 1);
    }

    #[test]
    fn roster_filter_requires_both_endpoints() {
        let rows = vec![raw(2, "a", "b", 1), raw(3, "a", "z", 1), raw(4, "z", "b", 1)];
        let filter: HashSet<AgentId> = ["a", "b"].into_iter().map(AgentId::from).collect();
        let rep = ingest_events(&rows, Some(&filter), None).unwrap();
        assert_eq!(rep.events.len(), 1);
        assert_eq!(rep.dropped_outside_roster, 2);
    }

    #[test]
    fn empty_result_is_an_error() {
        let rows = vec![raw(2, "a", "a", 1)];
        assert!(matches!(
            ingest_events(&rows, None, None),
            Err(Error::EmptyDataset(_))
        ));
    }

    #[test]
    fn timestamps_bin_into_half_open_weeks() {
        let bins = WeekBinning::new(NaiveDate::from_ymd_opt(2023, 5, 1).unwrap());
        let epoch = parse_timestamp("2023-05-01").unwrap();
        assert_eq!(bins.week_of(epoch), Some(1));
        assert_eq!(bins.week_of(epoch + WEEK_SECS - 1), Some(1));
        assert_eq!(bins.week_of(epoch + WEEK_SECS), Some(2));
        assert_eq!(bins.week_of(epoch - 1), None);
        assert_eq!(
            parse_timestamp("2023-05-08T00:00:00Z"),
            Some(epoch + WEEK_SECS)
        );
    }

    #[test]
    fn malformed_rows_report_line_numbers() {
        let text = "follower,followee,week\na,b,1\nc,d,x\n";
        match read_events(text.as_bytes()) {
            Err(Error::MalformedRecord { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let text = "follower,followee,week\na,b,1\nc,,2\n";
        assert!(matches!(
            read_events(text.as_bytes()),
            Err(Error::MalformedRecord { line: 3, .. })
        ));
    }

    #[test]
    fn reads_timestamp_tables() {
        let text = "# provenance\nfollower,followee,timestamp\na,b,2023-05-09 10:00:00\n";
        let rows = read_events(text.as_bytes()).unwrap();
        let bins = WeekBinning::new(NaiveDate::from_ymd_opt(2023, 5, 1).unwrap());
        let rep = ingest_events(&rows, None, Some(&bins)).unwrap();
        assert_eq!(rep.events[0].week, 2);
        assert!(ingest_events(&rows, None, None).is_err());
    }
}
