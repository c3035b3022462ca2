use std::collections::{HashMap, HashSet};
use std::io::Read;

use super::events::AgentId;
use super::network::{Node, Roster};
use crate::stats::Standardizer;
use crate::{Error, Result};

/// One observed weekly score.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreObservation {
    pub agent: AgentId,
    pub week: u32,
    pub score: f64,
}

impl ScoreObservation {
    pub fn new(agent: impl Into<AgentId>, week: u32, score: f64) -> Self {
        Self {
            agent: agent.into(),
            week,
            score,
        }
    }
}

/// Reads an `agent,week,score` table. Weeks and scores must be integers.
pub fn read_scores<R: Read>(reader: R) -> Result<Vec<ScoreObservation>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(ai), Some(wi), Some(si)) = (col("agent"), col("week"), col("score")) else {
        return Err(Error::MalformedRecord {
            line: 1,
            message: "header must be agent,week,score".into(),
        });
    };
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::MalformedRecord {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let bad = |what: &str| Error::MalformedRecord {
            line,
            message: what.to_owned(),
        };
        let agent = record.get(ai).filter(|s| !s.is_empty()).ok_or_else(|| bad("missing agent"))?;
        let week: u32 = record
            .get(wi)
            .and_then(|s| s.parse().ok())
            .filter(|&w| w >= 1)
            .ok_or_else(|| bad("week must be a positive integer"))?;
        let score: i64 = record
            .get(si)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("score must be an integer"))?;
        out.push(ScoreObservation::new(agent, week, score as f64));
    }
    Ok(out)
}

/// Weekly score panel: observed values plus a gap-filled completion.
///
/// Only agents with at least one observation are kept; the rest are listed in
/// [`ScorePanel::dropped`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScorePanel {
    weeks: u32,
    agents: Vec<AgentId>,
    index: HashMap<AgentId, usize>,
    /// Agent-major, `weeks` values per agent.
    completed: Vec<f64>,
    observed: Vec<bool>,
    dropped: Vec<AgentId>,
}

/// Gap-fills observed scores: last observation carried forward, then the next
/// observation carried backward for leading gaps.
///
/// `roster` restricts the panel to the given agents (observations of other
/// agents are ignored); with `None` the panel covers every observed agent.
pub fn impute_scores(
    observed: &[ScoreObservation],
    roster: Option<&[AgentId]>,
    weeks: u32,
) -> Result<ScorePanel> {
    let allowed: Option<HashSet<&AgentId>> = roster.map(|r| r.iter().collect());
    let mut by_agent: HashMap<&AgentId, Vec<Option<f64>>> = HashMap::new();
    for obs in observed {
        if !(0.0..=100.0).contains(&obs.score) || !obs.score.is_finite() {
            return Err(Error::ScoreOutOfRange {
                agent: obs.agent.0.clone(),
                week: obs.week,
                score: obs.score,
            });
        }
        if obs.week == 0 || obs.week > weeks {
            return Err(Error::WeekOutOfRange {
                week: obs.week,
                max: weeks,
            });
        }
        if allowed.as_ref().is_some_and(|a| !a.contains(&obs.agent)) {
            continue;
        }
        let series = by_agent
            .entry(&obs.agent)
            .or_insert_with(|| vec![None; weeks as usize]);
        let slot = &mut series[obs.week as usize - 1];
        match slot {
            Some(prev) if *prev != obs.score => {
                return Err(Error::DegenerateScope(format!(
                    "conflicting scores {prev} and {} for {} in week {}",
                    obs.score, obs.agent, obs.week
                )))
            }
            _ => *slot = Some(obs.score),
        }
    }

    let mut agents: Vec<AgentId> = by_agent.keys().map(|a| (*a).clone()).collect();
    agents.sort();
    let mut dropped: Vec<AgentId> = roster
        .map(|r| {
            r.iter()
                .filter(|a| !by_agent.contains_key(a))
                .cloned()
                .collect()
        })
        .unwrap_or_default();
    dropped.sort();
    dropped.dedup();

    let mut completed = Vec::with_capacity(agents.len() * weeks as usize);
    let mut mask = Vec::with_capacity(agents.len() * weeks as usize);
    for a in &agents {
        let series = &by_agent[a];
        completed.extend(fill_series(series));
        mask.extend(series.iter().map(Option::is_some));
    }
    let index = agents.iter().enumerate().map(|(i, a)| (a.clone(), i)).collect();
    Ok(ScorePanel {
        weeks,
        agents,
        index,
        completed,
        observed: mask,
        dropped,
    })
}

/// LOCF then NOCB over one series with at least one observation.
fn fill_series(series: &[Option<f64>]) -> Vec<f64> {
    let mut out: Vec<Option<f64>> = Vec::with_capacity(series.len());
    let mut last = None;
    for s in series {
        if s.is_some() {
            last = *s;
        }
        out.push(last);
    }
    let mut next = None;
    for (o, s) in out.iter_mut().zip(series).rev() {
        if s.is_some() {
            next = *s;
        }
        if o.is_none() {
            *o = next;
        }
    }
    out.into_iter()
        .map(|v| v.expect("series has an observation"))
        .collect()
}

impl ScorePanel {
    /// Rebuilds a panel from already completed series (e.g. a persisted build).
    pub fn from_completed(
        weeks: u32,
        series: Vec<(AgentId, Vec<f64>, Vec<bool>)>,
        dropped: Vec<AgentId>,
    ) -> Result<Self> {
        let mut series = series;
        series.sort_by(|a, b| a.0.cmp(&b.0));
        let mut agents = Vec::with_capacity(series.len());
        let mut completed = Vec::new();
        let mut observed = Vec::new();
        for (id, values, mask) in series {
            if values.len() != weeks as usize || mask.len() != weeks as usize {
                return Err(Error::InvalidConfig(format!("series for {id} has wrong length")));
            }
            if let Some(v) = values.iter().find(|v| !(0.0..=100.0).contains(*v)) {
                return Err(Error::ScoreOutOfRange {
                    agent: id.0.clone(),
                    week: 0,
                    score: *v,
                });
            }
            agents.push(id);
            completed.extend(values);
            observed.extend(mask);
        }
        let index = agents.iter().enumerate().map(|(i, a)| (a.clone(), i)).collect();
        Ok(Self {
            weeks,
            agents,
            index,
            completed,
            observed,
            dropped,
        })
    }

    pub fn weeks(&self) -> u32 {
        self.weeks
    }

    pub fn agents(&self) -> &[AgentId] {
        &self.agents
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    /// Roster agents that had no observation at all.
    pub fn dropped(&self) -> &[AgentId] {
        &self.dropped
    }

    pub fn agent_index(&self, id: &AgentId) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Completed score of panel agent `a` in week `t` (1-based).
    pub fn score(&self, a: usize, t: u32) -> f64 {
        self.completed[a * self.weeks as usize + t as usize - 1]
    }

    pub fn is_observed(&self, a: usize, t: u32) -> bool {
        self.observed[a * self.weeks as usize + t as usize - 1]
    }

    pub fn series(&self, a: usize) -> &[f64] {
        let w = self.weeks as usize;
        &self.completed[a * w..(a + 1) * w]
    }

    pub fn observed_series(&self, a: usize) -> Vec<Option<f64>> {
        (1..=self.weeks)
            .map(|t| self.is_observed(a, t).then(|| self.score(a, t)))
            .collect()
    }

    /// Maps completed scores onto a network roster.
    pub fn align(&self, roster: &Roster) -> NodeScores {
        let n = roster.len();
        let w = self.weeks as usize;
        let mut values = vec![None; n * w];
        for (node, id) in roster.ids().iter().enumerate() {
            if let Some(a) = self.agent_index(id) {
                for t in 0..w {
                    values[t * n + node] = Some(self.completed[a * w + t]);
                }
            }
        }
        NodeScores {
            weeks: self.weeks,
            n_nodes: n,
            values,
        }
    }
}

/// Completed scores indexed by network node, week-major. Nodes outside the
/// panel have `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeScores {
    weeks: u32,
    n_nodes: usize,
    values: Vec<Option<f64>>,
}

impl NodeScores {
    pub fn from_weeks(weekly: Vec<Vec<Option<f64>>>) -> Self {
        let n_nodes = weekly.first().map_or(0, Vec::len);
        assert!(weekly.iter().all(|w| w.len() == n_nodes));
        Self {
            weeks: weekly.len() as u32,
            n_nodes,
            values: weekly.into_iter().flatten().collect(),
        }
    }

    pub fn weeks(&self) -> u32 {
        self.weeks
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// Scores of all nodes in week `t`.
    pub fn week(&self, t: u32) -> &[Option<f64>] {
        let s = (t as usize - 1) * self.n_nodes;
        &self.values[s..s + self.n_nodes]
    }

    pub fn get(&self, node: Node, t: u32) -> Option<f64> {
        self.values[(t as usize - 1) * self.n_nodes + node as usize]
    }

    pub fn has_scores(&self, node: Node) -> bool {
        self.weeks > 0 && self.get(node, 1).is_some()
    }
}

/// Which cells of the panel a standardization is fitted on.
#[derive(Debug, Clone, Copy)]
pub enum StandardizeScope<'a> {
    /// Every completed cell.
    Global,
    /// One week, restricted to the given panel agents (a block roster).
    Week { week: u32, agents: &'a [usize] },
    /// An arbitrary estimation sample of `(agent, week)` cells.
    Sample(&'a [(usize, u32)]),
}

/// Standardized values together with the fitted scale.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizedScores {
    pub standardizer: Standardizer,
    pub cells: Vec<(usize, u32)>,
    pub values: Vec<f64>,
}

/// z-scores `(x - mean) / sd` with the sample sd over the requested scope.
pub fn standardize_scores(
    panel: &ScorePanel,
    scope: StandardizeScope<'_>,
) -> Result<StandardizedScores> {
    let cells: Vec<(usize, u32)> = match scope {
        StandardizeScope::Global => (0..panel.n_agents())
            .flat_map(|a| (1..=panel.weeks).map(move |t| (a, t)))
            .collect(),
        StandardizeScope::Week { week, agents } => {
            if week == 0 || week > panel.weeks {
                return Err(Error::WeekOutOfRange {
                    week,
                    max: panel.weeks,
                });
            }
            agents.iter().map(|&a| (a, week)).collect()
        }
        StandardizeScope::Sample(cells) => cells.to_vec(),
    };
    let raw: Vec<f64> = cells.iter().map(|&(a, t)| panel.score(a, t)).collect();
    let standardizer = Standardizer::fit(&raw)?;
    Ok(StandardizedScores {
        standardizer,
        values: standardizer.apply_all(&raw),
        cells,
    })
}
