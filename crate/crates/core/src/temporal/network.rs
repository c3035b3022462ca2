use std::collections::HashMap;
use std::sync::OnceLock;

use rustc_hash::FxHashSet;

use super::events::{AgentId, FollowEvent};
use crate::{Error, Result};

/// Dense node index into a [`Roster`].
pub type Node = u32;

#[inline]
pub(crate) fn edge_key(u: Node, v: Node) -> u64 {
    ((u as u64) << 32) | v as u64
}

/// Sorted, deduplicated agent list with a reverse index.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Roster {
    ids: Vec<AgentId>,
    index: HashMap<AgentId, Node>,
}

impl Roster {
    pub fn new(ids: impl IntoIterator<Item = AgentId>) -> Self {
        let mut ids: Vec<AgentId> = ids.into_iter().collect();
        ids.sort();
        ids.dedup();
        let index = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i as Node))
            .collect();
        Self { ids, index }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn id(&self, node: Node) -> &AgentId {
        &self.ids[node as usize]
    }

    pub fn ids(&self) -> &[AgentId] {
        &self.ids
    }

    pub fn node(&self, id: &AgentId) -> Option<Node> {
        self.index.get(id).copied()
    }
}

/// Cumulative weekly directed follow networks `E(1) ⊆ E(2) ⊆ … ⊆ E(T)`.
///
/// Edges are stored once, ordered by formation week, so `E(t)` is a prefix of
/// the edge list and cumulativity holds by construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemporalNetwork {
    roster: Roster,
    weeks: u32,
    edges: Vec<(Node, Node)>,
    edge_weeks: Vec<u32>,
    /// `week_end[t]` = number of edges formed in weeks `1..=t`.
    week_end: Vec<usize>,
}

/// Builds the cumulative networks over the roster of event endpoints.
pub fn build_cumulative(events: &[FollowEvent], weeks: u32) -> Result<TemporalNetwork> {
    TemporalNetwork::build(events, std::iter::empty(), weeks)
}

impl TemporalNetwork {
    /// Builds the network over the event endpoints plus `extra_roster`
    /// (agents that may never appear in a tie).
    pub fn build(
        events: &[FollowEvent],
        extra_roster: impl IntoIterator<Item = AgentId>,
        weeks: u32,
    ) -> Result<Self> {
        if weeks == 0 {
            return Err(Error::InvalidConfig("T must be at least 1".into()));
        }
        let roster = Roster::new(
            events
                .iter()
                .flat_map(|e| [e.follower.clone(), e.followee.clone()])
                .chain(extra_roster),
        );
        let mut timed: Vec<(u32, Node, Node)> = Vec::with_capacity(events.len());
        for e in events {
            if e.week == 0 || e.week > weeks {
                return Err(Error::WeekOutOfRange {
                    week: e.week,
                    max: weeks,
                });
            }
            let u = roster.node(&e.follower).expect("endpoint in roster");
            let v = roster.node(&e.followee).expect("endpoint in roster");
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop on {}", e.follower)));
            }
            timed.push((e.week, u, v));
        }
        Self::from_indexed(roster, timed, weeks)
    }

    /// Builds from `(week, follower, followee)` triples over an existing roster.
    pub fn from_indexed(
        roster: Roster,
        mut timed: Vec<(u32, Node, Node)>,
        weeks: u32,
    ) -> Result<Self> {
        timed.sort_unstable();
        let mut seen = FxHashSet::default();
        seen.reserve(timed.len());
        for &(w, u, v) in &timed {
            if w == 0 || w > weeks {
                return Err(Error::WeekOutOfRange { week: w, max: weeks });
            }
            if u == v || u as usize >= roster.len() || v as usize >= roster.len() {
                return Err(Error::InvalidGraph(format!("bad edge ({u}, {v})")));
            }
            if !seen.insert(edge_key(u, v)) {
                return Err(Error::InvalidGraph(format!(
                    "duplicate tie {} -> {}",
                    roster.id(u),
                    roster.id(v)
                )));
            }
        }
        let mut week_end = vec![0usize; weeks as usize + 1];
        for &(w, _, _) in &timed {
            week_end[w as usize] += 1;
        }
        for t in 1..week_end.len() {
            week_end[t] += week_end[t - 1];
        }
        Ok(Self {
            roster,
            weeks,
            edges: timed.iter().map(|&(_, u, v)| (u, v)).collect(),
            edge_weeks: timed.iter().map(|&(w, _, _)| w).collect(),
            week_end,
        })
    }

    pub fn weeks(&self) -> u32 {
        self.weeks
    }

    pub fn roster(&self) -> &Roster {
        &self.roster
    }

    pub fn n_nodes(&self) -> usize {
        self.roster.len()
    }

    fn check_week(&self, t: u32) -> Result<()> {
        if t == 0 || t > self.weeks {
            Err(Error::WeekOutOfRange {
                week: t,
                max: self.weeks,
            })
        } else {
            Ok(())
        }
    }

    /// `|E(t)|`.
    pub fn edge_count(&self, t: u32) -> Result<usize> {
        self.check_week(t)?;
        Ok(self.week_end[t as usize])
    }

    /// All ties present at week `t`, in formation order.
    pub fn edges_through(&self, t: u32) -> Result<&[(Node, Node)]> {
        self.check_week(t)?;
        Ok(&self.edges[..self.week_end[t as usize]])
    }

    /// Ties first formed in week `t`.
    pub fn formed_in(&self, t: u32) -> Result<&[(Node, Node)]> {
        self.check_week(t)?;
        Ok(&self.edges[self.week_end[t as usize - 1]..self.week_end[t as usize]])
    }

    /// Every tie with its formation week.
    pub fn timed_edges(&self) -> impl Iterator<Item = (u32, Node, Node)> + '_ {
        self.edge_weeks
            .iter()
            .zip(&self.edges)
            .map(|(&w, &(u, v))| (w, u, v))
    }

    pub fn snapshot(&self, t: u32) -> Result<Snapshot> {
        let edges = self.edges_through(t)?.to_vec();
        let mut snap = Snapshot::from_edges(self.n_nodes(), edges)?;
        snap.week = Some(t);
        Ok(snap)
    }

    /// Checks `E(t) ⊆ E(t+1)` for every week and the absence of self-loops
    /// and duplicate ties.
    pub fn verify_invariants(&self) -> Result<()> {
        let mut seen = FxHashSet::default();
        for (i, &(u, v)) in self.edges.iter().enumerate() {
            if u == v || !seen.insert(edge_key(u, v)) {
                return Err(Error::InvalidGraph(format!("edge {i} ({u}, {v})")));
            }
        }
        for t in 1..self.week_end.len() {
            if self.week_end[t] < self.week_end[t - 1] {
                return Err(Error::InvalidGraph(format!("week {t} shrinks")));
            }
        }
        if self.edge_weeks.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidGraph("edges out of week order".into()));
        }
        Ok(())
    }
}

/// Immutable adjacency view of one weekly network.
///
/// Out- and in-neighbour lists are stored in compressed sparse row form and
/// sorted; edge membership is answered from a hash set built on first use.
#[derive(Debug)]
pub struct Snapshot {
    week: Option<u32>,
    n: usize,
    edges: Vec<(Node, Node)>,
    out_off: Vec<usize>,
    out_tgt: Vec<Node>,
    in_off: Vec<usize>,
    in_src: Vec<Node>,
    edge_set: OnceLock<FxHashSet<u64>>,
}

impl Clone for Snapshot {
    fn clone(&self) -> Self {
        Self {
            week: self.week,
            n: self.n,
            edges: self.edges.clone(),
            out_off: self.out_off.clone(),
            out_tgt: self.out_tgt.clone(),
            in_off: self.in_off.clone(),
            in_src: self.in_src.clone(),
            edge_set: OnceLock::new(),
        }
    }
}

fn csr(n: usize, pairs: impl Iterator<Item = (Node, Node)> + Clone) -> (Vec<usize>, Vec<Node>) {
    let mut off = vec![0usize; n + 1];
    for (u, _) in pairs.clone() {
        off[u as usize + 1] += 1;
    }
    for i in 0..n {
        off[i + 1] += off[i];
    }
    let mut fill = off.clone();
    let mut adj = vec![0 as Node; off[n]];
    for (u, v) in pairs {
        adj[fill[u as usize]] = v;
        fill[u as usize] += 1;
    }
    for i in 0..n {
        adj[off[i]..off[i + 1]].sort_unstable();
    }
    (off, adj)
}

impl Snapshot {
    /// Builds a view over nodes `0..n`. Rejects self-loops, duplicate ties and
    /// out-of-range endpoints.
    pub fn from_edges(n: usize, mut edges: Vec<(Node, Node)>) -> Result<Self> {
        edges.sort_unstable();
        for w in edges.windows(2) {
            if w[0] == w[1] {
                return Err(Error::InvalidGraph(format!("duplicate tie {:?}", w[0])));
            }
        }
        if let Some(&(u, v)) = edges
            .iter()
            .find(|&&(u, v)| u == v || u as usize >= n || v as usize >= n)
        {
            return Err(Error::InvalidGraph(format!("bad edge ({u}, {v}) for n = {n}")));
        }
        let (out_off, out_tgt) = csr(n, edges.iter().copied());
        let (in_off, in_src) = csr(n, edges.iter().map(|&(u, v)| (v, u)));
        Ok(Self {
            week: None,
            n,
            edges,
            out_off,
            out_tgt,
            in_off,
            in_src,
            edge_set: OnceLock::new(),
        })
    }

    pub fn week(&self) -> Option<u32> {
        self.week
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Ties sorted by `(follower, followee)`.
    pub fn edges(&self) -> &[(Node, Node)] {
        &self.edges
    }

    pub fn out_neighbors(&self, u: Node) -> &[Node] {
        &self.out_tgt[self.out_off[u as usize]..self.out_off[u as usize + 1]]
    }

    pub fn in_neighbors(&self, v: Node) -> &[Node] {
        &self.in_src[self.in_off[v as usize]..self.in_off[v as usize + 1]]
    }

    pub fn out_degree(&self, u: Node) -> usize {
        self.out_off[u as usize + 1] - self.out_off[u as usize]
    }

    pub fn in_degree(&self, v: Node) -> usize {
        self.in_off[v as usize + 1] - self.in_off[v as usize]
    }

    pub fn out_degrees(&self) -> Vec<usize> {
        (0..self.n as Node).map(|u| self.out_degree(u)).collect()
    }

    pub fn in_degrees(&self) -> Vec<usize> {
        (0..self.n as Node).map(|u| self.in_degree(u)).collect()
    }

    pub fn has_edge(&self, u: Node, v: Node) -> bool {
        self.edge_set
            .get_or_init(|| self.edges.iter().map(|&(a, b)| edge_key(a, b)).collect())
            .contains(&edge_key(u, v))
    }

    /// Nodes incident to at least one tie, ascending.
    pub fn active_nodes(&self) -> Vec<Node> {
        (0..self.n as Node)
            .filter(|&u| self.out_degree(u) + self.in_degree(u) > 0)
            .collect()
    }

    pub fn is_active(&self, u: Node) -> bool {
        self.out_degree(u) + self.in_degree(u) > 0
    }
}
