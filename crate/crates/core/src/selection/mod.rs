//! Formation-only temporal ERGM fitted by maximum pseudo-likelihood.
//!
//! Weeks are grouped into blocks; each transition `t -> t+1` inside a block
//! contributes one row per ordered dyad at risk of forming (absent at `t`,
//! both actors active at `t+1`). The three change statistics are edges
//! (intercept), mutual (reverse tie present at `t+1`) and absdiff
//! (`|z_i - z_j|` on week-`t` scores).

mod mple;

use std::ops::Range;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};

use crate::rng::{derive_seed, rng_from_seed};
use crate::stats::{normal_quantile, Standardizer};
use crate::temporal::{edge_key, Node, NodeScores, Snapshot, TemporalNetwork};
use crate::{Error, Result};

pub use mple::{fit_logistic, logistic_gradient, LogisticDesign, LogisticFit, MpleOptions};

pub const TERMS: [&str; 3] = ["edges", "mutual", "absdiff"];

/// Contiguous weeks `start..=end`; transitions are `t -> t+1` for
/// `t in start..end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockSpec {
    pub start: u32,
    pub end: u32,
}

impl BlockSpec {
    pub fn len(&self) -> u32 {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Interval-start weeks.
    pub fn transitions(&self) -> Range<u32> {
        self.start..self.end
    }
}

/// Splits weeks `1..=weeks` into consecutive blocks of `block_len`. A final
/// block of a single week has no transition and is merged into the one
/// before it.
pub fn make_blocks(weeks: u32, block_len: u32) -> Result<Vec<BlockSpec>> {
    if block_len < 2 {
        return Err(Error::InvalidConfig(format!(
            "block length {block_len} < 2"
        )));
    }
    if weeks < 2 {
        return Err(Error::InsufficientData(format!(
            "{weeks} week(s); need at least 2"
        )));
    }
    let mut blocks: Vec<BlockSpec> = (1..=weeks)
        .step_by(block_len as usize)
        .map(|start| BlockSpec {
            start,
            end: (start + block_len - 1).min(weeks),
        })
        .collect();
    if blocks.len() > 1 && blocks.last().is_some_and(|b| b.len() == 1) {
        let tail = blocks.pop().unwrap();
        blocks.last_mut().unwrap().end = tail.end;
    }
    Ok(blocks)
}

/// Ordered pairs of distinct `actors` with no tie in `current`.
pub fn risk_set_among(current: &Snapshot, actors: &[Node]) -> Vec<(Node, Node)> {
    let mut mark = vec![u32::MAX; current.n_nodes()];
    let mut out = Vec::new();
    for (k, &i) in actors.iter().enumerate() {
        for &j in current.out_neighbors(i) {
            mark[j as usize] = k as u32;
        }
        out.extend(
            actors
                .iter()
                .filter(|&&j| j != i && mark[j as usize] != k as u32)
                .map(|&j| (i, j)),
        );
    }
    out
}

/// Dyads at risk for transition `t -> t+1`: every ordered pair of actors
/// active at `t+1` that is not tied at `t`.
pub fn formation_risk_set(net: &TemporalNetwork, t: u32) -> Result<Vec<(Node, Node)>> {
    if t >= net.weeks() {
        return Err(Error::WeekOutOfRange {
            week: t + 1,
            max: net.weeks(),
        });
    }
    let current = net.snapshot(t)?;
    let next = net.snapshot(t + 1)?;
    Ok(risk_set_among(&current, &next.active_nodes()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskSetRow {
    /// Interval start `t`.
    pub week: u32,
    pub follower: Node,
    pub followee: Node,
    pub formed: bool,
    pub mutual: bool,
    pub absdiff: f64,
}

impl RiskSetRow {
    pub fn stat_edges(&self) -> f64 {
        1.0
    }

    pub fn stats(&self) -> [f64; 3] {
        [1.0, f64::from(u8::from(self.mutual)), self.absdiff]
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChangeStatistics {
    pub rows: Vec<RiskSetRow>,
    /// Dyads dropped because an endpoint has no score.
    pub dropped: Vec<(Node, Node)>,
}

/// Change statistics for the dyads of one transition, conditioning mutual
/// on the end-of-interval network `next`. `z` holds week-`t` standardized
/// scores by node.
pub fn change_statistics(
    week: u32,
    risk_set: &[(Node, Node)],
    next: &Snapshot,
    z: &[Option<f64>],
) -> ChangeStatistics {
    let mut out = ChangeStatistics::default();
    for &(i, j) in risk_set {
        match (z[i as usize], z[j as usize]) {
            (Some(zi), Some(zj)) => out.rows.push(RiskSetRow {
                week,
                follower: i,
                followee: j,
                formed: next.has_edge(i, j),
                mutual: next.has_edge(j, i),
                absdiff: (zi - zj).abs(),
            }),
            _ => out.dropped.push((i, j)),
        }
    }
    out
}

/// Week-`t` scores of `members` standardized over `members` (sample sd);
/// other nodes are `None`.
pub fn standardized_week(
    scores: &NodeScores,
    members: &[Node],
    t: u32,
) -> Result<Vec<Option<f64>>> {
    let week = scores.week(t);
    let raw: Vec<f64> = members
        .iter()
        .map(|&m| {
            week[m as usize].ok_or_else(|| {
                Error::DegenerateScope(format!("node {m} has no score in week {t}"))
            })
        })
        .collect::<Result<_>>()?;
    let s = Standardizer::fit(&raw)?;
    let mut z = vec![None; scores.n_nodes()];
    for (&m, &x) in members.iter().zip(&raw) {
        z[m as usize] = Some(s.apply(x));
    }
    Ok(z)
}

/// Compact MPLE design: flags (bit 0 formed, bit 1 mutual), absdiff and an
/// optional per-row offset.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FormationDesign {
    flags: Vec<u8>,
    absdiff: Vec<f64>,
    offset: Vec<f64>,
    weeks: Vec<u32>,
}

impl FormationDesign {
    pub fn from_rows(rows: &[RiskSetRow]) -> Self {
        let mut d = Self::default();
        for r in rows {
            d.push(r.week, r.formed, r.mutual, r.absdiff, 0.0);
        }
        d
    }

    fn push(&mut self, week: u32, formed: bool, mutual: bool, absdiff: f64, offset: f64) {
        self.flags.push(u8::from(formed) | (u8::from(mutual) << 1));
        self.absdiff.push(absdiff);
        if offset != 0.0 && self.offset.is_empty() {
            self.offset.resize(self.flags.len() - 1, 0.0);
        }
        if !self.offset.is_empty() {
            self.offset.push(offset);
        }
        self.weeks.push(week);
    }

    pub fn n_rows(&self) -> usize {
        self.flags.len()
    }

    pub fn n_events(&self) -> usize {
        self.flags.iter().filter(|&&f| f & 1 == 1).count()
    }

    fn week_range(&self) -> Option<BlockSpec> {
        let lo = *self.weeks.iter().min()?;
        let hi = *self.weeks.iter().max()?;
        Some(BlockSpec {
            start: lo,
            end: hi + 1,
        })
    }
}

impl LogisticDesign<3> for FormationDesign {
    fn len(&self) -> usize {
        self.flags.len()
    }

    fn row(&self, i: usize) -> [f64; 3] {
        [1.0, f64::from((self.flags[i] >> 1) & 1), self.absdiff[i]]
    }

    fn response(&self, i: usize) -> bool {
        self.flags[i] & 1 == 1
    }

    fn offset(&self, i: usize) -> f64 {
        self.offset.get(i).copied().unwrap_or(0.0)
    }
}

/// One block's MPLE estimate. Coefficients are ordered as [`TERMS`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormationFit {
    pub block: BlockSpec,
    pub phi: [f64; 3],
    pub std_errors: [f64; 3],
    pub odds_ratio_abs: f64,
    pub n_rows: usize,
    pub n_events: usize,
    pub converged: bool,
    pub iterations: usize,
    pub max_gradient: f64,
    /// Non-events were case-control subsampled (offset-corrected).
    pub subsampled: bool,
    pub roster_size: usize,
}

impl FormationFit {
    pub fn phi_edges(&self) -> f64 {
        self.phi[0]
    }

    pub fn phi_mutual(&self) -> f64 {
        self.phi[1]
    }

    pub fn phi_abs(&self) -> f64 {
        self.phi[2]
    }

    pub fn se_abs(&self) -> f64 {
        self.std_errors[2]
    }

    /// Wald interval for the absdiff odds ratio.
    pub fn odds_ratio_ci(&self, level: f64) -> (f64, f64) {
        let q = normal_quantile(0.5 + level / 2.0);
        (
            (self.phi[2] - q * self.std_errors[2]).exp(),
            (self.phi[2] + q * self.std_errors[2]).exp(),
        )
    }
}

pub fn odds_ratio(phi: f64) -> f64 {
    phi.exp()
}

fn fit_design(
    design: &FormationDesign,
    block: BlockSpec,
    opts: &MpleOptions,
    subsampled: bool,
    roster_size: usize,
) -> Result<FormationFit> {
    let f = fit_logistic(design, opts)?;
    Ok(FormationFit {
        block,
        phi: f.coefficients,
        std_errors: f.std_errors,
        odds_ratio_abs: odds_ratio(f.coefficients[2]),
        n_rows: design.n_rows(),
        n_events: design.n_events(),
        converged: f.converged,
        iterations: f.iterations,
        max_gradient: f.max_gradient,
        subsampled,
        roster_size,
    })
}

/// Logistic MPLE of `formed` on (edges, mutual, absdiff) over `rows`.
pub fn fit_formation_mple(rows: &[RiskSetRow]) -> Result<FormationFit> {
    fit_formation_mple_with(rows, &MpleOptions::default())
}

pub fn fit_formation_mple_with(rows: &[RiskSetRow], opts: &MpleOptions) -> Result<FormationFit> {
    let design = FormationDesign::from_rows(rows);
    let block = design
        .week_range()
        .ok_or_else(|| Error::InsufficientData("no risk-set rows".into()))?;
    let actors: FxHashSet<Node> = rows.iter().flat_map(|r| [r.follower, r.followee]).collect();
    fit_design(&design, block, opts, false, actors.len())
}

/// Population over which week-`t` scores are standardized for absdiff.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreScope {
    /// Actors incident to a tie by the block's last week.
    #[default]
    BlockRoster,
    /// Every node with scores.
    AllScored,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub block_len: u32,
    /// Largest block roster for which every dyad is enumerated.
    pub full_enumeration_max: usize,
    /// Non-events kept per event when subsampling.
    pub nonevent_ratio: f64,
    pub seed: u64,
    pub score_scope: ScoreScope,
    pub mple: MpleOptions,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            block_len: 8,
            full_enumeration_max: 3000,
            nonevent_ratio: 20.0,
            seed: 0,
            score_scope: ScoreScope::BlockRoster,
            mple: MpleOptions::default(),
        }
    }
}

/// Scored actors incident to at least one tie of `E(block.end)`.
pub fn block_roster(
    net: &TemporalNetwork,
    scores: &NodeScores,
    block: BlockSpec,
) -> Result<Vec<Node>> {
    let mut seen = vec![false; net.n_nodes()];
    for &(u, v) in net.edges_through(block.end)? {
        seen[u as usize] = true;
        seen[v as usize] = true;
    }
    Ok((0..net.n_nodes() as Node)
        .filter(|&u| seen[u as usize] && scores.has_scores(u))
        .collect())
}

/// Per-transition bookkeeping of a block design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionSummary {
    pub week: u32,
    pub n_active: usize,
    pub n_risk: u64,
    pub n_events: usize,
    pub n_rows: usize,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockDesign {
    pub block: BlockSpec,
    pub design: FormationDesign,
    pub roster_size: usize,
    pub subsampled: bool,
    pub transitions: Vec<TransitionSummary>,
}

struct Transition {
    week: u32,
    current: Snapshot,
    next: Snapshot,
    active: Vec<Node>,
    z: Vec<Option<f64>>,
    n_events: usize,
    n_risk: u64,
}

/// Builds the pooled design for a block, enumerating every dyad or, for
/// large rosters, keeping all events and a uniform sample of non-events
/// with the log inverse sampling fraction as offset.
pub fn block_design(
    net: &TemporalNetwork,
    scores: &NodeScores,
    block: BlockSpec,
    cfg: &SelectionConfig,
) -> Result<BlockDesign> {
    if block.start >= block.end || block.end > net.weeks() {
        return Err(Error::InvalidConfig(format!(
            "block {}..={} has no transition within 1..={}",
            block.start,
            block.end,
            net.weeks()
        )));
    }
    let roster = block_roster(net, scores, block)?;
    let scope: Vec<Node> = match cfg.score_scope {
        ScoreScope::BlockRoster => roster.clone(),
        ScoreScope::AllScored => (0..net.n_nodes() as Node)
            .filter(|&u| scores.has_scores(u))
            .collect(),
    };
    let mut in_roster = vec![false; net.n_nodes()];
    for &u in &roster {
        in_roster[u as usize] = true;
    }
    let mut transitions = Vec::new();
    for t in block.transitions() {
        let current = net.snapshot(t)?;
        let next = net.snapshot(t + 1)?;
        let active: Vec<Node> = roster
            .iter()
            .copied()
            .filter(|&u| next.is_active(u))
            .collect();
        let mut is_active = vec![false; net.n_nodes()];
        for &u in &active {
            is_active[u as usize] = true;
        }
        let within = |&(u, v): &(Node, Node)| is_active[u as usize] && is_active[v as usize];
        let tied = current.edges().iter().filter(|e| within(e)).count() as u64;
        let n_events = net.formed_in(t + 1)?.iter().filter(|e| within(e)).count();
        let a = active.len() as u64;
        let n_risk = a * a.saturating_sub(1) - tied;
        let z = standardized_week(scores, &scope, t)?;
        transitions.push(Transition {
            week: t,
            current,
            next,
            active,
            z,
            n_events,
            n_risk,
        });
    }

    let subsampled = roster.len() > cfg.full_enumeration_max;
    let mut design = FormationDesign::default();
    let mut summaries = Vec::new();
    if !subsampled {
        for tr in &transitions {
            let before = design.n_rows();
            enumerate_transition(tr, &mut design);
            summaries.push(tr.summary(design.n_rows() - before, 0.0));
        }
    } else {
        if !(cfg.nonevent_ratio > 0.0) {
            return Err(Error::InvalidConfig("nonevent_ratio must be positive".into()));
        }
        let events: u64 = transitions.iter().map(|t| t.n_events as u64).sum();
        let nonevents: u64 = transitions.iter().map(|t| t.n_risk - t.n_events as u64).sum();
        let fraction = if nonevents == 0 {
            1.0
        } else {
            (cfg.nonevent_ratio * events as f64 / nonevents as f64).min(1.0)
        };
        for tr in &transitions {
            let before = design.n_rows();
            let offset = sample_transition(tr, fraction, cfg.seed, &mut design);
            summaries.push(tr.summary(design.n_rows() - before, offset));
        }
    }
    Ok(BlockDesign {
        block,
        design,
        roster_size: roster.len(),
        subsampled,
        transitions: summaries,
    })
}

impl Transition {
    fn summary(&self, n_rows: usize, offset: f64) -> TransitionSummary {
        TransitionSummary {
            week: self.week,
            n_active: self.active.len(),
            n_risk: self.n_risk,
            n_events: self.n_events,
            n_rows,
            offset,
        }
    }

    fn absdiff(&self, i: Node, j: Node) -> f64 {
        // Active actors are in the standardization scope by construction.
        (self.z[i as usize].unwrap() - self.z[j as usize].unwrap()).abs()
    }
}

fn enumerate_transition(tr: &Transition, design: &mut FormationDesign) {
    let n = tr.current.n_nodes();
    let (mut cur, mut nxt, mut rev) = (vec![u32::MAX; n], vec![u32::MAX; n], vec![u32::MAX; n]);
    for (k, &i) in tr.active.iter().enumerate() {
        let k = k as u32;
        for &j in tr.current.out_neighbors(i) {
            cur[j as usize] = k;
        }
        for &j in tr.next.out_neighbors(i) {
            nxt[j as usize] = k;
        }
        for &j in tr.next.in_neighbors(i) {
            rev[j as usize] = k;
        }
        for &j in &tr.active {
            let ju = j as usize;
            if j == i || cur[ju] == k {
                continue;
            }
            design.push(tr.week, nxt[ju] == k, rev[ju] == k, tr.absdiff(i, j), 0.0);
        }
    }
}

/// Adds all events and about `fraction` of the non-events; returns the
/// offset used for the transition.
fn sample_transition(
    tr: &Transition,
    fraction: f64,
    seed: u64,
    design: &mut FormationDesign,
) -> f64 {
    let n0 = tr.n_risk - tr.n_events as u64;
    let k = ((fraction * n0 as f64).round() as u64).min(n0);
    let offset = if k == 0 { 0.0 } else { (n0 as f64 / k as f64).ln() };
    let mut is_active = vec![false; tr.current.n_nodes()];
    for &u in &tr.active {
        is_active[u as usize] = true;
    }
    let events: Vec<(Node, Node)> = tr
        .next
        .edges()
        .iter()
        .copied()
        .filter(|&(u, v)| {
            is_active[u as usize] && is_active[v as usize] && !tr.current.has_edge(u, v)
        })
        .collect();
    for &(i, j) in &events {
        design.push(tr.week, true, tr.next.has_edge(j, i), tr.absdiff(i, j), offset);
    }
    if k == 0 {
        return offset;
    }
    let mut rng = rng_from_seed(derive_seed(seed, &[3, u64::from(tr.week)]));
    let a = tr.active.len();
    let mut chosen: Vec<(Node, Node)> = Vec::with_capacity(k as usize);
    if k * 2 > n0 {
        // Dense request: enumerate non-events and pick an index subset.
        let all: Vec<(Node, Node)> = tr
            .active
            .iter()
            .flat_map(|&i| tr.active.iter().map(move |&j| (i, j)))
            .filter(|&(i, j)| i != j && !tr.next.has_edge(i, j))
            .collect();
        let mut idx = index::sample(&mut rng, all.len(), k as usize).into_vec();
        idx.sort_unstable();
        chosen.extend(idx.into_iter().map(|x| all[x]));
    } else {
        let mut seen = FxHashSet::default();
        while (chosen.len() as u64) < k {
            let i = tr.active[rng.random_range(0..a)];
            let j = tr.active[rng.random_range(0..a)];
            if i == j || tr.next.has_edge(i, j) || !seen.insert(edge_key(i, j)) {
                continue;
            }
            chosen.push((i, j));
        }
    }
    for (i, j) in chosen {
        design.push(tr.week, false, tr.next.has_edge(j, i), tr.absdiff(i, j), offset);
    }
    offset
}

/// Pools every transition in `block` into one MPLE fit.
pub fn fit_block(
    net: &TemporalNetwork,
    scores: &NodeScores,
    block: BlockSpec,
    cfg: &SelectionConfig,
) -> Result<FormationFit> {
    let bd = block_design(net, scores, block, cfg)?;
    fit_design(&bd.design, block, &cfg.mple, bd.subsampled, bd.roster_size)
}

/// Fits every block of the panel; blocks run in parallel.
pub fn fit_blocks(
    net: &TemporalNetwork,
    scores: &NodeScores,
    cfg: &SelectionConfig,
) -> Result<Vec<(BlockSpec, Result<FormationFit>)>> {
    let blocks = make_blocks(net.weeks(), cfg.block_len)?;
    Ok(blocks
        .into_par_iter()
        .map(|b| (b, fit_block(net, scores, b, cfg)))
        .collect())
}
