//! Planted-parameter simulator.
//!
//! Each week every agent proposes a Poisson number of candidate ties; a
//! candidate `(i, j)` forms with probability
//! `logistic(θ_edges + θ_mutual·[j→i] + θ_abs·|z_i − z_j|)` using the
//! previous week's scores standardized over all agents. Scores follow
//!
//! `X_it = X_{i,t-1} + φ(μ_i − X_{i,t-1}) + γ(X̄_{N(i),t-1} − X_{i,t-1}) + ε_it`
//!
//! clipped to [0, 100] and rounded to integers. The per-transition ledger
//! records every candidate with the statistics the kernel saw.

use std::io::Write;

use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Distribution, LogNormal, Normal, Poisson};
use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};

use crate::rng::{rng_from_seed, SimRng};
use crate::selection::RiskSetRow;
use crate::stats::{mean, sample_variance};
use crate::temporal::{
    edge_key, AgentId, FollowEvent, Node, NodeScores, Roster, ScoreObservation, Snapshot,
    TemporalNetwork,
};
use crate::{Error, Result};

/// Two-component normal mixture for the agents' baseline scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoreMixture {
    pub means: [f64; 2],
    pub sds: [f64; 2],
    /// Probability of the first component.
    pub weight: f64,
}

impl Default for ScoreMixture {
    fn default() -> Self {
        Self {
            means: [30.0, 75.0],
            sds: [10.0, 10.0],
            weight: 0.5,
        }
    }
}

/// From `week` on, selection and influence switch to new values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeSwitch {
    pub week: u32,
    pub theta_abs: f64,
    pub gamma_sim: f64,
}

/// Unobserved shock shared along ties. Every agent carries an AR(1) state
/// `q_it` that enters its own score change, and `loading` times the mean
/// `q` of its followees enters it one week later. The peer term is then
/// correlated with the error, which makes it endogenous for OLS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeerShock {
    pub rho: f64,
    pub sd: f64,
    pub loading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n_agents: usize,
    pub weeks: u32,
    pub mixture: ScoreMixture,
    pub theta_edges: f64,
    pub theta_mutual: f64,
    pub theta_abs: f64,
    pub phi_sim: f64,
    pub gamma_sim: f64,
    pub noise_sd: f64,
    /// Expected candidate ties per agent per week.
    pub candidate_rate: f64,
    pub regime_switch: Option<RegimeSwitch>,
    pub seed: u64,
    /// Probability that a weekly score is emitted; the rest are left for
    /// imputation.
    pub observe_prob: f64,
    /// Log-sd of per-agent multipliers on the candidate rate.
    pub activity_sd: f64,
    /// Log-sd of per-agent weights for being picked as a candidate target.
    pub popularity_sd: f64,
    pub peer_shock: Option<PeerShock>,
    pub record_ledger: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_agents: 500,
            weeks: 52,
            mixture: ScoreMixture::default(),
            theta_edges: -3.0,
            theta_mutual: 1.0,
            theta_abs: -0.5,
            phi_sim: 0.1,
            gamma_sim: 0.1,
            noise_sd: 3.0,
            candidate_rate: 10.0,
            regime_switch: None,
            seed: 0,
            observe_prob: 1.0,
            activity_sd: 0.0,
            popularity_sd: 0.0,
            peer_shock: None,
            record_ledger: true,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_agents < 2 {
            return bad(format!("n_agents = {} < 2", self.n_agents));
        }
        if self.weeks < 2 {
            return bad(format!("weeks = {} < 2", self.weeks));
        }
        if !(0.0..=1.0).contains(&self.phi_sim) {
            return bad(format!("phi_sim = {} outside [0, 1]", self.phi_sim));
        }
        if !(self.gamma_sim >= 0.0) {
            return bad(format!("gamma_sim = {} < 0", self.gamma_sim));
        }
        if !(self.noise_sd >= 0.0) || !(self.candidate_rate >= 0.0) {
            return bad("noise_sd and candidate_rate must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.mixture.weight)
            || self.mixture.sds.iter().any(|s| !(*s >= 0.0))
        {
            return bad("mixture weight must be in [0, 1] and sds non-negative".into());
        }
        if !(self.observe_prob > 0.0 && self.observe_prob <= 1.0) {
            return bad(format!("observe_prob = {} outside (0, 1]", self.observe_prob));
        }
        if !(self.activity_sd >= 0.0) || !(self.popularity_sd >= 0.0) {
            return bad("activity_sd and popularity_sd must be non-negative".into());
        }
        if let Some(s) = self.regime_switch {
            if s.week < 2 || s.week > self.weeks || !(s.gamma_sim >= 0.0) {
                return bad(format!("regime switch week {} outside 2..={}", s.week, self.weeks));
            }
        }
        if let Some(p) = self.peer_shock {
            if !(p.rho.abs() < 1.0) || !(p.sd >= 0.0) {
                return bad("peer shock needs |rho| < 1 and sd >= 0".into());
            }
        }
        Ok(())
    }

    /// `(theta_abs, gamma_sim)` in force when week `w` is generated.
    pub fn params_at(&self, w: u32) -> (f64, f64) {
        match self.regime_switch {
            Some(s) if w >= s.week => (s.theta_abs, s.gamma_sim),
            _ => (self.theta_abs, self.gamma_sim),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeekParams {
    pub week: u32,
    pub theta_abs: f64,
    pub gamma_sim: f64,
}

/// Planted coefficients in machine-readable form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTruth {
    /// `(θ_edges, θ_mutual, θ_abs)` before any regime switch.
    pub theta: [f64; 3],
    pub phi_sim: f64,
    pub gamma_sim: f64,
    pub regime_switch: Option<RegimeSwitch>,
    pub peer_shock: Option<PeerShock>,
    pub schedule: Vec<WeekParams>,
    pub seed: u64,
    pub config: SimConfig,
}

pub fn planted_truth(cfg: &SimConfig) -> PlantedTruth {
    PlantedTruth {
        theta: [cfg.theta_edges, cfg.theta_mutual, cfg.theta_abs],
        phi_sim: cfg.phi_sim,
        gamma_sim: cfg.gamma_sim,
        regime_switch: cfg.regime_switch,
        peer_shock: cfg.peer_shock,
        schedule: (1..=cfg.weeks)
            .map(|week| {
                let (theta_abs, gamma_sim) = cfg.params_at(week);
                WeekParams {
                    week,
                    theta_abs,
                    gamma_sim,
                }
            })
            .collect(),
        seed: cfg.seed,
        config: cfg.clone(),
    }
}

/// One candidate dyad. `week` is the interval start `t` (0 for the ties
/// seeded in week 1); the tie, if formed, appears at `t + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub week: u32,
    pub follower: Node,
    pub followee: Node,
    pub mutual: bool,
    pub absdiff: f64,
    pub formed: bool,
}

impl LedgerRow {
    pub fn to_risk_row(&self) -> RiskSetRow {
        RiskSetRow {
            week: self.week,
            follower: self.follower,
            followee: self.followee,
            formed: self.formed,
            mutual: self.mutual,
            absdiff: self.absdiff,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    pub planted: PlantedTruth,
    pub ledger: Vec<LedgerRow>,
    /// Candidates and formed ties per generated week (index `w - 1`).
    pub candidates_per_week: Vec<usize>,
    pub formed_per_week: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub events: Vec<FollowEvent>,
    /// Emitted (possibly thinned) observations.
    pub scores: Vec<ScoreObservation>,
    pub truth: SimTruth,
    agents: Vec<AgentId>,
    timed: Vec<(u32, Node, Node)>,
    /// Complete simulated scores, week-major.
    complete: Vec<Vec<f64>>,
}

impl SimOutput {
    pub fn agents(&self) -> &[AgentId] {
        &self.agents
    }

    /// Network over all simulated agents, node `i` being agent `i`.
    pub fn network(&self) -> Result<TemporalNetwork> {
        TemporalNetwork::from_indexed(
            Roster::new(self.agents.iter().cloned()),
            self.timed.clone(),
            self.complete.len() as u32,
        )
    }

    /// The simulated scores without observation thinning.
    pub fn node_scores(&self) -> NodeScores {
        NodeScores::from_weeks(
            self.complete
                .iter()
                .map(|w| w.iter().map(|&x| Some(x)).collect())
                .collect(),
        )
    }

    pub fn complete_score(&self, node: Node, week: u32) -> f64 {
        self.complete[week as usize - 1][node as usize]
    }

    pub fn write_events<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["follower", "followee", "week"])?;
        for e in &self.events {
            w.write_record([e.follower.as_str(), e.followee.as_str(), &e.week.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_scores<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["agent", "week", "score"])?;
        for s in &self.scores {
            w.write_record([
                s.agent.as_str(),
                &s.week.to_string(),
                &format!("{}", s.score as i64),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn agent_ids(n: usize) -> Vec<AgentId> {
    let width = (n.saturating_sub(1).to_string().len()).max(5);
    (0..n).map(|i| AgentId::from(format!("agent{i:0width$}"))).collect()
}

/// z-scores over all agents with the sample sd; all zero if constant.
fn standardize_all(x: &[f64]) -> Vec<f64> {
    let m = mean(x);
    let sd = sample_variance(x).sqrt();
    if sd > 0.0 {
        x.iter().map(|v| (v - m) / sd).collect()
    } else {
        vec![0.0; x.len()]
    }
}

fn multipliers(rng: &mut SimRng, n: usize, log_sd: f64) -> Vec<f64> {
    if log_sd == 0.0 {
        return vec![1.0; n];
    }
    // Unit-mean lognormal.
    let d = LogNormal::new(-0.5 * log_sd * log_sd, log_sd).expect("valid lognormal");
    (0..n).map(|_| d.sample(rng)).collect()
}

/// Runs the simulator. Deterministic for a given configuration.
pub fn simulate(cfg: &SimConfig) -> Result<SimOutput> {
    cfg.validate()?;
    let n = cfg.n_agents;
    let weeks = cfg.weeks;
    let mut rng = rng_from_seed(cfg.seed);
    let agents = agent_ids(n);

    let mix = cfg.mixture;
    let comp: Vec<Normal<f64>> = (0..2)
        .map(|c| Normal::new(mix.means[c], mix.sds[c]).expect("validated sd"))
        .collect();
    let mu: Vec<f64> = (0..n)
        .map(|_| {
            let c = usize::from(rng.random::<f64>() >= mix.weight);
            comp[c].sample(&mut rng).clamp(0.0, 100.0)
        })
        .collect();
    let noise = Normal::new(0.0, cfg.noise_sd).expect("validated sd");
    let activity = multipliers(&mut rng, n, cfg.activity_sd);
    let popularity = multipliers(&mut rng, n, cfg.popularity_sd);
    let target_dist = (cfg.popularity_sd > 0.0)
        .then(|| WeightedAliasIndex::new(popularity.clone()))
        .transpose()
        .map_err(|e| Error::InvalidConfig(format!("popularity weights: {e}")))?;
    let shock_dist = cfg
        .peer_shock
        .map(|p| Normal::new(0.0, p.sd).expect("validated sd"));

    let round = |x: f64| x.clamp(0.0, 100.0).round();
    let mut complete: Vec<Vec<f64>> = Vec::with_capacity(weeks as usize);
    complete.push(mu.iter().map(|&m| round(m + noise.sample(&mut rng))).collect());
    let mut q = vec![0.0; n];
    if let (Some(p), Some(d)) = (cfg.peer_shock, &shock_dist) {
        // Start the AR(1) state from its stationary law.
        let scale = 1.0 / (1.0 - p.rho * p.rho).sqrt();
        q.iter_mut().for_each(|v| *v = d.sample(&mut rng) * scale);
    }

    let mut followees: Vec<Vec<Node>> = vec![Vec::new(); n];
    let mut tied: FxHashSet<u64> = FxHashSet::default();
    let mut timed = Vec::new();
    let mut ledger = Vec::new();
    let mut candidates_per_week = Vec::with_capacity(weeks as usize);
    let mut formed_per_week = Vec::with_capacity(weeks as usize);

    for w in 1..=weeks {
        let (theta_abs, gamma) = cfg.params_at(w);
        if w >= 2 {
            let prev = &complete[w as usize - 2];
            let mut next = Vec::with_capacity(n);
            let new_q: Vec<f64> = match (cfg.peer_shock, &shock_dist) {
                (Some(p), Some(d)) => q.iter().map(|&v| p.rho * v + d.sample(&mut rng)).collect(),
                _ => Vec::new(),
            };
            for i in 0..n {
                let x = prev[i];
                let nb = &followees[i];
                let peer = if nb.is_empty() {
                    x
                } else {
                    nb.iter().map(|&j| prev[j as usize]).sum::<f64>() / nb.len() as f64
                };
                let mut v = x + cfg.phi_sim * (mu[i] - x) + gamma * (peer - x) + noise.sample(&mut rng);
                if let Some(p) = cfg.peer_shock {
                    v += new_q[i];
                    if !nb.is_empty() {
                        v += p.loading * nb.iter().map(|&j| q[j as usize]).sum::<f64>()
                            / nb.len() as f64;
                    }
                }
                next.push(round(v));
            }
            if cfg.peer_shock.is_some() {
                q = new_q;
            }
            complete.push(next);
        }

        // Formation for E(w) from E(w-1) and scores at max(w-1, 1).
        let basis = (w.max(2) - 2) as usize;
        let z = standardize_all(&complete[basis]);
        let mut proposed: FxHashSet<u64> = FxHashSet::default();
        let mut new_ties = Vec::new();
        let mut n_candidates = 0usize;
        for i in 0..n {
            let rate = cfg.candidate_rate * activity[i];
            if rate <= 0.0 {
                continue;
            }
            let k = Poisson::new(rate).expect("positive rate").sample(&mut rng) as usize;
            for _ in 0..k {
                let j = match &target_dist {
                    Some(d) => d.sample(&mut rng),
                    None => rng.random_range(0..n),
                };
                let (iu, ju) = (i as Node, j as Node);
                if j == i
                    || tied.contains(&edge_key(iu, ju))
                    || proposed.contains(&edge_key(iu, ju))
                    || proposed.contains(&edge_key(ju, iu))
                {
                    continue;
                }
                proposed.insert(edge_key(iu, ju));
                n_candidates += 1;
                let mutual = tied.contains(&edge_key(ju, iu));
                let absdiff = (z[i] - z[j]).abs();
                let eta = cfg.theta_edges
                    + if mutual { cfg.theta_mutual } else { 0.0 }
                    + theta_abs * absdiff;
                let formed = rng.random::<f64>() < sigmoid(eta);
                if cfg.record_ledger {
                    ledger.push(LedgerRow {
                        week: w - 1,
                        follower: iu,
                        followee: ju,
                        mutual,
                        absdiff,
                        formed,
                    });
                }
                if formed {
                    new_ties.push((iu, ju));
                }
            }
        }
        candidates_per_week.push(n_candidates);
        formed_per_week.push(new_ties.len());
        for (u, v) in new_ties {
            tied.insert(edge_key(u, v));
            followees[u as usize].push(v);
            timed.push((w, u, v));
        }
    }

    let events = timed
        .iter()
        .map(|&(w, u, v)| FollowEvent {
            follower: agents[u as usize].clone(),
            followee: agents[v as usize].clone(),
            week: w,
        })
        .collect();
    let mut scores = Vec::with_capacity(n * weeks as usize);
    for i in 0..n {
        for w in 1..=weeks {
            if cfg.observe_prob >= 1.0 || rng.random::<f64>() < cfg.observe_prob {
                scores.push(ScoreObservation {
                    agent: agents[i].clone(),
                    week: w,
                    score: complete[w as usize - 1][i],
                });
            }
        }
    }

    Ok(SimOutput {
        events,
        scores,
        truth: SimTruth {
            planted: planted_truth(cfg),
            ledger,
            candidates_per_week,
            formed_per_week,
        },
        agents,
        timed,
        complete,
    })
}

/// Random simple digraph with `m` ties whose in- and out-degrees follow
/// independent power-law weights `w_i ∝ (i + 1)^(-1/(exponent - 1))`.
pub fn heavy_tail_digraph(n: usize, m: usize, exponent: f64, seed: u64) -> Result<Snapshot> {
    if n < 2 || !(exponent > 1.0) {
        return Err(Error::InvalidConfig(
            "heavy-tail graph needs n >= 2 and exponent > 1".into(),
        ));
    }
    if m > n * (n - 1) / 4 {
        return Err(Error::InvalidConfig(format!(
            "{m} ties too dense for {n} nodes"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let a = 1.0 / (exponent - 1.0);
    let weights: Vec<f64> = (0..n).map(|i| ((i + 1) as f64).powf(-a)).collect();
    let shuffled = |rng: &mut SimRng| {
        let mut w = weights.clone();
        for i in (1..n).rev() {
            w.swap(i, rng.random_range(0..=i));
        }
        WeightedAliasIndex::new(w).expect("positive weights")
    };
    let out_d = shuffled(&mut rng);
    let in_d = shuffled(&mut rng);
    let mut seen = FxHashSet::default();
    let mut edges = Vec::with_capacity(m);
    while edges.len() < m {
        let u = out_d.sample(&mut rng) as Node;
        let v = in_d.sample(&mut rng) as Node;
        if u != v && seen.insert(edge_key(u, v)) {
            edges.push((u, v));
        }
    }
    Snapshot::from_edges(n, edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SimConfig {
        SimConfig {
            n_agents: 60,
            weeks: 6,
            candidate_rate: 4.0,
            seed: 9,
            ..SimConfig::default()
        }
    }

    #[test]
    fn deterministic() {
        let a = simulate(&small()).unwrap();
        let b = simulate(&small()).unwrap();
        let (mut ea, mut eb) = (Vec::new(), Vec::new());
        a.write_events(&mut ea).unwrap();
        b.write_events(&mut eb).unwrap();
        assert_eq!(ea, eb);
        let (mut sa, mut sb) = (Vec::new(), Vec::new());
        a.write_scores(&mut sa).unwrap();
        b.write_scores(&mut sb).unwrap();
        assert_eq!(sa, sb);
    }

    #[test]
    fn ledger_matches_events() {
        let out = simulate(&small()).unwrap();
        let formed: Vec<_> = out.truth.ledger.iter().filter(|r| r.formed).collect();
        assert_eq!(formed.len(), out.events.len());
        assert_eq!(
            out.truth.ledger.len(),
            out.truth.candidates_per_week.iter().sum::<usize>()
        );
        let net = out.network().unwrap();
        net.verify_invariants().unwrap();
        for r in formed {
            assert!(net.formed_in(r.week + 1).unwrap().contains(&(r.follower, r.followee)));
        }
        assert!(out.scores.iter().all(|s| (0.0..=100.0).contains(&s.score)));
    }

    #[test]
    fn truth_echoes_config() {
        let cfg = SimConfig {
            regime_switch: Some(RegimeSwitch {
                week: 4,
                theta_abs: 0.0,
                gamma_sim: 0.3,
            }),
            ..small()
        };
        let t = planted_truth(&cfg);
        assert_eq!(t.theta, [cfg.theta_edges, cfg.theta_mutual, cfg.theta_abs]);
        assert_eq!(t.schedule[2].theta_abs, cfg.theta_abs);
        assert_eq!(t.schedule[3].gamma_sim, 0.3);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(simulate(&SimConfig { n_agents: 1, ..small() }).is_err());
        assert!(simulate(&SimConfig { phi_sim: 1.5, ..small() }).is_err());
    }

    #[test]
    fn heavy_tail_has_hubs() {
        let g = heavy_tail_digraph(1000, 5000, 2.2, 1).unwrap();
        assert_eq!(g.n_edges(), 5000);
        let max_in = g.in_degrees().into_iter().max().unwrap();
        assert!(max_in > 100);
    }
}
