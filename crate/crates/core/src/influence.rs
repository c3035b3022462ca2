//! Peer-influence panel regressions.
//!
//! `ΔX_it = φ X_{i,t-1} + γ X̄_{N(i),t-1} + α_i + τ_t + ε_it`, where the peer
//! term averages the lagged scores of `i`'s followees. Fixed effects are
//! absorbed by alternating demeaning; standard errors are clustered by
//! agent. The IV variant instruments the peer term with the lagged mean
//! score of distance-two accounts that `i` does not follow.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::selection::BlockSpec;
use crate::stats::{two_sided_t_pvalue, Standardizer};
use crate::temporal::{Node, NodeScores, Snapshot, TemporalNetwork};
use crate::{Error, Result};

/// One agent-week in raw score units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PanelRow {
    pub node: Node,
    pub week: u32,
    pub delta: f64,
    pub lag_self: f64,
    pub lag_peer: f64,
    pub instrument: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PanelBuild {
    pub rows: Vec<PanelRow>,
    /// Agent-weeks skipped because the agent followed no scored account at
    /// `t-1`.
    pub dropped_no_followees: usize,
    /// Rows kept for OLS whose instrument is undefined.
    pub missing_instrument: usize,
}

/// Mean lagged score of followees, or `None` without scored followees.
fn peer_mean(prev: &Snapshot, scores: &[Option<f64>], i: Node) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for &j in prev.out_neighbors(i) {
        if let Some(x) = scores[j as usize] {
            sum += x;
            n += 1;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// Distance-two means on one snapshot: for each node `i`, the mean score of
/// accounts `k` reached by `i -> j -> k` with `k != i` and `i -/-> k`.
pub fn distance_two_means(prev: &Snapshot, scores: &[Option<f64>]) -> Vec<Option<f64>> {
    let n = prev.n_nodes();
    let mut stamp = vec![u32::MAX; n];
    let mut out = vec![None; n];
    for i in 0..n as Node {
        // Mark i and its followees as excluded, then count each k once.
        stamp[i as usize] = i;
        for &j in prev.out_neighbors(i) {
            stamp[j as usize] = i;
        }
        let (mut sum, mut cnt) = (0.0, 0usize);
        for &j in prev.out_neighbors(i) {
            for &k in prev.out_neighbors(j) {
                if stamp[k as usize] != i {
                    stamp[k as usize] = i;
                    if let Some(x) = scores[k as usize] {
                        sum += x;
                        cnt += 1;
                    }
                }
            }
        }
        if cnt > 0 {
            out[i as usize] = Some(sum / cnt as f64);
        }
    }
    out
}

/// Instrument values for week `t`, built from the `t-1` network and scores.
pub fn build_instrument(
    net: &TemporalNetwork,
    scores: &NodeScores,
    t: u32,
) -> Result<Vec<Option<f64>>> {
    if t < 2 {
        return Err(Error::WeekOutOfRange {
            week: t,
            max: net.weeks(),
        });
    }
    Ok(distance_two_means(&net.snapshot(t - 1)?, scores.week(t - 1)))
}

/// Assembles raw panel rows for every scored agent and week `t >= 2`.
pub fn build_panel(net: &TemporalNetwork, scores: &NodeScores) -> Result<PanelBuild> {
    let weeks = net.weeks().min(scores.weeks());
    if weeks < 2 || net.n_nodes() == 0 {
        return Err(Error::EmptyDataset("panel needs at least two weeks".into()));
    }
    let per_week: Vec<(Vec<PanelRow>, usize)> = (2..=weeks)
        .into_par_iter()
        .map(|t| -> Result<_> {
            let prev = net.snapshot(t - 1)?;
            let lag = scores.week(t - 1);
            let now = scores.week(t);
            let z = distance_two_means(&prev, lag);
            let mut rows = Vec::new();
            let mut dropped = 0;
            for i in 0..net.n_nodes() as Node {
                let (Some(x0), Some(x1)) = (lag[i as usize], now[i as usize]) else {
                    continue;
                };
                match peer_mean(&prev, lag, i) {
                    Some(peer) => rows.push(PanelRow {
                        node: i,
                        week: t,
                        delta: x1 - x0,
                        lag_self: x0,
                        lag_peer: peer,
                        instrument: z[i as usize],
                    }),
                    None => dropped += 1,
                }
            }
            Ok((rows, dropped))
        })
        .collect::<Result<_>>()?;
    let mut out = PanelBuild::default();
    for (rows, dropped) in per_week {
        out.dropped_no_followees += dropped;
        out.rows.extend(rows);
    }
    out.missing_instrument = out.rows.iter().filter(|r| r.instrument.is_none()).count();
    if out.rows.is_empty() {
        return Err(Error::EmptyDataset("no agent-week has scored followees".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterCorrection {
    Cr0,
    /// `G/(G-1) * (N-1)/(N-K)`.
    #[default]
    Cr1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InfluenceConfig {
    pub correction: ClusterCorrection,
    /// First-stage F below this flags a weak instrument.
    pub weak_f_floor: f64,
    pub demean_tol: f64,
    pub max_demean_iter: usize,
}

impl Default for InfluenceConfig {
    fn default() -> Self {
        Self {
            correction: ClusterCorrection::Cr1,
            weak_f_floor: 10.0,
            demean_tol: 1e-10,
            max_demean_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ols,
    Iv,
}

/// Scale factors of the standardized regression variables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scales {
    pub delta: Standardizer,
    pub lag_self: Standardizer,
    pub lag_peer: Standardizer,
    pub instrument: Option<Standardizer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelFit {
    pub method: Method,
    /// Coefficients in standard-deviation units.
    pub phi: f64,
    pub gamma: f64,
    pub se_phi: f64,
    pub se_gamma: f64,
    pub p_phi: f64,
    pub p_gamma: f64,
    pub n_obs: usize,
    pub n_agents: usize,
    pub n_weeks: usize,
    pub first_stage_f: Option<f64>,
    pub wu_hausman_p: Option<f64>,
    pub weak_instrument: bool,
    pub scales: Scales,
}

impl PanelFit {
    /// Self effect in raw score units.
    pub fn phi_raw(&self) -> f64 {
        self.phi * self.scales.delta.sd / self.scales.lag_self.sd
    }

    /// Peer effect in raw score units.
    pub fn gamma_raw(&self) -> f64 {
        self.gamma * self.scales.delta.sd / self.scales.lag_peer.sd
    }

    pub fn se_gamma_raw(&self) -> f64 {
        self.se_gamma * self.scales.delta.sd / self.scales.lag_peer.sd
    }
}

/// Dense agent and week indices of a sample.
struct Groups {
    agent: Vec<usize>,
    week: Vec<usize>,
    n_agents: usize,
    n_weeks: usize,
}

impl Groups {
    fn of(rows: &[&PanelRow]) -> Self {
        fn index<T: Ord + Copy>(keys: impl Iterator<Item = T> + Clone) -> (Vec<usize>, usize) {
            let mut uniq: Vec<T> = keys.clone().collect();
            uniq.sort_unstable();
            uniq.dedup();
            (
                keys.map(|k| uniq.binary_search(&k).unwrap()).collect(),
                uniq.len(),
            )
        }
        let (agent, n_agents) = index(rows.iter().map(|r| r.node));
        let (week, n_weeks) = index(rows.iter().map(|r| r.week));
        Self {
            agent,
            week,
            n_agents,
            n_weeks,
        }
    }
}

/// Two-way within transformation by alternating projections; stops when a
/// full sweep moves no value by more than `tol`.
fn demean_two_way(
    col: &mut [f64],
    g: &Groups,
    tol: f64,
    max_iter: usize,
) -> Result<()> {
    let mut sums_a = vec![0.0; g.n_agents];
    let mut cnt_a = vec![0usize; g.n_agents];
    let mut sums_w = vec![0.0; g.n_weeks];
    let mut cnt_w = vec![0usize; g.n_weeks];
    for (&a, &w) in g.agent.iter().zip(&g.week) {
        cnt_a[a] += 1;
        cnt_w[w] += 1;
    }
    for _ in 0..max_iter {
        let mut change = 0.0f64;
        sums_a.iter_mut().for_each(|s| *s = 0.0);
        for (x, &a) in col.iter().zip(&g.agent) {
            sums_a[a] += x;
        }
        for (x, &a) in col.iter_mut().zip(&g.agent) {
            let m = sums_a[a] / cnt_a[a] as f64;
            *x -= m;
            change = change.max(m.abs());
        }
        sums_w.iter_mut().for_each(|s| *s = 0.0);
        for (x, &w) in col.iter().zip(&g.week) {
            sums_w[w] += x;
        }
        for (x, &w) in col.iter_mut().zip(&g.week) {
            let m = sums_w[w] / cnt_w[w] as f64;
            *x -= m;
            change = change.max(m.abs());
        }
        if change < tol {
            return Ok(());
        }
    }
    Err(Error::InsufficientData(format!(
        "fixed-effect demeaning did not converge in {max_iter} sweeps"
    )))
}

struct LsFit {
    beta: DVector<f64>,
    cov: DMatrix<f64>,
    resid: DVector<f64>,
}

fn design(cols: &[&[f64]]) -> DMatrix<f64> {
    let n = cols[0].len();
    DMatrix::from_fn(n, cols.len(), |i, k| cols[k][i])
}

fn inverse_gram(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let xtx = x.transpose() * x;
    let k = xtx.nrows();
    let chol = xtx
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("regressors collinear after demeaning".into()))?;
    let l = chol.l();
    for j in 0..k {
        if !(xtx[(j, j)] > 0.0) || !(l[(j, j)] * l[(j, j)] / xtx[(j, j)] > 1e-10) {
            return Err(Error::Singular(format!(
                "regressor {j} collinear after demeaning"
            )));
        }
    }
    Ok(chol.inverse())
}

/// Cluster-robust sandwich around `bread = (X'X)^-1`.
fn cluster_cov(
    x: &DMatrix<f64>,
    resid: &DVector<f64>,
    bread: &DMatrix<f64>,
    clusters: &[usize],
    n_clusters: usize,
    correction: ClusterCorrection,
) -> Result<DMatrix<f64>> {
    if n_clusters < 2 {
        return Err(Error::InsufficientData(
            "cluster-robust errors need at least two agents".into(),
        ));
    }
    let k = x.ncols();
    let n = x.nrows();
    let mut scores = DMatrix::<f64>::zeros(n_clusters, k);
    for i in 0..n {
        let c = clusters[i];
        for j in 0..k {
            scores[(c, j)] += x[(i, j)] * resid[i];
        }
    }
    let meat = scores.transpose() * &scores;
    let factor = match correction {
        ClusterCorrection::Cr0 => 1.0,
        ClusterCorrection::Cr1 => {
            let g = n_clusters as f64;
            g / (g - 1.0) * (n as f64 - 1.0) / (n as f64 - k as f64)
        }
    };
    Ok(bread * meat * bread * factor)
}

fn ols(
    y: &[f64],
    cols: &[&[f64]],
    g: &Groups,
    correction: ClusterCorrection,
) -> Result<LsFit> {
    let x = design(cols);
    let yv = DVector::from_column_slice(y);
    let bread = inverse_gram(&x)?;
    let beta = &bread * (x.transpose() * &yv);
    let resid = &yv - &x * &beta;
    let cov = cluster_cov(&x, &resid, &bread, &g.agent, g.n_agents, correction)?;
    Ok(LsFit { beta, cov, resid })
}

fn se(cov: &DMatrix<f64>, j: usize) -> Result<f64> {
    let v = cov[(j, j)];
    if v > 0.0 && v.is_finite() {
        Ok(v.sqrt())
    } else {
        Err(Error::Singular(format!("non-positive variance for coefficient {j}")))
    }
}

/// Standardized and demeaned columns of a sample.
struct Prepared {
    groups: Groups,
    delta: Vec<f64>,
    lag_self: Vec<f64>,
    lag_peer: Vec<f64>,
    instrument: Option<Vec<f64>>,
    scales: Scales,
}

fn prepare(rows: &[&PanelRow], with_instrument: bool, cfg: &InfluenceConfig) -> Result<Prepared> {
    let groups = Groups::of(rows);
    if groups.n_agents < 2 || groups.n_weeks < 2 {
        return Err(Error::InsufficientData(format!(
            "{} agent(s) x {} week(s); need at least 2 x 2",
            groups.n_agents, groups.n_weeks
        )));
    }
    let column = |f: &dyn Fn(&PanelRow) -> f64| -> Result<(Vec<f64>, Standardizer)> {
        let raw: Vec<f64> = rows.iter().map(|r| f(r)).collect();
        let s = Standardizer::fit(&raw)?;
        let mut z = s.apply_all(&raw);
        demean_two_way(&mut z, &groups, cfg.demean_tol, cfg.max_demean_iter)?;
        Ok((z, s))
    };
    let (delta, s_delta) = column(&|r| r.delta)?;
    let (lag_self, s_self) = column(&|r| r.lag_self)?;
    let (lag_peer, s_peer) = column(&|r| r.lag_peer)?;
    let (instrument, s_inst) = if with_instrument {
        let (z, s) = column(&|r| r.instrument.expect("filtered"))?;
        (Some(z), Some(s))
    } else {
        (None, None)
    };
    Ok(Prepared {
        groups,
        delta,
        lag_self,
        lag_peer,
        instrument,
        scales: Scales {
            delta: s_delta,
            lag_self: s_self,
            lag_peer: s_peer,
            instrument: s_inst,
        },
    })
}

/// Two-way fixed-effects OLS with agent-clustered errors.
pub fn fit_fe_ols(rows: &[PanelRow], cfg: &InfluenceConfig) -> Result<PanelFit> {
    let sample: Vec<&PanelRow> = rows.iter().collect();
    let p = prepare(&sample, false, cfg)?;
    let f = ols(&p.delta, &[&p.lag_self, &p.lag_peer], &p.groups, cfg.correction)?;
    let df = (p.groups.n_agents - 1) as f64;
    let (se_phi, se_gamma) = (se(&f.cov, 0)?, se(&f.cov, 1)?);
    Ok(PanelFit {
        method: Method::Ols,
        phi: f.beta[0],
        gamma: f.beta[1],
        se_phi,
        se_gamma,
        p_phi: two_sided_t_pvalue(f.beta[0] / se_phi, df),
        p_gamma: two_sided_t_pvalue(f.beta[1] / se_gamma, df),
        n_obs: sample.len(),
        n_agents: p.groups.n_agents,
        n_weeks: p.groups.n_weeks,
        first_stage_f: None,
        wu_hausman_p: None,
        weak_instrument: false,
        scales: p.scales,
    })
}

/// Two-way fixed-effects 2SLS on the rows with a defined instrument.
pub fn fit_fe_2sls(rows: &[PanelRow], cfg: &InfluenceConfig) -> Result<PanelFit> {
    let sample: Vec<&PanelRow> = rows.iter().filter(|r| r.instrument.is_some()).collect();
    if sample.is_empty() {
        return Err(Error::InsufficientData("no row has a defined instrument".into()));
    }
    let p = prepare(&sample, true, cfg)?;
    let z = p.instrument.as_deref().unwrap();
    let g = &p.groups;
    let df = (g.n_agents - 1) as f64;

    // First stage: peer ~ instrument + lag_self.
    let first = ols(&p.lag_peer, &[z, &p.lag_self], g, cfg.correction)?;
    // An instrument that reproduces the regressor exactly leaves no
    // first-stage residual: the F statistic is infinite and there is no
    // endogeneity left to test.
    let exact = first.resid.amax() <= 1e-12 * p.lag_peer.iter().fold(1.0f64, |a, x| a.max(x.abs()));
    let first_stage_f = if exact {
        f64::INFINITY
    } else {
        (first.beta[0] / se(&first.cov, 0)?).powi(2)
    };
    let fitted: Vec<f64> = p
        .lag_peer
        .iter()
        .zip(first.resid.iter())
        .map(|(y, e)| y - e)
        .collect();

    // Second stage on fitted peers; residuals use the actual peer term.
    let xhat = design(&[&p.lag_self, &fitted]);
    let bread = inverse_gram(&xhat)?;
    let y = DVector::from_column_slice(&p.delta);
    let beta = &bread * (xhat.transpose() * &y);
    let x = design(&[&p.lag_self, &p.lag_peer]);
    let resid = &y - &x * &beta;
    let cov = cluster_cov(&xhat, &resid, &bread, &g.agent, g.n_agents, cfg.correction)?;
    let (se_phi, se_gamma) = (se(&cov, 0)?, se(&cov, 1)?);

    // Control function: the first-stage residual entering the OLS equation.
    let wu_hausman_p = if exact {
        None
    } else {
        let v: Vec<f64> = first.resid.iter().copied().collect();
        let cf = ols(&p.delta, &[&p.lag_self, &p.lag_peer, &v], g, cfg.correction)?;
        Some(two_sided_t_pvalue(cf.beta[2] / se(&cf.cov, 2)?, df))
    };

    Ok(PanelFit {
        method: Method::Iv,
        phi: beta[0],
        gamma: beta[1],
        se_phi,
        se_gamma,
        p_phi: two_sided_t_pvalue(beta[0] / se_phi, df),
        p_gamma: two_sided_t_pvalue(beta[1] / se_gamma, df),
        n_obs: sample.len(),
        n_agents: g.n_agents,
        n_weeks: g.n_weeks,
        first_stage_f: Some(first_stage_f),
        wu_hausman_p,
        weak_instrument: first_stage_f < cfg.weak_f_floor,
        scales: p.scales,
    })
}

/// OLS and IV results for one window; `window` is `None` for the full
/// panel. Failures are kept as messages so the table keeps its shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowFit {
    pub window: Option<BlockSpec>,
    pub ols: std::result::Result<PanelFit, String>,
    pub iv: std::result::Result<PanelFit, String>,
}

fn fit_window(rows: &[PanelRow], window: Option<BlockSpec>, cfg: &InfluenceConfig) -> WindowFit {
    let sample: Vec<PanelRow> = match window {
        Some(b) => rows
            .iter()
            .filter(|r| r.week >= b.start && r.week <= b.end)
            .copied()
            .collect(),
        None => rows.to_vec(),
    };
    WindowFit {
        window,
        ols: fit_fe_ols(&sample, cfg).map_err(|e| e.to_string()),
        iv: fit_fe_2sls(&sample, cfg).map_err(|e| e.to_string()),
    }
}

/// Fits each window on rows whose outcome week lies inside it; lags reach
/// back one week before the window start.
pub fn windowed_fits(rows: &[PanelRow], windows: &[BlockSpec], cfg: &InfluenceConfig) -> Vec<WindowFit> {
    windows
        .par_iter()
        .map(|&w| fit_window(rows, Some(w), cfg))
        .collect()
}

pub fn full_panel_fit(rows: &[PanelRow], cfg: &InfluenceConfig) -> WindowFit {
    fit_window(rows, None, cfg)
}
