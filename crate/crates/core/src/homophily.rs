//! Numeric assortativity of node scores and its comparison with null bands.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::nulls::{map_ensemble, CollapseStats, NullEnsembleSpec, NullRealization, Provenance};
use crate::temporal::{Node, NodeScores, TemporalNetwork};
use crate::{Error, Result};

/// How tie endpoints are paired.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssortativityMode {
    /// `(follower, followee)` pairs.
    #[default]
    Directed,
    /// Every tie contributes both orientations; reciprocated ties count twice.
    Undirected,
    /// Reciprocated ties are first merged into one undirected tie.
    UndirectedCollapsed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Assortativity {
    pub r: f64,
    /// Ties that entered the correlation.
    pub n_ties: usize,
    /// Ties skipped because an endpoint had no score.
    pub excluded: usize,
}

/// Pearson correlation of the scores at the two ends of every tie.
pub fn numeric_assortativity(
    edges: &[(Node, Node)],
    scores: &[Option<f64>],
    mode: AssortativityMode,
) -> Result<Assortativity> {
    let collapsed;
    let edges = if mode == AssortativityMode::UndirectedCollapsed {
        let mut und: Vec<(Node, Node)> = edges.iter().map(|&(u, v)| (u.min(v), u.max(v))).collect();
        und.sort_unstable();
        und.dedup();
        collapsed = und;
        &collapsed[..]
    } else {
        edges
    };

    let pairs = || {
        edges
            .iter()
            .filter_map(|&(u, v)| Some((scores[u as usize]?, scores[v as usize]?)))
    };
    let (mut n, mut sx, mut sy) = (0usize, 0.0, 0.0);
    for (x, y) in pairs() {
        n += 1;
        sx += x;
        sy += y;
    }
    let excluded = edges.len() - n;
    if n < 2 {
        return Err(Error::Undefined(format!("assortativity over {n} scored tie(s)")));
    }
    let nf = n as f64;
    let (sxy, sxx, syy) = if mode == AssortativityMode::Directed {
        let (mx, my) = (sx / nf, sy / nf);
        pairs().fold((0.0, 0.0, 0.0), |(a, b, c), (x, y)| {
            let (dx, dy) = (x - mx, y - my);
            (a + dx * dy, b + dx * dx, c + dy * dy)
        })
    } else {
        let m = (sx + sy) / (2.0 * nf);
        let (cross, sq) = pairs().fold((0.0, 0.0), |(a, b), (x, y)| {
            let (dx, dy) = (x - m, y - m);
            (a + dx * dy, b + dx * dx + dy * dy)
        });
        (2.0 * cross, sq, sq)
    };
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::Undefined("zero score variance at tie endpoints".into()));
    }
    Ok(Assortativity {
        r: (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0),
        n_ties: n,
        excluded,
    })
}

/// Mean and sample standard deviation of null assortativities in one week.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullBand {
    pub mean: f64,
    /// `NaN` when only one realization was defined.
    pub sd: f64,
    pub n_used: usize,
    pub n_undefined: usize,
}

pub fn null_band(values: &[Option<f64>]) -> Result<NullBand> {
    let used: Vec<f64> = values.iter().flatten().copied().collect();
    let n_undefined = values.len() - used.len();
    if used.is_empty() {
        return Err(Error::Undefined(format!(
            "null band: all {} realization(s) undefined",
            values.len()
        )));
    }
    let mean = crate::stats::mean(&used);
    let sd = if used.len() > 1 {
        let sd = crate::stats::sample_variance(&used).sqrt();
        // Identical values leave only rounding noise in the mean.
        let scale = used.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        if sd <= scale * 1e-13 {
            0.0
        } else {
            sd
        }
    } else {
        f64::NAN
    };
    Ok(NullBand {
        mean,
        sd,
        n_used: used.len(),
        n_undefined,
    })
}

impl NullBand {
    /// `(r - mean) / sd`, undefined for a zero or missing spread.
    pub fn z_score(&self, r: f64) -> Option<f64> {
        (self.sd.is_finite() && self.sd > 0.0).then(|| (r - self.mean) / self.sd)
    }
}

/// Assortativity summary of one null realization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullAssortativity {
    pub provenance: Provenance,
    pub n_edges: usize,
    pub collapse: CollapseStats,
    pub r_directed: Option<f64>,
    pub r_undirected: Option<f64>,
}

impl NullAssortativity {
    pub fn of(realization: &NullRealization) -> Self {
        let r = |mode| {
            numeric_assortativity(&realization.edges, &realization.scores, mode)
                .ok()
                .map(|a| a.r)
        };
        Self {
            provenance: realization.provenance,
            n_edges: realization.edges.len(),
            collapse: realization.collapse,
            r_directed: r(AssortativityMode::Directed),
            r_undirected: r(AssortativityMode::Undirected),
        }
    }

    pub fn r(&self, mode: AssortativityMode) -> Option<f64> {
        match mode {
            AssortativityMode::Directed => self.r_directed,
            _ => self.r_undirected,
        }
    }
}

/// Draws an ensemble and keeps only the per-realization assortativities.
pub fn null_assortativity(
    net: &TemporalNetwork,
    scores: &NodeScores,
    spec: &NullEnsembleSpec,
) -> Result<Vec<NullAssortativity>> {
    Ok(map_ensemble(net, scores, spec, |_, r| NullAssortativity::of(&r))?
        .into_iter()
        .flatten()
        .collect())
}

/// Null assortativities of one week, per ensemble.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeekNullValues {
    pub week: u32,
    pub configuration: Vec<Option<f64>>,
    pub joint_degree: Vec<Option<f64>>,
}

/// Groups realization summaries by week (weeks `1..=weeks`).
pub fn group_null_values(
    summaries: &[NullAssortativity],
    weeks: u32,
    mode: AssortativityMode,
) -> Vec<WeekNullValues> {
    let mut out: Vec<WeekNullValues> = (1..=weeks)
        .map(|week| WeekNullValues {
            week,
            ..Default::default()
        })
        .collect();
    let mut sorted: Vec<&NullAssortativity> = summaries.iter().collect();
    sorted.sort_by_key(|s| (s.provenance.week, s.provenance.kind, s.provenance.replicate));
    for s in sorted {
        let w = s.provenance.week;
        if w == 0 || w > weeks {
            continue;
        }
        let slot = &mut out[w as usize - 1];
        match s.provenance.kind {
            crate::nulls::NullKind::Configuration => slot.configuration.push(s.r(mode)),
            crate::nulls::NullKind::JointDegree => slot.joint_degree.push(s.r(mode)),
        }
    }
    out
}

/// One row of the weekly homophily series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssortativityResult {
    pub week: u32,
    pub r_directed: Option<f64>,
    pub r_undirected: Option<f64>,
    pub configuration: Option<NullBand>,
    pub joint_degree: Option<NullBand>,
    pub z_configuration: Option<f64>,
    pub z_joint_degree: Option<f64>,
    pub excluded_ties: usize,
}

/// Observed assortativity per week with null bands and z-scores. Bands and
/// z-scores refer to `band_mode`; failures become `None` fields.
pub fn homophily_series(
    net: &TemporalNetwork,
    scores: &NodeScores,
    nulls: &[WeekNullValues],
    band_mode: AssortativityMode,
) -> Result<Vec<AssortativityResult>> {
    (1..=net.weeks())
        .into_par_iter()
        .map(|t| {
            let edges = net.edges_through(t)?;
            let s = scores.week(t);
            let dir = numeric_assortativity(edges, s, AssortativityMode::Directed).ok();
            let und = numeric_assortativity(edges, s, AssortativityMode::Undirected).ok();
            let banded = numeric_assortativity(edges, s, band_mode).ok().map(|a| a.r);
            let week_nulls = nulls.iter().find(|w| w.week == t);
            let band = |vals: Option<&Vec<Option<f64>>>| vals.and_then(|v| null_band(v).ok());
            let configuration = band(week_nulls.map(|w| &w.configuration));
            let joint_degree = band(week_nulls.map(|w| &w.joint_degree));
            let z = |b: &Option<NullBand>| b.as_ref().zip(banded).and_then(|(b, r)| b.z_score(r));
            Ok(AssortativityResult {
                week: t,
                r_directed: dir.map(|a| a.r),
                r_undirected: und.map(|a| a.r),
                z_configuration: z(&configuration),
                z_joint_degree: z(&joint_degree),
                configuration,
                joint_degree,
                excluded_ties: dir.map_or(0, |a| a.excluded),
            })
        })
        .collect()
}
