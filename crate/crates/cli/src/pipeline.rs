//! Stage implementations. Every stage reads the build outputs from the
//! output directory (or takes them in memory under `all`) and writes one
//! table plus a JSON summary.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use follownet::homophily::{
    group_null_values, homophily_series, AssortativityResult, NullAssortativity,
};
use follownet::influence::{build_panel, full_panel_fit, windowed_fits, PanelFit, WindowFit};
use follownet::metrics::structural_report;
use follownet::nulls::{map_ensemble, CollapseStats, NullKind, Provenance as NullProvenance};
use follownet::selection::{fit_blocks, make_blocks, FormationFit};
use follownet::synth::simulate;
use follownet::temporal::{
    impute_scores, ingest_events, read_events, read_scores, AgentId, NodeScores, ScorePanel,
    TemporalNetwork, WeekBinning,
};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::failure::{Failure, Outcome};
use crate::output::{finish, num, read_header_line, sha256_file, OutDir};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Build,
    Metrics,
    Nulls,
    Homophily,
    Selection,
    Influence,
    Simulate,
    All,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Build => "build",
            Stage::Metrics => "metrics",
            Stage::Nulls => "nulls",
            Stage::Homophily => "homophily",
            Stage::Selection => "selection",
            Stage::Influence => "influence",
            Stage::Simulate => "simulate",
            Stage::All => "all",
        }
    }
}

pub const NETWORK_FILE: &str = "network.csv";
pub const PANEL_FILE: &str = "panel.csv";
pub const NULLS_FILE: &str = "nulls.csv";

/// A configured run writing into one output directory.
pub struct Run {
    pub config: RunConfig,
    pub out: OutDir,
}

impl Run {
    pub fn new(config: RunConfig, out: PathBuf) -> Outcome<Self> {
        config.validate()?;
        let prov = crate::output::Provenance::new(config.digest(), config.seed);
        Ok(Self {
            out: OutDir::new(out, prov)?,
            config,
        })
    }

    /// Runs `stage` and returns the files it wrote.
    pub fn stage(&self, stage: Stage) -> Outcome<Vec<PathBuf>> {
        match stage {
            Stage::Build => self.build().map(|(_, files)| files),
            Stage::Simulate => self.simulate(),
            Stage::All => self.all(),
            other => {
                let data = self.load_build(other.name())?;
                match other {
                    Stage::Metrics => self.metrics(&data),
                    Stage::Nulls => self.nulls(&data).map(|(_, f)| f),
                    Stage::Homophily => {
                        let nulls = self.load_nulls()?;
                        self.homophily(&data, &nulls)
                    }
                    Stage::Selection => self.selection(&data),
                    Stage::Influence => self.influence(&data),
                    _ => unreachable!(),
                }
            }
        }
    }

    fn all(&self) -> Outcome<Vec<PathBuf>> {
        let (data, mut files) = self.build()?;
        files.extend(self.metrics(&data)?);
        let (nulls, f) = self.nulls(&data)?;
        files.extend(f);
        files.extend(self.homophily(&data, &nulls)?);
        files.extend(self.selection(&data)?);
        files.extend(self.influence(&data)?);
        Ok(files)
    }
}

/// Network and score panel shared by the analysis stages.
pub struct Built {
    pub net: TemporalNetwork,
    pub panel: ScorePanel,
    pub scores: NodeScores,
}

impl Built {
    fn new(net: TemporalNetwork, panel: ScorePanel) -> Self {
        let scores = panel.align(net.roster());
        Self { net, panel, scores }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileDigest {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BuildSummary {
    pub weeks: u32,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub raw_events: usize,
    pub events: usize,
    pub dropped_outside_roster: usize,
    pub dropped_self_loops: usize,
    pub collapsed_duplicates: usize,
    pub n_agents: usize,
    pub n_scored: usize,
    /// Roster agents without a single score observation.
    pub unscored: Vec<String>,
    pub edges_per_week: Vec<usize>,
}

fn open(path: &Path) -> Outcome<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| Failure::io(path, e))?))
}

fn read_roster_filter(path: &Path) -> Outcome<HashSet<AgentId>> {
    #[derive(Deserialize)]
    struct Row {
        agent: String,
    }
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let mut out = HashSet::new();
    for row in rdr.deserialize::<Row>() {
        let row = row.map_err(|e| Failure::in_file(path, e.into()))?;
        out.insert(AgentId::from(row.agent));
    }
    Ok(out)
}

fn digest_entry(role: &str, path: &Path, display: String) -> Outcome<FileDigest> {
    Ok(FileDigest {
        role: role.into(),
        path: display,
        sha256: sha256_file(path)?,
    })
}

impl Run {
    pub fn build(&self) -> Outcome<(Built, Vec<PathBuf>)> {
        let cfg = &self.config;
        cfg.check_inputs()?;
        let events_path = cfg.input.events.as_deref().expect("checked");
        let scores_path = cfg.input.scores.as_deref().expect("checked");

        let raw = read_events(open(events_path)?).map_err(|e| Failure::in_file(events_path, e))?;
        let filter = cfg.input.roster.as_deref().map(read_roster_filter).transpose()?;
        let binning = cfg.input.epoch.map(WeekBinning::new);
        let report = ingest_events(&raw, filter.as_ref(), binning.as_ref())
            .map_err(|e| Failure::in_file(events_path, e))?;
        info!(
            "ingested {} events ({} outside roster, {} self-loops, {} duplicates)",
            report.events.len(),
            report.dropped_outside_roster,
            report.dropped_self_loops,
            report.collapsed_duplicates
        );

        let observed = read_scores(open(scores_path)?).map_err(|e| Failure::in_file(scores_path, e))?;
        let mut roster_ids: Vec<AgentId> = match &filter {
            Some(f) => f.iter().cloned().collect(),
            None => Vec::new(),
        };
        roster_ids.sort();
        let panel = impute_scores(&observed, filter.as_ref().map(|_| roster_ids.as_slice()), cfg.weeks)
            .map_err(|e| Failure::in_file(scores_path, e))?;
        let net = TemporalNetwork::build(&report.events, panel.agents().iter().cloned(), cfg.weeks)?;
        net.verify_invariants()?;

        let network_path = self.out.path(NETWORK_FILE);
        let mut w = self.out.table(NETWORK_FILE, &["follower", "followee", "week"])?;
        for e in &report.events {
            w.write_record([e.follower.as_str(), e.followee.as_str(), &e.week.to_string()])?;
        }
        finish(w)?;

        let panel_path = self.out.path(PANEL_FILE);
        let mut w = self.out.table(PANEL_FILE, &["agent", "week", "score", "observed"])?;
        for (a, id) in panel.agents().iter().enumerate() {
            for t in 1..=panel.weeks() {
                w.write_record([
                    id.as_str(),
                    &t.to_string(),
                    &num(Some(panel.score(a, t))),
                    if panel.is_observed(a, t) { "1" } else { "0" },
                ])?;
            }
        }
        finish(w)?;

        let scored: HashSet<&AgentId> = panel.agents().iter().collect();
        let unscored: Vec<String> = net
            .roster()
            .ids()
            .iter()
            .filter(|id| !scored.contains(id))
            .map(|id| id.0.clone())
            .collect();
        if !unscored.is_empty() {
            warn!("{} networked agents have no scores and are left out of score-based stages", unscored.len());
        }
        let mut inputs = vec![
            digest_entry("events", events_path, events_path.display().to_string())?,
            digest_entry("scores", scores_path, scores_path.display().to_string())?,
        ];
        if let Some(r) = cfg.input.roster.as_deref() {
            inputs.push(digest_entry("roster", r, r.display().to_string())?);
        }
        let summary = BuildSummary {
            weeks: cfg.weeks,
            inputs,
            outputs: vec![
                digest_entry("network", &network_path, NETWORK_FILE.into())?,
                digest_entry("panel", &panel_path, PANEL_FILE.into())?,
            ],
            raw_events: raw.len(),
            events: report.events.len(),
            dropped_outside_roster: report.dropped_outside_roster,
            dropped_self_loops: report.dropped_self_loops,
            collapsed_duplicates: report.collapsed_duplicates,
            n_agents: net.n_nodes(),
            n_scored: panel.n_agents(),
            unscored,
            edges_per_week: (1..=net.weeks())
                .map(|t| net.edge_count(t))
                .collect::<Result<_, _>>()?,
        };
        let json = self.out.summary("build", &summary)?;
        Ok((Built::new(net, panel), vec![network_path, panel_path, json]))
    }

    /// Reloads the persisted network and panel.
    pub fn load_build(&self, stage: &'static str) -> Outcome<Built> {
        let missing = |what: &str| Failure::Prerequisite {
            stage,
            missing: what.to_string(),
            run_first: "build",
        };
        let summary_path = self.out.path("build.json");
        let network_path = self.out.path(NETWORK_FILE);
        let panel_path = self.out.path(PANEL_FILE);
        for p in [&summary_path, &network_path, &panel_path] {
            if !p.is_file() {
                return Err(missing(&p.display().to_string()));
            }
        }
        #[derive(Deserialize)]
        struct Head {
            weeks: u32,
            unscored: Vec<String>,
        }
        let head: Head = serde_json::from_reader(open(&summary_path)?)
            .map_err(|e| Failure::input(format!("{}: {e}", summary_path.display())))?;
        if head.weeks != self.config.weeks {
            return Err(Failure::input(format!(
                "build covers {} weeks but the config asks for {}; rerun `follownet build`",
                head.weeks, self.config.weeks
            )));
        }

        let raw = read_events(open(&network_path)?).map_err(|e| Failure::in_file(&network_path, e))?;
        let events = ingest_events(&raw, None, None)
            .map_err(|e| Failure::in_file(&network_path, e))?
            .events;

        #[derive(Deserialize)]
        struct PanelRow {
            agent: String,
            week: u32,
            score: f64,
            observed: u8,
        }
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(open(&panel_path)?);
        let weeks = head.weeks as usize;
        let mut series: BTreeMap<String, (Vec<f64>, Vec<bool>)> = BTreeMap::new();
        for row in rdr.deserialize::<PanelRow>() {
            let row = row.map_err(|e| Failure::in_file(&panel_path, e.into()))?;
            if row.week == 0 || row.week as usize > weeks {
                return Err(Failure::in_file(
                    &panel_path,
                    follownet::Error::WeekOutOfRange {
                        week: row.week,
                        max: head.weeks,
                    },
                ));
            }
            let slot = series
                .entry(row.agent)
                .or_insert_with(|| (vec![f64::NAN; weeks], vec![false; weeks]));
            slot.0[row.week as usize - 1] = row.score;
            slot.1[row.week as usize - 1] = row.observed != 0;
        }
        let series = series
            .into_iter()
            .map(|(id, (v, m))| (AgentId::from(id), v, m))
            .collect();
        let panel = ScorePanel::from_completed(
            head.weeks,
            series,
            head.unscored.into_iter().map(AgentId::from).collect(),
        )
        .map_err(|e| Failure::in_file(&panel_path, e))?;
        let net = TemporalNetwork::build(&events, panel.agents().iter().cloned(), head.weeks)?;
        Ok(Built::new(net, panel))
    }

    pub fn metrics(&self, data: &Built) -> Outcome<Vec<PathBuf>> {
        let reports = structural_report(&data.net, &self.config.metrics)?;
        let mut w = self.out.table(
            "metrics.csv",
            &[
                "week",
                "density",
                "reciprocity",
                "avg_clustering",
                "avg_path",
                "n",
                "m",
                "lscc_size",
            ],
        )?;
        for r in &reports {
            w.write_record([
                r.week.to_string(),
                num(r.density),
                num(r.reciprocity),
                num(r.avg_clustering),
                num(r.avg_path_lscc),
                r.n_nodes.to_string(),
                r.n_edges.to_string(),
                r.lscc_size.to_string(),
            ])?;
        }
        finish(w)?;
        let mut files = vec![self.out.path("metrics.csv")];
        for r in &reports {
            let name = format!("histograms/week_{:02}.csv", r.week);
            let mut w = self.out.table(&name, &["direction", "degree", "count"])?;
            for (dir, hist) in [("in", &r.histograms.in_hist), ("out", &r.histograms.out_hist)] {
                for (d, c) in hist {
                    w.write_record([dir, &d.to_string(), &c.to_string()])?;
                }
            }
            finish(w)?;
            files.push(self.out.path(&name));
        }
        #[derive(Serialize)]
        struct Summary<'a> {
            config: &'a follownet::metrics::MetricsConfig,
            last_week: Option<&'a follownet::metrics::StructuralReport>,
        }
        files.push(self.out.summary(
            "metrics",
            &Summary {
                config: &self.config.metrics,
                last_week: reports.last(),
            },
        )?);
        Ok(files)
    }

    pub fn nulls(&self, data: &Built) -> Outcome<(Vec<NullAssortativity>, Vec<PathBuf>)> {
        let cfg = &self.config;
        let mut all = Vec::new();
        let mut files = Vec::new();
        for &kind in &cfg.nulls.kinds {
            let spec = cfg.null_spec(kind);
            info!("drawing {} {} nulls per week", spec.realizations, kind.as_str());
            let persisted = map_ensemble(&data.net, &data.scores, &spec, |_, r| -> Outcome<(NullAssortativity, Option<PathBuf>)> {
                let summary = NullAssortativity::of(&r);
                if !cfg.nulls.persist_edges {
                    return Ok((summary, None));
                }
                let p = &r.provenance;
                let name = format!(
                    "nulls/{}/week_{:02}_rep_{:03}.csv",
                    kind.as_str(),
                    p.week,
                    p.replicate
                );
                let mut w = self.out.table(&name, &["follower", "followee"])?;
                for &(u, v) in &r.edges {
                    w.write_record([
                        data.net.roster().id(u).as_str(),
                        data.net.roster().id(v).as_str(),
                    ])?;
                }
                finish(w)?;
                Ok((summary, Some(self.out.path(&name))))
            })?;
            for week in persisted {
                for item in week {
                    let (s, f): (NullAssortativity, Option<PathBuf>) = item?;
                    all.push(s);
                    files.extend(f);
                }
            }
        }
        all.sort_by_key(|s| (s.provenance.week, s.provenance.kind, s.provenance.replicate));

        let mut w = self.out.table(
            NULLS_FILE,
            &[
                "week",
                "kind",
                "replicate",
                "seed",
                "n_edges",
                "self_loops",
                "parallel",
                "r_directed",
                "r_undirected",
            ],
        )?;
        for s in &all {
            let p = &s.provenance;
            w.write_record([
                p.week.to_string(),
                p.kind.as_str().to_string(),
                p.replicate.to_string(),
                p.seed.to_string(),
                s.n_edges.to_string(),
                s.collapse.self_loops.to_string(),
                s.collapse.parallel.to_string(),
                num(s.r_directed),
                num(s.r_undirected),
            ])?;
        }
        finish(w)?;
        files.insert(0, self.out.path(NULLS_FILE));

        #[derive(Serialize)]
        struct Summary<'a> {
            config: &'a crate::config::NullsConfig,
            realizations: usize,
            collapsed_ties: usize,
            undefined_directed: usize,
        }
        files.insert(
            1,
            self.out.summary(
                "nulls",
                &Summary {
                    config: &cfg.nulls,
                    realizations: all.len(),
                    collapsed_ties: all.iter().map(|s| s.collapse.total()).sum(),
                    undefined_directed: all.iter().filter(|s| s.r_directed.is_none()).count(),
                },
            )?,
        );
        Ok((all, files))
    }

    /// Reads back `nulls.csv`.
    pub fn load_nulls(&self) -> Outcome<Vec<NullAssortativity>> {
        let path = self.out.path(NULLS_FILE);
        if !path.is_file() {
            return Err(Failure::Prerequisite {
                stage: "homophily",
                missing: path.display().to_string(),
                run_first: "nulls",
            });
        }
        #[derive(Deserialize)]
        struct Row {
            week: u32,
            kind: String,
            replicate: usize,
            seed: u64,
            n_edges: usize,
            self_loops: usize,
            parallel: usize,
            r_directed: Option<f64>,
            r_undirected: Option<f64>,
        }
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(open(&path)?);
        let mut out = Vec::new();
        for row in rdr.deserialize::<Row>() {
            let row = row.map_err(|e| Failure::in_file(&path, e.into()))?;
            let kind: NullKind = row.kind.parse().map_err(|e| Failure::in_file(&path, e))?;
            out.push(NullAssortativity {
                provenance: NullProvenance {
                    week: row.week,
                    kind,
                    replicate: row.replicate,
                    seed: row.seed,
                },
                n_edges: row.n_edges,
                collapse: CollapseStats {
                    self_loops: row.self_loops,
                    parallel: row.parallel,
                },
                r_directed: row.r_directed,
                r_undirected: row.r_undirected,
            });
        }
        Ok(out)
    }

    pub fn homophily(&self, data: &Built, nulls: &[NullAssortativity]) -> Outcome<Vec<PathBuf>> {
        let mode = self.config.homophily.band_mode;
        let grouped = group_null_values(nulls, data.net.weeks(), mode);
        let series = homophily_series(&data.net, &data.scores, &grouped, mode)?;
        let mut w = self.out.table(
            "homophily.csv",
            &[
                "week",
                "r_dir",
                "r_undir",
                "cfg_mean",
                "cfg_sd",
                "jd_mean",
                "jd_sd",
                "z_cfg",
                "z_jd",
                "cfg_n",
                "jd_n",
                "excluded_ties",
            ],
        )?;
        for r in &series {
            let c = r.configuration.as_ref();
            let j = r.joint_degree.as_ref();
            w.write_record([
                r.week.to_string(),
                num(r.r_directed),
                num(r.r_undirected),
                num(c.map(|b| b.mean)),
                num(c.map(|b| b.sd)),
                num(j.map(|b| b.mean)),
                num(j.map(|b| b.sd)),
                num(r.z_configuration),
                num(r.z_joint_degree),
                c.map_or(0, |b| b.n_used).to_string(),
                j.map_or(0, |b| b.n_used).to_string(),
                r.excluded_ties.to_string(),
            ])?;
        }
        finish(w)?;

        #[derive(Serialize)]
        struct Summary<'a> {
            band_mode: follownet::homophily::AssortativityMode,
            nulls_source: Option<String>,
            weeks_z_cfg_above_3: usize,
            weeks_z_jd_above_3: usize,
            series: &'a [AssortativityResult],
        }
        let above = |f: fn(&AssortativityResult) -> Option<f64>| {
            series.iter().filter(|r| f(r).is_some_and(|z| z > 3.0)).count()
        };
        let json = self.out.summary(
            "homophily",
            &Summary {
                band_mode: mode,
                nulls_source: read_header_line(&self.out.path(NULLS_FILE)),
                weeks_z_cfg_above_3: above(|r| r.z_configuration),
                weeks_z_jd_above_3: above(|r| r.z_joint_degree),
                series: &series,
            },
        )?;
        Ok(vec![self.out.path("homophily.csv"), json])
    }

    pub fn selection(&self, data: &Built) -> Outcome<Vec<PathBuf>> {
        let cfg = self.config.selection_config();
        let fits = fit_blocks(&data.net, &data.scores, &cfg)?;
        let mut w = self.out.table(
            "selection.csv",
            &[
                "block_start",
                "block_end",
                "phi_edges",
                "phi_mutual",
                "phi_abs",
                "se_abs",
                "odds_ratio",
                "n_rows",
                "n_events",
                "converged",
                "se_edges",
                "se_mutual",
                "or_ci_low",
                "or_ci_high",
                "roster_size",
                "subsampled",
                "error",
            ],
        )?;
        let mut ok = 0;
        for (block, fit) in &fits {
            let mut rec = vec![block.start.to_string(), block.end.to_string()];
            match fit {
                Ok(f) => {
                    ok += 1;
                    let (lo, hi) = f.odds_ratio_ci(0.95);
                    rec.extend([
                        num(Some(f.phi[0])),
                        num(Some(f.phi[1])),
                        num(Some(f.phi[2])),
                        num(Some(f.std_errors[2])),
                        num(Some(f.odds_ratio_abs)),
                        f.n_rows.to_string(),
                        f.n_events.to_string(),
                        f.converged.to_string(),
                        num(Some(f.std_errors[0])),
                        num(Some(f.std_errors[1])),
                        num(Some(lo)),
                        num(Some(hi)),
                        f.roster_size.to_string(),
                        f.subsampled.to_string(),
                        String::new(),
                    ]);
                }
                Err(e) => {
                    warn!("block {}-{}: {e}", block.start, block.end);
                    rec.extend(std::iter::repeat_n(String::new(), 14));
                    rec.push(e.to_string());
                }
            }
            w.write_record(&rec)?;
        }
        finish(w)?;

        #[derive(Serialize)]
        struct Block<'a> {
            start: u32,
            end: u32,
            fit: Option<&'a FormationFit>,
            error: Option<String>,
        }
        #[derive(Serialize)]
        struct Summary<'a> {
            config: &'a follownet::selection::SelectionConfig,
            blocks: Vec<Block<'a>>,
        }
        let json = self.out.summary(
            "selection",
            &Summary {
                config: &cfg,
                blocks: fits
                    .iter()
                    .map(|(b, f)| Block {
                        start: b.start,
                        end: b.end,
                        fit: f.as_ref().ok(),
                        error: f.as_ref().err().map(|e| e.to_string()),
                    })
                    .collect(),
            },
        )?;
        if ok == 0 {
            return Err(Failure::Analysis(format!(
                "no block could be fitted (see {})",
                self.out.path("selection.csv").display()
            )));
        }
        Ok(vec![self.out.path("selection.csv"), json])
    }

    pub fn influence(&self, data: &Built) -> Outcome<Vec<PathBuf>> {
        let cfg = self.config.influence_config();
        let panel = build_panel(&data.net, &data.scores)?;
        let windows = make_blocks(data.net.weeks(), self.config.influence.window_len)?;
        let mut fits = windowed_fits(&panel.rows, &windows, &cfg);
        fits.push(full_panel_fit(&panel.rows, &cfg));

        let mut w = self.out.table(
            "influence.csv",
            &[
                "window",
                "phi_ols",
                "gamma_ols",
                "phi_iv",
                "gamma_iv",
                "se_phi_ols",
                "se_gamma_ols",
                "se_phi_iv",
                "se_gamma_iv",
                "p_gamma_ols",
                "p_gamma_iv",
                "F_first_stage",
                "wu_hausman_p",
                "n_obs",
                "n_agents",
                "weak_instrument",
                "error",
            ],
        )?;
        let mut ok = 0;
        for f in &fits {
            let label = f
                .window
                .map_or("full".to_string(), |b| format!("{}-{}", b.start, b.end));
            let ols = f.ols.as_ref().ok();
            let iv = f.iv.as_ref().ok();
            ok += usize::from(ols.is_some() || iv.is_some());
            let get = |p: Option<&PanelFit>, g: fn(&PanelFit) -> f64| num(p.map(g));
            let errors: Vec<String> = [("ols", &f.ols), ("iv", &f.iv)]
                .into_iter()
                .filter_map(|(m, r)| r.as_ref().err().map(|e| format!("{m}: {e}")))
                .collect();
            let n_obs = ols.or(iv).map_or(0, |p| p.n_obs);
            let n_agents = ols.or(iv).map_or(0, |p| p.n_agents);
            w.write_record([
                label,
                get(ols, |p| p.phi),
                get(ols, |p| p.gamma),
                get(iv, |p| p.phi),
                get(iv, |p| p.gamma),
                get(ols, |p| p.se_phi),
                get(ols, |p| p.se_gamma),
                get(iv, |p| p.se_phi),
                get(iv, |p| p.se_gamma),
                get(ols, |p| p.p_gamma),
                get(iv, |p| p.p_gamma),
                num(iv.and_then(|p| p.first_stage_f)),
                num(iv.and_then(|p| p.wu_hausman_p)),
                n_obs.to_string(),
                n_agents.to_string(),
                iv.map_or(String::new(), |p| p.weak_instrument.to_string()),
                errors.join("; "),
            ])?;
        }
        finish(w)?;

        #[derive(Serialize)]
        struct Summary<'a> {
            config: &'a follownet::influence::InfluenceConfig,
            window_len: u32,
            panel_rows: usize,
            dropped_no_followees: usize,
            missing_instrument: usize,
            fits: &'a [WindowFit],
        }
        let json = self.out.summary(
            "influence",
            &Summary {
                config: &cfg,
                window_len: self.config.influence.window_len,
                panel_rows: panel.rows.len(),
                dropped_no_followees: panel.dropped_no_followees,
                missing_instrument: panel.missing_instrument,
                fits: &fits,
            },
        )?;
        if ok == 0 {
            return Err(Failure::Analysis(format!(
                "no window could be fitted (see {})",
                self.out.path("influence.csv").display()
            )));
        }
        Ok(vec![self.out.path("influence.csv"), json])
    }

    pub fn simulate(&self) -> Outcome<Vec<PathBuf>> {
        let sim_cfg = self.config.sim_config();
        info!(
            "simulating {} agents over {} weeks",
            sim_cfg.n_agents, sim_cfg.weeks
        );
        let sim = simulate(&sim_cfg)?;
        let header = self.out.provenance.header_line();
        let write = |name: &str, f: &dyn Fn(&mut BufWriter<File>) -> follownet::Result<()>| {
            let path = self.out.path(name);
            let file = File::create(&path).map_err(|e| Failure::io(&path, e))?;
            let mut buf = BufWriter::new(file);
            writeln!(buf, "{header}").map_err(|e| Failure::io(&path, e))?;
            f(&mut buf)?;
            buf.flush().map_err(|e| Failure::io(&path, e))?;
            Ok::<_, Failure>(path)
        };
        let mut files = vec![
            write("events.csv", &|b| sim.write_events(b))?,
            write("scores.csv", &|b| sim.write_scores(b))?,
        ];
        if sim_cfg.record_ledger {
            let mut w = self.out.table(
                "ledger.csv",
                &["week", "follower", "followee", "mutual", "absdiff", "formed"],
            )?;
            let ids = sim.agents();
            for r in &sim.truth.ledger {
                w.write_record([
                    r.week.to_string(),
                    ids[r.follower as usize].0.clone(),
                    ids[r.followee as usize].0.clone(),
                    u8::from(r.mutual).to_string(),
                    num(Some(r.absdiff)),
                    u8::from(r.formed).to_string(),
                ])?;
            }
            finish(w)?;
            files.push(self.out.path("ledger.csv"));
        }
        #[derive(Serialize)]
        struct Truth<'a> {
            planted: &'a follownet::synth::PlantedTruth,
            candidates_per_week: &'a [usize],
            formed_per_week: &'a [usize],
            n_events: usize,
            n_score_rows: usize,
        }
        files.push(self.out.summary(
            "truth",
            &Truth {
                planted: &sim.truth.planted,
                candidates_per_week: &sim.truth.candidates_per_week,
                formed_per_week: &sim.truth.formed_per_week,
                n_events: sim.events.len(),
                n_score_rows: sim.scores.len(),
            },
        )?);
        Ok(files)
    }
}
