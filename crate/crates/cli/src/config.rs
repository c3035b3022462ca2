//! The declarative run configuration (TOML).

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use follownet::homophily::AssortativityMode;
use follownet::influence::{ClusterCorrection, InfluenceConfig};
use follownet::metrics::MetricsConfig;
use follownet::nulls::{NullEnsembleSpec, NullKind};
use follownet::rng::derive_seed;
use follownet::selection::SelectionConfig;
use follownet::synth::SimConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::failure::{Failure, Outcome};

// Per-stage seed tags.
const NULLS_TAG: u64 = 0x6e75;
const SELECTION_TAG: u64 = 0x7365;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub weeks: u32,
    /// Output directory; `--out` takes precedence.
    pub out: Option<PathBuf>,
    pub input: InputConfig,
    pub metrics: MetricsConfig,
    pub nulls: NullsConfig,
    pub homophily: HomophilyConfig,
    pub selection: SelectionConfig,
    pub influence: InfluenceSection,
    pub simulate: SimConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            weeks: 52,
            out: None,
            input: InputConfig::default(),
            metrics: MetricsConfig::default(),
            nulls: NullsConfig::default(),
            homophily: HomophilyConfig::default(),
            selection: SelectionConfig::default(),
            influence: InfluenceSection::default(),
            simulate: SimConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    pub events: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    /// One-column table (`agent`) restricting the analysed accounts.
    pub roster: Option<PathBuf>,
    /// First day of week 1, for timestamped events.
    pub epoch: Option<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NullsConfig {
    pub realizations: usize,
    pub kinds: Vec<NullKind>,
    pub swap_factor: f64,
    pub thinning: Option<f64>,
    pub reject_until_simple: Option<usize>,
    /// Also write every realization as an edge list.
    pub persist_edges: bool,
}

impl Default for NullsConfig {
    fn default() -> Self {
        Self {
            realizations: 100,
            kinds: vec![NullKind::Configuration, NullKind::JointDegree],
            swap_factor: 10.0,
            thinning: None,
            reject_until_simple: None,
            persist_edges: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HomophilyConfig {
    /// Pairing convention of the null bands and z-scores.
    pub band_mode: AssortativityMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InfluenceSection {
    pub window_len: u32,
    pub correction: ClusterCorrection,
    pub weak_f_floor: f64,
}

impl Default for InfluenceSection {
    fn default() -> Self {
        Self {
            window_len: 8,
            correction: ClusterCorrection::Cr1,
            weak_f_floor: 10.0,
        }
    }
}

impl RunConfig {
    /// Parses a config file; relative input paths are resolved against its
    /// directory.
    pub fn load(path: &Path) -> Outcome<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.input.events,
            &mut cfg.input.scores,
            &mut cfg.input.roster,
            &mut cfg.out,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Outcome<()> {
        if self.weeks < 2 {
            return Err(Failure::input("weeks must be at least 2"));
        }
        if self.nulls.realizations == 0 {
            return Err(Failure::input("nulls.realizations must be at least 1"));
        }
        if self.nulls.kinds.is_empty() {
            return Err(Failure::input("nulls.kinds is empty"));
        }
        if self.influence.window_len < 2 {
            return Err(Failure::input("influence.window_len must be at least 2"));
        }
        self.sim_config().validate()?;
        Ok(())
    }

    /// Checks that the input files exist.
    pub fn check_inputs(&self) -> Outcome<()> {
        let need = |p: &Option<PathBuf>, what: &str| match p {
            None => Err(Failure::input(format!("input.{what} is not set"))),
            Some(p) if !p.is_file() => Err(Failure::input(format!(
                "input.{what}: {} does not exist",
                p.display()
            ))),
            Some(_) => Ok(()),
        };
        need(&self.input.events, "events")?;
        need(&self.input.scores, "scores")?;
        if self.input.roster.is_some() {
            need(&self.input.roster, "roster")?;
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form, output location excluded.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        let json = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn null_spec(&self, kind: NullKind) -> NullEnsembleSpec {
        let mut spec = NullEnsembleSpec::new(
            kind,
            self.nulls.realizations,
            derive_seed(self.seed, &[NULLS_TAG]),
        );
        spec.swap_factor = self.nulls.swap_factor;
        spec.thinning = self.nulls.thinning;
        spec.reject_until_simple = self.nulls.reject_until_simple;
        spec
    }

    pub fn selection_config(&self) -> SelectionConfig {
        SelectionConfig {
            seed: derive_seed(self.seed, &[SELECTION_TAG]),
            ..self.selection
        }
    }

    pub fn influence_config(&self) -> InfluenceConfig {
        InfluenceConfig {
            correction: self.influence.correction,
            weak_f_floor: self.influence.weak_f_floor,
            ..InfluenceConfig::default()
        }
    }

    /// The simulator settings, seeded by the master seed.
    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            seed: self.seed,
            ..self.simulate.clone()
        }
    }
}
