//! Run configuration for `fit`, stored as JSON.
//!
//! Every field has a default except the input and output paths. The
//! canonical form is the pretty-printed JSON of the fully populated struct;
//! parsing it back yields the same value.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphsel::{self, DEFAULT_BETA};
use crate::model::{Hyperparams, RankRule};
use crate::sampler::ChainConfig;

/// Hyperparameters left unset take their defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperOverrides {
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub a_delta: Option<f64>,
    pub b_delta: Option<f64>,
    pub a_alpha: Option<f64>,
    pub b_alpha: Option<f64>,
}

impl HyperOverrides {
    pub fn apply(&self, q: usize) -> Hyperparams {
        let mut h = Hyperparams::with_rank(q);
        let slots = [
            (&mut h.a, self.a),
            (&mut h.b, self.b),
            (&mut h.a_delta, self.a_delta),
            (&mut h.b_delta, self.b_delta),
            (&mut h.a_alpha, self.a_alpha),
            (&mut h.b_alpha, self.b_alpha),
        ];
        for (slot, v) in slots {
            if let Some(v) = v {
                *slot = v;
            }
        }
        h
    }
}

/// `points` equally spaced thresholds from `lo` to `hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            lo: 0.01,
            hi: 0.5,
            points: 50,
        }
    }
}

impl GridSpec {
    pub fn values(&self) -> Result<Vec<f64>> {
        if self.points == 0 || !(0.0 < self.lo && self.lo <= self.hi && self.hi < 1.0) {
            return Err(Error::Config(format!(
                "epsilon grid needs 0 < lo <= hi < 1 and at least one point, got {self:?}"
            )));
        }
        if self.points > 1 && self.lo == self.hi {
            return Err(Error::Config("epsilon grid with several points needs lo < hi".into()));
        }
        Ok(graphsel::linear_grid(self.lo, self.hi, self.points))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Data CSV: rows are observations, columns variables.
    pub input: PathBuf,
    pub output_dir: PathBuf,
    pub hyper: HyperOverrides,
    pub chain: ChainConfig,
    pub epsilon_grid: GridSpec,
    pub beta: f64,
    /// Center columns before fitting.
    pub center: bool,
    /// Fixed rank; `null` selects it from the data.
    pub q: Option<usize>,
    pub rank_threshold: f64,
    pub rank_rule: RankRule,
    /// Also export retained draws as CSV.
    pub csv_draws: bool,
    /// Entrywise credible-band level for partial correlations, if wanted.
    pub band_level: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: PathBuf::new(),
            output_dir: PathBuf::new(),
            hyper: HyperOverrides::default(),
            chain: ChainConfig::default(),
            epsilon_grid: GridSpec::default(),
            beta: DEFAULT_BETA,
            center: true,
            q: None,
            rank_threshold: 0.95,
            rank_rule: RankRule::default(),
            csv_draws: false,
            band_level: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn canonical(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.input.as_os_str().is_empty() {
            return Err(Error::Config("no input file given".into()));
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(Error::Config("no output directory given".into()));
        }
        self.chain.validate()?;
        self.epsilon_grid.values()?;
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::Config(format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        if !(self.rank_threshold > 0.0 && self.rank_threshold <= 1.0) {
            return Err(Error::Config(format!("rank threshold {} outside (0, 1]", self.rank_threshold)));
        }
        if self.q == Some(0) {
            return Err(Error::Config("q must be positive".into()));
        }
        if let Some(level) = self.band_level {
            if !(level > 0.0 && level < 1.0) {
                return Err(Error::Config(format!("band level {level} outside (0, 1)")));
            }
        }
        Ok(())
    }
}
