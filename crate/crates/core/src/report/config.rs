use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multiplicity::Denominator;
use crate::reachability::CostMode;
use crate::synth::SyntheticSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetFormat {
    /// `user::item::rating[::...]` lines (separator configurable).
    Explicit,
    /// Tab-separated play counts, log-mapped to 1..5.
    Plays,
    /// `u<TAB>i<TAB>r` fixture lines with dense indices.
    Canonical,
    /// Built-in generator; no file needed.
    #[default]
    Synthetic,
}

/// Every knob of a pipeline run. Read from a flat TOML document; missing
/// keys take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset_format: DatasetFormat,
    pub dataset_path: Option<PathBuf>,
    pub separator: String,
    pub d_list: Vec<usize>,
    pub n_list: Vec<usize>,
    pub epsilon: f64,
    pub lambda: f64,
    pub sweeps: usize,
    pub tol: f64,
    pub seed: u64,
    /// Keep only the `item_filter` most-rated items.
    pub item_filter: Option<usize>,
    pub test_fraction: f64,
    pub cost_mode: CostMode,
    /// Recourse rows are computed for this many users on the best model (0 = skip).
    pub recourse_users: usize,
    pub output_dir: PathBuf,
    /// Worker threads for training and auditing; `None` uses every core.
    pub workers: Option<usize>,
    pub include_bias: bool,
    pub thresholds: Vec<f64>,
    pub denominator: Denominator,
    pub synthetic_users: usize,
    pub synthetic_items: usize,
    pub synthetic_rank: usize,
    pub synthetic_density: f64,
    pub synthetic_noise: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let synth = SyntheticSpec::default();
        ExperimentConfig {
            dataset_format: DatasetFormat::Synthetic,
            dataset_path: None,
            separator: "::".into(),
            d_list: vec![16, 32, 64, 128, 256, 512],
            n_list: vec![1, 2, 3, 5, 20, 100],
            epsilon: 0.02,
            lambda: 0.1,
            sweeps: 20,
            tol: 1e-6,
            seed: 0,
            item_filter: None,
            test_fraction: 0.2,
            cost_mode: CostMode::HistoryEdits,
            recourse_users: 0,
            output_dir: PathBuf::from("out"),
            workers: None,
            include_bias: false,
            thresholds: vec![1.0, 5.0, 10.0],
            denominator: Denominator::SmallerSet,
            synthetic_users: synth.users,
            synthetic_items: synth.items,
            synthetic_rank: synth.rank,
            synthetic_density: synth.density,
            synthetic_noise: synth.noise,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read {}: {e}", path.display()))
        })?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.d_list.is_empty() || self.d_list.contains(&0) {
            return bad("d_list must be non-empty with entries ≥ 1".into());
        }
        if self.n_list.is_empty() || self.n_list.contains(&0) {
            return bad("n_list must be non-empty with entries ≥ 1".into());
        }
        if !(self.epsilon >= 0.0) {
            return bad(format!("epsilon must be ≥ 0, got {}", self.epsilon));
        }
        if !(self.lambda >= 0.0) || !(self.tol >= 0.0) {
            return bad("lambda and tol must be ≥ 0".into());
        }
        if self.sweeps == 0 {
            return bad("sweeps must be ≥ 1".into());
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad(format!("test_fraction must lie in (0, 1), got {}", self.test_fraction));
        }
        if self.item_filter == Some(0) || self.workers == Some(0) {
            return bad("item_filter and workers must be ≥ 1 when set".into());
        }
        if self.thresholds.windows(2).any(|w| !(w[0] < w[1])) {
            return bad("thresholds must be strictly ascending".into());
        }
        if self.dataset_format != DatasetFormat::Synthetic && self.dataset_path.is_none() {
            return bad(format!("dataset_format {:?} needs dataset_path", self.dataset_format));
        }
        if self.separator.is_empty() {
            return bad("separator must not be empty".into());
        }
        Ok(())
    }

    pub fn synthetic_spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            users: self.synthetic_users,
            items: self.synthetic_items,
            rank: self.synthetic_rank,
            density: self.synthetic_density,
            noise: self.synthetic_noise,
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn partial_document_fills_defaults() {
        let c = ExperimentConfig::from_toml("d_list = [2, 4]\nseed = 9\ncost_mode = \"reactions\"\n").unwrap();
        assert_eq!(c.d_list, vec![2, 4]);
        assert_eq!(c.seed, 9);
        assert_eq!(c.cost_mode, CostMode::Reactions);
        assert_eq!(c.n_list, vec![1, 2, 3, 5, 20, 100]);
    }

    #[test]
    fn rejects_bad_documents() {
        for text in [
            "d_list = []",
            "n_list = [0]",
            "epsilon = -0.1",
            "unknown_key = 1",
            "dataset_format = \"explicit\"",
            "thresholds = [5.0, 1.0]",
            "test_fraction = 1.0",
            "d_list = \"x\"",
        ] {
            let err = ExperimentConfig::from_toml(text).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{text}: {err}");
        }
    }
}
