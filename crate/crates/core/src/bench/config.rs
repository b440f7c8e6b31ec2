use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::search::DEFAULT_CANDIDATES;
use crate::estimators::SearchVolume;
use crate::geometry::{CartesianPosition, Environment, Scene, SceneConfig};
use crate::nn::{NetworkConfig, TrainConfig};
use crate::propagation::PerturbSpec;

/// Axis-aligned box from which source positions are drawn uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Default for PriorBox {
    fn default() -> Self {
        Self {
            min: [-150.0, -100.0, 5.0],
            max: [150.0, 0.0, 45.0],
        }
    }
}

impl PriorBox {
    pub fn validate(&self, env: &Environment) -> Result<()> {
        for i in 0..3 {
            if !(self.min[i] < self.max[i]) {
                return Err(Error::Config(format!("prior box axis {i}: min must be < max")));
            }
        }
        if !(self.min[2] > 0.0 && self.max[2] < env.h) {
            return Err(Error::Config(format!(
                "prior depths [{}, {}] leave the water column (0, {})",
                self.min[2], self.max[2], env.h
            )));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> CartesianPosition {
        let a = [0, 1, 2].map(|i| self.min[i] + rng.random::<f64>() * (self.max[i] - self.min[i]));
        CartesianPosition::from_array(a)
    }

    pub fn contains(&self, p: &CartesianPosition) -> bool {
        let a = p.to_array();
        (0..3).all(|i| a[i] >= self.min[i] && a[i] <= self.max[i])
    }

    pub fn centroid(&self) -> CartesianPosition {
        CartesianPosition::from_array([0, 1, 2].map(|i| 0.5 * (self.min[i] + self.max[i])))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelVariant {
    #[default]
    Static,
    DynamicSurface,
}

/// Estimators the bench can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    OracleMfp,
    Sbl,
    GccPhat,
    Cnn,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] = [Self::OracleMfp, Self::Sbl, Self::GccPhat, Self::Cnn];

    pub fn name(self) -> &'static str {
        match self {
            Self::OracleMfp => "oracle-mfp",
            Self::Sbl => "sbl",
            Self::GccPhat => "gcc-phat",
            Self::Cnn => "cnn",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown estimator '{s}'")))
    }
}

/// Grid schedule; the box is the prior box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub points: usize,
    pub levels: usize,
    pub shrink: f64,
    /// Coarse local maxima refined per search.
    pub candidates: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            points: 21,
            levels: 3,
            shrink: 0.25,
            candidates: DEFAULT_CANDIDATES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Records generated per SNR level.
    pub records_per_snr: usize,
    /// Keep the channel truth needed by the oracle estimator.
    pub include_truth: bool,
    /// Trailing fraction of a dataset held out from training.
    pub holdout_fraction: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            records_per_snr: 100,
            include_truth: true,
            holdout_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Write measured runtimes; off gives byte-reproducible CSVs.
    pub report_runtime: bool,
    pub plot: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            report_runtime: true,
            plot: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub scene: SceneConfig,
    pub prior: PriorBox,
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub model: ModelVariant,
    pub perturbation: PerturbSpec,
    /// Interleaved f64 complex noise recording; white noise when absent.
    pub noise_file: Option<PathBuf>,
    pub estimators: Vec<EstimatorKind>,
    pub search: SearchConfig,
    pub dataset: DatasetConfig,
    pub network: NetworkConfig,
    pub training: TrainConfig,
    /// Joint model used by the `cnn` estimator.
    pub checkpoint: Option<PathBuf>,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            scene: SceneConfig::default(),
            prior: PriorBox::default(),
            snr_db: vec![-10.0, 0.0, 10.0, 20.0, 30.0],
            trials: 100,
            model: ModelVariant::Static,
            perturbation: PerturbSpec::default(),
            noise_file: None,
            estimators: vec![EstimatorKind::OracleMfp, EstimatorKind::Sbl, EstimatorKind::GccPhat],
            search: SearchConfig::default(),
            dataset: DatasetConfig::default(),
            network: NetworkConfig::default(),
            training: TrainConfig::default(),
            checkpoint: None,
            output: OutputConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let scene = self.scene()?;
        self.prior.validate(&scene.env)?;
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.snr_db.is_empty() || self.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config("SNR list must be nonempty and finite".into()));
        }
        if !(0.0..1.0).contains(&self.dataset.holdout_fraction) {
            return Err(Error::Config("holdout fraction must be in [0, 1)".into()));
        }
        self.volume()?;
        self.network.validate()?;
        self.training.validate()?;
        Ok(())
    }

    pub fn scene(&self) -> Result<Scene> {
        self.scene.build().map_err(|e| Error::Config(e.to_string()))
    }

    pub fn volume(&self) -> Result<SearchVolume> {
        SearchVolume::with_points(
            self.prior.min,
            self.prior.max,
            self.search.points,
            self.search.levels,
            self.search.shrink,
        )
        .and_then(|v| v.with_candidates(self.search.candidates))
        .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn dynamic(&self) -> Option<PerturbSpec> {
        match self.model {
            ModelVariant::Static => None,
            ModelVariant::DynamicSurface => Some(self.perturbation),
        }
    }
}
