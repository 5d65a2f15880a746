//! Experiment configuration: flat TOML with one section per subsystem.
//! Unknown keys are hard errors, and the harness writes the fully resolved
//! config (defaults expanded) next to every artifact so a run can be
//! reproduced from its output directory alone.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::StepSchedule;
use crate::error::{Error, Result};
use crate::feature_space::{FamilySpec, FeatureFamily};
use crate::learner::LearnerConfig;
use crate::synthetic::{self, DataStream, StreamRole};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub family: FamilySpec,
    pub data: DataSection,
    pub learner: LearnerSection,
    #[serde(default)]
    pub estimator: EstimatorSection,
    #[serde(default)]
    pub dsgd: DsgdSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataKind {
    Realizable,
    Toy2d,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub kind: DataKind,
    /// Data-stream seed; defaults to the learner seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_norm: Option<f64>,
    #[serde(default = "default_noise_sd")]
    pub noise_sd: f64,
    #[serde(default = "default_test_size")]
    pub test_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

fn default_noise_sd() -> f64 {
    0.05
}

fn default_test_size() -> usize {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerSection {
    pub horizon: usize,
    pub norm_bound: f64,
    #[serde(default)]
    pub seed: u64,
    /// When true, eta and m_train come from the theorem schedule at each
    /// horizon (scaled by c_eta / c_m, clamped by m_min / m_max).
    #[serde(default)]
    pub use_theorem_schedule: bool,
    #[serde(default = "one")]
    pub c_eta: f64,
    #[serde(default = "one")]
    pub c_m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_train: Option<usize>,
    #[serde(default = "default_m_min")]
    pub m_min: usize,
    #[serde(default = "default_m_max")]
    pub m_max: usize,
    #[serde(default = "default_threshold_factor")]
    pub shrink_threshold_factor: f64,
    #[serde(default = "default_shrink_ratio")]
    pub shrink_ratio: f64,
}

fn one() -> f64 {
    1.0
}

fn default_m_min() -> usize {
    1
}

fn default_m_max() -> usize {
    usize::MAX
}

fn default_threshold_factor() -> f64 {
    16.0
}

fn default_shrink_ratio() -> f64 {
    0.25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSection {
    #[serde(default = "default_eps0")]
    pub eps0: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub clamp_predictions: bool,
}

fn default_eps0() -> f64 {
    0.1
}

fn default_delta() -> f64 {
    0.05
}

impl Default for EstimatorSection {
    fn default() -> Self {
        EstimatorSection {
            eps0: default_eps0(),
            delta: default_delta(),
            clamp_predictions: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepKind {
    Constant,
    InvSqrt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DsgdSection {
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_step_kind")]
    pub step: StepKind,
    #[serde(default = "default_step_scale")]
    pub step_scale: f64,
}

fn default_gamma() -> f64 {
    0.01
}

fn default_step_kind() -> StepKind {
    StepKind::InvSqrt
}

fn default_step_scale() -> f64 {
    0.5
}

impl Default for DsgdSection {
    fn default() -> Self {
        DsgdSection {
            gamma: default_gamma(),
            step: default_step_kind(),
            step_scale: default_step_scale(),
        }
    }
}

impl DsgdSection {
    pub fn schedule(&self) -> StepSchedule {
        match self.step {
            StepKind::Constant => StepSchedule::Constant(self.step_scale),
            StepKind::InvSqrt => StepSchedule::InvSqrt(self.step_scale),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<Algorithm>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub compute_regret: bool,
    #[serde(default)]
    pub train_sizes: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Shrink,
    ExactOgd,
    Dsgd,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Shrink => "shrink",
            Algorithm::ExactOgd => "exact-ogd",
            Algorithm::Dsgd => "dsgd",
        }
    }
}

fn default_algorithms() -> Vec<Algorithm> {
    vec![Algorithm::Shrink]
}

fn default_repeats() -> usize {
    1
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_workers() -> usize {
    1
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            algorithms: default_algorithms(),
            repeats: default_repeats(),
            out_dir: default_out_dir(),
            workers: default_workers(),
            compute_regret: false,
            train_sizes: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let body = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&body)
    }

    pub fn parse(body: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(body).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("serialize: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        FeatureFamily::from_spec(&self.family)?;
        match self.data.kind {
            DataKind::Realizable => {
                if self.data.support_size.is_none() || self.data.target_norm.is_none() {
                    return Err(Error::Config(
                        "realizable data needs support_size and target_norm".into(),
                    ));
                }
                if self.data.path.is_some() {
                    return Err(Error::Config("realizable data takes no path".into()));
                }
            }
            DataKind::Toy2d => {
                if self.data.support_size.is_some() || self.data.target_norm.is_some() || self.data.path.is_some() {
                    return Err(Error::Config(
                        "toy2d data takes only noise_sd / seed / test_size".into(),
                    ));
                }
                if self.family.dim != 2 {
                    return Err(Error::Config("toy2d data requires a dim = 2 family".into()));
                }
            }
            DataKind::File => {
                if self.data.path.is_none() {
                    return Err(Error::Config("file data needs a path".into()));
                }
            }
        }
        if !(self.data.noise_sd >= 0.0) {
            return Err(Error::Config("noise_sd must be >= 0".into()));
        }
        if self.learner.m_min > self.learner.m_max {
            return Err(Error::Config("m_min must not exceed m_max".into()));
        }
        if !self.learner.use_theorem_schedule && (self.learner.eta.is_none() || self.learner.m_train.is_none()) {
            return Err(Error::Config(
                "set eta and m_train explicitly, or use_theorem_schedule = true".into(),
            ));
        }
        if self.run.repeats == 0 {
            return Err(Error::Config("repeats must be >= 1".into()));
        }
        if self.run.workers == 0 {
            return Err(Error::Config("workers must be >= 1".into()));
        }
        // Resolving the learner config surfaces range errors early.
        self.learner_config_for(self.learner.horizon, self.learner.seed)
            .and_then(|c| c.validate().map(|_| ()))
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn family(&self) -> Result<FeatureFamily> {
        FeatureFamily::from_spec(&self.family)
    }

    pub fn data_seed(&self) -> u64 {
        self.data.seed.unwrap_or(self.learner.seed)
    }

    /// Concrete learner parameters for one run at the given horizon and seed,
    /// applying the theorem schedule and the m clamps when enabled.
    pub fn learner_config_for(&self, horizon: usize, seed: u64) -> Result<LearnerConfig> {
        let ls = &self.learner;
        let (eta, m_train) = if ls.use_theorem_schedule {
            if !(ls.norm_bound > 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "norm bound B must exceed 1, got {}",
                    ls.norm_bound
                )));
            }
            let schedule = crate::learner::theorem_schedule(ls.norm_bound, horizon.max(1), ls.c_eta, ls.c_m);
            (schedule.eta, schedule.m_train.clamp(ls.m_min, ls.m_max))
        } else {
            (ls.eta.unwrap(), ls.m_train.unwrap().clamp(ls.m_min, ls.m_max))
        };
        Ok(LearnerConfig {
            horizon,
            norm_bound: ls.norm_bound,
            eta,
            m_train,
            shrink_threshold_factor: ls.shrink_threshold_factor,
            shrink_ratio: ls.shrink_ratio,
            seed,
            c_eta: ls.c_eta,
            c_m: ls.c_m,
        })
    }

    /// Build the stream for one repeat and role. Repeats shift the data seed
    /// so they are independent; train and test roles are disjoint sub-streams.
    pub fn stream(&self, repeat: usize, role: StreamRole) -> Result<DataStream> {
        let seed = self.data_seed().wrapping_add(repeat as u64);
        let family = self.family()?;
        match self.data.kind {
            DataKind::Realizable => synthetic::realizable_stream(
                &family,
                self.data.support_size.unwrap(),
                self.data.target_norm.unwrap(),
                self.data.noise_sd,
                seed,
                role,
            ),
            DataKind::Toy2d => Ok(synthetic::toy2d_stream(self.data.noise_sd, seed, role)),
            DataKind::File => {
                if role == StreamRole::Test {
                    return Err(Error::Config(
                        "file-backed data has no test split; use a generated stream".into(),
                    ));
                }
                synthetic::load_fixed(self.data.path.as_ref().unwrap())
            }
        }
    }
}
