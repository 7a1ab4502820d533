use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::init::Initializer;
use crate::denoiser::DenoiserSpec;
use crate::error::{PnpError, Result};
use crate::solver::{CoarseToFineParams, SolverKind, StopRule};

fn default_kernel_size() -> usize {
    9
}

fn default_realizations() -> usize {
    1
}

fn default_size() -> usize {
    64
}

fn default_delta0_factor() -> f64 {
    1.0 / 6.0
}

fn default_decay_exponent() -> f64 {
    0.8
}

fn default_true() -> bool {
    true
}

/// The degradation model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Problem {
    /// `y = x + σ n`.
    Denoising { sigma: f64 },
    /// `y = k ∗ x + σ n` with a `kernel_size × kernel_size` uniform kernel.
    Deblurring {
        sigma: f64,
        #[serde(default = "default_kernel_size")]
        kernel_size: usize,
    },
    /// `y = Qx`, hiding a uniformly drawn `hidden_fraction` of the pixels.
    Inpainting { hidden_fraction: f64 },
}

impl Problem {
    pub fn name(&self) -> &'static str {
        match self {
            Problem::Denoising { .. } => "denoising",
            Problem::Deblurring { .. } => "deblurring",
            Problem::Inpainting { .. } => "inpainting",
        }
    }

    /// Observation noise level, zero under hard constraints.
    pub fn sigma(&self) -> f64 {
        match *self {
            Problem::Denoising { sigma } | Problem::Deblurring { sigma, .. } => sigma,
            Problem::Inpainting { .. } => 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Problem::Denoising { sigma } if !(sigma >= 0.0 && sigma.is_finite()) => {
                Err(PnpError::Config(format!("sigma must be >= 0, got {sigma}")))
            }
            Problem::Deblurring { sigma, .. } if !(sigma > 0.0 && sigma.is_finite()) => {
                Err(PnpError::Config(format!("deblurring needs sigma > 0, got {sigma}")))
            }
            Problem::Deblurring { kernel_size, .. } if kernel_size == 0 => {
                Err(PnpError::Config("kernel size must be >= 1".into()))
            }
            Problem::Inpainting { hidden_fraction } if !(hidden_fraction > 0.0 && hidden_fraction < 1.0) => Err(
                PnpError::Config(format!("hidden fraction must lie in (0, 1), got {hidden_fraction}")),
            ),
            _ => Ok(()),
        }
    }
}

/// Test images: synthetic names and/or grayscale files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageSet {
    #[serde(default)]
    pub synthetic: Vec<String>,
    #[serde(default)]
    pub files: Vec<PathBuf>,
    /// Side length of synthetic images; file images are center-cropped to it when larger.
    #[serde(default = "default_size")]
    pub size: usize,
}

impl Default for ImageSet {
    fn default() -> Self {
        Self {
            synthetic: vec!["shapes".into()],
            files: Vec::new(),
            size: default_size(),
        }
    }
}

/// Step-size settings for the stochastic scheme, relative to the stable step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSettings {
    #[serde(default = "default_delta0_factor")]
    pub delta0_factor: f64,
    /// Burn-in length when the stop rule is not a PSNR plateau.
    #[serde(default)]
    pub n_burnin: usize,
    #[serde(default = "default_decay_exponent")]
    pub decay_exponent: f64,
}

impl Default for ScheduleSettings {
    fn default() -> Self {
        Self {
            delta0_factor: default_delta0_factor(),
            n_burnin: 0,
            decay_exponent: default_decay_exponent(),
        }
    }
}

/// Per-solver overrides. Unset fields take the solver's defaults.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOverrides {
    pub max_iters: Option<usize>,
    pub stop_rule: Option<StopRule>,
    pub noise_enabled: Option<bool>,
}

/// Fully resolved settings of one solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub max_iters: usize,
    pub stop_rule: StopRule,
    pub noise_enabled: bool,
}

impl SolverSettings {
    pub fn defaults(kind: SolverKind) -> Self {
        match kind {
            SolverKind::Sgd => Self {
                max_iters: 4000,
                stop_rule: StopRule::PsnrPlateau {
                    factor: 0.1,
                    min_iters: 50,
                    max_iters: 3000,
                    decay_iters: 500,
                },
                noise_enabled: true,
            },
            SolverKind::Admm => Self::fixed(100),
            SolverKind::Fbs | SolverKind::Bbs => Self::fixed(500),
        }
    }

    fn fixed(max_iters: usize) -> Self {
        Self {
            max_iters,
            stop_rule: StopRule::FixedIterations,
            noise_enabled: false,
        }
    }

    fn apply(mut self, o: &SolverOverrides) -> Self {
        if let Some(m) = o.max_iters {
            self.max_iters = m;
        }
        if let Some(r) = o.stop_rule {
            self.stop_rule = r;
        }
        if let Some(n) = o.noise_enabled {
            self.noise_enabled = n;
        }
        self
    }
}

/// Coarse-to-fine settings: the denoiser is rebuilt at each `epsilons` entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseToFineSettings {
    pub epsilons: Vec<f64>,
    #[serde(default, flatten)]
    pub params: CoarseToFineParams,
}

/// A complete experiment, read from a TOML document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed. Every random quantity in a run is derived from it.
    pub seed: u64,
    pub problem: Problem,
    pub denoiser: DenoiserSpec,
    pub alphas: Vec<f64>,
    pub solvers: Vec<SolverKind>,
    #[serde(default = "default_realizations")]
    pub realizations: usize,
    #[serde(default)]
    pub images: ImageSet,
    #[serde(default)]
    pub initializer: Initializer,
    #[serde(default)]
    pub schedule: ScheduleSettings,
    #[serde(default)]
    pub solver: BTreeMap<SolverKind, SolverOverrides>,
    #[serde(default)]
    pub coarse_to_fine: Option<CoarseToFineSettings>,
    /// Record SSIM in every trace record, not only for the final iterate.
    #[serde(default)]
    pub record_ssim: bool,
    #[serde(default = "default_true")]
    pub write_images: bool,
    #[serde(default = "default_true")]
    pub write_traces: bool,
    /// Upper bound on worker threads; all cores when unset.
    #[serde(default)]
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| PnpError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file. Relative image paths are resolved against its directory.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let Some(dir) = path.parent() {
            for f in &mut cfg.images.files {
                if f.is_relative() {
                    *f = dir.join(&*f);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| PnpError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.problem.validate()?;
        if self.realizations == 0 {
            return Err(PnpError::Config("realizations must be >= 1".into()));
        }
        if self.alphas.is_empty() || self.alphas.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return Err(PnpError::Config(format!("alphas must be a nonempty list of positive values, got {:?}", self.alphas)));
        }
        if self.solvers.is_empty() {
            return Err(PnpError::Config("at least one solver is required".into()));
        }
        if self.images.synthetic.is_empty() && self.images.files.is_empty() {
            return Err(PnpError::Config("no images configured".into()));
        }
        if self.images.size == 0 {
            return Err(PnpError::Config("image size must be >= 1".into()));
        }
        if !(self.schedule.delta0_factor > 0.0 && self.schedule.delta0_factor.is_finite()) {
            return Err(PnpError::Config("delta0_factor must be > 0".into()));
        }
        if self.problem.sigma() == 0.0 && self.solvers.contains(&SolverKind::Fbs) {
            return Err(PnpError::Config(format!(
                "fbs needs a differentiable data term and cannot run on noiseless {}",
                self.problem.name()
            )));
        }
        if let Some(c) = &self.coarse_to_fine {
            if c.epsilons.is_empty() || c.epsilons.windows(2).any(|w| !(w[1] < w[0])) {
                return Err(PnpError::Config("coarse-to-fine epsilons must be nonempty and strictly decreasing".into()));
            }
        }
        if let Some(0) = self.threads {
            return Err(PnpError::Config("threads must be >= 1".into()));
        }
        Ok(())
    }

    pub fn solver_settings(&self, kind: SolverKind) -> SolverSettings {
        let base = SolverSettings::defaults(kind);
        self.solver.get(&kind).map_or(base, |o| base.apply(o))
    }
}
