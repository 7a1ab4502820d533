//! PnP iteration schemes: stochastic gradient, ADMM, forward-backward and
//! backward-backward splitting, plus the reduced-space and coarse-to-fine
//! variants used for inpainting.
//!
//! Every scheme minimises the α-folded objective `F + α U_ε`: proximal steps
//! use `γ = ε/α` and gradient steps scale the data term by `ε/α`, so the
//! likelihood itself never sees α.

mod coarse;
mod schedule;
mod sgd;
mod splitting;

pub use coarse::{coarse_to_fine, default_coarse_to_fine_epsilons, CoarseToFineParams};
pub use schedule::{
    delta_stable, delta_stable_from, delta_stable_reduced, total_lipschitz, ScheduleMode, StepSchedule,
};
pub use sgd::{pnp_sgd, reduced_space_sgd};
pub use splitting::{pnp_admm, pnp_bbs, pnp_fbs};

use serde::{Deserialize, Serialize};

use crate::denoiser::Denoiser;
use crate::error::{PnpError, Result};
use crate::grid::ImageGrid;
use crate::likelihood::Likelihood;
use crate::metrics;

/// Iterate norms beyond this multiple of `max(‖x₀‖, 1)` count as divergence.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    Sgd,
    Admm,
    Fbs,
    Bbs,
}

impl SolverKind {
    pub fn name(&self) -> &'static str {
        match self {
            SolverKind::Sgd => "sgd",
            SolverKind::Admm => "admm",
            SolverKind::Fbs => "fbs",
            SolverKind::Bbs => "bbs",
        }
    }
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn default_plateau_factor() -> f64 {
    0.1
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum StopRule {
    /// Run exactly `max_iters` iterations.
    #[default]
    FixedIterations,
    /// End the constant-step phase once `|ΔPSNR| < factor·δ₀` (for the
    /// stochastic scheme) or `|ΔPSNR| < factor` dB (for the splitting schemes),
    /// then run `decay_iters` decaying steps. Needs a reference image.
    PsnrPlateau {
        #[serde(default = "default_plateau_factor")]
        factor: f64,
        #[serde(default)]
        min_iters: usize,
        max_iters: usize,
        #[serde(default)]
        decay_iters: usize,
    },
    /// Stop when the RMS of the drift (stochastic scheme) or of the
    /// fixed-point residual (splitting schemes) drops below `tol`.
    Residual { tol: f64 },
}

fn default_max_iters() -> usize {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub alpha: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub noise_enabled: bool,
    #[serde(default)]
    pub stop_rule: StopRule,
    /// Also record SSIM against the reference at every iteration.
    #[serde(default)]
    pub record_ssim: bool,
    /// Ground truth for PSNR/SSIM tracking and the plateau rule.
    #[serde(skip)]
    pub reference: Option<ImageGrid>,
}

impl SolverConfig {
    pub fn new(alpha: f64, max_iters: usize) -> Self {
        Self {
            alpha,
            max_iters,
            seed: 0,
            noise_enabled: false,
            stop_rule: StopRule::FixedIterations,
            record_ssim: false,
            reference: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_noise(mut self, enabled: bool) -> Self {
        self.noise_enabled = enabled;
        self
    }

    pub fn with_stop_rule(mut self, rule: StopRule) -> Self {
        self.stop_rule = rule;
        self
    }

    pub fn with_reference(mut self, reference: ImageGrid) -> Self {
        self.reference = Some(reference);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(PnpError::Config(format!("alpha must be > 0, got {}", self.alpha)));
        }
        match self.stop_rule {
            StopRule::PsnrPlateau { factor, .. } => {
                if self.reference.is_none() {
                    return Err(PnpError::Config("psnr-plateau stop rule needs a reference image".into()));
                }
                if !(factor > 0.0) {
                    return Err(PnpError::Config(format!("plateau factor must be > 0, got {factor}")));
                }
            }
            StopRule::Residual { tol } if !(tol > 0.0) => {
                return Err(PnpError::Config(format!("residual tolerance must be > 0, got {tol}")));
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// Coarse-to-fine level, 0 for single-level runs.
    pub level: usize,
    /// Iteration index within the level.
    pub k: usize,
    pub step: Option<f64>,
    /// `‖b_ε(X_k)‖` for the stochastic scheme.
    pub drift_norm: Option<f64>,
    /// `‖x_{k+1} − z_{k+1}‖` for ADMM, `‖x_{k+1} − x_k‖` otherwise.
    pub residual: f64,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    /// `‖Qx − y‖_∞` of the iterate produced by the data step, under hard constraints.
    pub feasibility_gap: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    MaxIterations,
    PsnrPlateau,
    Residual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    solver: String,
    records: Vec<IterationRecord>,
    level_starts: Vec<usize>,
    final_iterate: ImageGrid,
    admm_x: Option<ImageGrid>,
    admm_z: Option<ImageGrid>,
    stop_reason: StopReason,
}

impl RunTrace {
    pub fn solver(&self) -> &str {
        &self.solver
    }

    pub fn records(&self) -> &[IterationRecord] {
        &self.records
    }

    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    /// Index of the first record of each level.
    pub fn level_starts(&self) -> &[usize] {
        &self.level_starts
    }

    pub fn final_iterate(&self) -> &ImageGrid {
        &self.final_iterate
    }

    /// ADMM's last `x` (data-side) iterate.
    pub fn admm_x(&self) -> Option<&ImageGrid> {
        self.admm_x.as_ref()
    }

    /// ADMM's last `z` (denoiser-side) iterate.
    pub fn admm_z(&self) -> Option<&ImageGrid> {
        self.admm_z.as_ref()
    }

    pub fn stop_reason(&self) -> StopReason {
        self.stop_reason
    }

    fn append_level(&mut self, mut next: RunTrace, level: usize) {
        self.level_starts.push(self.records.len());
        for r in next.records.iter_mut() {
            r.level = level;
        }
        self.records.append(&mut next.records);
        self.final_iterate = next.final_iterate;
        self.admm_x = next.admm_x;
        self.admm_z = next.admm_z;
        self.stop_reason = next.stop_reason;
    }
}

/// Quality tracking and divergence detection shared by all schemes.
struct Monitor<'a> {
    reference: Option<&'a ImageGrid>,
    with_ssim: bool,
    limit: f64,
}

impl<'a> Monitor<'a> {
    fn new(cfg: &'a SolverConfig, x0: &ImageGrid) -> Result<Self> {
        if let Some(r) = &cfg.reference {
            r.ensure_same_shape(x0)?;
        }
        Ok(Self {
            reference: cfg.reference.as_ref(),
            with_ssim: cfg.record_ssim,
            limit: DIVERGENCE_FACTOR * x0.norm().max(1.0),
        })
    }

    fn psnr(&self, x: &ImageGrid) -> Result<Option<f64>> {
        self.reference.map(|r| metrics::psnr(x, r)).transpose()
    }

    fn ssim(&self, x: &ImageGrid) -> Result<Option<f64>> {
        match self.reference {
            Some(r) if self.with_ssim => metrics::ssim(x, r).map(Some),
            _ => Ok(None),
        }
    }

    fn check(&self, k: usize, next: &ImageGrid, last: &ImageGrid, note: impl FnOnce() -> String) -> Result<()> {
        let message = if !next.is_finite() {
            "iterate is not finite".to_string()
        } else if next.norm() > self.limit {
            format!("iterate norm {:.3e} exceeds {:.3e}", next.norm(), self.limit)
        } else {
            return Ok(());
        };
        let extra = note();
        Err(PnpError::Divergence {
            iteration: k,
            message: if extra.is_empty() { message } else { format!("{message}; {extra}") },
            last_finite: Box::new(last.clone()),
        })
    }
}

/// Residual Lipschitz constant of `d`, or 1 when none is certified.
pub fn residual_lipschitz_or_default(d: &dyn Denoiser) -> f64 {
    d.residual_lipschitz().unwrap_or(1.0)
}

/// Runs `kind` on `lik`, choosing the reduced-space stochastic scheme under hard constraints.
pub fn solve(
    kind: SolverKind,
    lik: &Likelihood,
    d: &dyn Denoiser,
    cfg: &SolverConfig,
    sched: &StepSchedule,
    x0: &ImageGrid,
) -> Result<(ImageGrid, RunTrace)> {
    match (kind, lik) {
        (SolverKind::Sgd, Likelihood::Gaussian(l)) => pnp_sgd(l, d, cfg, sched, x0),
        (SolverKind::Sgd, Likelihood::HardConstraint(l)) => reduced_space_sgd(l, d, cfg, sched, x0),
        (SolverKind::Admm, _) => pnp_admm(lik, d, cfg, x0),
        (SolverKind::Bbs, _) => pnp_bbs(lik, d, cfg, x0),
        (SolverKind::Fbs, Likelihood::Gaussian(l)) => pnp_fbs(l, d, cfg, x0),
        (SolverKind::Fbs, Likelihood::HardConstraint(_)) => Err(PnpError::Config(
            "forward-backward splitting needs a differentiable data term".into(),
        )),
    }
}
