use serde::{Deserialize, Serialize};

use super::{
    delta_stable, delta_stable_reduced, residual_lipschitz_or_default, solve, RunTrace, SolverConfig, SolverKind,
    StepSchedule, StopRule,
};
use crate::denoiser::DenoiserSpec;
use crate::error::{PnpError, Result};
use crate::grid::ImageGrid;
use crate::likelihood::Likelihood;

/// Per-level budget of the coarse-to-fine driver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoarseToFineParams {
    pub burnin_iters: usize,
    pub decay_iters: usize,
    /// `δ₀ = step_factor · δ_stable` at every level.
    pub step_factor: f64,
    pub decay_exponent: f64,
}

impl Default for CoarseToFineParams {
    fn default() -> Self {
        Self {
            burnin_iters: 2000,
            decay_iters: 1000,
            step_factor: 2.5,
            decay_exponent: 0.8,
        }
    }
}

impl CoarseToFineParams {
    pub fn iterations_per_level(&self) -> usize {
        self.burnin_iters + self.decay_iters
    }

    /// Stable step for one level: the reduced-space bound under hard
    /// constraints, the full `2/L_tot` for a Gaussian likelihood.
    pub fn level_schedule(&self, lik: &Likelihood, alpha: f64, epsilon: f64, residual_l: f64) -> Result<StepSchedule> {
        let stable = match lik {
            Likelihood::HardConstraint(_) => delta_stable_reduced(alpha, epsilon, residual_l)?,
            Likelihood::Gaussian(l) => delta_stable(alpha, epsilon, residual_l, l)?,
        };
        Ok(StepSchedule::decaying(
            self.step_factor * stable,
            self.burnin_iters,
            self.decay_exponent,
        ))
    }
}

/// Noise levels `(40/255)², (15/255)², (5/255)²`.
pub fn default_coarse_to_fine_epsilons() -> Vec<f64> {
    [40.0, 15.0, 5.0].iter().map(|s: &f64| (s / 255.0).powi(2)).collect()
}

/// Solves a sequence of problems at decreasing `ε`, warm-starting each level
/// from the previous result. Level `ℓ` uses seed `cfg.seed + ℓ`.
pub fn coarse_to_fine(
    lik: &Likelihood,
    levels: &[DenoiserSpec],
    solver: SolverKind,
    cfg: &SolverConfig,
    params: &CoarseToFineParams,
    x0: &ImageGrid,
) -> Result<(ImageGrid, RunTrace)> {
    if levels.is_empty() {
        return Err(PnpError::Config("coarse-to-fine needs at least one level".into()));
    }
    if levels.windows(2).any(|w| !(w[1].epsilon < w[0].epsilon)) {
        return Err(PnpError::Config("coarse-to-fine epsilons must be strictly decreasing".into()));
    }
    let mut x = x0.clone();
    let mut combined: Option<RunTrace> = None;
    for (level, spec) in levels.iter().enumerate() {
        let d = spec.build()?;
        let sched = params.level_schedule(lik, cfg.alpha, d.epsilon(), residual_lipschitz_or_default(d.as_ref()))?;
        let level_cfg = SolverConfig {
            max_iters: params.iterations_per_level(),
            seed: cfg.seed.wrapping_add(level as u64),
            stop_rule: StopRule::FixedIterations,
            ..cfg.clone()
        };
        let (out, trace) = solve(solver, lik, d.as_ref(), &level_cfg, &sched, &x)?;
        x = out;
        match combined.as_mut() {
            None => combined = Some(trace),
            Some(c) => c.append_level(trace, level),
        }
    }
    Ok((x, combined.expect("at least one level")))
}
