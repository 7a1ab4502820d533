use serde::{Deserialize, Serialize};

use crate::error::{PnpError, Result};
use crate::likelihood::GaussianLikelihood;

fn default_exponent() -> f64 {
    0.8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleMode {
    /// `δ₀` up to and including `n_burnin`, then `δ₀ (k − n_burnin)^(−p)`.
    #[default]
    ConstantThenDecay,
    Constant,
}

/// Step sizes `δ_k` for the stochastic scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub delta0: f64,
    #[serde(default)]
    pub n_burnin: usize,
    #[serde(default = "default_exponent")]
    pub decay_exponent: f64,
    #[serde(default)]
    pub mode: ScheduleMode,
}

impl StepSchedule {
    pub fn constant(delta0: f64) -> Self {
        Self {
            delta0,
            n_burnin: 0,
            decay_exponent: default_exponent(),
            mode: ScheduleMode::Constant,
        }
    }

    pub fn decaying(delta0: f64, n_burnin: usize, decay_exponent: f64) -> Self {
        Self {
            delta0,
            n_burnin,
            decay_exponent,
            mode: ScheduleMode::ConstantThenDecay,
        }
    }

    /// Checks `δ₀ > 0`, and with noise enabled that the decay exponent lies in
    /// (0.5, 1], so that `Σ δ_k = ∞` and `Σ δ_k² < ∞`.
    pub fn validate(&self, noise_enabled: bool) -> Result<()> {
        if !(self.delta0 > 0.0 && self.delta0.is_finite()) {
            return Err(PnpError::Config(format!("delta0 must be > 0, got {}", self.delta0)));
        }
        if self.mode == ScheduleMode::ConstantThenDecay && noise_enabled && !self.is_summable_squares() {
            return Err(PnpError::Config(format!(
                "decay exponent {} outside (0.5, 1]: steps would not satisfy sum = inf, sum of squares < inf",
                self.decay_exponent
            )));
        }
        if !self.decay_exponent.is_finite() {
            return Err(PnpError::Config("decay exponent must be finite".into()));
        }
        Ok(())
    }

    fn is_summable_squares(&self) -> bool {
        self.decay_exponent > 0.5 && self.decay_exponent <= 1.0
    }

    /// Whether the schedule meets both step-size conditions.
    pub fn satisfies_step_conditions(&self) -> bool {
        self.mode == ScheduleMode::ConstantThenDecay && self.is_summable_squares()
    }

    pub fn step(&self, k: usize) -> f64 {
        self.step_with_burnin(k, self.n_burnin)
    }

    /// Step at iteration `k` when the constant phase ends at `n_burnin`.
    pub fn step_with_burnin(&self, k: usize, n_burnin: usize) -> f64 {
        match self.mode {
            ScheduleMode::Constant => self.delta0,
            ScheduleMode::ConstantThenDecay if k <= n_burnin => self.delta0,
            ScheduleMode::ConstantThenDecay => self.delta0 * ((k - n_burnin) as f64).powf(-self.decay_exponent),
        }
    }
}

/// `L_tot = α L/ε + ‖A*A‖/σ²`, the Lipschitz constant of the α-folded drift.
pub fn total_lipschitz(alpha: f64, epsilon: f64, residual_l: f64, opnorm_ata: f64, sigma: f64) -> f64 {
    alpha * residual_l / epsilon + opnorm_ata / (sigma * sigma)
}

/// Largest constant step with guaranteed deterministic descent, `2/L_tot`.
pub fn delta_stable(alpha: f64, epsilon: f64, residual_l: f64, lik: &GaussianLikelihood) -> Result<f64> {
    delta_stable_from(alpha, epsilon, residual_l, lik.op().opnorm_ata(), lik.sigma())
}

pub fn delta_stable_from(alpha: f64, epsilon: f64, residual_l: f64, opnorm_ata: f64, sigma: f64) -> Result<f64> {
    if !(alpha > 0.0 && epsilon > 0.0 && sigma > 0.0 && residual_l >= 0.0 && opnorm_ata >= 0.0) {
        return Err(PnpError::Config(format!(
            "delta_stable needs alpha, epsilon, sigma > 0 and L, ||A*A|| >= 0 (got {alpha}, {epsilon}, {sigma}, {residual_l}, {opnorm_ata})"
        )));
    }
    let l_tot = total_lipschitz(alpha, epsilon, residual_l, opnorm_ata, sigma);
    if !(l_tot > 0.0 && l_tot.is_finite()) {
        return Err(PnpError::Config(format!("total Lipschitz constant is {l_tot}")));
    }
    Ok(2.0 / l_tot)
}

/// Stable step on the reduced space of hidden pixels, `2ε/(αL)`.
pub fn delta_stable_reduced(alpha: f64, epsilon: f64, residual_l: f64) -> Result<f64> {
    if !(alpha > 0.0 && epsilon > 0.0 && residual_l > 0.0) {
        return Err(PnpError::Config(format!(
            "reduced delta_stable needs alpha, epsilon, L > 0 (got {alpha}, {epsilon}, {residual_l})"
        )));
    }
    Ok(2.0 * epsilon / (alpha * residual_l))
}
