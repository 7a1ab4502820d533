//! Sufficient convergence conditions for the splitting schemes.
//!
//! Each gate is available in a generic form over any ordered field, so the
//! boundary cases can be checked in exact rational arithmetic, and as a
//! report built from `f64` inputs. The reports convert their inputs to exact
//! rationals before deciding the verdict, so a verdict never depends on
//! rounding; only the echoed margin is a float.

use num_rational::BigRational;
use num_traits::{Num, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::likelihood::GaussianLikelihood;

/// Scalars the gate formulas can be evaluated in.
pub trait GateScalar: Num + Clone + PartialOrd {}

impl<T: Num + Clone + PartialOrd> GateScalar for T {}

/// Slacks of `L/(1+L) < r` and `r < (L+2)/(L+1)`; both positive means satisfied.
pub fn fbs_ryu_slacks<T: GateScalar>(l: &T, r: &T) -> (T, T) {
    let one = T::one();
    let two = one.clone() + one.clone();
    let lower = r.clone() - l.clone() / (one.clone() + l.clone());
    let upper = (l.clone() + two) / (l.clone() + one) - r.clone();
    (lower, upper)
}

/// Slack of `L/(1 + L(1 − 2L)) < r`.
pub fn admm_ryu_slack<T: GateScalar>(l: &T, r: &T) -> T {
    let one = T::one();
    let two = one.clone() + one.clone();
    let denom = one.clone() + l.clone() * (one - two * l.clone());
    r.clone() - l.clone() / denom
}

/// Largest α satisfying the ADMM condition, `εμ(1 + L(1 − 2L))/L`, for `L > 0`.
pub fn admm_ryu_alpha_bound<T: GateScalar>(l: &T, epsilon: &T, mu: &T) -> T {
    let one = T::one();
    let two = one.clone() + one.clone();
    epsilon.clone() * mu.clone() * (one.clone() + l.clone() * (one - two * l.clone())) / l.clone()
}

/// `1 − ε‖A*A‖/(ασ²)`; non-negative means satisfied.
pub fn xu_mmse_margin<T: GateScalar>(alpha: &T, epsilon: &T, sigma_sq: &T, opnorm_ata: &T) -> T {
    T::one() - epsilon.clone() * opnorm_ata.clone() / (alpha.clone() * sigma_sq.clone())
}

/// The ratio `r = εμ/α` with `μ = s_min(A)²/σ²` the strong-convexity modulus of `F`.
pub fn ryu_ratio<T: GateScalar>(alpha: &T, epsilon: &T, mu: &T) -> T {
    epsilon.clone() * mu.clone() / alpha.clone()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Satisfied,
    Violated,
    Inapplicable,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Satisfied => "satisfied",
            Verdict::Violated => "violated",
            Verdict::Inapplicable => "inapplicable",
        })
    }
}

/// Everything the gates read, for a Gaussian likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateInputs {
    pub alpha: f64,
    pub epsilon: f64,
    pub sigma: f64,
    /// Lipschitz constant of `Id − D_ε`, if certified.
    pub residual_l: Option<f64>,
    pub opnorm_ata: f64,
    pub min_singular_value: f64,
}

impl GateInputs {
    pub fn from_likelihood(alpha: f64, epsilon: f64, residual_l: Option<f64>, lik: &GaussianLikelihood) -> Self {
        Self {
            alpha,
            epsilon,
            sigma: lik.sigma(),
            residual_l,
            opnorm_ata: lik.op().opnorm_ata(),
            min_singular_value: lik.op().min_singular_value(),
        }
    }

    /// `μ = s_min² / σ²`.
    pub fn strong_convexity(&self) -> f64 {
        self.min_singular_value * self.min_singular_value / (self.sigma * self.sigma)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateReport {
    pub gate: String,
    pub alpha: f64,
    pub epsilon: f64,
    pub sigma: f64,
    pub residual_l: Option<f64>,
    pub opnorm_ata: f64,
    pub strong_convexity: f64,
    /// Which Lipschitz constant the condition consumes.
    pub lipschitz_used: String,
    /// `r = εμ/α` where relevant.
    pub ratio: Option<f64>,
    pub verdict: Verdict,
    /// Distance to the boundary, positive when satisfied.
    pub margin: Option<f64>,
    /// Largest admissible α, for gates that bound α from above.
    pub alpha_bound: Option<f64>,
    pub note: String,
}

impl GateReport {
    fn base(gate: &str, inputs: &GateInputs, lipschitz_used: &str) -> Self {
        Self {
            gate: gate.to_string(),
            alpha: inputs.alpha,
            epsilon: inputs.epsilon,
            sigma: inputs.sigma,
            residual_l: inputs.residual_l,
            opnorm_ata: inputs.opnorm_ata,
            strong_convexity: inputs.strong_convexity(),
            lipschitz_used: lipschitz_used.to_string(),
            ratio: None,
            verdict: Verdict::Inapplicable,
            margin: None,
            alpha_bound: None,
            note: String::new(),
        }
    }

    fn inapplicable(mut self, note: impl Into<String>) -> Self {
        self.verdict = Verdict::Inapplicable;
        self.note = note.into();
        self
    }

    /// Report for a gate that does not apply to the problem at all.
    pub fn not_applicable(gate: &str, note: impl Into<String>) -> Self {
        Self {
            gate: gate.to_string(),
            alpha: f64::NAN,
            epsilon: f64::NAN,
            sigma: f64::NAN,
            residual_l: None,
            opnorm_ata: f64::NAN,
            strong_convexity: f64::NAN,
            lipschitz_used: "none".into(),
            ratio: None,
            verdict: Verdict::Inapplicable,
            margin: None,
            alpha_bound: None,
            note: note.into(),
        }
    }

    pub fn summary(&self) -> String {
        match self.margin {
            Some(m) => format!("{}: {} (margin {:.6e})", self.gate, self.verdict, m),
            None => format!("{}: {} ({})", self.gate, self.verdict, self.note),
        }
    }
}

fn exact(v: f64) -> BigRational {
    BigRational::from_float(v).expect("finite value")
}

fn positive(v: f64) -> bool {
    v > 0.0 && v.is_finite()
}

fn to_f64(v: &BigRational) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

fn base_inputs_valid(i: &GateInputs) -> bool {
    positive(i.alpha) && positive(i.epsilon) && positive(i.sigma) && i.opnorm_ata.is_finite() && i.opnorm_ata >= 0.0
}

pub const RESIDUAL_LIPSCHITZ: &str = "residual Id - D_eps";

pub fn gate_fbs_ryu(inputs: &GateInputs) -> GateReport {
    let report = GateReport::base("fbs_ryu", inputs, RESIDUAL_LIPSCHITZ);
    if !base_inputs_valid(inputs) {
        return report.inapplicable("alpha, epsilon and sigma must be positive and finite");
    }
    let Some(l) = inputs.residual_l.filter(|l| *l >= 0.0 && l.is_finite()) else {
        return report.inapplicable("no certified residual Lipschitz constant");
    };
    let mu = inputs.strong_convexity();
    if !positive(mu) {
        return report.inapplicable("data term is not strongly convex (A not invertible)");
    }
    let r = ryu_ratio(&exact(inputs.alpha), &exact(inputs.epsilon), &(exact(inputs.min_singular_value).pow(2) / exact(inputs.sigma).pow(2)));
    let (lower, upper) = fbs_ryu_slacks(&exact(l), &r);
    let zero = BigRational::from_integer(0.into());
    let ok = lower > zero && upper > zero;
    let margin = if lower < upper { &lower } else { &upper };
    GateReport {
        ratio: Some(to_f64(&r)),
        verdict: if ok { Verdict::Satisfied } else { Verdict::Violated },
        margin: Some(to_f64(margin)),
        note: "L/(1+L) < r < (L+2)/(L+1)".into(),
        ..report
    }
}

pub fn gate_admm_ryu(inputs: &GateInputs) -> GateReport {
    let report = GateReport::base("admm_ryu", inputs, RESIDUAL_LIPSCHITZ);
    if !base_inputs_valid(inputs) {
        return report.inapplicable("alpha, epsilon and sigma must be positive and finite");
    }
    let Some(l) = inputs.residual_l.filter(|l| l.is_finite()) else {
        return report.inapplicable("no certified residual Lipschitz constant");
    };
    if !(0.0..1.0).contains(&l) {
        return report.inapplicable(format!("requires L in [0, 1), got {l}"));
    }
    let mu = inputs.strong_convexity();
    if !positive(mu) {
        return report.inapplicable("data term is not strongly convex (A not invertible)");
    }
    let mu_exact = exact(inputs.min_singular_value).pow(2) / exact(inputs.sigma).pow(2);
    let r = ryu_ratio(&exact(inputs.alpha), &exact(inputs.epsilon), &mu_exact);
    let le = exact(l);
    let slack = admm_ryu_slack(&le, &r);
    let zero = BigRational::from_integer(0.into());
    let bound = (l > 0.0).then(|| to_f64(&admm_ryu_alpha_bound(&le, &exact(inputs.epsilon), &mu_exact)));
    GateReport {
        ratio: Some(to_f64(&r)),
        verdict: if slack > zero { Verdict::Satisfied } else { Verdict::Violated },
        margin: Some(to_f64(&slack)),
        alpha_bound: bound,
        note: "L/(1 + L(1-2L)) < r".into(),
        ..report
    }
}

pub fn gate_xu_mmse(inputs: &GateInputs) -> GateReport {
    let report = GateReport::base("xu_mmse", inputs, "none (assumes D_eps is the exact MMSE denoiser)");
    if !base_inputs_valid(inputs) {
        return report.inapplicable("alpha, epsilon and sigma must be positive and finite");
    }
    let margin = xu_mmse_margin(
        &exact(inputs.alpha),
        &exact(inputs.epsilon),
        &exact(inputs.sigma).pow(2),
        &exact(inputs.opnorm_ata),
    );
    let zero = BigRational::from_integer(0.into());
    GateReport {
        verdict: if margin >= zero { Verdict::Satisfied } else { Verdict::Violated },
        margin: Some(to_f64(&margin)),
        note: "eps ||A*A|| / (alpha sigma^2) <= 1; theory also assumes D_eps = D_eps*".into(),
        ..report
    }
}

/// All three gates for one configuration.
pub fn evaluate_gates(inputs: &GateInputs) -> Vec<GateReport> {
    vec![gate_fbs_ryu(inputs), gate_admm_ryu(inputs), gate_xu_mmse(inputs)]
}

/// The gates for the hard-constraint likelihood, which none of them covers.
pub fn hard_constraint_gates() -> Vec<GateReport> {
    let note = "indicator data term: no finite gradient Lipschitz constant or strong convexity";
    vec![
        GateReport::not_applicable("fbs_ryu", note),
        GateReport::not_applicable("admm_ryu", note),
        GateReport::not_applicable("xu_mmse", note),
    ]
}
