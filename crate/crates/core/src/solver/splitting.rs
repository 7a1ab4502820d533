use super::{IterationRecord, Monitor, RunTrace, SolverConfig, StopReason, StopRule};
use crate::denoiser::Denoiser;
use crate::diagnostics::gates::{gate_fbs_ryu, GateInputs};
use crate::error::{PnpError, Result};
use crate::grid::ImageGrid;
use crate::likelihood::{GaussianLikelihood, Likelihood};

struct Stopper {
    rule: StopRule,
    prev_psnr: Option<f64>,
    dim: f64,
}

impl Stopper {
    fn new(cfg: &SolverConfig, initial_psnr: Option<f64>, dim: usize) -> Self {
        Self {
            rule: cfg.stop_rule,
            prev_psnr: initial_psnr,
            dim: dim.max(1) as f64,
        }
    }

    fn check(&mut self, k: usize, residual: f64, psnr: Option<f64>) -> Option<StopReason> {
        let prev = std::mem::replace(&mut self.prev_psnr, psnr);
        match self.rule {
            StopRule::FixedIterations => None,
            StopRule::Residual { tol } => (residual / self.dim.sqrt() < tol).then_some(StopReason::Residual),
            StopRule::PsnrPlateau {
                factor,
                min_iters,
                max_iters,
                ..
            } => {
                let flat = matches!((psnr, prev), (Some(a), Some(b)) if (a - b).abs() < factor);
                ((k + 1 >= min_iters && flat) || k + 1 >= max_iters).then_some(StopReason::PsnrPlateau)
            }
        }
    }
}

fn setup(lik_shape: (usize, usize), d: &dyn Denoiser, cfg: &SolverConfig, x0: &ImageGrid) -> Result<f64> {
    cfg.validate()?;
    x0.ensure_shape(lik_shape)?;
    let eps = d.epsilon();
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(PnpError::Config(format!("denoiser epsilon must be > 0, got {eps}")));
    }
    Ok(eps / cfg.alpha)
}

// Under hard constraints the reported solution is projected onto {Qx = y}.
fn emitted(lik: &Likelihood, x: &ImageGrid) -> Result<ImageGrid> {
    match lik {
        Likelihood::Gaussian(_) => Ok(x.clone()),
        Likelihood::HardConstraint(l) => l.prox_indicator(x, 1.0),
    }
}

fn feasibility(lik: &Likelihood, x: &ImageGrid) -> Option<f64> {
    lik.as_hard_constraint().map(|l| l.feasibility_gap(x))
}

/// PnP-ADMM with `γ = ε/α`:
/// `x ← prox_{γF}(z − u)`, `z ← D_ε(x + u)`, `u ← u + x − z`.
///
/// Returns `z_N` (projected onto the constraint set for hard constraints);
/// the trace keeps both `x_N` and `z_N`.
pub fn pnp_admm(
    lik: &Likelihood,
    d: &dyn Denoiser,
    cfg: &SolverConfig,
    x0: &ImageGrid,
) -> Result<(ImageGrid, RunTrace)> {
    let gamma = setup(lik.shape(), d, cfg, x0)?;
    let monitor = Monitor::new(cfg, x0)?;
    let (h, w) = x0.shape();
    let mut z = x0.clone();
    let mut x = x0.clone();
    let mut u = ImageGrid::zeros(h, w);
    let mut out = emitted(lik, &z)?;
    let mut stopper = Stopper::new(cfg, monitor.psnr(&out)?, x0.len());
    let mut records = Vec::with_capacity(cfg.max_iters.min(1 << 16));
    let mut reason = StopReason::MaxIterations;

    for k in 0..cfg.max_iters {
        let x_next = lik.prox(&(&z - &u), gamma)?;
        monitor.check(k, &x_next, &z, String::new)?;
        let v = &x_next + &u;
        let z_next = d.denoise(&v)?;
        monitor.check(k, &z_next, &z, String::new)?;
        u = &v - &z_next;
        let residual = x_next.distance(&z_next);
        x = x_next;
        z = z_next;
        out = emitted(lik, &z)?;
        let psnr = monitor.psnr(&out)?;
        records.push(IterationRecord {
            level: 0,
            k,
            step: None,
            drift_norm: None,
            residual,
            psnr,
            ssim: monitor.ssim(&out)?,
            feasibility_gap: feasibility(lik, &x),
        });
        if let Some(r) = stopper.check(k, residual, psnr) {
            reason = r;
            break;
        }
    }

    let trace = RunTrace {
        solver: "admm".into(),
        records,
        level_starts: vec![0],
        final_iterate: out.clone(),
        admm_x: Some(x),
        admm_z: Some(z),
        stop_reason: reason,
    };
    Ok((out, trace))
}

/// PnP-FBS: `x ← D_ε(x − (ε/α)∇F(x))`.
pub fn pnp_fbs(
    lik: &GaussianLikelihood,
    d: &dyn Denoiser,
    cfg: &SolverConfig,
    x0: &ImageGrid,
) -> Result<(ImageGrid, RunTrace)> {
    let gamma = setup(lik.shape(), d, cfg, x0)?;
    let monitor = Monitor::new(cfg, x0)?;
    let gate_note = || {
        let inputs = GateInputs::from_likelihood(cfg.alpha, d.epsilon(), d.residual_lipschitz(), lik);
        format!("convergence gate {}", gate_fbs_ryu(&inputs).summary())
    };
    let mut x = x0.clone();
    let mut stopper = Stopper::new(cfg, monitor.psnr(&x)?, x0.len());
    let mut records = Vec::with_capacity(cfg.max_iters.min(1 << 16));
    let mut reason = StopReason::MaxIterations;

    for k in 0..cfg.max_iters {
        let mut forward = x.clone();
        forward.axpy(-gamma, &lik.grad(&x)?);
        monitor.check(k, &forward, &x, gate_note)?;
        let next = d.denoise(&forward)?;
        monitor.check(k, &next, &x, gate_note)?;
        let residual = next.distance(&x);
        x = next;
        let psnr = monitor.psnr(&x)?;
        records.push(IterationRecord {
            level: 0,
            k,
            step: Some(gamma),
            drift_norm: None,
            residual,
            psnr,
            ssim: monitor.ssim(&x)?,
            feasibility_gap: None,
        });
        if let Some(r) = stopper.check(k, residual, psnr) {
            reason = r;
            break;
        }
    }

    let trace = RunTrace {
        solver: "fbs".into(),
        records,
        level_starts: vec![0],
        final_iterate: x.clone(),
        admm_x: None,
        admm_z: None,
        stop_reason: reason,
    };
    Ok((x, trace))
}

/// PnP-BBS: `x ← D_ε(prox_{(ε/α)F}(x))`.
pub fn pnp_bbs(
    lik: &Likelihood,
    d: &dyn Denoiser,
    cfg: &SolverConfig,
    x0: &ImageGrid,
) -> Result<(ImageGrid, RunTrace)> {
    let gamma = setup(lik.shape(), d, cfg, x0)?;
    let monitor = Monitor::new(cfg, x0)?;
    let mut x = x0.clone();
    let mut out = emitted(lik, &x)?;
    let mut stopper = Stopper::new(cfg, monitor.psnr(&out)?, x0.len());
    let mut records = Vec::with_capacity(cfg.max_iters.min(1 << 16));
    let mut reason = StopReason::MaxIterations;

    for k in 0..cfg.max_iters {
        let p = lik.prox(&x, gamma)?;
        monitor.check(k, &p, &x, String::new)?;
        let next = d.denoise(&p)?;
        monitor.check(k, &next, &x, String::new)?;
        let residual = next.distance(&x);
        x = next;
        out = emitted(lik, &x)?;
        let psnr = monitor.psnr(&out)?;
        records.push(IterationRecord {
            level: 0,
            k,
            step: Some(gamma),
            drift_norm: None,
            residual,
            psnr,
            ssim: monitor.ssim(&out)?,
            feasibility_gap: feasibility(lik, &p),
        });
        if let Some(r) = stopper.check(k, residual, psnr) {
            reason = r;
            break;
        }
    }

    let trace = RunTrace {
        solver: "bbs".into(),
        records,
        level_starts: vec![0],
        final_iterate: out.clone(),
        admm_x: None,
        admm_z: None,
        stop_reason: reason,
    };
    Ok((out, trace))
}
