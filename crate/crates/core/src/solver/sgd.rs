use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{IterationRecord, Monitor, RunTrace, SolverConfig, StepSchedule, StopReason, StopRule};
use crate::denoiser::Denoiser;
use crate::error::{PnpError, Result};
use crate::grid::ImageGrid;
use crate::likelihood::{GaussianLikelihood, HardConstraintLikelihood};

/// Shared loop of the stochastic schemes.
///
/// `state` is the optimisation variable, `to_image` maps it to the image the
/// run reports on, and `drift` evaluates the deterministic part of the update.
#[allow(clippy::too_many_arguments)]
fn drive(
    name: &str,
    cfg: &SolverConfig,
    sched: &StepSchedule,
    x0: &ImageGrid,
    state0: ImageGrid,
    mut drift: impl FnMut(&ImageGrid) -> Result<ImageGrid>,
    to_image: impl Fn(&ImageGrid) -> ImageGrid,
    gap: impl Fn(&ImageGrid) -> Option<f64>,
) -> Result<(ImageGrid, RunTrace)> {
    cfg.validate()?;
    sched.validate(cfg.noise_enabled)?;
    let monitor = Monitor::new(cfg, x0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut state = state0;
    let mut image = to_image(&state);
    let mut prev_psnr = monitor.psnr(&image)?;
    let mut burnin_end = match cfg.stop_rule {
        StopRule::PsnrPlateau { .. } => None,
        _ => Some(sched.n_burnin),
    };
    let mut decay_left = 0usize;
    let mut records = Vec::with_capacity(cfg.max_iters.min(1 << 16));
    let mut reason = StopReason::MaxIterations;
    let dim = (state.len().max(1)) as f64;

    for k in 0..cfg.max_iters {
        let step = burnin_end.map_or(sched.delta0, |nb| sched.step_with_burnin(k, nb));
        let b = drift(&state)?;
        let drift_norm = b.norm();
        let mut next = state.clone();
        next.axpy(step, &b);
        if cfg.noise_enabled {
            for v in next.data_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v += step * z;
            }
        }
        let next_image = to_image(&next);
        monitor.check(k, &next_image, &image, String::new)?;
        let residual = next_image.distance(&image);
        state = next;
        image = next_image;

        let psnr = monitor.psnr(&image)?;
        records.push(IterationRecord {
            level: 0,
            k,
            step: Some(step),
            drift_norm: Some(drift_norm),
            residual,
            psnr,
            ssim: monitor.ssim(&image)?,
            feasibility_gap: gap(&image),
        });

        match cfg.stop_rule {
            StopRule::FixedIterations => {}
            StopRule::Residual { tol } => {
                if drift_norm / dim.sqrt() < tol {
                    reason = StopReason::Residual;
                    break;
                }
            }
            StopRule::PsnrPlateau {
                factor,
                min_iters,
                max_iters,
                decay_iters,
            } => match burnin_end {
                None => {
                    let flat = matches!((psnr, prev_psnr), (Some(a), Some(b)) if (a - b).abs() < factor * sched.delta0);
                    if (k + 1 >= min_iters && flat) || k + 1 >= max_iters {
                        burnin_end = Some(k);
                        if decay_iters == 0 {
                            reason = StopReason::PsnrPlateau;
                            break;
                        }
                        decay_left = decay_iters;
                    }
                }
                Some(_) => {
                    decay_left -= 1;
                    if decay_left == 0 {
                        reason = StopReason::PsnrPlateau;
                        break;
                    }
                }
            },
        }
        prev_psnr = psnr;
    }

    let trace = RunTrace {
        solver: name.to_string(),
        records,
        level_starts: vec![0],
        final_iterate: image.clone(),
        admm_x: None,
        admm_z: None,
        stop_reason: reason,
    };
    Ok((image, trace))
}

fn check_epsilon(d: &dyn Denoiser) -> Result<f64> {
    let eps = d.epsilon();
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(PnpError::Config(format!("denoiser epsilon must be > 0, got {eps}")));
    }
    Ok(eps)
}

/// `X_{k+1} = X_k + δ_k(−∇F(X_k) + (α/ε)(D_ε(X_k) − X_k) + Z_{k+1})`.
///
/// `Z` is standard Gaussian when `cfg.noise_enabled`, zero otherwise.
pub fn pnp_sgd(
    lik: &GaussianLikelihood,
    d: &dyn Denoiser,
    cfg: &SolverConfig,
    sched: &StepSchedule,
    x0: &ImageGrid,
) -> Result<(ImageGrid, RunTrace)> {
    x0.ensure_shape(lik.shape())?;
    let eps = check_epsilon(d)?;
    let weight = cfg.alpha / eps;
    drive(
        "sgd",
        cfg,
        sched,
        x0,
        x0.clone(),
        |x| {
            let g = lik.grad(x)?;
            let mut b = d.denoise(x)?.zip_map(x, |dv, xv| weight * (dv - xv));
            b.axpy(-1.0, &g);
            Ok(b)
        },
        |x| x.clone(),
        |_| None,
    )
}

/// Stochastic iteration on the hidden pixels only, with observed pixels pinned to `y`.
///
/// The state is `x̃ = P x` and the reported image is `f_y(x̃) = P*x̃ + Q*y`,
/// so every output satisfies `Qx = y` exactly. The drift is
/// `−(α/ε) P (f_y(x̃) − D_ε(f_y(x̃)))`.
pub fn reduced_space_sgd(
    lik: &HardConstraintLikelihood,
    d: &dyn Denoiser,
    cfg: &SolverConfig,
    sched: &StepSchedule,
    x0: &ImageGrid,
) -> Result<(ImageGrid, RunTrace)> {
    x0.ensure_shape(lik.shape())?;
    let eps = check_epsilon(d)?;
    let weight = cfg.alpha / eps;
    let split = lik.split();
    let start = lik.prox_indicator(x0, 1.0)?;
    let state0 = ImageGrid::row(split.select_hidden(&start));
    drive(
        "reduced-sgd",
        cfg,
        sched,
        &start,
        state0,
        |s| {
            let x = lik.lift(s.data());
            let dx = d.denoise(&x)?;
            let (xd, dd) = (x.data(), dx.data());
            Ok(ImageGrid::row(
                split.hidden().iter().map(|&i| -weight * (xd[i] - dd[i])).collect(),
            ))
        },
        |s| lik.lift(s.data()),
        |x| Some(lik.feasibility_gap(x)),
    )
}
