//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use pnp_core::denoiser::{
    Denoiser, DenoiserKind, DenoiserSpec, GaussianMmse, GmmComponent, GmmVectorComponent, NlmParams, PixelwiseGmm,
    PriorMean,
};
use pnp_core::diagnostics::{
    check_tweedie, gate_fbs_ryu, gate_xu_mmse, GateInputs, Verdict,
};
use pnp_core::diagnostics::gates::{fbs_ryu_slacks, ryu_ratio, xu_mmse_margin};
use pnp_core::harness::{
    load_images, run_experiment, synthetic, CoarseToFineSettings, ExperimentConfig, ImageSet, Initializer, Problem,
    ScheduleSettings, SolverOverrides,
};
use pnp_core::solver::{
    default_coarse_to_fine_epsilons, delta_stable, pnp_admm, pnp_bbs, pnp_fbs, pnp_sgd, reduced_space_sgd,
    CoarseToFineParams, SolverConfig, SolverKind, StepSchedule, StopRule,
};
use pnp_core::{GaussianLikelihood, HardConstraintLikelihood, ImageGrid, Kernel, Likelihood, LinearOperator, MaskSplit};
use pnp_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn eps_5() -> f64 {
    (5.0f64 / 255.0).powi(2)
}

fn sigma_30() -> f64 {
    30.0 / 255.0
}

fn normal_log_pdf(x: f64, mean: f64, var: f64) -> f64 {
    -(x - mean).powi(2) / (2.0 * var) - 0.5 * (2.0 * std::f64::consts::PI * var).ln()
}

/// `log Σ_j w_j N(x; μ_j, τ_j² + ε)`, evaluated with log-sum-exp.
fn mixture_log_density(c: &[(f64, f64, f64)], eps: f64, x: f64) -> f64 {
    let terms: Vec<f64> = c.iter().map(|&(w, m, v)| w.ln() + normal_log_pdf(x, m, v + eps)).collect();
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Closed-form derivative of [`mixture_log_density`].
fn mixture_score(c: &[(f64, f64, f64)], eps: f64, x: f64) -> f64 {
    let logs: Vec<f64> = c.iter().map(|&(w, m, v)| w.ln() + normal_log_pdf(x, m, v + eps)).collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut num = 0.0;
    let mut den = 0.0;
    for (&(_, m, v), l) in c.iter().zip(&logs) {
        let p = (l - max).exp();
        num += p * (-(x - m) / (v + eps));
        den += p;
    }
    num / den
}

fn five_point(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h)
}

fn components(c: &[(f64, f64, f64)]) -> Vec<GmmComponent> {
    c.iter()
        .map(|&(weight, mean, variance)| GmmComponent { weight, mean, variance })
        .collect()
}

fn random_mixture(rng: &mut ChaCha8Rng, k: usize, variances: &[f64]) -> Vec<(f64, f64, f64)> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut out: Vec<(f64, f64, f64)> = raw
        .iter()
        .map(|w| (w / total, rng.random_range(0.0..1.0), variances[rng.random_range(0..variances.len())]))
        .collect();
    let s: f64 = out.iter().map(|c| c.0).sum();
    out[0].0 += 1.0 - s;
    out
}

fn criterion_1() -> Result<Outcome> {
    let taus = [0.01, 0.25, 1.0];
    let epss = [eps_5(), 0.04, 0.25];
    let mut rng = ChaCha8Rng::seed_from_u64(101);

    let mut worst_gauss = 0.0f64;
    let mut points = 0;
    for (i, &tau2) in taus.iter().enumerate() {
        for (j, &eps) in epss.iter().enumerate() {
            let mean = rng.random_range(0.0..1.0);
            let d = GaussianMmse::new(PriorMean::Constant(mean), tau2, eps)?;
            let n = if i == 0 && j == 0 { 1000 - 8 * 111 } else { 111 };
            let pts: Vec<ImageGrid> = (0..n)
                .map(|_| ImageGrid::from_fn(1, 1, |_, _| mean + 3.0 * (tau2 + eps).sqrt() * rng.sample::<f64, _>(StandardNormal)))
                .collect();
            points += pts.len();
            let s = tau2 + eps;
            worst_gauss = worst_gauss.max(check_tweedie(&d, |x| Ok(x.map(|v| -(v - mean) / s)), &pts)?);
        }
    }

    let mut worst_gmm = 0.0f64;
    for &eps in &epss {
        for k in [2, 3] {
            let mix = random_mixture(&mut rng, k, &taus);
            let d = PixelwiseGmm::new(components(&mix), eps)?;
            let spread = (taus[2] + eps).sqrt();
            let pts: Vec<ImageGrid> = (0..20)
                .map(|_| ImageGrid::from_fn(1, 8, |_, _| rng.random_range(-0.5..1.5) * spread.max(1.0)))
                .collect();
            let h = 1e-3 * (taus[0] + eps).sqrt();
            worst_gmm = worst_gmm.max(check_tweedie(
                &d,
                |x| Ok(x.map(|v| five_point(|t| mixture_log_density(&mix, eps, t), v, h))),
                &pts,
            )?);
        }
    }
    Ok(Outcome::new(
        worst_gauss <= 1e-10 && worst_gmm <= 1e-6 && points == 1000,
        format!("gaussian max dev {worst_gauss:.2e} over {points} points (<= 1e-10), gmm max dev {worst_gmm:.2e} (<= 1e-6)"),
    ))
}

fn criterion_2() -> Result<Outcome> {
    let (mu, tau2, eps, sigma, alpha) = (0.5, 0.05, eps_5(), sigma_30(), 1.0);
    let truth = synthetic::shapes(64);
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let n = Normal::new(0.0, sigma).unwrap();
    let y = truth.zip_map(&ImageGrid::from_fn(64, 64, |_, _| n.sample(&mut rng)), |a, b| a + b);
    let lik = GaussianLikelihood::new(LinearOperator::identity(64, 64), y.clone(), sigma)?;
    let d = GaussianMmse::new(PriorMean::Constant(mu), tau2, eps)?;
    let s = tau2 + eps;
    let expected = y.map(|v| (v / (sigma * sigma) + alpha * mu / s) / (1.0 / (sigma * sigma) + alpha / s));
    let stable = delta_stable(alpha, eps, eps / s, &lik)?;
    let cfg = SolverConfig::new(alpha, 2000);
    let (x, trace) = pnp_sgd(&lik, &d, &cfg, &StepSchedule::constant(stable / 6.0), &y)?;
    let err = x.max_abs_diff(&expected);
    Ok(Outcome::new(
        err <= 1e-6 && trace.iterations() <= 2000,
        format!("||X_N - x*||_inf = {err:.2e} after {} iterations (<= 1e-6)", trace.iterations()),
    ))
}

fn criterion_3() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = 0.0f64;
    let mut iterations = 0;
    for _ in 0..10 {
        let k = rng.random_range(2..=3);
        let mix = random_mixture(&mut rng, k, &[0.002, 0.01, 0.03]);
        let eps = [eps_5(), 0.004, 0.01][rng.random_range(0..3)];
        let sigma = rng.random_range(0.05..0.3);
        let y0 = rng.random_range(0.0..1.0);
        let lik = GaussianLikelihood::new(LinearOperator::identity(1, 1), ImageGrid::filled(1, 1, y0), sigma)?;
        let d = PixelwiseGmm::new(components(&mix), eps)?;
        let alpha = 1.0;
        let l = d.residual_lipschitz().expect("certified");
        let sched = StepSchedule::constant(delta_stable(alpha, eps, l, &lik)? / 6.0);
        let cfg = SolverConfig::new(alpha, 5_000_000).with_stop_rule(StopRule::Residual { tol: 1e-9 });
        let x0 = ImageGrid::filled(1, 1, rng.random_range(-0.5..1.5));
        let (x, trace) = pnp_sgd(&lik, &d, &cfg, &sched, &x0)?;
        iterations = iterations.max(trace.iterations());
        let xn = x.data()[0];

        let g = |t: f64| -(t - y0) / (sigma * sigma) + alpha * mixture_score(&mix, eps, t);
        let step = 1e-5;
        let mut roots = Vec::new();
        let mut prev = g(-3.0);
        let mut t = -3.0;
        while t < 3.0 {
            let next = g(t + step);
            if prev == 0.0 || prev.signum() != next.signum() {
                let (mut a, mut b) = (t, t + step);
                for _ in 0..60 {
                    let m = 0.5 * (a + b);
                    if g(a).signum() == g(m).signum() {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                roots.push(0.5 * (a + b));
            }
            prev = next;
            t += step;
        }
        let dist = roots.iter().map(|r| (r - xn).abs()).fold(f64::INFINITY, f64::min);
        worst = worst.max(dist);
    }
    Ok(Outcome::new(
        worst <= 1e-4,
        format!("max distance to nearest stationary point {worst:.2e} (<= 1e-4), max {iterations} iterations"),
    ))
}

/// `D(x) = x/(1 + ελ)`, the proximal map of `(ε/α)·(αλ/2)‖·‖²`.
struct ShrinkDenoiser {
    epsilon: f64,
    lambda: f64,
}

impl Denoiser for ShrinkDenoiser {
    fn epsilon(&self) -> f64 {
        self.epsilon
    }

    fn denoise(&self, x: &ImageGrid) -> Result<ImageGrid> {
        Ok(x.map(|v| v / (1.0 + self.epsilon * self.lambda)))
    }

    fn residual_lipschitz(&self) -> Option<f64> {
        Some(self.epsilon * self.lambda / (1.0 + self.epsilon * self.lambda))
    }

    fn name(&self) -> String {
        "shrink".into()
    }
}

fn criterion_4() -> Result<Outcome> {
    let (sigma, eps, alpha, lambda) = (0.1, 0.01, 1.0, 5.0);
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let y = ImageGrid::from_fn(16, 16, |_, _| rng.random_range(0.0..1.0));
    let lik = GaussianLikelihood::new(LinearOperator::identity(16, 16), y.clone(), sigma)?;
    let d = ShrinkDenoiser { epsilon: eps, lambda };
    let expected = y.map(|v| v / (1.0 + alpha * lambda * sigma * sigma));
    let cfg = SolverConfig::new(alpha, 100_000).with_stop_rule(StopRule::Residual { tol: 1e-13 });
    let x0 = ImageGrid::zeros(16, 16);
    let (fbs, _) = pnp_fbs(&lik, &d, &cfg, &x0)?;
    let (admm, _) = pnp_admm(&lik.clone().into(), &d, &cfg, &x0)?;
    let a = fbs.max_abs_diff(&admm);
    let b = fbs.max_abs_diff(&expected);
    let c = admm.max_abs_diff(&expected);
    Ok(Outcome::new(
        a <= 1e-6 && b <= 1e-6 && c <= 1e-6,
        format!("|fbs - admm| = {a:.2e}, |fbs - x*| = {b:.2e}, |admm - x*| = {c:.2e} (<= 1e-6)"),
    ))
}

fn rational(n: i64, d: i64) -> BigRational {
    format!("{n}/{d}").parse().expect("rational literal")
}

fn criterion_5() -> Result<Outcome> {
    let eps = rational(25, 65025);
    let sigma_sq = rational(900, 65025);
    let mu = BigRational::one() / sigma_sq.clone();
    let one = BigRational::one();
    let alpha = rational(1, 4);

    let r = ryu_ratio(&alpha, &eps, &mu);
    let (lower, upper) = fbs_ryu_slacks(&one, &r);
    let fbs_violated = r == rational(1, 9) && (lower.is_negative() || !upper.is_positive());

    let boundary = eps.clone() / sigma_sq.clone();
    let margin_at = |a: &BigRational| xu_mmse_margin(a, &eps, &sigma_sq, &one);
    let below = boundary.clone() - rational(1, 1_000_000_000_000);
    let flips = margin_at(&boundary).is_zero() && margin_at(&below).is_negative() && !margin_at(&below).is_zero();
    let at_third = margin_at(&rational(1, 3));

    let inputs = GateInputs {
        alpha: 0.25,
        epsilon: eps_5(),
        sigma: sigma_30(),
        residual_l: Some(1.0),
        opnorm_ata: 1.0,
        min_singular_value: 1.0,
    };
    let report = gate_fbs_ryu(&inputs);
    let at_boundary = gate_xu_mmse(&GateInputs {
        alpha: 1.0 / 36.0,
        ..inputs
    });
    let report_ok = report.verdict == Verdict::Violated && at_boundary.verdict != Verdict::Inapplicable;

    Ok(Outcome::new(
        fbs_violated && flips && boundary == rational(1, 36) && !at_third.is_negative() && report_ok,
        format!(
            "r = {r} (fbs_ryu violated: {fbs_violated}); xu_mmse flips exactly at alpha = eps/sigma^2 = {boundary}; \
             margin at alpha = 1/3 is {at_third} (satisfied)"
        ),
    ))
}

fn criterion_6() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut violations = 0;
    let mut worst_increase = 0.0f64;
    for inst in 0..50 {
        let (h, w) = (rng.random_range(6..=10), rng.random_range(6..=10));
        let op = if inst % 2 == 0 {
            LinearOperator::identity(h, w)
        } else {
            let k = rng.random_range(1..=2) * 2 + 1;
            let weights: Vec<f64> = (0..k * k).map(|_| rng.random_range(0.0..1.0)).collect();
            let total: f64 = weights.iter().sum();
            let kernel = Kernel::new(k, k, weights.iter().map(|v| v / total).collect())?;
            LinearOperator::convolution(kernel, h, w)?
        };
        let sigma = rng.random_range(0.02..0.3);
        let tau2 = rng.random_range(0.005..0.2);
        let eps = rng.random_range(1e-4..0.05);
        let alpha = rng.random_range(0.1..3.0);
        let mu = rng.random_range(0.0..1.0);
        let y = ImageGrid::from_fn(h, w, |_, _| rng.random_range(0.0..1.0));
        let lik = GaussianLikelihood::new(op, y.clone(), sigma)?;
        let d = GaussianMmse::new(PriorMean::Constant(mu), tau2, eps)?;
        let s = tau2 + eps;
        let objective = |x: &ImageGrid| -> Result<f64> {
            let ax = lik.op().apply(x)?;
            let data = ax.zip_map(&y, |a, b| (a - b) * (a - b)).data().iter().sum::<f64>() / (2.0 * sigma * sigma);
            let prior = x.data().iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (2.0 * s);
            Ok(data + alpha * prior)
        };
        let stable = delta_stable(alpha, eps, eps / s, &lik)?;
        let x0 = ImageGrid::from_fn(h, w, |_, _| rng.random_range(-1.0..2.0));
        let mut x = x0;
        let mut j = objective(&x)?;
        for _ in 0..200 {
            let (next, _) = pnp_sgd(&lik, &d, &SolverConfig::new(alpha, 1), &StepSchedule::constant(stable), &x)?;
            let jn = objective(&next)?;
            if jn > j + 1e-12 * j.abs().max(1.0) {
                violations += 1;
            }
            worst_increase = worst_increase.max(jn - j);
            x = next;
            j = jn;
        }
    }
    Ok(Outcome::new(
        violations == 0,
        format!("{violations} violations over 50 instances x 200 steps; largest increase {worst_increase:.2e}"),
    ))
}

fn criterion_7() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut failures = 0;
    for _ in 0..100 {
        let (h, w) = (rng.random_range(5..=12), rng.random_range(5..=12));
        let q = rng.random_range(0.3..0.9);
        let m = ((1.0 - q) * (h * w) as f64).round() as usize;
        let split = MaskSplit::random(h, w, m, &mut rng)?;
        let y: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..1.0)).collect();
        let hc = HardConstraintLikelihood::new(split.clone(), y.clone())?;
        let lik: Likelihood = hc.clone().into();
        let eps = rng.random_range(1e-3..0.05);
        let mix = random_mixture(&mut rng, 3, &[0.001, 0.01]);
        let d = PixelwiseGmm::new(components(&mix), eps)?;
        let x0 = ImageGrid::from_fn(h, w, |_, _| rng.random_range(0.0..1.0));
        let alpha = rng.random_range(0.2..2.0);
        let cfg = SolverConfig::new(alpha, 30);
        let mut ok = true;
        for (out, trace) in [pnp_admm(&lik, &d, &cfg, &x0)?, pnp_bbs(&lik, &d, &cfg, &x0)?] {
            ok &= split.select_observed(&out) == y;
            ok &= trace.records().iter().all(|r| r.feasibility_gap == Some(0.0));
        }
        let sched = StepSchedule::decaying(
            0.5 * pnp_core::solver::delta_stable_reduced(alpha, eps, d.residual_lipschitz().unwrap())?,
            10,
            0.8,
        );
        let cfg = cfg.with_noise(true).with_seed(rng.random());
        let (out, trace) = reduced_space_sgd(&hc, &d, &cfg, &sched, &x0)?;
        ok &= split.select_observed(&out) == y;
        ok &= trace.records().iter().all(|r| r.feasibility_gap == Some(0.0));
        if !ok {
            failures += 1;
        }
    }
    Ok(Outcome::new(failures == 0, format!("{failures} of 100 masks with Qx != y")))
}

fn inpainting_config(denoiser: DenoiserSpec, initializer: Initializer, epsilons: Vec<f64>, size: usize) -> ExperimentConfig {
    ExperimentConfig {
        seed: 808,
        problem: Problem::Inpainting { hidden_fraction: 0.8 },
        denoiser,
        alphas: vec![1.0],
        solvers: vec![SolverKind::Sgd, SolverKind::Admm],
        realizations: 1,
        images: ImageSet {
            synthetic: synthetic::PIECEWISE_CONSTANT_NAMES.iter().map(|s| s.to_string()).collect(),
            files: vec![],
            size,
        },
        initializer,
        schedule: ScheduleSettings::default(),
        solver: Default::default(),
        coarse_to_fine: Some(CoarseToFineSettings {
            epsilons,
            params: CoarseToFineParams {
                step_factor: 0.5,
                ..CoarseToFineParams::default()
            },
        }),
        record_ssim: false,
        write_images: false,
        write_traces: false,
        threads: None,
    }
}

/// Mean PSNR per solver of coarse-to-fine from random init and of a single finest level from the truth.
fn coarse_to_fine_gap(
    denoiser: DenoiserSpec,
    images: &[(String, ImageGrid)],
    size: usize,
) -> Result<Vec<(SolverKind, f64, f64)>> {
    let levels = default_coarse_to_fine_epsilons();
    let finest = *levels.last().unwrap();
    let c2f = run_experiment(
        &inpainting_config(denoiser.clone(), Initializer::Random, levels, size),
        images,
        None,
    )?;
    let oracle = run_experiment(
        &inpainting_config(denoiser, Initializer::Oracle, vec![finest], size),
        images,
        None,
    )?;
    let mean = |rows: &[pnp_core::harness::MetricsRow], s: SolverKind| -> f64 {
        let v: Vec<f64> = rows
            .iter()
            .filter(|r| r.solver == s.name())
            .map(|r| r.psnr.unwrap_or(f64::NEG_INFINITY))
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    Ok([SolverKind::Sgd, SolverKind::Admm]
        .into_iter()
        .map(|s| (s, mean(&c2f.rows, s), mean(&oracle.rows, s)))
        .collect())
}

fn describe(gaps: &[(SolverKind, f64, f64)]) -> String {
    gaps.iter()
        .map(|(s, c, o)| format!("{s}: coarse-to-fine {c:.2} dB vs oracle {o:.2} dB"))
        .collect::<Vec<_>>()
        .join("; ")
}

fn within_one_db(gaps: &[(SolverKind, f64, f64)]) -> bool {
    gaps.iter().all(|(_, c, o)| c == o || (o - c).abs() <= 1.0)
}

fn criterion_8() -> Result<Outcome> {
    let size = 64;
    let images = synthetic::piecewise_constant_suite(size);
    let grids: Vec<ImageGrid> = images.iter().map(|(_, g)| g.clone()).collect();
    let weights = synthetic::palette_weights(&grids);
    let comps = synthetic::PALETTE
        .iter()
        .zip(weights)
        .map(|(&mean, weight)| GmmComponent { weight, mean, variance: 1e-4 })
        .collect();
    let spec = DenoiserSpec::new(DenoiserKind::GmmMmse { components: comps }, eps_5());
    let gaps = coarse_to_fine_gap(spec, &images, size)?;
    Ok(Outcome::new(within_one_db(&gaps), describe(&gaps)))
}

/// Same protocol with a whole-image mixture whose components are the 16×16 suite images.
fn criterion_8_vector_variant() -> Result<Outcome> {
    let size = 16;
    let images = synthetic::piecewise_constant_suite(size);
    let n = images.len() as f64;
    let comps = images
        .iter()
        .map(|(_, g)| GmmVectorComponent {
            weight: 1.0 / n,
            mean: g.clone(),
            variance: 1e-4,
        })
        .collect();
    let spec = DenoiserSpec::new(DenoiserKind::GmmVectorMmse { components: comps }, eps_5());
    let gaps = coarse_to_fine_gap(spec, &images, size)?;
    Ok(Outcome::new(within_one_db(&gaps), describe(&gaps)))
}

fn nlm_budgets() -> BTreeMap<SolverKind, SolverOverrides> {
    let fixed = |n| SolverOverrides {
        max_iters: Some(n),
        stop_rule: Some(StopRule::FixedIterations),
        noise_enabled: None,
    };
    BTreeMap::from([
        (
            SolverKind::Sgd,
            SolverOverrides {
                max_iters: Some(1500),
                stop_rule: Some(StopRule::PsnrPlateau {
                    factor: 0.1,
                    min_iters: 50,
                    max_iters: 1000,
                    decay_iters: 200,
                }),
                noise_enabled: None,
            },
        ),
        (SolverKind::Admm, fixed(60)),
        (SolverKind::Fbs, fixed(150)),
        (SolverKind::Bbs, fixed(150)),
    ])
}

fn criterion_9() -> Result<Outcome> {
    let cfg = ExperimentConfig {
        seed: 909,
        problem: Problem::Denoising { sigma: sigma_30() },
        denoiser: DenoiserSpec::new(DenoiserKind::Nlm(NlmParams::default()), (15.0f64 / 255.0).powi(2)),
        alphas: vec![0.1, 0.25, 0.5, 1.0],
        solvers: vec![SolverKind::Sgd, SolverKind::Admm, SolverKind::Fbs, SolverKind::Bbs],
        realizations: 1,
        images: ImageSet {
            synthetic: synthetic::SYNTHETIC_NAMES.iter().map(|s| s.to_string()).collect(),
            files: vec![],
            size: 64,
        },
        initializer: Initializer::default(),
        schedule: ScheduleSettings::default(),
        solver: nlm_budgets(),
        coarse_to_fine: None,
        record_ssim: false,
        write_images: false,
        write_traces: false,
        threads: None,
    };
    let images = load_images(&cfg.images)?;
    let res = run_experiment(&cfg, &images, None)?;
    let mut parts = Vec::new();
    let mut pass = true;
    for kind in &cfg.solvers {
        let best = cfg
            .alphas
            .iter()
            .map(|&a| {
                let rows: Vec<_> = res.rows.iter().filter(|r| r.solver == kind.name() && r.alpha == a).collect();
                let gain = rows
                    .iter()
                    .map(|r| r.psnr.unwrap_or(f64::NEG_INFINITY) - r.input_psnr)
                    .sum::<f64>()
                    / rows.len() as f64;
                (a, gain)
            })
            .fold((0.0, f64::NEG_INFINITY), |acc, v| if v.1 > acc.1 { v } else { acc });
        pass &= best.1 >= 2.0;
        parts.push(format!("{kind} +{:.2} dB at alpha {}", best.1, best.0));
    }
    Ok(Outcome::new(pass, format!("best mean gain over input: {}", parts.join(", "))))
}

const DETERMINISM_CONFIG: &str = r#"
seed = 1010
alphas = [0.5, 2.0]
solvers = ["sgd", "admm", "fbs", "bbs"]
realizations = 2

[problem]
kind = "deblurring"
sigma = 0.05
kernel_size = 3

[denoiser]
kind = "gmm-mmse"
epsilon = 0.002
components = [
  { weight = 0.3, mean = 0.2, variance = 0.01 },
  { weight = 0.7, mean = 0.7, variance = 0.02 },
]

[images]
synthetic = ["shapes", "checkerboard"]
size = 24

[initializer]
kind = "tv-l2"
"#;

fn criterion_10() -> Result<Outcome> {
    let dir = tempfile::tempdir()?;
    let config = dir.path().join("determinism.toml");
    std::fs::write(&config, DETERMINISM_CONFIG)?;
    let mut tables = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_pnp"))
            .arg("run")
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .output()?;
        if !status.status.success() {
            return Ok(Outcome::new(
                false,
                format!("pnp run exited with {}: {}", status.status, String::from_utf8_lossy(&status.stderr)),
            ));
        }
        tables.push(std::fs::read(out.join("metrics.csv"))?);
    }
    let rows = tables[0].iter().filter(|&&b| b == b'\n').count();
    Ok(Outcome::new(
        tables[0] == tables[1] && rows == 1 + 2 * 2 * 2 * 4,
        format!("metrics.csv byte-identical: {} ({} bytes, {} lines)", tables[0] == tables[1], tables[0].len(), rows),
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, &str, Duration, fn() -> Result<Outcome>); 11] = [
        ("1", "tweedie exactness", Duration::from_secs(10), criterion_1),
        ("2", "conjugate gaussian MAP convergence", Duration::from_secs(30), criterion_2),
        ("3", "scalar stationary-point oracle", Duration::from_secs(10), criterion_3),
        ("4", "fixed-point coincidence", Duration::from_secs(5), criterion_4),
        ("5", "gate arithmetic in exact rationals", Duration::MAX, criterion_5),
        ("6", "monotone descent at the stable step", Duration::MAX, criterion_6),
        ("7", "hard-constraint feasibility", Duration::MAX, criterion_7),
        ("8", "coarse-to-fine benefit, pixelwise gmm", Duration::from_secs(300), criterion_8),
        ("8*", "coarse-to-fine benefit, whole-image gmm (supplementary)", Duration::from_secs(300), criterion_8_vector_variant),
        ("9", "nlm end-to-end denoising", Duration::from_secs(300), criterion_9),
        ("10", "determinism of pnp run", Duration::MAX, criterion_10),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (id, name, budget, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|p| p == id) {
            continue;
        }
        let start = Instant::now();
        let outcome = match catch_unwind(AssertUnwindSafe(f)) {
            Ok(Ok(o)) => o,
            Ok(Err(e)) => Outcome::new(false, format!("error: {e}")),
            Err(_) => Outcome::new(false, "panicked"),
        };
        let elapsed = start.elapsed();
        let in_time = elapsed <= budget;
        let pass = outcome.pass && in_time;
        let timing = if budget == Duration::MAX {
            format!("{:.1}s", elapsed.as_secs_f64())
        } else {
            format!("{:.1}s of {}s", elapsed.as_secs_f64(), budget.as_secs())
        };
        if !pass && !id.ends_with('*') {
            failed += 1;
        }
        println!(
            "criterion {id} ({name}): {} [{}; {timing}]",
            if pass { "PASS" } else { "FAIL" },
            outcome.detail
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
