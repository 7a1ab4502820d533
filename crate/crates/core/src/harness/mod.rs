//! Experiment orchestration: loading images, degrading them, sweeping α over
//! solvers and noise realizations, and writing metrics, images and traces.
//!
//! Every cell `(image, realization, α, solver)` is independent. Cells run on a
//! rayon pool and are collected in their enumeration order, so outputs do not
//! depend on scheduling.

pub mod config;
pub mod degrade;
pub mod init;
pub mod seeds;
pub mod synthetic;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{CoarseToFineSettings, ExperimentConfig, ImageSet, Problem, ScheduleSettings, SolverOverrides, SolverSettings};
pub use degrade::{degrade, observed_count, Degradation};
pub use init::{init_tv_l2, observation_image, total_variation, Initializer};

use crate::denoiser::{
    probe_lipschitz, Denoiser, DenoiserKind, GaussianMmse, LipschitzProbeReport, PixelwiseGmm, VectorGmm,
};
use crate::diagnostics::{check_tweedie, evaluate_gates, hard_constraint_gates, GateInputs, GateReport};
use crate::error::{PnpError, Result};
use crate::grid::{io, ImageGrid};
use crate::likelihood::Likelihood;
use crate::metrics::{psnr, ssim};
use crate::solver::{
    coarse_to_fine, delta_stable, delta_stable_reduced, residual_lipschitz_or_default, solve, RunTrace, SolverConfig,
    SolverKind, StepSchedule,
};

/// Smallest side length for which SSIM is defined.
pub const SSIM_MIN_SIDE: usize = 11;

/// One line of the metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub image: String,
    pub realization: usize,
    pub alpha: f64,
    pub solver: String,
    /// PSNR of the output in dB; `inf` for an exact match, empty for failed cells.
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    /// PSNR of the observation image against the ground truth.
    pub input_psnr: f64,
    pub iterations: usize,
    pub stop_reason: String,
    pub diverged: bool,
    pub error: String,
    pub gate_fbs_ryu: String,
    pub gate_admm_ryu: String,
    pub gate_xu_mmse: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub image: String,
    pub realization: usize,
    pub alpha: f64,
    pub solver: String,
    pub wall_time_secs: f64,
}

/// Mean and sample standard deviation over images and realizations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub alpha: f64,
    pub solver: String,
    pub cells: usize,
    pub failed: usize,
    pub psnr_mean: Option<f64>,
    pub psnr_std: Option<f64>,
    pub ssim_mean: Option<f64>,
    pub ssim_std: Option<f64>,
}

/// The gate reports evaluated for one α.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaGates {
    pub alpha: f64,
    pub reports: Vec<GateReport>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub rows: Vec<MetricsRow>,
    pub timings: Vec<TimingRow>,
    pub summary: Vec<SummaryRow>,
    pub gates: Vec<AlphaGates>,
    /// Final iterates, in row order; `None` for failed cells.
    pub outputs: Vec<Option<ImageGrid>>,
    pub traces: Vec<Option<RunTrace>>,
}

impl ExperimentResult {
    pub fn any_diverged(&self) -> bool {
        self.rows.iter().any(|r| r.diverged)
    }

    pub fn any_failed(&self) -> bool {
        self.rows.iter().any(|r| r.psnr.is_none())
    }
}

/// Loads the configured images, synthetic ones first, in config order.
pub fn load_images(set: &ImageSet) -> Result<Vec<(String, ImageGrid)>> {
    let mut out = Vec::with_capacity(set.synthetic.len() + set.files.len());
    for name in &set.synthetic {
        out.push((name.clone(), synthetic::by_name(name, set.size)?));
    }
    for path in &set.files {
        let img = io::read_gray(path)?;
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("image")
            .to_string();
        out.push((id, center_crop(&img, set.size)));
    }
    let mut seen = std::collections::BTreeSet::new();
    for (id, _) in &out {
        if !seen.insert(id.as_str()) {
            return Err(PnpError::Config(format!("duplicate image id {id:?}")));
        }
    }
    Ok(out)
}

/// Central `size × size` window, or the whole image along axes shorter than `size`.
pub fn center_crop(img: &ImageGrid, size: usize) -> ImageGrid {
    let (h, w) = img.shape();
    let (ch, cw) = (h.min(size), w.min(size));
    let (r0, c0) = ((h - ch) / 2, (w - cw) / 2);
    ImageGrid::from_fn(ch, cw, |r, c| img.get(r0 + r, c0 + c))
}

fn ssim_if_defined(x: &ImageGrid, truth: &ImageGrid) -> Result<Option<f64>> {
    let (h, w) = x.shape();
    if h.min(w) < SSIM_MIN_SIDE {
        return Ok(None);
    }
    ssim(x, truth).map(Some)
}

fn verdict_of(reports: &[GateReport], gate: &str) -> String {
    reports
        .iter()
        .find(|r| r.gate == gate)
        .map(|r| serde_json::to_value(r.verdict).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default())
        .unwrap_or_default()
}

/// Gate reports for `lik` at `alpha`.
pub fn gates_for(lik: &Likelihood, d: &dyn Denoiser, alpha: f64) -> Vec<GateReport> {
    match lik {
        Likelihood::Gaussian(l) => {
            evaluate_gates(&GateInputs::from_likelihood(alpha, d.epsilon(), d.residual_lipschitz(), l))
        }
        Likelihood::HardConstraint(_) => hard_constraint_gates(),
    }
}

/// Step schedule of the stochastic scheme: `δ₀ = delta0_factor · δ_stable`.
pub fn sgd_schedule(lik: &Likelihood, d: &dyn Denoiser, alpha: f64, settings: &ScheduleSettings) -> Result<StepSchedule> {
    let l = residual_lipschitz_or_default(d);
    let stable = match lik {
        Likelihood::Gaussian(g) => delta_stable(alpha, d.epsilon(), l, g)?,
        Likelihood::HardConstraint(_) => delta_stable_reduced(alpha, d.epsilon(), l)?,
    };
    Ok(StepSchedule::decaying(
        settings.delta0_factor * stable,
        settings.n_burnin,
        settings.decay_exponent,
    ))
}

struct Prepared {
    image: usize,
    realization: usize,
    degradation: Degradation,
    x0: ImageGrid,
    input_psnr: f64,
}

struct CellOutcome {
    row: MetricsRow,
    timing: TimingRow,
    output: Option<ImageGrid>,
    trace: Option<RunTrace>,
}

/// Runs every cell of `cfg` on `images` and, when `out_dir` is given, writes
/// `metrics.csv`, `summary.csv`, `timings.csv`, `manifest.json`, restored
/// images under `images/` and iteration traces under `traces/`.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    images: &[(String, ImageGrid)],
    out_dir: Option<&Path>,
) -> Result<ExperimentResult> {
    cfg.validate()?;
    if images.is_empty() {
        return Err(PnpError::Config("no images to run on".into()));
    }
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(t) = cfg.threads {
            b = b.num_threads(t);
        }
        b.build().map_err(|e| PnpError::Config(format!("thread pool: {e}")))?
    };
    pool.install(|| run_cells(cfg, images, out_dir))
}

fn run_cells(cfg: &ExperimentConfig, images: &[(String, ImageGrid)], out_dir: Option<&Path>) -> Result<ExperimentResult> {
    let denoiser = cfg.denoiser.build()?;
    let d = denoiser.as_ref();

    let pairs: Vec<(usize, usize)> = (0..images.len())
        .flat_map(|i| (0..cfg.realizations).map(move |k| (i, k)))
        .collect();
    let prepared: Vec<Prepared> = pairs
        .par_iter()
        .map(|&(i, k)| prepare(cfg, &images[i].1, i, k))
        .collect::<Result<_>>()?;

    let gates: Vec<AlphaGates> = cfg
        .alphas
        .iter()
        .map(|&alpha| AlphaGates {
            alpha,
            reports: gates_for(&prepared[0].degradation.likelihood, d, alpha),
        })
        .collect();

    let mut cells = Vec::new();
    for p in 0..prepared.len() {
        for a in 0..cfg.alphas.len() {
            for s in 0..cfg.solvers.len() {
                cells.push((p, a, s));
            }
        }
    }
    let outcomes: Vec<CellOutcome> = cells
        .par_iter()
        .map(|&(p, a, s)| run_cell(cfg, d, images, &prepared[p], a, s, &gates[a].reports))
        .collect();

    let mut result = ExperimentResult {
        rows: Vec::with_capacity(outcomes.len()),
        timings: Vec::with_capacity(outcomes.len()),
        summary: Vec::new(),
        gates,
        outputs: Vec::with_capacity(outcomes.len()),
        traces: Vec::with_capacity(outcomes.len()),
    };
    for o in outcomes {
        result.rows.push(o.row);
        result.timings.push(o.timing);
        result.outputs.push(o.output);
        result.traces.push(o.trace);
    }
    result.summary = summarize(cfg, &result.rows);

    if let Some(dir) = out_dir {
        write_outputs(cfg, d, images, &prepared, &result, dir)?;
    }
    Ok(result)
}

fn prepare(cfg: &ExperimentConfig, truth: &ImageGrid, image: usize, realization: usize) -> Result<Prepared> {
    let degradation = degrade(truth, &cfg.problem, seeds::degradation_seed(cfg.seed, image, realization))?;
    let x0 = cfg.initializer.initialize(
        &degradation.likelihood,
        truth,
        cfg.problem.sigma(),
        seeds::init_seed(cfg.seed, image, realization),
    )?;
    let input_psnr = psnr(&degradation.observed, truth)?;
    Ok(Prepared {
        image,
        realization,
        degradation,
        x0,
        input_psnr,
    })
}

fn run_cell(
    cfg: &ExperimentConfig,
    d: &dyn Denoiser,
    images: &[(String, ImageGrid)],
    p: &Prepared,
    a: usize,
    s: usize,
    gates: &[GateReport],
) -> CellOutcome {
    let (name, truth) = &images[p.image];
    let alpha = cfg.alphas[a];
    let kind = cfg.solvers[s];
    let settings = cfg.solver_settings(kind);
    let solver_cfg = SolverConfig {
        alpha,
        max_iters: settings.max_iters,
        seed: seeds::solver_seed(cfg.seed, p.image, p.realization, a, s),
        noise_enabled: settings.noise_enabled && kind == SolverKind::Sgd,
        stop_rule: settings.stop_rule,
        record_ssim: cfg.record_ssim,
        reference: Some(truth.clone()),
    };
    let lik = &p.degradation.likelihood;

    let start = Instant::now();
    let outcome = (|| -> Result<(ImageGrid, RunTrace)> {
        match &cfg.coarse_to_fine {
            Some(c) => {
                let levels: Vec<_> = c.epsilons.iter().map(|&e| cfg.denoiser.with_epsilon(e)).collect();
                coarse_to_fine(lik, &levels, kind, &solver_cfg, &c.params, &p.x0)
            }
            None => {
                let sched = sgd_schedule(lik, d, alpha, &cfg.schedule)?;
                solve(kind, lik, d, &solver_cfg, &sched, &p.x0)
            }
        }
    })();
    let wall = start.elapsed().as_secs_f64();

    let mut row = MetricsRow {
        image: name.clone(),
        realization: p.realization,
        alpha,
        solver: kind.name().to_string(),
        psnr: None,
        ssim: None,
        input_psnr: p.input_psnr,
        iterations: 0,
        stop_reason: String::new(),
        diverged: false,
        error: String::new(),
        gate_fbs_ryu: verdict_of(gates, "fbs_ryu"),
        gate_admm_ryu: verdict_of(gates, "admm_ryu"),
        gate_xu_mmse: verdict_of(gates, "xu_mmse"),
    };
    let (output, trace) = match outcome.and_then(|(x, t)| {
        let q = psnr(&x, truth)?;
        let s = ssim_if_defined(&x, truth)?;
        Ok((x, t, q, s))
    }) {
        Ok((x, t, q, s)) => {
            row.psnr = Some(q);
            row.ssim = s;
            row.iterations = t.iterations();
            row.stop_reason = serde_json::to_value(t.stop_reason())
                .ok()
                .and_then(|v| v.as_str().map(String::from))
                .unwrap_or_default();
            (Some(x), Some(t))
        }
        Err(e) => {
            if let PnpError::Divergence { iteration, .. } = &e {
                row.diverged = true;
                row.iterations = *iteration;
                row.stop_reason = "diverged".into();
            } else {
                row.stop_reason = "error".into();
            }
            row.error = e.to_string();
            (None, None)
        }
    };
    let timing = TimingRow {
        image: name.clone(),
        realization: p.realization,
        alpha,
        solver: row.solver.clone(),
        wall_time_secs: wall,
    };
    CellOutcome {
        row,
        timing,
        output,
        trace,
    }
}

fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 || !mean.is_finite() {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    (Some(mean), Some(std))
}

/// Aggregates rows per `(α, solver)`, in config order.
pub fn summarize(cfg: &ExperimentConfig, rows: &[MetricsRow]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for &alpha in &cfg.alphas {
        for kind in &cfg.solvers {
            let group: Vec<_> = rows
                .iter()
                .filter(|r| r.alpha == alpha && r.solver == kind.name())
                .collect();
            let psnrs: Vec<f64> = group.iter().filter_map(|r| r.psnr).collect();
            let ssims: Vec<f64> = group.iter().filter_map(|r| r.ssim).collect();
            let (psnr_mean, psnr_std) = mean_std(&psnrs);
            let (ssim_mean, ssim_std) = mean_std(&ssims);
            out.push(SummaryRow {
                alpha,
                solver: kind.name().to_string(),
                cells: group.len(),
                failed: group.iter().filter(|r| r.psnr.is_none()).count(),
                psnr_mean,
                psnr_std,
                ssim_mean,
                ssim_std,
            });
        }
    }
    out
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| PnpError::Io(std::io::Error::other(e)))?;
    for r in rows {
        w.serialize(r).map_err(|e| PnpError::Io(std::io::Error::other(e)))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes one JSON object per line.
pub fn write_ndjson<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut f, r).map_err(|e| PnpError::Io(e.into()))?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

fn cell_stem(row: &MetricsRow, alpha_index: usize) -> String {
    format!("{}_r{}_a{}_{}", row.image, row.realization, alpha_index, row.solver)
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'static str,
    config: &'a ExperimentConfig,
    problem: &'static str,
    denoiser: String,
    epsilon: f64,
    residual_lipschitz_certified: Option<f64>,
    residual_lipschitz_used: f64,
    initializer: InitializerManifest,
    solvers: Vec<(String, SolverSettings)>,
    sgd_delta0: Vec<(f64, f64)>,
    gates: &'a [AlphaGates],
    cells: usize,
    diverged: usize,
    failed: usize,
}

#[derive(Serialize)]
struct InitializerManifest {
    initializer: Initializer,
    tv_lambda: Option<f64>,
    tv_iterations: Option<usize>,
    /// Set when the TV-L2 parameters are this implementation's heuristic defaults.
    tv_defaults_used: bool,
}

fn write_outputs(
    cfg: &ExperimentConfig,
    d: &dyn Denoiser,
    images: &[(String, ImageGrid)],
    prepared: &[Prepared],
    result: &ExperimentResult,
    dir: &Path,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_csv(&dir.join("metrics.csv"), &result.rows)?;
    write_csv(&dir.join("summary.csv"), &result.summary)?;
    write_csv(&dir.join("timings.csv"), &result.timings)?;

    let lik0 = &prepared[0].degradation.likelihood;
    let (tv_lambda, tv_iterations, tv_defaults_used) = match cfg.initializer {
        Initializer::TvL2 { lambda, iterations } => (
            cfg.initializer.tv_lambda(cfg.problem.sigma()),
            Some(iterations),
            lambda.is_none() || iterations == init::TV_DEFAULT_ITERATIONS,
        ),
        _ => (None, None, false),
    };
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        problem: cfg.problem.name(),
        denoiser: d.name(),
        epsilon: d.epsilon(),
        residual_lipschitz_certified: d.residual_lipschitz(),
        residual_lipschitz_used: residual_lipschitz_or_default(d),
        initializer: InitializerManifest {
            initializer: cfg.initializer,
            tv_lambda,
            tv_iterations,
            tv_defaults_used,
        },
        solvers: cfg
            .solvers
            .iter()
            .map(|k| (k.name().to_string(), cfg.solver_settings(*k)))
            .collect(),
        sgd_delta0: cfg
            .alphas
            .iter()
            .filter_map(|&a| sgd_schedule(lik0, d, a, &cfg.schedule).ok().map(|s| (a, s.delta0)))
            .collect(),
        gates: &result.gates,
        cells: result.rows.len(),
        diverged: result.rows.iter().filter(|r| r.diverged).count(),
        failed: result.rows.iter().filter(|r| r.psnr.is_none()).count(),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| PnpError::Io(e.into()))?;
    fs::write(dir.join("manifest.json"), json + "\n")?;

    if cfg.write_images {
        let img_dir = dir.join("images");
        fs::create_dir_all(&img_dir)?;
        for (name, truth) in images {
            io::write_gray(truth, img_dir.join(format!("{name}_truth.png")))?;
        }
        for p in prepared {
            let name = &images[p.image].0;
            io::write_gray(
                &p.degradation.observed,
                img_dir.join(format!("{name}_r{}_observed.png", p.realization)),
            )?;
        }
    }
    let per_cell = cfg.alphas.len() * cfg.solvers.len();
    for (idx, row) in result.rows.iter().enumerate() {
        let alpha_index = (idx % per_cell) / cfg.solvers.len();
        let stem = cell_stem(row, alpha_index);
        if cfg.write_images {
            if let Some(x) = &result.outputs[idx] {
                io::write_gray(x, dir.join("images").join(format!("{stem}.png")))?;
            }
        }
        if cfg.write_traces {
            if let Some(t) = &result.traces[idx] {
                let trace_dir = dir.join("traces");
                fs::create_dir_all(&trace_dir)?;
                write_ndjson(&trace_dir.join(format!("{stem}.ndjson")), t.records())?;
            }
        }
    }
    Ok(())
}

/// Row of the `degrade` output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradedRow {
    pub image: String,
    pub realization: usize,
    pub input_psnr: f64,
    pub init_psnr: f64,
    pub observed_pixels: usize,
    pub file: String,
}

/// Degrades and initializes every `(image, realization)` pair and writes the
/// observation and initial images plus `degraded.csv` to `dir`.
pub fn degrade_only(cfg: &ExperimentConfig, images: &[(String, ImageGrid)], dir: &Path) -> Result<Vec<DegradedRow>> {
    cfg.validate()?;
    fs::create_dir_all(dir)?;
    let mut rows = Vec::new();
    for (i, (name, truth)) in images.iter().enumerate() {
        for k in 0..cfg.realizations {
            let p = prepare(cfg, truth, i, k)?;
            let file = format!("{name}_r{k}_observed.png");
            io::write_gray(&p.degradation.observed, dir.join(&file))?;
            io::write_gray(&p.x0, dir.join(format!("{name}_r{k}_init.png")))?;
            let observed_pixels = match &p.degradation.likelihood {
                Likelihood::HardConstraint(l) => l.split().m(),
                Likelihood::Gaussian(l) => l.observation().len(),
            };
            rows.push(DegradedRow {
                image: name.clone(),
                realization: k,
                input_psnr: p.input_psnr,
                init_psnr: psnr(&p.x0, truth)?,
                observed_pixels,
                file,
            });
        }
    }
    write_csv(&dir.join("degraded.csv"), &rows)?;
    Ok(rows)
}

/// Gate reports for every α of `cfg`, evaluated on the first image's degradation.
pub fn gate_table(cfg: &ExperimentConfig, images: &[(String, ImageGrid)]) -> Result<Vec<AlphaGates>> {
    cfg.validate()?;
    let (_, truth) = images
        .first()
        .ok_or_else(|| PnpError::Config("no images to evaluate gates on".into()))?;
    let deg = degrade(truth, &cfg.problem, seeds::degradation_seed(cfg.seed, 0, 0))?;
    let d = cfg.denoiser.build()?;
    Ok(cfg
        .alphas
        .iter()
        .map(|&alpha| AlphaGates {
            alpha,
            reports: gates_for(&deg.likelihood, d.as_ref(), alpha),
        })
        .collect())
}

/// Output of the `probe` verb.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub denoiser: String,
    pub epsilon: f64,
    pub certified_lipschitz: Option<f64>,
    pub certified_residual_lipschitz: Option<f64>,
    pub lipschitz: LipschitzProbeReport,
    /// Max deviation of the denoiser-induced score from a finite-difference
    /// score of the smoothed prior, for closed-form MMSE denoisers only.
    pub tweedie_max_deviation: Option<f64>,
}

pub const PROBES_PER_SAMPLE: usize = 8;
pub const PROBE_STEP: f64 = 1e-3;
const TWEEDIE_FD_STEP: f64 = 1e-5;

/// Probes the configured denoiser around every observation of `cfg`.
pub fn probe_denoiser(cfg: &ExperimentConfig, images: &[(String, ImageGrid)]) -> Result<ProbeReport> {
    cfg.validate()?;
    let d = cfg.denoiser.build()?;
    let mut samples = Vec::new();
    for (i, (_, truth)) in images.iter().enumerate() {
        for k in 0..cfg.realizations {
            samples.push(prepare(cfg, truth, i, k)?.degradation.observed);
        }
    }
    let lipschitz = probe_lipschitz(
        d.as_ref(),
        &samples,
        PROBES_PER_SAMPLE,
        PROBE_STEP,
        seeds::sub_seed(cfg.seed, "probe", &[]),
    )?;
    let tweedie_max_deviation = tweedie_deviation(cfg, d.as_ref(), &samples)?;
    Ok(ProbeReport {
        denoiser: d.name(),
        epsilon: d.epsilon(),
        certified_lipschitz: d.lipschitz(),
        certified_residual_lipschitz: d.residual_lipschitz(),
        lipschitz,
        tweedie_max_deviation,
    })
}

fn central_difference(f: impl Fn(&ImageGrid) -> Result<f64>, x: &ImageGrid) -> Result<ImageGrid> {
    let mut g = ImageGrid::zeros(x.height(), x.width());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let v = x.data()[i];
        probe.data_mut()[i] = v + TWEEDIE_FD_STEP;
        let up = f(&probe)?;
        probe.data_mut()[i] = v - TWEEDIE_FD_STEP;
        let down = f(&probe)?;
        probe.data_mut()[i] = v;
        g.data_mut()[i] = (up - down) / (2.0 * TWEEDIE_FD_STEP);
    }
    Ok(g)
}

fn tweedie_deviation(cfg: &ExperimentConfig, d: &dyn Denoiser, samples: &[ImageGrid]) -> Result<Option<f64>> {
    let eps = cfg.denoiser.epsilon;
    let value = match &cfg.denoiser.kind {
        DenoiserKind::GaussianMmse { mean, variance } => {
            let g = GaussianMmse::new(mean.clone(), *variance, eps)?;
            Some(check_tweedie(d, |x| g.analytic_score(x), samples)?)
        }
        DenoiserKind::GmmMmse { components } => {
            let g = PixelwiseGmm::new(components.clone(), eps)?;
            let h = TWEEDIE_FD_STEP;
            Some(check_tweedie(
                d,
                |x| Ok(x.map(|v| (g.log_density_scalar(v + h) - g.log_density_scalar(v - h)) / (2.0 * h))),
                samples,
            )?)
        }
        DenoiserKind::GmmVectorMmse { components } => {
            let g = VectorGmm::new(components.clone(), eps)?;
            Some(check_tweedie(d, |x| central_difference(|p| g.smoothed_log_density(p), x), samples)?)
        }
        _ => None,
    };
    Ok(value)
}

/// Output directory for a config file: `<stem>-out` next to it.
pub fn default_output_dir(config_path: &Path) -> PathBuf {
    let stem = config_path.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    config_path.with_file_name(format!("{stem}-out"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::{DenoiserSpec, PriorMean};
    use crate::solver::StopRule;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            seed: 3,
            problem: Problem::Denoising { sigma: 0.1 },
            denoiser: DenoiserSpec::new(
                DenoiserKind::GaussianMmse {
                    mean: PriorMean::Constant(0.5),
                    variance: 0.05,
                },
                0.01,
            ),
            alphas: vec![0.5, 1.0],
            solvers: vec![SolverKind::Sgd, SolverKind::Admm],
            realizations: 2,
            images: ImageSet {
                synthetic: vec!["shapes".into()],
                files: vec![],
                size: 16,
            },
            initializer: Initializer::Observation,
            schedule: ScheduleSettings::default(),
            solver: [(
                SolverKind::Sgd,
                SolverOverrides {
                    max_iters: Some(40),
                    stop_rule: Some(StopRule::FixedIterations),
                    noise_enabled: None,
                },
            )]
            .into_iter()
            .collect(),
            coarse_to_fine: None,
            record_ssim: false,
            write_images: true,
            write_traces: true,
            threads: Some(2),
        }
    }

    #[test]
    fn row_count_and_order() {
        let cfg = small_config();
        let images = load_images(&cfg.images).unwrap();
        let res = run_experiment(&cfg, &images, None).unwrap();
        assert_eq!(res.rows.len(), 2 * 2 * 2);
        assert_eq!(res.rows[1].solver, "admm");
        assert_eq!(res.rows[2].alpha, 1.0);
        assert_eq!(res.rows[4].realization, 1);
        assert!(res.rows.iter().all(|r| r.psnr.is_some() && !r.diverged));
        assert_eq!(res.summary.len(), 4);
        assert_eq!(res.summary[0].cells, 2);
    }

    #[test]
    fn single_cell() {
        let mut cfg = small_config();
        cfg.alphas = vec![1.0];
        cfg.solvers = vec![SolverKind::Admm];
        cfg.realizations = 1;
        let images = load_images(&cfg.images).unwrap();
        assert_eq!(run_experiment(&cfg, &images, None).unwrap().rows.len(), 1);
    }

    #[test]
    fn writes_artifacts() {
        let cfg = small_config();
        let images = load_images(&cfg.images).unwrap();
        let dir = tempfile::tempdir().unwrap();
        run_experiment(&cfg, &images, Some(dir.path())).unwrap();
        for f in ["metrics.csv", "summary.csv", "timings.csv", "manifest.json"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let header = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert!(header.starts_with("image,realization,alpha,solver,psnr,ssim,"));
        let restored = io::read_gray(dir.path().join("images/shapes_r0_a0_sgd.png")).unwrap();
        assert_eq!(restored.shape(), (16, 16));
        let trace = fs::read_to_string(dir.path().join("traces/shapes_r1_a1_admm.ndjson")).unwrap();
        assert_eq!(trace.lines().count(), 100);
    }

    #[test]
    fn divergent_cells_are_recorded() {
        let mut cfg = small_config();
        cfg.solvers = vec![SolverKind::Fbs];
        cfg.denoiser = DenoiserSpec::new(DenoiserKind::Identity, 1.0);
        cfg.alphas = vec![1e-3];
        cfg.initializer = Initializer::Random;
        let images = load_images(&cfg.images).unwrap();
        let res = run_experiment(&cfg, &images, None).unwrap();
        assert!(res.any_diverged());
        assert!(res.rows.iter().all(|r| r.psnr.is_none() && r.error.contains("fbs_ryu")));
    }

    #[test]
    fn crop_is_central() {
        let img = ImageGrid::from_fn(6, 8, |r, c| (r * 8 + c) as f64);
        let c = center_crop(&img, 4);
        assert_eq!(c.shape(), (4, 4));
        assert_eq!(c.get(0, 0), img.get(1, 2));
    }
}
