//! Convergence gates, Tweedie checks, MMSE-gap reports and trace summaries.

pub mod gates;

pub use gates::{
    evaluate_gates, gate_admm_ryu, gate_fbs_ryu, gate_xu_mmse, hard_constraint_gates, GateInputs, GateReport,
    Verdict,
};

use serde::{Deserialize, Serialize};

use crate::denoiser::{score_from_denoiser, Denoiser};
use crate::error::{PnpError, Result};
use crate::grid::ImageGrid;
use crate::solver::RunTrace;

/// Largest Euclidean deviation between the denoiser-induced score and a reference score.
pub fn check_tweedie(
    d: &dyn Denoiser,
    reference_score: impl Fn(&ImageGrid) -> Result<ImageGrid>,
    points: &[ImageGrid],
) -> Result<f64> {
    let mut worst = 0.0f64;
    for x in points {
        let s = score_from_denoiser(d, x)?;
        let r = reference_score(x)?;
        r.ensure_same_shape(&s)?;
        worst = worst.max(s.distance(&r));
    }
    Ok(worst)
}

/// Empirical lower bound on `M(R) = sup ‖D_ε(x) − D_ε*(x)‖` over a test set.
pub fn mmse_gap(d: &dyn Denoiser, reference: &dyn Denoiser, test_set: &[ImageGrid]) -> Result<f64> {
    if !reference.is_exact_mmse() {
        return Err(PnpError::Config(format!(
            "reference denoiser {} is not an exact MMSE map",
            reference.name()
        )));
    }
    if test_set.is_empty() {
        return Err(PnpError::Config("mmse gap needs a nonempty test set".into()));
    }
    let mut worst = 0.0f64;
    for x in test_set {
        worst = worst.max(d.denoise(x)?.distance(&reference.denoise(x)?));
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub iterations: usize,
    pub levels: usize,
    pub final_residual: Option<f64>,
    pub final_psnr: Option<f64>,
    pub best_psnr: Option<f64>,
    pub best_psnr_iteration: Option<usize>,
    pub max_feasibility_gap: Option<f64>,
}

pub fn summarize_trace(trace: &RunTrace) -> TraceSummary {
    let records = trace.records();
    let best = records
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.psnr.map(|p| (i, p)))
        .fold(None, |acc: Option<(usize, f64)>, (i, p)| match acc {
            Some((_, bp)) if bp >= p => acc,
            _ => Some((i, p)),
        });
    let gap = records
        .iter()
        .filter_map(|r| r.feasibility_gap)
        .fold(None, |m: Option<f64>, g| Some(m.map_or(g, |v| v.max(g))));
    TraceSummary {
        iterations: records.len(),
        levels: trace.level_starts().len(),
        final_residual: records.last().map(|r| r.residual),
        final_psnr: records.last().and_then(|r| r.psnr),
        best_psnr: best.map(|(_, p)| p),
        best_psnr_iteration: best.map(|(i, _)| i),
        max_feasibility_gap: gap,
    }
}
