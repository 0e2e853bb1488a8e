//! Threshold selection: noise level, universal and adaptive thresholds,
//! jump counts and the exact-segmentation threshold.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{apply_diff, LatticeShape, Signal};
use crate::lambda::GumbelFitCoefficients;
use crate::risk::{default_quantization, ncc};
use crate::stats::{median, normal_quantile};
use crate::tvsolve::{denoise, SolverConfig, TvSolution};

const MAD_SCALE: f64 = 1.4826;

/// Smallest per-piece side used when re-evaluating the Gumbel model; the
/// shipped coefficients were fitted from side 8 upwards.
const MIN_FITTED_SIDE: f64 = 8.0;

/// Smallest per-piece length in 1D; `log log N̄` needs `N̄ > e`.
const MIN_PIECE_1D: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMethod {
    Universal,
    Adaptive,
    Sure,
    ExactSeg,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub sigma_used: f64,
    pub lambda1: f64,
    /// Level count `L̂` in 1D, connected components in `d ≥ 2`.
    pub count1: usize,
    pub lambda2: f64,
    /// Effective samples per piece (per side in `d ≥ 2`) used for `lambda2`.
    pub n_bar: f64,
    /// Level of the step-1 quantile.
    pub alpha: f64,
    pub method: ThresholdMethod,
}

/// `(1.4826/√2) · MAD(By)`.
pub fn estimate_sigma(y: &Signal) -> f64 {
    let d = apply_diff(y);
    if d.is_empty() {
        return 0.0;
    }
    let m = median(&d);
    let dev: Vec<f64> = d.iter().map(|v| (v - m).abs()).collect();
    MAD_SCALE / 2f64.sqrt() * median(&dev)
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(invalid(format!("noise level must be finite and non-negative, got {sigma}")));
    }
    Ok(())
}

fn bridge_threshold(n: f64, sigma: f64) -> f64 {
    0.5 * sigma * (n * n.ln().ln()).sqrt()
}

/// `(σ/2) √(N log log N)`.
pub fn universal_threshold_1d(n: usize, sigma: f64) -> Result<f64> {
    if n < 3 {
        return Err(invalid(format!("universal threshold needs N ≥ 3, got {n}")));
    }
    check_sigma(sigma)?;
    Ok(bridge_threshold(n as f64, sigma))
}

/// `2/√(log N)`, the level attached to the 1D universal threshold.
pub fn universal_level_1d(n: usize) -> f64 {
    2.0 / (n as f64).ln().sqrt()
}

/// `(σ/2) √(N̄ log log N̄)` with `N̄ = N/L`.
pub fn adaptive_threshold_1d(n: usize, l: usize, sigma: f64) -> Result<f64> {
    if l == 0 {
        return Err(invalid("level count must be at least 1"));
    }
    let n_bar = n as f64 / l as f64;
    if n_bar < MIN_PIECE_1D {
        return Err(invalid(format!("N/L = {n_bar} is below 3")));
    }
    check_sigma(sigma)?;
    Ok(bridge_threshold(n_bar, sigma))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JumpCount {
    /// Bonferroni test on the raw differences of the data.
    Raw,
    /// Nonzero differences of a fit.
    Nonzero,
    /// Differences of a fit above the calibrated threshold.
    Calibrated,
}

/// `z_{1 − 0.025/(N−1)}`.
pub(crate) fn bonferroni_z(n: usize) -> f64 {
    normal_quantile(1.0 - 0.025 / (n.saturating_sub(1).max(1)) as f64)
}

/// `σ √(2/N) z_{1−0.025/(N−1)}`.
pub fn calibrated_jump_threshold(n: usize, sigma: f64) -> f64 {
    sigma * (2.0 / n as f64).sqrt() * bonferroni_z(n)
}

/// Tolerance under which a fitted difference counts as zero: `10 √gap_tol · σ`.
pub fn nonzero_tolerance(sigma: f64, cfg: &SolverConfig) -> f64 {
    10.0 * cfg.gap_tol.sqrt() * sigma.max(f64::MIN_POSITIVE)
}

/// Number of jumps; add one for the level count.
pub fn count_jumps(f: &Signal, sigma: f64, variant: JumpCount) -> Result<usize> {
    if f.shape().dims() != 1 {
        return Err(Error::UnsupportedDimension(f.shape().dims()));
    }
    check_sigma(sigma)?;
    let n = f.len();
    let thr = match variant {
        JumpCount::Raw => sigma * 2f64.sqrt() * bonferroni_z(n),
        JumpCount::Nonzero => nonzero_tolerance(sigma, &SolverConfig::default()),
        JumpCount::Calibrated => calibrated_jump_threshold(n, sigma),
    };
    Ok(apply_diff(f).iter().filter(|d| d.abs() > thr).count())
}

/// Number of edges `P_M` of a lattice with `d` sides of length `side`.
fn edge_count(side: f64, dim: usize) -> f64 {
    dim as f64 * side.powi(dim as i32 - 1) * (side - 1.0)
}

fn resolve_coefficients(dim: usize, coeffs: Option<&GumbelFitCoefficients>) -> Result<GumbelFitCoefficients> {
    match coeffs {
        Some(c) if c.dim == dim => Ok(*c),
        Some(c) => Err(invalid(format!(
            "coefficients fitted for d = {} cannot be used for d = {dim}",
            c.dim
        ))),
        None => GumbelFitCoefficients::builtin(dim).ok_or(Error::UnsupportedDimension(dim)),
    }
}

/// `σ (μ − β log(−log(1 − α)))` with `α = 2/√(log P)` and `μ, β` from the
/// log-log model at lattice side `side`. Returns the threshold and `α`.
fn gumbel_threshold(side: f64, dim: usize, sigma: f64, coeffs: &GumbelFitCoefficients) -> Result<(f64, f64)> {
    let p = edge_count(side, dim);
    let alpha = 2.0 / p.ln().sqrt();
    if !(alpha < 1.0) {
        return Err(invalid(format!("lattice too small: level 2/√log P = {alpha} ≥ 1")));
    }
    let g = coeffs.params_at(side)?;
    Ok((sigma * g.quantile(1.0 - alpha), alpha))
}

/// Universal threshold on a `d ≥ 2` lattice from the Gumbel model of `Λ`.
/// Non-square lattices use the geometric mean side. `coeffs` overrides the
/// shipped table.
pub fn universal_threshold_lattice(
    shape: &LatticeShape,
    sigma: f64,
    coeffs: Option<&GumbelFitCoefficients>,
) -> Result<f64> {
    check_sigma(sigma)?;
    let c = resolve_coefficients(shape.dims(), coeffs)?;
    Ok(gumbel_threshold(shape.mean_side(), shape.dims(), sigma, &c)?.0)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(invalid(format!("alpha must lie in (0, 1/2), got {alpha}")));
    }
    Ok(())
}

/// `σ N_max Φ⁻¹(1 − α/2)`.
pub fn exact_seg_threshold(n_max: usize, sigma: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    check_sigma(sigma)?;
    if n_max == 0 {
        return Err(invalid("longest segment must have length ≥ 1"));
    }
    Ok(sigma * n_max as f64 * normal_quantile(1.0 - alpha / 2.0))
}

/// Minimum jump height `4σ Φ⁻¹(1 − α/2)`.
pub fn h_star(sigma: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    check_sigma(sigma)?;
    Ok(4.0 * sigma * normal_quantile(1.0 - alpha / 2.0))
}

/// Lower bound `(1 − 2α)^{L−2} (1 − α)²` on the exact-segmentation probability.
pub fn pi0_es(levels: usize, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if levels < 2 {
        return Err(invalid("bound defined for L ≥ 2"));
    }
    Ok((1.0 - 2.0 * alpha).powi(levels as i32 - 2) * (1.0 - alpha).powi(2))
}

#[derive(Debug, Clone)]
pub struct AdaptiveFit {
    pub step1: TvSolution,
    pub step2: TvSolution,
    pub report: ThresholdReport,
}

/// Two-step adaptive universal threshold. Without `sigma` the noise level is
/// estimated once from `y`.
pub fn adaptive_tv(
    y: &Signal,
    sigma: Option<f64>,
    cfg: &SolverConfig,
    coeffs: Option<&GumbelFitCoefficients>,
) -> Result<AdaptiveFit> {
    let sigma = match sigma {
        Some(s) => {
            check_sigma(s)?;
            s
        }
        None => estimate_sigma(y),
    };
    let shape = y.shape();
    let dim = shape.dims();
    if !(1..=3).contains(&dim) {
        return Err(Error::UnsupportedDimension(dim));
    }
    let m = shape.len();

    let (lambda1, alpha, c) = if dim == 1 {
        (universal_threshold_1d(m, sigma)?, universal_level_1d(m), None)
    } else {
        let c = resolve_coefficients(dim, coeffs)?;
        let (l, a) = gumbel_threshold(shape.mean_side(), dim, sigma, &c)?;
        (l, a, Some(c))
    };
    let step1 = denoise(y, lambda1, cfg)?;

    let count1 = if dim == 1 {
        count_jumps(&step1.estimate, sigma, JumpCount::Calibrated)? + 1
    } else {
        ncc(&step1.estimate, default_quantization(&step1.estimate))
    };

    let (lambda2, n_bar) = match c {
        None => {
            let n_bar = (m as f64 / count1 as f64).max(MIN_PIECE_1D.min(m as f64));
            (bridge_threshold(n_bar, sigma).min(lambda1), n_bar)
        }
        Some(c) => {
            let raw = (m as f64 / count1 as f64).powf(1.0 / dim as f64);
            let n_bar = raw.max(MIN_FITTED_SIDE.min(shape.mean_side()));
            (gumbel_threshold(n_bar, dim, sigma, &c)?.0.min(lambda1), n_bar)
        }
    };
    let step2 = if lambda2 == lambda1 {
        step1.clone()
    } else {
        denoise(y, lambda2, cfg)?
    };
    Ok(AdaptiveFit {
        step1,
        step2,
        report: ThresholdReport {
            sigma_used: sigma,
            lambda1,
            count1,
            lambda2,
            n_bar,
            alpha,
            method: ThresholdMethod::Adaptive,
        },
    })
}
