//! Solvers for the anisotropic TV problem
//! `min_f ½‖y − f‖² + λ‖Bf‖₁` at a fixed threshold.
//!
//! The dual problem is `min ½‖y − Bᵀw‖²` over `‖w‖∞ ≤ λ`, with `f = y − Bᵀw`
//! at the optimum. For any primal `f` and feasible `w` the duality gap equals
//!
//! ```text
//! Σ_e (λ|(Bf)_e| − w_e (Bf)_e) + ½‖f − (y − Bᵀw)‖²
//! ```
//!
//! which is a sum of non-negative terms and is what every solver here reports.

mod admm;
mod direct;
mod polish;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{adjoint_into, apply_diff, diff_into, Signal};

/// Estimate, dual certificate and diagnostics of one TV solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvSolution {
    pub estimate: Signal,
    pub lambda: f64,
    /// Dual edge variables, `‖dual‖∞ ≤ lambda`.
    pub dual: Vec<f64>,
    /// Duality gap of `(estimate, dual)`.
    pub gap: f64,
    pub iterations: usize,
    /// False when the iteration cap was hit before the gap target.
    pub converged: bool,
    /// Best primal objective seen at each certificate check (non-increasing).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objective_history: Vec<f64>,
}

impl TvSolution {
    pub fn primal_objective(&self, y: &Signal) -> f64 {
        primal_objective(y, &self.estimate, self.lambda)
    }
}

/// Settings of the iterative splitting solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Stop once `gap ≤ gap_tol · (1 + primal objective)`.
    pub gap_tol: f64,
    pub max_iter: usize,
    /// Initial penalty parameter; scaled from λ and the data when `None`.
    pub rho: Option<f64>,
    /// Over-relaxation factor in `(0, 2)`.
    pub relaxation: f64,
    /// Iterations between duality-gap evaluations.
    pub check_every: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            gap_tol: 1e-8,
            max_iter: 5000,
            rho: None,
            relaxation: 1.6,
            check_every: 10,
        }
    }
}

impl SolverConfig {
    pub fn with_gap_tol(mut self, gap_tol: f64) -> Self {
        self.gap_tol = gap_tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.gap_tol > 0.0) {
            return Err(invalid("gap_tol must be positive"));
        }
        if self.max_iter == 0 || self.check_every == 0 {
            return Err(invalid("max_iter and check_every must be positive"));
        }
        if !(self.relaxation > 0.0 && self.relaxation < 2.0) {
            return Err(invalid("relaxation must lie in (0, 2)"));
        }
        Ok(())
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(invalid(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    Ok(())
}

/// `½‖y − f‖² + λ‖Bf‖₁`.
pub fn primal_objective(y: &Signal, f: &Signal, lambda: f64) -> f64 {
    let bf = apply_diff(f);
    primal_objective_raw(y.values(), f.values(), &bf, lambda)
}

pub(crate) fn primal_objective_raw(y: &[f64], f: &[f64], bf: &[f64], lambda: f64) -> f64 {
    let fit: f64 = y.iter().zip(f).map(|(a, b)| (a - b) * (a - b)).sum();
    0.5 * fit + lambda * bf.iter().map(|d| d.abs()).sum::<f64>()
}

/// Duality gap of a primal estimate and a feasible dual vector.
pub fn duality_gap(y: &Signal, f: &Signal, w: &[f64], lambda: f64) -> Result<f64> {
    let shape = y.shape();
    if f.shape() != shape {
        return Err(invalid("estimate and data live on different lattices"));
    }
    if w.len() != shape.num_edges() {
        return Err(Error::LengthMismatch {
            expected: shape.num_edges(),
            actual: w.len(),
        });
    }
    let mut bf = vec![0.0; shape.num_edges()];
    diff_into(shape, f.values(), &mut bf);
    let mut scratch = vec![0.0; shape.len()];
    Ok(gap_terms(y.values(), f.values(), &bf, w, lambda, shape, &mut scratch))
}

pub(crate) fn gap_terms(
    y: &[f64],
    f: &[f64],
    bf: &[f64],
    w: &[f64],
    lambda: f64,
    shape: &crate::grid::LatticeShape,
    scratch: &mut [f64],
) -> f64 {
    let penalty: f64 = bf
        .iter()
        .zip(w)
        .map(|(d, we)| (lambda * d.abs() - we * d).max(0.0))
        .sum();
    adjoint_into(shape, w, scratch);
    let mismatch: f64 = f
        .iter()
        .zip(y.iter().zip(scratch.iter()))
        .map(|(fi, (yi, bw))| {
            let r = fi - (yi - bw);
            r * r
        })
        .sum();
    penalty + 0.5 * mismatch
}

/// Exact 1D solve by the taut-string pass; the dual comes from partial sums.
pub fn tv_denoise_1d(y: &Signal, lambda: f64) -> Result<TvSolution> {
    if y.shape().dims() != 1 {
        return Err(Error::UnsupportedDimension(y.shape().dims()));
    }
    check_lambda(lambda)?;
    let x = direct::taut_string(y.values(), lambda);
    let dual = direct::dual_from_fit(y.values(), &x, lambda);
    let estimate = y.with_values(x)?;
    let gap = duality_gap(y, &estimate, &dual, lambda)?;
    Ok(TvSolution {
        estimate,
        lambda,
        dual,
        gap,
        iterations: 1,
        converged: true,
        objective_history: Vec::new(),
    })
}

/// Iterative splitting solve on any lattice. When the iteration cap is hit the
/// best iterate is returned with `converged == false`.
pub fn tv_denoise(y: &Signal, lambda: f64, cfg: &SolverConfig) -> Result<TvSolution> {
    tv_denoise_from(y, lambda, cfg, None)
}

/// As [`tv_denoise`], starting from `start` instead of `y`.
pub fn tv_denoise_from(
    y: &Signal,
    lambda: f64,
    cfg: &SolverConfig,
    start: Option<&Signal>,
) -> Result<TvSolution> {
    check_lambda(lambda)?;
    cfg.validate()?;
    let p = y.shape().num_edges();
    if lambda == 0.0 || p == 0 {
        return Ok(TvSolution {
            estimate: y.clone(),
            lambda,
            dual: vec![0.0; p],
            gap: 0.0,
            iterations: 0,
            converged: true,
            objective_history: Vec::new(),
        });
    }
    if let Some(s) = start {
        if s.shape() != y.shape() {
            return Err(invalid("starting point lives on a different lattice"));
        }
    }
    Ok(admm::solve(y, lambda, cfg, start.map(|s| s.values())))
}

/// Direct solver in 1D, splitting solver otherwise.
pub fn denoise(y: &Signal, lambda: f64, cfg: &SolverConfig) -> Result<TvSolution> {
    if y.shape().dims() == 1 {
        tv_denoise_1d(y, lambda)
    } else {
        tv_denoise(y, lambda, cfg)
    }
}

/// Smallest λ for which the TV estimate is the constant `ȳ1`.
pub fn lambda_max(y: &Signal) -> Result<f64> {
    crate::lambda::dual_sup_norm(y)
}
