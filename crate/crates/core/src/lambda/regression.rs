//! Log-log model of the Gumbel parameters across lattice sizes:
//! `log μ(N) = a_μ + b_μ log log N` and `log β(N) = a_β + b_β log log N`.

use serde::{Deserialize, Serialize};

use super::evd::GumbelParams;
use crate::error::{invalid, Error, Result};

const BUILTIN: &str = include_str!("../../data/gumbel_coefficients.json");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GumbelFitCoefficients {
    pub dim: usize,
    pub a_mu: f64,
    pub b_mu: f64,
    pub a_beta: f64,
    pub b_beta: f64,
}

#[derive(Deserialize)]
struct BuiltinEntry {
    dim: usize,
    a_mu: f64,
    b_mu: f64,
    a_beta: f64,
    b_beta: f64,
}

impl GumbelFitCoefficients {
    /// Shipped coefficients for square lattices in two and three dimensions.
    pub fn builtin(dim: usize) -> Option<Self> {
        let entries: Vec<BuiltinEntry> =
            serde_json::from_str(BUILTIN).expect("embedded coefficient table parses");
        entries.into_iter().find(|e| e.dim == dim).map(|e| Self {
            dim: e.dim,
            a_mu: e.a_mu,
            b_mu: e.b_mu,
            a_beta: e.a_beta,
            b_beta: e.b_beta,
        })
    }

    pub fn mu_at(&self, side: f64) -> f64 {
        (self.a_mu + self.b_mu * side.ln().ln()).exp()
    }

    pub fn beta_at(&self, side: f64) -> f64 {
        (self.a_beta + self.b_beta * side.ln().ln()).exp()
    }

    /// Gumbel model of `Λ` on an `side^d` lattice at unit noise level.
    pub fn params_at(&self, side: f64) -> Result<GumbelParams> {
        if !(side > 1.0) {
            return Err(invalid(format!("lattice side must exceed 1, got {side}")));
        }
        GumbelParams::new(self.mu_at(side), self.beta_at(side))
    }
}

fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (my - slope * mx, slope)
}

/// Least-squares fit of `log μ̂` and `log β̂` on `log log N`.
pub fn fit_loglog_regression(fits: &[(usize, GumbelParams)], dim: usize) -> Result<GumbelFitCoefficients> {
    let mut sizes: Vec<usize> = fits.iter().map(|(n, _)| *n).collect();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() < 2 {
        return Err(invalid("need fits at two or more distinct lattice sizes"));
    }
    if let Some((n, _)) = fits.iter().find(|(n, _)| *n < 2) {
        return Err(invalid(format!("log log N undefined for N = {n}")));
    }
    if fits.iter().any(|(_, p)| !(p.mu > 0.0)) {
        return Err(Error::DegenerateSample("log-log model needs positive locations".into()));
    }
    let x: Vec<f64> = fits.iter().map(|(n, _)| (*n as f64).ln().ln()).collect();
    let log_mu: Vec<f64> = fits.iter().map(|(_, p)| p.mu.ln()).collect();
    let log_beta: Vec<f64> = fits.iter().map(|(_, p)| p.beta.ln()).collect();
    let (a_mu, b_mu) = least_squares(&x, &log_mu);
    let (a_beta, b_beta) = least_squares(&x, &log_beta);
    Ok(GumbelFitCoefficients {
        dim,
        a_mu,
        b_mu,
        a_beta,
        b_beta,
    })
}

/// On-disk record of a Λ fitting run; also accepted as a coefficient source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaFitFile {
    pub dim: usize,
    pub n_values: Vec<usize>,
    pub mu: Vec<f64>,
    pub beta: Vec<f64>,
    pub a_mu: f64,
    pub b_mu: f64,
    pub a_beta: f64,
    pub b_beta: f64,
    pub reps: usize,
    pub seed: u64,
}

impl LambdaFitFile {
    pub fn coefficients(&self) -> GumbelFitCoefficients {
        GumbelFitCoefficients {
            dim: self.dim,
            a_mu: self.a_mu,
            b_mu: self.b_mu,
            a_beta: self.a_beta,
            b_beta: self.b_beta,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_table() {
        let c2 = GumbelFitCoefficients::builtin(2).unwrap();
        assert_eq!((c2.a_mu, c2.b_mu, c2.a_beta, c2.b_beta), (-0.395, 0.552, -1.512, -0.247));
        let c3 = GumbelFitCoefficients::builtin(3).unwrap();
        assert_eq!((c3.a_mu, c3.b_mu, c3.a_beta, c3.b_beta), (-0.523, 0.267, -2.008, -0.598));
        assert!(GumbelFitCoefficients::builtin(4).is_none());
    }

    #[test]
    fn exact_linear_inputs() {
        let truth = GumbelFitCoefficients {
            dim: 2,
            a_mu: -0.3,
            b_mu: 0.6,
            a_beta: -1.4,
            b_beta: -0.2,
        };
        let fits: Vec<(usize, GumbelParams)> = [8usize, 16, 32, 64, 128]
            .iter()
            .map(|&n| (n, truth.params_at(n as f64).unwrap()))
            .collect();
        let got = fit_loglog_regression(&fits, 2).unwrap();
        assert!((got.a_mu - truth.a_mu).abs() < 1e-12);
        assert!((got.b_mu - truth.b_mu).abs() < 1e-12);
        assert!((got.a_beta - truth.a_beta).abs() < 1e-12);
        assert!((got.b_beta - truth.b_beta).abs() < 1e-12);
    }

    #[test]
    fn needs_two_sizes() {
        let p = GumbelParams::new(1.0, 0.1).unwrap();
        assert!(fit_loglog_regression(&[(8, p), (8, p)], 2).is_err());
    }
}
