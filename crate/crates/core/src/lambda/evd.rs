//! Gumbel and generalized extreme value models with maximum-likelihood fits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{chi2_sf, mean, sample_sd};

/// Gumbel law with distribution function `exp(−exp(−(x − mu)/beta))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GumbelParams {
    pub mu: f64,
    pub beta: f64,
}

impl GumbelParams {
    pub fn new(mu: f64, beta: f64) -> Result<Self> {
        if !(beta > 0.0) || !mu.is_finite() || !beta.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "Gumbel needs finite mu and beta > 0, got ({mu}, {beta})"
            )));
        }
        Ok(Self { mu, beta })
    }

    pub fn cdf(&self, x: f64) -> f64 {
        (-(-(x - self.mu) / self.beta).exp()).exp()
    }

    /// `F⁻¹(p) = mu − beta · log(−log p)`.
    pub fn quantile(&self, p: f64) -> f64 {
        self.mu - self.beta * (-p.ln()).ln()
    }

    pub fn log_likelihood(&self, samples: &[f64]) -> f64 {
        let n = samples.len() as f64;
        let s: f64 = samples
            .iter()
            .map(|&x| {
                let z = (x - self.mu) / self.beta;
                z + (-z).exp()
            })
            .sum();
        -n * self.beta.ln() - s
    }
}

/// Generalized extreme value law; `xi == 0` is the Gumbel case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GevParams {
    pub mu: f64,
    pub scale: f64,
    pub xi: f64,
}

/// Below this `|xi|` the Gumbel limit is used.
const XI_ZERO: f64 = 1e-9;
/// Shape parameter is restricted to `(−XI_BOUND, XI_BOUND)`.
const XI_BOUND: f64 = 0.5;

impl GevParams {
    pub fn log_likelihood(&self, samples: &[f64]) -> f64 {
        if !(self.scale > 0.0) {
            return f64::NEG_INFINITY;
        }
        if self.xi.abs() < XI_ZERO {
            return GumbelParams {
                mu: self.mu,
                beta: self.scale,
            }
            .log_likelihood(samples);
        }
        let n = samples.len() as f64;
        let inv = 1.0 / self.xi;
        let mut acc = -n * self.scale.ln();
        for &x in samples {
            let t = 1.0 + self.xi * (x - self.mu) / self.scale;
            if t <= 0.0 {
                return f64::NEG_INFINITY;
            }
            let lt = t.ln();
            acc -= (1.0 + inv) * lt + (-inv * lt).exp();
        }
        acc
    }

    pub fn quantile(&self, p: f64) -> f64 {
        let y = -p.ln();
        if self.xi.abs() < XI_ZERO {
            self.mu - self.scale * y.ln()
        } else {
            self.mu + self.scale * (y.powf(-self.xi) - 1.0) / self.xi
        }
    }
}

fn check_sample(samples: &[f64], min: usize) -> Result<()> {
    if samples.len() < min {
        return Err(Error::DegenerateSample(format!(
            "need at least {min} samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::DegenerateSample("non-finite sample".into()));
    }
    let first = samples[0];
    if samples.iter().all(|&x| x == first) {
        return Err(Error::DegenerateSample("all samples are equal".into()));
    }
    Ok(())
}

/// Profile score for the Gumbel scale: zero at the MLE, increasing in `beta`.
fn beta_score(samples: &[f64], xmin: f64, xbar: f64, beta: f64) -> f64 {
    let (mut sw, mut swx) = (0.0, 0.0);
    for &x in samples {
        let d = x - xmin;
        let wgt = (-d / beta).exp();
        sw += wgt;
        swx += wgt * d;
    }
    beta - (xbar - xmin) + swx / sw
}

/// Maximum-likelihood Gumbel fit.
///
/// The scale solves `β = x̄ − Σ x e^{−x/β} / Σ e^{−x/β}` (bracketed bisection);
/// the location follows as `μ = −β log(n⁻¹ Σ e^{−x/β})`.
pub fn fit_gumbel(samples: &[f64]) -> Result<GumbelParams> {
    check_sample(samples, 10)?;
    let xmin = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let xbar = mean(samples);
    let sd = sample_sd(samples);
    let mut lo = sd * 1e-6;
    let mut hi = sd;
    while beta_score(samples, xmin, xbar, lo) > 0.0 {
        lo *= 0.5;
        if lo < f64::MIN_POSITIVE * 1e10 {
            return Err(Error::DegenerateSample("cannot bracket Gumbel scale".into()));
        }
    }
    while beta_score(samples, xmin, xbar, hi) < 0.0 {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::DegenerateSample("cannot bracket Gumbel scale".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if beta_score(samples, xmin, xbar, mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let beta = 0.5 * (lo + hi);
    let n = samples.len() as f64;
    let s: f64 = samples.iter().map(|&x| (-(x - xmin) / beta).exp()).sum();
    let mu = xmin - beta * (s / n).ln();
    GumbelParams::new(mu, beta)
}

/// Outcome of the Gumbel-versus-GEV likelihood ratio test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GevTest {
    pub gumbel: GumbelParams,
    pub gev: GevParams,
    pub loglik_gumbel: f64,
    pub loglik_gev: f64,
    /// `2 (ℓ_GEV − ℓ_Gumbel)`.
    pub statistic: f64,
    pub p_value: f64,
}

fn gev_from_theta(theta: &[f64; 3]) -> GevParams {
    GevParams {
        mu: theta[0],
        scale: theta[1].exp(),
        xi: XI_BOUND * theta[2].tanh(),
    }
}

fn neg_ll(samples: &[f64], theta: &[f64; 3]) -> f64 {
    let ll = gev_from_theta(theta).log_likelihood(samples);
    if ll.is_finite() {
        -ll
    } else {
        f64::INFINITY
    }
}

fn num_grad(samples: &[f64], theta: &[f64; 3], f0: f64) -> [f64; 3] {
    let mut g = [0.0; 3];
    for k in 0..3 {
        let h = 1e-6 * (1.0 + theta[k].abs());
        let mut tp = *theta;
        let mut tm = *theta;
        tp[k] += h;
        tm[k] -= h;
        let fp = neg_ll(samples, &tp);
        let fm = neg_ll(samples, &tm);
        g[k] = if fp.is_finite() && fm.is_finite() {
            (fp - fm) / (2.0 * h)
        } else if fp.is_finite() {
            (fp - f0) / h
        } else if fm.is_finite() {
            (f0 - fm) / h
        } else {
            0.0
        };
    }
    g
}

/// Quasi-Newton (BFGS) maximization of the GEV likelihood over
/// `(μ, log σ, atanh(2ξ))`, started from the Gumbel fit.
fn fit_gev_from(samples: &[f64], start: GumbelParams) -> Result<GevParams> {
    let mut theta = [start.mu, start.beta.ln(), 0.0];
    let mut f = neg_ll(samples, &theta);
    if !f.is_finite() {
        return Err(Error::NotConverged {
            method: "GEV maximum likelihood",
            iterations: 0,
            residual: f64::INFINITY,
        });
    }
    let mut g = num_grad(samples, &theta, f);
    let mut h_inv = [[0.0; 3]; 3];
    for (k, row) in h_inv.iter_mut().enumerate() {
        row[k] = 1.0 / (samples.len() as f64);
    }
    for _ in 0..500 {
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm < 1e-9 * samples.len() as f64 {
            break;
        }
        let mut dir = [0.0; 3];
        for i in 0..3 {
            dir[i] = -(0..3).map(|j| h_inv[i][j] * g[j]).sum::<f64>();
        }
        let slope: f64 = dir.iter().zip(&g).map(|(d, gi)| d * gi).sum();
        if slope >= 0.0 {
            // Lost descent: restart from steepest descent.
            h_inv = [[0.0; 3]; 3];
            for (k, row) in h_inv.iter_mut().enumerate() {
                row[k] = 1.0 / (samples.len() as f64);
            }
            for i in 0..3 {
                dir[i] = -h_inv[i][i] * g[i];
            }
        }
        let slope: f64 = dir.iter().zip(&g).map(|(d, gi)| d * gi).sum();
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = [
                theta[0] + step * dir[0],
                theta[1] + step * dir[1],
                theta[2] + step * dir[2],
            ];
            let fc = neg_ll(samples, &cand);
            if fc.is_finite() && fc <= f + 1e-4 * step * slope {
                accepted = Some((cand, fc));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, fc)) = accepted else { break };
        let gc = num_grad(samples, &cand, fc);
        let s = [cand[0] - theta[0], cand[1] - theta[1], cand[2] - theta[2]];
        let yv = [gc[0] - g[0], gc[1] - g[1], gc[2] - g[2]];
        let sy: f64 = s.iter().zip(&yv).map(|(a, b)| a * b).sum();
        let improvement = f - fc;
        theta = cand;
        f = fc;
        g = gc;
        if sy > 1e-12 {
            // BFGS inverse-Hessian update.
            let mut hy = [0.0; 3];
            for i in 0..3 {
                hy[i] = (0..3).map(|j| h_inv[i][j] * yv[j]).sum();
            }
            let yhy: f64 = yv.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for i in 0..3 {
                for j in 0..3 {
                    h_inv[i][j] += (sy + yhy) * s[i] * s[j] / (sy * sy)
                        - (hy[i] * s[j] + s[i] * hy[j]) / sy;
                }
            }
        }
        if improvement.abs() < 1e-13 * (1.0 + f.abs()) {
            break;
        }
    }
    Ok(gev_from_theta(&theta))
}

/// GEV fit and likelihood-ratio test of the Gumbel sub-model (one degree of freedom).
pub fn fit_gev_and_lr_test(samples: &[f64]) -> Result<GevTest> {
    check_sample(samples, 30)?;
    let gumbel = fit_gumbel(samples)?;
    let gev = fit_gev_from(samples, gumbel)?;
    let loglik_gumbel = gumbel.log_likelihood(samples);
    let loglik_gev = gev.log_likelihood(samples).max(loglik_gumbel);
    let statistic = (2.0 * (loglik_gev - loglik_gumbel)).max(0.0);
    Ok(GevTest {
        gumbel,
        gev,
        loglik_gumbel,
        loglik_gev,
        statistic,
        p_value: chi2_sf(statistic, 1.0).clamp(0.0, 1.0),
    })
}

/// Empirical quantiles against the fitted Gumbel quantiles at plotting
/// positions `(i − ½)/n`.
pub fn qq_pairs(samples: &[f64], fit: &GumbelParams) -> Vec<(f64, f64)> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| (x, fit.quantile((i as f64 + 0.5) / n)))
        .collect()
}
