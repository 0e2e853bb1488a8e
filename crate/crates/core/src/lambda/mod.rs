//! The dual sup-norm statistic
//! `Λ(y) = min ‖w‖∞ s.t. y − Bᵀw = ȳ1`, its Monte Carlo distribution under
//! white noise, and extreme-value models of that distribution.
//!
//! `Λ(y)` is the smallest threshold at which the TV estimate collapses to the
//! constant `ȳ1`. In 1D the constraint has the unique solution
//! `w_k = −Σ_{j≤k}(y_j − ȳ)`; on larger lattices the minimum is computed
//! exactly by a parametric min-cut, with a splitting solver as a second route.

mod evd;
mod maxflow;
mod regression;
mod splitting;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use evd::{fit_gev_and_lr_test, fit_gumbel, qq_pairs, GevParams, GevTest, GumbelParams};
pub use regression::{fit_loglog_regression, GumbelFitCoefficients, LambdaFitFile};

use crate::error::{invalid, Error, Result};
use crate::grid::{adjoint_into, norm2, LatticeShape, Signal};
use crate::signals::white_noise;
use crate::stats::correlation;

/// Minimizer of the sup-norm problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSample {
    pub lambda: f64,
    /// A dual vector attaining `lambda`; not unique when `d ≥ 2`.
    pub w: Vec<f64>,
    /// Cut rounds (exact route) or iterations (splitting route).
    pub iterations: usize,
}

/// Route for the sup-norm minimization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LambdaMethod {
    /// Parametric min-cut; exact up to rounding.
    #[default]
    Cut,
    /// Douglas–Rachford splitting with Laplacian projections.
    Splitting,
}

fn centered(y: &Signal) -> Vec<f64> {
    let m = y.mean();
    y.values().iter().map(|v| v - m).collect()
}

/// Closed form in 1D: `max_k |Σ_{j≤k}(y_j − ȳ)|`.
pub fn sample_lambda_1d(y: &Signal) -> Result<f64> {
    if y.shape().dims() != 1 {
        return Err(Error::UnsupportedDimension(y.shape().dims()));
    }
    let c = centered(y);
    let mut acc = 0.0f64;
    let mut best = 0.0f64;
    for v in &c[..c.len().saturating_sub(1)] {
        acc += v;
        best = best.max(acc.abs());
    }
    Ok(best)
}

fn partial_sum_dual(c: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    c[..c.len().saturating_sub(1)]
        .iter()
        .map(|v| {
            acc -= v;
            acc
        })
        .collect()
}

fn constraint_residual(shape: &LatticeShape, w: &[f64], c: &[f64]) -> f64 {
    let mut bt = vec![0.0; shape.len()];
    adjoint_into(shape, w, &mut bt);
    norm2(&bt.iter().zip(c).map(|(a, b)| a - b).collect::<Vec<_>>())
}

/// `Λ(y)` with a minimizing dual vector: the closed form in 1D, the exact cut
/// route otherwise. The constraint residual `‖Bᵀw − (y − ȳ1)‖` is at most
/// `tol · ‖y − ȳ1‖`.
pub fn sample_lambda(y: &Signal, tol: f64) -> Result<LambdaSample> {
    if y.shape().dims() == 1 {
        if !(tol > 0.0) {
            return Err(invalid("tolerance must be positive"));
        }
        let w = partial_sum_dual(&centered(y));
        let lambda = w.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        return Ok(LambdaSample {
            lambda,
            w,
            iterations: 1,
        });
    }
    sample_lambda_with(y, tol, LambdaMethod::Cut, 0)
}

/// `Λ(y)` by the chosen route, in any dimension. `max_iter` only applies to
/// the splitting route.
pub fn sample_lambda_with(y: &Signal, tol: f64, method: LambdaMethod, max_iter: usize) -> Result<LambdaSample> {
    if !(tol > 0.0) {
        return Err(invalid("tolerance must be positive"));
    }
    let shape = y.shape();
    let c = centered(y);
    let sample = match method {
        LambdaMethod::Cut => {
            let sol = maxflow::min_sup_norm(shape, &c);
            LambdaSample {
                lambda: sol.lambda,
                w: sol.w,
                iterations: sol.cut_rounds,
            }
        }
        LambdaMethod::Splitting => {
            let sol = splitting::min_sup_norm(shape, &c, tol, max_iter)?;
            LambdaSample {
                lambda: sol.lambda,
                w: sol.w,
                iterations: sol.iterations,
            }
        }
    };
    let residual = constraint_residual(shape, &sample.w, &c);
    let c_norm = norm2(&c);
    if residual > tol * c_norm {
        return Err(Error::NotConverged {
            method: "sup-norm minimization",
            iterations: sample.iterations,
            residual: residual / c_norm,
        });
    }
    Ok(sample)
}

/// `Λ(y)` alone; 1D uses the closed form.
pub fn dual_sup_norm(y: &Signal) -> Result<f64> {
    if y.shape().dims() == 1 {
        return sample_lambda_1d(y);
    }
    Ok(maxflow::min_sup_norm(y.shape(), &centered(y)).lambda)
}

/// `reps` draws of `Λ` under standard normal noise; replicate `r` uses seed
/// `seed + r`, so results do not depend on scheduling.
pub fn monte_carlo_lambda(shape: &LatticeShape, reps: usize, seed: u64) -> Result<Vec<f64>> {
    if reps == 0 {
        return Err(invalid("need at least one replicate"));
    }
    (0..reps)
        .into_par_iter()
        .map(|r| dual_sup_norm(&white_noise(shape, seed.wrapping_add(r as u64))))
        .collect()
}

/// Extreme-value summary of `Λ` at one lattice size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeStudy {
    pub side: usize,
    pub dim: usize,
    pub samples: Vec<f64>,
    pub gumbel: GumbelParams,
    pub gev: GevParams,
    pub lr_p_value: f64,
    /// Correlation between empirical and fitted Gumbel quantiles.
    pub qq_correlation: f64,
}

/// Samples `Λ` on a `side^dim` lattice and fits Gumbel and GEV models.
pub fn study_size(side: usize, dim: usize, reps: usize, seed: u64) -> Result<SizeStudy> {
    let shape = LatticeShape::cube(side, dim)?;
    let samples = monte_carlo_lambda(&shape, reps, seed)?;
    let test = fit_gev_and_lr_test(&samples)?;
    let qq = qq_pairs(&samples, &test.gumbel);
    let (emp, fit): (Vec<f64>, Vec<f64>) = qq.into_iter().unzip();
    Ok(SizeStudy {
        side,
        dim,
        samples,
        gumbel: test.gumbel,
        gev: test.gev,
        lr_p_value: test.p_value,
        qq_correlation: correlation(&emp, &fit),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sig(v: &[f64]) -> Signal {
        Signal::from_vec(v.to_vec()).unwrap()
    }

    #[test]
    fn closed_form_examples() {
        assert_eq!(sample_lambda_1d(&sig(&[2.0, 2.0, 2.0])).unwrap(), 0.0);
        assert_eq!(sample_lambda_1d(&sig(&[1.0, -1.0])).unwrap(), 1.0);
        assert!((sample_lambda_1d(&sig(&[0.0, 0.0, 3.0])).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn cut_route_on_a_line_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let n = rng.random_range(2..200);
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y = sig(&y);
            let exact = sample_lambda_1d(&y).unwrap();
            let cut = sample_lambda_with(&y, 1e-9, LambdaMethod::Cut, 0).unwrap().lambda;
            assert!((exact - cut).abs() <= 1e-9 * (1.0 + exact), "{exact} vs {cut}");
        }
    }

    #[test]
    fn splitting_agrees_with_cut() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for sizes in [vec![9], vec![2, 2], vec![3, 2], vec![4, 4], vec![3, 3, 2]] {
            let shape = LatticeShape::new(sizes).unwrap();
            let y = Signal::new(shape.clone(), (0..shape.len()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            let cut = sample_lambda(&y, 1e-8).unwrap();
            let split = sample_lambda_with(&y, 1e-7, LambdaMethod::Splitting, 200_000).unwrap();
            assert!((cut.lambda - split.lambda).abs() <= 1e-4 * (1.0 + cut.lambda), "{} vs {}", cut.lambda, split.lambda);
        }
    }

    #[test]
    fn cut_dual_is_feasible() {
        let shape = LatticeShape::new(vec![7, 5]).unwrap();
        let y = white_noise(&shape, 4);
        let s = sample_lambda(&y, 1e-9).unwrap();
        assert!(s.w.iter().all(|v| v.abs() <= s.lambda * (1.0 + 1e-12)));
        let attained = s.w.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!((attained - s.lambda).abs() <= 1e-9 * s.lambda);
    }

    #[test]
    fn monte_carlo_is_deterministic() {
        let shape = LatticeShape::new(vec![6, 6]).unwrap();
        assert!(monte_carlo_lambda(&shape, 0, 1).is_err());
        let a = monte_carlo_lambda(&shape, 8, 11).unwrap();
        let b = monte_carlo_lambda(&shape, 8, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn one_d_quantile_below_brownian_bridge_bound() {
        let n = 1000;
        let shape = LatticeShape::line(n).unwrap();
        let mut draws = monte_carlo_lambda(&shape, 500, 99).unwrap();
        draws.sort_by(f64::total_cmp);
        let nf = n as f64;
        let alpha = 2.0 / nf.ln().sqrt();
        let idx = (((1.0 - alpha) * draws.len() as f64).ceil() as usize).min(draws.len()) - 1;
        let bound = 0.5 * (nf * nf.ln().ln()).sqrt();
        assert!(draws[idx] < bound, "{} vs {bound}", draws[idx]);
    }

    proptest::proptest! {
        #[test]
        fn scale_and_shift(w in 2usize..6, h in 2usize..5, seed in 0u64..1000, c in -4.0f64..4.0, t in -10.0f64..10.0) {
            let shape = LatticeShape::new(vec![w, h]).unwrap();
            let y = white_noise(&shape, seed);
            let base = sample_lambda(&y, 1e-9).unwrap().lambda;
            let scaled = y.with_values(y.values().iter().map(|v| c * v).collect()).unwrap();
            let shifted = y.with_values(y.values().iter().map(|v| v + t).collect()).unwrap();
            let ls = sample_lambda(&scaled, 1e-9).unwrap().lambda;
            let lt = sample_lambda(&shifted, 1e-9).unwrap().lambda;
            proptest::prop_assert!((ls - c.abs() * base).abs() <= 1e-9 * (1.0 + ls));
            proptest::prop_assert!((lt - base).abs() <= 1e-9 * (1.0 + base + t.abs()));
        }
    }
}
