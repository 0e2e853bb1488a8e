//! Jump-set extraction, the KKT checker for a candidate segmentation, and
//! exact-segmentation / screening events.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{apply_diff, Signal};
use crate::selection::{calibrated_jump_threshold, nonzero_tolerance};
use crate::signals::PiecewiseConstantSpec;
use crate::tvsolve::SolverConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JumpRule {
    /// Differences larger than an absolute tolerance.
    Nonzero(f64),
    /// Differences larger than `σ √(2/N) z_{1−0.025/(N−1)}`.
    Calibrated,
}

fn require_line(f: &Signal) -> Result<()> {
    match f.shape().dims() {
        1 => Ok(()),
        d => Err(Error::UnsupportedDimension(d)),
    }
}

/// Jump locations: index `i` means a new level starts at site `i`.
pub fn extract_jumps(f_hat: &Signal, sigma: f64, rule: JumpRule) -> Result<Vec<usize>> {
    require_line(f_hat)?;
    let thr = match rule {
        JumpRule::Nonzero(tol) => tol,
        JumpRule::Calibrated => calibrated_jump_threshold(f_hat.len(), sigma),
    };
    Ok(apply_diff(f_hat)
        .iter()
        .enumerate()
        .filter(|(_, d)| d.abs() > thr)
        .map(|(e, _)| e + 1)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktCertificate {
    pub holds: bool,
    pub h_hat: Vec<f64>,
    /// Signs of the fitted jumps, one per candidate jump.
    pub signs: Vec<i8>,
    pub w: Vec<f64>,
    pub max_abs_w: f64,
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Checks whether the TV fit at `lambda` has exactly the candidate jump set.
///
/// Levels are `ĥ_l = ȳ_l + (s_l − s_{l−1}) λ / N_l` with `s_0 = s_L = 0`, and
/// the signs `s_l` must agree with the ordering of the fitted levels. The
/// dual is the partial-sum vector `w_k = −Σ_{j≤k}(y_j − f̂_j)`; the check
/// passes when every sign is consistent and `‖w‖∞ ≤ λ`.
pub fn kkt_check(y: &Signal, jumps: &[usize], lambda: f64) -> Result<KktCertificate> {
    require_line(y)?;
    if !(lambda >= 0.0) {
        return Err(invalid(format!("lambda must be non-negative, got {lambda}")));
    }
    let n = y.len();
    let mut bounds = Vec::with_capacity(jumps.len() + 2);
    bounds.push(0);
    for &j in jumps {
        if j == 0 || j >= n || j <= *bounds.last().unwrap() {
            return Err(invalid(format!("jump locations must be increasing within 1..{}", n - 1)));
        }
        bounds.push(j);
    }
    bounds.push(n);
    let yv = y.values();
    let levels = bounds.len() - 1;
    let sizes: Vec<f64> = bounds.windows(2).map(|b| (b[1] - b[0]) as f64).collect();
    let means: Vec<f64> = bounds
        .windows(2)
        .map(|b| yv[b[0]..b[1]].iter().sum::<f64>() / (b[1] - b[0]) as f64)
        .collect();

    let levels_for = |s: &[i8]| -> Vec<f64> {
        (0..levels)
            .map(|l| {
                let right = if l + 1 < levels { s[l] as f64 } else { 0.0 };
                let left = if l > 0 { s[l - 1] as f64 } else { 0.0 };
                means[l] + (right - left) * lambda / sizes[l]
            })
            .collect()
    };
    let signs_of = |h: &[f64]| -> Vec<i8> { h.windows(2).map(|p| sign(p[1] - p[0])).collect() };

    let mut s = signs_of(&means);
    let mut h = levels_for(&s);
    let mut consistent = false;
    for _ in 0..=levels {
        let next = signs_of(&h);
        if next == s {
            consistent = true;
            break;
        }
        s = next;
        h = levels_for(&s);
    }
    consistent &= s.iter().all(|&v| v != 0);

    let mut w = Vec::with_capacity(n.saturating_sub(1));
    let mut acc = 0.0;
    for l in 0..levels {
        for &v in &yv[bounds[l]..bounds[l + 1]] {
            acc -= v - h[l];
            w.push(acc);
        }
    }
    w.truncate(n.saturating_sub(1));
    let max_abs_w = w.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let scale = yv.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    let feasible = max_abs_w <= lambda * (1.0 + 1e-10) + 1e-12 * scale * n as f64;
    Ok(KktCertificate {
        holds: consistent && feasible,
        h_hat: h,
        signs: s,
        w,
        max_abs_w,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationOutcome {
    pub jumps_estimated: Vec<usize>,
    pub jumps_true: Vec<usize>,
    pub exact: bool,
    pub screening: bool,
    /// `max |w|` of the dual built on the true jump set, when data and λ are known.
    pub kkt_max_dual: Option<f64>,
}

impl SegmentationOutcome {
    /// Fills in the dual sup-norm of the KKT construction on the true jumps.
    pub fn with_kkt(mut self, y: &Signal, lambda: f64) -> Result<Self> {
        self.kkt_max_dual = Some(kkt_check(y, &self.jumps_true, lambda)?.max_abs_w);
        Ok(self)
    }
}

/// Compares the jump set of `f_hat` with the true one by exact index equality.
/// Jumps are differences above `10 √gap_tol · σ`.
pub fn evaluate_outcome(f_hat: &Signal, truth: &PiecewiseConstantSpec, sigma: f64) -> Result<SegmentationOutcome> {
    let tol = nonzero_tolerance(sigma, &SolverConfig::default());
    let jumps_estimated = extract_jumps(f_hat, sigma, JumpRule::Nonzero(tol))?;
    let jumps_true = truth.jump_locations();
    let exact = jumps_estimated == jumps_true;
    let screening = jumps_true.iter().all(|j| jumps_estimated.binary_search(j).is_ok());
    Ok(SegmentationOutcome {
        jumps_estimated,
        jumps_true,
        exact,
        screening,
        kkt_max_dual: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lambda::sample_lambda_1d;
    use crate::selection::{exact_seg_threshold, h_star};
    use crate::signals::{add_noise, gen_piecewise, NoiseSpec, PiecewiseKind};
    use crate::tvsolve::tv_denoise_1d;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn jumps_of_simple_signals() {
        let c = Signal::from_vec(vec![1.0; 30]).unwrap();
        assert!(extract_jumps(&c, 1.0, JumpRule::Calibrated).unwrap().is_empty());
        let b = gen_piecewise(PiecewiseKind::Battlements, 100, 5, 8.0).unwrap().realize();
        assert_eq!(extract_jumps(&b, 1.0, JumpRule::Nonzero(1e-9)).unwrap(), vec![20, 40, 60, 80]);
    }

    #[test]
    fn single_level_reduces_to_dual_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let y: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y = Signal::from_vec(y).unwrap();
            let lam = sample_lambda_1d(&y).unwrap();
            let lo = kkt_check(&y, &[], lam * 0.99).unwrap();
            let hi = kkt_check(&y, &[], lam * 1.01).unwrap();
            assert!(!lo.holds && hi.holds);
            assert!((hi.h_hat[0] - y.mean()).abs() < 1e-15);
        }
    }

    #[test]
    fn noiseless_battlements_at_es_threshold() {
        let h = 2.0 * h_star(1.0, 0.05).unwrap();
        let spec = gen_piecewise(PiecewiseKind::Battlements, 100, 5, h).unwrap();
        let lam = exact_seg_threshold(spec.max_length(), 1.0, 0.05).unwrap();
        let cert = kkt_check(&spec.realize(), &spec.jump_locations(), lam).unwrap();
        assert!(cert.holds);
    }

    #[test]
    fn dual_at_segment_ends() {
        let spec = gen_piecewise(PiecewiseKind::Battlements, 60, 4, 20.0).unwrap();
        let y = add_noise(&spec.realize(), NoiseSpec::new(1.0, 3)).unwrap();
        let lam = 12.0;
        let cert = kkt_check(&y, &spec.jump_locations(), lam).unwrap();
        for (k, &j) in spec.jump_locations().iter().enumerate() {
            assert!((cert.w[j - 1] - lam * cert.signs[k] as f64).abs() < 1e-10);
        }
    }

    #[test]
    fn staircase_rarely_segments() {
        let h = 2.0 * h_star(1.0, 0.05).unwrap();
        let spec = gen_piecewise(PiecewiseKind::Staircase, 100, 5, h).unwrap();
        let lam = exact_seg_threshold(spec.max_length(), 1.0, 0.05).unwrap();
        let holds = (0..100)
            .filter(|&s| {
                let y = add_noise(&spec.realize(), NoiseSpec::new(1.0, s)).unwrap();
                kkt_check(&y, &spec.jump_locations(), lam).unwrap().holds
            })
            .count();
        assert_eq!(holds, 0);
    }

    #[test]
    fn checker_agrees_with_solver() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut checked = 0;
        for _ in 0..400 {
            let n = rng.random_range(2..200);
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let y = Signal::from_vec(y).unwrap();
            let lam = rng.random_range(0.05..4.0);
            let fit = tv_denoise_1d(&y, lam).unwrap();
            let jumps = extract_jumps(&fit.estimate, 1.0, JumpRule::Nonzero(0.0)).unwrap();
            let cert = kkt_check(&y, &jumps, lam).unwrap();
            assert!(cert.holds, "solver jump set rejected at n={n}");
            let err = cert
                .h_hat
                .iter()
                .zip(jumps.iter().copied().chain(std::iter::once(n)).scan(0, |s, e| {
                    let start = *s;
                    *s = e;
                    Some(start)
                }))
                .map(|(h, start)| (h - fit.estimate.values()[start]).abs())
                .fold(0.0f64, f64::max);
            assert!(err < 1e-8);
            checked += 1;
        }
        assert_eq!(checked, 400);
    }

    #[test]
    fn checker_rejects_wrong_partitions() {
        let y = Signal::from_vec(vec![0.0; 5]).unwrap();
        assert!(kkt_check(&y, &[0], 1.0).is_err());
        assert!(kkt_check(&y, &[3, 2], 1.0).is_err());
        assert!(kkt_check(&y, &[5], 1.0).is_err());
        assert!(!kkt_check(&y, &[2], 1.0).unwrap().holds);
    }

    #[test]
    fn outcome_events() {
        let spec = gen_piecewise(PiecewiseKind::Battlements, 100, 5, 5.0).unwrap();
        let o = evaluate_outcome(&spec.realize(), &spec, 1.0).unwrap();
        assert!(o.exact && o.screening);
        let flat = Signal::from_vec(vec![0.0; 100]).unwrap();
        let o = evaluate_outcome(&flat, &spec, 1.0).unwrap();
        assert!(!o.exact && !o.screening);
        let y = add_noise(&spec.realize(), NoiseSpec::new(1.0, 2)).unwrap();
        let o = evaluate_outcome(&tv_denoise_1d(&y, 2.0).unwrap().estimate, &spec, 1.0).unwrap();
        assert!(!o.exact || o.screening);
        let o = o.with_kkt(&y, 2.0).unwrap();
        assert!(o.kkt_max_dual.is_some());
    }
}
