//! Risk functionals: connected components, SURE, oracle loss and λ-grid search.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::{check_same_shape, Signal};
use crate::tvsolve::{denoise, SolverConfig, TvSolution};

struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[x] != root {
            let next = self.parent[x];
            self.parent[x] = root;
            x = next;
        }
        root
    }

    /// Keeps the smaller index as the root.
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra < rb {
            self.parent[rb] = ra;
        } else if rb < ra {
            self.parent[ra] = rb;
        }
    }
}

/// Component label of every site; each component is labelled by its
/// smallest site index. Neighbours are joined when `|f_i − f_j| ≤ quantization`.
pub fn component_labels(f: &Signal, quantization: f64) -> Vec<usize> {
    let v = f.values();
    let mut sets = DisjointSets::new(v.len());
    f.shape().for_each_edge(|_, near, far| {
        if (v[far] - v[near]).abs() <= quantization {
            sets.union(near, far);
        }
    });
    (0..v.len()).map(|i| sets.find(i)).collect()
}

/// Number of connected components of the piecewise constant structure of `f`.
pub fn ncc(f: &Signal, quantization: f64) -> usize {
    component_labels(f, quantization)
        .iter()
        .enumerate()
        .filter(|(i, l)| i == *l)
        .count()
}

/// `max(1e-8, 1e-5 · (max f − min f))`.
pub fn default_quantization(f: &Signal) -> f64 {
    (1e-5 * f.range()).max(1e-8)
}

/// `‖y − f̂‖²/M + 2σ² NCC(f̂)/M − σ²`.
pub fn sure(y: &Signal, f_hat: &Signal, sigma: f64, quantization: f64) -> Result<f64> {
    check_same_shape(y, f_hat)?;
    let m = y.len() as f64;
    let rss: f64 = y
        .values()
        .iter()
        .zip(f_hat.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let s2 = sigma * sigma;
    Ok(rss / m + 2.0 * s2 * ncc(f_hat, quantization) as f64 / m - s2)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Criterion {
    /// SURE at a known noise level.
    Sure(f64),
    /// Mean squared error against the true signal.
    Oracle(Signal),
}

impl Criterion {
    pub fn evaluate(&self, y: &Signal, fit: &TvSolution) -> Result<f64> {
        match self {
            Criterion::Sure(sigma) => sure(y, &fit.estimate, *sigma, default_quantization(&fit.estimate)),
            Criterion::Oracle(truth) => truth.mse(&fit.estimate),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskCurve {
    pub lambdas: Vec<f64>,
    pub values: Vec<f64>,
    pub argmin_lambda: f64,
}

impl RiskCurve {
    fn from_points(mut points: Vec<(f64, f64)>) -> Self {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let argmin_lambda = points
            .iter()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|p| p.0)
            .unwrap_or(0.0);
        let (lambdas, values) = points.into_iter().unzip();
        Self {
            lambdas,
            values,
            argmin_lambda,
        }
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `lambda,value` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda,value\n");
        for (l, v) in self.lambdas.iter().zip(&self.values) {
            out.push_str(&format!("{l},{v}\n"));
        }
        out
    }
}

fn check_grid(lambdas: &[f64]) -> Result<()> {
    if lambdas.is_empty() {
        return Err(invalid("empty λ grid"));
    }
    if let Some(l) = lambdas.iter().find(|l| !(**l >= 0.0) || !l.is_finite()) {
        return Err(invalid(format!("grid values must be finite and non-negative, got {l}")));
    }
    Ok(())
}

/// One solve per grid value, evaluated in parallel and returned in sorted order.
pub fn risk_curve(y: &Signal, lambdas: &[f64], criterion: &Criterion, cfg: &SolverConfig) -> Result<RiskCurve> {
    check_grid(lambdas)?;
    if let Criterion::Oracle(truth) = criterion {
        check_same_shape(y, truth)?;
    }
    let points = lambdas
        .par_iter()
        .map(|&l| {
            let fit = denoise(y, l, cfg)?;
            Ok((l, criterion.evaluate(y, &fit)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RiskCurve::from_points(points))
}

/// `points` values spaced geometrically from `hi / 1000` to `hi`.
pub fn geometric_grid(hi: f64, points: usize) -> Vec<f64> {
    geometric_grid_between(hi * 1e-3, hi, points)
}

pub fn geometric_grid_between(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![hi],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..points)
                .map(|k| (a + (b - a) * k as f64 / (points - 1) as f64).exp())
                .collect()
        }
    }
}

/// Default search grid for `y`: 30 points below `Λ(y)`.
pub fn default_grid(y: &Signal) -> Result<Vec<f64>> {
    let top = crate::tvsolve::lambda_max(y)?;
    if top == 0.0 {
        return Ok(vec![0.0]);
    }
    Ok(geometric_grid(top, 30))
}

/// Grid search followed by golden-section refinement in `log λ` around the
/// best grid point. Returns the λ with the smallest criterion value seen.
pub fn minimize_criterion(y: &Signal, lambdas: &[f64], criterion: &Criterion, cfg: &SolverConfig) -> Result<(f64, f64)> {
    let curve = risk_curve(y, lambdas, criterion, cfg)?;
    let k = curve
        .values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut best = (curve.lambdas[k], curve.values[k]);
    let lo = curve.lambdas[k.saturating_sub(1)];
    let hi = curve.lambdas[(k + 1).min(curve.lambdas.len() - 1)];
    if !(lo > 0.0) || hi <= lo {
        return Ok(best);
    }
    let eval = |l: f64| -> Result<f64> { criterion.evaluate(y, &denoise(y, l, cfg)?) };
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = eval(c.exp())?;
    let mut fd = eval(d.exp())?;
    for _ in 0..24 {
        if fc < best.1 {
            best = (c.exp(), fc);
        }
        if fd < best.1 {
            best = (d.exp(), fd);
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = eval(c.exp())?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = eval(d.exp())?;
        }
    }
    for (l, v) in [(c.exp(), fc), (d.exp(), fd)] {
        if v < best.1 {
            best = (l, v);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::LatticeShape;
    use crate::signals::{add_noise, gen_piecewise, NoiseSpec, PiecewiseKind};
    use proptest::prelude::*;
    use std::collections::VecDeque;

    fn flood_fill_count(f: &Signal) -> usize {
        let v = f.values();
        let mut adj = vec![Vec::new(); v.len()];
        f.shape().for_each_edge(|_, a, b| {
            if v[a] == v[b] {
                adj[a].push(b);
                adj[b].push(a);
            }
        });
        let mut seen = vec![false; v.len()];
        let mut count = 0;
        for s in 0..v.len() {
            if seen[s] {
                continue;
            }
            count += 1;
            seen[s] = true;
            let mut q = VecDeque::from([s]);
            while let Some(x) = q.pop_front() {
                for &n in &adj[x] {
                    if !seen[n] {
                        seen[n] = true;
                        q.push_back(n);
                    }
                }
            }
        }
        count
    }

    #[test]
    fn ncc_examples() {
        let shape = LatticeShape::new(vec![2, 2]).unwrap();
        assert_eq!(ncc(&Signal::constant(shape.clone(), 3.0), 0.0), 1);
        let checker = Signal::new(shape, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert_eq!(ncc(&checker, 0.0), 4);
        let b = gen_piecewise(PiecewiseKind::Battlements, 100, 5, 3.0).unwrap().realize();
        assert_eq!(ncc(&b, 0.0), 5);
    }

    #[test]
    fn labels_use_smallest_index() {
        let f = Signal::from_vec(vec![1.0, 1.0, 2.0, 2.0, 1.0]).unwrap();
        assert_eq!(component_labels(&f, 0.0), vec![0, 0, 2, 2, 4]);
    }

    #[test]
    fn sure_formula_cases() {
        let y = Signal::from_vec(vec![0.0, 1.0, 3.0, 6.0]).unwrap();
        assert!((sure(&y, &y, 2.0, 0.0).unwrap() - 4.0).abs() < 1e-12);
        let bar = Signal::constant(y.shape().clone(), y.mean());
        let rss: f64 = y.values().iter().map(|v| (v - 2.5).powi(2)).sum();
        let want = rss / 4.0 + 2.0 / 4.0 - 1.0;
        assert!((sure(&y, &bar, 1.0, 0.0).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn oracle_with_truth_equal_to_data_picks_zero() {
        let y = add_noise(&Signal::zeros(LatticeShape::line(50).unwrap()), NoiseSpec::new(1.0, 3)).unwrap();
        let grid = [0.0, 0.1, 1.0, 10.0];
        let c = risk_curve(&y, &grid, &Criterion::Oracle(y.clone()), &SolverConfig::default()).unwrap();
        assert_eq!(c.argmin_lambda, 0.0);
        assert_eq!(c.values[0], 0.0);
        assert!(risk_curve(&y, &[], &Criterion::Sure(1.0), &SolverConfig::default()).is_err());
        assert!(risk_curve(&y, &[-1.0], &Criterion::Sure(1.0), &SolverConfig::default()).is_err());
    }

    #[test]
    fn oracle_minimum_is_interior() {
        let truth = gen_piecewise(PiecewiseKind::Battlements, 200, 5, 4.0).unwrap().realize();
        for seed in 0..5 {
            let y = add_noise(&truth, NoiseSpec::new(1.0, seed)).unwrap();
            let grid = default_grid(&y).unwrap();
            let c = risk_curve(&y, &grid, &Criterion::Oracle(truth.clone()), &SolverConfig::default()).unwrap();
            let first = c.lambdas[0];
            let last = *c.lambdas.last().unwrap();
            assert!(c.argmin_lambda > first && c.argmin_lambda < last);
        }
    }

    #[test]
    fn refinement_never_worse_than_grid() {
        let truth = gen_piecewise(PiecewiseKind::Staircase, 150, 4, 3.0).unwrap().realize();
        let y = add_noise(&truth, NoiseSpec::new(1.0, 8)).unwrap();
        let grid = default_grid(&y).unwrap();
        let crit = Criterion::Oracle(truth);
        let cfg = SolverConfig::default();
        let curve = risk_curve(&y, &grid, &crit, &cfg).unwrap();
        let (_, v) = minimize_criterion(&y, &grid, &crit, &cfg).unwrap();
        assert!(v <= curve.min_value());
    }

    #[test]
    fn csv_layout() {
        let c = RiskCurve::from_points(vec![(2.0, 0.5), (1.0, 0.25)]);
        assert_eq!(c.to_csv(), "lambda,value\n1,0.25\n2,0.5\n");
        assert_eq!(c.argmin_lambda, 1.0);
    }

    proptest! {
        #[test]
        fn ncc_matches_flood_fill(w in 2usize..6, h in 2usize..6, vals in proptest::collection::vec(0u8..3, 36)) {
            let shape = LatticeShape::new(vec![w, h]).unwrap();
            let f = Signal::new(shape.clone(), vals[..shape.len()].iter().map(|&v| v as f64).collect()).unwrap();
            prop_assert_eq!(ncc(&f, 0.0), flood_fill_count(&f));
        }

        #[test]
        fn ncc_monotone_in_quantization(vals in proptest::collection::vec(-3.0f64..3.0, 2..40), q1 in 0.0f64..2.0, q2 in 0.0f64..2.0) {
            let f = Signal::from_vec(vals).unwrap();
            let (lo, hi) = if q1 < q2 { (q1, q2) } else { (q2, q1) };
            prop_assert!(ncc(&f, hi) <= ncc(&f, lo));
        }

        #[test]
        fn sure_shift_invariant(vals in proptest::collection::vec(-3.0f64..3.0, 2..30), c in -5.0f64..5.0) {
            let y = Signal::from_vec(vals.clone()).unwrap();
            let f = Signal::from_vec(vals.iter().map(|v| v.round()).collect()).unwrap();
            let ys = Signal::from_vec(vals.iter().map(|v| v + c).collect()).unwrap();
            let fs = Signal::from_vec(vals.iter().map(|v| v.round() + c).collect()).unwrap();
            let a = sure(&y, &f, 1.0, 1e-9).unwrap();
            let b = sure(&ys, &fs, 1.0, 1e-9).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}
