//! Independent reference computations shared by the integration tests.

#![allow(dead_code)]

pub use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tvdn::grid::LatticeShape;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Edges `(near, far)` of a lattice, in solver order.
pub fn edges(shape: &LatticeShape) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    shape.for_each_edge(|_, a, b| out.push((a, b)));
    out
}

pub fn objective(y: &[f64], f: &[f64], edges: &[(usize, usize)], lambda: f64) -> f64 {
    let fit: f64 = y.iter().zip(f).map(|(a, b)| 0.5 * (a - b) * (a - b)).sum();
    let pen: f64 = edges.iter().map(|&(a, b)| (f[b] - f[a]).abs()).sum();
    fit + lambda * pen
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// TV minimizer by enumerating every edge state (fused, rising, falling).
///
/// For a fixed pattern the objective is a quadratic in the component levels
/// with the closed-form minimizer `h_k = ȳ_k − (λ/n_k)·Σ s_e(1[far∈k] − 1[near∈k])`.
/// Every candidate is a feasible point, so the best one is the minimizer.
pub fn brute_force_tv(y: &[f64], edges: &[(usize, usize)], lambda: f64) -> Vec<f64> {
    let m = y.len();
    let p = edges.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let total = 3usize.pow(p as u32);
    for code in 0..total {
        let mut state = vec![0i8; p];
        let mut c = code;
        for s in state.iter_mut() {
            *s = (c % 3) as i8 - 1;
            c /= 3;
        }
        let mut parent: Vec<usize> = (0..m).collect();
        for (e, &(a, b)) in edges.iter().enumerate() {
            if state[e] == 0 {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                parent[ra] = rb;
            }
        }
        let comp: Vec<usize> = (0..m).map(|i| find(&mut parent, i)).collect();
        if edges.iter().enumerate().any(|(e, &(a, b))| state[e] != 0 && comp[a] == comp[b]) {
            continue;
        }
        let mut sum = vec![0.0; m];
        let mut count = vec![0.0; m];
        let mut push = vec![0.0; m];
        for i in 0..m {
            sum[comp[i]] += y[i];
            count[comp[i]] += 1.0;
        }
        for (e, &(a, b)) in edges.iter().enumerate() {
            let s = state[e] as f64;
            push[comp[b]] += s;
            push[comp[a]] -= s;
        }
        let f: Vec<f64> = (0..m)
            .map(|i| {
                let k = comp[i];
                (sum[k] - lambda * push[k]) / count[k]
            })
            .collect();
        let obj = objective(y, &f, edges, lambda);
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, f));
        }
    }
    best.unwrap().1
}

/// Solves `Bᵀw = c` on a spanning tree for the tree edges, with the
/// off-tree edges fixed to `fixed` (zero elsewhere).
fn tree_solve(m: usize, edges: &[(usize, usize)], tree: &[bool], c: &[f64], fixed: &[f64]) -> Vec<f64> {
    let mut w = fixed.to_vec();
    // Remaining supply each node still needs from its tree edges.
    let mut need = c.to_vec();
    for (e, &(a, b)) in edges.iter().enumerate() {
        if !tree[e] {
            need[a] += w[e];
            need[b] -= w[e];
        }
    }
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (e, &(a, b)) in edges.iter().enumerate() {
        if tree[e] {
            adj[a].push(e);
            adj[b].push(e);
        }
    }
    let mut order = vec![0usize];
    let mut parent_edge = vec![usize::MAX; m];
    let mut seen = vec![false; m];
    seen[0] = true;
    let mut i = 0;
    while i < order.len() {
        let v = order[i];
        for &e in &adj[v] {
            let (a, b) = edges[e];
            let u = if a == v { b } else { a };
            if !seen[u] {
                seen[u] = true;
                parent_edge[u] = e;
                order.push(u);
            }
        }
        i += 1;
    }
    for &v in order.iter().rev().take(m - 1) {
        let e = parent_edge[v];
        let (a, b) = edges[e];
        // (Bᵀw)[far] += w_e, (Bᵀw)[near] −= w_e.
        if v == b {
            w[e] = need[v];
            need[a] += w[e];
        } else {
            w[e] = -need[v];
            need[b] -= w[e];
        }
        need[v] = 0.0;
    }
    w
}

fn spanning_tree(m: usize, edges: &[(usize, usize)]) -> Vec<bool> {
    let mut parent: Vec<usize> = (0..m).collect();
    edges
        .iter()
        .map(|&(a, b)| {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra == rb {
                false
            } else {
                parent[ra] = rb;
                true
            }
        })
        .collect()
}

/// `min ‖w‖∞ s.t. Bᵀw = y − ȳ1` by a refined grid search over the cycle
/// space (a particular tree solution plus fundamental cycles).
pub fn grid_search_lambda(y: &[f64], edges: &[(usize, usize)]) -> f64 {
    let m = y.len();
    let mean = y.iter().sum::<f64>() / m as f64;
    let c: Vec<f64> = y.iter().map(|v| v - mean).collect();
    let tree = spanning_tree(m, edges);
    let zero = vec![0.0; edges.len()];
    let base = tree_solve(m, edges, &tree, &c, &zero);
    let zeros = vec![0.0; m];
    let cycles: Vec<Vec<f64>> = (0..edges.len())
        .filter(|&e| !tree[e])
        .map(|e| {
            let mut fixed = zero.clone();
            fixed[e] = 1.0;
            tree_solve(m, edges, &tree, &zeros, &fixed)
        })
        .collect();
    let k = cycles.len();
    let sup = |t: &[f64]| {
        (0..edges.len())
            .map(|e| (base[e] + (0..k).map(|j| t[j] * cycles[j][e]).sum::<f64>()).abs())
            .fold(0.0f64, f64::max)
    };
    let mut center = vec![0.0; k];
    let mut half = base.iter().fold(0.0f64, |a, v| a.max(v.abs())) + 1.0;
    let steps: i64 = if k <= 1 { 200 } else { 40 };
    let mut best = sup(&center);
    for _ in 0..60 {
        let h = half / steps as f64;
        let mut arg = center.clone();
        let mut idx = vec![-steps; k];
        loop {
            let t: Vec<f64> = (0..k).map(|j| center[j] + idx[j] as f64 * h).collect();
            let v = sup(&t);
            if v < best {
                best = v;
                arg = t;
            }
            let mut j = 0;
            while j < k {
                idx[j] += 1;
                if idx[j] <= steps {
                    break;
                }
                idx[j] = -steps;
                j += 1;
            }
            if j == k {
                break;
            }
        }
        center = arg;
        half = 4.0 * h;
    }
    best
}

/// `max_k |Σ_{j≤k}(y_j − ȳ)|` over the first `N − 1` partial sums.
pub fn cumsum_lambda(y: &[f64]) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let mut acc = 0.0f64;
    let mut best = 0.0f64;
    for v in &y[..y.len() - 1] {
        acc += v - mean;
        best = best.max(acc.abs());
    }
    best
}

/// Number of 4-connected (2d-connected) regions of equal value, by flood fill.
pub fn flood_fill_count(shape: &LatticeShape, v: &[f64], q: f64) -> usize {
    let m = v.len();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (a, b) in edges(shape) {
        if (v[b] - v[a]).abs() <= q {
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    let mut seen = vec![false; m];
    let mut count = 0;
    for s in 0..m {
        if seen[s] {
            continue;
        }
        count += 1;
        seen[s] = true;
        let mut stack = vec![s];
        while let Some(u) = stack.pop() {
            for &x in &adj[u] {
                if !seen[x] {
                    seen[x] = true;
                    stack.push(x);
                }
            }
        }
    }
    count
}

pub fn random_shape(rng: &mut ChaCha8Rng, max_dims: usize, max_side: usize) -> LatticeShape {
    let d = rng.random_range(1..=max_dims);
    LatticeShape::new((0..d).map(|_| rng.random_range(2..=max_side)).collect()).unwrap()
}

pub mod invariants {
    //! Property checks used by both the property tests and the acceptance gate.

    use super::*;
    use tvdn::grid::{apply_diff, apply_diff_adjoint, Signal};
    use tvdn::lambda::{fit_gev_and_lr_test, fit_gumbel, sample_lambda};
    use tvdn::risk::ncc;
    use tvdn::segmentation::{extract_jumps, kkt_check, JumpRule};
    use tvdn::signals::white_noise;
    use tvdn::tvsolve::tv_denoise_1d;

    type Check = std::result::Result<(), String>;

    fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Check {
        if ok {
            Ok(())
        } else {
            Err(msg())
        }
    }

    /// `⟨Bf, w⟩ = ⟨f, Bᵀw⟩` on a random lattice.
    pub fn adjointness(seed: u64) -> Check {
        let mut r = rng(seed);
        let shape = random_shape(&mut r, 3, 7);
        let f = uniform(&mut r, shape.len(), -3.0, 3.0);
        let w = uniform(&mut r, shape.num_edges(), -3.0, 3.0);
        let bf = apply_diff(&Signal::new(shape.clone(), f.clone()).unwrap());
        let btw = apply_diff_adjoint(&w, &shape).unwrap();
        let lhs: f64 = bf.iter().zip(&w).map(|(a, b)| a * b).sum();
        let rhs: f64 = f.iter().zip(btw.values()).map(|(a, b)| a * b).sum();
        let scale: f64 = bf.iter().zip(&w).map(|(a, b)| (a * b).abs()).sum::<f64>() + 1.0;
        ensure((lhs - rhs).abs() <= 1e-12 * scale, || format!("{:?}: {lhs} vs {rhs}", shape.sizes()))
    }

    /// `Λ(c·y + t) = |c|·Λ(y)`.
    pub fn lambda_equivariance(seed: u64) -> Check {
        let mut r = rng(seed);
        let shape = random_shape(&mut r, 2, 8);
        if shape.len() < 2 {
            return Ok(());
        }
        let y = white_noise(&shape, seed);
        let c = r.random_range(-5.0..5.0);
        let t = r.random_range(-10.0..10.0);
        let moved = y.with_values(y.values().iter().map(|v| c * v + t).collect()).unwrap();
        let base = sample_lambda(&y, 1e-9).map_err(|e| e.to_string())?.lambda;
        let got = sample_lambda(&moved, 1e-9).map_err(|e| e.to_string())?.lambda;
        let want = c.abs() * base;
        ensure((got - want).abs() <= 1e-8 * (1.0 + want + t.abs()), || {
            format!("{:?} c={c} t={t}: {got} vs {want}", shape.sizes())
        })
    }

    /// Union-find component count equals a flood fill on piecewise data.
    pub fn ncc_flood_fill(seed: u64) -> Check {
        let mut r = rng(seed);
        let shape = random_shape(&mut r, 3, 8);
        let levels = r.random_range(1..4);
        let v: Vec<f64> = (0..shape.len()).map(|_| r.random_range(0..levels) as f64).collect();
        let f = Signal::new(shape.clone(), v.clone()).unwrap();
        let got = ncc(&f, 1e-9);
        let want = flood_fill_count(&shape, &v, 1e-9);
        ensure(got == want, || format!("{:?}: {got} vs {want}", shape.sizes()))
    }

    /// The KKT checker accepts the solver's jump set and rejects a
    /// perturbed one.
    pub fn kkt_agrees_with_solver(seed: u64) -> Check {
        let mut r = rng(seed);
        let n = r.random_range(3..60);
        let y = Signal::from_vec(uniform(&mut r, n, -2.0, 2.0)).unwrap();
        let lambda = r.random_range(0.05..2.0);
        let fit = tv_denoise_1d(&y, lambda).map_err(|e| e.to_string())?;
        let jumps = extract_jumps(&fit.estimate, 1.0, JumpRule::Nonzero(1e-9)).map_err(|e| e.to_string())?;
        let cert = kkt_check(&y, &jumps, lambda).map_err(|e| e.to_string())?;
        ensure(cert.holds, || format!("n={n} λ={lambda}: solver jumps {jumps:?} rejected"))?;
        let mut max_dev = 0.0f64;
        for (i, v) in fit.estimate.values().iter().enumerate() {
            let seg = jumps.partition_point(|&j| j <= i);
            max_dev = max_dev.max((cert.h_hat[seg] - v).abs());
        }
        ensure(max_dev <= 1e-9, || format!("levels differ by {max_dev}"))?;
        let loc = r.random_range(1..n);
        let mut other = jumps.clone();
        match other.binary_search(&loc) {
            Ok(i) => {
                other.remove(i);
            }
            Err(i) => other.insert(i, loc),
        }
        let alt = kkt_check(&y, &other, lambda).map_err(|e| e.to_string())?;
        ensure(!alt.holds, || format!("n={n} λ={lambda}: perturbed set {other:?} accepted"))
    }

    /// Gumbel MLE is location/scale equivariant and the LR statistic invariant.
    pub fn mle_equivariance(seed: u64) -> Check {
        let mut r = rng(seed);
        let n = r.random_range(50..300);
        let x: Vec<f64> = (0..n).map(|_| -(-(r.random_range(1e-12..1.0f64)).ln()).ln()).collect();
        let a = r.random_range(0.1..10.0);
        let b = r.random_range(-20.0..20.0);
        let moved: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let g = fit_gumbel(&x).map_err(|e| e.to_string())?;
        let h = fit_gumbel(&moved).map_err(|e| e.to_string())?;
        ensure((h.mu - (a * g.mu + b)).abs() <= 1e-6 * (1.0 + h.mu.abs()), || {
            format!("mu {} vs {}", h.mu, a * g.mu + b)
        })?;
        ensure((h.beta - a * g.beta).abs() <= 1e-6 * h.beta, || format!("beta {} vs {}", h.beta, a * g.beta))?;
        let t0 = fit_gev_and_lr_test(&x).map_err(|e| e.to_string())?;
        let t1 = fit_gev_and_lr_test(&moved).map_err(|e| e.to_string())?;
        ensure((t0.statistic - t1.statistic).abs() <= 1e-4 * (1.0 + t0.statistic), || {
            format!("LR {} vs {}", t0.statistic, t1.statistic)
        })
    }
}
