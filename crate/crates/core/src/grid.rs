//! Lattice geometry and the finite-difference operator.
//!
//! Sites are stored with the first axis varying fastest, so a `[width, height]`
//! lattice holds an image row by row. Direction `i` differences along axis `i`.
//! Edges are numbered direction-major: every axis-0 edge comes before any axis-1
//! edge, and within a direction edges follow the linear index of their near site.
//! The value of an edge is `f[far] - f[near]`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Sizes of a rectangular `d`-dimensional lattice, fastest axis first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticeShape {
    sizes: Vec<usize>,
}

impl LatticeShape {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::InvalidShape("lattice needs at least one axis".into()));
        }
        if sizes.contains(&0) {
            return Err(Error::InvalidShape(format!("zero-length axis in {sizes:?}")));
        }
        let total = sizes
            .iter()
            .try_fold(1usize, |acc, &n| acc.checked_mul(n))
            .ok_or_else(|| Error::InvalidShape(format!("lattice {sizes:?} overflows")))?;
        if total > 1 && sizes.iter().any(|&n| n < 2) {
            return Err(Error::InvalidShape(format!(
                "every axis of a non-trivial lattice needs at least two sites, got {sizes:?}"
            )));
        }
        Ok(Self { sizes })
    }

    pub fn line(n: usize) -> Result<Self> {
        Self::new(vec![n])
    }

    /// Square (or cubic) lattice with `side` sites along each of `dims` axes.
    pub fn cube(side: usize, dims: usize) -> Result<Self> {
        Self::new(vec![side; dims])
    }

    pub fn dims(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Number of sites `M`.
    pub fn len(&self) -> usize {
        self.sizes.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Linear stride of axis `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        self.sizes[..axis].iter().product()
    }

    /// Number of edges along one axis: `(N_i - 1) * M / N_i`.
    pub fn edges_along(&self, axis: usize) -> usize {
        let n = self.sizes[axis];
        (n - 1) * (self.len() / n)
    }

    /// Total edge count `P_M`.
    pub fn num_edges(&self) -> usize {
        (0..self.dims()).map(|a| self.edges_along(a)).sum()
    }

    /// Index of the first edge of direction `axis`.
    pub fn edge_offset(&self, axis: usize) -> usize {
        (0..axis).map(|a| self.edges_along(a)).sum()
    }

    /// Side length used by the square-lattice threshold formulas: `M^(1/d)`.
    pub fn mean_side(&self) -> f64 {
        (self.len() as f64).powf(1.0 / self.dims() as f64)
    }

    /// Number of neighbours of every site.
    pub fn degrees(&self) -> Vec<f64> {
        let mut deg = vec![0.0; self.len()];
        self.for_each_edge(|_, near, far| {
            deg[near] += 1.0;
            deg[far] += 1.0;
        });
        deg
    }

    /// Visits every edge as `(edge_index, near_site, far_site)` in edge order.
    pub fn for_each_edge(&self, mut visit: impl FnMut(usize, usize, usize)) {
        let m = self.len();
        let mut e = 0;
        for axis in 0..self.dims() {
            let stride = self.stride(axis);
            let n = self.sizes[axis];
            for site in 0..m {
                if (site / stride) % n != n - 1 {
                    visit(e, site, site + stride);
                    e += 1;
                }
            }
        }
    }

    /// `(near, far)` sites of every edge, in edge order.
    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        let mut edges = Vec::with_capacity(self.num_edges());
        self.for_each_edge(|_, a, b| edges.push((a, b)));
        edges
    }

    /// Edge index of `(axis, near_site)`, or `None` if the site has no
    /// forward neighbour along that axis.
    pub fn edge_index(&self, axis: usize, site: usize) -> Option<usize> {
        if axis >= self.dims() || site >= self.len() {
            return None;
        }
        let stride = self.stride(axis);
        let n = self.sizes[axis];
        if (site / stride) % n == n - 1 {
            return None;
        }
        // Sites below `site` that own an edge along this axis.
        let block = stride * n;
        let full_blocks = site / block;
        let within = site % block;
        let rank = full_blocks * stride * (n - 1) + within;
        Some(self.edge_offset(axis) + rank)
    }
}

/// Real values attached to every site of a lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    shape: LatticeShape,
    values: Vec<f64>,
}

impl Signal {
    pub fn new(shape: LatticeShape, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(Error::LengthMismatch {
                expected: shape.len(),
                actual: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { shape, values })
    }

    pub fn from_vec(values: Vec<f64>) -> Result<Self> {
        let shape = LatticeShape::line(values.len())?;
        Self::new(shape, values)
    }

    pub fn constant(shape: LatticeShape, value: f64) -> Self {
        let values = vec![value; shape.len()];
        Self { shape, values }
    }

    pub fn zeros(shape: LatticeShape) -> Self {
        Self::constant(shape, 0.0)
    }

    pub fn shape(&self) -> &LatticeShape {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Same lattice, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.shape.clone(), values)
    }

    pub(crate) fn from_parts_unchecked(shape: LatticeShape, values: Vec<f64>) -> Self {
        debug_assert_eq!(shape.len(), values.len());
        Self { shape, values }
    }

    /// Largest minus smallest value.
    pub fn range(&self) -> f64 {
        let (lo, hi) = self
            .values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        hi - lo
    }

    /// Mean squared difference to `other`.
    pub fn mse(&self, other: &Signal) -> Result<f64> {
        check_same_shape(self, other)?;
        let ss: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok(ss / self.len() as f64)
    }
}

pub(crate) fn check_same_shape(a: &Signal, b: &Signal) -> Result<()> {
    if a.shape != b.shape {
        return Err(invalid(format!(
            "lattice shapes differ: {:?} vs {:?}",
            a.shape.sizes(),
            b.shape.sizes()
        )));
    }
    Ok(())
}

/// Finite differences `B f`, one value per edge.
pub fn apply_diff(signal: &Signal) -> Vec<f64> {
    let mut out = vec![0.0; signal.shape.num_edges()];
    diff_into(&signal.shape, &signal.values, &mut out);
    out
}

pub(crate) fn diff_into(shape: &LatticeShape, f: &[f64], out: &mut [f64]) {
    debug_assert_eq!(f.len(), shape.len());
    debug_assert_eq!(out.len(), shape.num_edges());
    shape.for_each_edge(|e, near, far| out[e] = f[far] - f[near]);
}

/// Adjoint `Bᵀ w`.
pub fn apply_diff_adjoint(w: &[f64], shape: &LatticeShape) -> Result<Signal> {
    if w.len() != shape.num_edges() {
        return Err(Error::LengthMismatch {
            expected: shape.num_edges(),
            actual: w.len(),
        });
    }
    let mut out = vec![0.0; shape.len()];
    adjoint_into(shape, w, &mut out);
    Ok(Signal::from_parts_unchecked(shape.clone(), out))
}

pub(crate) fn adjoint_into(shape: &LatticeShape, w: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    shape.for_each_edge(|e, near, far| {
        out[near] -= w[e];
        out[far] += w[e];
    });
}

/// `BᵀB x`, the graph Laplacian with free (Neumann) boundaries.
pub(crate) fn laplacian_into(shape: &LatticeShape, x: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    shape.for_each_edge(|_, near, far| {
        let d = x[far] - x[near];
        out[near] -= d;
        out[far] += d;
    });
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn remove_mean(x: &mut [f64]) {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter_mut().for_each(|v| *v -= m);
}

/// Jacobi-preconditioned conjugate gradients for `(shift I + BᵀB) x = rhs`.
///
/// With `shift == 0` the system is singular; the right-hand side must be
/// mean-zero and the returned solution is the mean-zero one.
#[derive(Debug, Clone)]
pub struct LaplacianSolver {
    shape: LatticeShape,
    degrees: Vec<f64>,
    max_iter: usize,
}

impl LaplacianSolver {
    pub fn new(shape: &LatticeShape) -> Self {
        Self {
            shape: shape.clone(),
            degrees: shape.degrees(),
            max_iter: (10 * shape.len()).max(50),
        }
    }

    pub fn shape(&self) -> &LatticeShape {
        &self.shape
    }

    /// Solves in place, using the incoming `x` as the starting point.
    /// Stops once `‖rhs - A x‖ ≤ tol · ‖rhs‖`; returns the iteration count.
    pub fn solve_in_place(&self, shift: f64, rhs: &[f64], x: &mut [f64], tol: f64) -> Result<usize> {
        let m = self.shape.len();
        if rhs.len() != m || x.len() != m {
            return Err(Error::LengthMismatch {
                expected: m,
                actual: rhs.len().min(x.len()),
            });
        }
        if shift < 0.0 {
            return Err(invalid("negative shift"));
        }
        let singular = shift == 0.0;
        let rhs_norm = norm2(rhs);
        if rhs_norm == 0.0 {
            x.iter_mut().for_each(|v| *v = 0.0);
            return Ok(0);
        }
        let target = tol * rhs_norm;
        let inv_diag: Vec<f64> = self
            .degrees
            .iter()
            .map(|&d| {
                let a = d + shift;
                if a > 0.0 {
                    1.0 / a
                } else {
                    1.0
                }
            })
            .collect();

        let mut ax = vec![0.0; m];
        let apply = |v: &[f64], out: &mut [f64]| {
            laplacian_into(&self.shape, v, out);
            if !singular {
                out.iter_mut().zip(v).for_each(|(o, vi)| *o += shift * vi);
            }
        };
        apply(x, &mut ax);
        let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
        if singular {
            remove_mean(&mut r);
        }
        let mut res = norm2(&r);
        if res <= target {
            if singular {
                remove_mean(x);
            }
            return Ok(0);
        }
        let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, b)| a * b).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut ap = vec![0.0; m];
        for it in 1..=self.max_iter {
            apply(&p, &mut ap);
            let pap = dot(&p, &ap);
            if pap <= 0.0 {
                break;
            }
            let alpha = rz / pap;
            x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
            r.iter_mut().zip(&ap).for_each(|(ri, api)| *ri -= alpha * api);
            res = norm2(&r);
            if res <= target {
                if singular {
                    remove_mean(x);
                }
                return Ok(it);
            }
            z.iter_mut()
                .zip(r.iter().zip(&inv_diag))
                .for_each(|(zi, (ri, di))| *zi = ri * di);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            p.iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
        }
        // Recompute the true residual before giving up; the recursive one drifts.
        apply(x, &mut ax);
        let true_res = norm2(&rhs.iter().zip(&ax).map(|(b, a)| b - a).collect::<Vec<_>>());
        if true_res <= target {
            if singular {
                remove_mean(x);
            }
            return Ok(self.max_iter);
        }
        Err(Error::NotConverged {
            method: "laplacian conjugate gradient",
            iterations: self.max_iter,
            residual: true_res / rhs_norm,
        })
    }
}

/// Mean-zero solution of `BᵀB x = rhs` with relative residual at most `tol`.
pub fn laplacian_solve(rhs: &Signal, tol: f64) -> Result<Signal> {
    let m = rhs.len() as f64;
    let sum: f64 = rhs.values.iter().sum();
    let scale = norm2(&rhs.values).max(f64::MIN_POSITIVE);
    if (sum / m.sqrt()).abs() > tol.max(1e-12) * scale.max(1.0) {
        return Err(invalid(format!(
            "right-hand side is not mean-zero (sum {sum:e})"
        )));
    }
    let solver = LaplacianSolver::new(&rhs.shape);
    let mut centered = rhs.values.clone();
    remove_mean(&mut centered);
    let mut x = vec![0.0; rhs.len()];
    solver.solve_in_place(0.0, &centered, &mut x, tol)?;
    Ok(Signal::from_parts_unchecked(rhs.shape.clone(), x))
}
