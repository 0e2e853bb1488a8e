//! Douglas–Rachford splitting for `min ‖w‖∞ s.t. Bᵀw = c`.
//!
//! Alternates the projection onto the affine constraint set (one pseudo-inverse
//! Laplacian solve) with the proximal map of `γ‖·‖∞`, which is the residual of
//! a projection onto the ℓ₁ ball of radius `γ`.

use crate::error::{Error, Result};
use crate::grid::{adjoint_into, diff_into, norm2, LaplacianSolver, LatticeShape};

/// Euclidean projection onto `{x : ‖x‖₁ ≤ radius}`.
pub(crate) fn project_l1_ball(v: &[f64], radius: f64) -> Vec<f64> {
    let l1: f64 = v.iter().map(|x| x.abs()).sum();
    if l1 <= radius {
        return v.to_vec();
    }
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &m) in mags.iter().enumerate() {
        cum += m;
        let t = (cum - radius) / (k + 1) as f64;
        if m > t {
            theta = t;
        } else {
            break;
        }
    }
    v.iter()
        .map(|&x| x.signum() * (x.abs() - theta).max(0.0))
        .collect()
}

/// `prox_{γ‖·‖∞}(v) = v − P_{γ·B₁}(v)`.
fn prox_sup_norm(v: &[f64], gamma: f64) -> Vec<f64> {
    let p = project_l1_ball(v, gamma);
    v.iter().zip(&p).map(|(a, b)| a - b).collect()
}

struct AffineProjector<'a> {
    shape: &'a LatticeShape,
    solver: LaplacianSolver,
    c: &'a [f64],
    cg_tol: f64,
    potential: Vec<f64>,
}

impl AffineProjector<'_> {
    /// `v − B (BᵀB)⁺ (Bᵀv − c)`.
    fn project(&mut self, v: &[f64]) -> Result<Vec<f64>> {
        let m = self.shape.len();
        let mut r = vec![0.0; m];
        adjoint_into(self.shape, v, &mut r);
        r.iter_mut().zip(self.c).for_each(|(ri, ci)| *ri -= ci);
        let mean = r.iter().sum::<f64>() / m as f64;
        r.iter_mut().for_each(|ri| *ri -= mean);
        self.potential.iter_mut().for_each(|x| *x = 0.0);
        self.solver
            .solve_in_place(0.0, &r, &mut self.potential, self.cg_tol)?;
        let mut bx = vec![0.0; v.len()];
        diff_into(self.shape, &self.potential, &mut bx);
        Ok(v.iter().zip(&bx).map(|(a, b)| a - b).collect())
    }
}

pub(crate) struct SplittingSolution {
    pub lambda: f64,
    pub w: Vec<f64>,
    pub iterations: usize,
}

pub(crate) fn min_sup_norm(
    shape: &LatticeShape,
    c: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<SplittingSolution> {
    let p = shape.num_edges();
    let scale = c.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if p == 0 || scale == 0.0 {
        return Ok(SplittingSolution {
            lambda: 0.0,
            w: vec![0.0; p],
            iterations: 0,
        });
    }
    let mut proj = AffineProjector {
        shape,
        solver: LaplacianSolver::new(shape),
        c,
        cg_tol: (tol * 1e-3).max(1e-14),
        potential: vec![0.0; shape.len()],
    };
    let c_norm = norm2(c);
    // Least-norm feasible point as the start; the step is tied to its size.
    let mut z = proj.project(&vec![0.0; p])?;
    let gamma = z.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE) * 0.5;
    let mut prev = f64::INFINITY;
    let mut best = f64::INFINITY;
    let mut best_w = z.clone();
    let mut bt = vec![0.0; shape.len()];
    for it in 1..=max_iter {
        let x = proj.project(&z)?;
        let lam = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if lam < best {
            best = lam;
            best_w.clone_from(&x);
        }
        let reflected: Vec<f64> = x.iter().zip(&z).map(|(a, b)| 2.0 * a - b).collect();
        let v = prox_sup_norm(&reflected, gamma);
        let mut step = 0.0f64;
        for i in 0..p {
            let d = v[i] - x[i];
            z[i] += d;
            step = step.max(d.abs());
        }
        adjoint_into(shape, &x, &mut bt);
        let residual = norm2(&bt.iter().zip(c).map(|(a, b)| a - b).collect::<Vec<_>>());
        let settled = (lam - prev).abs() <= tol * lam.max(1e-300) && step <= tol * scale;
        if settled && residual <= tol * c_norm {
            return Ok(SplittingSolution {
                lambda: best,
                w: best_w,
                iterations: it,
            });
        }
        prev = lam;
    }
    Err(Error::NotConverged {
        method: "sup-norm splitting",
        iterations: max_iter,
        residual: (prev - best).abs() / best.max(f64::MIN_POSITIVE),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l1_projection() {
        let p = project_l1_ball(&[3.0, -1.0, 0.5], 2.0);
        assert!((p.iter().map(|x| x.abs()).sum::<f64>() - 2.0).abs() < 1e-12);
        assert_eq!(project_l1_ball(&[0.1, 0.2], 1.0), vec![0.1, 0.2]);
        let q = project_l1_ball(&[3.0, -1.0, 0.5], 2.0);
        assert!((q[0] - 2.0).abs() < 1e-12 && q[1] == 0.0 && q[2] == 0.0);
    }
}
