//! Barotropic projection: the surface geopotential is the Lagrange
//! multiplier that keeps the column-integrated divergence at zero.
//!
//! The operator is `D G`, the face-averaged divergence of the centred
//! gradient, so that after correction the divergence seen by the `omega`
//! diagnosis vanishes to solver tolerance. Its null space is the constants.

use crate::error::SolverError;
use crate::grid::Grid;
use crate::operators::{horizontal_divergence, horizontal_gradient};

/// `D G phi = rhs` on the horizontal mesh with zero-flux walls.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonProblem {
    pub rhs: Vec<f64>,
    /// Relative residual target.
    pub tol: f64,
    pub max_iter: usize,
    /// Magnitude of the data the right-hand side was differenced from; a
    /// right-hand side below `tol * scale` is treated as zero.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoissonSolution {
    /// Zero-mean solution.
    pub phi: Vec<f64>,
    pub iterations: usize,
    /// Final relative residual.
    pub residual: f64,
}

pub const DEFAULT_TOL: f64 = 1.0e-10;

fn max_iter_for(grid: &Grid) -> usize {
    (20 * grid.ncol()).max(200)
}

impl PoissonProblem {
    pub fn new(rhs: Vec<f64>, grid: &Grid) -> Self {
        Self {
            rhs,
            tol: DEFAULT_TOL,
            max_iter: max_iter_for(grid),
            scale: 0.0,
        }
    }
}

/// `D G phi` on a single horizontal level.
pub fn apply_operator(phi: &[f64], grid: &Grid) -> Vec<f64> {
    let (gx, gy) = horizontal_gradient(phi, grid);
    horizontal_divergence(&gx, &gy, grid)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn remove_mean(x: &mut [f64]) -> f64 {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter_mut().for_each(|v| *v -= mean);
    mean
}

/// Conjugate gradients on `-D G`, which is symmetric positive definite on
/// zero-mean fields.
pub fn solve(problem: &PoissonProblem, grid: &Grid) -> Result<PoissonSolution, SolverError> {
    let n = grid.ncol();
    assert_eq!(problem.rhs.len(), n, "Poisson right-hand side must be 2D");
    let mut b: Vec<f64> = problem.rhs.iter().map(|x| -x).collect();
    let norm_inf = b.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mean = b.iter().sum::<f64>() / n as f64;
    if mean.abs() > 1.0e-12 * norm_inf.max(problem.scale) {
        return Err(SolverError::IncompatibleRhs { mean: -mean, norm: norm_inf });
    }
    remove_mean(&mut b);
    let mut phi = vec![0.0; n];
    let bnorm = dot(&b, &b).sqrt();
    if bnorm == 0.0 || norm_inf <= problem.tol * problem.scale {
        return Ok(PoissonSolution {
            phi,
            iterations: 0,
            residual: 0.0,
        });
    }
    let mut r = b;
    let mut d = r.clone();
    let mut rr = dot(&r, &r);
    for it in 1..=problem.max_iter {
        let ad: Vec<f64> = apply_operator(&d, grid).iter().map(|x| -x).collect();
        let alpha = rr / dot(&d, &ad);
        for i in 0..n {
            phi[i] += alpha * d[i];
            r[i] -= alpha * ad[i];
        }
        let rr_new = dot(&r, &r);
        let rel = rr_new.sqrt() / bnorm;
        if rel <= problem.tol {
            remove_mean(&mut phi);
            return Ok(PoissonSolution {
                phi,
                iterations: it,
                residual: rel,
            });
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            d[i] = r[i] + beta * d[i];
        }
    }
    Err(SolverError::NoConvergence {
        iterations: problem.max_iter,
        residual: rr.sqrt() / bnorm,
    })
}

/// Result of projecting a provisional momentum tendency.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub phi_s: Vec<f64>,
    pub du: Vec<f64>,
    pub dv: Vec<f64>,
    pub iterations: usize,
    /// Max norm of the vertically averaged divergence after correction.
    pub residual: f64,
}

/// Vertical mean of a 3D field, one value per column.
pub fn vertical_mean(f: &[f64], grid: &Grid) -> Vec<f64> {
    let nc = grid.ncol();
    let mut m = vec![0.0; nc];
    for (n, x) in f.iter().enumerate() {
        m[n % nc] += x;
    }
    let inv = 1.0 / grid.np as f64;
    m.iter_mut().for_each(|x| *x *= inv);
    m
}

/// Removes `grad_h phi_s` from the tendency so that its vertical average is
/// discretely divergence-free.
pub fn project_barotropic(du: &[f64], dv: &[f64], grid: &Grid) -> Result<Projection, SolverError> {
    let nc = grid.ncol();
    let (mu, mv) = (vertical_mean(du, grid), vertical_mean(dv, grid));
    let rhs = horizontal_divergence(&mu, &mv, grid);
    let mut problem = PoissonProblem::new(rhs, grid);
    problem.scale = mu.iter().chain(&mv).fold(0.0f64, |m, x| m.max(x.abs())) / grid.dx.min(grid.dy);
    let sol = solve(&problem, grid)?;
    let (gx, gy) = horizontal_gradient(&sol.phi, grid);
    let du: Vec<f64> = du.iter().enumerate().map(|(n, x)| x - gx[n % nc]).collect();
    let dv: Vec<f64> = dv.iter().enumerate().map(|(n, x)| x - gy[n % nc]).collect();
    let residual = horizontal_divergence(&vertical_mean(&du, grid), &vertical_mean(&dv, grid), grid)
        .iter()
        .fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(Projection {
        phi_s: sol.phi,
        du,
        dv,
        iterations: sol.iterations,
        residual,
    })
}
