//! Discrete spatial operators on the cell-centred mesh.
//!
//! Horizontal velocities are averaged to cell faces with zero normal flow on
//! the lateral walls; `omega` lives on horizontal faces and is integrated
//! from the surface so that the three-dimensional discrete divergence of
//! every cell vanishes. The centred gradient (with mirrored ghost values) is
//! the negative adjoint of the face-averaged divergence, which makes the
//! pressure work and the adiabatic heating cancel exactly in the discrete
//! energy budget.

use crate::boundary::RobinAt;
use crate::error::SolverError;
use crate::grid::Grid;
use crate::microphysics::{Diffusivity, Params};
use crate::state::{Diagnosed, State};

/// Per-field time derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct Tendency {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub temperature: Vec<f64>,
    pub qv: Vec<f64>,
    pub qc: Vec<f64>,
    pub qr: Vec<f64>,
}

impl Tendency {
    pub fn zeros(grid: &Grid) -> Self {
        let z = vec![0.0; grid.len()];
        Self {
            u: z.clone(),
            v: z.clone(),
            temperature: z.clone(),
            qv: z.clone(),
            qc: z.clone(),
            qr: z,
        }
    }
}

/// Normal velocities on every cell face.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceVelocities {
    /// `(k * ny + j) * (nx + 1) + i`, positive towards `+x`.
    pub ux: Vec<f64>,
    /// `(k * (ny + 1) + j) * nx + i`, positive towards `+y`.
    pub vy: Vec<f64>,
    /// `kf * ncol + c`, positive towards increasing pressure.
    pub w: Vec<f64>,
}

pub fn face_velocities(u: &[f64], v: &[f64], omega_faces: &[f64], grid: &Grid) -> FaceVelocities {
    let (nx, ny, np) = (grid.nx, grid.ny, grid.np);
    let mut ux = vec![0.0; (nx + 1) * ny * np];
    let mut vy = vec![0.0; nx * (ny + 1) * np];
    for k in 0..np {
        for j in 0..ny {
            for i in 1..nx {
                ux[(k * ny + j) * (nx + 1) + i] = 0.5 * (u[grid.idx(i - 1, j, k)] + u[grid.idx(i, j, k)]);
            }
        }
        for j in 1..ny {
            for i in 0..nx {
                vy[(k * (ny + 1) + j) * nx + i] = 0.5 * (v[grid.idx(i, j - 1, k)] + v[grid.idx(i, j, k)]);
            }
        }
    }
    FaceVelocities {
        ux,
        vy,
        w: omega_faces.to_vec(),
    }
}

fn levels(field: &[f64], grid: &Grid) -> usize {
    debug_assert_eq!(field.len() % grid.ncol(), 0);
    field.len() / grid.ncol()
}

/// Face-averaged horizontal divergence with zero normal flow on the walls.
/// Works on any number of stacked levels (one level for 2D fields).
pub fn horizontal_divergence(u: &[f64], v: &[f64], grid: &Grid) -> Vec<f64> {
    let (nx, ny) = (grid.nx, grid.ny);
    let nc = grid.ncol();
    let mut div = vec![0.0; u.len()];
    for l in 0..levels(u, grid) {
        let base = l * nc;
        for j in 0..ny {
            for i in 0..nx {
                let at = |f: &[f64], ii: usize, jj: usize| f[base + jj * nx + ii];
                let east = if i + 1 < nx { 0.5 * (at(u, i, j) + at(u, i + 1, j)) } else { 0.0 };
                let west = if i > 0 { 0.5 * (at(u, i - 1, j) + at(u, i, j)) } else { 0.0 };
                let north = if j + 1 < ny { 0.5 * (at(v, i, j) + at(v, i, j + 1)) } else { 0.0 };
                let south = if j > 0 { 0.5 * (at(v, i, j - 1) + at(v, i, j)) } else { 0.0 };
                div[base + j * nx + i] = (east - west) / grid.dx + (north - south) / grid.dy;
            }
        }
    }
    div
}

/// Centred horizontal gradient with mirrored ghost cells (zero normal
/// derivative on the walls). Works on any number of stacked levels.
pub fn horizontal_gradient(f: &[f64], grid: &Grid) -> (Vec<f64>, Vec<f64>) {
    let (nx, ny) = (grid.nx, grid.ny);
    let nc = grid.ncol();
    let mut gx = vec![0.0; f.len()];
    let mut gy = vec![0.0; f.len()];
    for l in 0..levels(f, grid) {
        let base = l * nc;
        for j in 0..ny {
            for i in 0..nx {
                let at = |ii: usize, jj: usize| f[base + jj * nx + ii];
                let e = at((i + 1).min(nx - 1), j);
                let w = at(i.saturating_sub(1), j);
                let n = at(i, (j + 1).min(ny - 1));
                let s = at(i, j.saturating_sub(1));
                gx[base + j * nx + i] = (e - w) / (2.0 * grid.dx);
                gy[base + j * nx + i] = (n - s) / (2.0 * grid.dy);
            }
        }
    }
    (gx, gy)
}

/// First-order upwind transport `-(u . grad_h f + omega dp f)` in flux form.
pub fn advect(field: &[f64], u: &[f64], v: &[f64], omega_faces: &[f64], grid: &Grid) -> Vec<f64> {
    advect_flux(field, &face_velocities(u, v, omega_faces, grid), grid)
}

/// Flux-form upwind transport with given face velocities. The top face
/// takes the interior value as its upwind state (zero normal gradient).
pub fn advect_flux(f: &[f64], faces: &FaceVelocities, grid: &Grid) -> Vec<f64> {
    let (nx, ny, np) = (grid.nx, grid.ny, grid.np);
    let nc = grid.ncol();
    let mut out = vec![0.0; f.len()];
    for k in 0..np {
        for j in 0..ny {
            for i in 1..nx {
                let a = faces.ux[(k * ny + j) * (nx + 1) + i];
                let (l, r) = (grid.idx(i - 1, j, k), grid.idx(i, j, k));
                let flux = a * if a > 0.0 { f[l] } else { f[r] } / grid.dx;
                out[l] -= flux;
                out[r] += flux;
            }
        }
        for j in 1..ny {
            for i in 0..nx {
                let a = faces.vy[(k * (ny + 1) + j) * nx + i];
                let (s, n) = (grid.idx(i, j - 1, k), grid.idx(i, j, k));
                let flux = a * if a > 0.0 { f[s] } else { f[n] } / grid.dy;
                out[s] -= flux;
                out[n] += flux;
            }
        }
    }
    for c in 0..nc {
        out[c] += faces.w[c] * f[c] / grid.dp;
        for kf in 1..np {
            let a = faces.w[kf * nc + c];
            let (up, down) = ((kf - 1) * nc + c, kf * nc + c);
            let flux = a * if a > 0.0 { f[up] } else { f[down] } / grid.dp;
            out[up] -= flux;
            out[down] += flux;
        }
    }
    out
}

/// Upwind transport in advective form: every face with inflow contributes
/// `a (f_upwind - f_cell) / h` to the receiving cell.
pub fn advect_advective(f: &[f64], faces: &FaceVelocities, grid: &Grid) -> Vec<f64> {
    let (nx, ny, np) = (grid.nx, grid.ny, grid.np);
    let nc = grid.ncol();
    let mut out = vec![0.0; f.len()];
    let mut edge = |a: f64, from_minus: usize, from_plus: usize, h: f64| {
        if a > 0.0 {
            out[from_plus] += a * (f[from_minus] - f[from_plus]) / h;
        } else if a < 0.0 {
            out[from_minus] += -a * (f[from_plus] - f[from_minus]) / h;
        }
    };
    for k in 0..np {
        for j in 0..ny {
            for i in 1..nx {
                edge(faces.ux[(k * ny + j) * (nx + 1) + i], grid.idx(i - 1, j, k), grid.idx(i, j, k), grid.dx);
            }
        }
        for j in 1..ny {
            for i in 0..nx {
                edge(faces.vy[(k * (ny + 1) + j) * nx + i], grid.idx(i, j - 1, k), grid.idx(i, j, k), grid.dy);
            }
        }
    }
    for c in 0..nc {
        for kf in 1..np {
            edge(faces.w[kf * nc + c], (kf - 1) * nc + c, kf * nc + c, grid.dp);
        }
    }
    out
}

/// Boundary closure used by the diffusion operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Closure {
    /// Robin conditions on the surface and the walls, insulated top.
    Scalar(RobinAt),
    /// `u`: no normal flow on the x-walls, free slip on the y-walls,
    /// `dp u = -alpha_u u` on the surface.
    VelocityX { alpha_u: f64 },
    /// `v`: the same with the roles of the walls swapped.
    VelocityY { alpha_u: f64 },
}

impl Closure {
    fn bottom(&self) -> (f64, f64) {
        match *self {
            Closure::Scalar(r) => (r.alpha_bottom, r.target_bottom),
            Closure::VelocityX { alpha_u } | Closure::VelocityY { alpha_u } => (alpha_u, 0.0),
        }
    }

    /// Outward normal derivative at a wall face of a cell with value `f`.
    /// `normal_x` tells whether the wall is normal to `x`.
    fn wall_gradient(&self, f: f64, h: f64, normal_x: bool) -> f64 {
        match *self {
            Closure::Scalar(r) => {
                r.alpha_lateral * (r.target_lateral - f) / (1.0 + 0.5 * r.alpha_lateral * h)
            }
            Closure::VelocityX { .. } if normal_x => -2.0 * f / h,
            Closure::VelocityY { .. } if !normal_x => -2.0 * f / h,
            _ => 0.0,
        }
    }
}

/// `Delta_h f` with the lateral closure.
pub fn horizontal_laplacian(f: &[f64], closure: &Closure, grid: &Grid) -> Vec<f64> {
    let (nx, ny, np) = (grid.nx, grid.ny, grid.np);
    let (dx, dy) = (grid.dx, grid.dy);
    let mut out = vec![0.0; f.len()];
    for k in 0..np {
        for j in 0..ny {
            for i in 0..nx {
                let n = grid.idx(i, j, k);
                let c = f[n];
                let mut sx = 0.0;
                sx += if i > 0 { (f[n - 1] - c) / dx } else { closure.wall_gradient(c, dx, true) };
                sx += if i + 1 < nx { (f[n + 1] - c) / dx } else { closure.wall_gradient(c, dx, true) };
                let mut sy = 0.0;
                sy += if j > 0 { (f[n - nx] - c) / dy } else { closure.wall_gradient(c, dy, false) };
                sy += if j + 1 < ny { (f[n + nx] - c) / dy } else { closure.wall_gradient(c, dy, false) };
                out[n] = sx / dx + sy / dy;
            }
        }
    }
    out
}

/// Surface Robin factor `w(p0)^2 alpha / ((1 + alpha dp / 2) dp)`.
fn bottom_coefficient(alpha: f64, grid: &Grid) -> f64 {
    let w = grid.weight_face(grid.np);
    w * w * alpha / ((1.0 + 0.5 * alpha * grid.dp) * grid.dp)
}

/// `dp (w^2 dp f)` with the surface closure and an insulated top.
pub fn vertical_operator(f: &[f64], closure: &Closure, grid: &Grid) -> Vec<f64> {
    let (np, nc, dp) = (grid.np, grid.ncol(), grid.dp);
    let (alpha, target) = closure.bottom();
    let cb = bottom_coefficient(alpha, grid);
    let mut out = vec![0.0; f.len()];
    for c in 0..nc {
        for kf in 1..np {
            let w = grid.weight_face(kf);
            let flux = w * w * (f[kf * nc + c] - f[(kf - 1) * nc + c]) / dp;
            out[(kf - 1) * nc + c] += flux / dp;
            out[kf * nc + c] -= flux / dp;
        }
        let n = (np - 1) * nc + c;
        out[n] += cb * (target - f[n]);
    }
    out
}

/// `D* f = mu Delta_h f + nu dp((g p / (Rd Tbar))^2 dp f)`.
pub fn diffuse(f: &[f64], coeff: Diffusivity, closure: &Closure, grid: &Grid) -> Result<Vec<f64>, SolverError> {
    check_diffusivity(coeff)?;
    let h = horizontal_laplacian(f, closure, grid);
    let v = vertical_operator(f, closure, grid);
    Ok(h.iter().zip(&v).map(|(a, b)| coeff.mu * a + coeff.nu * b).collect())
}

fn check_diffusivity(coeff: Diffusivity) -> Result<(), SolverError> {
    for x in [coeff.mu, coeff.nu] {
        if x < 0.0 || x.is_nan() {
            return Err(SolverError::NegativeDiffusivity(x));
        }
    }
    Ok(())
}

/// Backward-Euler vertical diffusion: solves
/// `(I - dt nu V) f_new = f` column by column, `V` the operator of
/// [`vertical_operator`] (its surface target moves to the right-hand side).
pub fn implicit_vertical_diffusion(
    f: &[f64],
    nu: f64,
    dt: f64,
    closure: &Closure,
    grid: &Grid,
) -> Result<Vec<f64>, SolverError> {
    check_diffusivity(Diffusivity { mu: 0.0, nu })?;
    let (np, nc, dp) = (grid.np, grid.ncol(), grid.dp);
    let (alpha, target) = closure.bottom();
    let cb = bottom_coefficient(alpha, grid);
    let s = dt * nu;
    let face: Vec<f64> = (0..=np)
        .map(|kf| {
            let w = grid.weight_face(kf);
            if kf == 0 || kf == np {
                0.0
            } else {
                s * w * w / (dp * dp)
            }
        })
        .collect();
    let mut lower = vec![0.0; np];
    let mut diag = vec![0.0; np];
    let mut upper = vec![0.0; np];
    for k in 0..np {
        lower[k] = -face[k];
        upper[k] = -face[k + 1];
        diag[k] = 1.0 + face[k] + face[k + 1];
    }
    diag[np - 1] += s * cb;

    let mut out = vec![0.0; f.len()];
    let mut rhs = vec![0.0; np];
    let mut x = vec![0.0; np];
    for c in 0..nc {
        for k in 0..np {
            rhs[k] = f[k * nc + c];
        }
        rhs[np - 1] += s * cb * target;
        solve_tridiagonal(&lower, &diag, &upper, &rhs, &mut x).map_err(|level| SolverError::Tridiagonal { column: c, level })?;
        for k in 0..np {
            out[k * nc + c] = x[k];
        }
    }
    Ok(out)
}

/// Thomas algorithm. Returns the level of a vanishing pivot on failure.
pub fn solve_tridiagonal(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &[f64],
    x: &mut [f64],
) -> Result<(), usize> {
    let n = diag.len();
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    let mut beta = diag[0];
    if beta == 0.0 || !beta.is_finite() {
        return Err(0);
    }
    cp[0] = upper[0] / beta;
    dp[0] = rhs[0] / beta;
    for k in 1..n {
        beta = diag[k] - lower[k] * cp[k - 1];
        if beta == 0.0 || !beta.is_finite() {
            return Err(k);
        }
        cp[k] = upper[k] / beta;
        dp[k] = (rhs[k] - lower[k] * dp[k - 1]) / beta;
    }
    x[n - 1] = dp[n - 1];
    for k in (0..n - 1).rev() {
        x[k] = dp[k] - cp[k] * x[k + 1];
    }
    Ok(())
}

/// `f (v, -u)`: the horizontal part of `-f k x v`.
pub fn coriolis(u: &[f64], v: &[f64], f: f64) -> (Vec<f64>, Vec<f64>) {
    (v.iter().map(|&x| f * x).collect(), u.iter().map(|&x| -f * x).collect())
}

/// `-grad_h Phi`.
pub fn pressure_gradient_force(phi: &[f64], grid: &Grid) -> (Vec<f64>, Vec<f64>) {
    let (gx, gy) = horizontal_gradient(phi, grid);
    (gx.iter().map(|x| -x).collect(), gy.iter().map(|x| -x).collect())
}

/// Compression heating `(R T / (cp p)) omega`, built from geopotential
/// differences across interior faces so that it mirrors the pressure work
/// in the kinetic energy budget exactly.
pub fn adiabatic_heating(phi: &[f64], omega_faces: &[f64], cp: f64, grid: &Grid) -> Vec<f64> {
    let (np, nc) = (grid.np, grid.ncol());
    let mut out = vec![0.0; phi.len()];
    let scale = 1.0 / (2.0 * grid.dp * cp);
    for c in 0..nc {
        for kf in 1..np {
            let (up, down) = ((kf - 1) * nc + c, kf * nc + c);
            let work = omega_faces[kf * nc + c] * (phi[up] - phi[down]) * scale;
            out[up] += work;
            out[down] += work;
        }
    }
    out
}

/// Rain fall-out `-V dp(p qr / (Rd Tbar))`, upwind from above, with an
/// open surface and no rain entering through the top.
pub fn sedimentation(qr: &[f64], grid: &Grid, params: &Params) -> Vec<f64> {
    let fluxes = sedimentation_fluxes(qr, grid, params);
    let (np, nc) = (grid.np, grid.ncol());
    let mut out = vec![0.0; qr.len()];
    for k in 0..np {
        for c in 0..nc {
            out[k * nc + c] = (fluxes[k * nc + c] - fluxes[(k + 1) * nc + c]) / grid.dp;
        }
    }
    out
}

/// Downward rain flux on every horizontal face (`kf * ncol + c`).
pub fn sedimentation_fluxes(qr: &[f64], grid: &Grid, params: &Params) -> Vec<f64> {
    let (np, nc) = (grid.np, grid.ncol());
    let v = params.micro.terminal_velocity;
    let rd = params.physics.rd;
    let mut out = vec![0.0; (np + 1) * nc];
    for kf in 1..=np {
        let speed = v * grid.p_face[kf] / (rd * grid.tbar_face[kf]);
        for c in 0..nc {
            out[kf * nc + c] = speed * qr[(kf - 1) * nc + c];
        }
    }
    out
}

/// Boundary closures for the momentum components at one instant.
pub fn velocity_closures(alpha_u: f64) -> (Closure, Closure) {
    (Closure::VelocityX { alpha_u }, Closure::VelocityY { alpha_u })
}

/// Full momentum tendency: upwind advection, Coriolis, pressure gradient
/// and both parts of the eddy diffusion.
pub fn momentum_rhs(
    state: &State,
    diag: &Diagnosed,
    grid: &Grid,
    params: &Params,
    alpha_u: f64,
) -> Result<(Vec<f64>, Vec<f64>), SolverError> {
    let faces = face_velocities(&state.u, &state.v, &diag.omega.faces, grid);
    let (mut du, mut dv) = momentum_explicit(state, &faces, &diag.phi, grid, params, alpha_u)?;
    let (cx, cy) = velocity_closures(alpha_u);
    let nu = params.diffusion.u.nu;
    for (d, x) in du.iter_mut().zip(vertical_operator(&state.u, &cx, grid)) {
        *d += nu * x;
    }
    for (d, x) in dv.iter_mut().zip(vertical_operator(&state.v, &cy, grid)) {
        *d += nu * x;
    }
    Ok((du, dv))
}

/// Momentum tendency without the (implicitly treated) vertical diffusion.
pub fn momentum_explicit(
    state: &State,
    faces: &FaceVelocities,
    phi: &[f64],
    grid: &Grid,
    params: &Params,
    alpha_u: f64,
) -> Result<(Vec<f64>, Vec<f64>), SolverError> {
    let mu = params.diffusion.u.mu;
    check_diffusivity(params.diffusion.u)?;
    let (cx, cy) = velocity_closures(alpha_u);
    let (fx, fy) = coriolis(&state.u, &state.v, params.physics.coriolis);
    let (px, py) = pressure_gradient_force(phi, grid);
    let au = advect_advective(&state.u, faces, grid);
    let av = advect_advective(&state.v, faces, grid);
    let lu = horizontal_laplacian(&state.u, &cx, grid);
    let lv = horizontal_laplacian(&state.v, &cy, grid);
    let du = (0..grid.len()).map(|n| au[n] + fx[n] + px[n] + mu * lu[n]).collect();
    let dv = (0..grid.len()).map(|n| av[n] + fy[n] + py[n] + mu * lv[n]).collect();
    Ok((du, dv))
}
