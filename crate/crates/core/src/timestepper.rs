//! IMEX time stepping.
//!
//! One forward Euler stage runs, in order:
//! 1. diagnose `omega` and the geopotential from the incoming state;
//! 2. explicit transport, pressure gradient, adiabatic heating,
//!    sedimentation and horizontal diffusion;
//! 3. Coriolis as an exact rotation of the provisional velocity;
//! 4. backward Euler vertical diffusion, column by column;
//! 5. barotropic projection of the new velocity (equivalently of the
//!    momentum increment, since the incoming velocity is already projected);
//! 6. the local microphysics update of every cell;
//! 7. clipping of negative scalars, with statistics;
//! 8. the clock advances.
//!
//! The two-stage scheme averages the incoming state with two chained Euler
//! stages, which keeps every convex bound of the single stage.

use crate::boundary::BoundaryData;
use crate::config::{RunConfig, Scheme};
use crate::elliptic::project_barotropic;
use crate::error::SolverError;
use crate::grid::Grid;
use crate::microphysics::{advance_cell, sources_eps, transformed_sources, Cell, Diffusivity, Params};
use crate::operators::{
    adiabatic_heating, advect_advective, advect_flux, face_velocities, horizontal_laplacian,
    implicit_vertical_diffusion, pressure_gradient_force, sedimentation, velocity_closures, Closure,
};
use crate::state::{diagnose, diagnose_omega, State};

/// Courant numbers of a chosen step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Cfl {
    pub dt: f64,
    pub horizontal: f64,
    pub vertical: f64,
    pub sedimentation: f64,
    pub diffusion: f64,
}

/// Negative values removed from one scalar field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipStats {
    pub count: usize,
    /// Integral of the removed negative part (pressure-volume measure).
    pub mass: f64,
    /// Smallest value before clipping.
    pub min_before: f64,
}

impl Default for ClipStats {
    fn default() -> Self {
        Self {
            count: 0,
            mass: 0.0,
            min_before: f64::INFINITY,
        }
    }
}

impl ClipStats {
    fn merge(&mut self, other: &ClipStats) {
        self.count += other.count;
        self.mass += other.mass;
        self.min_before = self.min_before.min(other.min_before);
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepReport {
    pub cfl: Cfl,
    /// `max |omega(p1)|` after projection.
    pub projection_residual: f64,
    pub poisson_iterations: usize,
    pub column_solves: usize,
    /// Clip statistics for `T, qv, qc, qr`.
    pub clip: [ClipStats; 4],
    /// `max |H source| / ((L/cp) max rate)` over cells with active sources.
    pub h_cancel_residual: f64,
    /// `max |(Sqv + Sqr) - Q source| / max rate`.
    pub q_sev_residual: f64,
}

impl StepReport {
    fn merge(&mut self, o: &StepReport) {
        self.projection_residual = self.projection_residual.max(o.projection_residual);
        self.poisson_iterations += o.poisson_iterations;
        self.column_solves += o.column_solves;
        for (a, b) in self.clip.iter_mut().zip(&o.clip) {
            a.merge(b);
        }
        self.h_cancel_residual = self.h_cancel_residual.max(o.h_cancel_residual);
        self.q_sev_residual = self.q_sev_residual.max(o.q_sev_residual);
    }
}

/// Everything a step needs besides the state.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub grid: Grid,
    pub params: Params,
    pub boundary: BoundaryData,
    pub scheme: Scheme,
}

/// Explicit horizontal diffusion bound `1 / (2 mu (1/dx^2 + 1/dy^2))`.
fn diffusion_bound(params: &Params, grid: &Grid) -> f64 {
    let mu = params.diffusion.all().iter().fold(0.0f64, |m, d| m.max(d.mu));
    if mu > 0.0 {
        0.5 / (mu * (1.0 / (grid.dx * grid.dx) + 1.0 / (grid.dy * grid.dy)))
    } else {
        f64::INFINITY
    }
}

/// Largest stable step: `limit` times the tightest of the advective,
/// sedimentation and diffusion bounds, clamped to `[dt_min, dt_max]`.
pub fn cfl_dt(
    state: &State,
    grid: &Grid,
    params: &Params,
    limit: f64,
    dt_min: f64,
    dt_max: f64,
) -> Result<Cfl, SolverError> {
    for (name, f) in [("u", &state.u), ("v", &state.v)] {
        if let Some(n) = f.iter().position(|x| !x.is_finite()) {
            return Err(SolverError::NonFinite {
                field: name,
                cell: n,
                step: 0,
            });
        }
    }
    let sp = speeds(state, grid, params);
    let bound = |speed: f64, h: f64| if speed > 0.0 { h / speed } else { f64::INFINITY };
    let dt = [
        bound(sp[0], grid.dx),
        bound(sp[1], grid.dy),
        bound(sp[2], grid.dp),
        bound(sp[3], grid.dp),
        diffusion_bound(params, grid),
    ]
    .into_iter()
    .fold(f64::INFINITY, f64::min)
        * limit;
    Ok(courant(sp, dt.clamp(dt_min, dt_max), grid, params))
}

/// `max |u|, max |v|, max |omega|` and the largest fall speed in `p` units.
fn speeds(state: &State, grid: &Grid, params: &Params) -> [f64; 4] {
    let umax = state.u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let vmax = state.v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let om = diagnose_omega(&state.u, &state.v, grid);
    let wmax = om.faces.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let sed = params.micro.terminal_velocity * grid.p0 / (params.physics.rd * grid.tbar_min());
    [umax, vmax, wmax, sed]
}

fn courant(sp: [f64; 4], dt: f64, grid: &Grid, params: &Params) -> Cfl {
    Cfl {
        dt,
        horizontal: dt * (sp[0] / grid.dx + sp[1] / grid.dy),
        vertical: dt * sp[2] / grid.dp,
        sedimentation: dt * sp[3] / grid.dp,
        diffusion: dt / diffusion_bound(params, grid),
    }
}

fn clip(f: &mut [f64], volume: f64) -> ClipStats {
    let mut s = ClipStats::default();
    for x in f.iter_mut() {
        s.min_before = s.min_before.min(*x);
        if *x < 0.0 {
            s.count += 1;
            s.mass += -*x * volume;
            *x = 0.0;
        }
    }
    s
}

fn rotate(u: &mut [f64], v: &mut [f64], angle: f64) {
    if angle == 0.0 {
        return;
    }
    let (s, c) = angle.sin_cos();
    for (a, b) in u.iter_mut().zip(v.iter_mut()) {
        let (x, y) = (*a, *b);
        *a = c * x + s * y;
        *b = -s * x + c * y;
    }
}

impl Model {
    pub fn new(cfg: &RunConfig) -> Self {
        Self {
            grid: Grid::new(cfg),
            params: cfg.params(),
            boundary: cfg.boundary.clone(),
            scheme: cfg.time.scheme,
        }
    }

    pub fn cfl_dt(&self, state: &State, limit: f64, dt_min: f64, dt_max: f64) -> Result<Cfl, SolverError> {
        cfl_dt(state, &self.grid, &self.params, limit, dt_min, dt_max)
    }

    /// Scalar closures `(T, qv, qc, qr)` at time `t`.
    pub fn scalar_closures(&self, t: f64) -> [Closure; 4] {
        let b = &self.boundary;
        b.scalars().map(|s| Closure::Scalar(b.at(s, t)))
    }

    /// Makes the initial velocity satisfy the column constraint.
    pub fn project_velocity(&self, state: &State) -> Result<State, SolverError> {
        let p = project_barotropic(&state.u, &state.v, &self.grid)?;
        Ok(State {
            u: p.du,
            v: p.dv,
            ..state.clone()
        })
    }

    /// Advances `state` by `dt` with regularisation `eps`.
    pub fn step(&self, state: &State, eps: f64, dt: f64) -> Result<(State, StepReport), SolverError> {
        let cfl = courant(speeds(state, &self.grid, &self.params), dt, &self.grid, &self.params);
        let (next, mut report) = match self.scheme {
            Scheme::Euler => self.euler(state, eps, dt)?,
            Scheme::Heun => {
                let (s1, mut r1) = self.euler(state, eps, dt)?;
                let (s2, r2) = self.euler(&s1, eps, dt)?;
                r1.merge(&r2);
                let mut avg = state.clone();
                for (a, b) in avg.fields_mut().into_iter().zip(s2.fields()) {
                    for (x, y) in a.iter_mut().zip(b.iter()) {
                        *x = 0.5 * (*x + y);
                    }
                }
                avg.time = state.time + dt;
                let om = diagnose_omega(&avg.u, &avg.v, &self.grid);
                r1.projection_residual = om.top(&self.grid).iter().fold(0.0f64, |m, x| m.max(x.abs()));
                (avg, r1)
            }
        };
        report.cfl = cfl;
        if let Some((field, cell)) = next.first_non_finite() {
            return Err(SolverError::NonFinite { field, cell, step: 0 });
        }
        Ok((next, report))
    }

    fn euler(&self, state: &State, eps: f64, dt: f64) -> Result<(State, StepReport), SolverError> {
        let grid = &self.grid;
        let params = &self.params;
        let n = grid.len();
        let mut report = StepReport::default();

        let diag = diagnose(state, &vec![0.0; grid.ncol()], grid, params);
        let faces = face_velocities(&state.u, &state.v, &diag.omega.faces, grid);
        let closures = self.scalar_closures(state.time);
        let d = &params.diffusion;
        let coeffs = [d.temperature, d.qv, d.qc, d.qr];

        let heating = adiabatic_heating(&diag.phi, &diag.omega.faces, params.physics.cp, grid);
        let fall = sedimentation(&state.qr, grid, params);
        let mut next = State::zeros(grid);
        next.time = state.time + dt;

        let inputs = [&state.temperature, &state.qv, &state.qc, &state.qr];
        let extras: [Option<&Vec<f64>>; 4] = [Some(&heating), None, None, Some(&fall)];
        for (slot, ((f, extra), (closure, coeff))) in inputs
            .iter()
            .zip(extras)
            .zip(closures.iter().zip(coeffs))
            .enumerate()
        {
            let out = self.transport_scalar(f, extra, closure, coeff, &faces, dt)?;
            report.column_solves += grid.ncol();
            match slot {
                0 => next.temperature = out,
                1 => next.qv = out,
                2 => next.qc = out,
                _ => next.qr = out,
            }
        }

        // Momentum.
        let du_adv = advect_advective(&state.u, &faces, grid);
        let dv_adv = advect_advective(&state.v, &faces, grid);
        let (px, py) = pressure_gradient_force(&diag.phi, grid);
        let (cx, cy) = velocity_closures(self.boundary.alpha_u);
        let mu = d.u.mu;
        let lu = horizontal_laplacian(&state.u, &cx, grid);
        let lv = horizontal_laplacian(&state.v, &cy, grid);
        let mut u: Vec<f64> = (0..n).map(|m| state.u[m] + dt * (du_adv[m] + px[m] + mu * lu[m])).collect();
        let mut v: Vec<f64> = (0..n).map(|m| state.v[m] + dt * (dv_adv[m] + py[m] + mu * lv[m])).collect();
        rotate(&mut u, &mut v, params.physics.coriolis * dt);
        let u = implicit_vertical_diffusion(&u, d.u.nu, dt, &cx, grid)?;
        let v = implicit_vertical_diffusion(&v, d.u.nu, dt, &cy, grid)?;
        report.column_solves += 2 * grid.ncol();
        let proj = project_barotropic(&u, &v, grid)?;
        report.poisson_iterations += proj.iterations;
        next.u = proj.du;
        next.v = proj.dv;
        let om = diagnose_omega(&next.u, &next.v, grid);
        report.projection_residual = om.top(grid).iter().fold(0.0f64, |m, x| m.max(x.abs()));

        self.microphysics(&mut next, eps, dt, &mut report);

        let vol = grid.cell_volume();
        let fields = [&mut next.temperature, &mut next.qv, &mut next.qc, &mut next.qr];
        for (stats, f) in report.clip.iter_mut().zip(fields) {
            *stats = clip(f, vol);
        }
        Ok((next, report))
    }

    fn transport_scalar(
        &self,
        f: &[f64],
        extra: Option<&Vec<f64>>,
        closure: &Closure,
        coeff: Diffusivity,
        faces: &crate::operators::FaceVelocities,
        dt: f64,
    ) -> Result<Vec<f64>, SolverError> {
        let grid = &self.grid;
        let adv = advect_flux(f, faces, grid);
        let lap = horizontal_laplacian(f, closure, grid);
        let mut out: Vec<f64> = (0..f.len()).map(|m| f[m] + dt * (adv[m] + coeff.mu * lap[m])).collect();
        if let Some(e) = extra {
            out.iter_mut().zip(e.iter()).for_each(|(x, y)| *x += dt * y);
        }
        implicit_vertical_diffusion(&out, coeff.nu, dt, closure, grid)
    }

    fn microphysics(&self, s: &mut State, eps: f64, dt: f64, report: &mut StepReport) {
        let grid = &self.grid;
        let params = &self.params;
        let lf = params.physics.latent_factor();
        let nc = grid.ncol();
        for m in 0..grid.len() {
            let p = grid.p[m / nc];
            let cell = Cell {
                t: s.temperature[m],
                qv: s.qv[m],
                qc: s.qc[m],
                qr: s.qr[m],
            };
            let rates = sources_eps(cell.t, cell.qv, cell.qc, cell.qr, p, eps, params);
            let scale = rates.max_magnitude();
            if scale > 0.0 {
                let tr = transformed_sources(&rates, params);
                report.h_cancel_residual = report.h_cancel_residual.max(tr.h.abs() / (lf * scale));
                report.q_sev_residual = report.q_sev_residual.max((tr.q_summed - tr.q).abs() / scale);
            }
            let out = advance_cell(cell, p, dt, eps, params);
            s.temperature[m] = out.t;
            s.qv[m] = out.qv;
            s.qc[m] = out.qc;
            s.qr[m] = out.qr;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::ScalarBoundary;
    use crate::microphysics::MicroParams;
    use nalgebra::DMatrix;

    fn model(nx: usize, np: usize) -> Model {
        let mut cfg = RunConfig::desk_scale();
        cfg.grid.nx = nx;
        cfg.grid.ny = nx;
        cfg.grid.np = np;
        Model::new(&cfg)
    }

    fn dry(m: &mut Model) {
        m.params.micro = MicroParams::default().without_sources();
        m.params.micro.terminal_velocity = 0.0;
    }

    #[test]
    fn quiet_state_bounds() {
        let m = model(6, 4);
        let s = State::zeros(&m.grid);
        let mut p = m.params;
        p.micro.terminal_velocity = 0.0;
        p.diffusion.u.mu = 0.0;
        p.diffusion.temperature.mu = 0.0;
        p.diffusion.qv.mu = 0.0;
        p.diffusion.qc.mu = 0.0;
        p.diffusion.qr.mu = 0.0;
        let c = cfl_dt(&s, &m.grid, &p, 0.1, 1.0, 600.0).unwrap();
        assert_eq!(c.dt, 600.0);
    }

    #[test]
    fn doubling_wind_halves_advective_bound() {
        let m = model(6, 4);
        let mut s = State::zeros(&m.grid);
        s.u = vec![10.0; m.grid.len()];
        let a = cfl_dt(&s, &m.grid, &m.params, 0.1, 1e-6, 1e9).unwrap().dt;
        s.u = vec![20.0; m.grid.len()];
        let b = cfl_dt(&s, &m.grid, &m.params, 0.1, 1e-6, 1e9).unwrap().dt;
        // Sedimentation may bind first; compare the pure advective bound too.
        assert!(b <= a);
        let mut p = m.params;
        p.micro.terminal_velocity = 0.0;
        for d in [&mut p.diffusion.u, &mut p.diffusion.temperature, &mut p.diffusion.qv, &mut p.diffusion.qc, &mut p.diffusion.qr] {
            d.mu = 0.0;
        }
        let a = cfl_dt(&State { u: vec![10.0; m.grid.len()], ..s.clone() }, &m.grid, &p, 0.1, 1e-6, 1e9).unwrap().dt;
        let b = cfl_dt(&State { u: vec![20.0; m.grid.len()], ..s.clone() }, &m.grid, &p, 0.1, 1e-6, 1e9).unwrap().dt;
        assert!((a / b - 2.0).abs() < 1e-12);
    }

    #[test]
    fn non_finite_velocity_rejected() {
        let m = model(4, 3);
        let mut s = State::zeros(&m.grid);
        s.v[5] = f64::NAN;
        assert!(matches!(m.cfl_dt(&s, 0.1, 1.0, 10.0), Err(SolverError::NonFinite { field: "v", cell: 5, .. })));
    }

    #[test]
    fn zero_state_is_a_fixed_point() {
        let mut m = model(5, 4);
        m.boundary = BoundaryData::insulated();
        m.params.physics.coriolis = 0.0;
        let mut s = State::zeros(&m.grid);
        for _ in 0..5 {
            s = m.step(&s, 1e-3, 100.0).unwrap().0;
        }
        assert!(s.fields().iter().all(|f| f.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn uniform_boundary_temperature_is_steady() {
        let mut m = model(5, 4);
        dry(&mut m);
        let tb = 285.0;
        m.boundary.temperature = ScalarBoundary {
            alpha_bottom: 1e-4,
            alpha_lateral: 1e-5,
            target_bottom: tb,
            target_lateral: tb,
        };
        m.boundary.qv = ScalarBoundary::insulated();
        let mut s = State::zeros(&m.grid);
        s.temperature = vec![tb; m.grid.len()];
        // A uniform temperature still has a baroclinic geopotential gradient
        // of zero, so nothing can move.
        for _ in 0..5 {
            s = m.step(&s, 1e-3, 100.0).unwrap().0;
        }
        assert!(s.temperature.iter().all(|&x| (x - tb).abs() < 1e-10));
        assert!(s.u.iter().chain(&s.v).all(|&x| x.abs() < 1e-12));
    }

    #[test]
    fn cold_start_warms_monotonically() {
        let mut m = model(6, 4);
        dry(&mut m);
        m.boundary.alpha_u = 0.0;
        m.boundary.qv = ScalarBoundary::insulated();
        m.boundary.temperature.target_lateral = m.boundary.temperature.target_bottom;
        let mut s = State::zeros(&m.grid);
        s.temperature = vec![m.boundary.temperature.target_bottom - 20.0; m.grid.len()];
        let mean = |s: &State| s.temperature.iter().sum::<f64>() / s.temperature.len() as f64;
        let mut prev = mean(&s);
        for _ in 0..40 {
            let dt = m.cfl_dt(&s, 0.1, 1.0, 600.0).unwrap().dt;
            s = m.step(&s, 1e-3, dt).unwrap().0;
            let now = mean(&s);
            assert!(now > prev, "{now} <= {prev}");
            prev = now;
        }
        assert!(prev < m.boundary.temperature.target_bottom);
    }

    #[test]
    fn step_reports_tiny_projection_residual() {
        let m = model(8, 4);
        let mut s = State::zeros(&m.grid);
        for n in 0..m.grid.len() {
            let (i, j, k) = m.grid.ijk(n);
            s.u[n] = 5.0 * ((i + 2 * j + k) as f64).sin();
            s.v[n] = 5.0 * ((3 * i + j) as f64).cos();
            s.temperature[n] = 280.0 + (i as f64);
        }
        let s = m.project_velocity(&s).unwrap();
        let (_, r) = m.step(&s, 1e-3, 60.0).unwrap();
        let bound = 1e-8 * 5.0 / m.grid.lx.max(m.grid.ly) * (m.grid.p0 - m.grid.p1);
        assert!(r.projection_residual <= bound, "{}", r.projection_residual);
    }

    #[test]
    fn heun_keeps_fixed_point() {
        let mut m = model(4, 3);
        m.scheme = Scheme::Heun;
        m.boundary = BoundaryData::insulated();
        let s = State::zeros(&m.grid);
        let (n, _) = m.step(&s, 1e-3, 50.0).unwrap();
        assert!(n.fields().iter().all(|f| f.iter().all(|&x| x == 0.0)));
        assert_eq!(n.time, 50.0);
    }

    #[test]
    fn maximum_principle_for_moisture_without_sources() {
        let mut m = model(8, 5);
        dry(&mut m);
        m.boundary.qv = ScalarBoundary {
            alpha_bottom: 1e-4,
            alpha_lateral: 1e-5,
            target_bottom: 0.012,
            target_lateral: 0.01,
        };
        let mut s = State::zeros(&m.grid);
        for n in 0..m.grid.len() {
            let (i, j, k) = m.grid.ijk(n);
            s.u[n] = 8.0 * ((i + j) as f64 * 0.7).sin();
            s.v[n] = 8.0 * ((i + 2 * k) as f64 * 0.4).cos();
            s.temperature[n] = 280.0;
            s.qv[n] = 0.004 + 0.002 * ((i * j + k) % 5) as f64;
        }
        let mut s = m.project_velocity(&s).unwrap();
        let lo = 0.004f64.min(0.01);
        let hi = 0.012f64.max(0.012);
        for _ in 0..60 {
            let dt = m.cfl_dt(&s, 0.1, 1.0, 600.0).unwrap().dt;
            s = m.step(&s, 1e-3, dt).unwrap().0;
            for &q in &s.qv {
                assert!(q >= lo - 1e-12 && q <= hi + 1e-12, "{q}");
            }
        }
    }

    #[test]
    fn implicit_update_is_contractive() {
        // The per-column update matrix (I - dt nu V)^{-1} has spectral
        // radius <= 1 for random reference temperature profiles.
        for seed in 0..10u64 {
            let top = 200.0 + 10.0 * seed as f64;
            let bottom = 320.0 - 5.0 * seed as f64;
            let g = Grid::from_parts((1, 1, 9), (1e5, 1e5, 1e4, 1e5), (top, bottom), 9.81, 287.0);
            let c = Closure::Scalar(crate::boundary::RobinAt {
                alpha_bottom: 1e-4 * (seed + 1) as f64,
                alpha_lateral: 0.0,
                target_bottom: 0.0,
                target_lateral: 0.0,
            });
            let np = g.np;
            let mut a = DMatrix::<f64>::zeros(np, np);
            for col in 0..np {
                let mut e = vec![0.0; np];
                e[col] = 1.0;
                let x = implicit_vertical_diffusion(&e, 10.0, 1e4 * (seed + 1) as f64, &c, &g).unwrap();
                for row in 0..np {
                    a[(row, col)] = x[row];
                }
            }
            let rho = a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(rho <= 1.0 + 1e-12, "{rho}");
        }
    }
}
