//! Prognostic state and the fields diagnosed from it.

use crate::grid::Grid;
use crate::microphysics::Params;
use crate::operators::horizontal_divergence;

pub const FIELD_NAMES: [&str; 6] = ["u", "v", "T", "qv", "qc", "qr"];

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub temperature: Vec<f64>,
    pub qv: Vec<f64>,
    pub qc: Vec<f64>,
    pub qr: Vec<f64>,
    /// Model time (s).
    pub time: f64,
}

impl State {
    pub fn zeros(grid: &Grid) -> Self {
        let z = vec![0.0; grid.len()];
        Self {
            u: z.clone(),
            v: z.clone(),
            temperature: z.clone(),
            qv: z.clone(),
            qc: z.clone(),
            qr: z,
            time: 0.0,
        }
    }

    pub fn fields(&self) -> [&Vec<f64>; 6] {
        [&self.u, &self.v, &self.temperature, &self.qv, &self.qc, &self.qr]
    }

    pub fn fields_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [
            &mut self.u,
            &mut self.v,
            &mut self.temperature,
            &mut self.qv,
            &mut self.qc,
            &mut self.qr,
        ]
    }

    /// The non-negative scalars `(T, qv, qc, qr)`.
    pub fn scalars(&self) -> [&Vec<f64>; 4] {
        [&self.temperature, &self.qv, &self.qc, &self.qr]
    }

    /// First non-finite entry as `(field name, flat index)`.
    pub fn first_non_finite(&self) -> Option<(&'static str, usize)> {
        self.fields()
            .iter()
            .zip(FIELD_NAMES)
            .find_map(|(f, name)| f.iter().position(|x| !x.is_finite()).map(|n| (name, n)))
    }
}

/// Vertical velocity at cell centres and at the `np + 1` levels of faces.
#[derive(Debug, Clone, PartialEq)]
pub struct Omega {
    pub center: Vec<f64>,
    /// Face-major, `kf * ncol + c`; row `np` (the surface) is zero.
    pub faces: Vec<f64>,
}

impl Omega {
    /// `omega` on the top boundary, one value per column.
    pub fn top<'a>(&'a self, grid: &Grid) -> &'a [f64] {
        &self.faces[..grid.ncol()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnosed {
    pub omega: Omega,
    pub phi: Vec<f64>,
    pub phi_s: Vec<f64>,
    pub theta: Vec<f64>,
}

/// `omega(p) = int_p^{p0} div_h u ds`, zero on the surface.
pub fn diagnose_omega(u: &[f64], v: &[f64], grid: &Grid) -> Omega {
    let div = horizontal_divergence(u, v, grid);
    Omega {
        center: grid.vertical_integral(&div),
        faces: grid.vertical_integral_faces(&div),
    }
}

/// `Phi(p) = Phi_s + int_p^{p0} R T / s ds`.
pub fn diagnose_geopotential(temperature: &[f64], phi_s: &[f64], grid: &Grid, r: f64) -> Vec<f64> {
    // Layer thicknesses R T ln(p_lower / p_upper): exact for isothermal
    // layers and monotone in p for any positive temperature.
    let (nc, np) = (grid.ncol(), grid.np);
    let mut phi = vec![0.0; temperature.len()];
    let surface = (grid.p0 / grid.p[np - 1]).ln();
    let between: Vec<f64> = (1..np).map(|k| (grid.p[k] / grid.p[k - 1]).ln()).collect();
    for c in 0..nc {
        let t = |k: usize| temperature[k * nc + c];
        let mut acc = phi_s[c] + r * t(np - 1) * surface;
        phi[(np - 1) * nc + c] = acc;
        for k in (0..np - 1).rev() {
            acc += r * 0.5 * (t(k) + t(k + 1)) * between[k];
            phi[k * nc + c] = acc;
        }
    }
    phi
}

/// `theta = T (p0 / p)^kappa`.
pub fn potential_temperature(temperature: &[f64], grid: &Grid, kappa: f64) -> Vec<f64> {
    let factor: Vec<f64> = grid.p.iter().map(|&p| (grid.p0 / p).powf(kappa)).collect();
    temperature
        .iter()
        .enumerate()
        .map(|(n, &t)| t * factor[grid.ijk(n).2])
        .collect()
}

pub fn temperature_from_theta(theta: &[f64], grid: &Grid, kappa: f64) -> Vec<f64> {
    let factor: Vec<f64> = grid.p.iter().map(|&p| (grid.p0 / p).powf(kappa)).collect();
    theta
        .iter()
        .enumerate()
        .map(|(n, &th)| th / factor[grid.ijk(n).2])
        .collect()
}

/// Split into the vertical mean (one value per column) and the deviation.
pub fn baroclinic_split(u: &[f64], grid: &Grid) -> (Vec<f64>, Vec<f64>) {
    let nc = grid.ncol();
    let mut mean = vec![0.0; nc];
    for (n, &x) in u.iter().enumerate() {
        mean[n % nc] += x;
    }
    let inv = 1.0 / grid.np as f64;
    mean.iter_mut().for_each(|m| *m *= inv);
    let dev = u.iter().enumerate().map(|(n, &x)| x - mean[n % nc]).collect();
    (mean, dev)
}

pub fn diagnose(state: &State, phi_s: &[f64], grid: &Grid, params: &Params) -> Diagnosed {
    Diagnosed {
        omega: diagnose_omega(&state.u, &state.v, grid),
        phi: diagnose_geopotential(&state.temperature, phi_s, grid, params.physics.r),
        phi_s: phi_s.to_vec(),
        theta: potential_temperature(&state.temperature, grid, params.physics.kappa()),
    }
}
