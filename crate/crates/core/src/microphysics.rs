//! Warm-rain bulk microphysics: saturation closure, phase-change and
//! conversion rates, their clipped and regularized variants, and a
//! positivity-preserving cell-local update used by the time stepper.

use serde::Deserialize;

/// Thermodynamic constants.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Physics {
    /// Gas constant used in the thermodynamics (J/(kg K)).
    pub r: f64,
    /// Dry-air gas constant used in the diffusion weight and sedimentation.
    pub rd: f64,
    pub cp: f64,
    pub latent_heat: f64,
    pub g: f64,
    /// Coriolis parameter (1/s).
    pub coriolis: f64,
}

impl Default for Physics {
    fn default() -> Self {
        Self {
            r: 287.0,
            rd: 287.0,
            cp: 1004.0,
            latent_heat: 2.5e6,
            g: 9.81,
            coriolis: 1.0e-4,
        }
    }
}

impl Physics {
    /// `R / cp`.
    pub fn kappa(&self) -> f64 {
        self.r / self.cp
    }

    /// `L / cp` (K per unit mixing ratio).
    pub fn latent_factor(&self) -> f64 {
        self.latent_heat / self.cp
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MicroParams {
    pub c_ev: f64,
    pub c_cr: f64,
    pub c_ac: f64,
    pub c_cd: f64,
    pub c_cn: f64,
    /// Evaporation exponent, in (0, 1].
    pub beta: f64,
    /// Autoconversion threshold (kg/kg).
    pub q_ac_star: f64,
    /// Saturation vanishes at and below this temperature (K).
    pub t_a: f64,
    /// Saturation vanishes at and above this temperature (K).
    pub t_b: f64,
    /// Peak saturation mixing ratio (kg/kg).
    pub q_vs_star: f64,
    /// Terminal fall parameter `V`.
    pub terminal_velocity: f64,
    /// Multiply the saturation tent by `min(1, p_ref / p)`.
    pub pressure_scaling: bool,
    pub p_ref: f64,
}

impl Default for MicroParams {
    fn default() -> Self {
        Self {
            c_ev: 1.0,
            c_cr: 1.0,
            c_ac: 1.0,
            c_cd: 1.0,
            c_cn: 1.0,
            beta: 0.5,
            q_ac_star: 1.0e-4,
            t_a: 240.0,
            t_b: 320.0,
            q_vs_star: 0.02,
            terminal_velocity: 50.0,
            pressure_scaling: false,
            p_ref: 1.0e5,
        }
    }
}

impl MicroParams {
    /// Lipschitz constant of the saturation tent in `T`.
    pub fn qvs_lipschitz(&self) -> f64 {
        if self.t_b > self.t_a {
            2.0 * self.q_vs_star / (self.t_b - self.t_a)
        } else {
            0.0
        }
    }

    /// Disable every phase change and conversion.
    pub fn without_sources(mut self) -> Self {
        self.c_ev = 0.0;
        self.c_cr = 0.0;
        self.c_ac = 0.0;
        self.c_cd = 0.0;
        self.c_cn = 0.0;
        self
    }
}

/// Horizontal (`mu`) and vertical (`nu`) eddy coefficients for one field.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Diffusivity {
    pub mu: f64,
    pub nu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Diffusion {
    pub u: Diffusivity,
    pub temperature: Diffusivity,
    pub qv: Diffusivity,
    pub qc: Diffusivity,
    pub qr: Diffusivity,
}

impl Default for Diffusion {
    fn default() -> Self {
        let d = Diffusivity { mu: 1.0e4, nu: 10.0 };
        Self {
            u: d,
            temperature: d,
            qv: d,
            qc: d,
            qr: d,
        }
    }
}

impl Diffusion {
    pub fn all(&self) -> [Diffusivity; 5] {
        [self.u, self.temperature, self.qv, self.qc, self.qr]
    }
}

/// Everything the model needs besides grid and boundary data.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Params {
    pub physics: Physics,
    pub micro: MicroParams,
    pub diffusion: Diffusion,
}


#[inline]
fn pos(x: f64) -> f64 {
    x.max(0.0)
}

/// Piecewise-linear tent in `T`, zero outside `(TA, TB)` and peaking at
/// `q_vs_star` halfway between.
pub fn saturation_mixing_ratio(p: f64, t: f64, m: &MicroParams) -> f64 {
    if t <= m.t_a || t >= m.t_b {
        return 0.0;
    }
    let mid = 0.5 * (m.t_a + m.t_b);
    let half = 0.5 * (m.t_b - m.t_a);
    let tent = m.q_vs_star * pos(1.0 - ((t - mid) / half).abs());
    if m.pressure_scaling {
        tent * (m.p_ref / p).min(1.0)
    } else {
        tent
    }
}

/// Source rates at one point (per second), plus the latent heating rate.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SourceEval {
    pub ev: f64,
    pub cd: f64,
    pub ac: f64,
    pub cr: f64,
    /// `(L / cp) (Scd - Sev)` in K/s.
    pub latent: f64,
}

impl SourceEval {
    /// Species tendencies `(qv, qc, qr)` implied by the rates.
    pub fn species(&self) -> (f64, f64, f64) {
        (
            self.ev - self.cd,
            self.cd - self.ac - self.cr,
            self.ac + self.cr - self.ev,
        )
    }

    pub fn max_magnitude(&self) -> f64 {
        self.ev.abs().max(self.cd.abs()).max(self.ac.abs()).max(self.cr.abs())
    }
}

/// Closures of the original system; the evaporation rate carries the
/// exponent `beta` directly and no gas-constant factor.
pub fn sources_raw(t: f64, qv: f64, qc: f64, qr: f64, p: f64, params: &Params) -> SourceEval {
    let m = &params.micro;
    let qvs = saturation_mixing_ratio(p, t, m);
    let ev = m.c_ev * t * pos(qr).powf(m.beta) * pos(qvs - qv);
    let cr = m.c_cr * qc * qr;
    let ac = m.c_ac * pos(qc - m.q_ac_star);
    let cd = m.c_cd * (qv - qvs) * qc + m.c_cn * pos(qv - qvs);
    SourceEval {
        ev,
        cd,
        ac,
        cr,
        latent: params.physics.latent_factor() * (cd - ev),
    }
}

/// `qr (qr + eps)^(beta - 1)`, Lipschitz in `qr >= 0` for fixed `eps > 0`.
#[inline]
pub fn regularized_rain_factor(qr: f64, eps: f64, beta: f64) -> f64 {
    let q = pos(qr);
    q * (q + eps).powf(beta - 1.0)
}

/// Clipped closures of the regularized system.
pub fn sources_eps(
    t: f64,
    qv: f64,
    qc: f64,
    qr: f64,
    p: f64,
    eps: f64,
    params: &Params,
) -> SourceEval {
    let m = &params.micro;
    let qvs = saturation_mixing_ratio(p, t, m);
    let ev = m.c_ev
        * params.physics.r
        * pos(t)
        * regularized_rain_factor(qr, eps, m.beta)
        * pos(qvs - qv);
    let cr = m.c_cr * pos(qc) * pos(qr);
    let ac = m.c_ac * pos(qc - m.q_ac_star);
    let cd = m.c_cd * (pos(qv) - qvs) * pos(qc) + m.c_cn * pos(qv - qvs);
    SourceEval {
        ev,
        cd,
        ac,
        cr,
        latent: params.physics.latent_factor() * (cd - ev),
    }
}

/// Sources of `Q = qv + qr` and of the microphysical part of
/// `H = T - (L/cp)(qc + qr)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformedSources {
    /// `Sac + Scr - Scd`; evaporation does not appear.
    pub q: f64,
    /// Assembled from the species tendencies; zero up to roundoff.
    pub h: f64,
    /// `Q` source assembled as the sum of the `qv` and `qr` tendencies.
    pub q_summed: f64,
}

pub fn transformed_sources(s: &SourceEval, params: &Params) -> TransformedSources {
    let lf = params.physics.latent_factor();
    let (dqv, dqc, dqr) = s.species();
    TransformedSources {
        q: s.ac + s.cr - s.cd,
        h: s.latent - lf * (dqc + dqr),
        q_summed: dqv + dqr,
    }
}

/// Upper bounds on the rates for inputs inside the given ceilings.
pub fn source_bound(t_max: f64, qv_max: f64, qc_max: f64, qr_max: f64, eps: f64, params: &Params) -> SourceEval {
    let m = &params.micro;
    let rain = regularized_rain_factor(qr_max, eps, m.beta).max(pos(qr_max).powf(m.beta));
    let ev = m.c_ev * params.physics.r * t_max * rain * m.q_vs_star;
    let cr = m.c_cr * qc_max * qr_max;
    let ac = m.c_ac * qc_max;
    let cd = m.c_cd * (qv_max + m.q_vs_star) * qc_max + m.c_cn * qv_max;
    SourceEval {
        ev,
        cd,
        ac,
        cr,
        latent: params.physics.latent_factor() * cd.max(ev),
    }
}

/// Thermodynamic and moisture values of one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub t: f64,
    pub qv: f64,
    pub qc: f64,
    pub qr: f64,
}

/// Advance the local source ODE of one cell over `dt`.
///
/// Rates come from [`sources_eps`] at the incoming state. Each transfer is
/// taken in the form `q a / (1 + a)` with `a = dt * rate / q`, so no donor
/// can be exhausted, and phase changes are capped by the distance to
/// saturation, so vapor never crosses `qvs(p, T)` within the update.
/// Temperature follows from the latent heat released by the net change of
/// liquid water, which leaves `T - (L/cp)(qc + qr)` unchanged.
pub fn advance_cell(c: Cell, p: f64, dt: f64, eps: f64, params: &Params) -> Cell {
    let m = &params.micro;
    let (mut qv, mut qc, mut qr) = (c.qv, c.qc, c.qr);
    let liquid_before = c.qc + c.qr;
    let qvs = saturation_mixing_ratio(p, c.t, m);
    let s = sources_eps(c.t, qv, qc, qr, p, eps, params);

    if qv > qvs {
        let excess = qv - qvs;
        let a = dt * pos(s.cd);
        if a > 0.0 {
            let x = (excess * a / (excess + a)).min(qv);
            qv -= x;
            qc += x;
        }
    } else if qv < qvs {
        let deficit = qvs - qv;
        let a_c = dt * m.c_cd * deficit;
        let mut x_c = if qc > 0.0 { qc * (a_c / (1.0 + a_c)) } else { 0.0 };
        let mut x_r = if qr > 0.0 && s.ev > 0.0 {
            let a_r = dt * s.ev / qr;
            qr * (a_r / (1.0 + a_r))
        } else {
            0.0
        };
        let total = x_c + x_r;
        if total > deficit {
            let scale = deficit / total;
            x_c *= scale;
            x_r *= scale;
        }
        qc -= x_c.min(qc);
        qr -= x_r.min(qr);
        qv += x_c + x_r;
    }

    if qc > 0.0 {
        let rate = m.c_ac * pos(qc - m.q_ac_star) + m.c_cr * qc * pos(qr);
        let a = dt * rate / qc;
        let y = (qc * (a / (1.0 + a))).min(qc);
        qc -= y;
        qr += y;
    }

    let t = c.t + params.physics.latent_factor() * ((qc + qr) - liquid_before);
    Cell { t, qv, qc, qr }
}
