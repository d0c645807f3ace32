//! Robin boundary data for temperature, the moisture species and velocity.

use std::f64::consts::PI;

use serde::Deserialize;

use crate::error::ConfigError;

/// Robin coefficient and target for one scalar on the bottom (`p = p0`) and
/// the lateral walls. The top boundary is always insulated.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarBoundary {
    /// `alpha_0` (1/Pa).
    pub alpha_bottom: f64,
    /// `alpha_l` (1/m).
    pub alpha_lateral: f64,
    pub target_bottom: f64,
    pub target_lateral: f64,
}

impl ScalarBoundary {
    pub const fn insulated() -> Self {
        Self {
            alpha_bottom: 0.0,
            alpha_lateral: 0.0,
            target_bottom: 0.0,
            target_lateral: 0.0,
        }
    }
}

/// Targets evaluated at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobinAt {
    pub alpha_bottom: f64,
    pub alpha_lateral: f64,
    pub target_bottom: f64,
    pub target_lateral: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundaryData {
    /// Bottom drag coefficient `alpha_u` (1/Pa) in `dp u = -alpha_u u`.
    pub alpha_u: f64,
    pub temperature: ScalarBoundary,
    pub qv: ScalarBoundary,
    pub qc: ScalarBoundary,
    pub qr: ScalarBoundary,
    /// Relative amplitude of the periodic modulation of every target, in [0, 1].
    pub time_amplitude: f64,
    /// Modulation period (s).
    pub time_period: f64,
}

impl Default for BoundaryData {
    fn default() -> Self {
        Self {
            alpha_u: 1.0e-4,
            temperature: ScalarBoundary {
                alpha_bottom: 1.0e-4,
                alpha_lateral: 1.0e-5,
                target_bottom: 270.0,
                target_lateral: 265.0,
            },
            qv: ScalarBoundary {
                alpha_bottom: 1.0e-4,
                alpha_lateral: 1.0e-5,
                target_bottom: 0.012,
                target_lateral: 0.01,
            },
            qc: ScalarBoundary::insulated(),
            qr: ScalarBoundary::insulated(),
            time_amplitude: 0.0,
            time_period: 86_400.0,
        }
    }
}

impl BoundaryData {
    /// Every Robin coefficient zero: insulated walls and a free-slip bottom.
    pub fn insulated() -> Self {
        Self {
            alpha_u: 0.0,
            temperature: ScalarBoundary::insulated(),
            qv: ScalarBoundary::insulated(),
            qc: ScalarBoundary::insulated(),
            qr: ScalarBoundary::insulated(),
            time_amplitude: 0.0,
            time_period: 86_400.0,
        }
    }

    fn modulation(&self, t: f64) -> f64 {
        1.0 + self.time_amplitude * (2.0 * PI * t / self.time_period).sin()
    }

    pub fn at(&self, which: &ScalarBoundary, t: f64) -> RobinAt {
        let m = self.modulation(t);
        RobinAt {
            alpha_bottom: which.alpha_bottom,
            alpha_lateral: which.alpha_lateral,
            target_bottom: which.target_bottom * m,
            target_lateral: which.target_lateral * m,
        }
    }

    /// Supremum over time of the bottom and lateral targets.
    pub fn target_sup(&self, which: &ScalarBoundary) -> (f64, f64) {
        let m = 1.0 + self.time_amplitude;
        (which.target_bottom * m, which.target_lateral * m)
    }

    pub fn scalars(&self) -> [&ScalarBoundary; 4] {
        [&self.temperature, &self.qv, &self.qc, &self.qr]
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let ok = self.alpha_u >= 0.0
            && self.scalars().iter().all(|s| {
                s.alpha_bottom >= 0.0
                    && s.alpha_lateral >= 0.0
                    && s.target_bottom >= 0.0
                    && s.target_lateral >= 0.0
            });
        if !ok {
            return Err(ConfigError::Invalid(
                "Robin coefficients and boundary targets >= 0 violated".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.time_amplitude) || self.time_period <= 0.0 {
            return Err(ConfigError::Invalid(
                "time_amplitude in [0, 1] and time_period > 0 violated".into(),
            ));
        }
        Ok(())
    }
}
