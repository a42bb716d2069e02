//! Characteristic initial data and the nonlinearity selector.

use crate::error::EvolutionError;
use crate::evolution::grid::EvolutionGrid;

/// Coefficient A(u, v, omega, psi) of the null-form nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AMode {
    /// Linear reference flow.
    Off,
    /// A identically equal to the given constant (A = 1 is the standard null form).
    Constant(f64),
    /// A fixed bounded smooth sample coefficient exercising all arguments.
    SampleSmooth,
}

/// Cubic-and-higher terms of the model equation; only `None` is implemented
/// (toggle reserved).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum HigherOrder {
    #[default]
    None,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonlinearityConfig {
    pub a_mode: AMode,
    pub higher_order: HigherOrder,
}

impl NonlinearityConfig {
    pub fn off() -> Self {
        Self {
            a_mode: AMode::Off,
            higher_order: HigherOrder::None,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self {
            a_mode: AMode::Constant(c),
            higher_order: HigherOrder::None,
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.a_mode, AMode::Off)
    }

    /// Evaluate A at a point. Bounded along with all derivatives in every mode.
    #[inline]
    pub fn coefficient(&self, u: f64, v: f64, x: f64, psi: f64) -> f64 {
        match self.a_mode {
            AMode::Off => 0.0,
            AMode::Constant(c) => c,
            AMode::SampleSmooth => {
                0.75 * (1.0 + 0.5 * (0.05 * v).sin() * (0.05 * u).cos()) * (1.0 + 0.25 * x)
                    / (1.0 + psi * psi)
            }
        }
    }
}

/// Smooth compactly supported bump in r with a C-infinity cutoff profile,
/// amplitude epsilon, and zonal mode content (l = 0 plus an optional l = 1
/// admixture).
///
/// The profile is `exp(1 - 1/(1 - s^2))` for `s = (r - center)/width`, zero
/// outside `|s| < 1`; the support may extend through the horizon end of the
/// ingoing ray (data "on the horizon"), which is how the transversal
/// derivative gets seeded there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialData {
    pub epsilon: f64,
    pub center: f64,
    pub width: f64,
    /// Weight of the spherically symmetric part.
    pub l0: f64,
    /// Weight of the l = 1 zonal admixture.
    pub l1: f64,
}

impl InitialData {
    pub fn pure_l0(epsilon: f64, center: f64, width: f64) -> Self {
        Self {
            epsilon,
            center,
            width,
            l0: 1.0,
            l1: 0.0,
        }
    }

    /// Bump profile value at radius r (amplitude excluded).
    #[inline]
    pub fn profile(&self, r: f64) -> f64 {
        let s = (r - self.center) / self.width;
        if s * s >= 1.0 {
            0.0
        } else {
            (1.0 - 1.0 / (1.0 - s * s)).exp()
        }
    }

    /// d/dr of the profile.
    #[inline]
    pub fn profile_dr(&self, r: f64) -> f64 {
        let s = (r - self.center) / self.width;
        if s * s >= 1.0 {
            0.0
        } else {
            let om = 1.0 - s * s;
            (1.0 - 1.0 / om).exp() * (-2.0 * s / (om * om)) / self.width
        }
    }

    /// d^2/dr^2 of the profile.
    #[inline]
    pub fn profile_d2r(&self, r: f64) -> f64 {
        let s = (r - self.center) / self.width;
        if s * s >= 1.0 {
            0.0
        } else {
            let om = 1.0 - s * s;
            let e = (1.0 - 1.0 / om).exp();
            let g = -2.0 * s / (om * om);
            // d/ds [e * g] = e * (g^2 + dg/ds), dg/ds = (-2 - 6 s^2)/om^3
            (e * (g * g + (-2.0 - 6.0 * s * s) / (om * om * om))) / (self.width * self.width)
        }
    }

    /// Angular weight per node: `l0 + l1 * x` (zonal l = 1 is proportional to
    /// cos(theta); the normalization is folded into l1).
    #[inline]
    pub fn angular_weight(&self, x: f64) -> f64 {
        self.l0 + self.l1 * x
    }

    /// phi = epsilon * profile(r) * weight(x).
    #[inline]
    pub fn phi(&self, r: f64, x: f64) -> f64 {
        self.epsilon * self.profile(r) * self.angular_weight(x)
    }

    /// d(phi)/dr at fixed angle, used to seed the transversal auxiliary on
    /// the initial ingoing ray exactly.
    #[inline]
    pub fn phi_dr(&self, r: f64, x: f64) -> f64 {
        self.epsilon * self.profile_dr(r) * self.angular_weight(x)
    }

    /// The support must not be truncated at the outer (large-r) end of either
    /// initial ray; extending past the horizon end is allowed.
    pub fn validate_support(&self, grid: &EvolutionGrid) -> Result<(), EvolutionError> {
        if !(self.width > 0.0) || !(self.epsilon >= 0.0) {
            return Err(EvolutionError::Config(format!(
                "need width > 0 and epsilon >= 0, got width = {}, epsilon = {}",
                self.width, self.epsilon
            )));
        }
        let hi = self.center + self.width;
        let outer = grid.r_max();
        if hi > outer {
            return Err(EvolutionError::Config(format!(
                "data support reaches r = {hi} beyond the grid's outgoing ray end r = {outer}"
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_compact_and_smooth() {
        let d = InitialData::pure_l0(1.0, 2.0, 0.5);
        assert_eq!(d.profile(1.4), 0.0);
        assert_eq!(d.profile(2.6), 0.0);
        assert_eq!(d.profile(2.0), 1.0);
        assert!(d.profile(2.2) > 0.0);
        // derivative matches finite differences inside the support
        for r in [1.7, 1.9, 2.3] {
            let h = 1e-6;
            let fd = (d.profile(r + h) - d.profile(r - h)) / (2.0 * h);
            assert!((fd - d.profile_dr(r)).abs() < 1e-6);
            let fd2 = (d.profile(r + h) - 2.0 * d.profile(r) + d.profile(r - h)) / (h * h);
            assert!((fd2 - d.profile_d2r(r)).abs() < 1e-3);
        }
    }

    #[test]
    fn edge_taylor_vanishes_to_second_order() {
        // Second finite difference across the support edge goes to 0 as h -> 0:
        // the cutoff is C-infinity flat there.
        let d = InitialData::pure_l0(1.0, 2.0, 0.5);
        let edge = 2.5;
        let mut prev = f64::INFINITY;
        for k in 0..4 {
            let h = 0.05 / (2.0f64.powi(k));
            let dd = (d.profile(edge + h) - 2.0 * d.profile(edge) + d.profile(edge - h)).abs()
                / (h * h);
            assert!(dd <= prev + 1e-12);
            prev = dd;
        }
        assert!(prev < 1e-6);
    }

    #[test]
    fn linear_in_amplitude() {
        let d1 = InitialData::pure_l0(0.01, 2.0, 0.5);
        let d2 = InitialData::pure_l0(0.02, 2.0, 0.5);
        for r in [1.8, 2.0, 2.4] {
            assert_eq!(2.0 * d1.phi(r, 0.3), d2.phi(r, 0.3));
        }
        let z = InitialData::pure_l0(0.0, 2.0, 0.5);
        assert_eq!(z.phi(2.0, 0.1), 0.0);
    }

    #[test]
    fn smooth_coefficient_bounded() {
        let cfg = NonlinearityConfig {
            a_mode: AMode::SampleSmooth,
            higher_order: HigherOrder::None,
        };
        for u in [0.0, 13.0, 900.0] {
            for psi in [-3.0, 0.0, 0.4] {
                let a = cfg.coefficient(u, 2.0 * u, 0.5, psi);
                assert!(a.abs() <= 2.0);
            }
        }
        assert_eq!(NonlinearityConfig::off().coefficient(1.0, 2.0, 0.0, 1.0), 0.0);
    }
}
