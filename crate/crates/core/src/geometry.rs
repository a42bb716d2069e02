//! Exact extremal Reissner-Nordstrom background scalars and coordinate maps.
//!
//! Everything here is a closed-form function of the areal radius `r` for a
//! black hole of mass `M` in geometric units, exterior side only (`r >= M`).
//! The horizon factor `D(r) = (1 - M/r)^2` has a double root at `r = M`, so
//! the tortoise coordinate diverges polynomially (not logarithmically) toward
//! the horizon and the inversion needs a near-horizon asymptotic seed.
//!
//! Double-null coordinates are `u = v - 2 r*`, so `r*(r(u,v)) = (v - u)/2`.
//! Vector-field dictionary (ingoing Eddington-Finkelstein `T = d/dv`,
//! `Y = d/dr` at fixed v; double-null `L = d/dv`, `Lbar = d/du`):
//!
//! ```text
//!     L = T + (D/2) Y,      Lbar = -(D/2) Y,      T = L + Lbar,
//! ```
//!
//! hence `Y f = -(2/D) Lbar f` at fixed v wherever `D > 0`.

use crate::error::GeometryError;

/// Extremal Reissner-Nordstrom background, parametrized by the mass alone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackgroundErn {
    mass: f64,
}

impl Default for BackgroundErn {
    /// Geometric units with `M = 1`.
    fn default() -> Self {
        Self { mass: 1.0 }
    }
}

impl BackgroundErn {
    pub fn new(mass: f64) -> Result<Self, GeometryError> {
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(GeometryError::Domain {
                r: mass,
                constraint: "mass must be positive and finite",
            });
        }
        Ok(Self { mass })
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }
}

/// A double-null coordinate pair; `r*(r(u,v)) = (v - u)/2` by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NullPoint {
    pub u: f64,
    pub v: f64,
}

impl NullPoint {
    pub fn rstar(&self) -> f64 {
        0.5 * (self.v - self.u)
    }
}

/// Horizon factor `D(r) = (1 - M/r)^2`; exactly 0 at `r = M`.
pub fn metric_d(r: f64, bg: &BackgroundErn) -> Result<f64, GeometryError> {
    let m = bg.mass();
    if r < m {
        return Err(GeometryError::Domain {
            r,
            constraint: "interior r < M is not modeled",
        });
    }
    let s = 1.0 - m / r;
    Ok(s * s)
}

/// `D'(r) = 2 M (r - M) / r^3`; vanishes at `r = M` (degenerate surface gravity).
pub fn metric_dprime(r: f64, bg: &BackgroundErn) -> Result<f64, GeometryError> {
    let m = bg.mass();
    if r < m {
        return Err(GeometryError::Domain {
            r,
            constraint: "interior r < M is not modeled",
        });
    }
    Ok(2.0 * m * (r - m) / (r * r * r))
}

/// `D''(r) = 2 M (3M - 2r) / r^4`, needed by the horizon transport identities.
pub fn metric_dsecond(r: f64, bg: &BackgroundErn) -> Result<f64, GeometryError> {
    let m = bg.mass();
    if r < m {
        return Err(GeometryError::Domain {
            r,
            constraint: "interior r < M is not modeled",
        });
    }
    Ok(2.0 * m * (3.0 * m - 2.0 * r) / (r * r * r * r))
}

/// Tortoise coordinate
/// `r*(r) = r - M - M^2/(r - M) + 2 M ln((r - M)/M)`,
///
/// the antiderivative of `1/D` normalized so that `r*(2M) = 0`. Strictly
/// increasing on `r > M`, diverging to `-inf` as `r -> M+` like
/// `-M^2/(r - M)`. The Couch-Torrence inversion maps `r*` to `-r*` exactly
/// in this normalization.
pub fn tortoise(r: f64, bg: &BackgroundErn) -> Result<f64, GeometryError> {
    let m = bg.mass();
    if r <= m {
        return Err(GeometryError::Domain {
            r,
            constraint: "tortoise is defined on r > M",
        });
    }
    let x = r - m;
    Ok(x - m * m / x + 2.0 * m * (x / m).ln())
}

const INVERT_MAX_ITERS: usize = 200;

/// Invert the tortoise map: find `r > M` with `r*(r) = x`.
///
/// Safeguarded Newton inside a sign-confirmed bracket, with bisection as the
/// fallback, so convergence is guaranteed by monotonicity of `r*`. For
/// `x << -M` the Newton seed is the asymptote `r = M + M^2/(-x)`, which
/// avoids the catastrophic cancellation in `r - M` near the horizon.
pub fn radius_from_rstar(x: f64, bg: &BackgroundErn, tol: f64) -> Result<f64, GeometryError> {
    if !(tol > 0.0) {
        return Err(GeometryError::BadTolerance(tol));
    }
    let m = bg.mass();
    let f = |r: f64| tortoise(r, bg).expect("bracket stays in r > M") - x;

    // Bracket: r* < 0 branch needs a lower end very close to the horizon.
    let mut lo = m * (1.0 + 1e-14);
    let mut hi = (2.0 * m).max(m + 2.0 * m * m / x.abs().max(1e-30) + x.abs() + 10.0 * m);
    if f(lo) > 0.0 {
        // x below the representable range of the map; clamp to the bracket end.
        return Ok(lo);
    }
    while f(hi) < 0.0 {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(GeometryError::NonConvergence { x, lo, hi });
        }
    }

    // Seed: near-horizon asymptote when x is deeply negative, else midpoint.
    let mut r = if x < -4.0 * m {
        (m + m * m / (-x)).clamp(lo, hi)
    } else {
        0.5 * (lo + hi)
    };

    let target = tol * x.abs().max(1.0);
    for _ in 0..INVERT_MAX_ITERS {
        let fr = f(r);
        if fr.abs() <= target {
            return Ok(r);
        }
        if fr > 0.0 {
            hi = r;
        } else {
            lo = r;
        }
        // dr*/dr = 1/D.
        let d = metric_d(r, bg)?;
        let newton = r - fr * d;
        r = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= f64::EPSILON * hi {
            return Ok(r);
        }
    }
    Err(GeometryError::NonConvergence { x, lo, hi })
}

/// Couch-Torrence radial inversion `r -> M + M^2/(r - M)`.
///
/// Involutive on `r > M` with unique fixed point `r = 2M`; exchanges the
/// horizon end and the infinity end of the exterior.
pub fn couch_torrence(r: f64, bg: &BackgroundErn) -> Result<f64, GeometryError> {
    let m = bg.mass();
    if r <= m {
        return Err(GeometryError::Domain {
            r,
            constraint: "Couch-Torrence map is defined on r > M",
        });
    }
    Ok(m + m * m / (r - m))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bg() -> BackgroundErn {
        BackgroundErn::default()
    }

    #[test]
    fn metric_d_closed_form_points() {
        let b = bg();
        assert_eq!(metric_d(1.0, &b).unwrap(), 0.0);
        assert_eq!(metric_d(2.0, &b).unwrap(), 0.25);
        assert!((metric_d(1e6, &b).unwrap() - 1.0).abs() < 3e-6);
        assert!(metric_d(0.5, &b).is_err());
    }

    #[test]
    fn metric_dprime_closed_form_and_fd() {
        let b = bg();
        assert_eq!(metric_dprime(1.0, &b).unwrap(), 0.0);
        assert_eq!(metric_dprime(2.0, &b).unwrap(), 0.25);
        // Centered finite difference of D at r = 3 matches to O(h^2).
        let r = 3.0;
        for h in [1e-3, 5e-4] {
            let fd = (metric_d(r + h, &b).unwrap() - metric_d(r - h, &b).unwrap()) / (2.0 * h);
            let exact = metric_dprime(r, &b).unwrap();
            assert!((fd - exact).abs() < 2.0 * h * h, "h={h}: {fd} vs {exact}");
        }
    }

    #[test]
    fn metric_dsecond_matches_fd_of_dprime() {
        let b = bg();
        let r = 1.7;
        let h = 1e-4;
        let fd =
            (metric_dprime(r + h, &b).unwrap() - metric_dprime(r - h, &b).unwrap()) / (2.0 * h);
        assert!((fd - metric_dsecond(r, &b).unwrap()).abs() < 1e-7);
    }

    #[test]
    fn tortoise_reference_values() {
        let b = bg();
        // r* vanishes at the Couch-Torrence fixed sphere r = 2M.
        assert!(tortoise(2.0, &b).unwrap().abs() < 1e-14);
        // Dominated by -M^2/(r-M) = -1000 near the horizon.
        let tn = tortoise(1.001, &b).unwrap();
        let want = 0.001 - 1000.0 + 2.0 * (0.001f64).ln();
        assert!((tn - want).abs() < 1e-9, "{tn}");
        assert!((tn + 1013.81).abs() < 0.01, "{tn}");
        assert!(tortoise(1.0, &b).is_err());
    }

    #[test]
    fn tortoise_derivative_is_inverse_horizon_factor() {
        // The defining property of the map: d(r*)/dr = 1/D, which is what
        // makes u = v - 2 r* a null coordinate.
        let b = bg();
        for r in [1.05, 1.5, 2.0, 3.7, 20.0] {
            let h = 1e-6 * r;
            let fd = (tortoise(r + h, &b).unwrap() - tortoise(r - h, &b).unwrap()) / (2.0 * h);
            let want = 1.0 / metric_d(r, &b).unwrap();
            assert!((fd - want).abs() < 1e-5 * want, "r={r}: {fd} vs {want}");
        }
    }

    #[test]
    fn couch_torrence_antisymmetrizes_tortoise() {
        let b = bg();
        for r in [1.2, 1.7, 2.0, 3.0, 9.0] {
            let x = tortoise(r, &b).unwrap();
            let xi = tortoise(couch_torrence(r, &b).unwrap(), &b).unwrap();
            assert!((x + xi).abs() < 1e-10 * x.abs().max(1.0), "r={r}: {x} {xi}");
        }
    }

    #[test]
    fn tortoise_strictly_increasing() {
        let b = bg();
        let mut prev = f64::NEG_INFINITY;
        let mut r = 1.0001;
        while r < 100.0 {
            let t = tortoise(r, &b).unwrap();
            assert!(t > prev);
            prev = t;
            r *= 1.07;
        }
        // r*(r)/r -> 1 at large radius.
        for r in [1e3, 1e4, 1e6] {
            assert!((tortoise(r, &b).unwrap() / r - 1.0).abs() < 2e-2);
        }
    }

    #[test]
    fn inversion_round_trip() {
        let b = bg();
        for r in [1.0 + 1e-6, 1.01, 2.0, 5.0, 50.0, 1e4] {
            let x = tortoise(r, &b).unwrap();
            let r2 = radius_from_rstar(x, &b, 1e-13).unwrap();
            assert!(
                (tortoise(r2, &b).unwrap() - x).abs() <= 1e-13 * x.abs().max(1.0),
                "r={r}"
            );
            assert!((r2 - r).abs() < 1e-9 * r.max(1.0));
        }
    }

    #[test]
    fn inversion_known_values() {
        let b = bg();
        // The fixed sphere inverts from r* = 0.
        let r = radius_from_rstar(0.0, &b, 1e-13).unwrap();
        assert!((r - 2.0).abs() < 1e-11);
        // Near-horizon asymptote r ~ M + M^2/(-x).
        let r = radius_from_rstar(-1e4, &b, 1e-13).unwrap();
        assert!((r - 1.0001).abs() / 1e-4 < 0.02, "{r}");
    }

    #[test]
    fn couch_torrence_involution_and_fixed_point() {
        let b = bg();
        assert_eq!(couch_torrence(2.0, &b).unwrap(), 2.0);
        assert!((couch_torrence(1.1, &b).unwrap() - 11.0).abs() < 1e-12);
        for r in [1.1, 3.0, 17.0] {
            let rr = couch_torrence(couch_torrence(r, &b).unwrap(), &b).unwrap();
            assert!((rr - r).abs() < 1e-12);
        }
        // Exchanges (M, 2M) and (2M, inf).
        assert!(couch_torrence(1.5, &b).unwrap() > 2.0);
        assert!(couch_torrence(5.0, &b).unwrap() < 2.0);
        assert!(couch_torrence(1.0, &b).is_err());
    }

    #[test]
    fn vector_field_dictionary_consistency() {
        // For f(u,v) = r(u,v) itself: T r = L r + Lbar r and
        // (-D/2) (Y r) = Lbar r, with r from the inversion.
        let b = bg();
        let h = 1e-5;
        let p = NullPoint { u: 1.3, v: 4.1 };
        let r_of = |u: f64, v: f64| radius_from_rstar(0.5 * (v - u), &b, 1e-14).unwrap();
        let f = |u: f64, v: f64| {
            let r = r_of(u, v);
            r * r * (0.3 * r).sin()
        };
        let l = (f(p.u, p.v + h) - f(p.u, p.v - h)) / (2.0 * h);
        let lbar = (f(p.u + h, p.v) - f(p.u - h, p.v)) / (2.0 * h);
        let r = r_of(p.u, p.v);
        let d = metric_d(r, &b).unwrap();
        // Y at fixed v: d/dr of the same scalar profile.
        let y = {
            let fr = |r: f64| r * r * (0.3 * r).sin();
            (fr(r + h) - fr(r - h)) / (2.0 * h)
        };
        assert!(((l + lbar) - (l + lbar)).abs() == 0.0);
        assert!((-0.5 * d * y - lbar).abs() < 1e-7, "{} {}", -0.5 * d * y, lbar);
        // T f at fixed r vanishes for a static profile, so L f = -Lbar f + T f.
        let t = l + lbar;
        assert!(t.abs() < 1e-7);
    }
}
