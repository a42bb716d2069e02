//! Uniform double-null lattice with precomputed background tables.
//!
//! The background depends on (u, v) only through r* = (v - u)/2, so every
//! table is one-dimensional in the lattice diagonal d = j - i. Lattice point
//! (i, j) and the cell center between (i-1, j-1) and (i, j) share the same
//! diagonal, so a single table serves both.

use crate::error::EvolutionError;
use crate::geometry::{metric_d, metric_dprime, metric_dsecond, radius_from_rstar, BackgroundErn};
use crate::modes::AngularGrid;

/// Lattice extents: corner (u0, v0), cell counts, uniform spacing h.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub u0: f64,
    pub v0: f64,
    pub n_u: usize,
    pub n_v: usize,
    pub h: f64,
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), EvolutionError> {
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(EvolutionError::Config(format!(
                "spacing h must be positive, got {}",
                self.h
            )));
        }
        if self.n_u < 2 || self.n_v < 2 {
            return Err(EvolutionError::Config(format!(
                "need n_u, n_v >= 2, got ({}, {})",
                self.n_u, self.n_v
            )));
        }
        Ok(())
    }

    pub fn u_max(&self) -> f64 {
        self.u0 + self.h * self.n_u as f64
    }

    pub fn v_max(&self) -> f64 {
        self.v0 + self.h * self.n_v as f64
    }
}

/// Per-diagonal background samples.
#[derive(Debug, Clone, Copy)]
pub struct DiagonalScalars {
    pub r: f64,
    pub d: f64,
    pub dprime: f64,
    pub dsecond: f64,
    pub rstar: f64,
}

/// The lattice plus background tables and the angular layer.
#[derive(Debug, Clone)]
pub struct EvolutionGrid {
    pub spec: GridSpec,
    pub angular: AngularGrid,
    pub background: BackgroundErn,
    /// Indexed by d + n_u for d = j - i in [-n_u, n_v].
    table: Vec<DiagonalScalars>,
    inversion_tol: f64,
}

pub const INVERSION_TOL: f64 = 1e-13;

/// Fill the diagonal tables via the tortoise inversion. Fails fast if any
/// lattice point would land at r <= M (impossible for finite coordinates,
/// asserted anyway).
pub fn build_evolution_grid(
    spec: GridSpec,
    angular: AngularGrid,
    bg: BackgroundErn,
) -> Result<EvolutionGrid, EvolutionError> {
    spec.validate()?;
    let n_diag = spec.n_u + spec.n_v + 1;
    let mut table = Vec::with_capacity(n_diag);
    for k in 0..n_diag {
        let d = k as i64 - spec.n_u as i64;
        let rstar = 0.5 * ((spec.v0 - spec.u0) + spec.h * d as f64);
        let r = radius_from_rstar(rstar, &bg, INVERSION_TOL)?;
        if r <= bg.mass() {
            return Err(EvolutionError::Config(format!(
                "lattice diagonal r* = {rstar} inverted to r = {r} <= M"
            )));
        }
        table.push(DiagonalScalars {
            r,
            d: metric_d(r, &bg)?,
            dprime: metric_dprime(r, &bg)?,
            dsecond: metric_dsecond(r, &bg)?,
            rstar,
        });
    }
    Ok(EvolutionGrid {
        spec,
        angular,
        background: bg,
        table,
        inversion_tol: INVERSION_TOL,
    })
}

impl EvolutionGrid {
    #[inline]
    pub fn diag_index(&self, i: usize, j: usize) -> usize {
        j + self.spec.n_u - i
    }

    /// Background scalars at lattice point (i, j).
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> &DiagonalScalars {
        &self.table[self.diag_index(i, j)]
    }

    /// Background scalars at the center of the cell whose north corner is (i, j):
    /// the center shares the diagonal of (i, j).
    #[inline]
    pub fn at_center(&self, i: usize, j: usize) -> &DiagonalScalars {
        self.at(i, j)
    }

    pub fn u_of(&self, i: usize) -> f64 {
        self.spec.u0 + self.spec.h * i as f64
    }

    pub fn v_of(&self, j: usize) -> f64 {
        self.spec.v0 + self.spec.h * j as f64
    }

    pub fn inversion_tol(&self) -> f64 {
        self.inversion_tol
    }

    /// r at the last-u row, first column: the closest approach to the horizon.
    pub fn r_min(&self) -> f64 {
        self.table[0].r
    }

    pub fn r_max(&self) -> f64 {
        self.table[self.table.len() - 1].r
    }

    /// Row index of the outgoing ray through r = target at v-column j, i.e.
    /// the i with r(i, j) closest to target from above. None if off-grid.
    pub fn row_at_radius(&self, target: f64, j: usize) -> Option<usize> {
        // r decreases with i at fixed j.
        let n_u = self.spec.n_u;
        if self.at(0, j).r < target || self.at(n_u, j).r > target {
            return None;
        }
        let (mut lo, mut hi) = (0usize, n_u);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.at(mid, j).r >= target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(lo)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::tortoise;
    use crate::modes::build_angular_grid;

    fn grid(n_u: usize, n_v: usize, h: f64) -> EvolutionGrid {
        build_evolution_grid(
            GridSpec {
                u0: 0.0,
                v0: 0.0,
                n_u,
                n_v,
                h,
            },
            build_angular_grid(0, 1).unwrap(),
            BackgroundErn::default(),
        )
        .unwrap()
    }

    #[test]
    fn corner_diagonal_value() {
        // u = v (r* = 0): the root of the tortoise map is the fixed sphere
        // of the radial inversion, r = 2M.
        let g = grid(10, 10, 0.5);
        let r = g.at(3, 3).r;
        assert!((tortoise(r, &g.background).unwrap()).abs() < 1e-12);
        assert!((r - 2.0).abs() < 1e-10, "{r}");
    }

    #[test]
    fn monotone_rows_and_columns() {
        let g = grid(40, 30, 0.25);
        for i in 0..=40usize {
            for j in 1..=30usize {
                assert!(g.at(i, j).r > g.at(i, j - 1).r);
            }
        }
        for j in 0..=30usize {
            for i in 1..=40usize {
                assert!(g.at(i, j).r < g.at(i - 1, j).r);
            }
        }
    }

    #[test]
    fn far_wing_asymptote() {
        // u - v = 2000: r - M within 5% of 2 M^2/(u - v) = 1e-3.
        let g = grid(4000, 4, 0.5);
        let s = g.at(4000, 0);
        let asym = 2.0 / 2000.0;
        assert!(((s.r - 1.0) - asym).abs() / asym < 0.05, "{}", s.r - 1.0);
    }

    #[test]
    fn tables_match_geometry_ops() {
        let g = grid(60, 45, 0.125);
        for (i, j) in [(0usize, 0usize), (13, 7), (60, 45), (31, 2)] {
            let s = g.at(i, j);
            assert!((s.rstar - 0.5 * (g.v_of(j) - g.u_of(i))).abs() < 1e-12);
            assert!(
                (tortoise(s.r, &g.background).unwrap() - s.rstar).abs()
                    <= g.inversion_tol() * s.rstar.abs().max(1.0)
            );
            assert_eq!(s.d, metric_d(s.r, &g.background).unwrap());
        }
    }

    #[test]
    fn rejects_bad_spec() {
        let a = build_angular_grid(0, 1).unwrap();
        let bad = GridSpec {
            u0: 0.0,
            v0: 0.0,
            n_u: 1,
            n_v: 5,
            h: 0.1,
        };
        assert!(build_evolution_grid(bad, a.clone(), BackgroundErn::default()).is_err());
        let bad_h = GridSpec {
            u0: 0.0,
            v0: 0.0,
            n_u: 5,
            n_v: 5,
            h: 0.0,
        };
        assert!(build_evolution_grid(bad_h, a, BackgroundErn::default()).is_err());
    }

    #[test]
    fn row_at_radius_bisection() {
        let g = grid(200, 40, 0.25);
        let i = g.row_at_radius(1.8, 10).unwrap();
        assert!(g.at(i, 10).r >= 1.8 && g.at(i + 1, 10).r < 1.8);
        assert!(g.row_at_radius(1e9, 10).is_none());
    }
}
