//! Angular-sector selection for the flux and bulk quadratures.

use crate::modes::AngularGrid;

/// Which part of the mode content enters an integrand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sector {
    /// Spherically symmetric part only.
    L0,
    /// Everything above the spherical mean.
    LGe1,
    /// Full field.
    All,
}

impl Sector {
    pub fn label(&self) -> &'static str {
        match self {
            Sector::L0 => "l0",
            Sector::LGe1 => "lge1",
            Sector::All => "all",
        }
    }

    #[inline]
    fn keeps(&self, l: usize) -> bool {
        match self {
            Sector::L0 => l == 0,
            Sector::LGe1 => l >= 1,
            Sector::All => true,
        }
    }
}

/// `int_{S^2} X_sector^2 domega / (2 pi)` from nodal values, by Parseval in
/// the orthonormal zonal basis.
pub fn sector_power(
    angular: &AngularGrid,
    sector: Sector,
    nodal: &[f64],
    coeffs: &mut Vec<f64>,
) -> f64 {
    coeffs.resize(angular.l_max() + 1, 0.0);
    angular.project_into(nodal, coeffs);
    coeffs
        .iter()
        .enumerate()
        .filter(|(l, _)| sector.keeps(*l))
        .map(|(_, a)| a * a)
        .sum()
}

/// `int_{S^2} |grad_{S^2} X_sector|^2 domega / (2 pi) = sum l(l+1) a_l^2`
/// from mode coefficients.
pub fn sector_grad_power(angular: &AngularGrid, sector: Sector, coeffs: &[f64]) -> f64 {
    let _ = angular;
    coeffs
        .iter()
        .enumerate()
        .filter(|(l, _)| sector.keeps(*l))
        .map(|(l, a)| ((l * (l + 1)) as f64) * a * a)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modes::build_angular_grid;

    #[test]
    fn parseval_matches_quadrature() {
        let g = build_angular_grid(3, 6).unwrap();
        let f: Vec<f64> = g.nodes().iter().map(|&x| 0.3 + x - 0.7 * x * x).collect();
        let mut c = Vec::new();
        let total = sector_power(&g, Sector::All, &f, &mut c);
        let quad: f64 = g
            .weights()
            .iter()
            .zip(&f)
            .map(|(w, v)| w * v * v)
            .sum();
        assert!((total - quad).abs() < 1e-12);
        let l0 = sector_power(&g, Sector::L0, &f, &mut c);
        let ge1 = sector_power(&g, Sector::LGe1, &f, &mut c);
        assert!((l0 + ge1 - total).abs() < 1e-12);
    }

    #[test]
    fn grad_power_eigenvalues() {
        let g = build_angular_grid(2, 4).unwrap();
        // Pure l = 1: |grad|^2 integrates to l(l+1) a^2.
        let coeffs = [0.0, 0.9, 0.0];
        let got = sector_grad_power(&g, Sector::All, &coeffs);
        assert!((got - 2.0 * 0.81).abs() < 1e-14);
        // Check against the nodal quadrature of (d_theta f)^2.
        let f = g.synthesize(&coeffs.to_vec()).unwrap();
        let mut dth = vec![0.0; 4];
        g.dtheta_from_coeffs(&coeffs.to_vec(), &mut dth);
        let quad: f64 = g
            .weights()
            .iter()
            .zip(&dth)
            .map(|(w, d)| w * d * d)
            .sum();
        assert!((got - quad).abs() < 1e-12);
        let _ = f;
    }
}
