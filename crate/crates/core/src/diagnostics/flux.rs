//! Weighted null-flux hierarchies, T-fluxes, Morawetz bulks, and the
//! composite energy over a null-null foliation slice.
//!
//! A slice anchored at advanced time tau consists of the ingoing ray
//! {v = tau, u >= u_R(tau)} down to the horizon proxy and the outgoing ray
//! {u = u_R(tau), v >= tau} outward, where r(u_R(tau), tau) equals the
//! extraction radius R. The near piece carries (r-M)^{-p} weights on
//! Lbar-derivatives, the far piece r^p weights on L-derivatives, and the
//! middle range [R, r1] of the outgoing ray carries the unweighted T-energy
//! flux. Angular integrals are evaluated exactly in coefficient space
//! (Parseval for the orthonormal zonal basis).

use crate::diagnostics::sector::{sector_grad_power, sector_power, Sector};
use crate::error::DiagnosticsError;
use crate::evolution::{EvolutionGrid, Field, GridSpec};
use crate::modes::AngularGrid;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Read access to the lattice values a flux kernel needs; implemented by the
/// dense Field and by the streaming collectors' patches.
pub trait LatticeAccess {
    fn spec(&self) -> &GridSpec;
    fn n_nodes(&self) -> usize;
    fn phi(&self, i: usize, j: usize, k: usize) -> f64;
    fn phi_h(&self, i: usize, j: usize, k: usize) -> f64;
}

impl LatticeAccess for Field {
    fn spec(&self) -> &GridSpec {
        &self.spec
    }
    fn n_nodes(&self) -> usize {
        self.n_nodes()
    }
    fn phi(&self, i: usize, j: usize, k: usize) -> f64 {
        Field::phi(self, i, j, k)
    }
    fn phi_h(&self, i: usize, j: usize, k: usize) -> f64 {
        Field::phi_h(self, i, j, k)
    }
}

/// Foliation anchor radii.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoliationSpec {
    /// R: the slice corner sits on r = R.
    pub extraction_radius: f64,
    /// Outer edge of the near-horizon region A.
    pub r0: f64,
    /// Inner edge of the far region B (photon sphere lies between r0 and r1).
    pub r1: f64,
}

impl Default for FoliationSpec {
    fn default() -> Self {
        Self {
            extraction_radius: 1.8,
            r0: 1.8,
            r1: 2.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FluxVariant {
    /// Integrands built from phi.
    Base,
    /// Integrands built from the commuted quantities PhiH / PhiI.
    Commuted,
}

/// One evaluated slice flux.
#[derive(Debug, Clone, Copy)]
pub struct FluxSample {
    /// Effective (lattice-snapped) slice parameter.
    pub tau: f64,
    pub near: f64,
    pub mid: f64,
    pub far: f64,
    pub total: f64,
    /// Whether p sits inside the admissible window for this sector/variant.
    pub p_in_range: bool,
}

/// Admissible p window per sector and variant (upper end inclusive only for
/// the commuted higher-mode family).
fn p_window(sector: Sector, variant: FluxVariant) -> (f64, f64, bool) {
    match (sector, variant) {
        (Sector::L0, FluxVariant::Base) => (0.0, 3.0, false),
        (Sector::L0, FluxVariant::Commuted) => (0.0, 1.0, false),
        (Sector::LGe1, FluxVariant::Base) => (0.0, 2.0, false),
        (Sector::LGe1, FluxVariant::Commuted) => (0.0, 2.0, true),
        (Sector::All, FluxVariant::Base) => (0.0, 2.0, false),
        (Sector::All, FluxVariant::Commuted) => (0.0, 1.0, false),
    }
}

/// Geometry of one slice on the lattice.
#[derive(Debug, Clone, Copy)]
pub struct SliceGeometry {
    pub j_tau: usize,
    pub i_r: usize,
    /// First column on the outgoing ray with r >= r1.
    pub j_far: usize,
    pub tau_effective: f64,
}

pub fn locate_slice(
    grid: &EvolutionGrid,
    fol: &FoliationSpec,
    tau: f64,
) -> Result<SliceGeometry, DiagnosticsError> {
    let spec = grid.spec;
    let jf = (tau - spec.v0) / spec.h;
    let j_tau = jf.round() as i64;
    if j_tau < 2 || j_tau as usize > spec.n_v - 2 {
        return Err(DiagnosticsError::Range(format!(
            "slice tau = {tau} outside the covered v range"
        )));
    }
    let j_tau = j_tau as usize;
    let i_r = grid
        .row_at_radius(fol.extraction_radius, j_tau)
        .ok_or_else(|| {
            DiagnosticsError::Range(format!(
                "extraction radius {} not on the lattice at tau = {tau}",
                fol.extraction_radius
            ))
        })?;
    if i_r < 2 || i_r > spec.n_u - 2 {
        return Err(DiagnosticsError::Range(format!(
            "slice tau = {tau} exits the grid (corner row {i_r})"
        )));
    }
    // First far column at or beyond r1 on the outgoing ray.
    let mut j_far = None;
    for j in j_tau..=spec.n_v {
        if grid.at(i_r, j).r >= fol.r1 {
            j_far = Some(j);
            break;
        }
    }
    let j_far = j_far.ok_or_else(|| {
        DiagnosticsError::Range(format!("outgoing ray of tau = {tau} never reaches r1"))
    })?;
    if j_far + 2 > spec.n_v {
        return Err(DiagnosticsError::Range(format!(
            "far piece of tau = {tau} too short for stencils"
        )));
    }
    Ok(SliceGeometry {
        j_tau,
        i_r,
        j_far,
        tau_effective: grid.v_of(j_tau),
    })
}

// ---- stencil helpers (edge-aware, second order) ----

#[inline]
fn d_v<F: Fn(usize, usize, usize) -> f64>(
    f: &F,
    spec: &GridSpec,
    i: usize,
    j: usize,
    k: usize,
) -> f64 {
    let h = spec.h;
    if j == 0 {
        (-3.0 * f(i, 0, k) + 4.0 * f(i, 1, k) - f(i, 2, k)) / (2.0 * h)
    } else if j == spec.n_v {
        (3.0 * f(i, j, k) - 4.0 * f(i, j - 1, k) + f(i, j - 2, k)) / (2.0 * h)
    } else {
        (f(i, j + 1, k) - f(i, j - 1, k)) / (2.0 * h)
    }
}

#[inline]
fn d_u<F: Fn(usize, usize, usize) -> f64>(
    f: &F,
    spec: &GridSpec,
    i: usize,
    j: usize,
    k: usize,
) -> f64 {
    let h = spec.h;
    if i == 0 {
        (-3.0 * f(0, j, k) + 4.0 * f(1, j, k) - f(2, j, k)) / (2.0 * h)
    } else if i == spec.n_u {
        (3.0 * f(i, j, k) - 4.0 * f(i - 1, j, k) + f(i - 2, j, k)) / (2.0 * h)
    } else {
        (f(i + 1, j, k) - f(i - 1, j, k)) / (2.0 * h)
    }
}

fn trapezoid_weight(idx: usize, lo: usize, hi: usize) -> f64 {
    if idx == lo || idx == hi {
        0.5
    } else {
        1.0
    }
}

/// Slice flux for one (tau, p, l, sector, variant).
///
/// `l` counts T-commutations (0 or 1); T is realized as L + Lbar with
/// centered differences along v and the second-order one-sided closures at
/// the lattice edges.
#[allow(clippy::too_many_arguments)]
pub fn weighted_flux_on<A: LatticeAccess>(
    acc: &A,
    grid: &EvolutionGrid,
    fol: &FoliationSpec,
    tau: f64,
    p: f64,
    l: usize,
    sector: Sector,
    variant: FluxVariant,
) -> Result<FluxSample, DiagnosticsError> {
    if l > 1 {
        return Err(DiagnosticsError::Config(format!(
            "T-commutation count l = {l} not implemented (l <= 1)"
        )));
    }
    let geom = locate_slice(grid, fol, tau)?;
    let spec = *acc.spec();
    let angular = &grid.angular;
    let n = acc.n_nodes();
    let mass = grid.background.mass();
    let mut coeffs = vec![0.0; angular.l_max() + 1];
    let mut nodal = vec![0.0; n];

    let phi = |i: usize, j: usize, k: usize| acc.phi(i, j, k);
    let phi_h = |i: usize, j: usize, k: usize| acc.phi_h(i, j, k);
    // PhiI = (2 r^2 / D) L phi, regular toward infinity.
    let phi_i = |i: usize, j: usize, k: usize| {
        let s = grid.at(i, j);
        2.0 * s.r * s.r / s.d * d_v(&phi, &spec, i, j, k)
    };
    let t_phi = |i: usize, j: usize, k: usize| {
        d_v(&phi, &spec, i, j, k) + d_u(&phi, &spec, i, j, k)
    };
    let t_phi_h = |i: usize, j: usize, k: usize| {
        d_v(&phi_h, &spec, i, j, k) + d_u(&phi_h, &spec, i, j, k)
    };
    let t_phi_i = |i: usize, j: usize, k: usize| {
        d_v(&phi_i, &spec, i, j, k) + d_u(&phi_i, &spec, i, j, k)
    };

    // Near piece: int (r-M)^{-p} (Lbar X)^2 du domega over the ingoing ray.
    let mut near = 0.0;
    for i in geom.i_r..=spec.n_u {
        for (k, slot) in nodal.iter_mut().enumerate() {
            *slot = match (variant, l) {
                (FluxVariant::Base, 0) => d_u(&phi, &spec, i, geom.j_tau, k),
                (FluxVariant::Base, _) => d_u(&t_phi, &spec, i, geom.j_tau, k),
                (FluxVariant::Commuted, 0) => d_u(&phi_h, &spec, i, geom.j_tau, k),
                (FluxVariant::Commuted, _) => d_u(&t_phi_h, &spec, i, geom.j_tau, k),
            };
        }
        let s = grid.at(i, geom.j_tau);
        let power = sector_power(angular, sector, &nodal, &mut coeffs);
        near += trapezoid_weight(i, geom.i_r, spec.n_u)
            * spec.h
            * (s.r - mass).powf(-p)
            * power
            * TWO_PI;
    }

    // Middle piece: T-energy flux through the outgoing ray between R and r1.
    let mut mid = 0.0;
    if geom.j_far > geom.j_tau {
        for j in geom.j_tau..=geom.j_far {
            let s = grid.at(geom.i_r, j);
            // L T^l psi per node.
            for (k, slot) in nodal.iter_mut().enumerate() {
                let psi = |i: usize, jj: usize, kk: usize| {
                    acc.phi(i, jj, kk) / grid.at(i, jj).r
                };
                *slot = if l == 0 {
                    d_v(&psi, &spec, geom.i_r, j, k)
                } else {
                    let t_psi = |i: usize, jj: usize, kk: usize| {
                        let psi = |a: usize, b: usize, c: usize| {
                            acc.phi(a, b, c) / grid.at(a, b).r
                        };
                        d_v(&psi, &spec, i, jj, kk) + d_u(&psi, &spec, i, jj, kk)
                    };
                    d_v(&t_psi, &spec, geom.i_r, j, k)
                };
            }
            let lpsi_power = sector_power(angular, sector, &nodal, &mut coeffs);
            // |slashed-grad T^l psi|^2 via the mode coefficients of T^l psi;
            // T r = L r + Lbar r = 0, so T psi = T phi / r exactly.
            for (k, slot) in nodal.iter_mut().enumerate() {
                *slot = if l == 0 {
                    acc.phi(geom.i_r, j, k) / s.r
                } else {
                    t_phi(geom.i_r, j, k) / s.r
                };
            }
            angular.project_into(&nodal, &mut coeffs);
            let grad_power = sector_grad_power(angular, sector, &coeffs) / (s.r * s.r);
            mid += trapezoid_weight(j, geom.j_tau, geom.j_far)
                * spec.h
                * s.r
                * s.r
                * (lpsi_power + 0.25 * s.d * grad_power)
                * TWO_PI;
        }
    }

    // Far piece: int r^p (L X)^2 dv domega over the outgoing ray.
    let mut far = 0.0;
    for j in geom.j_far..=spec.n_v {
        for (k, slot) in nodal.iter_mut().enumerate() {
            *slot = match (variant, l) {
                (FluxVariant::Base, 0) => d_v(&phi, &spec, geom.i_r, j, k),
                (FluxVariant::Base, _) => d_v(&t_phi, &spec, geom.i_r, j, k),
                (FluxVariant::Commuted, 0) => d_v(&phi_i, &spec, geom.i_r, j, k),
                (FluxVariant::Commuted, _) => d_v(&t_phi_i, &spec, geom.i_r, j, k),
            };
        }
        let s = grid.at(geom.i_r, j);
        let power = sector_power(angular, sector, &nodal, &mut coeffs);
        far += trapezoid_weight(j, geom.j_far, spec.n_v) * spec.h * s.r.powf(p) * power * TWO_PI;
    }

    let (lo, hi, incl) = p_window(sector, variant);
    let p_in_range = p > lo && (p < hi || (incl && p == hi));
    Ok(FluxSample {
        tau: geom.tau_effective,
        near,
        mid,
        far,
        total: near + mid + far,
        p_in_range,
    })
}

/// Convenience wrapper over a dense field.
#[allow(clippy::too_many_arguments)]
pub fn weighted_flux(
    field: &Field,
    grid: &EvolutionGrid,
    fol: &FoliationSpec,
    tau: f64,
    p: f64,
    l: usize,
    sector: Sector,
    variant: FluxVariant,
) -> Result<FluxSample, DiagnosticsError> {
    weighted_flux_on(field, grid, fol, tau, p, l, sector, variant)
}

/// One Morawetz bulk cell term for each sector (L0, LGe1, All); shared
/// between the dense and streaming paths. `phi_coeffs` are the mode
/// coefficients of phi at the cell center, `l_phi` and `lbar_phi` its nodal
/// null derivatives there.
pub(crate) fn morawetz_cell_terms(
    angular: &AngularGrid,
    scal_r: f64,
    delta: f64,
    mass: f64,
    phi_coeffs: &[f64],
    l_phi: &[f64],
    lbar_phi: &[f64],
    scratch: &mut Vec<f64>,
) -> [f64; 3] {
    let x = scal_r - mass;
    let xw = x.powf(1.0 + delta);
    let x3 = x.powi(3);
    let mut out = [0.0; 3];
    for (idx, sector) in [Sector::L0, Sector::LGe1, Sector::All].into_iter().enumerate() {
        let lp = sector_power(angular, sector, l_phi, scratch);
        let lbp = sector_power(angular, sector, lbar_phi, scratch);
        let grad = sector_grad_power(angular, sector, phi_coeffs) / (scal_r * scal_r);
        out[idx] = xw * (lp + lbp) + x3 * grad;
    }
    out
}

pub(crate) fn sector_index(sector: Sector) -> usize {
    match sector {
        Sector::L0 => 0,
        Sector::LGe1 => 1,
        Sector::All => 2,
    }
}

/// Spacetime bulk over the near-horizon region A between two slices:
/// cells with center radius at most r0 and center v in [tau1, tau2).
pub fn morawetz_bulk(
    field: &Field,
    grid: &EvolutionGrid,
    fol: &FoliationSpec,
    tau1: f64,
    tau2: f64,
    delta: f64,
    sector: Sector,
) -> Result<f64, DiagnosticsError> {
    if !(tau2 > tau1) {
        return Err(DiagnosticsError::Range(format!(
            "empty bulk interval [{tau1}, {tau2}]"
        )));
    }
    if !(delta > 0.0) {
        return Err(DiagnosticsError::Config(format!(
            "bulk weight exponent must be positive, got {delta}"
        )));
    }
    let spec = grid.spec;
    let angular = &grid.angular;
    let n = field.n_nodes();
    let mass = grid.background.mass();
    let mut acc = 0.0;
    let mut any = false;
    let mut coeffs = vec![0.0; angular.l_max() + 1];
    let mut scratch = vec![0.0; angular.l_max() + 1];
    let mut cphi = vec![0.0; n];
    let mut cl = vec![0.0; n];
    let mut clb = vec![0.0; n];
    for i in 1..=spec.n_u {
        for j in 1..=spec.n_v {
            let v_c = spec.v0 + (j as f64 - 0.5) * spec.h;
            if v_c < tau1 || v_c >= tau2 {
                continue;
            }
            let s = grid.at_center(i, j);
            if s.r > fol.r0 {
                continue;
            }
            any = true;
            for k in 0..n {
                let nn = field.phi(i, j, k);
                let e = field.phi(i - 1, j, k);
                let w = field.phi(i, j - 1, k);
                let so = field.phi(i - 1, j - 1, k);
                cphi[k] = 0.25 * (nn + e + w + so);
                cl[k] = (nn - w + e - so) / (2.0 * spec.h);
                clb[k] = (nn - e + w - so) / (2.0 * spec.h);
            }
            angular.project_into(&cphi, &mut coeffs);
            let terms = morawetz_cell_terms(
                angular, s.r, delta, mass, &coeffs, &cl, &clb, &mut scratch,
            );
            acc += spec.h * spec.h * TWO_PI * terms[sector_index(sector)];
        }
    }
    if !any {
        return Err(DiagnosticsError::Range(format!(
            "bulk region empty for [{tau1}, {tau2}] at r0 = {}",
            fol.r0
        )));
    }
    Ok(acc)
}

/// The composite slice energy: base and commuted fluxes at the canonical
/// exponents for both sectors, T-commutations l <= 1, summed.
pub fn master_energy(
    field: &Field,
    grid: &EvolutionGrid,
    fol: &FoliationSpec,
    tau: f64,
    delta1: f64,
    delta2: f64,
) -> Result<f64, DiagnosticsError> {
    let mut total = 0.0;
    for l in 0..=1usize {
        total += weighted_flux(field, grid, fol, tau, 3.0 - delta1, l, Sector::L0, FluxVariant::Base)?
            .total;
        total += weighted_flux(
            field,
            grid,
            fol,
            tau,
            1.0 - delta1,
            l,
            Sector::L0,
            FluxVariant::Commuted,
        )?
        .total;
        total += weighted_flux(
            field,
            grid,
            fol,
            tau,
            3.0 + delta2,
            l,
            Sector::LGe1,
            FluxVariant::Base,
        )?
        .total;
        total += weighted_flux(
            field,
            grid,
            fol,
            tau,
            1.0 + delta2,
            l,
            Sector::LGe1,
            FluxVariant::Commuted,
        )?
        .total;
    }
    Ok(total)
}
