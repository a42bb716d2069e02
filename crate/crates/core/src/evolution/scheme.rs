//! Characteristic diamond integrator for the radiation-field equation
//!
//! ```text
//!   4 L Lbar phi = D lap phi - (D D'/r) phi
//!                  + A [ (4/r)(L phi)(Lbar phi) - (2D/r^2) phi (Lbar phi)
//!                        + (2D/r^2) phi (L phi) - (D^2/r^3) phi^2
//!                        + (D/r) |slashed-grad phi|^2 ],
//! ```
//!
//! where `lap` is the rescaled spherical Laplacian evaluated mode-wise. The
//! nonlinear coefficients are the exact algebraic pairing of the regular
//! combination `PhiH = (2r/D) Lbar phi` with its prefactors, so no raw
//! division by D ever happens in the update; near the horizon (D below
//! `D_SWITCH`) the combination itself is carried as an evolved auxiliary,
//! integrated along v by its own transport equation
//!
//! ```text
//!   L PhiH = (D/2r - D'/2) PhiH + (r/2) lap phi - (D'/2) phi
//!            + A [ (L phi)/r PhiH - D phi/(2r^2) PhiH
//!                  + phi (L phi)/r - D phi^2/(2r^2) + |slashed-grad phi|^2 / 2 ],
//! ```
//!
//! which reduces to exact transversal-derivative conservation on the horizon
//! for the linear spherically symmetric flow.
//!
//! The north corner of each null rectangle is updated by the diamond rule
//! `phi_N = phi_W + phi_E - phi_S + h^2 (L Lbar phi)|_center` with exactly two
//! fixed-point corrector passes for the center-state dependence.

use std::collections::VecDeque;

use crate::error::EvolutionError;
use crate::evolution::data::{InitialData, NonlinearityConfig};
use crate::evolution::grid::{DiagonalScalars, EvolutionGrid, GridSpec};
use crate::evolution::manufactured::ManufacturedSolution;
use crate::modes::AngularGrid;

/// Below this value of D the carried auxiliary is the authoritative
/// representation of `(2r/D) Lbar phi`; above it differencing raw `Lbar phi`
/// suffices.
pub const D_SWITCH: f64 = 1e-2;

/// One completed u-row of the march.
#[derive(Debug, Clone)]
pub struct RowData {
    pub i: usize,
    /// phi, j-major with n_nodes inner stride.
    pub phi: Vec<f64>,
    /// Carried auxiliary PhiH = (2r/D) Lbar phi, same layout.
    pub phi_h: Vec<f64>,
    /// A-independent part of the PhiH transport rate, same layout.
    pub rate_geo: Vec<f64>,
    /// A-dependent (nonlinear) part of the PhiH transport rate, same layout.
    pub rate_nl: Vec<f64>,
}

/// Sliding window over the most recent rows (newest last).
pub struct RowWindow<'a> {
    rows: &'a VecDeque<RowData>,
}

impl<'a> RowWindow<'a> {
    pub fn latest(&self) -> &RowData {
        self.rows.back().expect("window never empty")
    }

    pub fn by_index(&self, i: usize) -> Option<&RowData> {
        self.rows.iter().find(|r| r.i == i)
    }

    pub fn depth(&self) -> usize {
        self.rows.len()
    }
}

/// Observer called after each completed row; collectors build diagnostics
/// from these without the march retaining the full lattice.
pub trait RowObserver {
    fn on_row(&mut self, window: &RowWindow, grid: &EvolutionGrid);
}

/// Center samples of one diamond cell on the final corrector pass.
pub struct CellCenter<'a> {
    /// North corner indices of the cell.
    pub i: usize,
    pub j: usize,
    /// Background at the cell center.
    pub scal: &'a DiagonalScalars,
    pub phi: &'a [f64],
    pub l_phi: &'a [f64],
    pub lbar_phi: &'a [f64],
    /// Mode coefficients of phi at the center.
    pub phi_coeffs: &'a [f64],
}

/// Observer over cell-center states (spacetime bulk quadratures).
pub trait CellObserver {
    fn on_cell(&mut self, cell: &CellCenter, grid: &EvolutionGrid);
}

/// Characteristic data source for the two initial rays.
pub enum DataSource<'a> {
    Bump(&'a InitialData),
    Manufactured(&'a ManufacturedSolution),
    /// Direct radial profiles `(r, x) -> phi` and `(r, x) -> d(phi)/dr`.
    Profiles {
        phi: &'a dyn Fn(f64, f64) -> f64,
        phi_dr: &'a dyn Fn(f64, f64) -> f64,
    },
}

impl DataSource<'_> {
    fn phi_at(&self, r: f64, x: f64, u: f64, v: f64) -> f64 {
        match self {
            DataSource::Bump(d) => d.phi(r, x),
            DataSource::Manufactured(m) => m.phi(u, v, r),
            DataSource::Profiles { phi, .. } => phi(r, x),
        }
    }

    /// Exact `(2r/D) d/du phi = -r d/dr phi` on the initial ingoing ray.
    fn phi_h_seed(&self, scal: &DiagonalScalars, x: f64, u: f64, v: f64) -> f64 {
        match self {
            DataSource::Bump(d) => -scal.r * d.phi_dr(scal.r, x),
            DataSource::Manufactured(m) => m.phi_h(u, v, scal),
            DataSource::Profiles { phi_dr, .. } => -scal.r * phi_dr(scal.r, x),
        }
    }

    fn source(&self) -> Option<&ManufacturedSolution> {
        match self {
            DataSource::Manufactured(m) => Some(m),
            _ => None,
        }
    }
}

/// Fill the two initial rays: returns (row 0 over v, column 0 over u),
/// node-inner layout. The rays agree at the shared corner by construction.
pub fn initial_data_bump(
    data: &InitialData,
    grid: &EvolutionGrid,
) -> Result<(Vec<f64>, Vec<f64>), EvolutionError> {
    data.validate_support(grid)?;
    Ok(initial_rays(&DataSource::Bump(data), grid))
}

fn initial_rays(src: &DataSource, grid: &EvolutionGrid) -> (Vec<f64>, Vec<f64>) {
    let n = grid.angular.n_nodes();
    let (n_u, n_v) = (grid.spec.n_u, grid.spec.n_v);
    let mut row0 = vec![0.0; (n_v + 1) * n];
    let mut col0 = vec![0.0; (n_u + 1) * n];
    for j in 0..=n_v {
        let s = grid.at(0, j);
        for (k, &x) in grid.angular.nodes().iter().enumerate() {
            row0[j * n + k] = src.phi_at(s.r, x, grid.u_of(0), grid.v_of(j));
        }
    }
    for i in 0..=n_u {
        let s = grid.at(i, 0);
        for (k, &x) in grid.angular.nodes().iter().enumerate() {
            col0[i * n + k] = src.phi_at(s.r, x, grid.u_of(i), grid.v_of(0));
        }
    }
    (row0, col0)
}

/// Scratch buffers reused across cells.
struct Scratch {
    coeffs: Vec<f64>,
    lap: Vec<f64>,
    dtheta: Vec<f64>,
    center_phi: Vec<f64>,
    center_l: Vec<f64>,
    center_lbar: Vec<f64>,
    rhs: Vec<f64>,
}

impl Scratch {
    fn new(angular: &AngularGrid) -> Self {
        let n = angular.n_nodes();
        Scratch {
            coeffs: vec![0.0; angular.l_max() + 1],
            lap: vec![0.0; n],
            dtheta: vec![0.0; n],
            center_phi: vec![0.0; n],
            center_l: vec![0.0; n],
            center_lbar: vec![0.0; n],
            rhs: vec![0.0; n],
        }
    }
}

/// Right-hand side `L Lbar phi` at a cell center, per angular node.
///
/// Inputs are nodal values of phi, its null derivatives, and the squared
/// angular gradient at one point; the spherical Laplacian term is evaluated
/// mode-wise internally.
pub fn rhs_center(
    phi: &[f64],
    l_phi: &[f64],
    lbar_phi: &[f64],
    grad_sq: &[f64],
    u: f64,
    v: f64,
    scal: &DiagonalScalars,
    cfg: &NonlinearityConfig,
    angular: &AngularGrid,
) -> Result<Vec<f64>, EvolutionError> {
    let n = angular.n_nodes();
    if phi.len() != n || l_phi.len() != n || lbar_phi.len() != n || grad_sq.len() != n {
        return Err(EvolutionError::Config(format!(
            "rhs_center expects {n} nodal values per input"
        )));
    }
    let mut sc = Scratch::new(angular);
    angular.project_into(phi, &mut sc.coeffs);
    laplacian_from_coeffs(&sc.coeffs, scal.r, angular, &mut sc.lap);
    let mut out = vec![0.0; n];
    for (k, o) in out.iter_mut().enumerate() {
        *o = rhs_node(
            phi[k],
            l_phi[k],
            lbar_phi[k],
            grad_sq[k],
            sc.lap[k],
            scal,
            cfg.coefficient(u, v, angular.nodes()[k], phi[k] / scal.r),
        );
    }
    Ok(out)
}

/// Synthesize `lap phi = -l(l+1)/r^2` applied in coefficient space.
#[inline]
fn laplacian_from_coeffs(coeffs: &[f64], r: f64, angular: &AngularGrid, out: &mut [f64]) {
    let inv_r2 = 1.0 / (r * r);
    for (j, o) in out.iter_mut().enumerate() {
        let mut s = 0.0;
        for (l, &a) in coeffs.iter().enumerate() {
            s -= a * ((l * (l + 1)) as f64) * angular.basis(j, l);
        }
        *o = s * inv_r2;
    }
}

#[inline]
fn rhs_node(
    phi: f64,
    l_phi: f64,
    lbar_phi: f64,
    grad_sq: f64,
    lap: f64,
    s: &DiagonalScalars,
    a: f64,
) -> f64 {
    let r = s.r;
    let linear = s.d * lap - s.d * s.dprime / r * phi;
    let nl = if a == 0.0 {
        0.0
    } else {
        a * ((4.0 / r) * l_phi * lbar_phi - (2.0 * s.d / (r * r)) * phi * lbar_phi
            + (2.0 * s.d / (r * r)) * phi * l_phi
            - (s.d * s.d / (r * r * r)) * phi * phi
            + (s.d / r) * grad_sq)
    };
    0.25 * (linear + nl)
}

/// The transport rate of the carried auxiliary, split into its
/// A-independent and A-dependent parts. `lap`, `grad_sq` are nodal values of
/// the Laplacian and squared angular gradient of phi at the lattice point.
#[inline]
fn phi_h_rate_split(
    phi: f64,
    l_phi: f64,
    grad_sq: f64,
    lap: f64,
    phi_h: f64,
    s: &DiagonalScalars,
    a: f64,
    forcing: f64,
) -> (f64, f64) {
    let r = s.r;
    let geo = (s.d / (2.0 * r) - 0.5 * s.dprime) * phi_h + 0.5 * r * lap - 0.5 * s.dprime * phi
        + forcing;
    let nl = if a == 0.0 {
        0.0
    } else {
        a * (l_phi / r * phi_h - s.d * phi / (2.0 * r * r) * phi_h + phi * l_phi / r
            - s.d * phi * phi / (2.0 * r * r)
            + 0.5 * grad_sq)
    };
    (geo, nl)
}

/// Coefficient of PhiH in the full transport rate (for the implicit step).
#[inline]
fn phi_h_rate_coeff(l_phi: f64, phi: f64, s: &DiagonalScalars, a: f64) -> f64 {
    s.d / (2.0 * s.r) - 0.5 * s.dprime + a * (l_phi / s.r - s.d * phi / (2.0 * s.r * s.r))
}

/// Fully evolved field on the lattice.
#[derive(Debug, Clone)]
pub struct Field {
    pub spec: GridSpec,
    n_nodes: usize,
    phi: Vec<f64>,
    phi_h: Vec<f64>,
}

impl Field {
    fn stride(&self) -> usize {
        (self.spec.n_v + 1) * self.n_nodes
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    #[inline]
    pub fn phi(&self, i: usize, j: usize, k: usize) -> f64 {
        self.phi[i * self.stride() + j * self.n_nodes + k]
    }

    #[inline]
    pub fn phi_nodes(&self, i: usize, j: usize) -> &[f64] {
        let base = i * self.stride() + j * self.n_nodes;
        &self.phi[base..base + self.n_nodes]
    }

    #[inline]
    pub fn phi_h(&self, i: usize, j: usize, k: usize) -> f64 {
        self.phi_h[i * self.stride() + j * self.n_nodes + k]
    }

    pub fn phi_h_nodes(&self, i: usize, j: usize) -> &[f64] {
        let base = i * self.stride() + j * self.n_nodes;
        &self.phi_h[base..base + self.n_nodes]
    }

    /// Centered (one-sided at the edges) v-derivative of phi.
    pub fn l_phi(&self, i: usize, j: usize, k: usize) -> f64 {
        let h = self.spec.h;
        let n_v = self.spec.n_v;
        if j == 0 {
            (-3.0 * self.phi(i, 0, k) + 4.0 * self.phi(i, 1, k) - self.phi(i, 2, k)) / (2.0 * h)
        } else if j == n_v {
            (3.0 * self.phi(i, n_v, k) - 4.0 * self.phi(i, n_v - 1, k) + self.phi(i, n_v - 2, k))
                / (2.0 * h)
        } else {
            (self.phi(i, j + 1, k) - self.phi(i, j - 1, k)) / (2.0 * h)
        }
    }

    /// Centered (one-sided at the edges) u-derivative of phi.
    pub fn lbar_phi(&self, i: usize, j: usize, k: usize) -> f64 {
        let h = self.spec.h;
        let n_u = self.spec.n_u;
        if i == 0 {
            (-3.0 * self.phi(0, j, k) + 4.0 * self.phi(1, j, k) - self.phi(2, j, k)) / (2.0 * h)
        } else if i == n_u {
            (3.0 * self.phi(n_u, j, k) - 4.0 * self.phi(n_u - 1, j, k) + self.phi(n_u - 2, j, k))
                / (2.0 * h)
        } else {
            (self.phi(i + 1, j, k) - self.phi(i - 1, j, k)) / (2.0 * h)
        }
    }

    /// Same stencils applied to the carried auxiliary.
    pub fn lbar_phi_h(&self, i: usize, j: usize, k: usize) -> f64 {
        let h = self.spec.h;
        let n_u = self.spec.n_u;
        if i == 0 {
            (-3.0 * self.phi_h(0, j, k) + 4.0 * self.phi_h(1, j, k) - self.phi_h(2, j, k))
                / (2.0 * h)
        } else if i == n_u {
            (3.0 * self.phi_h(n_u, j, k) - 4.0 * self.phi_h(n_u - 1, j, k)
                + self.phi_h(n_u - 2, j, k))
                / (2.0 * h)
        } else {
            (self.phi_h(i + 1, j, k) - self.phi_h(i - 1, j, k)) / (2.0 * h)
        }
    }
}

/// Collects every row into a dense Field. Refuses lattices that would not
/// fit comfortably in memory; large runs go through the streaming observers.
struct FieldCollector {
    field: Field,
}

const MAX_FIELD_DOUBLES: usize = 300_000_000;

impl RowObserver for FieldCollector {
    fn on_row(&mut self, window: &RowWindow, _grid: &EvolutionGrid) {
        let row = window.latest();
        let stride = self.field.stride();
        let base = row.i * stride;
        self.field.phi[base..base + stride].copy_from_slice(&row.phi);
        self.field.phi_h[base..base + stride].copy_from_slice(&row.phi_h);
    }
}

/// March the full lattice and return the dense field.
pub fn evolve(
    grid: &EvolutionGrid,
    data: &InitialData,
    cfg: &NonlinearityConfig,
) -> Result<Field, EvolutionError> {
    data.validate_support(grid)?;
    evolve_source(grid, &DataSource::Bump(data), cfg)
}

/// The A-off case used as the reference flow.
pub fn evolve_linear(grid: &EvolutionGrid, data: &InitialData) -> Result<Field, EvolutionError> {
    evolve(grid, data, &NonlinearityConfig::off())
}

/// March a manufactured-solution run (adds the closed-form source).
pub fn evolve_manufactured(
    grid: &EvolutionGrid,
    m: &ManufacturedSolution,
) -> Result<Field, EvolutionError> {
    evolve_source(grid, &DataSource::Manufactured(m), &m.nonlinearity())
}

fn evolve_source(
    grid: &EvolutionGrid,
    src: &DataSource,
    cfg: &NonlinearityConfig,
) -> Result<Field, EvolutionError> {
    let n = grid.angular.n_nodes();
    let doubles = (grid.spec.n_u + 1) * (grid.spec.n_v + 1) * n * 2;
    if doubles > MAX_FIELD_DOUBLES {
        return Err(EvolutionError::Config(format!(
            "lattice needs {doubles} stored doubles; too large for an in-memory Field, \
             use the streaming run pipeline"
        )));
    }
    let stride = (grid.spec.n_v + 1) * n;
    let mut collector = FieldCollector {
        field: Field {
            spec: grid.spec,
            n_nodes: n,
            phi: vec![0.0; (grid.spec.n_u + 1) * stride],
            phi_h: vec![0.0; (grid.spec.n_u + 1) * stride],
        },
    };
    evolve_with_observers(grid, src, cfg, &mut [&mut collector], &mut [])?;
    Ok(collector.field)
}

/// The streaming march: fills the lattice row by row, keeps a bounded window,
/// and feeds observers. Deterministic for fixed inputs.
pub fn evolve_with_observers(
    grid: &EvolutionGrid,
    src: &DataSource,
    cfg: &NonlinearityConfig,
    row_observers: &mut [&mut dyn RowObserver],
    cell_observers: &mut [&mut dyn CellObserver],
) -> Result<(), EvolutionError> {
    let spec = grid.spec;
    let angular = &grid.angular;
    let n = angular.n_nodes();
    let n_v = spec.n_v;
    let h = spec.h;
    let (row0, col0) = initial_rays(src, grid);
    let forcing = src.source();

    let mut sc = Scratch::new(angular);
    let mut window: VecDeque<RowData> = VecDeque::with_capacity(WINDOW_DEPTH);

    // Row 0: data on the outgoing ray.
    let mut first = RowData {
        i: 0,
        phi: row0,
        phi_h: vec![0.0; (n_v + 1) * n],
        rate_geo: vec![0.0; (n_v + 1) * n],
        rate_nl: vec![0.0; (n_v + 1) * n],
    };
    transport_phi_h(grid, cfg, forcing, src, &mut first, &mut sc)?;
    push_row(&mut window, first);
    for obs in row_observers.iter_mut() {
        obs.on_row(&RowWindow { rows: &window }, grid);
    }

    let mut n0 = vec![0.0; n];
    let mut n1 = vec![0.0; n];
    let mut n2 = vec![0.0; n];

    for i in 1..=spec.n_u {
        let mut row = RowData {
            i,
            phi: vec![0.0; (n_v + 1) * n],
            phi_h: vec![0.0; (n_v + 1) * n],
            rate_geo: vec![0.0; (n_v + 1) * n],
            rate_nl: vec![0.0; (n_v + 1) * n],
        };
        row.phi[0..n].copy_from_slice(&col0[i * n..(i + 1) * n]);
        let prev = &window.back().expect("previous row present").phi;

        for j in 1..=n_v {
            let scal = grid.at_center(i, j);
            let u_c = grid.u_of(i) - 0.5 * h;
            let v_c = grid.v_of(j) - 0.5 * h;
            let south = &prev[(j - 1) * n..j * n];
            let east = &prev[j * n..(j + 1) * n];
            let west_base = (j - 1) * n;

            for k in 0..n {
                n0[k] = east[k] + row.phi[west_base + k] - south[k];
            }
            let mut d1 = 0.0;
            let mut d2 = 0.0;
            for pass in 0..2 {
                {
                    let north: &[f64] = if pass == 0 { &n0 } else { &n1 };
                    for k in 0..n {
                        let (s, e, w, nn) = (south[k], east[k], row.phi[west_base + k], north[k]);
                        sc.center_phi[k] = 0.25 * (s + e + w + nn);
                        sc.center_l[k] = (nn - w + e - s) / (2.0 * h);
                        sc.center_lbar[k] = (nn - e + w - s) / (2.0 * h);
                    }
                }
                angular.project_into(&sc.center_phi, &mut sc.coeffs);
                laplacian_from_coeffs(&sc.coeffs, scal.r, angular, &mut sc.lap);
                angular.dtheta_from_coeffs(&sc.coeffs, &mut sc.dtheta);
                let src_c = forcing.map_or(0.0, |m| m.source(u_c, v_c, scal));
                for k in 0..n {
                    let grad = sc.dtheta[k] / scal.r;
                    let a = cfg.coefficient(
                        u_c,
                        v_c,
                        angular.nodes()[k],
                        sc.center_phi[k] / scal.r,
                    );
                    sc.rhs[k] = rhs_node(
                        sc.center_phi[k],
                        sc.center_l[k],
                        sc.center_lbar[k],
                        grad * grad,
                        sc.lap[k],
                        scal,
                        a,
                    ) + src_c;
                }
                let out: &mut Vec<f64> = if pass == 0 { &mut n1 } else { &mut n2 };
                for k in 0..n {
                    out[k] = east[k] + row.phi[west_base + k] - south[k] + h * h * sc.rhs[k];
                }
                if pass == 0 {
                    d1 = n1
                        .iter()
                        .zip(&n0)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                } else {
                    d2 = n2
                        .iter()
                        .zip(&n1)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                }
            }
            let scale = n1.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-30);
            if d2 > 0.5 * d1 && d1 > 1e-10 * scale {
                return Err(EvolutionError::Stability {
                    u: grid.u_of(i),
                    v: grid.v_of(j),
                    update: d2 / d1,
                });
            }
            for k in 0..n {
                if !n2[k].is_finite() {
                    return Err(EvolutionError::NonFinite {
                        u: grid.u_of(i),
                        v: grid.v_of(j),
                        node: k,
                    });
                }
                row.phi[j * n + k] = n2[k];
            }
            if !cell_observers.is_empty() {
                let cell = CellCenter {
                    i,
                    j,
                    scal,
                    phi: &sc.center_phi,
                    l_phi: &sc.center_l,
                    lbar_phi: &sc.center_lbar,
                    phi_coeffs: &sc.coeffs,
                };
                for obs in cell_observers.iter_mut() {
                    obs.on_cell(&cell, grid);
                }
            }
        }

        transport_phi_h(grid, cfg, forcing, src, &mut row, &mut sc)?;
        push_row(&mut window, row);
        for obs in row_observers.iter_mut() {
            obs.on_row(&RowWindow { rows: &window }, grid);
        }
    }
    Ok(())
}

const WINDOW_DEPTH: usize = 5;

fn push_row(window: &mut VecDeque<RowData>, row: RowData) {
    if window.len() == WINDOW_DEPTH {
        window.pop_front();
    }
    window.push_back(row);
}

/// Integrate the carried auxiliary along the completed row by the implicit
/// trapezoidal rule; the PhiH-linear part of the rate is solved exactly per
/// step. Seeds from the exact radial derivative of the data at v = v0.
fn transport_phi_h(
    grid: &EvolutionGrid,
    cfg: &NonlinearityConfig,
    forcing: Option<&ManufacturedSolution>,
    src: &DataSource,
    row: &mut RowData,
    sc: &mut Scratch,
) -> Result<(), EvolutionError> {
    let angular = &grid.angular;
    let n = angular.n_nodes();
    let n_v = grid.spec.n_v;
    let h = grid.spec.h;
    let i = row.i;
    let u = grid.u_of(i);

    // Nodal L phi, lap phi and grad^2 at lattice point (i, j).
    let eval_point = |row: &RowData,
                      sc: &mut Scratch,
                      j: usize|
     -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let scal = grid.at(i, j);
        let phi = row.phi[j * n..(j + 1) * n].to_vec();
        let mut l_phi = vec![0.0; n];
        for k in 0..n {
            l_phi[k] = if j == 0 {
                (-3.0 * row.phi[k] + 4.0 * row.phi[n + k] - row.phi[2 * n + k]) / (2.0 * h)
            } else if j == n_v {
                (3.0 * row.phi[n_v * n + k] - 4.0 * row.phi[(n_v - 1) * n + k]
                    + row.phi[(n_v - 2) * n + k])
                    / (2.0 * h)
            } else {
                (row.phi[(j + 1) * n + k] - row.phi[(j - 1) * n + k]) / (2.0 * h)
            };
        }
        angular.project_into(&phi, &mut sc.coeffs);
        let mut lap = vec![0.0; n];
        laplacian_from_coeffs(&sc.coeffs, scal.r, angular, &mut lap);
        angular.dtheta_from_coeffs(&sc.coeffs, &mut sc.dtheta);
        let grad2: Vec<f64> = sc.dtheta.iter().map(|d| (d / scal.r) * (d / scal.r)).collect();
        (phi, l_phi, lap, grad2)
    };

    // Seed at j = 0 from the data's exact radial derivative.
    {
        let scal = grid.at(i, 0);
        for (k, &x) in angular.nodes().iter().enumerate() {
            row.phi_h[k] = src.phi_h_seed(scal, x, u, grid.v_of(0));
        }
        let (phi, l_phi, lap, grad2) = eval_point(row, sc, 0);
        let scal = grid.at(i, 0);
        let fz = forcing.map_or(0.0, |m| m.source_phi_h(u, grid.v_of(0), scal));
        for (k, &x) in angular.nodes().iter().enumerate() {
            let a = cfg.coefficient(u, grid.v_of(0), x, phi[k] / scal.r);
            let (geo, nl) =
                phi_h_rate_split(phi[k], l_phi[k], grad2[k], lap[k], row.phi_h[k], scal, a, fz);
            row.rate_geo[k] = geo;
            row.rate_nl[k] = nl;
        }
    }

    for j in 1..=n_v {
        let scal = grid.at(i, j);
        let v = grid.v_of(j);
        let (phi, l_phi, lap, grad2) = eval_point(row, sc, j);
        let fz = forcing.map_or(0.0, |m| m.source_phi_h(u, v, scal));
        for (k, &x) in angular.nodes().iter().enumerate() {
            let a = cfg.coefficient(u, v, x, phi[k] / scal.r);
            let prev_rate = row.rate_geo[(j - 1) * n + k] + row.rate_nl[(j - 1) * n + k];
            // b_j: the rate with PhiH = 0.
            let (geo0, nl0) =
                phi_h_rate_split(phi[k], l_phi[k], grad2[k], lap[k], 0.0, scal, a, fz);
            let coeff = phi_h_rate_coeff(l_phi[k], phi[k], scal, a);
            let rhs = row.phi_h[(j - 1) * n + k] + 0.5 * h * (prev_rate + geo0 + nl0);
            let denom = 1.0 - 0.5 * h * coeff;
            let val = rhs / denom;
            if !val.is_finite() {
                return Err(EvolutionError::NonFinite {
                    u,
                    v,
                    node: k,
                });
            }
            row.phi_h[j * n + k] = val;
            let (geo, nl) =
                phi_h_rate_split(phi[k], l_phi[k], grad2[k], lap[k], val, scal, a, fz);
            row.rate_geo[j * n + k] = geo;
            row.rate_nl[j * n + k] = nl;
        }
    }
    Ok(())
}

/// Re-evaluate the transport-rate split of the carried auxiliary on a stored
/// row (used when a dense Field is post-processed rather than streamed).
/// Layout: j-major, node-inner.
pub(crate) fn evaluate_row_rates(
    grid: &EvolutionGrid,
    cfg: &NonlinearityConfig,
    i: usize,
    phi_row: &[f64],
    phi_h_row: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let angular = &grid.angular;
    let n = angular.n_nodes();
    let n_v = grid.spec.n_v;
    let h = grid.spec.h;
    let u = grid.u_of(i);
    let mut sc = Scratch::new(angular);
    let mut geo = vec![0.0; (n_v + 1) * n];
    let mut nl = vec![0.0; (n_v + 1) * n];
    for j in 0..=n_v {
        let scal = grid.at(i, j);
        let v = grid.v_of(j);
        let phi = &phi_row[j * n..(j + 1) * n];
        angular.project_into(phi, &mut sc.coeffs);
        laplacian_from_coeffs(&sc.coeffs, scal.r, angular, &mut sc.lap);
        angular.dtheta_from_coeffs(&sc.coeffs, &mut sc.dtheta);
        for (k, &x) in angular.nodes().iter().enumerate() {
            let l_phi = if j == 0 {
                (-3.0 * phi_row[k] + 4.0 * phi_row[n + k] - phi_row[2 * n + k]) / (2.0 * h)
            } else if j == n_v {
                (3.0 * phi_row[n_v * n + k] - 4.0 * phi_row[(n_v - 1) * n + k]
                    + phi_row[(n_v - 2) * n + k])
                    / (2.0 * h)
            } else {
                (phi_row[(j + 1) * n + k] - phi_row[(j - 1) * n + k]) / (2.0 * h)
            };
            let grad = sc.dtheta[k] / scal.r;
            let a = cfg.coefficient(u, v, x, phi[k] / scal.r);
            let (g, q) = phi_h_rate_split(
                phi[k],
                l_phi,
                grad * grad,
                sc.lap[k],
                phi_h_row[j * n + k],
                scal,
                a,
                0.0,
            );
            geo[j * n + k] = g;
            nl[j * n + k] = q;
        }
    }
    (geo, nl)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::grid::{build_evolution_grid, GridSpec};
    use crate::geometry::BackgroundErn;
    use crate::modes::build_angular_grid;

    fn small_grid(l_max: usize, n_nodes: usize, n_u: usize, n_v: usize, h: f64) -> EvolutionGrid {
        build_evolution_grid(
            GridSpec {
                u0: 0.0,
                v0: 0.0,
                n_u,
                n_v,
                h,
            },
            build_angular_grid(l_max, n_nodes).unwrap(),
            BackgroundErn::default(),
        )
        .unwrap()
    }

    #[test]
    fn rhs_center_zero_field() {
        let g = small_grid(2, 4, 4, 4, 0.1);
        let z = vec![0.0; 4];
        let s = g.at(2, 2);
        let out = rhs_center(
            &z,
            &z,
            &z,
            &z,
            1.0,
            1.0,
            s,
            &NonlinearityConfig::constant(1.0),
            &g.angular,
        )
        .unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rhs_center_linear_l1_hand_value() {
        // A off, l = 1, r = 2, phi = 1 in the mode:
        // (1/4)[0.25 * (-2/4) * 1 - (0.25 * 0.25 / 2) * 1] = -0.0390625.
        let angular = build_angular_grid(2, 4).unwrap();
        let scal = DiagonalScalars {
            r: 2.0,
            d: 0.25,
            dprime: 0.25,
            dsecond: 2.0 * (3.0 - 4.0) / 16.0,
            rstar: -2.0 * (2.0f64).ln(),
        };
        // phi = Phat_1(x_j): a pure l = 1 field with unit coefficient.
        let phi: Vec<f64> = (0..4).map(|j| angular.basis(j, 1)).collect();
        let z = vec![0.0; 4];
        let out = rhs_center(
            &phi,
            &z,
            &z,
            &z,
            0.0,
            0.0,
            &scal,
            &NonlinearityConfig::off(),
            &angular,
        )
        .unwrap();
        for (j, &v) in out.iter().enumerate() {
            let want = -0.0390625 * angular.basis(j, 1);
            assert!((v - want).abs() < 1e-14, "node {j}: {v} vs {want}");
        }
    }

    #[test]
    fn rhs_center_nonlinear_matches_null_form_oracle() {
        // The nonlinear terms must equal (Dr/4) A g^{ab} d_a psi d_b psi with
        // the psi-derivatives rebuilt from the phi state (away from the
        // horizon the raw 1/D form is well conditioned).
        let angular = build_angular_grid(0, 1).unwrap();
        let r: f64 = 2.3;
        let d = (1.0 - 1.0 / r) * (1.0 - 1.0 / r);
        let scal = DiagonalScalars {
            r,
            d,
            dprime: 2.0 * (r - 1.0) / (r * r * r),
            dsecond: 2.0 * (3.0 - 2.0 * r) / (r.powi(4)),
            rstar: 0.0,
        };
        let (phi, l_phi, lbar_phi, grad2) = (0.37, -0.21, 0.11, 0.0);
        let a = 0.8;
        let cfg = NonlinearityConfig::constant(a);
        let out = rhs_center(
            &[phi],
            &[l_phi],
            &[lbar_phi],
            &[grad2],
            1.0,
            2.0,
            &scal,
            &cfg,
            &angular,
        )
        .unwrap()[0];
        let lin = rhs_center(
            &[phi],
            &[l_phi],
            &[lbar_phi],
            &[grad2],
            1.0,
            2.0,
            &scal,
            &NonlinearityConfig::off(),
            &angular,
        )
        .unwrap()[0];
        // Oracle: psi-form of the null form; the nonlinear part of the
        // right-hand side is (1/4) D r A g^{ab} d_a psi d_b psi.
        let l_psi = l_phi / r - phi * d / (2.0 * r * r);
        let lbar_psi = lbar_phi / r + phi * d / (2.0 * r * r);
        let null_form = 4.0 / d * l_psi * lbar_psi; // grad part zero here
        let want_nl = 0.25 * d * r * a * null_form;
        assert!(
            ((out - lin) - want_nl).abs() < 1e-13,
            "{} vs {}",
            out - lin,
            want_nl
        );
    }

    #[test]
    fn zero_data_zero_field() {
        let g = small_grid(1, 2, 8, 8, 0.2);
        let data = InitialData::pure_l0(0.0, 2.0, 0.4);
        let f = evolve(&g, &data, &NonlinearityConfig::constant(1.0)).unwrap();
        for i in 0..=8 {
            for j in 0..=8 {
                for k in 0..2 {
                    assert_eq!(f.phi(i, j, k), 0.0);
                }
            }
        }
    }

    #[test]
    fn linear_superposition_and_scaling() {
        let g = small_grid(0, 1, 24, 24, 0.15);
        let d1 = InitialData::pure_l0(0.02, 2.0, 0.3);
        let d1x2 = InitialData {
            epsilon: 0.04,
            ..d1
        };
        let f1 = evolve_linear(&g, &d1).unwrap();
        let f1x2 = evolve_linear(&g, &d1x2).unwrap();
        for i in (0..=24).step_by(6) {
            for j in (0..=24).step_by(6) {
                let a = f1.phi(i, j, 0);
                let b = f1x2.phi(i, j, 0);
                assert!((2.0 * a - b).abs() <= 1e-12 * b.abs().max(1e-12), "{a} {b}");
            }
        }
    }

    #[test]
    fn l_sector_decoupling_in_linear_flow() {
        let g = small_grid(2, 4, 16, 16, 0.2);
        let data = InitialData {
            epsilon: 0.02,
            center: 2.0,
            width: 0.3,
            l0: 0.0,
            l1: 1.0,
        };
        let f = evolve_linear(&g, &data).unwrap();
        for i in (0..=16).step_by(4) {
            for j in (0..=16).step_by(4) {
                let a = g.angular.project(f.phi_nodes(i, j)).unwrap();
                assert!(a[0].abs() < 1e-12, "l=0 excited: {}", a[0]);
            }
        }
    }

    #[test]
    fn spherical_symmetry_preserved_nonlinearly() {
        let g = small_grid(3, 6, 16, 16, 0.2);
        let data = InitialData::pure_l0(0.05, 2.0, 0.3);
        let f = evolve(&g, &data, &NonlinearityConfig::constant(1.0)).unwrap();
        for i in (0..=16).step_by(4) {
            for j in (0..=16).step_by(4) {
                let nodes = f.phi_nodes(i, j);
                let spread = nodes
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                        (lo.min(v), hi.max(v))
                    });
                assert!(spread.1 - spread.0 < 1e-13, "spread {:?}", spread);
            }
        }
    }

    #[test]
    fn translation_invariance_in_uv() {
        let mk = |u0: f64, v0: f64| {
            build_evolution_grid(
                GridSpec {
                    u0,
                    v0,
                    n_u: 20,
                    n_v: 20,
                    h: 0.2,
                },
                build_angular_grid(0, 1).unwrap(),
                BackgroundErn::default(),
            )
            .unwrap()
        };
        let data = InitialData::pure_l0(0.03, 2.0, 0.3);
        let cfg = NonlinearityConfig::constant(1.0);
        let f1 = evolve(&mk(0.0, 0.0), &data, &cfg).unwrap();
        let f2 = evolve(&mk(7.0, 7.0), &data, &cfg).unwrap();
        for i in (0..=20).step_by(5) {
            for j in (0..=20).step_by(5) {
                assert_eq!(f1.phi(i, j, 0), f2.phi(i, j, 0));
            }
        }
    }

    #[test]
    fn domain_of_dependence_locality() {
        // Zeroing the data outside a sub-interval changes the solution only
        // inside that sub-interval's future diamond; each untouched point is
        // filled from a bitwise-identical past cone.
        let g = small_grid(0, 1, 30, 30, 0.2);
        let bump = InitialData::pure_l0(0.03, 2.35, 0.3); // support [2.05, 2.65]
        let full_phi = |r: f64, x: f64| bump.phi(r, x);
        let full_dr = |r: f64, x: f64| bump.phi_dr(r, x);
        let cut_phi = |r: f64, x: f64| if r <= 2.5 { bump.phi(r, x) } else { 0.0 };
        let cut_dr = |r: f64, x: f64| if r <= 2.5 { bump.phi_dr(r, x) } else { 0.0 };
        let run = |phi: &dyn Fn(f64, f64) -> f64, dr: &dyn Fn(f64, f64) -> f64| {
            evolve_source(
                &g,
                &DataSource::Profiles { phi, phi_dr: dr },
                &NonlinearityConfig::constant(1.0),
            )
            .unwrap()
        };
        let f1 = run(&full_phi, &full_dr);
        let f2 = run(&cut_phi, &cut_dr);
        // The data differ only on the outgoing-ray segment with r > 2.5.
        let j_diff = (0..=30).find(|&j| g.at(0, j).r > 2.5).unwrap();
        assert!(j_diff > 3, "degenerate setup");
        let mut nonzero_agree = 0usize;
        for i in 0..=30usize {
            for j in 0..j_diff {
                assert_eq!(f1.phi(i, j, 0), f2.phi(i, j, 0), "leak at ({i},{j})");
                if f1.phi(i, j, 0) != 0.0 {
                    nonzero_agree += 1;
                }
            }
        }
        // Agreement is nontrivial (real data in the shared cone) and the
        // solutions genuinely differ in the future of the zeroed segment.
        assert!(nonzero_agree > 9);
        assert!(f1.phi(30, 30, 0) != f2.phi(30, 30, 0));
    }

    #[test]
    fn carried_auxiliary_matches_differencing_away_from_horizon() {
        // Where D is order one the carried PhiH and (2r/D) Lbar phi from
        // centered differences must agree to O(h^2).
        let g = small_grid(0, 1, 40, 40, 0.1);
        let data = InitialData::pure_l0(0.03, 2.0, 0.3);
        let f = evolve_linear(&g, &data).unwrap();
        for i in [10usize, 20, 30] {
            for j in [10usize, 20, 30] {
                let s = g.at(i, j);
                if s.d < D_SWITCH {
                    continue;
                }
                let diffed = 2.0 * s.r / s.d * f.lbar_phi(i, j, 0);
                let carried = f.phi_h(i, j, 0);
                assert!(
                    (diffed - carried).abs() < 6e-3 * carried.abs().max(0.05),
                    "({i},{j}): {diffed} vs {carried}"
                );
            }
        }
    }
}
