//! Streaming observers: the diagnostics of a full-scale run are accumulated
//! during the march so the lattice never has to be stored densely.

use crate::diagnostics::flux::{
    locate_slice, morawetz_cell_terms, weighted_flux_on, FluxVariant, FoliationSpec,
    LatticeAccess, SliceGeometry,
};
use crate::diagnostics::sector::Sector;
use crate::diagnostics::series::TopRows;
use crate::error::DiagnosticsError;
use crate::evolution::{CellCenter, CellObserver, EvolutionGrid, GridSpec, RowObserver, RowWindow};

/// Keeps the last three rows (values, auxiliaries, transport rates) for the
/// horizon-proxy series.
pub struct HorizonCollector {
    i_top: usize,
    rows_phi: Vec<Vec<f64>>,
    rows_phi_h: Vec<Vec<f64>>,
    rate_geo: Vec<f64>,
    rate_nl: Vec<f64>,
    seen_top: bool,
}

impl HorizonCollector {
    pub fn new(i_top: usize) -> Self {
        Self {
            i_top,
            rows_phi: Vec::new(),
            rows_phi_h: Vec::new(),
            rate_geo: Vec::new(),
            rate_nl: Vec::new(),
            seen_top: false,
        }
    }

    pub fn into_top_rows(self) -> Result<TopRows, DiagnosticsError> {
        if !self.seen_top || self.rows_phi.len() < 3 {
            return Err(DiagnosticsError::Config(
                "horizon collector needs at least 3 completed rows".into(),
            ));
        }
        let mut phi = self.rows_phi;
        let mut phi_h = self.rows_phi_h;
        let (p0, p1, p2) = (phi.remove(0), phi.remove(0), phi.remove(0));
        let (q0, q1, q2) = (phi_h.remove(0), phi_h.remove(0), phi_h.remove(0));
        Ok(TopRows {
            i_top: self.i_top,
            phi: [p0, p1, p2],
            phi_h: [q0, q1, q2],
            rate_geo: self.rate_geo,
            rate_nl: self.rate_nl,
        })
    }
}

impl RowObserver for HorizonCollector {
    fn on_row(&mut self, window: &RowWindow, _grid: &EvolutionGrid) {
        let row = window.latest();
        if row.i + 2 < self.i_top || row.i > self.i_top {
            return;
        }
        self.rows_phi.push(row.phi.clone());
        self.rows_phi_h.push(row.phi_h.clone());
        if row.i == self.i_top {
            self.rate_geo = row.rate_geo.clone();
            self.rate_nl = row.rate_nl.clone();
            self.seen_top = true;
        }
    }
}

/// Lattice patch held by a slice collector: five full columns around the
/// slice anchor plus five full rows around the slice corner.
pub struct SliceData {
    pub tau: f64,
    pub geom: SliceGeometry,
    spec: GridSpec,
    n: usize,
    cols_phi: Vec<f64>,
    cols_phi_h: Vec<f64>,
    rows_phi: Vec<f64>,
    rows_phi_h: Vec<f64>,
}

impl SliceData {
    fn new(tau: f64, geom: SliceGeometry, spec: GridSpec, n: usize) -> Self {
        let cols = (spec.n_u + 1) * 5 * n;
        let rows = 5 * (spec.n_v + 1) * n;
        Self {
            tau,
            geom,
            spec,
            n,
            cols_phi: vec![0.0; cols],
            cols_phi_h: vec![0.0; cols],
            rows_phi: vec![0.0; rows],
            rows_phi_h: vec![0.0; rows],
        }
    }

    #[inline]
    fn col_offset(&self, j: usize) -> Option<usize> {
        let base = self.geom.j_tau as i64 - 2;
        let d = j as i64 - base;
        if (0..5).contains(&d) {
            Some(d as usize)
        } else {
            None
        }
    }

    #[inline]
    fn row_offset(&self, i: usize) -> Option<usize> {
        let base = self.geom.i_r as i64 - 2;
        let d = i as i64 - base;
        if (0..5).contains(&d) {
            Some(d as usize)
        } else {
            None
        }
    }

    fn ingest(&mut self, i: usize, phi: &[f64], phi_h: &[f64]) {
        let n = self.n;
        let n_v = self.spec.n_v;
        for dj in 0..5usize {
            let j = self.geom.j_tau as i64 - 2 + dj as i64;
            if j < 0 || j as usize > n_v {
                continue;
            }
            let j = j as usize;
            let dst = (i * 5 + dj) * n;
            self.cols_phi[dst..dst + n].copy_from_slice(&phi[j * n..(j + 1) * n]);
            self.cols_phi_h[dst..dst + n].copy_from_slice(&phi_h[j * n..(j + 1) * n]);
        }
        if let Some(di) = self.row_offset(i) {
            let dst = di * (n_v + 1) * n;
            self.rows_phi[dst..dst + (n_v + 1) * n].copy_from_slice(phi);
            self.rows_phi_h[dst..dst + (n_v + 1) * n].copy_from_slice(phi_h);
        }
    }
}

impl LatticeAccess for SliceData {
    fn spec(&self) -> &GridSpec {
        &self.spec
    }
    fn n_nodes(&self) -> usize {
        self.n
    }
    fn phi(&self, i: usize, j: usize, k: usize) -> f64 {
        if let Some(dj) = self.col_offset(j) {
            return self.cols_phi[(i * 5 + dj) * self.n + k];
        }
        if let Some(di) = self.row_offset(i) {
            return self.rows_phi[(di * (self.spec.n_v + 1) + j) * self.n + k];
        }
        panic!("slice patch does not cover ({i}, {j})");
    }
    fn phi_h(&self, i: usize, j: usize, k: usize) -> f64 {
        if let Some(dj) = self.col_offset(j) {
            return self.cols_phi_h[(i * 5 + dj) * self.n + k];
        }
        if let Some(di) = self.row_offset(i) {
            return self.rows_phi_h[(di * (self.spec.n_v + 1) + j) * self.n + k];
        }
        panic!("slice patch does not cover ({i}, {j})");
    }
}

/// One output row of the flux report.
#[derive(Debug, Clone)]
pub struct FluxRow {
    pub tau: f64,
    pub p: f64,
    pub l: usize,
    pub sector: Sector,
    pub variant: FluxVariant,
    pub near: f64,
    pub mid: f64,
    pub far: f64,
    pub bulk: f64,
    pub p_in_range: bool,
}

/// Collects the lattice patches for every requested slice.
pub struct FluxCollector {
    slices: Vec<SliceData>,
}

impl FluxCollector {
    pub fn new(
        grid: &EvolutionGrid,
        fol: &FoliationSpec,
        taus: &[f64],
    ) -> Result<Self, DiagnosticsError> {
        let mut slices = Vec::with_capacity(taus.len());
        for &tau in taus {
            let geom = locate_slice(grid, fol, tau)?;
            slices.push(SliceData::new(
                geom.tau_effective,
                geom,
                grid.spec,
                grid.angular.n_nodes(),
            ));
        }
        Ok(Self { slices })
    }

    /// Evaluate the requested flux set on the collected patches, attaching
    /// the bulk over [previous tau, tau] from the Morawetz accumulator.
    #[allow(clippy::too_many_arguments)]
    pub fn evaluate(
        &self,
        grid: &EvolutionGrid,
        fol: &FoliationSpec,
        p_list: &[f64],
        sectors: &[Sector],
        variants: &[FluxVariant],
        l_list: &[usize],
        bulks: &MorawetzCollector,
    ) -> Result<Vec<FluxRow>, DiagnosticsError> {
        let mut out = Vec::new();
        for (s_idx, sl) in self.slices.iter().enumerate() {
            for &p in p_list {
                for &l in l_list {
                    for &sector in sectors {
                        for &variant in variants {
                            let f = weighted_flux_on(
                                sl, grid, fol, sl.tau, p, l, sector, variant,
                            )?;
                            out.push(FluxRow {
                                tau: f.tau,
                                p,
                                l,
                                sector,
                                variant,
                                near: f.near,
                                mid: f.mid,
                                far: f.far,
                                bulk: bulks.interval_value(s_idx, sector),
                                p_in_range: f.p_in_range,
                            });
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

impl RowObserver for FluxCollector {
    fn on_row(&mut self, window: &RowWindow, _grid: &EvolutionGrid) {
        let row = window.latest();
        for sl in &mut self.slices {
            sl.ingest(row.i, &row.phi, &row.phi_h);
        }
    }
}

/// Accumulates the near-horizon spacetime bulk between consecutive slices,
/// per sector, from cell-center states during the march.
pub struct MorawetzCollector {
    boundaries: Vec<f64>,
    delta: f64,
    r0: f64,
    acc: Vec<[f64; 3]>,
    coeff_scratch: Vec<f64>,
}

impl MorawetzCollector {
    /// `boundaries` are the slice parameters in ascending order; interval k
    /// is [boundaries[k-1], boundaries[k]) with interval 0 reaching back to
    /// the initial ray.
    pub fn new(grid: &EvolutionGrid, boundaries: &[f64], delta: f64, r0: f64) -> Self {
        Self {
            boundaries: boundaries.to_vec(),
            delta,
            r0,
            acc: vec![[0.0; 3]; boundaries.len()],
            coeff_scratch: vec![0.0; grid.angular.l_max() + 1],
        }
    }

    pub fn interval_value(&self, idx: usize, sector: Sector) -> f64 {
        let s = match sector {
            Sector::L0 => 0,
            Sector::LGe1 => 1,
            Sector::All => 2,
        };
        self.acc.get(idx).map_or(0.0, |a| a[s])
    }
}

impl CellObserver for MorawetzCollector {
    fn on_cell(&mut self, cell: &CellCenter, grid: &EvolutionGrid) {
        if cell.scal.r > self.r0 {
            return;
        }
        let v_c = grid.spec.v0 + (cell.j as f64 - 0.5) * grid.spec.h;
        let idx = match self.boundaries.iter().position(|&b| v_c < b) {
            Some(k) => k,
            None => return,
        };
        let terms = morawetz_cell_terms(
            &grid.angular,
            cell.scal.r,
            self.delta,
            grid.background.mass(),
            cell.phi_coeffs,
            cell.l_phi,
            cell.lbar_phi,
            &mut self.coeff_scratch,
        );
        let w = grid.spec.h * grid.spec.h * 2.0 * std::f64::consts::PI;
        for s in 0..3 {
            self.acc[idx][s] += w * terms[s];
        }
    }
}

/// Criterion series for the weighted second-transversal growth bound: the
/// running max over the near-horizon region of D^{(1-delta)/2} |PhiH2|,
/// one series per requested delta.
pub struct GrowthMaxCollector {
    deltas: Vec<f64>,
    r0: f64,
    max_w: Vec<Vec<f64>>,
}

impl GrowthMaxCollector {
    pub fn new(grid: &EvolutionGrid, deltas: &[f64], r0: f64) -> Self {
        Self {
            deltas: deltas.to_vec(),
            r0,
            max_w: vec![vec![0.0; grid.spec.n_v + 1]; deltas.len()],
        }
    }

    pub fn series(&self, grid: &EvolutionGrid) -> Vec<(f64, Vec<f64>, Vec<f64>)> {
        let v: Vec<f64> = (0..=grid.spec.n_v).map(|j| grid.v_of(j)).collect();
        self.deltas
            .iter()
            .zip(&self.max_w)
            .map(|(&d, m)| (d, v.clone(), m.clone()))
            .collect()
    }

    fn absorb(&mut self, grid: &EvolutionGrid, i_mid: usize, ph2_row: &[f64], n: usize) {
        for j in 0..=grid.spec.n_v {
            let s = grid.at(i_mid, j);
            if s.r > self.r0 {
                continue;
            }
            let mut amp = 0.0f64;
            for k in 0..n {
                amp = amp.max(ph2_row[j * n + k].abs());
            }
            for (d_idx, &delta) in self.deltas.iter().enumerate() {
                let w = s.d.powf(0.5 * (1.0 - delta)) * amp;
                if w > self.max_w[d_idx][j] {
                    self.max_w[d_idx][j] = w;
                }
            }
        }
    }
}

impl RowObserver for GrowthMaxCollector {
    fn on_row(&mut self, window: &RowWindow, grid: &EvolutionGrid) {
        if window.depth() < 3 {
            return;
        }
        let latest = window.latest();
        let i = latest.i;
        let n = grid.angular.n_nodes();
        let h = grid.spec.h;
        // Centered second application at row i-1.
        let prev2 = window.by_index(i - 2).expect("window depth 3");
        let prev1 = window.by_index(i - 1).expect("window depth 3");
        let mut ph2 = vec![0.0; (grid.spec.n_v + 1) * n];
        for j in 0..=grid.spec.n_v {
            let s = grid.at(i - 1, j);
            for k in 0..n {
                let lbar = (latest.phi_h[j * n + k] - prev2.phi_h[j * n + k]) / (2.0 * h);
                ph2[j * n + k] = 2.0 * s.r / s.d * lbar;
            }
        }
        self.absorb(grid, i - 1, &ph2, n);
        // One-sided closure at the final row.
        if i == grid.spec.n_u {
            for j in 0..=grid.spec.n_v {
                let s = grid.at(i, j);
                for k in 0..n {
                    let lbar = (3.0 * latest.phi_h[j * n + k] - 4.0 * prev1.phi_h[j * n + k]
                        + prev2.phi_h[j * n + k])
                        / (2.0 * h);
                    ph2[j * n + k] = 2.0 * s.r / s.d * lbar;
                }
            }
            self.absorb(grid, i, &ph2, n);
        }
    }
}

/// One strided snapshot record: modal coefficients of the state at a lattice
/// point.
#[derive(Debug, Clone, Copy)]
pub struct SnapshotRow {
    pub u: f64,
    pub v: f64,
    pub r: f64,
    pub ell: usize,
    pub phi: f64,
    pub l_phi: f64,
    pub lbar_phi: f64,
    pub phi_h: f64,
}

/// Collects a strided snapshot during the march.
pub struct SnapshotCollector {
    stride_u: usize,
    stride_v: usize,
    rows: Vec<SnapshotRow>,
}

impl SnapshotCollector {
    pub fn new(stride_u: usize, stride_v: usize) -> Self {
        Self {
            stride_u: stride_u.max(1),
            stride_v: stride_v.max(1),
            rows: Vec::new(),
        }
    }

    pub fn into_rows(self) -> Vec<SnapshotRow> {
        self.rows
    }

    fn emit_row(
        &mut self,
        grid: &EvolutionGrid,
        i: usize,
        phi: &[f64],
        phi_h: &[f64],
        lbar: impl Fn(usize, usize) -> f64,
    ) {
        let angular = &grid.angular;
        let n = angular.n_nodes();
        let n_v = grid.spec.n_v;
        let h = grid.spec.h;
        let l_max = angular.l_max();
        let mut c_phi = vec![0.0; l_max + 1];
        let mut c_l = vec![0.0; l_max + 1];
        let mut c_lb = vec![0.0; l_max + 1];
        let mut c_ph = vec![0.0; l_max + 1];
        let mut lvals = vec![0.0; n];
        let mut lbvals = vec![0.0; n];
        for j in (0..=n_v).step_by(self.stride_v) {
            for k in 0..n {
                lvals[k] = if j == 0 {
                    (-3.0 * phi[k] + 4.0 * phi[n + k] - phi[2 * n + k]) / (2.0 * h)
                } else if j == n_v {
                    (3.0 * phi[n_v * n + k] - 4.0 * phi[(n_v - 1) * n + k]
                        + phi[(n_v - 2) * n + k])
                        / (2.0 * h)
                } else {
                    (phi[(j + 1) * n + k] - phi[(j - 1) * n + k]) / (2.0 * h)
                };
                lbvals[k] = lbar(j, k);
            }
            angular.project_into(&phi[j * n..(j + 1) * n], &mut c_phi);
            angular.project_into(&lvals, &mut c_l);
            angular.project_into(&lbvals, &mut c_lb);
            angular.project_into(&phi_h[j * n..(j + 1) * n], &mut c_ph);
            let s = grid.at(i, j);
            for ell in 0..=l_max {
                self.rows.push(SnapshotRow {
                    u: grid.u_of(i),
                    v: grid.v_of(j),
                    r: s.r,
                    ell,
                    phi: c_phi[ell],
                    l_phi: c_l[ell],
                    lbar_phi: c_lb[ell],
                    phi_h: c_ph[ell],
                });
            }
        }
    }
}

impl RowObserver for SnapshotCollector {
    fn on_row(&mut self, window: &RowWindow, grid: &EvolutionGrid) {
        let n = grid.angular.n_nodes();
        let h = grid.spec.h;
        let i = window.latest().i;
        if window.depth() >= 3 {
            // Row 0 one-sided, interior rows centered, both lagged.
            if i == 2 && self.stride_u >= 1 {
                let r0 = window.by_index(0).unwrap();
                let r1 = window.by_index(1).unwrap();
                let r2 = window.by_index(2).unwrap();
                let (p0, p1, p2) = (r0.phi.clone(), r1.phi.clone(), r2.phi.clone());
                let ph0 = r0.phi_h.clone();
                self.emit_row(grid, 0, &p0, &ph0, |j, k| {
                    (-3.0 * p0[j * n + k] + 4.0 * p1[j * n + k] - p2[j * n + k]) / (2.0 * h)
                });
            }
            let mid = i - 1;
            if mid >= 1 && mid % self.stride_u == 0 && mid != grid.spec.n_u {
                let prev = window.by_index(i - 2).unwrap();
                let latest = window.latest();
                let (pm, pp, pl) = (
                    window.by_index(mid).unwrap().phi.clone(),
                    prev.phi.clone(),
                    latest.phi.clone(),
                );
                let phm = window.by_index(mid).unwrap().phi_h.clone();
                self.emit_row(grid, mid, &pm, &phm, |j, k| {
                    (pl[j * n + k] - pp[j * n + k]) / (2.0 * h)
                });
            }
            if i == grid.spec.n_u {
                let latest = window.latest();
                let r1 = window.by_index(i - 1).unwrap();
                let r2 = window.by_index(i - 2).unwrap();
                let (pt, p1, p2) = (latest.phi.clone(), r1.phi.clone(), r2.phi.clone());
                let pht = latest.phi_h.clone();
                self.emit_row(grid, i, &pt, &pht, |j, k| {
                    (3.0 * pt[j * n + k] - 4.0 * p1[j * n + k] + p2[j * n + k]) / (2.0 * h)
                });
            }
        }
    }
}
