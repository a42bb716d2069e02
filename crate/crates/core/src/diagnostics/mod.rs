//! Everything the late-time theory quantifies: horizon series, charges,
//! weighted fluxes, bulks, duality residuals, and power-law fits.

pub mod collectors;
pub mod duality;
pub mod fit;
pub mod flux;
pub mod sector;
pub mod series;

pub use collectors::{
    FluxCollector, FluxRow, GrowthMaxCollector, HorizonCollector, MorawetzCollector,
    SnapshotCollector, SnapshotRow,
};
pub use duality::{ct_duality_residual, ct_duality_residual_with, CtDualityResidual, CtPrefactor};
pub use fit::{fit_power_law, PowerLawFit};
pub use flux::{
    locate_slice, master_energy, morawetz_bulk, weighted_flux, weighted_flux_on, FluxSample,
    FluxVariant, FoliationSpec, LatticeAccess, SliceGeometry,
};
pub use sector::Sector;
pub use series::{
    aretakis_drift, epsilon_scaling_report, hnl0_charge, hnl0_drift, horizon_series,
    horizon_series_from_rows, nonlinear_shift, ConservationReport, EpsScalingReport,
    HorizonSeries, TopRows,
};

/// Trapezoidal quadrature over sampled values.
pub(crate) fn trapz(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let mut s = 0.0;
    for w in 0..x.len().saturating_sub(1) {
        s += 0.5 * (x[w + 1] - x[w]) * (y[w] + y[w + 1]);
    }
    s
}

/// The default fit window: the last `frac` of the sampled range.
pub fn tail_window(v_lo: f64, v_hi: f64, frac: f64) -> (f64, f64) {
    (v_hi - frac * (v_hi - v_lo), v_hi)
}
