//! Report files. Floats are written with the shortest round-trip formatting,
//! so rerunning an identical configuration reproduces byte-identical CSV
//! bodies; only the manifest carries volatile fields (wall time).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::{serialize_config, RunConfig};
use crate::diagnostics::{FluxRow, FluxVariant, SnapshotRow};
use crate::pipeline::{ConvRow, FitRow, RunArtifacts, RunError};

pub const HORIZON_HEADER: &str = "v,r_minus_M,psi,Tpsi,dtheta_psi,PhiH,PhiH2,PhiH2_weighted,HNL0";
pub const FLUX_HEADER: &str = "tau,p,l,sector,variant,near,mid,far,bulk";
pub const FITS_HEADER: &str = "quantity,window_lo,window_hi,exponent,stderr,amplitude,residual_rms";
pub const CONVERGENCE_HEADER: &str = "quantity,h_coarse,h_mid,h_fine,order";
pub const SNAPSHOT_HEADER: &str = "u,v,r,ell,phi,Lphi,Lbarphi,PhiH";

pub fn horizon_series_csv(a: &RunArtifacts) -> String {
    let s = &a.series;
    let mut out = String::from(HORIZON_HEADER);
    out.push('\n');
    for j in 0..s.v.len() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            s.v[j],
            s.r_minus_m[j],
            s.psi[j],
            s.t_psi[j],
            s.dtheta_psi[j],
            s.phi_h[j],
            s.phi_h2[j],
            s.phi_h2_weighted[j],
            s.hnl0[j]
        );
    }
    out
}

fn variant_label(v: FluxVariant) -> &'static str {
    match v {
        FluxVariant::Base => "base",
        FluxVariant::Commuted => "commuted",
    }
}

pub fn flux_report_csv(rows: &[FluxRow]) -> String {
    let mut out = String::from(FLUX_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.tau,
            r.p,
            r.l,
            r.sector.label(),
            variant_label(r.variant),
            r.near,
            r.mid,
            r.far,
            r.bulk
        );
    }
    out
}

pub fn fits_csv(rows: &[FitRow]) -> String {
    let mut out = String::from(FITS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.quantity,
            r.fit.window.0,
            r.fit.window.1,
            r.fit.exponent,
            r.fit.stderr,
            r.fit.amplitude,
            r.fit.residual_rms
        );
    }
    out
}

pub fn convergence_csv(rows: &[ConvRow]) -> String {
    let mut out = String::from(CONVERGENCE_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.quantity, r.h_coarse, r.h_mid, r.h_fine, r.order
        );
    }
    out
}

pub fn snapshot_csv(rows: &[SnapshotRow]) -> String {
    let mut out = String::from(SNAPSHOT_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.u, r.v, r.r, r.ell, r.phi, r.l_phi, r.lbar_phi, r.phi_h
        );
    }
    out
}

pub fn manifest_text(cfg: &RunConfig, a: &RunArtifacts, wall_seconds: f64) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "ernwave {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(out, "wall_seconds = {wall_seconds:.3}");
    let _ = writeln!(out, "grid: {}", a.grid_summary);
    let _ = writeln!(
        out,
        "horizon_row_r_minus_M_at_v_end = {}",
        a.r_minus_m_top
    );
    out.push_str("--- configuration ---\n");
    out.push_str(&serialize_config(cfg));
    out
}

/// Write the full report set; on any failure remove everything written by
/// this call so no partial result directory survives.
pub fn write_run_outputs(
    dir: &Path,
    cfg: &RunConfig,
    a: &RunArtifacts,
    wall_seconds: f64,
) -> Result<(), RunError> {
    fs::create_dir_all(dir)?;
    let files: Vec<(PathBuf, String)> = vec![
        (dir.join("horizon_series.csv"), horizon_series_csv(a)),
        (dir.join("flux_report.csv"), flux_report_csv(&a.flux_rows)),
        (dir.join("fits.csv"), fits_csv(&a.fits)),
        (dir.join("snapshot.csv"), snapshot_csv(&a.snapshot)),
        (dir.join("manifest.txt"), manifest_text(cfg, a, wall_seconds)),
    ];
    let mut written: Vec<PathBuf> = Vec::new();
    for (path, body) in files {
        match fs::write(&path, body) {
            Ok(()) => written.push(path),
            Err(e) => {
                for w in &written {
                    let _ = fs::remove_file(w);
                }
                return Err(RunError::Io(e));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn headers_match_documented_schemas() {
        assert_eq!(
            HORIZON_HEADER,
            "v,r_minus_M,psi,Tpsi,dtheta_psi,PhiH,PhiH2,PhiH2_weighted,HNL0"
        );
        assert_eq!(FLUX_HEADER, "tau,p,l,sector,variant,near,mid,far,bulk");
        assert_eq!(
            FITS_HEADER,
            "quantity,window_lo,window_hi,exponent,stderr,amplitude,residual_rms"
        );
        assert_eq!(CONVERGENCE_HEADER, "quantity,h_coarse,h_mid,h_fine,order");
        assert_eq!(SNAPSHOT_HEADER, "u,v,r,ell,phi,Lphi,Lbarphi,PhiH");
    }

    #[test]
    fn float_display_round_trips() {
        for &x in &[0.1, 1.0 / 3.0, 6.02e23, -1.2345678901234567e-8] {
            let s = x.to_string();
            let back: f64 = s.parse().unwrap();
            assert_eq!(back, x);
        }
    }
}
