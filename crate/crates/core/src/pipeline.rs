//! Run orchestration shared by the CLI and the acceptance suite: streaming
//! simulation with the full collector set, convergence studies, and the
//! amplitude-scaling comparison.

use std::collections::BTreeMap;

use crate::config::RunConfig;
use crate::diagnostics::{
    aretakis_drift, epsilon_scaling_report, fit_power_law, hnl0_drift, horizon_series_from_rows,
    tail_window, EpsScalingReport, FluxCollector, FluxRow, FluxVariant, FoliationSpec,
    GrowthMaxCollector, HorizonCollector, HorizonSeries, MorawetzCollector, PowerLawFit, Sector,
    SnapshotCollector, SnapshotRow,
};
use crate::error::{ConfigError, DiagnosticsError, EvolutionError};
use crate::evolution::{
    build_evolution_grid, evolve_with_observers, DataSource, EvolutionGrid, GridSpec,
    ManufacturedSolution, RowObserver, RowWindow,
};
use crate::geometry::BackgroundErn;
use crate::modes::build_angular_grid;

/// Top-level failure modes, mapped onto the CLI exit codes.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Evolution(#[from] EvolutionError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Evolution(_) | RunError::Diagnostics(_) => 3,
            RunError::Io(_) => 1,
        }
    }
}

/// One fitted power law, labeled.
#[derive(Debug, Clone)]
pub struct FitRow {
    pub quantity: String,
    pub fit: PowerLawFit,
}

/// Everything a run produces, in memory.
pub struct RunArtifacts {
    pub config: RunConfig,
    pub series: HorizonSeries,
    pub flux_rows: Vec<FluxRow>,
    /// (delta, v samples, max over region A of the weighted growth quantity).
    pub growth: Vec<(f64, Vec<f64>, Vec<f64>)>,
    pub fits: Vec<FitRow>,
    pub snapshot: Vec<SnapshotRow>,
    /// r - M of the horizon-proxy row at the final v.
    pub r_minus_m_top: f64,
    pub grid_summary: String,
}

pub fn build_grid(cfg: &RunConfig) -> Result<EvolutionGrid, RunError> {
    let bg = BackgroundErn::new(cfg.mass).map_err(EvolutionError::from)?;
    let angular = build_angular_grid(cfg.l_max, cfg.effective_nodes())
        .map_err(EvolutionError::from)?;
    let spec = GridSpec {
        u0: cfg.u0,
        v0: cfg.v0,
        n_u: cfg.n_u(),
        n_v: cfg.n_v(),
        h: cfg.h,
    };
    Ok(build_evolution_grid(spec, angular, bg)?)
}

fn foliation(cfg: &RunConfig) -> FoliationSpec {
    FoliationSpec {
        extraction_radius: cfg.extraction_radius,
        r0: cfg.r0,
        r1: cfg.r1,
    }
}

fn auto_strides(n_u: usize, n_v: usize) -> (usize, usize) {
    // Aim for at most ~200 sampled rows/columns each.
    (((n_u + 1) + 199) / 200, ((n_v + 1) + 199) / 200)
}

/// The full streaming pipeline: evolve with every collector attached and
/// assemble the report tables.
pub fn run_simulation(cfg: &RunConfig) -> Result<RunArtifacts, RunError> {
    cfg.validate()?;
    let grid = build_grid(cfg)?;
    let fol = foliation(cfg);
    let data = cfg.initial_data();
    data.validate_support(&grid)?;
    let nl = cfg.nonlinearity();
    let taus = cfg.taus();

    let mut horizon = HorizonCollector::new(grid.spec.n_u);
    let mut flux = FluxCollector::new(&grid, &fol, &taus)?;
    let mut growth = GrowthMaxCollector::new(&grid, &[0.5, 1.0], cfg.r0);
    let mut morawetz = MorawetzCollector::new(&grid, &taus, cfg.delta1, cfg.r0);
    let (su, sv) = if cfg.snapshot_stride > 0 {
        (cfg.snapshot_stride, cfg.snapshot_stride)
    } else {
        auto_strides(grid.spec.n_u, grid.spec.n_v)
    };
    let mut snapshot = SnapshotCollector::new(su, sv);

    evolve_with_observers(
        &grid,
        &DataSource::Bump(&data),
        &nl,
        &mut [&mut horizon, &mut flux, &mut growth, &mut snapshot],
        &mut [&mut morawetz],
    )?;

    let top = horizon.into_top_rows()?;
    let series = horizon_series_from_rows(&grid, &top, cfg.growth_delta)?;
    let flux_rows = flux.evaluate(
        &grid,
        &fol,
        &cfg.p_list,
        &[Sector::L0, Sector::LGe1, Sector::All],
        &[FluxVariant::Base, FluxVariant::Commuted],
        &[0, 1],
        &morawetz,
    )?;
    let growth_series = growth.series(&grid);

    let fits = standard_fits(cfg, &series, &growth_series, &flux_rows);
    let r_top = *series.r_minus_m.last().unwrap();
    let grid_summary = format!(
        "n_u = {}, n_v = {}, h = {}, nodes = {}, r range [{:.6e}, {:.6}]",
        grid.spec.n_u,
        grid.spec.n_v,
        grid.spec.h,
        grid.angular.n_nodes(),
        grid.r_min() - cfg.mass,
        grid.r_max()
    );
    Ok(RunArtifacts {
        config: cfg.clone(),
        series,
        flux_rows,
        growth: growth_series,
        fits,
        snapshot: snapshot.into_rows(),
        r_minus_m_top: r_top,
        grid_summary,
    })
}

/// The standard named fits of a run; quantities whose window contains
/// nonpositive samples are skipped rather than erroring (a linear l = 0 run
/// has no angular-derivative series, for example).
fn standard_fits(
    cfg: &RunConfig,
    series: &HorizonSeries,
    growth: &[(f64, Vec<f64>, Vec<f64>)],
    flux_rows: &[FluxRow],
) -> Vec<FitRow> {
    let mut out = Vec::new();
    let v_lo = series.v[0];
    let v_hi = *series.v.last().unwrap();
    let window = tail_window(v_lo, v_hi, cfg.fit_window_fraction);
    let mut push = |name: &str, t: &[f64], y: Vec<f64>, win: (f64, f64)| {
        if let Ok(fit) = fit_power_law(t, &y, win) {
            out.push(FitRow {
                quantity: name.to_string(),
                fit,
            });
        }
    };
    let abs = |v: &[f64]| v.iter().map(|x| x.abs()).collect::<Vec<_>>();
    push("abs_psi0", &series.v, abs(&series.psi), window);
    push("abs_Tpsi", &series.v, abs(&series.t_psi), window);
    push("abs_dtheta_psi", &series.v, abs(&series.dtheta_psi), window);
    push("abs_PhiH2", &series.v, abs(&series.phi_h2), window);
    for (delta, v, m) in growth {
        push(
            &format!("maxA_wPhiH2_d{delta}"),
            v,
            m.clone(),
            window,
        );
    }
    // Flux decay fits: base l = 0 sector rows grouped by p.
    let mut by_p: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for row in flux_rows {
        if row.l == 0 && row.sector == Sector::L0 && row.variant == FluxVariant::Base {
            let e = by_p.entry(format!("flux_I_p{}_l0_l0", row.p)).or_default();
            e.0.push(row.tau);
            e.1.push(row.near + row.mid + row.far);
        }
    }
    for (name, (t, y)) in by_p {
        let win = (t[0], *t.last().unwrap());
        push(&name, &t, y, win);
    }
    out
}

/// Probe values (spherical mean of phi) at fixed lattice fractions, for
/// Richardson comparisons across refinement levels.
struct ProbeCollector {
    targets: Vec<(usize, usize)>,
    values: Vec<f64>,
}

impl RowObserver for ProbeCollector {
    fn on_row(&mut self, window: &RowWindow, grid: &EvolutionGrid) {
        let row = window.latest();
        let n = grid.angular.n_nodes();
        for (t_idx, &(i, j)) in self.targets.iter().enumerate() {
            if i == row.i {
                self.values[t_idx] = grid.angular.spherical_mean(&row.phi[j * n..(j + 1) * n]);
            }
        }
    }
}

/// Tracks the maximum deviation from the manufactured exact solution.
struct ManufacturedErrorCollector<'a> {
    m: &'a ManufacturedSolution,
    max_err: f64,
}

impl RowObserver for ManufacturedErrorCollector<'_> {
    fn on_row(&mut self, window: &RowWindow, grid: &EvolutionGrid) {
        let row = window.latest();
        let n = grid.angular.n_nodes();
        let u = grid.u_of(row.i);
        for j in 0..=grid.spec.n_v {
            let s = grid.at(row.i, j);
            let exact = self.m.phi(u, grid.v_of(j), s.r);
            for k in 0..n {
                let e = (row.phi[j * n + k] - exact).abs();
                if e > self.max_err {
                    self.max_err = e;
                }
            }
        }
    }
}

/// Per-level measurements of a convergence study.
pub struct LevelResult {
    pub h: f64,
    pub probes: Vec<f64>,
    pub phih_drift: f64,
    pub hnl0_drift: f64,
    pub mms_error: Option<f64>,
}

/// One row of the convergence table.
#[derive(Debug, Clone)]
pub struct ConvRow {
    pub quantity: String,
    pub h_coarse: f64,
    pub h_mid: f64,
    pub h_fine: f64,
    pub order: f64,
}

fn level_run(cfg: &RunConfig, h: f64) -> Result<LevelResult, RunError> {
    let mut level_cfg = cfg.clone();
    level_cfg.h = h;
    level_cfg.validate()?;
    let grid = build_grid(&level_cfg)?;
    let data = level_cfg.initial_data();
    let nl = level_cfg.nonlinearity();
    let spec = grid.spec;
    let fracs = [(0.5, 0.5), (0.75, 0.25), (0.25, 0.75), (1.0, 0.5), (0.5, 1.0)];
    let targets: Vec<(usize, usize)> = fracs
        .iter()
        .map(|&(a, b)| {
            (
                ((spec.n_u as f64) * a).round() as usize,
                ((spec.n_v as f64) * b).round() as usize,
            )
        })
        .collect();
    let mut probes = ProbeCollector {
        values: vec![0.0; targets.len()],
        targets,
    };
    let mut horizon = HorizonCollector::new(spec.n_u);

    let manufactured = if level_cfg.manufactured {
        Some(ManufacturedSolution::new(
            level_cfg.epsilon,
            0.1,
            level_cfg.center,
            level_cfg.width,
            nl,
        ))
    } else {
        None
    };

    let mms_error = if let Some(m) = &manufactured {
        let mut mms = ManufacturedErrorCollector { m, max_err: 0.0 };
        evolve_with_observers(
            &grid,
            &DataSource::Manufactured(m),
            &nl,
            &mut [&mut probes, &mut horizon, &mut mms],
            &mut [],
        )?;
        Some(mms.max_err)
    } else {
        data.validate_support(&grid)?;
        evolve_with_observers(
            &grid,
            &DataSource::Bump(&data),
            &nl,
            &mut [&mut probes, &mut horizon],
            &mut [],
        )?;
        None
    };

    let series = horizon_series_from_rows(&grid, &horizon.into_top_rows()?, cfg.growth_delta)?;
    let window = tail_window(series.v[0], *series.v.last().unwrap(), 0.5);
    let phih = aretakis_drift(&series, window)?.compensated_rel;
    let hnl0 = hnl0_drift(&series, window)?.compensated_rel;
    Ok(LevelResult {
        h,
        probes: probes.values,
        phih_drift: phih,
        hnl0_drift: hnl0,
        mms_error,
    })
}

/// Run the study at each level (2:1 descending) and assemble Richardson
/// orders per quantity for each consecutive level triple.
pub fn converge(cfg: &RunConfig, levels: &[f64]) -> Result<Vec<ConvRow>, RunError> {
    if levels.len() < 3 {
        return Err(RunError::Config(ConfigError::Constraint(
            "convergence study needs at least 3 levels".into(),
        )));
    }
    for w in levels.windows(2) {
        if (w[0] / w[1] - 2.0).abs() > 1e-9 {
            return Err(RunError::Config(ConfigError::Constraint(
                "convergence levels must descend in 2:1 ratio".into(),
            )));
        }
    }
    let max_threads: usize = std::env::var("ERNWAVE_THREADS")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
        .max(1);

    let mut results: Vec<Option<Result<LevelResult, RunError>>> =
        (0..levels.len()).map(|_| None).collect();
    if max_threads == 1 {
        for (idx, &h) in levels.iter().enumerate() {
            results[idx] = Some(level_run(cfg, h));
        }
    } else {
        std::thread::scope(|scope| {
            let mut pending: Vec<(usize, f64)> = levels.iter().cloned().enumerate().collect();
            while !pending.is_empty() {
                let chunk: Vec<(usize, f64)> =
                    pending.drain(..pending.len().min(max_threads)).collect();
                let handles: Vec<_> = chunk
                    .into_iter()
                    .map(|(idx, h)| (idx, scope.spawn(move || level_run(cfg, h))))
                    .collect();
                for (idx, handle) in handles {
                    results[idx] = Some(handle.join().expect("level thread panicked"));
                }
            }
        });
    }
    let mut lv = Vec::with_capacity(levels.len());
    for r in results {
        lv.push(r.expect("all levels ran")?);
    }

    let mut rows = Vec::new();
    for t in lv.windows(3) {
        let (c, m, f) = (&t[0], &t[1], &t[2]);
        for (p_idx, _) in c.probes.iter().enumerate() {
            let d1 = (c.probes[p_idx] - m.probes[p_idx]).abs();
            let d2 = (m.probes[p_idx] - f.probes[p_idx]).abs();
            if d2 > 0.0 && d1 > 0.0 {
                rows.push(ConvRow {
                    quantity: format!("solution_probe_{p_idx}"),
                    h_coarse: c.h,
                    h_mid: m.h,
                    h_fine: f.h,
                    order: (d1 / d2).log2(),
                });
            }
        }
        let mut rate_row = |name: &str, a: f64, b: f64, z: f64| {
            if a > 0.0 && b > 0.0 && z > 0.0 {
                // least-squares slope of ln value against ln h
                let xs = [c.h.ln(), m.h.ln(), f.h.ln()];
                let ys = [a.ln(), b.ln(), z.ln()];
                let xm = xs.iter().sum::<f64>() / 3.0;
                let ym = ys.iter().sum::<f64>() / 3.0;
                let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
                let den: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
                rows.push(ConvRow {
                    quantity: name.to_string(),
                    h_coarse: c.h,
                    h_mid: m.h,
                    h_fine: f.h,
                    order: num / den,
                });
            }
        };
        rate_row("phih_drift", c.phih_drift, m.phih_drift, f.phih_drift);
        rate_row("hnl0_drift", c.hnl0_drift, m.hnl0_drift, f.hnl0_drift);
        if let (Some(a), Some(b), Some(z)) = (c.mms_error, m.mms_error, f.mms_error) {
            rate_row("mms_error", a, b, z);
        }
    }
    Ok(rows)
}

/// Horizon-only run used by the amplitude-scaling comparison.
pub fn run_horizon_series(cfg: &RunConfig) -> Result<HorizonSeries, RunError> {
    cfg.validate()?;
    let grid = build_grid(cfg)?;
    let data = cfg.initial_data();
    data.validate_support(&grid)?;
    let nl = cfg.nonlinearity();
    let mut horizon = HorizonCollector::new(grid.spec.n_u);
    evolve_with_observers(
        &grid,
        &DataSource::Bump(&data),
        &nl,
        &mut [&mut horizon],
        &mut [],
    )?;
    Ok(horizon_series_from_rows(
        &grid,
        &horizon.into_top_rows()?,
        cfg.growth_delta,
    )?)
}

/// Run the configured setup at two amplitudes and compare the nonlinear
/// transversal-charge shifts; quadratic scaling predicts a ratio of 4.
pub fn charge_scaling(
    cfg: &RunConfig,
    eps_hi: f64,
    eps_lo: f64,
) -> Result<EpsScalingReport, RunError> {
    if !(eps_hi > eps_lo && eps_lo > 0.0) {
        return Err(RunError::Config(ConfigError::Constraint(
            "charge scaling needs eps_hi > eps_lo > 0".into(),
        )));
    }
    let mut cfg_hi = cfg.clone();
    cfg_hi.epsilon = eps_hi;
    let mut cfg_lo = cfg.clone();
    cfg_lo.epsilon = eps_lo;
    // The two configs differ only in the amplitude by construction; assert
    // the manifest-level invariant anyway.
    {
        let mut a = cfg_hi.clone();
        let mut b = cfg_lo.clone();
        a.epsilon = 0.0;
        b.epsilon = 0.0;
        if a != b {
            return Err(RunError::Config(ConfigError::Constraint(
                "charge scaling requires runs differing only in epsilon".into(),
            )));
        }
    }
    let hi = run_horizon_series(&cfg_hi)?;
    let lo = run_horizon_series(&cfg_lo)?;
    Ok(epsilon_scaling_report(&hi, &lo)?)
}
