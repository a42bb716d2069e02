//! Command-line front end: run / converge / fit / charge.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical error.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::config::parse_config;
use crate::diagnostics::fit_power_law;
use crate::error::{ConfigError, DiagnosticsError};
use crate::output::{
    convergence_csv, fits_csv, write_run_outputs, CONVERGENCE_HEADER, FITS_HEADER,
};
use crate::pipeline::{charge_scaling, converge, run_simulation, FitRow, RunError};

const USAGE: &str = "usage:
  ernwave run -c CONFIG -o DIR
  ernwave converge -c CONFIG --levels H1,H2,H3 -o DIR
  ernwave fit -i FILE --quantity NAME --window A:B
  ernwave charge -c CONFIG --eps HI,LO -o DIR
environment: ERNWAVE_THREADS optionally caps parallelism";

pub fn main_with_args(args: &[String]) -> i32 {
    match dispatch(args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn usage_err(msg: &str) -> RunError {
    RunError::Config(ConfigError::Constraint(format!("{msg}\n{USAGE}")))
}

fn get_flag(args: &[String], name: &str) -> Option<String> {
    args.iter()
        .position(|a| a == name)
        .and_then(|p| args.get(p + 1).cloned())
}

fn load_config(args: &[String]) -> Result<crate::config::RunConfig, RunError> {
    let path = get_flag(args, "-c").ok_or_else(|| usage_err("missing -c CONFIG"))?;
    let text = fs::read_to_string(&path)
        .map_err(|e| RunError::Config(ConfigError::Constraint(format!("{path}: {e}"))))?;
    Ok(parse_config(&text)?)
}

fn out_dir(args: &[String]) -> Result<PathBuf, RunError> {
    get_flag(args, "-o")
        .map(PathBuf::from)
        .ok_or_else(|| usage_err("missing -o DIR"))
}

fn dispatch(args: &[String]) -> Result<(), RunError> {
    let cmd = args.first().map(String::as_str).unwrap_or("");
    match cmd {
        "run" => cmd_run(&args[1..]),
        "converge" => cmd_converge(&args[1..]),
        "fit" => cmd_fit(&args[1..]),
        "charge" => cmd_charge(&args[1..]),
        _ => Err(usage_err("missing or unknown subcommand")),
    }
}

fn cmd_run(args: &[String]) -> Result<(), RunError> {
    let cfg = load_config(args)?;
    let dir = out_dir(args)?;
    let start = Instant::now();
    let artifacts = run_simulation(&cfg)?;
    write_run_outputs(&dir, &cfg, &artifacts, start.elapsed().as_secs_f64())?;
    println!(
        "run complete: {} series samples, {} flux rows, {} fits, outputs in {}",
        artifacts.series.v.len(),
        artifacts.flux_rows.len(),
        artifacts.fits.len(),
        dir.display()
    );
    for f in &artifacts.fits {
        println!(
            "  fit {}: exponent {:.4} +- {:.4}",
            f.quantity, f.fit.exponent, f.fit.stderr
        );
    }
    Ok(())
}

fn cmd_converge(args: &[String]) -> Result<(), RunError> {
    let cfg = load_config(args)?;
    let dir = out_dir(args)?;
    let levels_raw = get_flag(args, "--levels").ok_or_else(|| usage_err("missing --levels"))?;
    let levels: Vec<f64> = levels_raw
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| RunError::Config(ConfigError::Constraint(format!(
                    "bad level '{s}' in --levels"
                ))))
        })
        .collect::<Result<_, _>>()?;
    let rows = converge(&cfg, &levels)?;
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("convergence.csv"), convergence_csv(&rows))?;
    println!("{CONVERGENCE_HEADER}");
    for r in &rows {
        println!(
            "{},{},{},{},{}",
            r.quantity, r.h_coarse, r.h_mid, r.h_fine, r.order
        );
    }
    Ok(())
}

fn cmd_fit(args: &[String]) -> Result<(), RunError> {
    let input = get_flag(args, "-i").ok_or_else(|| usage_err("missing -i FILE"))?;
    let quantity = get_flag(args, "--quantity").ok_or_else(|| usage_err("missing --quantity"))?;
    let window_raw = get_flag(args, "--window").ok_or_else(|| usage_err("missing --window"))?;
    let (a, b) = window_raw
        .split_once(':')
        .ok_or_else(|| usage_err("--window expects A:B"))?;
    let window: (f64, f64) = (
        a.trim().parse().map_err(|_| usage_err("bad window start"))?,
        b.trim().parse().map_err(|_| usage_err("bad window end"))?,
    );

    let text = fs::read_to_string(&input)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| RunError::Diagnostics(DiagnosticsError::Data("empty file".into())))?;
    let cols: Vec<&str> = header.split(',').collect();
    let col = cols.iter().position(|c| *c == quantity).ok_or_else(|| {
        RunError::Diagnostics(DiagnosticsError::Data(format!(
            "no column '{quantity}'; available columns: {}",
            cols.join(", ")
        )))
    })?;
    let mut t = Vec::new();
    let mut y = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        let tv: f64 = parts[0]
            .parse()
            .map_err(|_| RunError::Diagnostics(DiagnosticsError::Data(format!(
                "bad abscissa '{}'",
                parts[0]
            ))))?;
        let yv: f64 = parts
            .get(col)
            .ok_or_else(|| {
                RunError::Diagnostics(DiagnosticsError::Data("short row".into()))
            })?
            .parse()
            .map_err(|_| RunError::Diagnostics(DiagnosticsError::Data("bad value".into())))?;
        t.push(tv);
        y.push(yv.abs());
    }
    if t.is_empty() || window.0 > *t.last().unwrap() || window.1 < t[0] {
        return Err(RunError::Diagnostics(DiagnosticsError::Range(format!(
            "window [{}, {}] outside data range [{}, {}]",
            window.0,
            window.1,
            t.first().unwrap_or(&f64::NAN),
            t.last().unwrap_or(&f64::NAN)
        ))));
    }
    let fit = fit_power_law(&t, &y, window)?;
    println!(
        "fit {quantity}: exponent {} stderr {} amplitude {} residual_rms {} over [{}, {}]",
        fit.exponent, fit.stderr, fit.amplitude, fit.residual_rms, fit.window.0, fit.window.1
    );
    // Append to fits.csv next to the input.
    let fits_path = Path::new(&input)
        .parent()
        .unwrap_or(Path::new("."))
        .join("fits.csv");
    let row = FitRow {
        quantity: quantity.clone(),
        fit,
    };
    let body = fits_csv(std::slice::from_ref(&row));
    if fits_path.exists() {
        let existing = fs::read_to_string(&fits_path)?;
        let mut out = existing;
        out.push_str(body.trim_start_matches(&format!("{FITS_HEADER}\n")));
        fs::write(&fits_path, out)?;
    } else {
        fs::write(&fits_path, body)?;
    }
    Ok(())
}

fn cmd_charge(args: &[String]) -> Result<(), RunError> {
    let cfg = load_config(args)?;
    let dir = out_dir(args)?;
    let eps_raw = get_flag(args, "--eps").ok_or_else(|| usage_err("missing --eps HI,LO"))?;
    let (hi, lo) = eps_raw
        .split_once(',')
        .ok_or_else(|| usage_err("--eps expects HI,LO"))?;
    let eps_hi: f64 = hi.trim().parse().map_err(|_| usage_err("bad --eps"))?;
    let eps_lo: f64 = lo.trim().parse().map_err(|_| usage_err("bad --eps"))?;
    let report = charge_scaling(&cfg, eps_hi, eps_lo)?;
    let ratio_text = report
        .ratio
        .map(|r| r.to_string())
        .unwrap_or_else(|| "n/a".into());
    println!(
        "charge shifts: eps={eps_hi} -> {}, eps={eps_lo} -> {}, ratio {} ({})",
        report.shift_hi, report.shift_lo, ratio_text, report.note
    );
    fs::create_dir_all(&dir)?;
    fs::write(
        dir.join("charge_scaling.txt"),
        format!(
            "eps_hi = {eps_hi}\neps_lo = {eps_lo}\nshift_hi = {}\nshift_lo = {}\nratio = {}\nnote = {}\n",
            report.shift_hi, report.shift_lo, ratio_text, report.note
        ),
    )?;
    Ok(())
}
