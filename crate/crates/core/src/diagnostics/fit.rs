//! Log-log least-squares estimation of power-law exponents.

use crate::error::DiagnosticsError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawFit {
    /// Fitted exponent p in y = C t^p.
    pub exponent: f64,
    /// Fitted amplitude C.
    pub amplitude: f64,
    /// Window actually used, [t_min, t_max].
    pub window: (f64, f64),
    /// RMS of log-space residuals.
    pub residual_rms: f64,
    /// Standard error of the exponent from the regression covariance.
    pub stderr: f64,
    /// Number of samples in the window.
    pub n: usize,
}

const MIN_SAMPLES: usize = 8;

/// Least squares on (log t, log y) over the samples with t inside `window`.
///
/// Requires at least 8 samples in the window and strictly positive y there.
pub fn fit_power_law(
    t: &[f64],
    y: &[f64],
    window: (f64, f64),
) -> Result<PowerLawFit, DiagnosticsError> {
    if t.len() != y.len() {
        return Err(DiagnosticsError::Data(format!(
            "length mismatch: {} abscissae vs {} ordinates",
            t.len(),
            y.len()
        )));
    }
    let mut xs = Vec::new();
    let mut zs = Vec::new();
    let (mut t_lo, mut t_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (&ti, &yi) in t.iter().zip(y) {
        if ti < window.0 || ti > window.1 {
            continue;
        }
        if !(ti > 0.0) {
            return Err(DiagnosticsError::Data(format!(
                "nonpositive abscissa t = {ti} in window"
            )));
        }
        if !(yi > 0.0) {
            return Err(DiagnosticsError::Data(format!(
                "nonpositive value y = {yi} at t = {ti} in window"
            )));
        }
        xs.push(ti.ln());
        zs.push(yi.ln());
        t_lo = t_lo.min(ti);
        t_hi = t_hi.max(ti);
    }
    let n = xs.len();
    if n < MIN_SAMPLES {
        return Err(DiagnosticsError::Config(format!(
            "window [{}, {}] holds {n} samples; need at least {MIN_SAMPLES}",
            window.0, window.1
        )));
    }
    let nf = n as f64;
    let xbar = xs.iter().sum::<f64>() / nf;
    let zbar = zs.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    let sxz: f64 = xs.iter().zip(&zs).map(|(x, z)| (x - xbar) * (z - zbar)).sum();
    if sxx == 0.0 {
        return Err(DiagnosticsError::Data(
            "degenerate window: all abscissae equal".into(),
        ));
    }
    let slope = sxz / sxx;
    let intercept = zbar - slope * xbar;
    let ss_res: f64 = xs
        .iter()
        .zip(&zs)
        .map(|(x, z)| {
            let r = z - (intercept + slope * x);
            r * r
        })
        .sum();
    let residual_rms = (ss_res / nf).sqrt();
    let stderr = if n > 2 {
        (ss_res / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(PowerLawFit {
        exponent: slope,
        amplitude: intercept.exp(),
        window: (t_lo, t_hi),
        residual_rms,
        stderr,
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
        let t: Vec<f64> = (0..n)
            .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
            .collect();
        let y = t.iter().map(|&x| f(x)).collect();
        (t, y)
    }

    #[test]
    fn exact_power_law_recovered() {
        let (t, y) = series(|x| 3.0 * x.powf(-1.5), 2.0, 50.0, 40);
        let fit = fit_power_law(&t, &y, (2.0, 50.0)).unwrap();
        assert!((fit.exponent + 1.5).abs() < 1e-10);
        assert!((fit.amplitude - 3.0).abs() < 1e-9);
        assert!(fit.residual_rms < 1e-12);
    }

    #[test]
    fn constant_series_zero_exponent() {
        let (t, y) = series(|_| 4.2, 1.0, 9.0, 16);
        let fit = fit_power_law(&t, &y, (0.0, 100.0)).unwrap();
        assert!(fit.exponent.abs() < 1e-12);
    }

    #[test]
    fn noisy_inverse_law_within_stderr() {
        let (t, y) = series(|x| (1.0 + 0.05 * x.sin()) / x, 50.0, 300.0, 200);
        let fit = fit_power_law(&t, &y, (50.0, 300.0)).unwrap();
        assert!(
            (fit.exponent + 1.0).abs() < 3.0 * fit.stderr.max(1e-3),
            "p = {} +- {}",
            fit.exponent,
            fit.stderr
        );
    }

    #[test]
    fn scale_equivariance() {
        let (t, y) = series(|x| 2.0 * x.powf(-0.8), 3.0, 40.0, 30);
        let y5: Vec<f64> = y.iter().map(|v| 5.0 * v).collect();
        let f1 = fit_power_law(&t, &y, (3.0, 40.0)).unwrap();
        let f2 = fit_power_law(&t, &y5, (3.0, 40.0)).unwrap();
        assert!((f1.exponent - f2.exponent).abs() < 1e-12);
        assert!((f2.amplitude / f1.amplitude - 5.0).abs() < 1e-9);
        // rescaling t leaves the exponent unchanged
        let t2: Vec<f64> = t.iter().map(|v| 7.0 * v).collect();
        let f3 = fit_power_law(&t2, &y, (21.0, 280.0)).unwrap();
        assert!((f3.exponent - f1.exponent).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (t, mut y) = series(|x| x, 1.0, 20.0, 20);
        assert!(matches!(
            fit_power_law(&t, &y, (30.0, 40.0)),
            Err(DiagnosticsError::Config(_))
        ));
        y[5] = -1.0;
        assert!(matches!(
            fit_power_law(&t, &y, (1.0, 20.0)),
            Err(DiagnosticsError::Data(_))
        ));
    }
}
