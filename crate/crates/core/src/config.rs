//! Run configuration: dotted-key text format, strict validation, canonical
//! serialization.
//!
//! Format: one `section.key = value` per line, `#` comments, blank lines
//! ignored. Unknown keys are hard errors (a typo in an exponent name must
//! never silently change a scientific conclusion); missing keys take the
//! documented defaults.

use crate::error::ConfigError;
use crate::evolution::{AMode, HigherOrder, InitialData, NonlinearityConfig};
use crate::geometry::{radius_from_rstar, BackgroundErn};
use crate::modes::default_node_count;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mass: f64,
    pub u0: f64,
    pub v0: f64,
    pub u_span: f64,
    pub v_span: f64,
    pub h: f64,
    pub l_max: usize,
    /// 0 selects the de-aliased default.
    pub n_nodes: usize,
    pub epsilon: f64,
    pub center: f64,
    pub width: f64,
    pub l0: f64,
    pub l1: f64,
    pub a_mode: String,
    pub a_value: f64,
    pub higher_order: String,
    pub extraction_radius: f64,
    pub r0: f64,
    pub r1: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub p_list: Vec<f64>,
    /// Empty means automatic placement.
    pub tau_list: Vec<f64>,
    pub fit_window_fraction: f64,
    /// Weight exponent of the series' weighted column.
    pub growth_delta: f64,
    /// 0 selects an automatic stride.
    pub snapshot_stride: usize,
    pub manufactured: bool,
    /// Reserved; the pipeline is deterministic.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mass: 1.0,
            u0: 0.0,
            v0: 0.0,
            u_span: 2000.0,
            v_span: 300.0,
            h: 0.05,
            l_max: 4,
            n_nodes: 0,
            epsilon: 0.05,
            center: 1.2,
            width: 0.4,
            l0: 1.0,
            l1: 0.0,
            a_mode: "constant".into(),
            a_value: 1.0,
            higher_order: "none".into(),
            extraction_radius: 1.8,
            r0: 1.8,
            r1: 2.5,
            delta1: 0.1,
            delta2: 0.1,
            p_list: vec![1.0, 2.0],
            tau_list: Vec::new(),
            fit_window_fraction: 0.6,
            growth_delta: 0.5,
            snapshot_stride: 0,
            manufactured: false,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn n_u(&self) -> usize {
        (self.u_span / self.h).round() as usize
    }

    pub fn n_v(&self) -> usize {
        (self.v_span / self.h).round() as usize
    }

    pub fn effective_nodes(&self) -> usize {
        if self.n_nodes == 0 {
            default_node_count(self.l_max)
        } else {
            self.n_nodes
        }
    }

    pub fn nonlinearity(&self) -> NonlinearityConfig {
        let a_mode = match self.a_mode.as_str() {
            "off" => AMode::Off,
            "constant" => AMode::Constant(self.a_value),
            "sample_smooth" => AMode::SampleSmooth,
            _ => unreachable!("validated at parse"),
        };
        NonlinearityConfig {
            a_mode,
            higher_order: HigherOrder::None,
        }
    }

    pub fn initial_data(&self) -> InitialData {
        InitialData {
            epsilon: self.epsilon,
            center: self.center,
            width: self.width,
            l0: self.l0,
            l1: self.l1,
        }
    }

    /// Slice parameters: the configured list, or eight slices across the
    /// middle of the v range.
    pub fn taus(&self) -> Vec<f64> {
        if !self.tau_list.is_empty() {
            return self.tau_list.clone();
        }
        let lo = self.v0 + 0.15 * self.v_span;
        let hi = self.v0 + 0.90 * self.v_span;
        (0..8)
            .map(|k| lo + (hi - lo) * k as f64 / 7.0)
            .collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let c = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::Constraint(msg.to_string()))
            }
        };
        c(self.mass > 0.0 && self.mass.is_finite(), "background.mass must be positive")?;
        c(self.h > 0.0 && self.h.is_finite(), "grid.h must be positive")?;
        c(self.u_span > 0.0 && self.v_span > 0.0, "grid spans must be positive")?;
        c(self.n_u() >= 2 && self.n_v() >= 2, "grid must have at least 2 cells per direction")?;
        let nn = self.effective_nodes();
        c(
            nn >= self.l_max + 1,
            "angular.n_nodes must be at least l_max + 1 (aliasing)",
        )?;
        c(self.epsilon >= 0.0, "data.epsilon must be nonnegative")?;
        c(self.width > 0.0, "data.width must be positive")?;
        let m = self.mass;
        c(
            self.extraction_radius > m && self.extraction_radius < 2.0 * m,
            "diagnostics.extraction_radius must lie in (M, 2M)",
        )?;
        c(
            self.r0 >= self.extraction_radius && self.r0 < 2.0 * m,
            "diagnostics.r0 must satisfy R <= r0 < 2M (photon sphere outside region A)",
        )?;
        c(
            self.r1 > 2.0 * m,
            "diagnostics.r1 must lie above the photon sphere 2M",
        )?;
        c(
            self.delta1 > 0.0 && self.delta1 < 1.0 && self.delta2 > 0.0 && self.delta2 < 1.0,
            "diagnostics.delta1 and delta2 must lie in (0, 1)",
        )?;
        c(
            self.fit_window_fraction > 0.0 && self.fit_window_fraction <= 1.0,
            "diagnostics.fit_window_fraction must lie in (0, 1]",
        )?;
        c(
            self.growth_delta > 0.0 && self.growth_delta <= 1.0,
            "diagnostics.growth_delta must lie in (0, 1]",
        )?;
        c(
            self.a_value.is_finite() && self.a_value.abs() <= 1.0e3,
            "nonlinearity.a_value must be finite and bounded",
        )?;
        for &t in &self.tau_list {
            c(
                t > self.v0 && t < self.v0 + self.v_span,
                "diagnostics.tau_list entries must lie inside the v range",
            )?;
        }
        // Data support must not be truncated at the outer end of either ray;
        // reaching through the horizon end is the intended near-horizon case.
        let bg = BackgroundErn::new(self.mass)
            .map_err(|e| ConfigError::Constraint(e.to_string()))?;
        let outer_rstar = 0.5 * (self.v0 + self.v_span - self.u0);
        let r_outer = radius_from_rstar(outer_rstar, &bg, 1e-12)
            .map_err(|e| ConfigError::Constraint(e.to_string()))?;
        c(
            self.center + self.width <= r_outer,
            "data support exceeds the grid's outgoing ray",
        )?;
        Ok(())
    }
}

const KEYS: &[&str] = &[
    "background.mass",
    "grid.u0",
    "grid.v0",
    "grid.u_span",
    "grid.v_span",
    "grid.h",
    "angular.l_max",
    "angular.n_nodes",
    "data.epsilon",
    "data.center",
    "data.width",
    "data.l0",
    "data.l1",
    "nonlinearity.a_mode",
    "nonlinearity.a_value",
    "nonlinearity.higher_order",
    "diagnostics.extraction_radius",
    "diagnostics.r0",
    "diagnostics.r1",
    "diagnostics.delta1",
    "diagnostics.delta2",
    "diagnostics.p_list",
    "diagnostics.tau_list",
    "diagnostics.fit_window_fraction",
    "diagnostics.growth_delta",
    "output.snapshot_stride",
    "convergence.manufactured",
    "seed",
];

fn parse_f64(key: &str, line: usize, s: &str) -> Result<f64, ConfigError> {
    s.trim().parse().map_err(|_| ConfigError::BadValue {
        key: key.into(),
        line,
        msg: format!("expected a number, got '{s}'"),
    })
}

fn parse_usize(key: &str, line: usize, s: &str) -> Result<usize, ConfigError> {
    s.trim().parse().map_err(|_| ConfigError::BadValue {
        key: key.into(),
        line,
        msg: format!("expected a nonnegative integer, got '{s}'"),
    })
}

fn parse_list(key: &str, line: usize, s: &str) -> Result<Vec<f64>, ConfigError> {
    let t = s.trim();
    if t.is_empty() || t == "auto" {
        return Ok(Vec::new());
    }
    t.split(',')
        .map(|p| parse_f64(key, line, p))
        .collect()
}

/// Parse and fully validate a configuration text.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax {
            line: line_no,
            msg: format!("expected 'key = value', got '{line}'"),
        })?;
        let key = key.trim();
        let value = value.trim();
        if !KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey(key.to_string()));
        }
        match key {
            "background.mass" => cfg.mass = parse_f64(key, line_no, value)?,
            "grid.u0" => cfg.u0 = parse_f64(key, line_no, value)?,
            "grid.v0" => cfg.v0 = parse_f64(key, line_no, value)?,
            "grid.u_span" => cfg.u_span = parse_f64(key, line_no, value)?,
            "grid.v_span" => cfg.v_span = parse_f64(key, line_no, value)?,
            "grid.h" => cfg.h = parse_f64(key, line_no, value)?,
            "angular.l_max" => cfg.l_max = parse_usize(key, line_no, value)?,
            "angular.n_nodes" => cfg.n_nodes = parse_usize(key, line_no, value)?,
            "data.epsilon" => cfg.epsilon = parse_f64(key, line_no, value)?,
            "data.center" => cfg.center = parse_f64(key, line_no, value)?,
            "data.width" => cfg.width = parse_f64(key, line_no, value)?,
            "data.l0" => cfg.l0 = parse_f64(key, line_no, value)?,
            "data.l1" => cfg.l1 = parse_f64(key, line_no, value)?,
            "nonlinearity.a_mode" => {
                if !["off", "constant", "sample_smooth"].contains(&value) {
                    return Err(ConfigError::BadValue {
                        key: key.into(),
                        line: line_no,
                        msg: format!(
                            "expected off | constant | sample_smooth, got '{value}'"
                        ),
                    });
                }
                cfg.a_mode = value.to_string();
            }
            "nonlinearity.a_value" => cfg.a_value = parse_f64(key, line_no, value)?,
            "nonlinearity.higher_order" => {
                if value != "none" {
                    return Err(ConfigError::BadValue {
                        key: key.into(),
                        line: line_no,
                        msg: format!("only 'none' is implemented, got '{value}'"),
                    });
                }
                cfg.higher_order = value.to_string();
            }
            "diagnostics.extraction_radius" => {
                cfg.extraction_radius = parse_f64(key, line_no, value)?
            }
            "diagnostics.r0" => cfg.r0 = parse_f64(key, line_no, value)?,
            "diagnostics.r1" => cfg.r1 = parse_f64(key, line_no, value)?,
            "diagnostics.delta1" => cfg.delta1 = parse_f64(key, line_no, value)?,
            "diagnostics.delta2" => cfg.delta2 = parse_f64(key, line_no, value)?,
            "diagnostics.p_list" => cfg.p_list = parse_list(key, line_no, value)?,
            "diagnostics.tau_list" => cfg.tau_list = parse_list(key, line_no, value)?,
            "diagnostics.fit_window_fraction" => {
                cfg.fit_window_fraction = parse_f64(key, line_no, value)?
            }
            "diagnostics.growth_delta" => cfg.growth_delta = parse_f64(key, line_no, value)?,
            "output.snapshot_stride" => cfg.snapshot_stride = parse_usize(key, line_no, value)?,
            "convergence.manufactured" => {
                cfg.manufactured = match value {
                    "true" => true,
                    "false" => false,
                    _ => {
                        return Err(ConfigError::BadValue {
                            key: key.into(),
                            line: line_no,
                            msg: format!("expected true | false, got '{value}'"),
                        })
                    }
                }
            }
            "seed" => {
                cfg.seed = value.parse().map_err(|_| ConfigError::BadValue {
                    key: key.into(),
                    line: line_no,
                    msg: format!("expected an unsigned integer, got '{value}'"),
                })?
            }
            _ => unreachable!(),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn fmt_list(v: &[f64]) -> String {
    if v.is_empty() {
        "auto".to_string()
    } else {
        v.iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Canonical text form; parse(serialize(cfg)) == cfg.
pub fn serialize_config(cfg: &RunConfig) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        s.push_str(k);
        s.push_str(" = ");
        s.push_str(&v);
        s.push('\n');
    };
    kv("background.mass", cfg.mass.to_string());
    kv("grid.u0", cfg.u0.to_string());
    kv("grid.v0", cfg.v0.to_string());
    kv("grid.u_span", cfg.u_span.to_string());
    kv("grid.v_span", cfg.v_span.to_string());
    kv("grid.h", cfg.h.to_string());
    kv("angular.l_max", cfg.l_max.to_string());
    kv("angular.n_nodes", cfg.n_nodes.to_string());
    kv("data.epsilon", cfg.epsilon.to_string());
    kv("data.center", cfg.center.to_string());
    kv("data.width", cfg.width.to_string());
    kv("data.l0", cfg.l0.to_string());
    kv("data.l1", cfg.l1.to_string());
    kv("nonlinearity.a_mode", cfg.a_mode.clone());
    kv("nonlinearity.a_value", cfg.a_value.to_string());
    kv("nonlinearity.higher_order", cfg.higher_order.clone());
    kv(
        "diagnostics.extraction_radius",
        cfg.extraction_radius.to_string(),
    );
    kv("diagnostics.r0", cfg.r0.to_string());
    kv("diagnostics.r1", cfg.r1.to_string());
    kv("diagnostics.delta1", cfg.delta1.to_string());
    kv("diagnostics.delta2", cfg.delta2.to_string());
    kv("diagnostics.p_list", fmt_list(&cfg.p_list));
    kv("diagnostics.tau_list", fmt_list(&cfg.tau_list));
    kv(
        "diagnostics.fit_window_fraction",
        cfg.fit_window_fraction.to_string(),
    );
    kv("diagnostics.growth_delta", cfg.growth_delta.to_string());
    kv("output.snapshot_stride", cfg.snapshot_stride.to_string());
    kv("convergence.manufactured", cfg.manufactured.to_string());
    kv("seed", cfg.seed.to_string());
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config("background.mass = 1.0\n").unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn unknown_key_rejected_with_exact_message() {
        let err = parse_config("gird.h = 0.1\n").unwrap_err();
        assert_eq!(err.to_string(), "unknown key gird.h");
    }

    #[test]
    fn syntax_error_carries_line_number() {
        let err = parse_config("background.mass = 1.0\nnot a key value\n").unwrap_err();
        match err {
            ConfigError::Syntax { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn constraint_violations_are_named() {
        let err = parse_config("grid.h = -0.1\n").unwrap_err();
        assert!(err.to_string().contains("grid.h must be positive"));
        let err = parse_config("diagnostics.r1 = 1.9\n").unwrap_err();
        assert!(err.to_string().contains("photon sphere"));
    }

    #[test]
    fn round_trip_is_identity() {
        let mut cfg = RunConfig::default();
        cfg.h = 0.125;
        cfg.u_span = 40.0;
        cfg.v_span = 20.0;
        cfg.tau_list = vec![5.0, 9.5];
        cfg.a_mode = "sample_smooth".into();
        let text = serialize_config(&cfg);
        let back = parse_config(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn comments_and_blanks_ignored() {
        let cfg = parse_config("# a comment\n\ndata.l1 = 0.25 # inline\n").unwrap();
        assert_eq!(cfg.l1, 0.25);
    }
}
