//! Run configuration: a flat `key = value` text file.
//!
//! Lines starting with `#` and blank lines are ignored. Lists are comma
//! separated. Optional quantities that are derived from the data when left
//! unset accept the literal `auto`.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::error::{Error, Result};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("bad value {value:?} for {key}: {msg}")]
    BadValue {
        key: String,
        value: String,
        msg: String,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Which version of a modality's features the k-NN graph is built on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphInput {
    Raw,
    Normalized,
}

/// Transport cost used per matched quantile in the sliced Wasserstein distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwdCost {
    Squared,
    Absolute,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Neighbour count of the modality k-NN graphs.
    pub k: usize,
    /// Diffusion scales, strictly increasing.
    pub scales: Vec<usize>,
    pub n_projections: usize,
    pub probe_width: usize,
    /// Proxy interpolation temperature; `None` derives it from the data.
    pub tau_eta: Option<f64>,
    /// Wavelet-domain coverage temperature; `None` derives one per scale.
    pub tau: Option<f64>,
    /// Spatial coverage temperature; `None` derives it from the data.
    pub tau_c: Option<f64>,
    /// Fusion softmax temperature.
    pub temperature: f64,
    pub lambda_edge: f64,
    pub lambda_cov: f64,
    pub lambda_lsrc: f64,
    pub lambda_reg: f64,
    /// Weight of the coverage smoothness term inside the relational coverage loss.
    pub mu: f64,
    /// Coverage propagation rate.
    pub beta: f64,
    /// Balance between geometric decay and cross-modal support in the relation graph.
    pub eta: f64,
    pub beta_s: Option<Vec<f64>>,
    pub omega_s: Option<Vec<f64>>,
    pub lambda_sp: f64,
    pub theta: f64,
    pub kappa_max: f64,
    pub alpha_d: f64,
    pub alpha_w: f64,
    pub alpha_t: f64,
    pub alpha_q: f64,
    pub lr: f64,
    pub steps: usize,
    pub clip_norm: f64,
    /// Fraction of the run over which finer scales are unlocked.
    pub schedule_span: f64,
    pub k_proxy: usize,
    pub support_cap: usize,
    pub sigma_r: Option<f64>,
    pub margin: Option<f64>,
    pub w_div: f64,
    pub swd_cost: SwdCost,
    pub img_graph_input: GraphInput,
    pub txt_graph_input: GraphInput,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            k: 15,
            scales: vec![1, 2, 4],
            n_projections: 64,
            probe_width: 16,
            tau_eta: None,
            tau: None,
            tau_c: None,
            temperature: 0.1,
            lambda_edge: 1.0,
            lambda_cov: 0.1,
            lambda_lsrc: 1.0,
            lambda_reg: 1.0,
            mu: 1.0,
            beta: 0.5,
            eta: 0.5,
            beta_s: None,
            omega_s: None,
            lambda_sp: 0.05,
            theta: 0.1,
            kappa_max: 0.3,
            alpha_d: 0.4,
            alpha_w: 0.4,
            alpha_t: 0.1,
            alpha_q: 0.1,
            lr: 0.05,
            steps: 400,
            clip_norm: 5.0,
            schedule_span: 0.6,
            k_proxy: 8,
            support_cap: 10,
            sigma_r: None,
            margin: None,
            w_div: 0.01,
            swd_cost: SwdCost::Squared,
            img_graph_input: GraphInput::Raw,
            txt_graph_input: GraphInput::Normalized,
            seed: 0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| ConfigError::BadValue {
        key: key.to_owned(),
        value: value.to_owned(),
        msg: e.to_string(),
    })
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn parse_auto(key: &str, value: &str) -> Result<Option<f64>, ConfigError> {
    if value.eq_ignore_ascii_case("auto") {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn parse_auto_list(key: &str, value: &str) -> Result<Option<Vec<f64>>, ConfigError> {
    if value.eq_ignore_ascii_case("auto") {
        Ok(None)
    } else {
        parse_list(key, value).map(Some)
    }
}

fn bad(key: &str, value: &str, msg: &str) -> ConfigError {
    ConfigError::BadValue {
        key: key.to_owned(),
        value: value.to_owned(),
        msg: msg.to_owned(),
    }
}

impl RunConfig {
    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(ConfigError::Syntax { line: idx + 1 })?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_text(&text)?)
    }

    /// Applies one `key = value` assignment without validating the result.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "k" => self.k = parse(key, value)?,
            "scales" => self.scales = parse_list(key, value)?,
            "n_projections" => self.n_projections = parse(key, value)?,
            "probe_width" => self.probe_width = parse(key, value)?,
            "tau_eta" => self.tau_eta = parse_auto(key, value)?,
            "tau" => self.tau = parse_auto(key, value)?,
            "tau_c" => self.tau_c = parse_auto(key, value)?,
            "temperature" => self.temperature = parse(key, value)?,
            "lambda_edge" => self.lambda_edge = parse(key, value)?,
            "lambda_cov" => self.lambda_cov = parse(key, value)?,
            "lambda_lsrc" => self.lambda_lsrc = parse(key, value)?,
            "lambda_reg" => self.lambda_reg = parse(key, value)?,
            "mu" => self.mu = parse(key, value)?,
            "beta" => self.beta = parse(key, value)?,
            "eta" => self.eta = parse(key, value)?,
            "beta_s" => self.beta_s = parse_auto_list(key, value)?,
            "omega_s" => self.omega_s = parse_auto_list(key, value)?,
            "lambda_sp" => self.lambda_sp = parse(key, value)?,
            "theta" => self.theta = parse(key, value)?,
            "kappa_max" => self.kappa_max = parse(key, value)?,
            "alpha_d" => self.alpha_d = parse(key, value)?,
            "alpha_w" => self.alpha_w = parse(key, value)?,
            "alpha_t" => self.alpha_t = parse(key, value)?,
            "alpha_q" => self.alpha_q = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "steps" => self.steps = parse(key, value)?,
            "clip_norm" => self.clip_norm = parse(key, value)?,
            "schedule_span" => self.schedule_span = parse(key, value)?,
            "k_proxy" => self.k_proxy = parse(key, value)?,
            "support_cap" => self.support_cap = parse(key, value)?,
            "sigma_r" => self.sigma_r = parse_auto(key, value)?,
            "margin" => self.margin = parse_auto(key, value)?,
            "w_div" => self.w_div = parse(key, value)?,
            "swd_cost" => {
                self.swd_cost = match value {
                    "squared" => SwdCost::Squared,
                    "absolute" => SwdCost::Absolute,
                    _ => return Err(bad(key, value, "expected squared|absolute")),
                }
            }
            "img_graph_input" | "txt_graph_input" => {
                let input = match value {
                    "raw" => GraphInput::Raw,
                    "normalized" => GraphInput::Normalized,
                    _ => return Err(bad(key, value, "expected raw|normalized")),
                };
                if key == "img_graph_input" {
                    self.img_graph_input = input;
                } else {
                    self.txt_graph_input = input;
                }
            }
            "seed" => self.seed = parse(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.to_owned())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |msg: String| Err(ConfigError::Invalid(msg));
        if self.k < 2 {
            return invalid(format!("k must be at least 2, got {}", self.k));
        }
        if self.scales.is_empty() {
            return invalid("scales must not be empty".into());
        }
        if self.scales[0] < 1 || self.scales.windows(2).any(|w| w[0] >= w[1]) {
            return invalid(format!(
                "scales must be positive and strictly increasing, got {:?}",
                self.scales
            ));
        }
        for (name, t) in [
            ("tau_eta", self.tau_eta),
            ("tau", self.tau),
            ("tau_c", self.tau_c),
            ("temperature", Some(self.temperature)),
            ("sigma_r", self.sigma_r),
        ] {
            if let Some(t) = t {
                if !(t > 0.0 && t.is_finite()) {
                    return invalid(format!("{name} must be positive, got {t}"));
                }
            }
        }
        for (name, v) in [
            ("beta", self.beta),
            ("eta", self.eta),
            ("kappa_max", self.kappa_max),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return invalid(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        for (name, v) in [
            ("lambda_edge", self.lambda_edge),
            ("lambda_cov", self.lambda_cov),
            ("lambda_lsrc", self.lambda_lsrc),
            ("lambda_reg", self.lambda_reg),
            ("mu", self.mu),
            ("lambda_sp", self.lambda_sp),
            ("theta", self.theta),
            ("alpha_d", self.alpha_d),
            ("alpha_w", self.alpha_w),
            ("alpha_t", self.alpha_t),
            ("alpha_q", self.alpha_q),
            ("w_div", self.w_div),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return invalid(format!("{name} must be non-negative, got {v}"));
            }
        }
        if !(self.lr > 0.0 && self.clip_norm > 0.0) {
            return invalid("lr and clip_norm must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.schedule_span) {
            return invalid("schedule_span must lie in [0, 1]".into());
        }
        if self.n_projections == 0 || self.probe_width == 0 || self.k_proxy == 0 {
            return invalid("n_projections, probe_width and k_proxy must be positive".into());
        }
        if let Some(m) = self.margin {
            if !(m >= 0.0) {
                return invalid(format!("margin must be non-negative, got {m}"));
            }
        }
        for (name, w) in [("beta_s", &self.beta_s), ("omega_s", &self.omega_s)] {
            if let Some(w) = w {
                if w.len() != self.scales.len() {
                    return invalid(format!(
                        "{name} has {} entries for {} scales",
                        w.len(),
                        self.scales.len()
                    ));
                }
                if w.iter().any(|&x| !(x >= 0.0)) {
                    return invalid(format!("{name} entries must be non-negative"));
                }
            }
        }
        if let Some(w) = &self.omega_s {
            let sum: f64 = w.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return invalid(format!("omega_s must sum to 1, got {sum}"));
            }
        }
        Ok(())
    }

    /// Per-scale matching weights; uniform when unset.
    pub fn scale_weights(&self) -> Vec<f64> {
        self.beta_s
            .clone()
            .unwrap_or_else(|| uniform(self.scales.len()))
    }

    /// Per-scale reconstruction weights; uniform when unset.
    pub fn fusion_weights(&self) -> Vec<f64> {
        self.omega_s
            .clone()
            .unwrap_or_else(|| uniform(self.scales.len()))
    }
}

fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

fn fmt_auto(v: Option<f64>) -> String {
    v.map_or_else(|| "auto".to_owned(), |x| x.to_string())
}

fn fmt_list<T: fmt::Display>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let input = |g: GraphInput| match g {
            GraphInput::Raw => "raw",
            GraphInput::Normalized => "normalized",
        };
        let lines: Vec<(&str, String)> = vec![
            ("k", self.k.to_string()),
            ("scales", fmt_list(&self.scales)),
            ("n_projections", self.n_projections.to_string()),
            ("probe_width", self.probe_width.to_string()),
            ("tau_eta", fmt_auto(self.tau_eta)),
            ("tau", fmt_auto(self.tau)),
            ("tau_c", fmt_auto(self.tau_c)),
            ("temperature", self.temperature.to_string()),
            ("lambda_edge", self.lambda_edge.to_string()),
            ("lambda_cov", self.lambda_cov.to_string()),
            ("lambda_lsrc", self.lambda_lsrc.to_string()),
            ("lambda_reg", self.lambda_reg.to_string()),
            ("mu", self.mu.to_string()),
            ("beta", self.beta.to_string()),
            ("eta", self.eta.to_string()),
            (
                "beta_s",
                self.beta_s.as_deref().map_or("auto".into(), fmt_list),
            ),
            (
                "omega_s",
                self.omega_s.as_deref().map_or("auto".into(), fmt_list),
            ),
            ("lambda_sp", self.lambda_sp.to_string()),
            ("theta", self.theta.to_string()),
            ("kappa_max", self.kappa_max.to_string()),
            ("alpha_d", self.alpha_d.to_string()),
            ("alpha_w", self.alpha_w.to_string()),
            ("alpha_t", self.alpha_t.to_string()),
            ("alpha_q", self.alpha_q.to_string()),
            ("lr", self.lr.to_string()),
            ("steps", self.steps.to_string()),
            ("clip_norm", self.clip_norm.to_string()),
            ("schedule_span", self.schedule_span.to_string()),
            ("k_proxy", self.k_proxy.to_string()),
            ("support_cap", self.support_cap.to_string()),
            ("sigma_r", fmt_auto(self.sigma_r)),
            ("margin", fmt_auto(self.margin)),
            ("w_div", self.w_div.to_string()),
            (
                "swd_cost",
                match self.swd_cost {
                    SwdCost::Squared => "squared".into(),
                    SwdCost::Absolute => "absolute".into(),
                },
            ),
            ("img_graph_input", input(self.img_graph_input).into()),
            ("txt_graph_input", input(self.txt_graph_input).into()),
            ("seed", self.seed.to_string()),
        ];
        for (k, v) in lines {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        RunConfig::default().validate().unwrap();
        assert_eq!(RunConfig::default().k, 15);
        assert_eq!(RunConfig::default().scales, vec![1, 2, 4]);
    }

    #[test]
    fn parses_file_with_comments_and_lists() {
        let cfg = RunConfig::from_text(
            "# run\n k = 10\nscales = 1, 2, 8\n\ntau_c = 0.5\nbeta_s = 0.2,0.3,0.5\nseed=42\n",
        )
        .unwrap();
        assert_eq!(cfg.k, 10);
        assert_eq!(cfg.scales, vec![1, 2, 8]);
        assert_eq!(cfg.tau_c, Some(0.5));
        assert_eq!(cfg.scale_weights(), vec![0.2, 0.3, 0.5]);
        assert_eq!(cfg.seed, 42);
    }

    #[test]
    fn display_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.set("tau", "0.25").unwrap();
        cfg.set("omega_s", "0.5,0.25,0.25").unwrap();
        cfg.set("swd_cost", "absolute").unwrap();
        let back = RunConfig::from_text(&cfg.to_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_invariant_violations() {
        for text in [
            "k = 1",
            "scales = 2,2",
            "scales = 0,1",
            "temperature = 0",
            "beta = 1.5",
            "eta = -0.1",
            "kappa_max = 2",
            "beta_s = 1,1",
            "omega_s = 0.5,0.6,0.1",
        ] {
            assert!(
                matches!(RunConfig::from_text(text), Err(ConfigError::Invalid(_))),
                "{text}"
            );
        }
        assert!(matches!(
            RunConfig::from_text("nope = 1"),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(
            RunConfig::from_text("k"),
            Err(ConfigError::Syntax { line: 1 })
        ));
    }
}
