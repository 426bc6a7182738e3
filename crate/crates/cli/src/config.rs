//! Flat `key = value` run configuration.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("unknown keys: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),
    #[error("{0}")]
    Constraint(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Fig9a,
    Fig9b,
    Fig10a,
    Fig10b,
    Conservation,
    LinearCbs,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::Fig9a,
        Scenario::Fig9b,
        Scenario::Fig10a,
        Scenario::Fig10b,
        Scenario::Conservation,
        Scenario::LinearCbs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Fig9a => "fig9a",
            Scenario::Fig9b => "fig9b",
            Scenario::Fig10a => "fig10a",
            Scenario::Fig10b => "fig10b",
            Scenario::Conservation => "conservation",
            Scenario::LinearCbs => "linear-cbs",
        }
    }

    /// Slab thickness used when the configuration does not set `b`.
    pub fn default_thickness(self) -> f64 {
        match self {
            Scenario::Fig9a | Scenario::Fig9b => 40.0,
            _ => 10.0,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| {
                let known: Vec<_> = Scenario::ALL.iter().map(|s| s.name()).collect();
                ConfigError::Constraint(format!(
                    "unknown scenario '{s}' (known: {})",
                    known.join(", ")
                ))
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub alpha: f64,
    pub beta: f64,
    pub k_ell: f64,
    /// Slab thickness; `None` takes the scenario default.
    pub b: Option<f64>,
    /// Number of slab cells; `None` derives it from `cells_per_mfp`.
    pub nz: Option<usize>,
    pub cells_per_mfp: f64,
    pub ne: usize,
    pub e_max: f64,
    pub damping: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub anderson_depth: usize,
    /// Worker threads; `None` uses all available cores.
    pub threads: Option<usize>,
    pub scenario: Scenario,
    pub output_dir: PathBuf,
    /// Seeds the random energy triples of the conservation scenario.
    pub seed: u64,
    pub beta_min: f64,
    pub beta_max: f64,
    pub beta_points: usize,
    /// Upper bound on the internal crossed energy spacing; `None` means E_i/(4·kℓ).
    pub crossed_spacing: Option<f64>,
    pub e_d_max: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            alpha: 0.01,
            beta: 0.1,
            k_ell: 10.0,
            b: None,
            nz: None,
            cells_per_mfp: 10.0,
            ne: 100,
            e_max: 5.0,
            damping: 0.5,
            tol: 1e-8,
            max_iters: 1000,
            anderson_depth: 6,
            threads: None,
            scenario: Scenario::Fig10b,
            output_dir: PathBuf::from("nlcbs-output"),
            seed: 0,
            beta_min: 0.005,
            beta_max: 0.3,
            beta_points: 12,
            crossed_spacing: None,
            e_d_max: 3.0,
        }
    }
}

fn parse<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e| ConfigError::Malformed {
        line,
        msg: format!("bad value '{value}' for {key}: {e}"),
    })
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut unknown = Vec::new();
        let mut seen = BTreeSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::Malformed {
                    line,
                    msg: format!("expected 'key = value', got '{content}'"),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            if value.is_empty() {
                return Err(ConfigError::Malformed {
                    line,
                    msg: format!("missing value for {key}"),
                });
            }
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::Malformed {
                    line,
                    msg: format!("duplicate key {key}"),
                });
            }
            match key {
                "alpha" => cfg.alpha = parse(line, key, value)?,
                "beta" => cfg.beta = parse(line, key, value)?,
                "k_ell" => cfg.k_ell = parse(line, key, value)?,
                "b" => cfg.b = Some(parse(line, key, value)?),
                "nz" => cfg.nz = Some(parse(line, key, value)?),
                "cells_per_mfp" => cfg.cells_per_mfp = parse(line, key, value)?,
                "ne" => cfg.ne = parse(line, key, value)?,
                "e_max" => cfg.e_max = parse(line, key, value)?,
                "damping" => cfg.damping = parse(line, key, value)?,
                "tol" => cfg.tol = parse(line, key, value)?,
                "max_iters" => cfg.max_iters = parse(line, key, value)?,
                "anderson_depth" => cfg.anderson_depth = parse(line, key, value)?,
                "threads" => cfg.threads = Some(parse(line, key, value)?),
                "scenario" => cfg.scenario = value.parse()?,
                "output_dir" => cfg.output_dir = PathBuf::from(value),
                "seed" => cfg.seed = parse(line, key, value)?,
                "beta_min" => cfg.beta_min = parse(line, key, value)?,
                "beta_max" => cfg.beta_max = parse(line, key, value)?,
                "beta_points" => cfg.beta_points = parse(line, key, value)?,
                "crossed_spacing" => cfg.crossed_spacing = Some(parse(line, key, value)?),
                "e_d_max" => cfg.e_d_max = parse(line, key, value)?,
                _ => unknown.push(key.to_string()),
            }
        }
        if !unknown.is_empty() {
            return Err(ConfigError::UnknownKeys(unknown));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut bad = Vec::new();
        let mut positive = |name: &str, v: f64| {
            if !(v > 0.0 && v.is_finite()) {
                bad.push(format!("{name} must be positive, got {v}"));
            }
        };
        positive("k_ell", self.k_ell);
        if let Some(b) = self.b {
            positive("b", b);
        }
        positive("cells_per_mfp", self.cells_per_mfp);
        positive("e_max", self.e_max);
        positive("damping", self.damping);
        positive("tol", self.tol);
        positive("beta_min", self.beta_min);
        positive("beta_max", self.beta_max);
        positive("e_d_max", self.e_d_max);
        if let Some(s) = self.crossed_spacing {
            positive("crossed_spacing", s);
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(v >= 0.0 && v.is_finite()) {
                bad.push(format!("{name} must be non-negative, got {v}"));
            }
        }
        for (name, v) in [
            ("nz", self.nz.unwrap_or(1)),
            ("ne", self.ne),
            ("max_iters", self.max_iters),
            ("threads", self.threads.unwrap_or(1)),
            ("beta_points", self.beta_points),
        ] {
            if v == 0 {
                bad.push(format!("{name} must be positive"));
            }
        }
        if self.damping > 1.0 {
            bad.push(format!("damping must not exceed 1, got {}", self.damping));
        }
        if self.e_max <= 1.0 {
            bad.push(format!("e_max must exceed E_i = 1, got {}", self.e_max));
        }
        if self.beta_max < self.beta_min {
            bad.push(format!(
                "beta_max ({}) below beta_min ({})",
                self.beta_max, self.beta_min
            ));
        }
        if self.e_d_max < 1.0 {
            bad.push(format!("e_d_max must be at least 1, got {}", self.e_d_max));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Constraint(bad.join("; ")))
        }
    }

    pub fn thickness(&self) -> f64 {
        self.b.unwrap_or(self.scenario.default_thickness())
    }

    /// β values of the fig10a sweep, evenly spaced and inclusive.
    pub fn betas(&self) -> Vec<f64> {
        let n = self.beta_points;
        if n == 1 {
            return vec![self.beta_min];
        }
        (0..n)
            .map(|i| self.beta_min + (self.beta_max - self.beta_min) * i as f64 / (n - 1) as f64)
            .collect()
    }
}
