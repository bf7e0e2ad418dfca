//! Run configuration: defaults, a flat `key = value` file format with
//! `#` comments, and flag overrides. Every run echoes its resolved
//! configuration into the output directory so results are reproducible
//! from the artifacts alone.

use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: expected `key = value`, got {text:?}")]
    BadLine {
        path: String,
        line: usize,
        text: String,
    },
    #[error("unknown configuration key {key:?}")]
    UnknownKey { key: String },
    #[error("invalid value {value:?} for {key}: {message}")]
    BadValue {
        key: String,
        value: String,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub target: Option<PathBuf>,
    pub regressors: Vec<PathBuf>,
    pub out_dir: PathBuf,
    pub n_test: usize,
    pub seed: u64,
    pub months: usize,
    pub model: Option<String>,
    pub horizon: usize,
    pub refit: bool,
    pub noise_sd: f64,
    pub svr_c: f64,
    pub svr_epsilon: f64,
    pub svr_lags: usize,
    pub hybrid_epochs: usize,
    pub hybrid_learning_rate: f64,
    pub hybrid_hidden: Vec<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            target: None,
            regressors: vec![],
            out_dir: PathBuf::from("out"),
            n_test: 12,
            seed: 42,
            months: 168,
            model: None,
            horizon: 12,
            refit: true,
            noise_sd: 600.0,
            svr_c: 10.0,
            svr_epsilon: 0.05,
            svr_lags: 3,
            hybrid_epochs: 500,
            hybrid_learning_rate: 0.003,
            hybrid_hidden: vec![4, 2],
        }
    }
}

fn parse_widths(value: &str) -> Result<Vec<usize>, String> {
    if value.trim().is_empty() {
        return Ok(vec![]);
    }
    value
        .split(',')
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .map_err(|_| format!("{part:?} is not a layer width"))
        })
        .collect()
}

impl RunConfig {
    /// Apply one `key = value` pair; both the config file and the CLI
    /// flag layer funnel through here.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = |key: &str, value: &str, message: String| ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
            message,
        };
        macro_rules! parse {
            ($ty:ty) => {
                value
                    .parse::<$ty>()
                    .map_err(|e| bad(key, value, e.to_string()))?
            };
        }
        match key {
            "target" => self.target = Some(PathBuf::from(value)),
            "regressor" => self.regressors.push(PathBuf::from(value)),
            "out" => self.out_dir = PathBuf::from(value),
            "n_test" => self.n_test = parse!(usize),
            "seed" => self.seed = parse!(u64),
            "months" => self.months = parse!(usize),
            "model" => self.model = Some(value.to_string()),
            "horizon" => self.horizon = parse!(usize),
            "refit" => self.refit = parse!(bool),
            "noise_sd" => self.noise_sd = parse!(f64),
            "svr_c" => self.svr_c = parse!(f64),
            "svr_epsilon" => self.svr_epsilon = parse!(f64),
            "svr_lags" => self.svr_lags = parse!(usize),
            "hybrid_epochs" => self.hybrid_epochs = parse!(usize),
            "hybrid_learning_rate" => self.hybrid_learning_rate = parse!(f64),
            "hybrid_hidden" => {
                self.hybrid_hidden =
                    parse_widths(value).map_err(|m| bad(key, value, m))?
            }
            _ => {
                return Err(ConfigError::UnknownKey {
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    /// Merge a flat config file into this configuration.
    pub fn load_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::BadLine {
                    path: path.display().to_string(),
                    line: idx + 1,
                    text: raw.to_string(),
                });
            };
            self.apply(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Render the resolved configuration in the file format, fixed key
    /// order, suitable for echoing next to a run's outputs.
    pub fn echo(&self) -> String {
        let mut out = String::from("# resolved run configuration\n");
        let mut push = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
        if let Some(t) = &self.target {
            push("target", t.display().to_string());
        }
        for r in &self.regressors {
            push("regressor", r.display().to_string());
        }
        push("out", self.out_dir.display().to_string());
        push("n_test", self.n_test.to_string());
        push("seed", self.seed.to_string());
        push("months", self.months.to_string());
        if let Some(m) = &self.model {
            push("model", m.clone());
        }
        push("horizon", self.horizon.to_string());
        push("refit", self.refit.to_string());
        push("noise_sd", self.noise_sd.to_string());
        push("svr_c", self.svr_c.to_string());
        push("svr_epsilon", self.svr_epsilon.to_string());
        push("svr_lags", self.svr_lags.to_string());
        push("hybrid_epochs", self.hybrid_epochs.to_string());
        push("hybrid_learning_rate", self.hybrid_learning_rate.to_string());
        push(
            "hybrid_hidden",
            self.hybrid_hidden
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(","),
        );
        out
    }
}
