//! Run configuration: a flat TOML file with command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{GasketError, Result};
use crate::gasket::DEFAULT_MAX_DEPTH;
use crate::measure::TauNormalization;
use crate::report::{OutputFormat, Provenance};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub depth: usize,
    pub sub_depth: usize,
    pub theta_grid: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    pub c: f64,
    pub format: OutputFormat,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            depth: 6,
            sub_depth: 2,
            theta_grid: vec![0.2, 0.1, 0.05, 0.025],
            samples: 10_000,
            seed: 0,
            c: 0.5,
            format: OutputFormat::Csv,
            out: PathBuf::from("out"),
        }
    }
}

/// Optional values from a config file or from command-line flags.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub depth: Option<usize>,
    pub sub_depth: Option<usize>,
    pub theta: Option<Vec<f64>>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub norm_c: Option<f64>,
    pub format: Option<OutputFormat>,
    pub out: Option<PathBuf>,
}

impl ConfigOverrides {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text)
            .map_err(|e| GasketError::config("config file", e.message().to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            GasketError::config(
                "config file",
                format!("cannot read {}: {e}", path.display()),
            )
        })?;
        Self::from_toml(&text)
    }

    fn apply(self, cfg: &mut RunConfig) {
        if let Some(v) = self.depth {
            cfg.depth = v;
        }
        if let Some(v) = self.sub_depth {
            cfg.sub_depth = v;
        }
        if let Some(v) = self.theta {
            cfg.theta_grid = v;
        }
        if let Some(v) = self.samples {
            cfg.samples = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.norm_c {
            cfg.c = v;
        }
        if let Some(v) = self.format {
            cfg.format = v;
        }
        if let Some(v) = self.out {
            cfg.out = v;
        }
    }
}

impl RunConfig {
    /// Defaults, then the file (if any), then the flags; validated.
    pub fn resolve(file: Option<&Path>, flags: ConfigOverrides) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            ConfigOverrides::from_file(path)?.apply(&mut cfg);
        }
        flags.apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth > DEFAULT_MAX_DEPTH {
            return Err(GasketError::config(
                "depth",
                format!("{} exceeds the maximum {DEFAULT_MAX_DEPTH}", self.depth),
            ));
        }
        if self.sub_depth == 0 || self.depth + self.sub_depth > DEFAULT_MAX_DEPTH {
            return Err(GasketError::config(
                "sub_depth",
                format!(
                    "must be at least 1 with depth + sub_depth at most {DEFAULT_MAX_DEPTH}, got {}",
                    self.sub_depth
                ),
            ));
        }
        if self.samples == 0 {
            return Err(GasketError::config("samples", "must be at least 1"));
        }
        if self.theta_grid.is_empty() {
            return Err(GasketError::config("theta", "the grid is empty"));
        }
        if self.theta_grid.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(GasketError::config("theta", "values must be positive"));
        }
        if self.theta_grid.windows(2).any(|p| p[1] >= p[0]) {
            return Err(GasketError::config(
                "theta",
                "the grid must be strictly decreasing",
            ));
        }
        TauNormalization::new(self.c).map_err(|_| {
            GasketError::config(
                "norm_c",
                format!("must be a positive number, got {}", self.c),
            )
        })?;
        Ok(())
    }

    pub fn normalization(&self) -> TauNormalization {
        TauNormalization::new(self.c).expect("validated configuration")
    }

    pub fn provenance(&self) -> Provenance {
        Provenance {
            depth: self.depth,
            seed: self.seed,
            c: self.c,
        }
    }
}
