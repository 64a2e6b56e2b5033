//! Run configuration: a flat `key = value` file plus command-line overrides.
//!
//! Blank lines and lines starting with `#` are ignored. Lists are
//! comma-separated, ranges are written `lo:hi`.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::gloh::GlohParams;
use crate::mtl::{Mode, SolverOptions, DEFAULT_SELECTION_EPSILON};
use crate::ridge::RidgeConfig;

use super::PipelineError;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub gloh: GlohParams,
    pub image_height: usize,
    pub image_width: usize,
    pub solver: SolverOptions,
    /// Maximum number of selected bins.
    pub budget: usize,
    pub epsilon: f64,
    pub ridge: RidgeConfig,
    pub cs_max: usize,
    pub seed: u64,
    /// Standardize feature columns with training-row statistics.
    pub standardize: bool,
    /// Subtract each task's mean age before selection.
    pub center_labels: bool,
    pub age_range: Option<(u32, u32)>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            gloh: GlohParams::default(),
            image_height: 68,
            image_width: 62,
            solver: SolverOptions::default(),
            budget: 50,
            epsilon: DEFAULT_SELECTION_EPSILON,
            ridge: RidgeConfig::default(),
            cs_max: crate::metrics::DEFAULT_CS_MAX,
            seed: 0,
            standardize: false,
            center_labels: true,
            age_range: None,
        }
    }
}

fn parse<V: FromStr>(key: &str, value: &str) -> Result<V, PipelineError> {
    value
        .trim()
        .parse()
        .map_err(|_| PipelineError::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>, PipelineError> {
    value.split(',').map(|v| parse(key, v)).collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool, PipelineError> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(PipelineError::Config(format!(
            "{key}: expected a boolean, got {value:?}"
        ))),
    }
}

/// Parses `lo:hi` with `lo <= hi`.
pub fn parse_age_range(value: &str) -> Result<(u32, u32), PipelineError> {
    let (lo, hi) = value
        .split_once(':')
        .ok_or_else(|| PipelineError::Config(format!("age range {value:?} is not LO:HI")))?;
    let lo: u32 = parse("age_range", lo)?;
    let hi: u32 = parse("age_range", hi)?;
    if lo > hi {
        return Err(PipelineError::Config(format!(
            "age range {lo}:{hi} is empty"
        )));
    }
    Ok((lo, hi))
}

impl RunConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let mut cfg = Self::default();
        cfg.apply_text(&fs::read_to_string(path)?)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), PipelineError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                PipelineError::Config(format!("line {}: expected key = value", i + 1))
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| PipelineError::Config(format!("line {}: {e}", i + 1)))?;
        }
        self.validate()
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), PipelineError> {
        match key {
            "patch_size" => self.gloh.patch_size = parse(key, value)?,
            "stride" => self.gloh.stride = parse(key, value)?,
            "radii" => {
                let r = parse_list(key, value)?;
                self.gloh.radii = r
                    .try_into()
                    .map_err(|_| PipelineError::Config("radii: expected three values".into()))?;
            }
            "n_sectors" => self.gloh.n_sectors = parse(key, value)?,
            "n_orient" => self.gloh.n_orient = parse(key, value)?,
            "clip_threshold" => {
                self.gloh.clip_threshold = match value.to_ascii_lowercase().as_str() {
                    "none" | "off" => None,
                    _ => Some(parse(key, value)?),
                }
            }
            "image_height" => self.image_height = parse(key, value)?,
            "image_width" => self.image_width = parse(key, value)?,
            "mode" => {
                self.solver.mode = value.parse::<Mode>().map_err(PipelineError::Config)?;
            }
            "max_iters" => self.solver.max_iters = parse(key, value)?,
            "rel_tol" => self.solver.rel_tol = parse(key, value)?,
            "initial_step" => self.solver.initial_step = parse(key, value)?,
            "shrink" => self.solver.shrink = parse(key, value)?,
            "budget" => self.budget = parse(key, value)?,
            "epsilon" => self.epsilon = parse(key, value)?,
            "alpha_grid" => self.ridge.alpha_grid = parse_list(key, value)?,
            "ridge_folds" => self.ridge.folds = parse(key, value)?,
            "cs_max" => self.cs_max = parse(key, value)?,
            "seed" => {
                self.seed = parse(key, value)?;
                self.ridge.seed = self.seed;
            }
            "standardize" => self.standardize = parse_bool(key, value)?,
            "center_labels" => self.center_labels = parse_bool(key, value)?,
            "age_range" => {
                self.age_range = match value.to_ascii_lowercase().as_str() {
                    "" | "none" | "all" => None,
                    _ => Some(parse_age_range(value)?),
                }
            }
            _ => return Err(PipelineError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        self.gloh.validate()?;
        self.solver.validate()?;
        if self.budget == 0 {
            return bad("budget must be >= 1");
        }
        if self.epsilon.is_nan() || self.epsilon < 0.0 {
            return bad("epsilon must be >= 0");
        }
        if self.ridge.alpha_grid.is_empty() {
            return bad("alpha_grid is empty");
        }
        if self
            .ridge
            .alpha_grid
            .iter()
            .any(|a| !(a.is_finite() && *a >= 0.0))
        {
            return bad("alpha_grid values must be finite and >= 0");
        }
        if self.ridge.folds < 2 {
            return bad("ridge_folds must be >= 2");
        }
        if self.image_height < self.gloh.patch_size || self.image_width < self.gloh.patch_size {
            return bad("image dimensions are smaller than one patch");
        }
        Ok(())
    }
}
