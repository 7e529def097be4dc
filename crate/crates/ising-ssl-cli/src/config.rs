//! Flat key-value run configuration.
//!
//! The on-disk format is one dotted key per line (`solver.reads=32`),
//! `#` comments allowed, diff-friendly. Unknown keys are rejected so typos
//! fail loudly. The full schema is documented in the README.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};

use ising_ssl::learning::Optimizer;
use ising_ssl::pipeline::{HMode, LearnOptions, PipelineConfig, ScheduleOptions, SolverKind};
use ising_ssl::similarity::SimilarityModel;

/// Which similarity family the config requests; the concrete model is
/// built once the dataset (label proportions) is known.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelFamily {
    ReciprocalDistance,
    DiagonalGaussian,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub data_path: PathBuf,
    pub data_has_labels: bool,
    pub pca_dims: Option<usize>,
    pub whiten: bool,
    pub split_fraction: f64,
    pub split_stratified: bool,
    pub family: ModelFamily,
    pub beta1: f64,
    pub beta2: f64,
    pub norm_order: f64,
    pub beta_init: f64,
    pub xi: usize,
    pub prune: bool,
    pub solver: SolverKind,
    pub schedule: ScheduleOptions,
    pub h_mode: HMode,
    pub learn: LearnOptions,
    pub heuristic_path: bool,
    pub output_dir: PathBuf,
    pub dump_matrices: bool,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data_path: PathBuf::new(),
            data_has_labels: true,
            pca_dims: None,
            whiten: false,
            split_fraction: 0.0,
            split_stratified: true,
            family: ModelFamily::ReciprocalDistance,
            beta1: 1.0,
            beta2: 1.0,
            norm_order: 2.0,
            beta_init: 1.0,
            xi: 6,
            prune: false,
            solver: SolverKind::Sa,
            schedule: ScheduleOptions::default(),
            h_mode: HMode::Clamp,
            learn: LearnOptions::default(),
            heuristic_path: false,
            output_dir: PathBuf::from("out"),
            dump_matrices: false,
            seed: 0,
        }
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => bail!("{key}: expected a boolean, got {other:?}"),
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut config = Self::from_str(&text)?;
        // Relative data paths resolve against the config file's directory.
        if config.data_path.is_relative() {
            if let Some(dir) = path.parent() {
                config.data_path = dir.join(&config.data_path);
            }
        }
        Ok(config)
    }

    pub fn from_str(text: &str) -> Result<Self> {
        let mut raw: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key=value", lineno + 1))?;
            raw.insert(key.trim().to_string(), value.trim().to_string());
        }

        let mut config = Self::default();
        let mut bias_magnitude: Option<f64> = None;
        let mut bias_mode = false;
        for (key, value) in &raw {
            match key.as_str() {
                "data.path" => config.data_path = PathBuf::from(value),
                "data.has_labels" => config.data_has_labels = parse_bool(key, value)?,
                "data.pca_dims" => {
                    config.pca_dims = Some(value.parse().context("data.pca_dims")?)
                }
                "data.whiten" => config.whiten = parse_bool(key, value)?,
                "split.fraction" => {
                    config.split_fraction = value.parse().context("split.fraction")?
                }
                "split.stratified" => config.split_stratified = parse_bool(key, value)?,
                "model.family" => {
                    config.family = match value.as_str() {
                        "reciprocal_distance" => ModelFamily::ReciprocalDistance,
                        "diagonal_gaussian" => ModelFamily::DiagonalGaussian,
                        other => bail!("model.family: unknown family {other:?}"),
                    }
                }
                "model.beta1" => config.beta1 = value.parse().context("model.beta1")?,
                "model.beta2" => config.beta2 = value.parse().context("model.beta2")?,
                "model.p" => config.norm_order = value.parse().context("model.p")?,
                "model.beta_init" => config.beta_init = value.parse().context("model.beta_init")?,
                "similarity.xi" => config.xi = value.parse().context("similarity.xi")?,
                "similarity.prune" => config.prune = parse_bool(key, value)?,
                "solver.kind" => config.solver = value.parse()?,
                "solver.sweeps" => {
                    config.schedule.sweeps = Some(value.parse().context("solver.sweeps")?)
                }
                "solver.reads" => {
                    config.schedule.reads = Some(value.parse().context("solver.reads")?)
                }
                "solver.t_hot" => {
                    config.schedule.t_hot = Some(value.parse().context("solver.t_hot")?)
                }
                "solver.t_cold" => {
                    config.schedule.t_cold = Some(value.parse().context("solver.t_cold")?)
                }
                "solver.trotter_slices" => {
                    config.schedule.trotter_slices =
                        Some(value.parse().context("solver.trotter_slices")?)
                }
                "solver.gamma_initial" => {
                    config.schedule.gamma_initial =
                        Some(value.parse().context("solver.gamma_initial")?)
                }
                "solver.temperature" => {
                    config.schedule.temperature =
                        Some(value.parse().context("solver.temperature")?)
                }
                "h.mode" => match value.as_str() {
                    "clamp" => bias_mode = false,
                    "bias" => bias_mode = true,
                    other => bail!("h.mode: expected clamp or bias, got {other:?}"),
                },
                "h.magnitude" => bias_magnitude = Some(value.parse().context("h.magnitude")?),
                "learning.enabled" => config.learn.enabled = parse_bool(key, value)?,
                "learning.budget" => {
                    config.learn.budget = value.parse().context("learning.budget")?
                }
                "learning.optimizer" => {
                    config.learn.optimizer = match value.as_str() {
                        "coordinate_descent" => Optimizer::CoordinateDescent,
                        "gradient_descent" => Optimizer::GradientDescent,
                        other => bail!("learning.optimizer: unknown optimizer {other:?}"),
                    }
                }
                "learning.block_max" => {
                    config.learn.block_max = value.parse().context("learning.block_max")?
                }
                "encoding.heuristic_path" => config.heuristic_path = parse_bool(key, value)?,
                "output.dir" => config.output_dir = PathBuf::from(value),
                "output.matrices" => config.dump_matrices = parse_bool(key, value)?,
                "seed" => config.seed = value.parse().context("seed")?,
                other => bail!("unknown config key {other:?}"),
            }
        }
        if bias_mode {
            config.h_mode = HMode::Bias {
                magnitude: bias_magnitude,
            };
        } else if bias_magnitude.is_some() {
            bail!("h.magnitude requires h.mode=bias");
        }
        if config.data_path.as_os_str().is_empty() {
            bail!("config is missing data.path");
        }
        Ok(config)
    }

    /// Builds the similarity model for a loaded dataset (Gaussian weights
    /// come from label proportions).
    pub fn build_model(&self, dataset: &ising_ssl::dataset::Dataset) -> Result<SimilarityModel> {
        match self.family {
            ModelFamily::ReciprocalDistance => Ok(SimilarityModel::ReciprocalDistance {
                beta1: self.beta1,
                beta2: self.beta2,
                p: self.norm_order,
            }),
            ModelFamily::DiagonalGaussian => {
                SimilarityModel::diagonal_gaussian_init(dataset, self.beta_init)
                    .map_err(|e| anyhow!("diagonal_gaussian model: {e}"))
            }
        }
    }

    pub fn pipeline_config(&self, model: SimilarityModel) -> PipelineConfig {
        PipelineConfig {
            model,
            xi: self.xi,
            solver: self.solver,
            schedule: self.schedule,
            h_mode: self.h_mode,
            learn: self.learn,
            heuristic_path: self.heuristic_path,
            prune: self.prune,
            seed: self.seed,
        }
    }

    /// The effective configuration, echoed into output directories so a
    /// run can be reproduced from its artifacts alone.
    pub fn to_flat_string(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| writeln!(out, "{k}={v}").unwrap();
        kv("data.path", self.data_path.display().to_string());
        kv("data.has_labels", self.data_has_labels.to_string());
        if let Some(d) = self.pca_dims {
            kv("data.pca_dims", d.to_string());
        }
        kv("data.whiten", self.whiten.to_string());
        kv("split.fraction", format!("{}", self.split_fraction));
        kv("split.stratified", self.split_stratified.to_string());
        kv(
            "model.family",
            match self.family {
                ModelFamily::ReciprocalDistance => "reciprocal_distance".into(),
                ModelFamily::DiagonalGaussian => "diagonal_gaussian".into(),
            },
        );
        kv("model.beta1", format!("{}", self.beta1));
        kv("model.beta2", format!("{}", self.beta2));
        kv("model.p", format!("{}", self.norm_order));
        kv("model.beta_init", format!("{}", self.beta_init));
        kv("similarity.xi", self.xi.to_string());
        kv("similarity.prune", self.prune.to_string());
        kv(
            "solver.kind",
            match self.solver {
                SolverKind::Sa => "sa",
                SolverKind::Exact => "exact",
                SolverKind::Pimc => "pimc",
            }
            .into(),
        );
        if let Some(v) = self.schedule.sweeps {
            kv("solver.sweeps", v.to_string());
        }
        if let Some(v) = self.schedule.reads {
            kv("solver.reads", v.to_string());
        }
        if let Some(v) = self.schedule.t_hot {
            kv("solver.t_hot", format!("{v}"));
        }
        if let Some(v) = self.schedule.t_cold {
            kv("solver.t_cold", format!("{v}"));
        }
        if let Some(v) = self.schedule.trotter_slices {
            kv("solver.trotter_slices", v.to_string());
        }
        if let Some(v) = self.schedule.gamma_initial {
            kv("solver.gamma_initial", format!("{v}"));
        }
        if let Some(v) = self.schedule.temperature {
            kv("solver.temperature", format!("{v}"));
        }
        match self.h_mode {
            HMode::Clamp => kv("h.mode", "clamp".into()),
            HMode::Bias { magnitude } => {
                kv("h.mode", "bias".into());
                if let Some(m) = magnitude {
                    kv("h.magnitude", format!("{m}"));
                }
            }
        }
        kv("learning.enabled", self.learn.enabled.to_string());
        kv("learning.budget", self.learn.budget.to_string());
        kv(
            "learning.optimizer",
            match self.learn.optimizer {
                Optimizer::CoordinateDescent => "coordinate_descent",
                Optimizer::GradientDescent => "gradient_descent",
            }
            .into(),
        );
        kv("learning.block_max", self.learn.block_max.to_string());
        kv("encoding.heuristic_path", self.heuristic_path.to_string());
        kv("output.dir", self.output_dir.display().to_string());
        kv("output.matrices", self.dump_matrices.to_string());
        kv("seed", self.seed.to_string());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_dotted_keys_and_defaults() {
        let cfg = RunConfig::from_str(
            "# comment\ndata.path=fixtures/iris.csv\nsimilarity.xi = 6\nsolver.reads=32\nseed=9\n",
        )
        .unwrap();
        assert_eq!(cfg.xi, 6);
        assert_eq!(cfg.schedule.reads, Some(32));
        assert_eq!(cfg.seed, 9);
        assert!(cfg.data_has_labels);
        assert_eq!(cfg.solver, SolverKind::Sa);
    }

    #[test]
    fn rejects_unknown_keys() {
        let err = RunConfig::from_str("data.path=x\nsolvr.kind=sa\n").unwrap_err();
        assert!(err.to_string().contains("solvr.kind"));
    }

    #[test]
    fn requires_data_path() {
        assert!(RunConfig::from_str("similarity.xi=4\n").is_err());
    }

    #[test]
    fn bias_magnitude_requires_bias_mode() {
        assert!(RunConfig::from_str("data.path=x\nh.magnitude=5\n").is_err());
        let cfg = RunConfig::from_str("data.path=x\nh.mode=bias\nh.magnitude=5\n").unwrap();
        assert_eq!(
            cfg.h_mode,
            HMode::Bias {
                magnitude: Some(5.0)
            }
        );
    }

    #[test]
    fn echo_round_trips() {
        let cfg = RunConfig::from_str(
            "data.path=a.csv\nmodel.family=diagonal_gaussian\ndata.pca_dims=2\nsolver.kind=exact\nseed=3\n",
        )
        .unwrap();
        let echoed = cfg.to_flat_string();
        let back = RunConfig::from_str(&echoed).unwrap();
        assert_eq!(back.family, ModelFamily::DiagonalGaussian);
        assert_eq!(back.pca_dims, Some(2));
        assert_eq!(back.solver, SolverKind::Exact);
        assert_eq!(back.seed, 3);
    }
}
