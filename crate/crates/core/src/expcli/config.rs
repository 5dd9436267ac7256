//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::env::{Cell, GridworldSpec};
use crate::error::{Error, Result};
use crate::funcapprox::DidacticConfig;
use crate::tabular_learn::TrainConfig;

/// Everything a command needs; unset keys keep their defaults.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub experiment: Option<String>,
    pub grid: GridworldSpec,
    pub train: TrainConfig,
    pub rollout_steps: usize,
    /// Defaults to the bottom-right cell.
    pub start_state: Option<usize>,
    /// Out-of-distribution target; defaults to the excluded cell, else top-left.
    pub target_state: Option<usize>,
    /// Explicit-ensemble size for the heatmap panels.
    pub ensemble_size: usize,
    pub ive_horizons: Vec<usize>,
    /// Ensemble horizon behind the seeking and averse policies.
    pub select_horizon: usize,
    pub occupancy_horizon: usize,
    pub shift_wind_prob: f64,
    pub beta: f64,
    /// `None` leaves the choice to the command.
    pub seeds: Option<Vec<u64>>,
    pub didactic: DidacticConfig,
    pub probe_points: usize,
    pub dataset: Option<PathBuf>,
    pub study_states: usize,
    pub study_actions: usize,
    pub perturbation_scale: f64,
    pub trials: usize,
    pub study_horizon: usize,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            grid: GridworldSpec {
                excluded_cell: Some(Cell { row: 0, col: 0 }),
                ..GridworldSpec::default()
            },
            train: TrainConfig::default(),
            rollout_steps: 500,
            start_state: None,
            target_state: None,
            ensemble_size: 20,
            ive_horizons: vec![1, 2, 20],
            select_horizon: 5,
            occupancy_horizon: 150,
            shift_wind_prob: 0.5,
            beta: 0.0,
            seeds: None,
            didactic: DidacticConfig::default(),
            probe_points: 200,
            dataset: None,
            study_states: 8,
            study_actions: 4,
            perturbation_scale: 0.3,
            trials: 50,
            study_horizon: 5,
            out: None,
        }
    }
}

fn bad(key: &str, value: &str, why: impl std::fmt::Display) -> Error {
    Error::Config(format!("{key} = {value}: {why}"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| bad(key, value, e))
}

fn list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value.split(',').map(|v| num(key, v.trim())).collect()
}

/// `a,b,c` or an inclusive range `a-b`.
fn seed_list(key: &str, value: &str) -> Result<Vec<u64>> {
    if let Some((lo, hi)) = value.split_once('-') {
        let (lo, hi): (u64, u64) = (num(key, lo.trim())?, num(key, hi.trim())?);
        if lo > hi {
            return Err(bad(key, value, "empty range"));
        }
        return Ok((lo..=hi).collect());
    }
    list(key, value)
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if entries.insert(key.to_string(), value.to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{key}`", i + 1)));
            }
        }
        let mut cfg = Self::default();
        for (key, value) in &entries {
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value;
        match key {
            "experiment" => self.experiment = Some(v.to_string()),
            "width" => self.grid.width = num(key, v)?,
            "height" => self.grid.height = num(key, v)?,
            "wind_prob" => self.grid.wind_prob = num(key, v)?,
            "episode_length" => self.grid.episode_length = num(key, v)?,
            "gamma" => {
                self.grid.gamma = num(key, v)?;
                self.didactic.gamma = self.grid.gamma;
            }
            "exclude_cell" => {
                self.grid.excluded_cell = if v == "none" {
                    None
                } else {
                    let rc: Vec<usize> = list(key, v)?;
                    match rc[..] {
                        [row, col] => Some(Cell { row, col }),
                        _ => return Err(bad(key, v, "expected `row,col` or `none`")),
                    }
                }
            }
            "learning_rate" => self.train.learning_rate = num(key, v)?,
            "epochs" => self.train.epochs = num(key, v)?,
            "batch_size" => self.train.batch_size = num(key, v)?,
            "adam_beta1" => self.train.adam_beta1 = num(key, v)?,
            "adam_beta2" => self.train.adam_beta2 = num(key, v)?,
            "adam_eps" => self.train.adam_eps = num(key, v)?,
            "rollout_steps" => self.rollout_steps = num(key, v)?,
            "start_state" => self.start_state = Some(num(key, v)?),
            "target_state" => self.target_state = Some(num(key, v)?),
            "ensemble_size" => self.ensemble_size = num(key, v)?,
            "ive_horizons" => self.ive_horizons = list(key, v)?,
            "select_horizon" => self.select_horizon = num(key, v)?,
            "occupancy_horizon" => self.occupancy_horizon = num(key, v)?,
            "shift_wind_prob" => self.shift_wind_prob = num(key, v)?,
            "beta" => self.beta = num(key, v)?,
            "seeds" => self.seeds = Some(seed_list(key, v)?),
            "didactic_k_max" => self.didactic.k_max = num(key, v)?,
            "didactic_points" => self.didactic.n_points = num(key, v)?,
            "didactic_learning_rate" => self.didactic.learning_rate = num(key, v)?,
            "didactic_weight_decay" => self.didactic.weight_decay = num(key, v)?,
            "didactic_steps" => self.didactic.steps = num(key, v)?,
            "probe_points" => self.probe_points = num(key, v)?,
            "dataset" => self.dataset = Some(PathBuf::from(v)),
            "study_states" => self.study_states = num(key, v)?,
            "study_actions" => self.study_actions = num(key, v)?,
            "perturbation_scale" => self.perturbation_scale = num(key, v)?,
            "trials" => self.trials = num(key, v)?,
            "study_horizon" => self.study_horizon = num(key, v)?,
            "out" => self.out = Some(PathBuf::from(v)),
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| Error::Config(e.to_string());
        self.grid.validate().map_err(wrap)?;
        self.train.validate().map_err(wrap)?;
        self.didactic.validate().map_err(wrap)?;
        let n_states = self.grid.n_states();
        if let Some(c) = self.grid.excluded_cell {
            if c.row >= self.grid.height || c.col >= self.grid.width {
                return Err(Error::Config(format!("exclude_cell ({}, {}) is off the grid", c.row, c.col)));
            }
        }
        for (name, s) in [("start_state", self.start_state), ("target_state", self.target_state)] {
            if s.is_some_and(|s| s >= n_states) {
                return Err(Error::Config(format!("{name} must be below {n_states}")));
            }
        }
        let checks = [
            (self.rollout_steps == 0, "rollout_steps must be positive"),
            (self.ensemble_size < 2, "ensemble_size must be at least 2"),
            (self.ive_horizons.is_empty() || self.ive_horizons.contains(&0), "ive_horizons must be positive"),
            (self.select_horizon == 0, "select_horizon must be positive"),
            (self.occupancy_horizon == 0, "occupancy_horizon must be positive"),
            (!(0.0..=1.0).contains(&self.shift_wind_prob), "shift_wind_prob must lie in [0, 1]"),
            (!self.beta.is_finite(), "beta must be finite"),
            (self.seeds.as_ref().is_some_and(|s| s.is_empty()), "seeds must not be empty"),
            (self.probe_points == 0, "probe_points must be positive"),
            (self.study_states == 0 || self.study_actions == 0, "study MDP must be non-empty"),
            (!(self.perturbation_scale >= 0.0) || !self.perturbation_scale.is_finite(), "perturbation_scale must be non-negative"),
            (self.trials == 0, "trials must be positive"),
            (self.study_horizon == 0, "study_horizon must be positive"),
        ];
        match checks.iter().find(|(failed, _)| *failed) {
            Some((_, msg)) => Err(Error::Config(msg.to_string())),
            None => Ok(()),
        }
    }

    pub fn seeds_or(&self, default: &[u64]) -> Vec<u64> {
        self.seeds.clone().unwrap_or_else(|| default.to_vec())
    }

    pub fn start(&self) -> usize {
        self.start_state.unwrap_or_else(|| self.grid.bottom_right())
    }

    pub fn target(&self) -> usize {
        self.target_state
            .or_else(|| self.grid.excluded_state())
            .unwrap_or_else(|| self.grid.top_left())
    }

    /// Effective settings, one `key = value` per line, in a fixed order.
    pub fn describe(&self) -> Vec<(String, String)> {
        let join = |xs: &[usize]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let cell = match self.grid.excluded_cell {
            Some(c) => format!("{},{}", c.row, c.col),
            None => "none".into(),
        };
        let d = &self.didactic;
        [
            ("width", self.grid.width.to_string()),
            ("height", self.grid.height.to_string()),
            ("wind_prob", self.grid.wind_prob.to_string()),
            ("episode_length", self.grid.episode_length.to_string()),
            ("gamma", self.grid.gamma.to_string()),
            ("exclude_cell", cell),
            ("learning_rate", self.train.learning_rate.to_string()),
            ("epochs", self.train.epochs.to_string()),
            ("batch_size", self.train.batch_size.to_string()),
            ("adam_beta1", self.train.adam_beta1.to_string()),
            ("adam_beta2", self.train.adam_beta2.to_string()),
            ("adam_eps", self.train.adam_eps.to_string()),
            ("rollout_steps", self.rollout_steps.to_string()),
            ("start_state", self.start().to_string()),
            ("target_state", self.target().to_string()),
            ("ensemble_size", self.ensemble_size.to_string()),
            ("ive_horizons", join(&self.ive_horizons)),
            ("select_horizon", self.select_horizon.to_string()),
            ("occupancy_horizon", self.occupancy_horizon.to_string()),
            ("shift_wind_prob", self.shift_wind_prob.to_string()),
            ("beta", self.beta.to_string()),
            ("didactic_k_max", d.k_max.to_string()),
            ("didactic_points", d.n_points.to_string()),
            ("didactic_learning_rate", d.learning_rate.to_string()),
            ("didactic_weight_decay", d.weight_decay.to_string()),
            ("didactic_steps", d.steps.to_string()),
            ("probe_points", self.probe_points.to_string()),
            (
                "dataset",
                self.dataset
                    .as_ref()
                    .map_or("sin(2s) on 10 points in [-2, 2]".into(), |p| p.display().to_string()),
            ),
            ("study_states", self.study_states.to_string()),
            ("study_actions", self.study_actions.to_string()),
            ("perturbation_scale", self.perturbation_scale.to_string()),
            ("trials", self.trials.to_string()),
            ("study_horizon", self.study_horizon.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}
