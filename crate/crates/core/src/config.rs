//! Run configuration and the flat `key = value` file format.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are listed in
//! [`RunConfig::KEYS`]; anything else is rejected with its line number.

use std::path::PathBuf;

use crate::em::{BudgetMode, ConvergenceOpts, Penalties};
use crate::graph::DEFAULT_THRESHOLD;
use crate::selection::{GridSpec, SearchMode};
use crate::{NetinfError, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum InitChoice {
    DataDriven,
    Random,
    /// Starting parameters (and Q0) read from a model file.
    Model(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub k: usize,
    pub center: bool,
    pub init: InitChoice,
    pub init_seed: u64,
    pub opts: ConvergenceOpts<f64>,
    /// Budgets for a single fit, `(s_Z, s_B, s_F, s_A)`.
    pub penalties: [f64; 4],
    pub budget_mode: BudgetMode,
    /// Grid values per axis, `(s_Z, s_B, s_F, s_A)`.
    pub grid: [Vec<f64>; 4],
    pub search: SearchMode,
    pub k_values: Option<Vec<usize>>,
    pub threshold: f64,
    pub seed: u64,
    pub out: PathBuf,
    // Simulation settings.
    pub sim_p: usize,
    pub sim_times: usize,
    pub sim_reps: usize,
    pub sim_density: f64,
    pub sim_scale: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let grid: Vec<f64> = vec![0.05, 0.1, 0.2, 0.4, 0.8];
        Self {
            k: 4,
            center: true,
            init: InitChoice::DataDriven,
            init_seed: 0,
            opts: ConvergenceOpts::default(),
            penalties: [1.0; 4],
            budget_mode: BudgetMode::Fraction,
            grid: [grid.clone(), grid.clone(), grid.clone(), grid],
            search: SearchMode::CoordinateDescent,
            k_values: None,
            threshold: DEFAULT_THRESHOLD,
            seed: 0,
            out: PathBuf::from("out"),
            sim_p: 10,
            sim_times: 20,
            sim_reps: 20,
            sim_density: 0.2,
            sim_scale: 0.5,
        }
    }
}

fn parse_num<V: std::str::FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .parse()
        .map_err(|_| NetinfError::InvalidArgument(format!("{key}: cannot parse '{value}'")))
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    let v: f64 = parse_num(key, value)?;
    if !v.is_finite() {
        return Err(NetinfError::InvalidArgument(format!("{key}: '{value}' is not finite")));
    }
    Ok(v)
}

fn parse_list<V: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<V>> {
    value
        .split(',')
        .map(|s| parse_num(key, s.trim()))
        .collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(NetinfError::InvalidArgument(format!("{key}: expected true or false, got '{value}'"))),
    }
}

fn positive(key: &str, v: usize) -> Result<usize> {
    if v == 0 {
        return Err(NetinfError::InvalidArgument(format!("{key} must be at least 1")));
    }
    Ok(v)
}

fn nonneg(key: &str, v: f64) -> Result<f64> {
    if v < 0.0 {
        return Err(NetinfError::InvalidArgument(format!("{key} must be non-negative")));
    }
    Ok(v)
}

impl RunConfig {
    pub const KEYS: &'static [&'static str] = &[
        "k", "center", "init", "init_model", "init_seed", "rel_tol", "max_iter", "inner_sweeps",
        "s_z", "s_b", "s_f", "s_a", "budget_mode", "grid", "grid_s_z", "grid_s_b", "grid_s_f",
        "grid_s_a", "search", "k_values", "threshold", "seed", "out", "sim_p", "sim_times",
        "sim_reps", "sim_density", "sim_scale",
    ];

    /// Applies one setting, validating its range.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "k" => self.k = positive(key, parse_num(key, value)?)?,
            "center" => self.center = parse_bool(key, value)?,
            "init" => {
                self.init = match value {
                    "data" => InitChoice::DataDriven,
                    "random" => InitChoice::Random,
                    _ => {
                        return Err(NetinfError::InvalidArgument(format!(
                            "init: expected data or random (use init_model for a file), got '{value}'"
                        )))
                    }
                }
            }
            "init_model" => self.init = InitChoice::Model(PathBuf::from(value)),
            "init_seed" => self.init_seed = parse_num(key, value)?,
            "rel_tol" => {
                let v = parse_f64(key, value)?;
                if v <= 0.0 {
                    return Err(NetinfError::InvalidArgument("rel_tol must be positive".into()));
                }
                self.opts.rel_tol = v;
            }
            "max_iter" => self.opts.max_iter = positive(key, parse_num(key, value)?)?,
            "inner_sweeps" => self.opts.inner_sweeps = positive(key, parse_num(key, value)?)?,
            "s_z" => self.penalties[0] = nonneg(key, parse_f64(key, value)?)?,
            "s_b" => self.penalties[1] = nonneg(key, parse_f64(key, value)?)?,
            "s_f" => self.penalties[2] = nonneg(key, parse_f64(key, value)?)?,
            "s_a" => self.penalties[3] = nonneg(key, parse_f64(key, value)?)?,
            "budget_mode" => {
                self.budget_mode = match value {
                    "fraction" => BudgetMode::Fraction,
                    "absolute" => BudgetMode::Absolute,
                    _ => {
                        return Err(NetinfError::InvalidArgument(format!(
                            "budget_mode: expected fraction or absolute, got '{value}'"
                        )))
                    }
                }
            }
            "grid" => {
                let v: Vec<f64> = parse_list(key, value)?;
                self.grid = [v.clone(), v.clone(), v.clone(), v];
            }
            "grid_s_z" => self.grid[0] = parse_list(key, value)?,
            "grid_s_b" => self.grid[1] = parse_list(key, value)?,
            "grid_s_f" => self.grid[2] = parse_list(key, value)?,
            "grid_s_a" => self.grid[3] = parse_list(key, value)?,
            "search" => {
                self.search = match value {
                    "coordinate" => SearchMode::CoordinateDescent,
                    "full" => SearchMode::FullCross,
                    _ => {
                        return Err(NetinfError::InvalidArgument(format!(
                            "search: expected coordinate or full, got '{value}'"
                        )))
                    }
                }
            }
            "k_values" => {
                let ks: Vec<usize> = parse_list(key, value)?;
                for &k in &ks {
                    positive(key, k)?;
                }
                self.k_values = Some(ks);
            }
            "threshold" => self.threshold = nonneg(key, parse_f64(key, value)?)?,
            "seed" => self.seed = parse_num(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "sim_p" => self.sim_p = positive(key, parse_num(key, value)?)?,
            "sim_times" => self.sim_times = positive(key, parse_num(key, value)?)?,
            "sim_reps" => self.sim_reps = positive(key, parse_num(key, value)?)?,
            "sim_density" => {
                let v = parse_f64(key, value)?;
                if !(v > 0.0 && v <= 1.0) {
                    return Err(NetinfError::InvalidArgument("sim_density must be in (0, 1]".into()));
                }
                self.sim_density = v;
            }
            "sim_scale" => {
                let v = parse_f64(key, value)?;
                if v <= 0.0 {
                    return Err(NetinfError::InvalidArgument("sim_scale must be positive".into()));
                }
                self.sim_scale = v;
            }
            _ => return Err(NetinfError::InvalidArgument(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    /// Applies every setting of a config file on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                NetinfError::InvalidArgument(format!("config line {}: expected key = value", i + 1))
            })?;
            self.set(key.trim(), value).map_err(|e| match e {
                NetinfError::InvalidArgument(msg) => {
                    NetinfError::InvalidArgument(format!("config line {}: {msg}", i + 1))
                }
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn fit_penalties(&self) -> Result<Penalties<f64>> {
        let [s_z, s_b, s_f, s_a] = self.penalties;
        Penalties::new(s_z, s_b, s_f, s_a, self.budget_mode)
    }

    pub fn grid_spec(&self) -> Result<GridSpec<f64>> {
        GridSpec::new(self.grid.clone(), self.budget_mode, self.k_values.clone(), self.search)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_and_comments() {
        let cfg = RunConfig::from_text(
            "# run\nk = 3\ncenter = false\nrel_tol=1e-8\ngrid = 0.1, 0.5\nsearch = full\n\ninit_model = m.json\n",
        )
        .unwrap();
        assert_eq!(cfg.k, 3);
        assert!(!cfg.center);
        assert_eq!(cfg.opts.rel_tol, 1e-8);
        assert_eq!(cfg.grid[2], vec![0.1, 0.5]);
        assert_eq!(cfg.search, SearchMode::FullCross);
        assert_eq!(cfg.init, InitChoice::Model(PathBuf::from("m.json")));
        assert!(cfg.grid_spec().is_ok());
    }

    #[test]
    fn rejects_unknown_and_out_of_range() {
        let e = RunConfig::from_text("k = 2\nbogus = 1\n").unwrap_err().to_string();
        assert!(e.contains("line 2") && e.contains("bogus"), "{e}");
        assert!(RunConfig::from_text("k = 0").is_err());
        assert!(RunConfig::from_text("rel_tol = -1").is_err());
        assert!(RunConfig::from_text("threshold = -0.1").is_err());
        assert!(RunConfig::from_text("sim_density = 1.5").is_err());
        assert!(RunConfig::from_text("just text").is_err());
    }

    #[test]
    fn every_listed_key_is_accepted() {
        let sample = |key: &str| match key {
            "center" => "true",
            "init" => "random",
            "init_model" => "x.json",
            "budget_mode" => "absolute",
            "search" => "coordinate",
            "out" => "dir",
            "rel_tol" | "sim_density" | "sim_scale" => "0.5",
            _ => "1",
        };
        for key in RunConfig::KEYS {
            let mut cfg = RunConfig::default();
            cfg.set(key, sample(key)).unwrap_or_else(|e| panic!("{key}: {e}"));
        }
    }
}
