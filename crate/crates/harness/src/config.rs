//! Scenario configuration: a single JSON document, snake_case, with unknown
//! fields rejected.

use std::path::{Path, PathBuf};

use gridtrack::channel::{ParamBinding, Point, MIN_DISTANCE};
use gridtrack::markov::QuantizationMode;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub dynamics: DynamicsConfig,
    #[serde(default)]
    pub transition: TransitionConfig,
    #[serde(default)]
    pub scene: SceneConfig,
    /// Number of observation steps `T`.
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub rho: usize,
    #[serde(default)]
    pub queries: QueryGridConfig,
    /// Filter times at which channel-gain maps are evaluated.
    #[serde(default = "default_snapshots")]
    pub snapshots: Vec<usize>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_steps() -> usize {
    250
}

fn default_snapshots() -> Vec<usize> {
    vec![125, 250]
}

fn default_seed() -> u64 {
    1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            grid: GridConfig::default(),
            dynamics: DynamicsConfig::default(),
            transition: TransitionConfig::default(),
            scene: SceneConfig::default(),
            steps: default_steps(),
            rho: 0,
            queries: QueryGridConfig::default(),
            snapshots: default_snapshots(),
            seed: default_seed(),
            output_dir: default_output_dir(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub cells: Vec<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { lower: vec![0.0, 25.0], upper: vec![4.0, 25.6], cells: vec![30, 30] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DynamicsConfig {
    /// Coupled tanh path-loss / shadowing-power model.
    CoupledTanh {
        #[serde(default = "default_gamma")]
        gamma: f64,
        #[serde(default = "default_initial_state")]
        initial_state: [f64; 2],
    },
    /// Explicit finite chain; `matrix[i][j]` is the probability of moving
    /// from point `j` to point `i`.
    FiniteChain { points: Vec<Vec<f64>>, matrix: Vec<Vec<f64>>, initial_index: usize },
}

fn default_gamma() -> f64 {
    1.6
}

fn default_initial_state() -> [f64; 2] {
    [2.0, 25.3]
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        DynamicsConfig::CoupledTanh { gamma: default_gamma(), initial_state: default_initial_state() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModeConfig {
    #[default]
    Markovian,
    Marginal,
}

impl From<ModeConfig> for QuantizationMode {
    fn from(m: ModeConfig) -> Self {
        match m {
            ModeConfig::Markovian => QuantizationMode::Markovian,
            ModeConfig::Marginal => QuantizationMode::Marginal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionConfig {
    #[serde(default)]
    pub mode: ModeConfig,
    #[serde(default = "default_samples_per_cell")]
    pub samples_per_cell: usize,
    #[serde(default = "default_n_paths")]
    pub n_paths: usize,
    #[serde(default = "default_path_length")]
    pub path_length: usize,
}

fn default_samples_per_cell() -> usize {
    10_000
}

fn default_n_paths() -> usize {
    100
}

fn default_path_length() -> usize {
    10_000
}

impl Default for TransitionConfig {
    fn default() -> Self {
        Self {
            mode: ModeConfig::default(),
            samples_per_cell: default_samples_per_cell(),
            n_paths: default_n_paths(),
            path_length: default_path_length(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub min: Point,
    pub max: Point,
}

impl Default for RegionConfig {
    fn default() -> Self {
        Self { min: [0.0, 0.0], max: [40.0, 40.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SensorConfig {
    /// `count` distinct points of the query lattice, drawn uniformly.
    RandomLattice {
        count: usize,
    },
    Fixed(Vec<Point>),
}

impl Default for SensorConfig {
    fn default() -> Self {
        SensorConfig::RandomLattice { count: 30 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BindingConfig {
    State(usize),
    Fixed(f64),
}

impl From<BindingConfig> for ParamBinding {
    fn from(b: BindingConfig) -> Self {
        match b {
            BindingConfig::State(i) => ParamBinding::State(i),
            BindingConfig::Fixed(v) => ParamBinding::Fixed(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    #[serde(default)]
    pub region: RegionConfig,
    #[serde(default = "default_ref_pos")]
    pub ref_pos: Point,
    #[serde(default)]
    pub sensors: SensorConfig,
    #[serde(default = "default_sigma_xi_sq")]
    pub sigma_xi_sq: f64,
    #[serde(default)]
    pub mu_index: usize,
    /// Shadowing power and correlation distance bindings.
    #[serde(default = "default_theta")]
    pub theta: Vec<BindingConfig>,
}

fn default_ref_pos() -> Point {
    [25.0, 10.0]
}

fn default_sigma_xi_sq() -> f64 {
    2.0
}

fn default_theta() -> Vec<BindingConfig> {
    vec![BindingConfig::State(1), BindingConfig::Fixed(10.0)]
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            region: RegionConfig::default(),
            ref_pos: default_ref_pos(),
            sensors: SensorConfig::default(),
            sigma_xi_sq: default_sigma_xi_sq(),
            mu_index: 0,
            theta: default_theta(),
        }
    }
}

/// Cell-center lattice of `nx x ny` points over the scene region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryGridConfig {
    pub nx: usize,
    pub ny: usize,
}

impl Default for QueryGridConfig {
    fn default() -> Self {
        Self { nx: 60, ny: 60 }
    }
}

fn invalid(field: &str, message: impl Into<String>) -> HarnessError {
    HarnessError::Config { field: field.to_string(), message: message.into() }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| invalid("<document>", e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| HarnessError::Io { path: path.to_path_buf(), source: e })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn state_dim(&self) -> usize {
        self.grid.lower.len()
    }

    /// Cell-center lattice of the query grid, x fastest.
    pub fn query_lattice(&self) -> Vec<Point> {
        let QueryGridConfig { nx, ny } = self.queries;
        let RegionConfig { min, max } = self.scene.region;
        let dx = (max[0] - min[0]) / nx as f64;
        let dy = (max[1] - min[1]) / ny as f64;
        (0..ny)
            .flat_map(|j| (0..nx).map(move |i| [min[0] + (i as f64 + 0.5) * dx, min[1] + (j as f64 + 0.5) * dy]))
            .collect()
    }

    /// Checks cross-field consistency; errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        let m = self.grid.lower.len();
        if m == 0 {
            return Err(invalid("grid.lower", "state dimension must be at least 1"));
        }
        if self.grid.upper.len() != m {
            return Err(invalid("grid.upper", format!("expected {m} entries")));
        }
        if self.grid.cells.len() != m {
            return Err(invalid("grid.cells", format!("expected {m} entries")));
        }
        for d in 0..m {
            let (lo, hi) = (self.grid.lower[d], self.grid.upper[d]);
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(invalid("grid.upper", format!("dimension {d}: upper must exceed lower")));
            }
            if self.grid.cells[d] == 0 {
                return Err(invalid("grid.cells", format!("dimension {d}: need at least one cell")));
            }
        }

        match &self.dynamics {
            DynamicsConfig::CoupledTanh { gamma, initial_state } => {
                if m != 2 {
                    return Err(invalid("dynamics.kind", "coupled_tanh dynamics need a 2-dimensional grid"));
                }
                if !gamma.is_finite() {
                    return Err(invalid("dynamics.gamma", "must be finite"));
                }
                if initial_state.iter().any(|v| !v.is_finite()) {
                    return Err(invalid("dynamics.initial_state", "must be finite"));
                }
            }
            DynamicsConfig::FiniteChain { points, matrix, initial_index } => {
                if points.is_empty() || points.iter().any(|p| p.len() != m) {
                    return Err(invalid("dynamics.points", format!("need at least one point of dimension {m}")));
                }
                if matrix.len() != points.len() || matrix.iter().any(|r| r.len() != points.len()) {
                    return Err(invalid("dynamics.matrix", "must be square with one row per point"));
                }
                for j in 0..points.len() {
                    let s: f64 = matrix.iter().map(|r| r[j]).sum();
                    if (s - 1.0).abs() > 1e-12 || matrix.iter().any(|r| !(0.0..=1.0).contains(&r[j])) {
                        return Err(invalid("dynamics.matrix", format!("column {j} is not a probability vector")));
                    }
                }
                if *initial_index >= points.len() {
                    return Err(invalid("dynamics.initial_index", "out of range"));
                }
            }
        }

        let t = &self.transition;
        match t.mode {
            ModeConfig::Markovian if t.samples_per_cell == 0 => {
                return Err(invalid("transition.samples_per_cell", "must be at least 1"));
            }
            ModeConfig::Marginal if t.n_paths == 0 => {
                return Err(invalid("transition.n_paths", "must be at least 1"));
            }
            ModeConfig::Marginal if t.path_length < 2 => {
                return Err(invalid("transition.path_length", "must be at least 2"));
            }
            _ => {}
        }

        let s = &self.scene;
        let RegionConfig { min, max } = s.region;
        if !(min[0] < max[0] && min[1] < max[1]) {
            return Err(invalid("scene.region", "max must exceed min in both coordinates"));
        }
        if !(s.sigma_xi_sq > 0.0 && s.sigma_xi_sq.is_finite()) {
            return Err(invalid("scene.sigma_xi_sq", "must be positive for filtering"));
        }
        if s.mu_index >= m {
            return Err(invalid("scene.mu_index", format!("outside state dimension {m}")));
        }
        if s.theta.len() != 2 {
            return Err(invalid("scene.theta", "exponential kernel takes two parameters"));
        }
        let mut used = vec![s.mu_index];
        for b in &s.theta {
            match *b {
                BindingConfig::State(i) if i >= m || used.contains(&i) => {
                    return Err(invalid("scene.theta", format!("state index {i} out of range or reused")));
                }
                BindingConfig::State(i) => used.push(i),
                BindingConfig::Fixed(v) if !v.is_finite() => {
                    return Err(invalid("scene.theta", "fixed values must be finite"));
                }
                BindingConfig::Fixed(_) => {}
            }
        }
        if let BindingConfig::Fixed(v) = s.theta[0] {
            if v < 0.0 {
                return Err(invalid("scene.theta", "shadowing power must be nonnegative"));
            }
        }
        if let BindingConfig::Fixed(v) = s.theta[1] {
            if v <= 0.0 {
                return Err(invalid("scene.theta", "correlation distance must be positive"));
            }
        }
        // state-bound kernel parameters must stay admissible over the whole grid box
        if let BindingConfig::State(i) = s.theta[0] {
            if self.grid.lower[i] < 0.0 {
                return Err(invalid("grid.lower", format!("dimension {i} binds shadowing power and must be >= 0")));
            }
        }
        if let BindingConfig::State(i) = s.theta[1] {
            if self.grid.lower[i] <= 0.0 {
                return Err(invalid("grid.lower", format!("dimension {i} binds correlation distance and must be > 0")));
            }
        }

        if self.queries.nx == 0 || self.queries.ny == 0 {
            return Err(invalid("queries", "query lattice needs at least one point"));
        }
        let lattice = self.query_lattice();
        let ref_pos = s.ref_pos;
        let near = |p: &Point| (p[0] - ref_pos[0]).hypot(p[1] - ref_pos[1]) < MIN_DISTANCE;
        match &s.sensors {
            SensorConfig::RandomLattice { count } => {
                let usable = lattice.iter().filter(|p| !near(p)).count();
                if *count == 0 || *count > usable {
                    return Err(invalid("scene.sensors.random_lattice.count", format!("must be in 1..={usable}")));
                }
            }
            SensorConfig::Fixed(points) => {
                if points.is_empty() {
                    return Err(invalid("scene.sensors.fixed", "need at least one sensor"));
                }
                if points.iter().any(near) {
                    return Err(invalid("scene.sensors.fixed", "a sensor sits on the reference antenna"));
                }
            }
        }
        if lattice.iter().any(near) {
            return Err(invalid("queries", "a query point sits on the reference antenna"));
        }
        if let Some(k) = self.snapshots.iter().find(|&&k| k == 0 || k > self.steps) {
            return Err(invalid("snapshots", format!("snapshot {k} outside 1..={}", self.steps)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = ScenarioConfig::default();
        c.validate().unwrap();
        assert_eq!(ScenarioConfig::from_json(&c.to_json()).unwrap(), c);
        assert_eq!(ScenarioConfig::from_json("{}").unwrap(), c);
        assert_eq!(c.query_lattice().len(), 3600);
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(ScenarioConfig::from_json(r#"{"stpes": 3}"#).is_err());
        assert!(ScenarioConfig::from_json(r#"{"scene": {"sigma": 1}}"#).is_err());
        assert!(ScenarioConfig::from_json(r#"{"dynamics": {"kind": "coupled_tanh", "gama": 1}}"#).is_err());
    }

    #[test]
    fn errors_name_the_field() {
        let err = ScenarioConfig::from_json(r#"{"scene": {"sigma_xi_sq": 0}}"#).unwrap_err();
        assert!(matches!(&err, HarnessError::Config { field, .. } if field == "scene.sigma_xi_sq"), "{err}");
        let err = ScenarioConfig::from_json(r#"{"steps": 10, "snapshots": [11]}"#).unwrap_err();
        assert!(matches!(&err, HarnessError::Config { field, .. } if field == "snapshots"));
        let err = ScenarioConfig::from_json(r#"{"grid": {"lower": [0], "upper": [1], "cells": [4]}}"#).unwrap_err();
        assert!(matches!(&err, HarnessError::Config { field, .. } if field == "dynamics.kind"));
    }

    #[test]
    fn finite_chain_and_fixed_sensors_parse() {
        let text = r#"{
            "grid": {"lower": [0], "upper": [1], "cells": [2]},
            "dynamics": {"kind": "finite_chain", "points": [[0.25], [0.75]],
                         "matrix": [[0.7, 0.3], [0.3, 0.7]], "initial_index": 0},
            "scene": {"sensors": {"fixed": [[1, 1], [5, 9]]}, "theta": [{"fixed": 25}, {"fixed": 10}]},
            "snapshots": [3], "steps": 4
        }"#;
        let c = ScenarioConfig::from_json(text).unwrap();
        assert!(matches!(c.dynamics, DynamicsConfig::FiniteChain { .. }));
        assert_eq!(c.scene.sensors, SensorConfig::Fixed(vec![[1.0, 1.0], [5.0, 9.0]]));
    }
}
