//! End-to-end scenario: transition estimation, synthetic truth, tracking and
//! channel-gain maps, plus the metrics derived from them.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;
use std::time::Instant;

use gridtrack::channel::{
    kernel_matrix, sample_joint_field, sample_observation, ChannelScene, Kernel, ObservationBatch, ParamBinding, Point,
    SensorLayout, StateToChannelMap, MIN_DISTANCE,
};
use gridtrack::filter::FilterSession;
use gridtrack::grid::GridSpec;
use gridtrack::markov::{
    estimate_transition_marginal, estimate_transition_markovian, initial_belief, matrix_power, simulate_trajectory,
    Belief, CoupledTanhDynamics, FiniteChainDynamics, QuantizationMode, StateDynamics, TransitionMatrix,
};
use gridtrack::seeding::{derive_seed, substream};
use gridtrack::spatial::{predict_map, QuerySpec};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::config::{DynamicsConfig, ScenarioConfig, SensorConfig};
use crate::error::{HarnessError, InPhase, Result};

/// Random-stream identifiers of the pipeline phases.
pub mod phase {
    pub const SENSORS: u64 = 1;
    pub const TRANSITION: u64 = 2;
    pub const TRAJECTORY: u64 = 3;
    pub const OBSERVATIONS: u64 = 4;
    pub const INITIAL_BELIEF: u64 = 5;
}

/// Monte-Carlo draws for the initial belief when the start state is random.
const INITIAL_BELIEF_SAMPLES: usize = 10_000;

/// Synthetic ground truth and measurements for one seed.
#[derive(Debug, Clone)]
pub struct SyntheticRun {
    pub seed: u64,
    pub scene: ChannelScene,
    /// States `x_0 ..= x_{T + rho}`.
    pub truth: Vec<Vec<f64>>,
    /// Measurements for `t = 1 ..= T`.
    pub observations: Vec<ObservationBatch>,
    /// Noiseless channel gain over the query lattice, keyed by time.
    pub fields: BTreeMap<usize, Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct TransitionOutcome {
    pub transition: TransitionMatrix,
    pub patched_columns: Vec<usize>,
    pub visited_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    /// `0` is the prior before any measurement.
    pub t: usize,
    /// The state the estimate targets, `x_{t + rho}`.
    pub truth: Vec<f64>,
    pub estimate: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapSnapshot {
    /// Filter time of the prediction.
    pub t: usize,
    pub points: Vec<Point>,
    /// Noiseless gain at time `t + rho`.
    pub truth: Vec<f64>,
    pub predicted: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapMetric {
    pub t: usize,
    pub rmse: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Runtimes {
    pub transition: f64,
    pub simulation: f64,
    pub tracking: f64,
    pub maps: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub resolved_seed: u64,
    pub mode: &'static str,
    pub cells: usize,
    pub steps: usize,
    pub rho: usize,
    /// Per state coordinate, over the rows `t = 1 ..= T`; absent when `T = 0`.
    pub rmse_state: Option<Vec<f64>>,
    /// Same, for the measurement-free prior propagation.
    pub rmse_baseline: Option<Vec<f64>>,
    pub rmse_map: Vec<MapMetric>,
    /// Times at which the belief collapsed and was reset to uniform.
    pub resets: Vec<usize>,
    pub patched_columns: usize,
    pub visited_fraction: Option<f64>,
    pub runtime_s: Runtimes,
    pub config: ScenarioConfig,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Vec<TraceRow>,
    pub baseline: Vec<Vec<f64>>,
    pub maps: Vec<MapSnapshot>,
    pub metrics: RunMetrics,
    pub transition: TransitionMatrix,
}

/// A validated scenario with its grid, dynamics and query lattice.
pub struct Experiment {
    config: ScenarioConfig,
    grid: GridSpec,
    dynamics: Box<dyn StateDynamics + Send>,
    lattice: Vec<Point>,
    /// Lower Cholesky factor of the unit-amplitude shadowing correlation over
    /// the lattice; only used when the correlation parameters are fixed.
    lattice_factor: OnceLock<DMatrix<f64>>,
}

impl std::fmt::Debug for Experiment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Experiment").field("config", &self.config).finish_non_exhaustive()
    }
}

fn build_dynamics(config: &DynamicsConfig) -> Result<Box<dyn StateDynamics + Send>> {
    Ok(match config {
        DynamicsConfig::CoupledTanh { gamma, initial_state } => {
            Box::new(CoupledTanhDynamics { gamma: *gamma, initial: *initial_state })
        }
        DynamicsConfig::FiniteChain { points, matrix, initial_index } => {
            let n = points.len();
            let m = DMatrix::from_fn(n, n, |i, j| matrix[i][j]);
            Box::new(FiniteChainDynamics::new(points.clone(), m, *initial_index).in_phase("dynamics setup")?)
        }
    })
}

impl Experiment {
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let g = &config.grid;
        let grid = GridSpec::new(g.lower.clone(), g.upper.clone(), g.cells.clone()).in_phase("grid setup")?;
        let dynamics = build_dynamics(&config.dynamics)?;
        let lattice = config.query_lattice();
        Ok(Self { config, grid, dynamics, lattice, lattice_factor: OnceLock::new() })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn dynamics(&self) -> &dyn StateDynamics {
        self.dynamics.as_ref()
    }

    pub fn lattice(&self) -> &[Point] {
        &self.lattice
    }

    fn state_map(&self) -> StateToChannelMap {
        StateToChannelMap {
            mu_index: self.config.scene.mu_index,
            theta: self.config.scene.theta.iter().map(|&b| ParamBinding::from(b)).collect(),
        }
    }

    /// Sensor positions, with their lattice indices when they lie on it.
    pub fn place_sensors(&self, seed: u64) -> (Vec<Point>, Option<Vec<usize>>) {
        match &self.config.scene.sensors {
            SensorConfig::Fixed(points) => (points.clone(), None),
            SensorConfig::RandomLattice { count } => {
                let ref_pos = self.config.scene.ref_pos;
                let candidates: Vec<usize> = (0..self.lattice.len())
                    .filter(|&i| {
                        let p = self.lattice[i];
                        (p[0] - ref_pos[0]).hypot(p[1] - ref_pos[1]) >= MIN_DISTANCE
                    })
                    .collect();
                let mut rng = substream(seed, phase::SENSORS);
                let picked: Vec<usize> = rand::seq::index::sample(&mut rng, candidates.len(), *count)
                    .into_iter()
                    .map(|k| candidates[k])
                    .collect();
                (picked.iter().map(|&i| self.lattice[i]).collect(), Some(picked))
            }
        }
    }

    pub fn scene(&self, sensors: Vec<Point>) -> Result<ChannelScene> {
        let s = &self.config.scene;
        ChannelScene::new(
            s.ref_pos,
            SensorLayout::Static(sensors),
            s.sigma_xi_sq,
            Kernel::ExponentialIsotropic,
            self.state_map(),
        )
        .in_phase("scene setup")
    }

    /// Field times needed by the configured snapshots.
    fn field_times(&self) -> BTreeSet<usize> {
        self.config.snapshots.iter().map(|k| k + self.config.rho).collect()
    }

    fn fixed_correlation(&self) -> Option<Vec<f64>> {
        // amplitude is the first kernel parameter; the rest shape the correlation
        self.config.scene.theta[1..]
            .iter()
            .map(|b| match ParamBinding::from(*b) {
                ParamBinding::Fixed(v) => Some(v),
                ParamBinding::State(_) => None,
            })
            .collect()
    }

    fn lattice_factor(&self, shape: &[f64]) -> Result<&DMatrix<f64>> {
        if let Some(f) = self.lattice_factor.get() {
            return Ok(f);
        }
        let mut theta = vec![1.0];
        theta.extend_from_slice(shape);
        let corr = kernel_matrix(Kernel::ExponentialIsotropic, &self.lattice, &theta);
        let lower = corr.cholesky().map(|c| c.unpack()).ok_or_else(|| HarnessError::Numerical {
            phase: "field sampling",
            source: gridtrack::Error::NotPositiveDefinite("lattice correlation matrix".into()),
        })?;
        Ok(self.lattice_factor.get_or_init(|| lower))
    }

    /// Joint draw of sensor measurements and the noiseless lattice field.
    fn draw_field(
        &self,
        scene: &ChannelScene,
        sensor_idx: Option<&[usize]>,
        t: usize,
        x: &[f64],
        rng: &mut dyn RngCore,
    ) -> Result<(ObservationBatch, Vec<f64>)> {
        let map = scene.state_map();
        match (sensor_idx, self.fixed_correlation()) {
            (Some(idx), Some(shape)) => {
                let factor = self.lattice_factor(&shape)?;
                let theta = map.theta(x);
                let amp = Kernel::ExponentialIsotropic.amplitude(&theta);
                let mu = map.mu(x);
                let z = DVector::from_iterator(
                    self.lattice.len(),
                    (0..self.lattice.len()).map(|_| rng.sample::<f64, _>(StandardNormal)),
                );
                let shadow = (factor * z) * amp.sqrt();
                let alpha = scene.path_loss_coeffs(t).in_phase("field sampling")?;
                let sd = scene.sigma_xi_sq().sqrt();
                let y = DVector::from_iterator(
                    idx.len(),
                    idx.iter().enumerate().map(|(i, &k)| {
                        let xi: f64 = rng.sample(StandardNormal);
                        alpha[i] * mu + shadow[k] + sd * xi
                    }),
                );
                let field = self
                    .lattice
                    .iter()
                    .enumerate()
                    .map(|(k, q)| Ok(scene.alpha_at(q)? * mu + shadow[k]))
                    .collect::<gridtrack::Result<Vec<f64>>>()
                    .in_phase("field sampling")?;
                Ok((ObservationBatch { t, y, alpha }, field))
            }
            _ => {
                let draw = sample_joint_field(scene, t, x, &self.lattice, rng).in_phase("field sampling")?;
                Ok((draw.observation, draw.field))
            }
        }
    }

    /// Trajectory, measurements and, at the snapshot times, the lattice field.
    pub fn simulate(&self, seed: u64) -> Result<SyntheticRun> {
        let (sensors, sensor_idx) = self.place_sensors(seed);
        let scene = self.scene(sensors)?;
        let steps = self.config.steps;
        let rho = self.config.rho;
        let truth = simulate_trajectory(self.dynamics(), steps + rho, &mut substream(seed, phase::TRAJECTORY));
        let field_times = self.field_times();

        let mut rng = substream(seed, phase::OBSERVATIONS);
        let mut observations = Vec::with_capacity(steps);
        let mut fields = BTreeMap::new();
        for (t, x) in truth.iter().enumerate().skip(1) {
            if field_times.contains(&t) {
                let (obs, field) = self.draw_field(&scene, sensor_idx.as_deref(), t, x, &mut rng)?;
                if t <= steps {
                    observations.push(obs);
                }
                fields.insert(t, field);
            } else if t <= steps {
                observations.push(sample_observation(&scene, t, x, &mut rng).in_phase("observation sampling")?);
            }
        }
        Ok(SyntheticRun { seed, scene, truth, observations, fields })
    }

    pub fn estimate_transition(&self, seed: u64) -> Result<TransitionOutcome> {
        let tc = &self.config.transition;
        let seed = derive_seed(seed, phase::TRANSITION);
        match QuantizationMode::from(tc.mode) {
            QuantizationMode::Markovian => Ok(TransitionOutcome {
                transition: estimate_transition_markovian(self.dynamics(), &self.grid, tc.samples_per_cell, seed)
                    .in_phase("transition estimation")?,
                patched_columns: Vec::new(),
                visited_fraction: None,
            }),
            QuantizationMode::Marginal => {
                let est = estimate_transition_marginal(self.dynamics(), &self.grid, tc.n_paths, tc.path_length, seed)
                    .in_phase("transition estimation")?;
                Ok(TransitionOutcome {
                    transition: est.transition,
                    patched_columns: est.patched_columns,
                    visited_fraction: Some(est.visited_fraction),
                })
            }
        }
    }

    pub fn initial_belief(&self, seed: u64) -> Result<Belief> {
        let mut rng = substream(seed, phase::INITIAL_BELIEF);
        initial_belief(self.dynamics(), &self.grid, INITIAL_BELIEF_SAMPLES, &mut rng).in_phase("initial belief")
    }

    /// Full pipeline for one seed.
    pub fn run(&self, seed: u64) -> Result<RunOutput> {
        self.run_with_transition(seed, None)
    }

    /// Like [`Experiment::run`], reusing `transition` when given.
    pub fn run_with_transition(&self, seed: u64, transition: Option<TransitionMatrix>) -> Result<RunOutput> {
        let start = Instant::now();
        let outcome = match transition {
            Some(p) => {
                if p.len() != self.grid.len() {
                    return Err(HarnessError::Numerical {
                        phase: "transition loading",
                        source: gridtrack::Error::DimensionMismatch { expected: self.grid.len(), got: p.len() },
                    });
                }
                TransitionOutcome { transition: p, patched_columns: Vec::new(), visited_fraction: None }
            }
            None => self.estimate_transition(seed)?,
        };
        let t_transition = start.elapsed().as_secs_f64();

        let sim_start = Instant::now();
        let sim = self.simulate(seed)?;
        let t_simulation = sim_start.elapsed().as_secs_f64();

        let mut output = self.track(&sim, outcome.transition, seed)?;
        output.metrics.patched_columns = outcome.patched_columns.len();
        output.metrics.visited_fraction = outcome.visited_fraction;
        let rt = &mut output.metrics.runtime_s;
        rt.transition = t_transition;
        rt.simulation = t_simulation;
        rt.total = start.elapsed().as_secs_f64();
        Ok(output)
    }

    /// Filters the measurements of `sim` and predicts the snapshot maps.
    pub fn track(&self, sim: &SyntheticRun, transition: TransitionMatrix, seed: u64) -> Result<RunOutput> {
        let rho = self.config.rho;
        let steps = self.config.steps;
        let initial = self.initial_belief(seed)?;
        let baseline = prior_baseline(&transition, &self.grid, &initial, steps, rho);
        let mut session = FilterSession::new(self.grid.clone(), transition.clone(), initial, sim.scene.clone(), rho)
            .in_phase("filter setup")?;
        let queries = if self.config.snapshots.is_empty() {
            None
        } else {
            Some(QuerySpec::new(self.lattice.clone(), rho, &sim.scene).in_phase("query setup")?)
        };
        let snapshots: BTreeSet<usize> = self.config.snapshots.iter().copied().collect();

        let mut trace = Vec::with_capacity(steps + 1);
        trace.push(TraceRow {
            t: 0,
            truth: sim.truth[rho].clone(),
            estimate: session.estimate().iter().copied().collect(),
        });
        let mut maps = Vec::new();
        let mut map_time = 0.0;
        let track_start = Instant::now();
        for obs in &sim.observations {
            let t = obs.t;
            session.step(obs).in_phase("filter update")?;
            trace.push(TraceRow {
                t,
                truth: sim.truth[t + rho].clone(),
                estimate: session.estimate().iter().copied().collect(),
            });
            if let (true, Some(q)) = (snapshots.contains(&t), queries.as_ref()) {
                let map_start = Instant::now();
                let predicted = predict_map(&session, obs, q).in_phase("map prediction")?;
                map_time += map_start.elapsed().as_secs_f64();
                maps.push(MapSnapshot {
                    t,
                    points: self.lattice.clone(),
                    truth: sim.fields[&(t + rho)].clone(),
                    predicted,
                });
            }
        }
        let tracking = track_start.elapsed().as_secs_f64() - map_time;

        let truth_rows: Vec<Vec<f64>> = trace.iter().map(|r| r.truth.clone()).collect();
        let metrics = RunMetrics {
            resolved_seed: seed,
            mode: match transition.mode() {
                QuantizationMode::Markovian => "markovian",
                QuantizationMode::Marginal => "marginal",
            },
            cells: self.grid.len(),
            steps,
            rho,
            rmse_state: state_rmse(&trace.iter().map(|r| r.estimate.clone()).collect::<Vec<_>>(), &truth_rows),
            rmse_baseline: state_rmse(&baseline, &truth_rows),
            rmse_map: maps.iter().map(|m| MapMetric { t: m.t, rmse: rmse(&m.predicted, &m.truth) }).collect(),
            resets: session.resets().to_vec(),
            patched_columns: 0,
            visited_fraction: None,
            runtime_s: Runtimes { tracking, maps: map_time, ..Runtimes::default() },
            config: ScenarioConfig { seed, ..self.config.clone() },
        };
        Ok(RunOutput { trace, baseline, maps, metrics, transition })
    }
}

/// Measurement-free estimates `X P^(t + rho) E_0` for `t = 0 ..= steps`.
pub fn prior_baseline(
    transition: &TransitionMatrix,
    grid: &GridSpec,
    initial: &Belief,
    steps: usize,
    rho: usize,
) -> Vec<Vec<f64>> {
    let readout = grid.reconstruction_matrix().into_inner() * matrix_power(transition, rho);
    let mut e = initial.weights().clone();
    let mut out = Vec::with_capacity(steps + 1);
    for t in 0..=steps {
        if t > 0 {
            e = transition.matrix() * &e;
        }
        out.push((&readout * &e).iter().copied().collect());
    }
    out
}

pub fn rmse(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

/// Per-coordinate RMSE over rows `1..`, skipping the prior row `0`.
pub fn state_rmse(estimates: &[Vec<f64>], truth: &[Vec<f64>]) -> Option<Vec<f64>> {
    if estimates.len() < 2 {
        return None;
    }
    let dim = estimates[0].len();
    Some(
        (0..dim)
            .map(|m| {
                let e: Vec<f64> = estimates[1..].iter().map(|r| r[m]).collect();
                let x: Vec<f64> = truth[1..].iter().map(|r| r[m]).collect();
                rmse(&e, &x)
            })
            .collect(),
    )
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub cells_per_dim: usize,
    /// RMSE of the tracked coordinate, one entry per seed.
    pub rmse: Vec<f64>,
    pub median: f64,
}

/// Tracking RMSE of state coordinate `coordinate` for several grid
/// resolutions. Each seed's truth and measurements are generated once and
/// shared by every resolution.
pub fn l_sweep(
    config: &ScenarioConfig,
    cells_per_dim: &[usize],
    seeds: &[u64],
    coordinate: usize,
) -> Result<Vec<SweepPoint>> {
    let base = Experiment::new(ScenarioConfig { snapshots: Vec::new(), ..config.clone() })?;
    let experiments = cells_per_dim
        .iter()
        .map(|&l| {
            let mut c = base.config.clone();
            c.grid.cells = vec![l; c.grid.lower.len()];
            Experiment::new(c)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut table = vec![Vec::with_capacity(seeds.len()); cells_per_dim.len()];
    for &seed in seeds {
        let sim = base.simulate(seed)?;
        for (k, exp) in experiments.iter().enumerate() {
            let p = exp.estimate_transition(seed)?.transition;
            let out = exp.track(&sim, p, seed)?;
            let r = out.metrics.rmse_state.as_ref().map(|r| r[coordinate]).unwrap_or(f64::NAN);
            table[k].push(r);
        }
    }
    Ok(cells_per_dim
        .iter()
        .zip(table)
        .map(|(&l, rmse)| SweepPoint { cells_per_dim: l, median: median(&rmse), rmse })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ScenarioConfig {
        let mut c = ScenarioConfig::default();
        c.grid.cells = vec![6, 6];
        c.steps = 12;
        c.snapshots = vec![6, 12];
        c.queries.nx = 8;
        c.queries.ny = 8;
        c.scene.sensors = SensorConfig::RandomLattice { count: 5 };
        c.transition.samples_per_cell = 500;
        c
    }

    #[test]
    fn run_shapes_and_determinism() {
        let exp = Experiment::new(small()).unwrap();
        let a = exp.run(3).unwrap();
        let b = exp.run(3).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.maps, b.maps);
        assert_eq!(a.trace.len(), 13);
        assert_eq!(a.baseline.len(), 13);
        assert_eq!(a.maps.len(), 2);
        assert_eq!(a.maps[0].truth.len(), 64);
        assert_eq!(a.metrics.rmse_state.as_ref().unwrap().len(), 2);
        assert!(a.metrics.rmse_map.iter().all(|m| m.rmse >= 0.0 && m.rmse.is_finite()));
        assert_ne!(exp.run(4).unwrap().trace, a.trace);
    }

    #[test]
    fn sensors_are_distinct_lattice_points() {
        let exp = Experiment::new(small()).unwrap();
        let (points, idx) = exp.place_sensors(9);
        let idx = idx.unwrap();
        assert_eq!(idx.len(), 5);
        assert_eq!(idx.iter().collect::<BTreeSet<_>>().len(), 5);
        for (p, &i) in points.iter().zip(&idx) {
            assert_eq!(*p, exp.lattice()[i]);
        }
    }

    #[test]
    fn lattice_shortcut_matches_generic_sampler_in_law() {
        // Same marginal variance at a query point far from every sensor.
        let mut c = small();
        c.queries.nx = 4;
        c.queries.ny = 4;
        let exp = Experiment::new(c).unwrap();
        let (sensors, idx) = exp.place_sensors(1);
        let scene = exp.scene(sensors).unwrap();
        let x = [2.0, 25.3];
        let mut rng = substream(5, 0);
        let n = 4000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let (_, f) = exp.draw_field(&scene, idx.as_deref(), 1, &x, &mut rng).unwrap();
            let (_, g) = exp.draw_field(&scene, None, 1, &x, &mut rng).unwrap();
            let mean = scene.alpha_at(&exp.lattice()[0]).unwrap() * 2.0;
            s1 += (f[0] - mean).powi(2);
            s2 += (g[0] - mean).powi(2);
        }
        let (v1, v2) = (s1 / n as f64, s2 / n as f64);
        assert!((v1 - 25.3).abs() < 2.0, "{v1}");
        assert!((v2 - 25.3).abs() < 2.0, "{v2}");
    }

    #[test]
    fn zero_steps_gives_prior_row_only() {
        let mut c = small();
        c.steps = 0;
        c.snapshots.clear();
        let out = Experiment::new(c).unwrap().run(1).unwrap();
        assert_eq!(out.trace.len(), 1);
        assert_eq!(out.trace[0].t, 0);
        assert!(out.metrics.rmse_state.is_none());
    }

    #[test]
    fn baseline_is_prior_propagation() {
        let exp = Experiment::new(small()).unwrap();
        let p = exp.estimate_transition(2).unwrap().transition;
        let e0 = exp.initial_belief(2).unwrap();
        let b = prior_baseline(&p, exp.grid(), &e0, 3, 2);
        let x = exp.grid().reconstruction_matrix().into_inner();
        let expected = &x * matrix_power(&p, 5) * e0.weights();
        for m in 0..2 {
            assert!((b[3][m] - expected[m]).abs() < 1e-12);
        }
    }

    #[test]
    fn baseline_identity_chain_stays_put() {
        let grid = GridSpec::new(vec![0.0], vec![3.0], vec![3]).unwrap();
        let p = TransitionMatrix::identity(3, QuantizationMode::Markovian);
        let b = prior_baseline(&p, &grid, &Belief::one_hot(3, 1).unwrap(), 20, 4);
        assert!(b.iter().all(|r| r == &vec![1.5]));
    }

    #[test]
    fn baseline_converges_to_stationary_mean() {
        // stationary law of [[0.9, 0.3], [0.1, 0.7]] is (0.75, 0.25)
        let grid = GridSpec::new(vec![0.0], vec![2.0], vec![2]).unwrap();
        let p = TransitionMatrix::new(DMatrix::from_row_slice(2, 2, &[0.9, 0.3, 0.1, 0.7]), QuantizationMode::Marginal)
            .unwrap();
        let b = prior_baseline(&p, &grid, &Belief::one_hot(2, 1).unwrap(), 200, 0);
        assert_eq!(b[0], vec![1.5]);
        assert!((b[200][0] - (0.75 * 0.5 + 0.25 * 1.5)).abs() < 1e-12);
    }

    #[test]
    fn sweep_singleton_gives_one_row() {
        let mut c = small();
        c.steps = 5;
        let rows = l_sweep(&c, &[4], &[1, 2, 3], 0).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].rmse.len(), 3);
        assert_eq!(rows[0].median, median(&rows[0].rmse));
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
