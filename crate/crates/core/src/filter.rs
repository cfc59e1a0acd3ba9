//! Grid-based recursive filter for the channel state.
//!
//! The belief over grid cells evolves as `E_t = normalize(lambda_t .* (P E_{t-1}))`
//! and the state estimate `rho` steps ahead is `X P^rho E_t`, where `X` holds
//! the cell centers and `lambda_t` the Gaussian observation densities of each
//! cell.

use std::borrow::Cow;
use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::channel::{gaussian_unnormalized_loglik, ChannelScene, CovFactor, ObservationBatch};
use crate::error::{Error, Result};
use crate::grid::{GridSpec, ReconstructionMatrix};
use crate::markov::{matrix_power, Belief, TransitionMatrix};

/// Largest number of cell paths [`brute_force_posterior`] will enumerate.
pub const ENUMERATION_BUDGET: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
struct CellChannel {
    mu: f64,
    theta: Vec<f64>,
}

/// Observation covariance factors of every cell, shared between cells with
/// identical kernel parameters. Valid only for static sensors.
#[derive(Debug, Clone)]
struct FactorCache {
    factors: Vec<CovFactor>,
    cell_factor: Vec<usize>,
}

impl FactorCache {
    fn build(scene: &ChannelScene, cells: &[CellChannel]) -> Result<Self> {
        let mut by_theta: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut factors = Vec::new();
        let mut cell_factor = Vec::with_capacity(cells.len());
        for cell in cells {
            let key: Vec<u64> = cell.theta.iter().map(|v| v.to_bits()).collect();
            let k = match by_theta.get(&key) {
                Some(&k) => k,
                None => {
                    factors.push(CovFactor::new(&scene.build_obs_covariance(0, &cell.theta)?)?);
                    by_theta.insert(key, factors.len() - 1);
                    factors.len() - 1
                }
            };
            cell_factor.push(k);
        }
        Ok(Self { factors, cell_factor })
    }
}

/// One record of [`FilterSession::run_tracking`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrackPoint {
    /// Time of the observation just absorbed; `None` for the prior record.
    pub t: Option<usize>,
    pub belief: Belief,
    /// State estimate `rho` steps ahead of `t`.
    pub estimate: DVector<f64>,
    /// The belief was reset to uniform at this step.
    pub reset: bool,
}

/// Outcome of a single filter update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepReport {
    pub reset: bool,
}

#[derive(Debug, Clone)]
pub struct FilterSession {
    grid: GridSpec,
    points: ReconstructionMatrix,
    transition: TransitionMatrix,
    rho: usize,
    p_rho: DMatrix<f64>,
    points_p_rho: DMatrix<f64>,
    belief: Belief,
    scene: ChannelScene,
    cells: Vec<CellChannel>,
    cache: Option<FactorCache>,
    resets: Vec<usize>,
}

impl FilterSession {
    /// Sets up the filter at time `-1` with belief `initial`. Factorizations of
    /// the per-cell observation covariances are precomputed when the sensors
    /// are static.
    pub fn new(
        grid: GridSpec,
        transition: TransitionMatrix,
        initial: Belief,
        scene: ChannelScene,
        rho: usize,
    ) -> Result<Self> {
        let n = grid.len();
        if transition.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: transition.len() });
        }
        if initial.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: initial.len() });
        }
        scene.state_map().validate(grid.dims(), scene.kernel())?;
        let points = grid.reconstruction_matrix();
        let cells = (0..n)
            .map(|l| {
                let x = points.point(l);
                let theta = scene.state_map().theta(&x);
                scene.kernel().validate(&theta)?;
                Ok(CellChannel { mu: scene.state_map().mu(&x), theta })
            })
            .collect::<Result<Vec<_>>>()?;
        let cache = if scene.is_static() { Some(FactorCache::build(&scene, &cells)?) } else { None };
        let p_rho = matrix_power(&transition, rho);
        let points_p_rho = points.matrix() * &p_rho;
        Ok(Self {
            grid,
            points,
            transition,
            rho,
            p_rho,
            points_p_rho,
            belief: initial,
            scene,
            cells,
            cache,
            resets: Vec::new(),
        })
    }

    /// Turns the factorization cache on or off. Enabling it on a scene with
    /// moving sensors is an error.
    pub fn set_caching(&mut self, enabled: bool) -> Result<()> {
        if !enabled {
            self.cache = None;
        } else if self.cache.is_none() {
            if !self.scene.is_static() {
                return Err(Error::InvalidScene("cannot cache factorizations for moving sensors".into()));
            }
            self.cache = Some(FactorCache::build(&self.scene, &self.cells)?);
        }
        Ok(())
    }

    pub fn is_cached(&self) -> bool {
        self.cache.is_some()
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn points(&self) -> &ReconstructionMatrix {
        &self.points
    }

    pub fn transition(&self) -> &TransitionMatrix {
        &self.transition
    }

    pub fn rho(&self) -> usize {
        self.rho
    }

    pub fn p_rho(&self) -> &DMatrix<f64> {
        &self.p_rho
    }

    pub fn scene(&self) -> &ChannelScene {
        &self.scene
    }

    pub fn belief(&self) -> &Belief {
        &self.belief
    }

    /// Time indices at which the belief was reset to uniform.
    pub fn resets(&self) -> &[usize] {
        &self.resets
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    /// Path-loss exponent at the center of cell `l`.
    pub fn cell_mu(&self, l: usize) -> f64 {
        self.cells[l].mu
    }

    /// Kernel parameters at the center of cell `l`.
    pub fn cell_theta(&self, l: usize) -> &[f64] {
        &self.cells[l].theta
    }

    /// Factor of `C_t` at the center of cell `l`, from the cache when present.
    pub fn cell_factor(&self, l: usize, t: usize) -> Result<Cow<'_, CovFactor>> {
        match &self.cache {
            Some(c) => Ok(Cow::Borrowed(&c.factors[c.cell_factor[l]])),
            None => Ok(Cow::Owned(CovFactor::new(&self.scene.build_obs_covariance(t, &self.cells[l].theta)?)?)),
        }
    }

    fn check_observation(&self, obs: &ObservationBatch) -> Result<()> {
        let n = self.scene.n_sensors();
        if obs.y.len() != n || obs.alpha.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: obs.y.len() });
        }
        Ok(())
    }

    /// Unnormalized Gaussian log-density of `obs` under every cell.
    pub fn log_likelihoods(&self, obs: &ObservationBatch) -> Result<Vec<f64>> {
        self.check_observation(obs)?;
        (0..self.cells.len())
            .into_par_iter()
            .map(|l| {
                let residual = &obs.y - &obs.alpha * self.cells[l].mu;
                Ok(self.cell_factor(l, obs.t)?.loglik(&residual))
            })
            .collect()
    }

    /// Cell likelihoods rescaled so that the largest entry is exactly 1.
    pub fn likelihood_vector(&self, obs: &ObservationBatch) -> Result<DVector<f64>> {
        let logs = self.log_likelihoods(obs)?;
        let max_log = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max_log.is_finite() {
            return Err(Error::DegenerateLikelihood { max_log });
        }
        Ok(DVector::from_iterator(logs.len(), logs.iter().map(|v| (v - max_log).exp())))
    }

    /// Propagates the belief through `P` and reweights by `likelihood`. An
    /// all-zero posterior resets the belief to uniform.
    pub fn update_with_likelihood(&mut self, t: usize, likelihood: &DVector<f64>) -> Result<StepReport> {
        if likelihood.len() != self.cells.len() {
            return Err(Error::DimensionMismatch { expected: self.cells.len(), got: likelihood.len() });
        }
        let predicted = self.transition.matrix() * self.belief.weights();
        let posterior = predicted.component_mul(likelihood);
        let total = posterior.sum();
        if !(total > 0.0 && total.is_finite()) {
            self.belief = Belief::uniform(self.cells.len());
            self.resets.push(t);
            return Ok(StepReport { reset: true });
        }
        self.belief = Belief::from_unnormalized(posterior)?;
        Ok(StepReport { reset: false })
    }

    pub fn step(&mut self, obs: &ObservationBatch) -> Result<StepReport> {
        let lambda = self.likelihood_vector(obs)?;
        self.update_with_likelihood(obs.t, &lambda)
    }

    /// `X P^rho E_t`.
    pub fn estimate(&self) -> DVector<f64> {
        &self.points_p_rho * self.belief.weights()
    }

    /// `X P^h E_t` for an arbitrary horizon `h`.
    pub fn estimate_at_horizon(&self, horizon: usize) -> DVector<f64> {
        if horizon == self.rho {
            return self.estimate();
        }
        let xp = self.points.matrix() * matrix_power(&self.transition, horizon);
        xp * self.belief.weights()
    }

    /// `Phi P^rho E_t`, where column `l` of `phi` is a functional evaluated at
    /// the center of cell `l`.
    pub fn functional_estimate(&self, phi: &DMatrix<f64>) -> Result<DVector<f64>> {
        if phi.ncols() != self.cells.len() {
            return Err(Error::DimensionMismatch { expected: self.cells.len(), got: phi.ncols() });
        }
        Ok((phi * &self.p_rho) * self.belief.weights())
    }

    /// Runs the filter over time-ordered observations. The first record holds
    /// the prior estimate before any observation.
    pub fn run_tracking(&mut self, observations: &[ObservationBatch]) -> Result<Vec<TrackPoint>> {
        let mut out = Vec::with_capacity(observations.len() + 1);
        out.push(TrackPoint { t: None, belief: self.belief.clone(), estimate: self.estimate(), reset: false });
        for obs in observations {
            let report = self.step(obs)?;
            out.push(TrackPoint {
                t: Some(obs.t),
                belief: self.belief.clone(),
                estimate: self.estimate(),
                reset: report.reset,
            });
        }
        Ok(out)
    }
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Exact filtering posterior of the quantized chain, by enumerating every cell
/// path and marginalizing its final cell. Entry `k` of the result conditions
/// on `observations[..=k]`.
pub fn brute_force_posterior(
    grid: &GridSpec,
    transition: &TransitionMatrix,
    scene: &ChannelScene,
    observations: &[ObservationBatch],
    initial: &Belief,
) -> Result<Vec<Belief>> {
    let n = grid.len();
    let horizon = observations.len();
    let paths = (n as f64).powi(horizon as i32);
    if paths > ENUMERATION_BUDGET as f64 {
        return Err(Error::EnumerationBudget { paths, budget: ENUMERATION_BUDGET });
    }
    if transition.len() != n || initial.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: transition.len() });
    }
    let points = grid.reconstruction_matrix();
    let map = scene.state_map();

    let mut log_lik = Vec::with_capacity(horizon);
    for obs in observations {
        let mut row = Vec::with_capacity(n);
        for l in 0..n {
            let x = points.point(l);
            let c = scene.build_obs_covariance(obs.t, &map.theta(&x))?;
            let mean = &obs.alpha * map.mu(&x);
            row.push(gaussian_unnormalized_loglik(&obs.y, &mean, &c)?);
        }
        log_lik.push(row);
    }

    let p = transition.matrix();
    let first: Vec<f64> = (0..n).map(|i| (0..n).map(|j| p[(i, j)] * initial.weights()[j]).sum::<f64>().ln()).collect();

    let mut out = Vec::with_capacity(horizon);
    for k in 0..horizon {
        let mut terminal: Vec<Vec<f64>> = vec![Vec::new(); n];
        let mut path = vec![0usize; k + 1];
        let count = n.pow(k as u32 + 1);
        for code in 0..count {
            let mut c = code;
            for slot in path.iter_mut() {
                *slot = c % n;
                c /= n;
            }
            let mut w = first[path[0]] + log_lik[0][path[0]];
            for s in 1..=k {
                w += p[(path[s], path[s - 1])].ln() + log_lik[s][path[s]];
            }
            terminal[path[k]].push(w);
        }
        let logs: Vec<f64> = terminal.iter().map(|v| log_sum_exp(v)).collect();
        let total = log_sum_exp(&logs);
        if !total.is_finite() {
            return Err(Error::DegenerateLikelihood { max_log: total });
        }
        out.push(Belief::from_unnormalized(DVector::from_iterator(n, logs.iter().map(|v| (v - total).exp())))?);
    }
    Ok(out)
}
