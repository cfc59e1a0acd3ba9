//! Hidden state dynamics and their finite-state approximations.
//!
//! A [`StateDynamics`] is a stationary transition mapping `x' = f(x, w)` with
//! white driving noise `w`. Quantizing it on a [`GridSpec`] yields a
//! column-stochastic [`TransitionMatrix`], either by pushing each cell center
//! through one step of the dynamics (Markovian quantization) or by counting
//! cell-to-cell moves along simulated trajectories (marginal quantization).

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::seeding::substream;

/// Column sums of a transition matrix and belief totals must be within this of 1.
pub const STOCHASTIC_TOL: f64 = 1e-12;

pub trait StateDynamics: Sync {
    /// State dimension `M`.
    fn dim(&self) -> usize;

    /// Number of scalar noise components drawn per step.
    fn noise_dim(&self) -> usize;

    fn sample_noise(&self, rng: &mut dyn RngCore, w: &mut [f64]);

    /// One transition; must be a pure function of `(x, w)`.
    fn step(&self, x: &[f64], w: &[f64], next: &mut [f64]);

    /// The initial state when it is known exactly.
    fn fixed_initial(&self) -> Option<Vec<f64>>;

    /// Draws an initial state. Defaults to the fixed initial state.
    fn sample_initial(&self, _rng: &mut dyn RngCore) -> Vec<f64> {
        self.fixed_initial().expect("dynamics without a fixed initial state must implement sample_initial")
    }
}

/// Coupled path-loss / shadowing-power dynamics driven by a single clipped
/// Gaussian noise draw per step:
///
/// ```text
/// x1' = tanh(g (x1 - 2)) + w + 2
/// x2' = 0.3 |tanh(sin(g x2 w) + x2 w) + w| + 25
/// ```
///
/// with `w = clip(n, -1, 1)`, `n ~ N(0, 1)`. The first coordinate stays in
/// `[0, 4]` and the second in `[25, 25.6]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledTanhDynamics {
    pub gamma: f64,
    pub initial: [f64; 2],
}

impl CoupledTanhDynamics {
    pub const DEFAULT_GAMMA: f64 = 1.6;
    pub const DEFAULT_INITIAL: [f64; 2] = [2.0, 25.3];
}

impl Default for CoupledTanhDynamics {
    fn default() -> Self {
        Self { gamma: Self::DEFAULT_GAMMA, initial: Self::DEFAULT_INITIAL }
    }
}

impl StateDynamics for CoupledTanhDynamics {
    fn dim(&self) -> usize {
        2
    }

    fn noise_dim(&self) -> usize {
        1
    }

    fn sample_noise(&self, rng: &mut dyn RngCore, w: &mut [f64]) {
        let n: f64 = rng.sample(StandardNormal);
        w[0] = n.clamp(-1.0, 1.0);
    }

    fn step(&self, x: &[f64], w: &[f64], next: &mut [f64]) {
        let g = self.gamma;
        let w = w[0];
        next[0] = (g * (x[0] - 2.0)).tanh() + w + 2.0;
        next[1] = 0.3 * (((g * x[1] * w).sin() + x[1] * w).tanh() + w).abs() + 25.0;
    }

    fn fixed_initial(&self) -> Option<Vec<f64>> {
        Some(self.initial.to_vec())
    }
}

/// `x' = x`, started from a fixed state.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityDynamics {
    pub initial: Vec<f64>,
}

impl StateDynamics for IdentityDynamics {
    fn dim(&self) -> usize {
        self.initial.len()
    }

    fn noise_dim(&self) -> usize {
        0
    }

    fn sample_noise(&self, _rng: &mut dyn RngCore, _w: &mut [f64]) {}

    fn step(&self, x: &[f64], _w: &[f64], next: &mut [f64]) {
        next.copy_from_slice(x);
    }

    fn fixed_initial(&self) -> Option<Vec<f64>> {
        Some(self.initial.clone())
    }
}

/// A finite Markov chain whose states are explicit points in state space.
///
/// `matrix[(i, j)]` is the probability of moving from point `j` to point `i`.
/// The noise is one uniform draw on `[0, 1)` used for inverse-CDF selection
/// of the next point. A state that is not exactly one of the points moves
/// from its nearest point.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteChainDynamics {
    points: Vec<Vec<f64>>,
    matrix: DMatrix<f64>,
    initial: usize,
}

impl FiniteChainDynamics {
    pub fn new(points: Vec<Vec<f64>>, matrix: DMatrix<f64>, initial: usize) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(Error::Invalid("finite chain needs at least one point".into()));
        }
        let dim = points[0].len();
        if dim == 0 || points.iter().any(|p| p.len() != dim) {
            return Err(Error::Invalid("finite chain points must share a nonzero dimension".into()));
        }
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: matrix.nrows() });
        }
        check_column_stochastic(&matrix)?;
        if initial >= n {
            return Err(Error::CellOutOfRange { index: initial, cells: n });
        }
        Ok(Self { points, matrix, initial })
    }

    /// Two-state chain that flips with probability `flip` each step.
    pub fn two_state(a: Vec<f64>, b: Vec<f64>, flip: f64, initial: usize) -> Result<Self> {
        let m = DMatrix::from_row_slice(2, 2, &[1.0 - flip, flip, flip, 1.0 - flip]);
        Self::new(vec![a, b], m, initial)
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    fn nearest(&self, x: &[f64]) -> usize {
        let dist = |p: &Vec<f64>| p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (k, p) in self.points.iter().enumerate() {
            let d = dist(p);
            if d < best_d {
                best = k;
                best_d = d;
            }
        }
        best
    }
}

impl StateDynamics for FiniteChainDynamics {
    fn dim(&self) -> usize {
        self.points[0].len()
    }

    fn noise_dim(&self) -> usize {
        1
    }

    fn sample_noise(&self, rng: &mut dyn RngCore, w: &mut [f64]) {
        w[0] = rng.random::<f64>();
    }

    fn step(&self, x: &[f64], w: &[f64], next: &mut [f64]) {
        let from = self.nearest(x);
        let column = self.matrix.column(from);
        let mut acc = 0.0;
        let mut to = self.points.len() - 1;
        for (i, &p) in column.iter().enumerate() {
            acc += p;
            if w[0] < acc {
                to = i;
                break;
            }
        }
        next.copy_from_slice(&self.points[to]);
    }

    fn fixed_initial(&self) -> Option<Vec<f64>> {
        Some(self.points[self.initial].clone())
    }
}

/// Dynamics assembled from closures, for ad-hoc models.
pub struct FnDynamics<S, N, I> {
    dim: usize,
    noise_dim: usize,
    step: S,
    noise: N,
    initial: I,
    fixed: Option<Vec<f64>>,
}

impl<S, N, I> FnDynamics<S, N, I>
where
    S: Fn(&[f64], &[f64], &mut [f64]) + Sync,
    N: Fn(&mut dyn RngCore, &mut [f64]) + Sync,
    I: Fn(&mut dyn RngCore) -> Vec<f64> + Sync,
{
    /// `initial` draws the starting state; pass `fixed` when it is deterministic.
    pub fn new(dim: usize, noise_dim: usize, step: S, noise: N, initial: I, fixed: Option<Vec<f64>>) -> Self {
        Self { dim, noise_dim, step, noise, initial, fixed }
    }
}

impl<S, N, I> StateDynamics for FnDynamics<S, N, I>
where
    S: Fn(&[f64], &[f64], &mut [f64]) + Sync,
    N: Fn(&mut dyn RngCore, &mut [f64]) + Sync,
    I: Fn(&mut dyn RngCore) -> Vec<f64> + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    fn sample_noise(&self, rng: &mut dyn RngCore, w: &mut [f64]) {
        (self.noise)(rng, w)
    }

    fn step(&self, x: &[f64], w: &[f64], next: &mut [f64]) {
        (self.step)(x, w, next)
    }

    fn fixed_initial(&self) -> Option<Vec<f64>> {
        self.fixed.clone()
    }

    fn sample_initial(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        match &self.fixed {
            Some(x) => x.clone(),
            None => (self.initial)(rng),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QuantizationMode {
    Markovian,
    Marginal,
}

impl QuantizationMode {
    pub fn tag(self) -> u32 {
        match self {
            QuantizationMode::Markovian => 0,
            QuantizationMode::Marginal => 1,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            0 => Some(QuantizationMode::Markovian),
            1 => Some(QuantizationMode::Marginal),
            _ => None,
        }
    }
}

fn check_column_stochastic(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::InvalidTransition(format!("{}x{} is not square", m.nrows(), m.ncols())));
    }
    for (j, col) in m.column_iter().enumerate() {
        if let Some(v) = col.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidTransition(format!("column {j} has entry {v} outside [0, 1]")));
        }
        let s: f64 = col.iter().sum();
        if (s - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::InvalidTransition(format!("column {j} sums to {s}")));
        }
    }
    Ok(())
}

/// Column-stochastic matrix: entry `(i, j)` is `P(next cell = i | current cell = j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    entries: DMatrix<f64>,
    mode: QuantizationMode,
}

impl TransitionMatrix {
    pub fn new(entries: DMatrix<f64>, mode: QuantizationMode) -> Result<Self> {
        check_column_stochastic(&entries)?;
        Ok(Self { entries, mode })
    }

    pub fn identity(n: usize, mode: QuantizationMode) -> Self {
        Self { entries: DMatrix::identity(n, n), mode }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn mode(&self) -> QuantizationMode {
        self.mode
    }

    /// Number of cells `L_S`.
    pub fn len(&self) -> usize {
        self.entries.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.nrows() == 0
    }

    /// Largest deviation of a column sum from 1.
    pub fn max_column_defect(&self) -> f64 {
        self.entries.column_iter().map(|c| (c.sum() - 1.0).abs()).fold(0.0, f64::max)
    }
}

/// Normalized posterior weights over grid cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    weights: DVector<f64>,
}

impl Belief {
    pub fn new(weights: DVector<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidBelief("empty weight vector".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::InvalidBelief(format!("weight {w} is negative or non-finite")));
        }
        let s = weights.sum();
        if (s - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::InvalidBelief(format!("weights sum to {s}")));
        }
        Ok(Self { weights })
    }

    /// Normalizes nonnegative weights; fails when their total is zero or not finite.
    pub fn from_unnormalized(mut weights: DVector<f64>) -> Result<Self> {
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidBelief("weights must be finite and nonnegative".into()));
        }
        let s = weights.sum();
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidBelief(format!("cannot normalize weights with total {s}")));
        }
        weights /= s;
        Ok(Self { weights })
    }

    pub fn one_hot(n: usize, k: usize) -> Result<Self> {
        if k >= n {
            return Err(Error::CellOutOfRange { index: k, cells: n });
        }
        let mut w = DVector::zeros(n);
        w[k] = 1.0;
        Ok(Self { weights: w })
    }

    pub fn uniform(n: usize) -> Self {
        Self { weights: DVector::from_element(n, 1.0 / n as f64) }
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.weights
    }
}

fn cell_of_step(
    dynamics: &dyn StateDynamics,
    grid: &GridSpec,
    x: &[f64],
    w: &mut [f64],
    next: &mut [f64],
    rng: &mut dyn RngCore,
) -> Result<usize> {
    dynamics.sample_noise(rng, w);
    dynamics.step(x, w, next);
    grid.cell_index(next)
}

fn check_dims(dynamics: &dyn StateDynamics, grid: &GridSpec) -> Result<()> {
    if dynamics.dim() != grid.dims() {
        return Err(Error::DimensionMismatch { expected: grid.dims(), got: dynamics.dim() });
    }
    Ok(())
}

/// Markovian quantization: column `j` is the empirical law of the cell reached
/// in one step from the center of cell `j`. Cell `j` draws its noise from
/// substream `j` of `seed`.
pub fn estimate_transition_markovian(
    dynamics: &dyn StateDynamics,
    grid: &GridSpec,
    samples_per_cell: usize,
    seed: u64,
) -> Result<TransitionMatrix> {
    check_dims(dynamics, grid)?;
    if samples_per_cell == 0 {
        return Err(Error::Invalid("samples_per_cell must be at least 1".into()));
    }
    let n = grid.len();
    let columns: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| -> Result<Vec<f64>> {
            let mut rng = substream(seed, j as u64);
            let center = grid.center(j)?;
            let mut w = vec![0.0; dynamics.noise_dim()];
            let mut next = vec![0.0; dynamics.dim()];
            let mut counts = vec![0u64; n];
            for _ in 0..samples_per_cell {
                counts[cell_of_step(dynamics, grid, &center, &mut w, &mut next, &mut rng)?] += 1;
            }
            let total = samples_per_cell as f64;
            Ok(counts.into_iter().map(|c| c as f64 / total).collect())
        })
        .collect::<Result<_>>()?;
    let entries = DMatrix::from_fn(n, n, |i, j| columns[j][i]);
    TransitionMatrix::new(entries, QuantizationMode::Markovian)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginalEstimate {
    pub transition: TransitionMatrix,
    /// Columns that were never visited and were replaced by the uniform law.
    pub patched_columns: Vec<usize>,
    /// Fraction of cells that appear as a source of at least one transition.
    pub visited_fraction: f64,
}

/// Marginal quantization: counts cell-to-cell moves of `n_paths` independent
/// trajectories of `path_length` states each. Path `k` uses substream `k`.
pub fn estimate_transition_marginal(
    dynamics: &dyn StateDynamics,
    grid: &GridSpec,
    n_paths: usize,
    path_length: usize,
    seed: u64,
) -> Result<MarginalEstimate> {
    check_dims(dynamics, grid)?;
    if n_paths == 0 || path_length < 2 {
        return Err(Error::Invalid("need n_paths >= 1 and path_length >= 2".into()));
    }
    let n = grid.len();
    let counts = (0..n_paths)
        .into_par_iter()
        .map(|k| -> Result<Vec<(usize, usize)>> {
            let mut rng = substream(seed, k as u64);
            let mut x = dynamics.sample_initial(&mut rng);
            let mut from = grid.cell_index(&x)?;
            let mut w = vec![0.0; dynamics.noise_dim()];
            let mut next = vec![0.0; dynamics.dim()];
            let mut moves = Vec::with_capacity(path_length - 1);
            for _ in 1..path_length {
                let to = cell_of_step(dynamics, grid, &x, &mut w, &mut next, &mut rng)?;
                moves.push((from, to));
                std::mem::swap(&mut x, &mut next);
                from = to;
            }
            Ok(moves)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .fold(vec![0u64; n * n], |mut acc, (from, to)| {
            acc[from * n + to] += 1;
            acc
        });

    let mut entries = DMatrix::zeros(n, n);
    let mut patched = Vec::new();
    for j in 0..n {
        let col = &counts[j * n..(j + 1) * n];
        let total: u64 = col.iter().sum();
        if total == 0 {
            patched.push(j);
            entries.column_mut(j).fill(1.0 / n as f64);
        } else {
            for (i, &c) in col.iter().enumerate() {
                entries[(i, j)] = c as f64 / total as f64;
            }
        }
    }
    let visited_fraction = (n - patched.len()) as f64 / n as f64;
    Ok(MarginalEstimate {
        transition: TransitionMatrix::new(entries, QuantizationMode::Marginal)?,
        patched_columns: patched,
        visited_fraction,
    })
}

/// Expected one-hot embedding of the quantized initial state. A fixed initial
/// state gives an exact one-hot vector and ignores `n_samples`.
pub fn initial_belief(
    dynamics: &dyn StateDynamics,
    grid: &GridSpec,
    n_samples: usize,
    rng: &mut dyn RngCore,
) -> Result<Belief> {
    check_dims(dynamics, grid)?;
    if let Some(x) = dynamics.fixed_initial() {
        return Belief::one_hot(grid.len(), grid.cell_index(&x)?);
    }
    if n_samples == 0 {
        return Err(Error::Invalid("n_samples must be at least 1".into()));
    }
    let mut counts = DVector::<f64>::zeros(grid.len());
    for _ in 0..n_samples {
        let x = dynamics.sample_initial(rng);
        counts[grid.cell_index(&x)?] += 1.0;
    }
    Belief::from_unnormalized(counts)
}

/// `P^rho` by binary exponentiation; `P^0` is the identity.
pub fn matrix_power(p: &TransitionMatrix, rho: usize) -> DMatrix<f64> {
    let n = p.len();
    let mut result = DMatrix::identity(n, n);
    let mut base = p.matrix().clone();
    let mut e = rho;
    while e > 0 {
        if e & 1 == 1 {
            result = &base * &result;
        }
        e >>= 1;
        if e > 0 {
            base = &base * &base;
        }
    }
    result
}

/// States `x_0 .. x_steps` of one trajectory.
pub fn simulate_trajectory(dynamics: &dyn StateDynamics, steps: usize, rng: &mut dyn RngCore) -> Vec<Vec<f64>> {
    let mut path = Vec::with_capacity(steps + 1);
    path.push(dynamics.sample_initial(rng));
    let mut w = vec![0.0; dynamics.noise_dim()];
    for t in 0..steps {
        let mut next = vec![0.0; dynamics.dim()];
        dynamics.sample_noise(rng, &mut w);
        dynamics.step(&path[t], &w, &mut next);
        path.push(next);
    }
    path
}
