//! Log-domain channel observation model.
//!
//! Conditionally on the channel state `x`, the measurement at sensor `i` is
//!
//! ```text
//! y_i = alpha_i * mu(x) + s_i + xi_i,    alpha_i = -10 log10 |p_i - p_ref|
//! ```
//!
//! where the shadowing `s` is a zero-mean Gaussian field with isotropic
//! covariance `R(d, theta(x))` and `xi` is white Gaussian multipath noise with
//! variance `sigma_xi_sq`. Gains are in dB and distances in meters.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Smallest admissible distance between a sensor (or query point) and the
/// reference antenna.
pub const MIN_DISTANCE: f64 = 1e-6;

/// Relative diagonal jitter applied when a shadowing covariance is only
/// positive semidefinite (coincident points).
pub const JITTER: f64 = 1e-10;

pub type Point = [f64; 2];

pub fn distance(a: &Point, b: &Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Isotropic shadowing autocorrelation kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Kernel {
    /// `theta[0] * exp(-d / theta[1])`: shadowing power and correlation distance.
    #[default]
    ExponentialIsotropic,
}

impl Kernel {
    pub fn arity(self) -> usize {
        match self {
            Kernel::ExponentialIsotropic => 2,
        }
    }

    pub fn validate(self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.arity() {
            return Err(Error::InvalidKernel(format!("expected {} parameters, got {}", self.arity(), theta.len())));
        }
        match self {
            Kernel::ExponentialIsotropic => {
                if !(theta[0] >= 0.0 && theta[0].is_finite()) {
                    return Err(Error::InvalidKernel(format!("shadowing power {} < 0", theta[0])));
                }
                if !(theta[1] > 0.0 && theta[1].is_finite()) {
                    return Err(Error::InvalidKernel(format!("correlation distance {} must be positive", theta[1])));
                }
            }
        }
        Ok(())
    }

    pub fn eval(self, d: f64, theta: &[f64]) -> Result<f64> {
        self.validate(theta)?;
        if d.is_nan() || d < 0.0 {
            return Err(Error::InvalidKernel(format!("negative distance {d}")));
        }
        Ok(self.amplitude(theta) * self.correlation(d, theta))
    }

    /// Value at distance zero (the marginal shadowing variance).
    pub fn amplitude(self, theta: &[f64]) -> f64 {
        match self {
            Kernel::ExponentialIsotropic => theta[0],
        }
    }

    /// Unit-amplitude correlation at distance `d`; depends only on the
    /// parameters returned by [`Kernel::shape_params`].
    pub fn correlation(self, d: f64, theta: &[f64]) -> f64 {
        match self {
            Kernel::ExponentialIsotropic => (-d / theta[1]).exp(),
        }
    }

    pub fn shape_params(self, theta: &[f64]) -> &[f64] {
        match self {
            Kernel::ExponentialIsotropic => &theta[1..],
        }
    }
}

/// Where a channel parameter comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamBinding {
    /// A coordinate of the state vector.
    State(usize),
    Fixed(f64),
}

/// Maps a state vector to the path-loss exponent and kernel parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct StateToChannelMap {
    pub mu_index: usize,
    pub theta: Vec<ParamBinding>,
}

impl StateToChannelMap {
    /// `mu = x[0]`, shadowing power `x[1]`, correlation distance fixed.
    pub fn power_tracking(correlation_distance: f64) -> Self {
        Self { mu_index: 0, theta: vec![ParamBinding::State(1), ParamBinding::Fixed(correlation_distance)] }
    }

    pub fn validate(&self, state_dim: usize, kernel: Kernel) -> Result<()> {
        if self.mu_index >= state_dim {
            return Err(Error::InvalidScene(format!("mu_index {} outside state dimension {state_dim}", self.mu_index)));
        }
        if self.theta.len() != kernel.arity() {
            return Err(Error::InvalidScene(format!(
                "kernel takes {} parameters, {} bound",
                kernel.arity(),
                self.theta.len()
            )));
        }
        let mut used = vec![self.mu_index];
        for b in &self.theta {
            match *b {
                ParamBinding::State(i) => {
                    if i >= state_dim || used.contains(&i) {
                        return Err(Error::InvalidScene(format!("state index {i} is out of range or bound twice")));
                    }
                    used.push(i);
                }
                ParamBinding::Fixed(v) if !v.is_finite() => {
                    return Err(Error::InvalidScene(format!("fixed parameter {v} is not finite")));
                }
                ParamBinding::Fixed(_) => {}
            }
        }
        Ok(())
    }

    pub fn mu(&self, x: &[f64]) -> f64 {
        x[self.mu_index]
    }

    pub fn theta(&self, x: &[f64]) -> Vec<f64> {
        self.theta
            .iter()
            .map(|b| match *b {
                ParamBinding::State(i) => x[i],
                ParamBinding::Fixed(v) => v,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SensorLayout {
    Static(Vec<Point>),
    /// Positions per time step; step `t` uses entry `t`.
    Scripted(Vec<Vec<Point>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelScene {
    ref_pos: Point,
    sensors: SensorLayout,
    sigma_xi_sq: f64,
    kernel: Kernel,
    state_map: StateToChannelMap,
}

impl ChannelScene {
    pub fn new(
        ref_pos: Point,
        sensors: SensorLayout,
        sigma_xi_sq: f64,
        kernel: Kernel,
        state_map: StateToChannelMap,
    ) -> Result<Self> {
        if !(sigma_xi_sq >= 0.0 && sigma_xi_sq.is_finite()) {
            return Err(Error::InvalidScene(format!("sigma_xi_sq = {sigma_xi_sq}")));
        }
        if !(ref_pos[0].is_finite() && ref_pos[1].is_finite()) {
            return Err(Error::InvalidScene("reference position is not finite".into()));
        }
        let frames: Vec<&Vec<Point>> = match &sensors {
            SensorLayout::Static(p) => vec![p],
            SensorLayout::Scripted(f) => f.iter().collect(),
        };
        let n = frames.first().map(|f| f.len()).unwrap_or(0);
        if n == 0 {
            return Err(Error::InvalidScene("scene needs at least one sensor".into()));
        }
        for frame in frames {
            if frame.len() != n {
                return Err(Error::InvalidScene("sensor count changes between steps".into()));
            }
            for (i, p) in frame.iter().enumerate() {
                if !(p[0].is_finite() && p[1].is_finite()) {
                    return Err(Error::InvalidScene(format!("sensor {i} position is not finite")));
                }
                let d = distance(p, &ref_pos);
                if d < MIN_DISTANCE {
                    return Err(Error::TooCloseToReference { sensor: i, distance: d, min: MIN_DISTANCE });
                }
            }
        }
        Ok(Self { ref_pos, sensors, sigma_xi_sq, kernel, state_map })
    }

    pub fn ref_pos(&self) -> Point {
        self.ref_pos
    }

    pub fn sigma_xi_sq(&self) -> f64 {
        self.sigma_xi_sq
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn state_map(&self) -> &StateToChannelMap {
        &self.state_map
    }

    pub fn n_sensors(&self) -> usize {
        match &self.sensors {
            SensorLayout::Static(p) => p.len(),
            SensorLayout::Scripted(f) => f[0].len(),
        }
    }

    pub fn is_static(&self) -> bool {
        matches!(self.sensors, SensorLayout::Static(_))
    }

    pub fn positions(&self, t: usize) -> Result<&[Point]> {
        match &self.sensors {
            SensorLayout::Static(p) => Ok(p),
            SensorLayout::Scripted(f) => f
                .get(t)
                .map(|p| p.as_slice())
                .ok_or_else(|| Error::InvalidScene(format!("no sensor positions scripted for step {t}"))),
        }
    }

    /// Path-loss coefficient of an arbitrary point.
    pub fn alpha_at(&self, q: &Point) -> Result<f64> {
        let d = distance(q, &self.ref_pos);
        if d.is_nan() || d < MIN_DISTANCE {
            return Err(Error::QueryTooClose { x: q[0], y: q[1], min: MIN_DISTANCE });
        }
        Ok(-10.0 * d.log10())
    }

    pub fn path_loss_coeffs(&self, t: usize) -> Result<DVector<f64>> {
        let pos = self.positions(t)?;
        let mut alpha = DVector::zeros(pos.len());
        for (i, p) in pos.iter().enumerate() {
            let d = distance(p, &self.ref_pos);
            if d < MIN_DISTANCE {
                return Err(Error::TooCloseToReference { sensor: i, distance: d, min: MIN_DISTANCE });
            }
            alpha[i] = -10.0 * d.log10();
        }
        Ok(alpha)
    }

    /// Shadowing covariance `Sigma_t(theta)` among the sensors.
    pub fn build_covariance(&self, t: usize, theta: &[f64]) -> Result<DMatrix<f64>> {
        self.kernel.validate(theta)?;
        Ok(kernel_matrix(self.kernel, self.positions(t)?, theta))
    }

    /// Observation covariance `C_t = Sigma_t(theta) + sigma_xi_sq I`.
    pub fn build_obs_covariance(&self, t: usize, theta: &[f64]) -> Result<DMatrix<f64>> {
        let mut c = self.build_covariance(t, theta)?;
        for i in 0..c.nrows() {
            c[(i, i)] += self.sigma_xi_sq;
        }
        Ok(c)
    }

    /// Covariance between the shadowing at `q` and at each sensor.
    pub fn cross_covariance(&self, t: usize, q: &Point, theta: &[f64]) -> Result<DVector<f64>> {
        self.kernel.validate(theta)?;
        let pos = self.positions(t)?;
        Ok(DVector::from_iterator(
            pos.len(),
            pos.iter().map(|p| self.kernel.amplitude(theta) * self.kernel.correlation(distance(q, p), theta)),
        ))
    }

    /// `C_t` evaluated at state `x`.
    pub fn obs_covariance_at(&self, t: usize, x: &[f64]) -> Result<DMatrix<f64>> {
        self.build_obs_covariance(t, &self.state_map.theta(x))
    }
}

/// Symmetric kernel matrix over `points`; the diagonal is exactly the amplitude.
pub fn kernel_matrix(kernel: Kernel, points: &[Point], theta: &[f64]) -> DMatrix<f64> {
    let n = points.len();
    let amp = kernel.amplitude(theta);
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        m[(j, j)] = amp;
        for i in j + 1..n {
            let v = amp * kernel.correlation(distance(&points[i], &points[j]), theta);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Lower Cholesky factor of a symmetric positive definite matrix, kept with
/// its log-determinant.
#[derive(Debug, Clone, PartialEq)]
pub struct CovFactor {
    lower: DMatrix<f64>,
    log_det: f64,
}

impl CovFactor {
    pub fn new(c: &DMatrix<f64>) -> Result<Self> {
        let chol = c
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite(format!("{}x{} factorization failed", c.nrows(), c.ncols())))?;
        let lower = chol.unpack();
        let log_det = 2.0 * lower.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        Ok(Self { lower, log_det })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// `L^{-1} v`.
    pub fn whiten(&self, v: &DVector<f64>) -> DVector<f64> {
        self.lower.solve_lower_triangular(v).expect("Cholesky factor has a positive diagonal")
    }

    /// `C^{-1} v` by two triangular solves.
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        let z = self.whiten(v);
        self.lower.tr_solve_lower_triangular(&z).expect("Cholesky factor has a positive diagonal")
    }

    /// `-1/2 r^T C^{-1} r - 1/2 log det C` for residual `r`.
    pub fn loglik(&self, residual: &DVector<f64>) -> f64 {
        let z = self.whiten(residual);
        -0.5 * z.norm_squared() - 0.5 * self.log_det
    }
}

/// Gaussian log-density of `y` up to the additive constant `-N/2 log(2 pi)`.
pub fn gaussian_unnormalized_loglik(y: &DVector<f64>, mean: &DVector<f64>, c: &DMatrix<f64>) -> Result<f64> {
    if y.len() != mean.len() || c.nrows() != y.len() || c.ncols() != y.len() {
        return Err(Error::DimensionMismatch { expected: y.len(), got: c.nrows() });
    }
    Ok(CovFactor::new(c)?.loglik(&(y - mean)))
}

/// Channel measurements of all sensors at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationBatch {
    pub t: usize,
    /// Measurements, dB.
    pub y: DVector<f64>,
    /// Path-loss coefficients of the sensors at time `t`.
    pub alpha: DVector<f64>,
}

impl ObservationBatch {
    pub fn new(scene: &ChannelScene, t: usize, y: DVector<f64>) -> Result<Self> {
        if y.len() != scene.n_sensors() {
            return Err(Error::DimensionMismatch { expected: scene.n_sensors(), got: y.len() });
        }
        Ok(Self { t, y, alpha: scene.path_loss_coeffs(t)? })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Factor of a positive semidefinite matrix used for sampling. Retries once
/// with diagonal jitter relative to `scale`; returns whether jitter was used.
fn sampling_factor(m: &DMatrix<f64>, scale: f64) -> Result<(DMatrix<f64>, bool)> {
    if m.iter().all(|v| *v == 0.0) {
        return Ok((DMatrix::zeros(m.nrows(), m.ncols()), false));
    }
    if let Some(c) = m.clone().cholesky() {
        return Ok((c.unpack(), false));
    }
    let mut jittered = m.clone();
    for i in 0..m.nrows() {
        jittered[(i, i)] += JITTER * scale;
    }
    jittered
        .cholesky()
        .map(|c| (c.unpack(), true))
        .ok_or_else(|| Error::NotPositiveDefinite("shadowing covariance even after jitter".into()))
}

/// One joint draw of sensor measurements and the noiseless channel gain at
/// query points.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDraw {
    pub observation: ObservationBatch,
    /// `alpha_q * mu(x) + shadowing` at each query point, dB.
    pub field: Vec<f64>,
    /// The shadowing covariance needed diagonal jitter to factorize.
    pub jittered: bool,
}

/// Draws the shadowing jointly over sensors and `queries`; multipath noise is
/// added only at the sensors. Standard normals are consumed sensors first,
/// then queries, then the `N` multipath draws.
pub fn sample_joint_field(
    scene: &ChannelScene,
    t: usize,
    x: &[f64],
    queries: &[Point],
    rng: &mut dyn RngCore,
) -> Result<JointDraw> {
    let map = scene.state_map();
    let theta = map.theta(x);
    let mu = map.mu(x);
    scene.kernel().validate(&theta)?;
    let alpha = scene.path_loss_coeffs(t)?;
    let alpha_q: Vec<f64> = queries.iter().map(|q| scene.alpha_at(q)).collect::<Result<_>>()?;

    let n = scene.n_sensors();
    let mut points: Vec<Point> = scene.positions(t)?.to_vec();
    points.extend_from_slice(queries);
    let sigma = kernel_matrix(scene.kernel(), &points, &theta);
    let (lower, jittered) = sampling_factor(&sigma, scene.kernel().amplitude(&theta))?;

    let z = DVector::from_iterator(points.len(), (0..points.len()).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let shadow = lower * z;
    let noise_sd = scene.sigma_xi_sq().sqrt();
    let y = DVector::from_iterator(
        n,
        (0..n).map(|i| {
            let xi: f64 = rng.sample(StandardNormal);
            alpha[i] * mu + shadow[i] + noise_sd * xi
        }),
    );
    let field = alpha_q.iter().enumerate().map(|(k, a)| a * mu + shadow[n + k]).collect();
    Ok(JointDraw { observation: ObservationBatch { t, y, alpha }, field, jittered })
}

/// `y = alpha * mu(x) + s + xi` with `s ~ N(0, Sigma_t(theta(x)))`.
pub fn sample_observation(
    scene: &ChannelScene,
    t: usize,
    x: &[f64],
    rng: &mut dyn RngCore,
) -> Result<ObservationBatch> {
    Ok(sample_joint_field(scene, t, x, &[], rng)?.observation)
}

/// Spectral summary of the observation covariance over a set of states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceReport {
    pub min_eigenvalue: f64,
    pub max_asymmetry: f64,
    /// Smallest eigenvalue exceeds 1, the normalization the convergence
    /// guarantees assume.
    pub expansive: bool,
}

pub fn covariance_report<'a>(
    scene: &ChannelScene,
    t: usize,
    states: impl IntoIterator<Item = &'a [f64]>,
) -> Result<CovarianceReport> {
    let mut min_eigenvalue = f64::INFINITY;
    let mut max_asymmetry: f64 = 0.0;
    for x in states {
        let c = scene.obs_covariance_at(t, x)?;
        max_asymmetry = max_asymmetry.max((&c - c.transpose()).amax());
        let eig = SymmetricEigen::new(c).eigenvalues.min();
        min_eigenvalue = min_eigenvalue.min(eig);
    }
    Ok(CovarianceReport { min_eigenvalue, max_asymmetry, expansive: min_eigenvalue > 1.0 })
}
