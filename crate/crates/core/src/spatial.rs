//! Sequential channel-gain prediction at arbitrary points.
//!
//! For a query point `q` and a grid state `x`, the conditional mean of the
//! channel gain given the sensor measurements `y` is the kriging functional
//!
//! ```text
//! phi(x, y) = alpha_q mu(x) + sigma_q(x)^T C(x)^{-1} (y - alpha mu(x))
//! ```
//!
//! Averaging it over the filter belief gives the prediction for the current
//! step. For horizons `rho >= 1` the future gain is conditionally independent
//! of the current measurements given the future state, and the prediction
//! reduces to `alpha_q` times the predicted path-loss exponent.

use std::collections::HashMap;

use nalgebra::DVector;

use crate::channel::{distance, ChannelScene, CovFactor, ObservationBatch, Point, MIN_DISTANCE};
use crate::error::{Error, Result};
use crate::filter::FilterSession;

/// Query points and the prediction horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct QuerySpec {
    points: Vec<Point>,
    rho: usize,
}

impl QuerySpec {
    pub fn new(points: Vec<Point>, rho: usize, scene: &ChannelScene) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Invalid("query set is empty".into()));
        }
        for q in &points {
            if !(q[0].is_finite() && q[1].is_finite()) {
                return Err(Error::Invalid(format!("query point ({}, {}) is not finite", q[0], q[1])));
            }
            let d = distance(q, &scene.ref_pos());
            if d.is_nan() || d < MIN_DISTANCE {
                return Err(Error::QueryTooClose { x: q[0], y: q[1], min: MIN_DISTANCE });
            }
        }
        Ok(Self { points, rho })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn rho(&self) -> usize {
        self.rho
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn phi_with_factor(
    scene: &ChannelScene,
    factor: &CovFactor,
    mu: f64,
    theta: &[f64],
    obs: &ObservationBatch,
    q: &Point,
) -> Result<f64> {
    let residual = &obs.y - &obs.alpha * mu;
    let gain = factor.solve(&residual);
    let cross = scene.cross_covariance(obs.t, q, theta)?;
    Ok(scene.alpha_at(q)? * mu + cross.dot(&gain))
}

/// Kriging functional at state `x`, factorizing `C_t(x)` afresh.
pub fn phi(x: &[f64], obs: &ObservationBatch, q: &Point, scene: &ChannelScene) -> Result<f64> {
    let map = scene.state_map();
    let theta = map.theta(x);
    let factor = CovFactor::new(&scene.build_obs_covariance(obs.t, &theta)?)?;
    phi_with_factor(scene, &factor, map.mu(x), &theta, obs, q)
}

/// The kriging functional at every cell center.
pub fn phi_vector(obs: &ObservationBatch, q: &Point, session: &FilterSession) -> Result<DVector<f64>> {
    let scene = session.scene();
    let mut out = DVector::zeros(session.n_cells());
    for l in 0..session.n_cells() {
        let factor = session.cell_factor(l, obs.t)?;
        out[l] = phi_with_factor(scene, &factor, session.cell_mu(l), session.cell_theta(l), obs, q)?;
    }
    Ok(out)
}

/// Channel-gain prediction at `q`, `rho` steps after the observation `obs`
/// that the session's belief has just absorbed.
pub fn predict(session: &FilterSession, obs: &ObservationBatch, q: &Point, rho: usize) -> Result<f64> {
    let queries = QuerySpec::new(vec![*q], rho, session.scene())?;
    Ok(predict_map(session, obs, &queries)?[0])
}

/// [`predict`] over many query points. For `rho = 0` the per-cell solves
/// against `C_t` are done once and shared by all queries.
pub fn predict_map(session: &FilterSession, obs: &ObservationBatch, queries: &QuerySpec) -> Result<Vec<f64>> {
    let scene = session.scene();
    let n = scene.n_sensors();
    if obs.y.len() != n || obs.alpha.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: obs.y.len() });
    }
    let mu_index = scene.state_map().mu_index;
    if queries.rho() > 0 {
        let mu_hat = session.estimate_at_horizon(queries.rho())[mu_index];
        return queries.points().iter().map(|q| Ok(scene.alpha_at(q)? * mu_hat)).collect();
    }

    let kernel = scene.kernel();
    let weights = session.belief().weights();
    let mut mu_hat = 0.0;
    // Belief-weighted C^{-1} residuals, grouped by the kernel's correlation
    // parameters so each query evaluates one correlation vector per group.
    let mut groups: Vec<(Vec<f64>, DVector<f64>)> = Vec::new();
    let mut group_of: HashMap<Vec<u64>, usize> = HashMap::new();
    for l in 0..session.n_cells() {
        let w = weights[l];
        if w == 0.0 {
            continue;
        }
        let mu = session.cell_mu(l);
        let theta = session.cell_theta(l);
        mu_hat += w * mu;
        let residual = &obs.y - &obs.alpha * mu;
        let gain = session.cell_factor(l, obs.t)?.solve(&residual);
        let shape = kernel.shape_params(theta);
        let key: Vec<u64> = shape.iter().map(|v| v.to_bits()).collect();
        let g = *group_of.entry(key).or_insert_with(|| {
            groups.push((theta.to_vec(), DVector::zeros(n)));
            groups.len() - 1
        });
        groups[g].1.axpy(w * kernel.amplitude(theta), &gain, 1.0);
    }

    let sensors = scene.positions(obs.t)?;
    queries
        .points()
        .iter()
        .map(|q| {
            let mut value = scene.alpha_at(q)? * mu_hat;
            for (theta, acc) in &groups {
                for (j, p) in sensors.iter().enumerate() {
                    value += kernel.correlation(distance(q, p), theta) * acc[j];
                }
            }
            Ok(value)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{Kernel, ParamBinding, SensorLayout, StateToChannelMap};
    use crate::grid::GridSpec;
    use crate::markov::{Belief, QuantizationMode, TransitionMatrix};
    use crate::seeding::substream;
    use nalgebra::DMatrix;
    use rand::Rng;

    fn scene(sensors: Vec<Point>, sigma_xi_sq: f64, map: StateToChannelMap) -> ChannelScene {
        ChannelScene::new([25.0, 10.0], SensorLayout::Static(sensors), sigma_xi_sq, Kernel::ExponentialIsotropic, map)
            .unwrap()
    }

    fn fixed(theta1: f64, theta2: f64) -> StateToChannelMap {
        StateToChannelMap { mu_index: 0, theta: vec![ParamBinding::Fixed(theta1), ParamBinding::Fixed(theta2)] }
    }

    fn session(s: &ChannelScene, grid: GridSpec, belief: Belief, rho: usize) -> FilterSession {
        let n = grid.len();
        let mut rng = substream(n as u64, 9);
        let raw = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() + 0.01);
        let p = DMatrix::from_fn(n, n, |i, j| raw[(i, j)] / raw.column(j).sum());
        FilterSession::new(grid, TransitionMatrix::new(p, QuantizationMode::Markovian).unwrap(), belief, s.clone(), rho)
            .unwrap()
    }

    fn dense_phi(x: &[f64], obs: &ObservationBatch, q: &Point, s: &ChannelScene) -> f64 {
        let map = s.state_map();
        let theta = map.theta(x);
        let c = s.build_obs_covariance(obs.t, &theta).unwrap();
        let inv = c.try_inverse().unwrap();
        let sq = s.cross_covariance(obs.t, q, &theta).unwrap();
        s.alpha_at(q).unwrap() * map.mu(x) + (sq.transpose() * inv * (&obs.y - &obs.alpha * map.mu(x)))[(0, 0)]
    }

    #[test]
    fn phi_without_shadowing_is_prior_mean() {
        let s = scene(vec![[0.0, 0.0], [30.0, 3.0]], 2.0, fixed(0.0, 10.0));
        let obs = ObservationBatch::new(&s, 0, DVector::from_vec(vec![-40.0, 7.0])).unwrap();
        let q = [10.0, 30.0];
        assert_eq!(phi(&[2.2], &obs, &q, &s).unwrap(), s.alpha_at(&q).unwrap() * 2.2);
    }

    #[test]
    fn phi_interpolates_noiseless_sensor() {
        let s = scene(vec![[3.0, 4.0]], 0.0, fixed(25.0, 10.0));
        let obs = ObservationBatch::new(&s, 0, DVector::from_vec(vec![-17.25])).unwrap();
        assert!((phi(&[1.7], &obs, &[3.0, 4.0], &s).unwrap() + 17.25).abs() < 1e-12);
    }

    #[test]
    fn phi_two_sensor_dense_oracle() {
        let s = scene(vec![[0.0, 0.0], [10.0, 0.0]], 2.0, fixed(25.0, 10.0));
        let obs = ObservationBatch::new(&s, 0, DVector::from_vec(vec![-27.0, -21.0])).unwrap();
        let q = [0.0, 0.0];
        let fast = phi(&[2.0], &obs, &q, &s).unwrap();
        assert!((fast - dense_phi(&[2.0], &obs, &q, &s)).abs() < 1e-12);
    }

    #[test]
    fn phi_vector_shapes() {
        let s = scene(vec![[0.0, 0.0], [10.0, 0.0]], 2.0, fixed(25.0, 10.0));
        let obs = ObservationBatch::new(&s, 0, DVector::from_vec(vec![-27.0, -21.0])).unwrap();
        let one = session(&s, GridSpec::new(vec![1.0], vec![3.0], vec![1]).unwrap(), Belief::uniform(1), 0);
        let v = phi_vector(&obs, &[5.0, 5.0], &one).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0], phi(&[2.0], &obs, &[5.0, 5.0], &s).unwrap());

        // mu is the state's first coordinate; the second does not enter the channel
        let flat =
            session(&s, GridSpec::new(vec![1.0, 0.0], vec![3.0, 1.0], vec![1, 4]).unwrap(), Belief::uniform(4), 0);
        let v = phi_vector(&obs, &[5.0, 5.0], &flat).unwrap();
        assert!(v.iter().all(|x| *x == v[0]));
    }

    #[test]
    fn phi_vector_cache_transparent() {
        let mut rng = substream(3, 3);
        let sensors: Vec<Point> = (0..8).map(|_| [40.0 * rng.random::<f64>(), 40.0 * rng.random::<f64>()]).collect();
        let s = scene(sensors, 2.0, StateToChannelMap::power_tracking(10.0));
        let g = GridSpec::uniform(vec![0.0, 25.0], vec![4.0, 25.6], 6).unwrap();
        let mut f = session(&s, g, Belief::uniform(36), 0);
        let obs = ObservationBatch::new(&s, 0, DVector::from_fn(8, |i, _| -10.0 - i as f64)).unwrap();
        let a = phi_vector(&obs, &[1.0, 2.0], &f).unwrap();
        f.set_caching(false).unwrap();
        assert_eq!(a, phi_vector(&obs, &[1.0, 2.0], &f).unwrap());
    }

    #[test]
    fn horizon_predictions_follow_state_estimate() {
        let s = scene(vec![[0.0, 0.0], [10.0, 0.0]], 2.0, StateToChannelMap::power_tracking(10.0));
        let g = GridSpec::uniform(vec![0.0, 25.0], vec![4.0, 25.6], 3).unwrap();
        let b = Belief::from_unnormalized(DVector::from_fn(9, |i, _| (i + 1) as f64)).unwrap();
        let f = session(&s, g, b, 2);
        let obs = ObservationBatch::new(&s, 0, DVector::from_vec(vec![-27.0, -21.0])).unwrap();
        let q = [33.0, 1.0];
        for rho in [1, 2, 5] {
            let expected = s.alpha_at(&q).unwrap() * f.estimate_at_horizon(rho)[0];
            assert_eq!(predict(&f, &obs, &q, rho).unwrap(), expected);
        }
    }

    #[test]
    fn prediction_collapses_without_shadowing() {
        let s = scene(vec![[0.0, 0.0], [10.0, 0.0]], 2.0, fixed(0.0, 10.0));
        let g = GridSpec::new(vec![0.0], vec![4.0], vec![7]).unwrap();
        let b = Belief::from_unnormalized(DVector::from_fn(7, |i, _| (i * i + 1) as f64)).unwrap();
        let f = session(&s, g, b, 0);
        let obs = ObservationBatch::new(&s, 0, DVector::from_vec(vec![-27.0, -21.0])).unwrap();
        let q = [7.0, 7.0];
        let p = predict(&f, &obs, &q, 0).unwrap();
        assert!((p - s.alpha_at(&q).unwrap() * f.estimate_at_horizon(0)[0]).abs() < 1e-12);
    }

    #[test]
    fn one_hot_belief_interpolates_sensor() {
        let s = scene(vec![[0.0, 0.0], [10.0, 0.0], [4.0, 9.0]], 0.0, StateToChannelMap::power_tracking(10.0));
        let g = GridSpec::uniform(vec![0.0, 25.0], vec![4.0, 25.6], 4).unwrap();
        let f = session(&s, g, Belief::one_hot(16, 6).unwrap(), 0);
        let obs = ObservationBatch::new(&s, 0, DVector::from_vec(vec![-27.0, -21.0, -3.0])).unwrap();
        assert!((predict(&f, &obs, &[10.0, 0.0], 0).unwrap() + 21.0).abs() < 1e-9);
    }

    #[test]
    fn map_agrees_with_phi_vector_and_decomposition() {
        let mut rng = substream(12, 0);
        let sensors: Vec<Point> = (0..6).map(|_| [40.0 * rng.random::<f64>(), 40.0 * rng.random::<f64>()]).collect();
        // correlation distance is part of the state here, so several groups form
        let map = StateToChannelMap { mu_index: 0, theta: vec![ParamBinding::Fixed(25.0), ParamBinding::State(1)] };
        let s = scene(sensors, 2.0, map);
        let g = GridSpec::uniform(vec![0.0, 5.0], vec![4.0, 15.0], 5).unwrap();
        let b = Belief::from_unnormalized(DVector::from_fn(25, |_, _| rng.random::<f64>())).unwrap();
        let f = session(&s, g, b, 0);
        let obs = ObservationBatch::new(&s, 0, DVector::from_fn(6, |_, _| -20.0 + 10.0 * rng.random::<f64>())).unwrap();
        let qs: Vec<Point> = (0..5).map(|_| [40.0 * rng.random::<f64>(), 40.0 * rng.random::<f64>()]).collect();
        let spec = QuerySpec::new(qs.clone(), 0, &s).unwrap();
        let fast = predict_map(&f, &obs, &spec).unwrap();
        let w = f.belief().weights();
        for (k, q) in qs.iter().enumerate() {
            let inner = phi_vector(&obs, q, &f).unwrap().dot(w);
            assert!((fast[k] - inner).abs() <= 1e-10 * inner.abs().max(1.0));

            // split route: alpha_q mu_hat + (Phi1 E)^T y - <phi2, E>
            let aq = s.alpha_at(q).unwrap();
            let mut phi1 = DVector::zeros(6);
            let mut phi2 = 0.0;
            let mut mu_hat = 0.0;
            for l in 0..25 {
                let x = f.points().point(l);
                let theta = s.state_map().theta(&x);
                let c = s.build_obs_covariance(0, &theta).unwrap();
                let ci_sq = c.try_inverse().unwrap() * s.cross_covariance(0, q, &theta).unwrap();
                phi1 += &ci_sq * w[l];
                phi2 += w[l] * ci_sq.dot(&(&obs.alpha * x[0]));
                mu_hat += w[l] * x[0];
            }
            let split = aq * mu_hat + phi1.dot(&obs.y) - phi2;
            assert!((fast[k] - split).abs() <= 1e-10 * split.abs().max(1.0));
        }
        assert_eq!(predict(&f, &obs, &qs[2], 0).unwrap(), fast[2]);
    }

    #[test]
    fn query_validation() {
        let s = scene(vec![[0.0, 0.0]], 2.0, fixed(25.0, 10.0));
        assert!(QuerySpec::new(vec![], 0, &s).is_err());
        assert!(QuerySpec::new(vec![[25.0, 10.0]], 0, &s).is_err());
        assert!(QuerySpec::new(vec![[f64::NAN, 1.0]], 0, &s).is_err());
    }

    #[test]
    fn prediction_is_affine_in_measurements() {
        let mut rng = substream(21, 0);
        let sensors: Vec<Point> = (0..5).map(|_| [40.0 * rng.random::<f64>(), 40.0 * rng.random::<f64>()]).collect();
        let s = scene(sensors, 2.0, StateToChannelMap::power_tracking(10.0));
        let g = GridSpec::uniform(vec![0.0, 25.0], vec![4.0, 25.6], 4).unwrap();
        let b = Belief::from_unnormalized(DVector::from_fn(16, |_, _| rng.random::<f64>())).unwrap();
        let f = session(&s, g, b, 0);
        let q = [12.0, 31.0];
        let y1 = DVector::from_fn(5, |_, _| -30.0 * rng.random::<f64>());
        let y2 = DVector::from_fn(5, |_, _| -30.0 * rng.random::<f64>());
        let at = |y: DVector<f64>| predict(&f, &ObservationBatch::new(&s, 0, y).unwrap(), &q, 0).unwrap();
        let a = 0.3;
        let mixed = at(&y1 * a + &y2 * (1.0 - a));
        let combo = a * at(y1) + (1.0 - a) * at(y2);
        assert!((mixed - combo).abs() < 1e-10);
    }
}
