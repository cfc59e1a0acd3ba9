//! Randomized cross-check of the recursive filter against exhaustive path
//! enumeration on tiny scenarios.

use gridtrack::channel::{
    sample_observation, ChannelScene, Kernel, ObservationBatch, ParamBinding, Point, SensorLayout, StateToChannelMap,
};
use gridtrack::filter::{brute_force_posterior, FilterSession};
use gridtrack::grid::GridSpec;
use gridtrack::markov::{Belief, QuantizationMode, TransitionMatrix};
use gridtrack::seeding::substream;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use serde::Serialize;

use crate::error::{InPhase, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleCase {
    pub index: usize,
    pub cells: usize,
    pub sensors: usize,
    pub steps: usize,
    /// Largest absolute belief discrepancy over all steps and cells.
    pub max_abs_error: f64,
}

/// A tiny random scenario: grid, chain, scene and measurements.
#[derive(Debug, Clone)]
pub struct TinyScenario {
    pub grid: GridSpec,
    pub transition: TransitionMatrix,
    pub initial: Belief,
    pub scene: ChannelScene,
    pub observations: Vec<ObservationBatch>,
}

fn random_simplex(n: usize, rng: &mut dyn RngCore) -> Vec<f64> {
    // exponential spacings give a uniform point on the simplex
    let e: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn draw_index(weights: &[f64], rng: &mut dyn RngCore) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Random scenario with `cells` grid cells, `sensors` sensors and `steps`
/// measurements, with mean and shadowing power on the grid.
pub fn tiny_scenario(cells: usize, sensors: usize, steps: usize, rng: &mut dyn RngCore) -> Result<TinyScenario> {
    let layout = if cells == 4 && rng.random::<bool>() { vec![2, 2] } else { vec![cells, 1] };
    let grid = GridSpec::new(vec![0.0, 1.0], vec![4.0, 9.0], layout).in_phase("oracle setup")?;
    let n = grid.len();

    let cols: Vec<Vec<f64>> = (0..n).map(|_| random_simplex(n, rng)).collect();
    let mut p = DMatrix::from_fn(n, n, |i, j| cols[j][i]);
    for j in 0..n {
        // exact column sums despite rounding
        let s: f64 = p.column(j).sum();
        p.column_mut(j).unscale_mut(s);
    }
    let transition = TransitionMatrix::new(p, QuantizationMode::Markovian).in_phase("oracle setup")?;
    let initial = Belief::from_unnormalized(DVector::from_vec(random_simplex(n, rng))).in_phase("oracle setup")?;

    let ref_pos: Point = [25.0, 10.0];
    let mut positions = Vec::with_capacity(sensors);
    while positions.len() < sensors {
        let p: Point = [rng.random_range(0.0..40.0), rng.random_range(0.0..40.0)];
        if (p[0] - ref_pos[0]).hypot(p[1] - ref_pos[1]) > 1.0 {
            positions.push(p);
        }
    }
    let map = StateToChannelMap {
        mu_index: 0,
        theta: vec![ParamBinding::State(1), ParamBinding::Fixed(rng.random_range(3.0..15.0))],
    };
    let scene = ChannelScene::new(
        ref_pos,
        SensorLayout::Static(positions),
        rng.random_range(0.5..3.0),
        Kernel::ExponentialIsotropic,
        map,
    )
    .in_phase("oracle setup")?;

    let points = grid.reconstruction_matrix();
    let mut cell = draw_index(initial.weights().as_slice(), rng);
    let mut observations = Vec::with_capacity(steps);
    for t in 1..=steps {
        let col: Vec<f64> = transition.matrix().column(cell).iter().copied().collect();
        cell = draw_index(&col, rng);
        observations.push(sample_observation(&scene, t, &points.point(cell), rng).in_phase("oracle sampling")?);
    }
    Ok(TinyScenario { grid, transition, initial, scene, observations })
}

/// Runs scenario `index` of the suite keyed by `seed`.
pub fn oracle_case(seed: u64, index: usize) -> Result<OracleCase> {
    let mut rng = substream(seed, index as u64);
    let cells = rng.random_range(2..=4);
    let sensors = rng.random_range(1..=3);
    let steps = rng.random_range(3..=6);
    let s = tiny_scenario(cells, sensors, steps, &mut rng)?;

    let exact =
        brute_force_posterior(&s.grid, &s.transition, &s.scene, &s.observations, &s.initial).in_phase("enumeration")?;
    let mut session = FilterSession::new(s.grid.clone(), s.transition.clone(), s.initial.clone(), s.scene.clone(), 0)
        .in_phase("filter setup")?;
    let track = session.run_tracking(&s.observations).in_phase("filter update")?;
    let max_abs_error =
        track[1..].iter().zip(&exact).map(|(tp, b)| (tp.belief.weights() - b.weights()).amax()).fold(0.0, f64::max);
    Ok(OracleCase { index, cells, sensors, steps, max_abs_error })
}

pub fn oracle_suite(seed: u64, cases: usize) -> Result<Vec<OracleCase>> {
    (0..cases).map(|i| oracle_case(seed, i)).collect()
}
