//! The recursive filter against exhaustive path enumeration.

use gridtrack::channel::{
    sample_observation, ChannelScene, Kernel, ParamBinding, Point, SensorLayout, StateToChannelMap,
};
use gridtrack::filter::{brute_force_posterior, FilterSession};
use gridtrack::grid::GridSpec;
use gridtrack::markov::{Belief, QuantizationMode, TransitionMatrix};
use gridtrack::seeding::substream;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

fn max_discrepancy(seed: u64) -> f64 {
    let mut rng = substream(seed, 0);
    let cells = rng.random_range(2..=4);
    let sensors = rng.random_range(1..=3);
    let steps = rng.random_range(3..=6);

    let grid = GridSpec::new(vec![0.0, 1.0], vec![4.0, 9.0], vec![1, cells]).unwrap();
    let raw = DMatrix::from_fn(cells, cells, |_, _| rng.random_range(0.05..1.0));
    let sums = raw.row_sum();
    let p = DMatrix::from_fn(cells, cells, |i, j| raw[(i, j)] / sums[j]);
    let transition = TransitionMatrix::new(p, QuantizationMode::Marginal).unwrap();
    let initial = Belief::from_unnormalized(DVector::from_fn(cells, |_, _| rng.random_range(0.1..1.0))).unwrap();

    let positions: Vec<Point> =
        (0..sensors).map(|_| [rng.random_range(0.0..20.0), rng.random_range(20.0..40.0)]).collect();
    let map = StateToChannelMap { mu_index: 0, theta: vec![ParamBinding::State(1), ParamBinding::Fixed(6.0)] };
    let scene =
        ChannelScene::new([25.0, 10.0], SensorLayout::Static(positions), 1.5, Kernel::ExponentialIsotropic, map)
            .unwrap();

    let observations: Vec<_> = (1..=steps)
        .map(|t| {
            let x = [rng.random_range(0.0..4.0), rng.random_range(1.0..9.0)];
            sample_observation(&scene, t, &x, &mut rng).unwrap()
        })
        .collect();

    let exact = brute_force_posterior(&grid, &transition, &scene, &observations, &initial).unwrap();
    let mut session = FilterSession::new(grid, transition, initial, scene, 0).unwrap();
    let track = session.run_tracking(&observations).unwrap();
    assert_eq!(track.len(), exact.len() + 1);
    track[1..].iter().zip(&exact).map(|(tp, b)| (tp.belief.weights() - b.weights()).amax()).fold(0.0, f64::max)
}

#[test]
fn fifty_random_scenarios_match_enumeration() {
    for seed in 0..50 {
        let err = max_discrepancy(seed);
        assert!(err <= 1e-10, "seed {seed}: {err:e}");
    }
}
