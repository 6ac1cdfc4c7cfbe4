//! Shared fixtures for the benchmarks.

use artic_core::experiment::{estimator_noise, scene_observations, Cell, ObservationMode};
use artic_core::factor_graph::{build_problem, Problem};
use artic_core::lie::Twist;
use artic_core::synth::generate_ground_truth;
use artic_core::JointType;

/// Estimation problem for a revolute scene with `n_obs` noisy pose observations.
pub fn revolute_problem(n_obs: usize, seed: u64) -> Problem {
    let cell = Cell { joint_type: JointType::Revolute, n_obs, q_max: 90.0, sigma_pos: 0.001, sigma_ori_deg: 1.0 };
    let spec = cell.scene(seed);
    let gt = generate_ground_truth(&spec).expect("valid scene");
    let obs = scene_observations(&gt, &spec, ObservationMode::Pose).expect("observations");
    build_problem(&obs, estimator_noise(&spec).expect("noise"), JointType::Unconstrained).expect("problem")
}

/// Deterministic twists spread over a ball of radius about 2.
pub fn twists(n: usize) -> Vec<Twist> {
    (0..n)
        .map(|i| {
            let x = i as f64;
            Twist::from_array([
                (0.7 * x).sin(),
                (1.3 * x).cos(),
                (0.4 * x).sin(),
                (0.9 * x).cos(),
                (1.7 * x).sin(),
                (0.3 * x).cos(),
            ])
        })
        .collect()
}
