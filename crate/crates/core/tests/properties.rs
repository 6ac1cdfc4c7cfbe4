use std::f64::consts::PI;

use artic_core::clustering::{
    aggregate_clusters, build_affinity, match_detections, PartDetection, PartTrajectory, PixelFeature,
};
use artic_core::experiment::nearest_rank;
use artic_core::factor_graph::{huber, huber_weight, Observation};
use artic_core::io::{observations_to_jsonl, parse_observations};
use artic_core::joint::{f_twist, JointModel};
use artic_core::lie::{adjoint, adjoint_matrix, compose, exp_map, inverse, log_map, Pose, Twist, Vec3};
use artic_core::metric::{tangent_similarity, tangent_similarity_scaled, GraspSpec};
use artic_core::rng::derive_seed;
use proptest::prelude::*;

fn vec3(r: f64) -> impl Strategy<Value = Vec3> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

/// Twists whose rotation angle stays below `max_angle`.
fn twist(max_angle: f64) -> impl Strategy<Value = Twist> {
    (vec3(2.0), vec3(1.0), 0.0..max_angle).prop_map(|(v, w, a)| {
        let w = if w.norm() > 1e-6 { w.normalize() * a } else { Vec3::zeros() };
        Twist::new(v, w)
    })
}

fn pose() -> impl Strategy<Value = Pose> {
    twist(PI - 0.1).prop_map(|x| exp_map(&x))
}

fn pose_gap(a: &Pose, b: &Pose) -> f64 {
    (a.rotation() - b.rotation()).amax().max((a.translation() - b.translation()).amax())
}

fn pixel() -> impl Strategy<Value = PixelFeature> {
    (0usize..4096, 0.01..1.0, vec3(1.0), twist(0.5)).prop_map(|(index, beta, center, delta)| PixelFeature {
        index,
        beta,
        center,
        delta,
    })
}

fn observation() -> impl Strategy<Value = Observation> {
    (0i64..4, 0usize..50, 0u8..3, pose(), vec3(5.0), twist(3.0)).prop_map(|(part, t, kind, p, c, d)| match kind {
        0 => Observation::pose(part, t, p),
        1 => Observation::center(part, t, c),
        _ => Observation::delta(part, t, d),
    })
}

proptest! {
    #[test]
    fn exp_log_roundtrip(x in twist(PI - 1e-3)) {
        let back = log_map(&exp_map(&x)).unwrap();
        prop_assert!((back - x).norm() < 1e-8, "{:?} vs {:?}", back, x);
    }

    #[test]
    fn log_exp_roundtrip(p in pose()) {
        prop_assert!(pose_gap(&exp_map(&log_map(&p).unwrap()), &p) < 1e-10);
    }

    #[test]
    fn adjoint_conjugates_exp(t in pose(), x in twist(3.0)) {
        let lhs = exp_map(&adjoint(&t, &x));
        let rhs = compose(&compose(&t, &exp_map(&x)), &inverse(&t));
        prop_assert!(pose_gap(&lhs, &rhs) < 1e-9);
    }

    #[test]
    fn adjoint_matrix_matches_action(t in pose(), x in twist(3.0)) {
        let by_matrix = adjoint_matrix(&t) * nalgebra::Vector6::from(x.to_array());
        let by_action = adjoint(&t, &x).to_array();
        for i in 0..6 {
            prop_assert!((by_matrix[i] - by_action[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn twist_scale_gauge(nu in twist(2.0), t in pose(), q in -1.5..1.5f64, c in 0.1..10.0f64) {
        let a = f_twist(q, &nu, &t);
        let b = f_twist(q / c, &(nu * c), &t);
        prop_assert!(pose_gap(&a, &b) < 1e-9);
    }

    #[test]
    fn normalization_keeps_poses(nu in twist(2.0), t in pose(), qs in prop::collection::vec(-1.0..1.0f64, 1..6)) {
        prop_assume!(nu.norm() > 1e-3);
        let model = JointModel { nu, t_twist: t, q: qs };
        let n = model.normalized();
        prop_assert!((n.nu.norm() - 1.0).abs() < 1e-12);
        for i in 0..model.q.len() {
            prop_assert!(pose_gap(&model.pose_at(i), &n.pose_at(i)) < 1e-9);
        }
    }

    #[test]
    fn huber_is_continuous_and_weighted(d in 0.0..10.0f64, delta in 1e-3..2.0f64) {
        let eps = 1e-9;
        prop_assert!((huber(delta + eps, delta) - huber(delta - eps, delta)).abs() < 1e-8);
        prop_assert!(huber(d, delta) <= 0.5 * d * d + 1e-15);
        let w = huber_weight(d, delta);
        prop_assert!(w > 0.0 && w <= 1.0);
        if d > 0.0 {
            // The weight is L'(d) / d.
            let h = 1e-7 * (1.0 + d);
            let slope = (huber(d + h, delta) - huber((d - h).max(0.0), delta)) / (d + h - (d - h).max(0.0));
            prop_assume!((d - delta).abs() > 2.0 * h);
            prop_assert!((slope / d - w).abs() < 1e-5 * (1.0 + w));
        }
    }

    #[test]
    fn similarity_is_bounded_and_antisymmetric(a in twist(2.0), b in twist(2.0), x0 in vec3(1.0), q in 0.1..2.0f64) {
        let g = GraspSpec::new(x0, 0.0, q).unwrap();
        if let (Ok(j), Ok(neg)) = (tangent_similarity(&a, &b, &g), tangent_similarity(&a, &(-b), &g)) {
            prop_assert!((-1.0..=1.0).contains(&j));
            prop_assert!((j + neg).abs() < 1e-12);
        }
    }

    #[test]
    fn similarity_ignores_positive_scale(a in twist(2.0), b in twist(2.0), x0 in vec3(1.0), c in 1e-3..1e3f64) {
        let g = GraspSpec::new(x0, 0.0, 1.0).unwrap();
        if let Ok(j) = tangent_similarity(&a, &b, &g) {
            let scaled = tangent_similarity_scaled(&a, &b, &g, c).unwrap();
            prop_assert!((j - scaled).abs() < 1e-12);
        }
    }

    #[test]
    fn self_similarity_is_one(a in twist(2.0), x0 in vec3(1.0)) {
        let g = GraspSpec::new(x0, 0.0, 1.0).unwrap();
        if let Ok(j) = tangent_similarity(&a, &a, &g) {
            prop_assert!((j - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn affinity_is_symmetric_with_diagonal_two(pixels in prop::collection::vec(pixel(), 1..30), sigma in 0.01..1.0f64) {
        let a = build_affinity(&pixels, sigma).unwrap();
        for i in 0..pixels.len() {
            prop_assert_eq!(a[(i, i)], 2.0);
            for j in 0..pixels.len() {
                prop_assert_eq!(a[(i, j)], a[(j, i)]);
                prop_assert!(a[(i, j)] >= 0.0 && a[(i, j)] <= 2.0);
            }
        }
    }

    #[test]
    fn aggregation_ignores_label_names(
        pixels in prop::collection::vec(pixel(), 1..40),
        labels in prop::collection::vec(0usize..4, 40),
        perm in Just([0usize, 1, 2, 3]).prop_shuffle(),
    ) {
        let labels = &labels[..pixels.len()];
        let renamed: Vec<usize> = labels.iter().map(|l| perm[*l]).collect();
        let key = |d: &PartDetection| (d.support, d.center.x.to_bits(), d.center.y.to_bits());
        let mut a: Vec<_> = aggregate_clusters(labels, &pixels).unwrap().iter().map(key).collect();
        let mut b: Vec<_> = aggregate_clusters(&renamed, &pixels).unwrap().iter().map(key).collect();
        a.sort();
        b.sort();
        prop_assert_eq!(a, b);
        let support: usize = aggregate_clusters(labels, &pixels).unwrap().iter().map(|d| d.support).sum();
        prop_assert_eq!(support, pixels.len());
    }

    #[test]
    fn matching_keeps_every_detection(frames in prop::collection::vec(prop::collection::vec(vec3(1.0), 0..4), 1..6)) {
        let mut trajectories: Vec<PartTrajectory> = Vec::new();
        let mut missing_before = 0;
        for (t, centers) in frames.iter().enumerate() {
            let before = trajectories.len();
            let dets: Vec<PartDetection> = centers
                .iter()
                .map(|c| PartDetection { center: *c, delta: Twist::zero(), support: 1, mean_importance: 1.0 })
                .collect();
            match_detections(&mut trajectories, t, &dets);
            prop_assert_eq!(trajectories.len(), before.max(dets.len()));
            prop_assert!(trajectories.iter().all(|tr| tr.len() == t + 1 && tr.deltas.len() == t + 1));
            for c in centers {
                prop_assert!(trajectories.iter().any(|tr| tr.centers[t] == *c));
            }
            let matched = before.min(dets.len());
            let fresh = dets.len() - matched;
            let missing: usize = trajectories.iter().map(|tr| tr.missing_count).sum();
            prop_assert_eq!(missing, missing_before + (before - matched) + t * fresh);
            missing_before = missing;
        }
    }

    #[test]
    fn jsonl_roundtrip(obs in prop::collection::vec(observation(), 0..20)) {
        let text = observations_to_jsonl(&obs);
        prop_assert_eq!(parse_observations(&text).unwrap(), obs);
    }

    #[test]
    fn nearest_rank_is_a_monotone_sample(mut xs in prop::collection::vec(-1e3..1e3f64, 1..50), p in 0.0..100.0f64, dp in 0.0..50.0f64) {
        xs.sort_by(f64::total_cmp);
        let a = nearest_rank(&xs, p).unwrap();
        let b = nearest_rank(&xs, (p + dp).min(100.0)).unwrap();
        prop_assert!(xs.contains(&a));
        prop_assert!(a <= b);
    }

    #[test]
    fn seeds_depend_on_every_path_element(master in any::<u64>(), a in any::<u64>(), b in any::<u64>()) {
        prop_assume!(a != b);
        prop_assert_eq!(derive_seed(master, &[a, b]), derive_seed(master, &[a, b]));
        prop_assert_ne!(derive_seed(master, &[a]), derive_seed(master, &[b]));
        prop_assert_ne!(derive_seed(master, &[a, b]), derive_seed(master, &[b, a]));
    }
}
