//! End-to-end synthetic pipeline: motion maps, part clustering and
//! matching, center/delta factor graph, tangent-similarity score.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{
    detect_parts, match_detections, select_base_and_mover, ClusterConfig, MapDetections, PartTrajectory,
};
use crate::error::{Error, Result};
use crate::experiment::{score_estimate, NOISE_FLOOR_ORI_DEG, NOISE_FLOOR_POS};
use crate::factor_graph::{build_problem_for_parts, NoiseSpec, Observation};
use crate::joint::JointType;
use crate::lie::Vec3;
use crate::rng::derive_seed;
use crate::solver::{solve, SolveResult, SolverConfig};
use crate::synth::{
    generate_ground_truth, generate_motion_map_sequence, GroundTruth, ImageConfig, PixelJitter, SceneSpec,
};

/// Attempts made by [`trackable_scene`] before giving up.
pub const MAX_SCENE_ATTEMPTS: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub image: ImageConfig,
    pub jitter: PixelJitter,
    pub cluster: ClusterConfig,
    pub solver: SolverConfig,
    pub joint_constraint: JointType,
    /// Minimum 3-D distance between part centers accepted by [`trackable_scene`].
    pub min_separation: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            image: ImageConfig::default(),
            jitter: PixelJitter::default(),
            cluster: ClusterConfig::default(),
            solver: SolverConfig::default(),
            joint_constraint: JointType::Unconstrained,
            min_separation: 0.3,
        }
    }
}

impl PipelineConfig {
    /// Isotropic per-pixel jitter on centers and both delta components.
    pub fn with_jitter(self, sigma: f64) -> Self {
        PipelineConfig { jitter: PixelJitter { center: sigma, delta_v: sigma, delta_w: sigma }, ..self }
    }
}

/// Whether both parts stay fully on screen, apart in space, and apart in the
/// image over the whole sequence.
pub fn is_trackable(gt: &GroundTruth, cfg: &PipelineConfig) -> bool {
    let img = &cfg.image;
    let cam = img.camera_from_world();
    let r = img.disk_radius;
    let inside =
        |(u, v): (f64, f64)| u >= r && v >= r && u <= img.width as f64 - 1.0 - r && v <= img.height as f64 - 1.0 - r;
    (0..gt.horizon()).all(|t| {
        let a = cam.transform_point(gt.poses_a[t].translation());
        let b = cam.transform_point(gt.poses_b[t].translation());
        match (img.project(&a), img.project(&b)) {
            (Some(pa), Some(pb)) => {
                inside(pa)
                    && inside(pb)
                    && (a - b).norm() >= cfg.min_separation
                    && (pa.0 - pb.0).hypot(pa.1 - pb.1) >= r
            }
            _ => false,
        }
    })
}

/// First scene derived from `base.seed` that passes [`is_trackable`]; the
/// returned spec carries the accepted seed.
pub fn trackable_scene(base: &SceneSpec, cfg: &PipelineConfig) -> Result<SceneSpec> {
    for attempt in 0..MAX_SCENE_ATTEMPTS {
        let spec = SceneSpec { seed: derive_seed(base.seed, &[attempt as u64]), ..*base };
        if is_trackable(&generate_ground_truth(&spec)?, cfg) {
            return Ok(spec);
        }
    }
    Err(Error::InvalidProblem(format!("no trackable scene in {MAX_SCENE_ATTEMPTS} attempts")))
}

/// Center observations for every timestep (the last one advanced by the
/// final delta) plus one delta per transition.
pub fn trajectory_observations(tr: &PartTrajectory, part: i64) -> Result<Vec<Observation>> {
    let last = tr.predicted_center().ok_or_else(|| Error::InvalidProblem("empty trajectory".into()))?;
    let mut out = Vec::with_capacity(2 * tr.len() + 1);
    for (t, (c, d)) in tr.centers.iter().zip(&tr.deltas).enumerate() {
        out.push(Observation::center(part, t, *c));
        out.push(Observation::delta(part, t, *d));
    }
    out.push(Observation::center(part, tr.len(), last));
    Ok(out)
}

/// Observations for every trajectory, tagged with the trajectory index as
/// part id.
pub fn pipeline_observations(trajectories: &[PartTrajectory]) -> Result<Vec<Observation>> {
    let mut out = Vec::new();
    for (i, tr) in trajectories.iter().enumerate() {
        out.extend(trajectory_observations(tr, i as i64)?);
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PipelineOutcome {
    pub scene: SceneSpec,
    pub maps: Vec<MapDetections>,
    pub trajectories: Vec<PartTrajectory>,
    pub base: usize,
    pub mover: usize,
    pub solve: SolveResult,
    pub j: f64,
}

impl PipelineOutcome {
    pub fn cluster_counts(&self) -> Vec<usize> {
        self.maps.iter().map(|m| m.k).collect()
    }
}

/// Per-map detections and the matched trajectories for a scene.
pub fn track_parts(
    gt: &GroundTruth,
    seed: u64,
    cfg: &PipelineConfig,
) -> Result<(Vec<MapDetections>, Vec<PartTrajectory>)> {
    let maps = generate_motion_map_sequence(gt, &cfg.image, &cfg.jitter, seed)?;
    let detections: Vec<MapDetections> = maps
        .par_iter()
        .enumerate()
        .map(|(t, m)| detect_parts(m, &cfg.cluster, derive_seed(seed, &[0xc1, t as u64])))
        .collect::<Result<_>>()?;
    let mut trajectories = Vec::new();
    for (t, d) in detections.iter().enumerate() {
        match_detections(&mut trajectories, t, &d.detections);
    }
    Ok((detections, trajectories))
}

pub fn run_pipeline(scene: &SceneSpec, cfg: &PipelineConfig) -> Result<PipelineOutcome> {
    let gt = generate_ground_truth(scene)?;
    let (maps, trajectories) = track_parts(&gt, scene.seed, cfg)?;
    if trajectories.len() < 2 {
        let ks: Vec<usize> = maps.iter().map(|m| m.k).collect();
        return Err(Error::Clustering(format!(
            "tracked {} part(s); cluster counts per map: {ks:?}",
            trajectories.len()
        )));
    }
    let (base, mover) = select_base_and_mover(&trajectories)?;
    let obs = pipeline_observations(&trajectories)?;
    let noise = NoiseSpec::new(NOISE_FLOOR_POS, NOISE_FLOOR_ORI_DEG.to_radians())?;
    let problem = build_problem_for_parts(&obs, noise, cfg.joint_constraint, base as i64, mover as i64)?;
    let solver = SolverConfig { master_seed: derive_seed(scene.seed, &[0x501e]), ..cfg.solver };
    let result = solve(&problem, &solver)?;

    let camera_gt = gt.shifted(cfg.image.camera_from_world().translation());
    let x0 = trajectories[mover].centers[0];
    let j = score_estimate(&camera_gt, &result.assignment, &x0)?;
    Ok(PipelineOutcome { scene: *scene, maps, trajectories, base, mover, solve: result, j })
}

/// Center of part `part` (0 base, 1 mover) at timestep `t` in the camera
/// frame used by the motion maps.
pub fn true_camera_center(gt: &GroundTruth, image: &ImageConfig, part: usize, t: usize) -> Vec3 {
    let poses = if part == 0 { &gt.poses_a } else { &gt.poses_b };
    image.camera_from_world().transform_point(poses[t].translation())
}
