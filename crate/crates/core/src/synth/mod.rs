//! Synthetic two-part scenes: ground truth, noisy pose observations, derived
//! center/delta observations, and dense motion maps.
//!
//! Ground-truth draws, in stream order: base orientation, `T_aj` (rotation
//! then position), `T_jb` (rotation then position), canonical joint direction.

mod motion_map;

pub use motion_map::{generate_motion_map_sequence, ImageConfig, MotionMap, PixelJitter};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor_graph::Observation;
use crate::joint::{JointModel, JointType};
use crate::lie::{adjoint, compose, exp_map, inverse, log_map, Pose, Twist, Vec3};
use crate::rng::{
    gaussian, random_rotation, stream_rng, uniform_box, unit_vector, STREAM_GROUND_TRUTH, STREAM_PERTURBATION,
};

/// Half-width of the position box for `T_aj` and `T_jb` (meters).
pub const FRAME_POSITION_RANGE: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub joint_type: JointType,
    /// Number of observations `T`.
    pub n_obs: usize,
    /// Motion range: meters (prismatic) or radians (revolute).
    pub q_max: f64,
    pub sigma_pos: f64,
    pub sigma_ori: f64,
    pub seed: u64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_obs < 2 {
            return Err(Error::InvalidArgument("scene needs at least two observations".into()));
        }
        if self.joint_type == JointType::Unconstrained {
            return Err(Error::InvalidArgument("scene joint type must be prismatic or revolute".into()));
        }
        if !(self.q_max.is_finite() && self.sigma_pos >= 0.0 && self.sigma_ori >= 0.0) {
            return Err(Error::InvalidArgument(format!("invalid scene parameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub poses_a: Vec<Pose>,
    pub poses_b: Vec<Pose>,
    /// Joint in factor-graph form: `x_a^-1 x_b = T_twist Exp(q nu)`, `|nu| = 1`.
    pub joint: JointModel,
    pub t_aj: Pose,
    pub t_jb: Pose,
    /// Canonical unit twist in the joint frame.
    pub canonical_nu: Twist,
    /// Unit twist of part b's motion in the world frame, `x_b(q) = Exp(q nu_w) x_b(0)`.
    pub world_twist: Twist,
    pub q_max: f64,
    /// Part b's position at `q = 0`.
    pub grasp_point: Vec3,
}

impl GroundTruth {
    pub fn horizon(&self) -> usize {
        self.poses_a.len()
    }

    /// Same scene expressed after a world translation by `offset`.
    pub fn shifted(&self, offset: &Vec3) -> GroundTruth {
        let shift = Pose::from_translation(*offset);
        let mv = |p: &Pose| compose(&shift, p);
        GroundTruth {
            poses_a: self.poses_a.iter().map(mv).collect(),
            poses_b: self.poses_b.iter().map(mv).collect(),
            joint: self.joint.clone(),
            t_aj: self.t_aj,
            t_jb: self.t_jb,
            canonical_nu: self.canonical_nu,
            world_twist: adjoint(&shift, &self.world_twist),
            q_max: self.q_max,
            grasp_point: self.grasp_point + offset,
        }
    }
}

fn ramp(t: usize, n: usize) -> f64 {
    t as f64 / (n - 1) as f64
}

pub fn generate_ground_truth(spec: &SceneSpec) -> Result<GroundTruth> {
    spec.validate()?;
    let n = spec.n_obs;
    let mut rng = stream_rng(spec.seed, STREAM_GROUND_TRUTH);
    let base = Pose::from_rotation(random_rotation(&mut rng));
    let rot_aj = random_rotation(&mut rng);
    let t_aj = Pose::new(rot_aj, uniform_box(&mut rng, FRAME_POSITION_RANGE));
    let rot_jb = random_rotation(&mut rng);
    let t_jb = Pose::new(rot_jb, uniform_box(&mut rng, FRAME_POSITION_RANGE));
    let dir = unit_vector(&mut rng);
    let canonical_nu = match spec.joint_type {
        JointType::Prismatic => Twist::new(dir, Vec3::zeros()),
        _ => Twist::new(Vec3::zeros(), dir),
    };

    let poses_a: Vec<Pose> = vec![base; n];
    let poses_b: Vec<Pose> = (0..n)
        .map(|t| {
            let m = exp_map(&(canonical_nu * (ramp(t, n) * spec.q_max)));
            compose(&compose(&compose(&base, &t_aj), &m), &t_jb)
        })
        .collect();

    let mean = poses_a.iter().chain(poses_b.iter()).map(|p| *p.translation()).sum::<Vec3>() / (2 * n) as f64;
    let shift = -mean;
    let centered = |p: &Pose| p.with_translation(p.translation() + shift);
    let poses_a: Vec<Pose> = poses_a.iter().map(centered).collect();
    let poses_b: Vec<Pose> = poses_b.iter().map(centered).collect();

    let fg_nu = adjoint(&inverse(&t_jb), &canonical_nu);
    let scale = fg_nu.norm();
    let joint = JointModel {
        nu: fg_nu * (1.0 / scale),
        t_twist: compose(&t_aj, &t_jb),
        q: (0..n).map(|t| ramp(t, n) * spec.q_max * scale).collect(),
    };
    let world_twist = adjoint(&compose(&poses_a[0], &t_aj), &canonical_nu);
    let grasp_point = *poses_b[0].translation();

    Ok(GroundTruth { poses_a, poses_b, joint, t_aj, t_jb, canonical_nu, world_twist, q_max: spec.q_max, grasp_point })
}

/// Full-pose observations `z = x Exp(nu_perp)`, `nu_perp ~ N(0, diag(s_p^2 I3, s_o^2 I3))`.
/// Part ids are 0 (base) and 1 (mover); draws are ordered by timestep, then part.
pub fn perturb_poses(gt: &GroundTruth, spec: &SceneSpec) -> Vec<Observation> {
    let mut rng = stream_rng(spec.seed, STREAM_PERTURBATION);
    let mut out = Vec::with_capacity(2 * gt.horizon());
    for t in 0..gt.horizon() {
        for (part, x) in [(0, &gt.poses_a[t]), (1, &gt.poses_b[t])] {
            let mut a = [0.0; 6];
            for (i, slot) in a.iter_mut().enumerate() {
                let s = if i < 3 { spec.sigma_pos } else { spec.sigma_ori };
                *slot = gaussian(&mut rng) * s;
            }
            let z = compose(x, &exp_map(&Twist::from_array(a)));
            out.push(Observation::pose(part, t, z));
        }
    }
    out
}

/// Center observations for every timestep and world-frame deltas
/// `delta_t = Log(x_{t+1} x_t^-1)` for `t < T - 1`. `parts[k]` gets part id `k`.
pub fn derive_center_delta_observations(parts: &[Vec<Pose>]) -> Result<Vec<Observation>> {
    let mut out = Vec::new();
    let horizon = parts.iter().map(|p| p.len()).max().unwrap_or(0);
    if horizon < 2 {
        return Err(Error::InvalidArgument("need at least two timesteps".into()));
    }
    for t in 0..horizon {
        for (k, poses) in parts.iter().enumerate() {
            if t >= poses.len() {
                continue;
            }
            out.push(Observation::center(k as i64, t, *poses[t].translation()));
            if t + 1 < poses.len() {
                let d = log_map(&compose(&poses[t + 1], &inverse(&poses[t])))?;
                out.push(Observation::delta(k as i64, t, d));
            }
        }
    }
    Ok(out)
}
