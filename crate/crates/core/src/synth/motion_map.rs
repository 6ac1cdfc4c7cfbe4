use rand::Rng;
use serde::{Deserialize, Serialize};

use super::GroundTruth;
use crate::error::{Error, Result};
use crate::lie::{compose, inverse, log_map, Pose, Twist, Vec3};
use crate::rng::{gaussian, stream_rng, uniform_box, STREAM_MOTION_MAP};

/// Fixed pinhole camera looking down +z, plus the disk/decay parameters of
/// the synthetic feature maps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageConfig {
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    pub disk_radius: f64,
    /// Importance decay per pixel of distance.
    pub beta_decay: f64,
    /// Camera-frame depth of the world origin (meters).
    pub depth_offset: f64,
    /// Upper bound of background importance.
    pub background_beta: f64,
}

impl Default for ImageConfig {
    fn default() -> Self {
        ImageConfig {
            width: 64,
            height: 48,
            focal: 50.0,
            disk_radius: 8.0,
            beta_decay: 0.25,
            depth_offset: 2.5,
            background_beta: 1e-3,
        }
    }
}

impl ImageConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.width > 0
            && self.height > 0
            && self.focal > 0.0
            && self.disk_radius > 0.0
            && self.beta_decay >= 0.0
            && (0.0..1.0).contains(&self.background_beta);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid image config {self:?}")))
        }
    }

    pub fn principal_point(&self) -> (f64, f64) {
        (self.width as f64 / 2.0, self.height as f64 / 2.0)
    }

    /// World-to-camera transform.
    pub fn camera_from_world(&self) -> Pose {
        Pose::from_translation(Vec3::new(0.0, 0.0, self.depth_offset))
    }

    /// Pixel coordinates of a camera-frame point, `None` behind the camera.
    pub fn project(&self, p: &Vec3) -> Option<(f64, f64)> {
        if p.z <= 1e-6 {
            return None;
        }
        let (cx, cy) = self.principal_point();
        Some((cx + self.focal * p.x / p.z, cy + self.focal * p.y / p.z))
    }

    pub fn in_bounds(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u <= (self.width - 1) as f64 && v <= (self.height - 1) as f64
    }
}

/// Per-pixel feature jitter (standard deviations; zero disables).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PixelJitter {
    pub center: f64,
    pub delta_v: f64,
    pub delta_w: f64,
}

impl PixelJitter {
    pub fn validate(&self) -> Result<()> {
        if [self.center, self.delta_v, self.delta_w].iter().all(|s| s.is_finite() && *s >= 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid pixel jitter {self:?}")))
        }
    }
}

/// Dense per-pixel motion features at one timestep, row-major, camera frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionMap {
    pub width: usize,
    pub height: usize,
    pub beta: Vec<f64>,
    pub center: Vec<Vec3>,
    pub delta: Vec<Twist>,
    /// Generating part per pixel (`None` for background).
    pub label: Vec<Option<usize>>,
    /// Parts whose center projected outside the image.
    pub missing: Vec<usize>,
}

impl MotionMap {
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }
}

/// One map per transition `t -> t+1` (so `T - 1` maps). Part 0 is the base,
/// part 1 the mover; features are expressed in the camera frame.
pub fn generate_motion_map_sequence(
    gt: &GroundTruth,
    image: &ImageConfig,
    jitter: &PixelJitter,
    seed: u64,
) -> Result<Vec<MotionMap>> {
    image.validate()?;
    jitter.validate()?;
    if gt.horizon() < 2 {
        return Err(Error::InvalidArgument("need at least two timesteps".into()));
    }
    let cam = image.camera_from_world();
    let mut rng = stream_rng(seed, STREAM_MOTION_MAP);
    let n_pix = image.width * image.height;
    let parts = [&gt.poses_a, &gt.poses_b];

    let mut maps = Vec::with_capacity(gt.horizon() - 1);
    for t in 0..gt.horizon() - 1 {
        let mut centers = Vec::new();
        let mut deltas = Vec::new();
        let mut proj = Vec::new();
        let mut missing = Vec::new();
        for (k, poses) in parts.iter().enumerate() {
            let x0 = compose(&cam, &poses[t]);
            let x1 = compose(&cam, &poses[t + 1]);
            let c = *x0.translation();
            let d = log_map(&compose(&x1, &inverse(&x0)))?;
            centers.push(c);
            deltas.push(d);
            match image.project(&c).filter(|(u, v)| image.in_bounds(*u, *v)) {
                Some(uv) => proj.push(Some(uv)),
                None => {
                    proj.push(None);
                    missing.push(k);
                }
            }
        }

        let mut map = MotionMap {
            width: image.width,
            height: image.height,
            beta: vec![0.0; n_pix],
            center: vec![Vec3::zeros(); n_pix],
            delta: vec![Twist::zero(); n_pix],
            label: vec![None; n_pix],
            missing,
        };
        for y in 0..image.height {
            for x in 0..image.width {
                let i = map.index(x, y);
                let nearest = proj
                    .iter()
                    .enumerate()
                    .filter_map(|(k, p)| p.map(|(u, v)| (k, ((x as f64 - u).powi(2) + (y as f64 - v).powi(2)).sqrt())))
                    .filter(|(_, d)| *d <= image.disk_radius)
                    .min_by(|a, b| a.1.total_cmp(&b.1));
                match nearest {
                    Some((k, dist)) => {
                        map.beta[i] = (-image.beta_decay * dist).exp();
                        map.center[i] = centers[k] + jitter_vec(&mut rng, jitter.center);
                        map.delta[i] = deltas[k]
                            + Twist::new(jitter_vec(&mut rng, jitter.delta_v), jitter_vec(&mut rng, jitter.delta_w));
                        map.label[i] = Some(k);
                    }
                    None => {
                        map.beta[i] = rng.random_range(0.0..=image.background_beta);
                        map.center[i] = uniform_box(&mut rng, 1.0) + Vec3::new(0.0, 0.0, image.depth_offset);
                        map.delta[i] = Twist::new(uniform_box(&mut rng, 0.05), uniform_box(&mut rng, 0.05));
                    }
                }
            }
        }
        maps.push(map);
    }
    Ok(maps)
}

fn jitter_vec<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> Vec3 {
    if sigma == 0.0 {
        return Vec3::zeros();
    }
    Vec3::new(gaussian(rng), gaussian(rng), gaussian(rng)) * sigma
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::joint::JointModel;
    use crate::lie::exp_map;
    use crate::synth::{generate_ground_truth, SceneSpec};
    use crate::JointType;

    fn static_scene(mover_offset: Vec3) -> GroundTruth {
        let a = Pose::identity();
        let b = Pose::from_translation(mover_offset);
        let step = Twist::new(Vec3::new(0.02, 0.0, 0.0), Vec3::zeros());
        let poses_b = (0..4).map(|t| compose(&exp_map(&(step * t as f64)), &b)).collect();
        GroundTruth {
            poses_a: vec![a; 4],
            poses_b,
            joint: JointModel { nu: step * 50.0, t_twist: b, q: vec![0.0, 0.02, 0.04, 0.06] },
            t_aj: Pose::identity(),
            t_jb: b,
            canonical_nu: step * 50.0,
            world_twist: step * 50.0,
            q_max: 0.06,
            grasp_point: mover_offset,
        }
    }

    #[test]
    fn center_pixel_has_unit_importance() {
        let gt = static_scene(Vec3::new(0.6, 0.0, 0.0));
        let cfg = ImageConfig::default();
        let maps = generate_motion_map_sequence(&gt, &cfg, &PixelJitter::default(), 1).unwrap();
        assert_eq!(maps.len(), 3);
        let m = &maps[0];
        let i = m.index(32, 24);
        assert_eq!(m.beta[i], 1.0);
        assert_eq!(m.label[i], Some(0));
        assert_eq!(m.delta[i], Twist::zero());
        assert_eq!(m.center[i], Vec3::new(0.0, 0.0, 2.5));
    }

    #[test]
    fn zero_jitter_pixels_share_features() {
        let spec = SceneSpec {
            joint_type: JointType::Revolute,
            n_obs: 5,
            q_max: 1.0,
            sigma_pos: 0.0,
            sigma_ori: 0.0,
            seed: 4,
        };
        let gt = generate_ground_truth(&spec).unwrap();
        let cfg = ImageConfig::default();
        let maps = generate_motion_map_sequence(&gt, &cfg, &PixelJitter::default(), 9).unwrap();
        for m in &maps {
            for k in 0..2 {
                let px: Vec<usize> = (0..m.len()).filter(|&i| m.label[i] == Some(k)).collect();
                for &i in &px {
                    assert_eq!(m.center[i], m.center[px[0]]);
                    assert_eq!(m.delta[i], m.delta[px[0]]);
                    assert!(m.beta[i] > 0.13 && m.beta[i] <= 1.0);
                    if k == 0 {
                        assert!(m.delta[i].norm() < 1e-12);
                    }
                }
            }
            assert!(m.beta.iter().all(|b| (0.0..=1.0).contains(b)));
        }
        assert_eq!(maps, generate_motion_map_sequence(&gt, &cfg, &PixelJitter::default(), 9).unwrap());
    }

    #[test]
    fn off_image_part_is_missing() {
        let gt = static_scene(Vec3::new(5.0, 0.0, 0.0));
        let maps = generate_motion_map_sequence(&gt, &ImageConfig::default(), &PixelJitter::default(), 1).unwrap();
        assert!(maps.iter().all(|m| m.missing == vec![1]));
        assert!(maps.iter().all(|m| m.label.iter().all(|l| *l != Some(1))));
    }

    #[test]
    fn jitter_rejects_negative() {
        let gt = static_scene(Vec3::new(0.6, 0.0, 0.0));
        let j = PixelJitter { center: -1.0, ..Default::default() };
        assert!(generate_motion_map_sequence(&gt, &ImageConfig::default(), &j, 1).is_err());
    }
}
