//! Tangent similarity between a true and a predicted joint twist, measured by
//! the linear velocity each twist induces at a grasp point moving along the
//! true joint path.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie::{exp_map, transform_point, Twist, Vec3};

pub const DEFAULT_SAMPLES: usize = 100;
/// Velocities shorter than this cannot be normalized.
pub const ZERO_VELOCITY_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraspSpec {
    /// Grasp point at `q = 0`.
    pub x0: Vec3,
    pub q_min: f64,
    pub q_max: f64,
    pub n_samples: usize,
}

impl GraspSpec {
    pub fn new(x0: Vec3, q_min: f64, q_max: f64) -> Result<GraspSpec> {
        GraspSpec { x0, q_min, q_max, n_samples: DEFAULT_SAMPLES }.validated()
    }

    pub fn with_samples(self, n_samples: usize) -> Result<GraspSpec> {
        GraspSpec { n_samples, ..self }.validated()
    }

    fn validated(self) -> Result<GraspSpec> {
        if !self.q_min.is_finite() || !self.q_max.is_finite() || self.q_max <= self.q_min {
            return Err(Error::InvalidArgument(format!("need q_max > q_min, got [{}, {}]", self.q_min, self.q_max)));
        }
        if self.n_samples < 2 {
            return Err(Error::InvalidArgument("need at least two samples".into()));
        }
        if !self.x0.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidArgument("grasp point must be finite".into()));
        }
        Ok(self)
    }

    /// Midpoints of `n_samples` equal subintervals of `[q_min, q_max]`.
    pub fn sample_points(&self) -> impl Iterator<Item = f64> + '_ {
        let step = (self.q_max - self.q_min) / self.n_samples as f64;
        (0..self.n_samples).map(move |i| self.q_min + step * (i as f64 + 0.5))
    }
}

/// Screw axis in Plücker form plus rotation and displacement along it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScrewParams {
    pub l: Vec3,
    pub m: Vec3,
    pub theta: f64,
    pub d: f64,
}

impl ScrewParams {
    pub fn validate(&self) -> Result<()> {
        if (self.l.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("screw direction not unit (|l| = {})", self.l.norm())));
        }
        if self.l.dot(&self.m).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("Plucker constraint violated (l.m = {})", self.l.dot(&self.m))));
        }
        if !(self.theta.is_finite() && self.d.is_finite() && self.m.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidArgument("screw parameters must be finite".into()));
        }
        Ok(())
    }
}

/// Twist of a screw motion with `m = p x l`: `v = theta m + d l`, `w = theta l`.
/// Points on the axis move only along `l`.
pub fn screw_to_twist(s: &ScrewParams) -> Result<Twist> {
    s.validate()?;
    Ok(Twist::new(s.m * s.theta + s.l * s.d, s.l * s.theta))
}

/// `x(q) = Exp(q nu) x0`.
pub fn grasp_path(q: f64, nu: &Twist, x0: &Vec3) -> Vec3 {
    transform_point(&exp_map(&(*nu * q)), x0)
}

/// Linear velocity of the point `x` under `nu`: `v + w x x`.
pub fn point_velocity(nu: &Twist, x: &Vec3) -> Vec3 {
    nu.v + nu.w.cross(x)
}

pub fn linear_velocity(nu: &Twist, q: f64, x0: &Vec3) -> Vec3 {
    point_velocity(nu, &grasp_path(q, nu, x0))
}

fn cosine(a: &Vec3, b: &Vec3, q: f64) -> Result<f64> {
    let (na, nb) = (a.norm(), b.norm());
    if na < ZERO_VELOCITY_TOL || nb < ZERO_VELOCITY_TOL || !na.is_finite() || !nb.is_finite() {
        return Err(Error::ZeroVelocity { q });
    }
    Ok((a.dot(b) / (na * nb)).clamp(-1.0, 1.0))
}

pub fn tangent_similarity(nu_true: &Twist, nu_pred: &Twist, g: &GraspSpec) -> Result<f64> {
    g.validated()?;
    let mut sum = 0.0;
    for q in g.sample_points() {
        let x = grasp_path(q, nu_true, &g.x0);
        sum += cosine(&point_velocity(nu_true, &x), &point_velocity(nu_pred, &x), q)?;
    }
    Ok(sum / g.n_samples as f64)
}

pub fn tangent_similarity_scaled(nu_true: &Twist, nu_pred: &Twist, g: &GraspSpec, c: f64) -> Result<f64> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidArgument(format!("scale must be positive, got {c}")));
    }
    tangent_similarity(nu_true, &(*nu_pred * c), g)
}

/// Mean cosine of per-timestep velocities at per-timestep grasp points.
pub fn time_indexed_similarity(true_twists: &[Twist], pred_twists: &[Twist], grasp_points: &[Vec3]) -> Result<f64> {
    let n = true_twists.len();
    if n == 0 || pred_twists.len() != n || grasp_points.len() != n {
        return Err(Error::InvalidArgument(format!(
            "sequence lengths must match and be nonzero ({n}, {}, {})",
            pred_twists.len(),
            grasp_points.len()
        )));
    }
    let mut sum = 0.0;
    for (t, ((a, b), x)) in true_twists.iter().zip(pred_twists).zip(grasp_points).enumerate() {
        sum += cosine(&point_velocity(a, x), &point_velocity(b, x), t as f64)?;
    }
    Ok(sum / n as f64)
}
