//! Twist-joint articulation model.
//!
//! A single-DoF joint between parts `a` and `b` is described by the pose of
//! `b` relative to `a`: `f(q) = T_twist * Exp(q * nu)`.

use nalgebra::Matrix6;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie::{compose, exp_map, Pose, Twist, Vec3};

const UNIT_TOL: f64 = 1e-9;
const DEGENERATE_OMEGA: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointType {
    /// `w = 0`.
    Prismatic,
    /// Zero pitch: `v . w = 0`.
    Revolute,
    /// General screw; no constraint.
    #[serde(alias = "helical")]
    Unconstrained,
}

impl JointType {
    pub fn name(&self) -> &'static str {
        match self {
            JointType::Prismatic => "prismatic",
            JointType::Revolute => "revolute",
            JointType::Unconstrained => "unconstrained",
        }
    }
}

impl std::str::FromStr for JointType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "prismatic" => Ok(JointType::Prismatic),
            "revolute" => Ok(JointType::Revolute),
            "unconstrained" | "helical" => Ok(JointType::Unconstrained),
            other => Err(Error::InvalidArgument(format!("unknown joint type '{other}'"))),
        }
    }
}

impl std::fmt::Display for JointType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Time-invariant joint parameters plus per-timestep configurations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointModel {
    pub nu: Twist,
    pub t_twist: Pose,
    pub q: Vec<f64>,
}

impl JointModel {
    pub fn pose_at(&self, t: usize) -> Pose {
        f_twist(self.q[t], &self.nu, &self.t_twist)
    }

    /// Removes the `(q, nu)` scale gauge: `|nu| = 1` and the largest-magnitude
    /// component of `w` (or of `v` when `w = 0`) is positive. `q` is rescaled
    /// so that every `f_twist(q_t)` is unchanged.
    pub fn normalized(&self) -> JointModel {
        let n = self.nu.norm();
        if n == 0.0 {
            return self.clone();
        }
        let lead = if self.nu.w.amax() > 0.0 { self.nu.w[self.nu.w.iamax()] } else { self.nu.v[self.nu.v.iamax()] };
        let s = if lead < 0.0 { -n } else { n };
        JointModel { nu: self.nu * (1.0 / s), t_twist: self.t_twist, q: self.q.iter().map(|q| q * s).collect() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("joint model serializes")
    }
}

pub fn f_twist(q: f64, nu: &Twist, t_twist: &Pose) -> Pose {
    compose(t_twist, &exp_map(&(*nu * q)))
}

fn check_unit(v: &Vec3, what: &str) -> Result<()> {
    if !v.iter().all(|x| x.is_finite()) || (v.norm() - 1.0).abs() > UNIT_TOL {
        return Err(Error::InvalidArgument(format!("{what} must be a unit vector (norm = {})", v.norm())));
    }
    Ok(())
}

pub fn canonical_prismatic(direction: &Vec3) -> Result<Twist> {
    check_unit(direction, "prismatic direction")?;
    Ok(Twist::new(*direction, Vec3::zeros()))
}

/// Pure rotation about the line through `point_on_axis` along `axis`.
pub fn canonical_revolute(axis: &Vec3, point_on_axis: &Vec3) -> Result<Twist> {
    check_unit(axis, "revolute axis")?;
    Ok(Twist::new(-axis.cross(point_on_axis), *axis))
}

/// Maps a twist onto the constraint set of `tag`.
///
/// Prismatic zeroes `w`; revolute removes the component of `v` along `w`.
pub fn project_joint_type(nu: &Twist, tag: JointType) -> Result<Twist> {
    match tag {
        JointType::Unconstrained => Ok(*nu),
        JointType::Prismatic => Ok(Twist::new(nu.v, Vec3::zeros())),
        JointType::Revolute => {
            let ww = nu.w.norm_squared();
            if ww.sqrt() < DEGENERATE_OMEGA {
                return Err(Error::Degenerate("revolute projection needs a nonzero angular part".into()));
            }
            let v = nu.v - nu.w * (nu.v.dot(&nu.w) / ww);
            Ok(Twist::new(v, nu.w))
        }
    }
}

/// Orthogonal projector onto the tangent space of the constraint set at `nu`.
/// Solver updates of `nu` are mapped through it before retraction.
pub fn constraint_tangent_projector(nu: &Twist, tag: JointType) -> Matrix6<f64> {
    match tag {
        JointType::Unconstrained => Matrix6::identity(),
        JointType::Prismatic => Matrix6::from_diagonal(&nalgebra::Vector6::new(1.0, 1.0, 1.0, 0.0, 0.0, 0.0)),
        JointType::Revolute => {
            // gradient of v . w with respect to (v, w) is (w, v)
            let n = Twist::new(nu.w, nu.v).to_vector();
            let nn = n.norm_squared();
            if nn == 0.0 {
                Matrix6::identity()
            } else {
                Matrix6::identity() - n * n.transpose() / nn
            }
        }
    }
}

/// Whether `nu` satisfies the constraint of `tag` to within `tol`.
pub fn satisfies(nu: &Twist, tag: JointType, tol: f64) -> bool {
    match tag {
        JointType::Unconstrained => true,
        JointType::Prismatic => nu.w.amax() <= tol,
        JointType::Revolute => nu.v.dot(&nu.w).abs() <= tol,
    }
}
