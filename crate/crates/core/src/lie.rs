//! SE(3) / se(3) toolkit.
//!
//! Twists are laid out as `(v, w)`: linear part first, angular part second,
//! everywhere in this crate (vectors, adjoint matrices, Jacobians). Poses
//! store the rotation as a 3x3 matrix which is re-projected onto SO(3)
//! whenever composition drift exceeds [`DRIFT_TOL`].

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Below this rotation angle exp/log switch to Taylor branches.
pub const SMALL_ANGLE: f64 = 1e-8;
/// Log refuses rotations with angle >= pi - BRANCH_EPS (about 0.00057 deg).
pub const BRANCH_EPS: f64 = 1e-5;
/// Frobenius norm of `R^T R - I` above which a rotation is re-orthonormalized.
pub const DRIFT_TOL: f64 = 1e-7;

/// Angle below which the series expansions of the SE(3) Jacobian
/// coefficients are used.
const JACOBIAN_SERIES_ANGLE: f64 = 1e-3;

#[inline]
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

#[inline]
pub fn vee(m: &Mat3) -> Vec3 {
    Vec3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Element of se(3): linear part `v`, angular part `w`.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 6]", into = "[f64; 6]")]
pub struct Twist {
    pub v: Vec3,
    pub w: Vec3,
}

impl Twist {
    pub fn new(v: Vec3, w: Vec3) -> Self {
        Self { v, w }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self { v: Vec3::new(a[0], a[1], a[2]), w: Vec3::new(a[3], a[4], a[5]) }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.v.x, self.v.y, self.v.z, self.w.x, self.w.y, self.w.z]
    }

    pub fn from_vector(x: &Vector6<f64>) -> Self {
        Self { v: Vec3::new(x[0], x[1], x[2]), w: Vec3::new(x[3], x[4], x[5]) }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::from(self.to_array())
    }

    pub fn norm(&self) -> f64 {
        (self.v.norm_squared() + self.w.norm_squared()).sqrt()
    }

    pub fn dot(&self, other: &Twist) -> f64 {
        self.v.dot(&other.v) + self.w.dot(&other.w)
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Twist) -> f64 {
        (self.to_vector() - other.to_vector()).amax()
    }
}

impl From<[f64; 6]> for Twist {
    fn from(a: [f64; 6]) -> Self {
        Twist::from_array(a)
    }
}

impl From<Twist> for [f64; 6] {
    fn from(t: Twist) -> Self {
        t.to_array()
    }
}

impl Add for Twist {
    type Output = Twist;
    fn add(self, o: Twist) -> Twist {
        Twist::new(self.v + o.v, self.w + o.w)
    }
}

impl Sub for Twist {
    type Output = Twist;
    fn sub(self, o: Twist) -> Twist {
        Twist::new(self.v - o.v, self.w - o.w)
    }
}

impl Neg for Twist {
    type Output = Twist;
    fn neg(self) -> Twist {
        Twist::new(-self.v, -self.w)
    }
}

impl Mul<f64> for Twist {
    type Output = Twist;
    fn mul(self, s: f64) -> Twist {
        Twist::new(self.v * s, self.w * s)
    }
}

/// Rigid transform in SE(3).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoseRepr", into = "PoseRepr")]
pub struct Pose {
    rotation: Mat3,
    translation: Vec3,
}

/// Wire form: row-major rotation plus translation.
#[derive(Serialize, Deserialize)]
struct PoseRepr {
    rotation: [f64; 9],
    translation: [f64; 3],
}

impl From<Pose> for PoseRepr {
    fn from(p: Pose) -> Self {
        PoseRepr { rotation: p.rotation_row_major(), translation: [p.translation.x, p.translation.y, p.translation.z] }
    }
}

impl TryFrom<PoseRepr> for Pose {
    type Error = Error;
    fn try_from(r: PoseRepr) -> Result<Self> {
        let rot = Mat3::from_row_slice(&r.rotation);
        Pose::from_rotation_checked(rot, Vec3::from(r.translation))
    }
}

impl Default for Pose {
    fn default() -> Self {
        Pose::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Pose { rotation: Mat3::identity(), translation: Vec3::zeros() }
    }

    /// Builds a pose, re-projecting `rotation` onto SO(3) if it has drifted.
    pub fn new(rotation: Mat3, translation: Vec3) -> Self {
        Pose { rotation: maybe_reorthonormalize(rotation), translation }
    }

    /// Like [`Pose::new`] but rejects matrices that are far from a rotation
    /// (used for external input).
    pub fn from_rotation_checked(rotation: Mat3, translation: Vec3) -> Result<Self> {
        if !rotation.iter().all(|x| x.is_finite()) || !translation.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidArgument("non-finite pose entry".into()));
        }
        if orthonormality_drift(&rotation) > 1e-6 || rotation.determinant() < 0.0 {
            return Err(Error::InvalidArgument("rotation matrix is not orthonormal with det +1".into()));
        }
        Ok(Pose::new(rotation, translation))
    }

    pub fn from_translation(t: Vec3) -> Self {
        Pose { rotation: Mat3::identity(), translation: t }
    }

    pub fn from_rotation(r: Mat3) -> Self {
        Pose::new(r, Vec3::zeros())
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn rotation_row_major(&self) -> [f64; 9] {
        let r = &self.rotation;
        [r[(0, 0)], r[(0, 1)], r[(0, 2)], r[(1, 0)], r[(1, 1)], r[(1, 2)], r[(2, 0)], r[(2, 1)], r[(2, 2)]]
    }

    pub fn with_translation(&self, t: Vec3) -> Pose {
        Pose { rotation: self.rotation, translation: t }
    }

    pub fn inverse(&self) -> Pose {
        inverse(self)
    }

    pub fn transform_point(&self, pt: &Vec3) -> Vec3 {
        transform_point(self, pt)
    }

    /// `max |a_ij - b_ij|` over rotation and translation entries.
    pub fn max_abs_diff(&self, other: &Pose) -> f64 {
        (self.rotation - other.rotation).amax().max((self.translation - other.translation).amax())
    }
}

impl Mul for Pose {
    type Output = Pose;
    fn mul(self, rhs: Pose) -> Pose {
        compose(&self, &rhs)
    }
}

impl<'a> Mul<&'a Pose> for &'a Pose {
    type Output = Pose;
    fn mul(self, rhs: &Pose) -> Pose {
        compose(self, rhs)
    }
}

pub fn orthonormality_drift(r: &Mat3) -> f64 {
    (r.transpose() * r - Mat3::identity()).norm()
}

/// Nearest rotation in the Frobenius sense.
pub fn nearest_rotation(r: &Mat3) -> Mat3 {
    let svd = r.svd(true, true);
    let u = svd.u.expect("svd u");
    let vt = svd.v_t.expect("svd v_t");
    let mut d = Mat3::identity();
    if (u * vt).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    u * d * vt
}

fn maybe_reorthonormalize(r: Mat3) -> Mat3 {
    if orthonormality_drift(&r) > DRIFT_TOL {
        nearest_rotation(&r)
    } else {
        r
    }
}

pub fn so3_exp(w: &Vec3) -> Mat3 {
    let theta_sq = w.norm_squared();
    let theta = theta_sq.sqrt();
    let k = skew(w);
    let k2 = k * k;
    if theta < SMALL_ANGLE {
        Mat3::identity() + k + k2 * 0.5
    } else {
        let half = 0.5 * theta;
        let a = theta.sin() / theta;
        // 1 - cos(theta) = 2 sin^2(theta / 2), without cancellation
        let b = 2.0 * half.sin() * half.sin() / theta_sq;
        Mat3::identity() + k * a + k2 * b
    }
}

/// Principal-branch rotation logarithm.
pub fn so3_log(r: &Mat3) -> Result<Vec3> {
    let s = vee(&(r - r.transpose())) * 0.5;
    let sin_theta = s.norm();
    let cos_theta = 0.5 * (r.trace() - 1.0);
    let theta = sin_theta.atan2(cos_theta);
    if theta >= std::f64::consts::PI - BRANCH_EPS {
        return Err(Error::BranchCut { angle: theta });
    }
    if theta < SMALL_ANGLE {
        // sin(theta)/theta = 1 - theta^2/6 + ...
        Ok(s * (1.0 + theta * theta / 6.0))
    } else {
        Ok(s * (theta / sin_theta))
    }
}

/// Left Jacobian of SO(3) (also the V matrix of the SE(3) exponential).
pub fn so3_left_jacobian(w: &Vec3) -> Mat3 {
    let theta_sq = w.norm_squared();
    let theta = theta_sq.sqrt();
    let k = skew(w);
    let k2 = k * k;
    if theta < SMALL_ANGLE {
        Mat3::identity() + k * 0.5 + k2 * (1.0 / 6.0)
    } else {
        let half = 0.5 * theta;
        let a = 2.0 * half.sin() * half.sin() / theta_sq;
        let b = (theta - theta.sin()) / (theta_sq * theta);
        Mat3::identity() + k * a + k2 * b
    }
}

pub fn so3_left_jacobian_inv(w: &Vec3) -> Mat3 {
    let theta_sq = w.norm_squared();
    let theta = theta_sq.sqrt();
    let k = skew(w);
    let k2 = k * k;
    let c = if theta < 1e-4 {
        1.0 / 12.0 + theta_sq / 720.0
    } else {
        let half = 0.5 * theta;
        (1.0 - half / half.tan()) / theta_sq
    };
    Mat3::identity() - k * 0.5 + k2 * c
}

pub fn exp_map(xi: &Twist) -> Pose {
    let r = so3_exp(&xi.w);
    let t = so3_left_jacobian(&xi.w) * xi.v;
    Pose { rotation: r, translation: t }
}

/// Inverse of [`exp_map`] on the principal branch.
pub fn log_map(p: &Pose) -> Result<Twist> {
    let w = so3_log(&p.rotation)?;
    let v = so3_left_jacobian_inv(&w) * p.translation;
    Ok(Twist::new(v, w))
}

pub fn compose(a: &Pose, b: &Pose) -> Pose {
    Pose {
        rotation: maybe_reorthonormalize(a.rotation * b.rotation),
        translation: a.rotation * b.translation + a.translation,
    }
}

pub fn inverse(p: &Pose) -> Pose {
    let rt = p.rotation.transpose();
    Pose { rotation: rt, translation: -(rt * p.translation) }
}

/// `Ad_p(xi) = (R v + [t]x R w, R w)`.
pub fn adjoint(p: &Pose, xi: &Twist) -> Twist {
    let rw = p.rotation * xi.w;
    Twist::new(p.rotation * xi.v + p.translation.cross(&rw), rw)
}

pub fn adjoint_matrix(p: &Pose) -> Matrix6<f64> {
    let r = p.rotation;
    let tr = skew(&p.translation) * r;
    let mut m = Matrix6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    m.fixed_view_mut::<3, 3>(0, 3).copy_from(&tr);
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&r);
    m
}

/// Twist error `x (-) y = Log(x^-1 y)`.
pub fn pose_error(x: &Pose, y: &Pose) -> Result<Twist> {
    log_map(&compose(&inverse(x), y))
}

pub fn transform_point(p: &Pose, pt: &Vec3) -> Vec3 {
    p.rotation * pt + p.translation
}

fn se3_q_matrix(rho: &Vec3, phi: &Vec3) -> Mat3 {
    let theta_sq = phi.norm_squared();
    let theta = theta_sq.sqrt();
    let (a, b, c) = if theta < JACOBIAN_SERIES_ANGLE {
        (1.0 / 6.0 - theta_sq / 120.0, 1.0 / 24.0 - theta_sq / 720.0, 1.0 / 120.0 - theta_sq / 2520.0)
    } else {
        let (s, co) = theta.sin_cos();
        let t3 = theta_sq * theta;
        let t4 = theta_sq * theta_sq;
        (
            (theta - s) / t3,
            (theta_sq + 2.0 * co - 2.0) / (2.0 * t4),
            (2.0 * theta - 3.0 * s + theta * co) / (2.0 * t4 * theta),
        )
    };
    let rx = skew(rho);
    let px = skew(phi);
    let pr = px * rx;
    let rp = rx * px;
    let prp = pr * px;
    rx * 0.5 + (pr + rp + prp) * a + (px * pr + rp * px - prp * 3.0) * b + (prp * px + px * prp) * c
}

/// Left Jacobian of SE(3): `Exp(xi + d) ~= Exp(J_l(xi) d) Exp(xi)`.
pub fn se3_left_jacobian(xi: &Twist) -> Matrix6<f64> {
    let j = so3_left_jacobian(&xi.w);
    let q = se3_q_matrix(&xi.v, &xi.w);
    let mut m = Matrix6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&j);
    m.fixed_view_mut::<3, 3>(0, 3).copy_from(&q);
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&j);
    m
}

pub fn se3_left_jacobian_inv(xi: &Twist) -> Matrix6<f64> {
    let ji = so3_left_jacobian_inv(&xi.w);
    let q = se3_q_matrix(&xi.v, &xi.w);
    let mut m = Matrix6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&ji);
    m.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-(ji * q * ji)));
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&ji);
    m
}

/// Right Jacobian of SE(3): `Exp(xi + d) ~= Exp(xi) Exp(J_r(xi) d)`.
pub fn se3_right_jacobian(xi: &Twist) -> Matrix6<f64> {
    se3_left_jacobian(&-*xi)
}

/// `d Log(E Exp(eta)) / d eta` at `eta = 0`, evaluated at `xi = Log(E)`.
pub fn se3_right_jacobian_inv(xi: &Twist) -> Matrix6<f64> {
    se3_left_jacobian_inv(&-*xi)
}
