//! Factor graph for two-part articulation estimation.
//!
//! Latent variables are one pose per part per timestep, the per-timestep
//! joint configuration `q_t`, and the time-invariant `(nu, T_twist)`. Every
//! measurement factor contributes `L_delta(d_i)` with `d_i` the whitened
//! residual norm and `L_delta` the Huber loss. Gauge priors (unit-norm `nu`,
//! weak orientation anchors) are plain quadratic terms.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::joint::{constraint_tangent_projector, f_twist, JointModel, JointType};
use crate::lie::{
    adjoint_matrix, compose, exp_map, inverse, log_map, se3_right_jacobian, se3_right_jacobian_inv, skew,
    so3_left_jacobian_inv, so3_log, Pose, Twist, Vec3,
};

pub const DEFAULT_HUBER_DELTA: f64 = 0.01;
/// Information weight of the `(|nu|^2 - 1)` gauge prior.
pub const UNIT_NORM_WEIGHT: f64 = 1e2;
/// Standard deviation (rad) of the weak orientation anchor.
pub const ORIENTATION_PRIOR_SIGMA: f64 = 10.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    FullPose(Pose),
    Center(Vec3),
    /// World/camera-frame motion from `t` to `t + 1`: `x_{t+1} = Exp(delta) x_t`.
    Delta(Twist),
}

impl Payload {
    fn rank(&self) -> u8 {
        match self {
            Payload::FullPose(_) => 0,
            Payload::Center(_) => 1,
            Payload::Delta(_) => 2,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Payload::FullPose(_) => "pose",
            Payload::Center(_) => "center",
            Payload::Delta(_) => "delta",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub part: i64,
    pub timestep: usize,
    pub payload: Payload,
}

impl Observation {
    pub fn pose(part: i64, timestep: usize, z: Pose) -> Self {
        Observation { part, timestep, payload: Payload::FullPose(z) }
    }

    pub fn center(part: i64, timestep: usize, c: Vec3) -> Self {
        Observation { part, timestep, payload: Payload::Center(c) }
    }

    pub fn delta(part: i64, timestep: usize, d: Twist) -> Self {
        Observation { part, timestep, payload: Payload::Delta(d) }
    }

    /// Number of timesteps this observation implies exist.
    pub fn horizon_hint(&self) -> usize {
        match self.payload {
            Payload::Delta(_) => self.timestep + 2,
            _ => self.timestep + 1,
        }
    }

    fn is_finite(&self) -> bool {
        match &self.payload {
            Payload::FullPose(p) => p.rotation().iter().chain(p.translation().iter()).all(|x| x.is_finite()),
            Payload::Center(c) => c.iter().all(|x| x.is_finite()),
            Payload::Delta(d) => d.is_finite(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma_pos: f64,
    pub sigma_ori: f64,
}

impl NoiseSpec {
    pub fn new(sigma_pos: f64, sigma_ori: f64) -> Result<Self> {
        let n = NoiseSpec { sigma_pos, sigma_ori };
        n.validate()?;
        Ok(n)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_pos > 0.0 && self.sigma_pos.is_finite())
            || !(self.sigma_ori > 0.0 && self.sigma_ori.is_finite())
        {
            return Err(Error::InvalidArgument(format!("noise sigmas must be positive and finite, got {self:?}")));
        }
        Ok(())
    }

    fn twist_weights(&self) -> Vector6<f64> {
        let p = 1.0 / self.sigma_pos;
        let o = 1.0 / self.sigma_ori;
        Vector6::new(p, p, p, o, o, o)
    }
}

/// Huber loss on a (non-negative) Mahalanobis distance.
pub fn huber(d: f64, delta: f64) -> f64 {
    let a = d.abs();
    if a <= delta {
        0.5 * a * a
    } else {
        delta * (a - 0.5 * delta)
    }
}

/// IRLS weight `L'(d) / d`.
pub fn huber_weight(d: f64, delta: f64) -> f64 {
    let a = d.abs();
    if a <= delta {
        1.0
    } else {
        delta / a
    }
}

/// `f_twist(q; nu, T_ab) (-) (x_a^-1 x_b)`.
pub fn residual_exp(x_a: &Pose, x_b: &Pose, t_ab: &Pose, nu: &Twist, q: f64) -> Result<Twist> {
    let rel = compose(&inverse(x_a), x_b);
    log_map(&compose(&inverse(&f_twist(q, nu, t_ab)), &rel))
}

/// `x (-) z`.
pub fn residual_obs_pose(x: &Pose, z: &Pose) -> Result<Twist> {
    log_map(&compose(&inverse(x), z))
}

pub fn residual_obs_center(x: &Pose, c: &Vec3) -> Vec3 {
    x.translation() - c
}

/// `(Exp(delta) x_t) (-) x_{t+1}`.
pub fn residual_obs_delta(x_t: &Pose, x_t1: &Pose, delta: &Twist) -> Result<Twist> {
    let moved = compose(&exp_map(delta), x_t);
    log_map(&compose(&inverse(&moved), x_t1))
}

/// Handle to one block of latent variables. `slot` 0 is part `a`, 1 is part `b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VarRef {
    Pose { slot: usize, t: usize },
    Q { t: usize },
    TTwist,
    Nu,
}

impl VarRef {
    pub fn dim(&self) -> usize {
        match self {
            VarRef::Q { .. } => 1,
            _ => 6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FactorKind {
    Exp { t: usize },
    ObsPose { slot: usize, t: usize, z: Pose },
    ObsCenter { slot: usize, t: usize, c: Vec3 },
    ObsDelta { slot: usize, t: usize, delta: Twist },
    OrientationPrior { slot: usize, t: usize },
    UnitNorm,
}

impl FactorKind {
    pub fn is_robust(&self) -> bool {
        !matches!(self, FactorKind::UnitNorm | FactorKind::OrientationPrior { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            FactorKind::Exp { .. } => "exp",
            FactorKind::ObsPose { .. } => "obs_pose",
            FactorKind::ObsCenter { .. } => "obs_center",
            FactorKind::ObsDelta { .. } => "obs_delta",
            FactorKind::OrientationPrior { .. } => "orientation_prior",
            FactorKind::UnitNorm => "unit_norm",
        }
    }
}

/// Latent state of a [`Problem`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariableAssignment {
    /// `poses[slot][t]`.
    pub poses: [Vec<Pose>; 2],
    pub joint: JointModel,
}

impl VariableAssignment {
    pub fn horizon(&self) -> usize {
        self.joint.q.len()
    }

    pub fn pose(&self, slot: usize, t: usize) -> &Pose {
        &self.poses[slot][t]
    }
}

/// Most variable blocks any factor touches.
pub const MAX_FACTOR_BLOCKS: usize = 5;

/// A whitened, robustly reweighted factor linearization. Residual rows and
/// Jacobian blocks are stored zero-padded to six rows and columns.
#[derive(Clone, Debug)]
pub struct LinearizedFactor {
    pub(crate) rows: usize,
    pub(crate) residual: Vector6<f64>,
    pub(crate) len: usize,
    pub(crate) vars: [VarRef; MAX_FACTOR_BLOCKS],
    pub(crate) jac: [Matrix6<f64>; MAX_FACTOR_BLOCKS],
    /// Contribution of this factor to [`total_cost`].
    pub cost: f64,
}

impl LinearizedFactor {
    fn new(rows: usize, residual: &[f64]) -> Self {
        let mut r = Vector6::zeros();
        r.rows_mut(0, rows).copy_from_slice(residual);
        LinearizedFactor {
            rows,
            residual: r,
            len: 0,
            vars: [VarRef::Nu; MAX_FACTOR_BLOCKS],
            jac: [Matrix6::zeros(); MAX_FACTOR_BLOCKS],
            cost: 0.0,
        }
    }

    fn push(&mut self, var: VarRef, j: Matrix6<f64>) {
        self.vars[self.len] = var;
        self.jac[self.len] = j;
        self.len += 1;
    }

    pub fn residual(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.residual.as_slice()[..self.rows])
    }

    /// Jacobian blocks at their true shapes, in factor order.
    pub fn blocks(&self) -> Vec<(VarRef, DMatrix<f64>)> {
        (0..self.len)
            .map(|k| {
                let (r, c) = (self.rows, self.vars[k].dim());
                (self.vars[k], DMatrix::from_fn(r, c, |i, j| self.jac[k][(i, j)]))
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Problem {
    horizon: usize,
    parts: (i64, i64),
    observations: Vec<Observation>,
    noise: NoiseSpec,
    joint_constraint: JointType,
    huber_delta: f64,
    factors: Vec<FactorKind>,
}

/// Builds a problem over the two distinct part ids present in `obs`; the
/// smaller id is the base part `a`.
pub fn build_problem(obs: &[Observation], noise: NoiseSpec, constraint: JointType) -> Result<Problem> {
    let mut ids: Vec<i64> = obs.iter().map(|o| o.part).collect();
    ids.sort_unstable();
    ids.dedup();
    match ids.len() {
        0 => Err(Error::InvalidProblem("no observations".into())),
        1 => Err(Error::InvalidProblem(format!("only one part ({}) observed", ids[0]))),
        2 => build_problem_for_parts(obs, noise, constraint, ids[0], ids[1]),
        n => Err(Error::InvalidProblem(format!("{n} parts observed; pass explicit base/mover ids to select two"))),
    }
}

/// Builds a problem for the joint between `base` (part a) and `mover`
/// (part b). Observations of other parts are ignored.
pub fn build_problem_for_parts(
    obs: &[Observation],
    noise: NoiseSpec,
    constraint: JointType,
    base: i64,
    mover: i64,
) -> Result<Problem> {
    noise.validate()?;
    if base == mover {
        return Err(Error::InvalidProblem("base and mover must differ".into()));
    }
    let selected: Vec<Observation> = obs.iter().filter(|o| o.part == base || o.part == mover).cloned().collect();
    if let Some(bad) = selected.iter().find(|o| !o.is_finite()) {
        return Err(Error::InvalidProblem(format!(
            "non-finite {} observation for part {} at t={}",
            bad.payload.kind_name(),
            bad.part,
            bad.timestep
        )));
    }
    let horizon_of = |id: i64| selected.iter().filter(|o| o.part == id).map(|o| o.horizon_hint()).max();
    let (ha, hb) = match (horizon_of(base), horizon_of(mover)) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::InvalidProblem(format!("both parts need observations (base {base}, mover {mover})"))),
    };
    if ha != hb {
        return Err(Error::InvalidProblem(format!(
            "mixed horizons: part {base} spans {ha} timesteps, part {mover} spans {hb}"
        )));
    }
    let horizon = ha;
    if horizon < 2 {
        return Err(Error::InvalidProblem("observations must span at least two timesteps".into()));
    }

    let slot_of = |id: i64| if id == base { 0 } else { 1 };
    let mut keyed: Vec<(usize, usize, u8, usize, &Observation)> =
        selected.iter().enumerate().map(|(i, o)| (o.timestep, slot_of(o.part), o.payload.rank(), i, o)).collect();
    keyed.sort_by_key(|k| (k.0, k.1, k.2, k.3));

    let has_pose =
        |slot: usize| selected.iter().any(|o| slot_of(o.part) == slot && matches!(o.payload, Payload::FullPose(_)));
    let anchored = [!has_pose(0), !has_pose(1)];

    let mut factors = Vec::with_capacity(keyed.len() + horizon + 3);
    let mut k = 0;
    for t in 0..horizon {
        factors.push(FactorKind::Exp { t });
        for (slot, &anchor) in anchored.iter().enumerate() {
            while k < keyed.len() && keyed[k].0 == t && keyed[k].1 == slot {
                let o = keyed[k].4;
                factors.push(match &o.payload {
                    Payload::FullPose(z) => FactorKind::ObsPose { slot, t, z: *z },
                    Payload::Center(c) => FactorKind::ObsCenter { slot, t, c: *c },
                    Payload::Delta(d) => FactorKind::ObsDelta { slot, t, delta: *d },
                });
                k += 1;
            }
            if t == 0 && anchor {
                factors.push(FactorKind::OrientationPrior { slot, t: 0 });
            }
        }
    }
    factors.push(FactorKind::UnitNorm);

    Ok(Problem {
        horizon,
        parts: (base, mover),
        observations: selected,
        noise,
        joint_constraint: constraint,
        huber_delta: DEFAULT_HUBER_DELTA,
        factors,
    })
}

impl Problem {
    pub fn with_huber_delta(mut self, delta: f64) -> Result<Problem> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidArgument(format!("huber delta must be > 0, got {delta}")));
        }
        self.huber_delta = delta;
        Ok(self)
    }

    /// Same factors, different whitening.
    pub fn with_noise(mut self, noise: NoiseSpec) -> Result<Problem> {
        noise.validate()?;
        self.noise = noise;
        Ok(self)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn parts(&self) -> (i64, i64) {
        self.parts
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn noise(&self) -> NoiseSpec {
        self.noise
    }

    pub fn joint_constraint(&self) -> JointType {
        self.joint_constraint
    }

    pub fn huber_delta(&self) -> f64 {
        self.huber_delta
    }

    pub fn factors(&self) -> &[FactorKind] {
        &self.factors
    }

    pub fn slot_of(&self, part: i64) -> Option<usize> {
        if part == self.parts.0 {
            Some(0)
        } else if part == self.parts.1 {
            Some(1)
        } else {
            None
        }
    }

    pub fn check_assignment(&self, v: &VariableAssignment) -> Result<()> {
        if v.poses[0].len() != self.horizon || v.poses[1].len() != self.horizon || v.joint.q.len() != self.horizon {
            return Err(Error::InvalidArgument(format!("assignment does not match horizon {}", self.horizon)));
        }
        Ok(())
    }

    /// Whitened residual of factor `idx` (not robustified).
    pub fn whitened_residual(&self, idx: usize, v: &VariableAssignment) -> Result<DVector<f64>> {
        let w = self.noise.twist_weights();
        let f = &self.factors[idx];
        Ok(match f {
            FactorKind::Exp { t } => {
                let r = residual_exp(v.pose(0, *t), v.pose(1, *t), &v.joint.t_twist, &v.joint.nu, v.joint.q[*t])?;
                DVector::from_iterator(6, r.to_vector().component_mul(&w).iter().copied())
            }
            FactorKind::ObsPose { slot, t, z } => {
                let r = residual_obs_pose(v.pose(*slot, *t), z)?;
                DVector::from_iterator(6, r.to_vector().component_mul(&w).iter().copied())
            }
            FactorKind::ObsCenter { slot, t, c } => {
                let r = residual_obs_center(v.pose(*slot, *t), c) / self.noise.sigma_pos;
                DVector::from_iterator(3, r.iter().copied())
            }
            FactorKind::ObsDelta { slot, t, delta } => {
                let r = residual_obs_delta(v.pose(*slot, *t), v.pose(*slot, *t + 1), delta)?;
                DVector::from_iterator(6, r.to_vector().component_mul(&w).iter().copied())
            }
            FactorKind::OrientationPrior { slot, t } => {
                let r = so3_log(v.pose(*slot, *t).rotation())? / ORIENTATION_PRIOR_SIGMA;
                DVector::from_iterator(3, r.iter().copied())
            }
            FactorKind::UnitNorm => DVector::from_element(
                1,
                UNIT_NORM_WEIGHT.sqrt() * (v.joint.nu.v.norm_squared() + v.joint.nu.w.norm_squared() - 1.0),
            ),
        })
    }

    fn factor_cost(&self, f: &FactorKind, r: &DVector<f64>) -> f64 {
        self.robust_cost(f, r.norm())
    }

    fn robust_cost(&self, f: &FactorKind, d: f64) -> f64 {
        if f.is_robust() {
            huber(d, self.huber_delta)
        } else {
            0.5 * d * d
        }
    }

    /// Cost contribution of every factor, in factor order.
    pub fn factor_costs(&self, v: &VariableAssignment) -> Result<Vec<f64>> {
        self.check_assignment(v)?;
        (0..self.factors.len())
            .map(|i| Ok(self.factor_cost(&self.factors[i], &self.whitened_residual(i, v)?)))
            .collect()
    }

    /// Linearizes factor `idx`: whitened residual and Jacobian blocks with
    /// respect to left-multiplicative pose perturbations `Exp(eps) x`,
    /// additive `q`, and additive `nu` restricted to the joint-constraint
    /// tangent space. Robust factors are reweighted by `sqrt(L'(d)/d)`.
    /// The block for `q_0` is omitted; it is held at zero.
    pub fn linearize_factor(&self, idx: usize, v: &VariableAssignment) -> Result<LinearizedFactor> {
        let f = &self.factors[idx];
        let w = self.noise.twist_weights();
        let w6 = Matrix6::from_diagonal(&w);
        let mut lin = match f {
            FactorKind::Exp { t } => {
                let t = *t;
                let (xa, xb) = (v.pose(0, t), v.pose(1, t));
                let (tt, nu, q) = (&v.joint.t_twist, &v.joint.nu, v.joint.q[t]);
                let rel = compose(&inverse(xa), xb);
                let e = compose(&inverse(&f_twist(q, nu, tt)), &rel);
                let r = log_map(&e)?;
                let mut lin = LinearizedFactor::new(6, r.to_vector().component_mul(&w).as_slice());
                let jinv = w6 * se3_right_jacobian_inv(&r);
                let j_b = jinv * adjoint_matrix(&inverse(xb));
                lin.push(VarRef::Pose { slot: 0, t }, -j_b);
                lin.push(VarRef::Pose { slot: 1, t }, j_b);
                if t > 0 {
                    let jq = -(jinv * adjoint_matrix(&inverse(&e)) * nu.to_vector());
                    let mut m = Matrix6::zeros();
                    m.set_column(0, &jq);
                    lin.push(VarRef::Q { t }, m);
                }
                lin.push(VarRef::TTwist, -(jinv * adjoint_matrix(&inverse(&rel))));
                let j_nu = jinv
                    * adjoint_matrix(&compose(&inverse(&rel), tt))
                    * se3_right_jacobian(&(*nu * -q))
                    * (-q)
                    * constraint_tangent_projector(nu, self.joint_constraint);
                lin.push(VarRef::Nu, j_nu);
                lin
            }
            FactorKind::ObsPose { slot, t, z } => {
                let r = residual_obs_pose(v.pose(*slot, *t), z)?;
                let mut lin = LinearizedFactor::new(6, r.to_vector().component_mul(&w).as_slice());
                let j = -(w6 * se3_right_jacobian_inv(&r) * adjoint_matrix(&inverse(z)));
                lin.push(VarRef::Pose { slot: *slot, t: *t }, j);
                lin
            }
            FactorKind::ObsCenter { slot, t, c } => {
                let x = v.pose(*slot, *t);
                let s = 1.0 / self.noise.sigma_pos;
                let r = residual_obs_center(x, c) * s;
                let mut lin = LinearizedFactor::new(3, r.as_slice());
                let mut j = Matrix6::zeros();
                j.fixed_view_mut::<3, 3>(0, 0).copy_from(&(Matrix3::identity() * s));
                j.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-skew(x.translation()) * s));
                lin.push(VarRef::Pose { slot: *slot, t: *t }, j);
                lin
            }
            FactorKind::ObsDelta { slot, t, delta } => {
                let (x0, x1) = (v.pose(*slot, *t), v.pose(*slot, *t + 1));
                let r = residual_obs_delta(x0, x1, delta)?;
                let mut lin = LinearizedFactor::new(6, r.to_vector().component_mul(&w).as_slice());
                let jinv = w6 * se3_right_jacobian_inv(&r);
                let j1 = jinv * adjoint_matrix(&inverse(x1));
                let j0 = -(jinv * adjoint_matrix(&compose(&inverse(x1), &exp_map(delta))));
                lin.push(VarRef::Pose { slot: *slot, t: *t }, j0);
                lin.push(VarRef::Pose { slot: *slot, t: *t + 1 }, j1);
                lin
            }
            FactorKind::OrientationPrior { slot, t } => {
                let phi = so3_log(v.pose(*slot, *t).rotation())?;
                let s = 1.0 / ORIENTATION_PRIOR_SIGMA;
                let mut lin = LinearizedFactor::new(3, (phi * s).as_slice());
                let mut j = Matrix6::zeros();
                j.fixed_view_mut::<3, 3>(0, 3).copy_from(&(so3_left_jacobian_inv(&phi) * s));
                lin.push(VarRef::Pose { slot: *slot, t: *t }, j);
                lin
            }
            FactorKind::UnitNorm => {
                let nu = v.joint.nu.to_vector();
                let s = UNIT_NORM_WEIGHT.sqrt();
                let mut lin = LinearizedFactor::new(1, &[s * (nu.norm_squared() - 1.0)]);
                let p = constraint_tangent_projector(&v.joint.nu, self.joint_constraint);
                let row = (nu.transpose() * p) * (2.0 * s);
                let mut j = Matrix6::zeros();
                j.set_row(0, &row);
                lin.push(VarRef::Nu, j);
                lin
            }
        };
        let d = lin.residual.norm();
        lin.cost = self.robust_cost(f, d);
        if f.is_robust() {
            let sw = huber_weight(d, self.huber_delta).sqrt();
            if sw != 1.0 {
                lin.residual *= sw;
                for j in lin.jac[..lin.len].iter_mut() {
                    *j *= sw;
                }
            }
        }
        Ok(lin)
    }
}

/// Sum of robustified factor costs; `+inf` if any residual leaves the
/// principal branch of Log.
pub fn total_cost(p: &Problem, v: &VariableAssignment) -> f64 {
    match p.factor_costs(v) {
        Ok(costs) => costs.iter().sum(),
        Err(_) => f64::INFINITY,
    }
}
