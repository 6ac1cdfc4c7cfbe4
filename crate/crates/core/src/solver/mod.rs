//! Levenberg-Marquardt over the factor graph with random restarts.

pub mod linear;

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor_graph::{total_cost, FactorKind, Payload, Problem, VarRef, VariableAssignment};
use crate::joint::{constraint_tangent_projector, project_joint_type, JointModel};
use crate::lie::{compose, exp_map, inverse, Pose, Twist, Vec3};
use crate::rng::{derive_seed, gaussian, random_rotation, stream_rng, STREAM_SOLVER_INIT};
pub use linear::NormalEquations;
use linear::{flat_dim, flat_offset, TIME_DIM};

const LAMBDA_MIN: f64 = 1e-12;
const LAMBDA_MAX: f64 = 1e32;
/// Spread of the random twist applied to the initial `T_twist`.
pub const INIT_T_SIGMA: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub restarts: usize,
    pub max_iters: usize,
    pub lambda_init: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    pub cost_rel_tol: f64,
    pub grad_tol: f64,
    /// Stop once the largest step component falls below this.
    pub step_tol: f64,
    pub master_seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            restarts: 10,
            max_iters: 100,
            lambda_init: 1e-4,
            lambda_up: 10.0,
            lambda_down: 0.1,
            cost_rel_tol: 1e-9,
            grad_tol: 1e-10,
            step_tol: 1e-12,
            master_seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.restarts >= 1
            && self.lambda_init > 0.0
            && self.lambda_up > 1.0
            && self.lambda_down > 0.0
            && self.lambda_down < 1.0
            && self.cost_rel_tol > 0.0
            && self.grad_tol > 0.0
            && self.step_tol > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid solver config {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub assignment: VariableAssignment,
    pub final_cost: f64,
    pub iterations: usize,
    pub restart_index: usize,
    pub converged: bool,
    /// Cost of the initial assignment followed by every accepted step.
    pub cost_history: Vec<f64>,
}

pub fn restart_seed(master: u64, restart: usize) -> u64 {
    derive_seed(master, &[restart as u64])
}

#[derive(Default, Clone)]
struct SlotObs {
    pose: Option<Pose>,
    center: Option<Vec3>,
    delta: Option<Twist>,
}

/// Random starting point that reuses whatever the observations pin down.
pub fn random_init(p: &Problem, seed: u64) -> VariableAssignment {
    let n = p.horizon();
    let mut rng = stream_rng(seed, STREAM_SOLVER_INIT);
    let mut obs = [vec![SlotObs::default(); n], vec![SlotObs::default(); n]];
    for o in p.observations() {
        let Some(slot) = p.slot_of(o.part) else { continue };
        let s = &mut obs[slot][o.timestep];
        match o.payload {
            Payload::FullPose(z) => {
                s.pose.get_or_insert(z);
            }
            Payload::Center(c) => {
                s.center.get_or_insert(c);
            }
            Payload::Delta(d) => {
                s.delta.get_or_insert(d);
            }
        }
    }

    let mut poses: [Vec<Pose>; 2] = [Vec::with_capacity(n), Vec::with_capacity(n)];
    for slot in 0..2 {
        let rot = random_rotation(&mut rng);
        for t in 0..n {
            let o = &obs[slot][t];
            let x = if let Some(z) = o.pose {
                z
            } else if t == 0 {
                Pose::new(rot, o.center.unwrap_or_else(Vec3::zeros))
            } else {
                let prev = poses[slot][t - 1];
                let moved = match obs[slot][t - 1].delta {
                    Some(d) => compose(&exp_map(&d), &prev),
                    None => prev,
                };
                match o.center {
                    Some(c) => moved.with_translation(c),
                    None => moved,
                }
            };
            poses[slot].push(x);
        }
    }

    let nu = loop {
        let raw = Twist::from_array(std::array::from_fn(|_| gaussian(&mut rng)));
        if let Ok(c) = project_joint_type(&raw, p.joint_constraint()) {
            let norm = c.norm();
            if norm > 1e-6 {
                break c * (1.0 / norm);
            }
        }
    };
    let perturb = Twist::from_array(std::array::from_fn(|_| gaussian(&mut rng) * INIT_T_SIGMA));
    let t_twist = compose(&compose(&inverse(&poses[0][0]), &poses[1][0]), &exp_map(&perturb));
    let slope: f64 = rng.random_range(-1.0..=1.0);
    let q = (0..n).map(|t| slope * t as f64 / (n - 1) as f64).collect();
    VariableAssignment { poses, joint: JointModel { nu, t_twist, q } }
}

/// Linearizes every factor into the structured normal equations. Returns
/// the equations and the summed robust cost.
pub fn linearize(p: &Problem, v: &VariableAssignment) -> Result<(NormalEquations, f64)> {
    let mut ne = NormalEquations::new(p.horizon());
    let mut cost = 0.0;
    for idx in 0..p.factors().len() {
        let lin = p.linearize_factor(idx, v)?;
        cost += lin.cost;
        ne.add(&lin)?;
    }
    Ok((ne, cost))
}

/// Flat indices held fixed during a step (`q_0`).
pub fn pinned_indices(p: &Problem) -> Vec<usize> {
    vec![flat_offset(&VarRef::Q { t: 0 }, p.horizon())]
}

/// Applies a flat tangent step: poses and `T_twist` by left `Exp`, `q`
/// additively, `nu` additively within the constraint tangent space followed
/// by projection back onto the constraint set.
pub fn retract(p: &Problem, v: &VariableAssignment, dx: &DVector<f64>) -> Result<VariableAssignment> {
    let n = p.horizon();
    if dx.len() != flat_dim(n) {
        return Err(Error::InvalidArgument("step has wrong dimension".into()));
    }
    let twist_at = |o: usize| Twist::from_array(std::array::from_fn(|k| dx[o + k]));
    let mut out = v.clone();
    for t in 0..n {
        for slot in 0..2 {
            let d = twist_at(TIME_DIM * t + 6 * slot);
            out.poses[slot][t] = compose(&exp_map(&d), &v.poses[slot][t]);
        }
        if t > 0 {
            out.joint.q[t] += dx[TIME_DIM * t + 12];
        }
    }
    let g = flat_offset(&VarRef::TTwist, n);
    out.joint.t_twist = compose(&exp_map(&twist_at(g)), &v.joint.t_twist);
    let dnu = constraint_tangent_projector(&v.joint.nu, p.joint_constraint()) * twist_at(g + 6).to_vector();
    out.joint.nu = project_joint_type(&(v.joint.nu + Twist::from_vector(&dnu)), p.joint_constraint())?;
    Ok(out)
}

pub fn solve_single(p: &Problem, init: VariableAssignment, cfg: &SolverConfig) -> Result<SolveResult> {
    cfg.validate()?;
    p.check_assignment(&init)?;
    let mut v = init;
    let mut cost = total_cost(p, &v);
    let mut history = vec![cost];
    let finish = |v: VariableAssignment, cost: f64, iterations: usize, converged: bool, history: Vec<f64>| {
        SolveResult { assignment: v, final_cost: cost, iterations, restart_index: 0, converged, cost_history: history }
    };
    if cfg.max_iters == 0 || !cost.is_finite() {
        return Ok(finish(v, cost, 0, false, history));
    }
    let pinned = pinned_indices(p);
    let mut ne = match linearize(p, &v) {
        Ok((ne, _)) => ne,
        Err(_) => return Ok(finish(v, cost, 0, false, history)),
    };
    let mut lambda = cfg.lambda_init;
    let mut iterations = 0;
    let mut converged = false;
    'outer: while iterations < cfg.max_iters {
        iterations += 1;
        if ne.gradient().amax() < cfg.grad_tol || cost == 0.0 {
            converged = true;
            break;
        }
        loop {
            if let Ok(dx) = ne.solve_damped(lambda, &pinned) {
                if dx.amax() < cfg.step_tol {
                    converged = true;
                    break 'outer;
                }
                if let Ok(cand) = retract(p, &v, &dx) {
                    let c = total_cost(p, &cand);
                    if c < cost {
                        let rel = (cost - c) / cost;
                        v = cand;
                        cost = c;
                        history.push(c);
                        lambda = (lambda * cfg.lambda_down).max(LAMBDA_MIN);
                        if rel < cfg.cost_rel_tol {
                            converged = true;
                            break 'outer;
                        }
                        match linearize(p, &v) {
                            Ok((next, _)) => ne = next,
                            Err(_) => break 'outer,
                        }
                        break;
                    }
                }
            }
            lambda *= cfg.lambda_up;
            if lambda > LAMBDA_MAX {
                break 'outer;
            }
        }
    }
    Ok(finish(v, cost, iterations, converged, history))
}

/// Runs `cfg.restarts` randomly initialized solves and keeps the lowest
/// final cost (ties go to the lowest restart index).
pub fn solve(p: &Problem, cfg: &SolverConfig) -> Result<SolveResult> {
    cfg.validate()?;
    let runs: Vec<Result<SolveResult>> = (0..cfg.restarts)
        .into_par_iter()
        .map(|i| {
            let init = random_init(p, restart_seed(cfg.master_seed, i));
            solve_single(p, init, cfg).map(|r| SolveResult { restart_index: i, ..r })
        })
        .collect();
    select_best(runs)
}

fn select_best(runs: Vec<Result<SolveResult>>) -> Result<SolveResult> {
    let mut best: Option<SolveResult> = None;
    let mut last_err = None;
    for r in runs {
        match r {
            Ok(r) if r.final_cost.is_finite() => {
                let better = match &best {
                    None => true,
                    Some(b) => {
                        r.final_cost < b.final_cost
                            || (r.final_cost == b.final_cost && r.restart_index < b.restart_index)
                    }
                };
                if better {
                    best = Some(r);
                }
            }
            Ok(_) => {}
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| match last_err {
        Some(e) => e,
        None => Error::SolverFailure("every restart ended with a non-finite cost".into()),
    })
}

/// Central finite-difference Jacobian blocks of factor `idx`'s whitened
/// residual, using the same perturbation charts as the analytic Jacobians.
pub fn numeric_jacobian(
    p: &Problem,
    idx: usize,
    v: &VariableAssignment,
    h: f64,
) -> Result<Vec<(VarRef, nalgebra::DMatrix<f64>)>> {
    let vars = factor_variables(p, idx);
    let mut out = Vec::with_capacity(vars.len());
    for var in vars {
        let dim = var.dim();
        let mut m = nalgebra::DMatrix::zeros(p.whitened_residual(idx, v)?.len(), dim);
        for k in 0..dim {
            let plus = perturb(p, v, &var, k, h);
            let minus = perturb(p, v, &var, k, -h);
            let d = (p.whitened_residual(idx, &plus)? - p.whitened_residual(idx, &minus)?) / (2.0 * h);
            m.column_mut(k).copy_from(&d);
        }
        out.push((var, m));
    }
    Ok(out)
}

fn factor_variables(p: &Problem, idx: usize) -> Vec<VarRef> {
    match &p.factors()[idx] {
        FactorKind::Exp { t } => {
            let mut v = vec![VarRef::Pose { slot: 0, t: *t }, VarRef::Pose { slot: 1, t: *t }];
            if *t > 0 {
                v.push(VarRef::Q { t: *t });
            }
            v.extend([VarRef::TTwist, VarRef::Nu]);
            v
        }
        FactorKind::ObsPose { slot, t, .. }
        | FactorKind::ObsCenter { slot, t, .. }
        | FactorKind::OrientationPrior { slot, t } => {
            vec![VarRef::Pose { slot: *slot, t: *t }]
        }
        FactorKind::ObsDelta { slot, t, .. } => {
            vec![VarRef::Pose { slot: *slot, t: *t }, VarRef::Pose { slot: *slot, t: *t + 1 }]
        }
        FactorKind::UnitNorm => vec![VarRef::Nu],
    }
}

fn perturb(p: &Problem, v: &VariableAssignment, var: &VarRef, k: usize, h: f64) -> VariableAssignment {
    let mut out = v.clone();
    let mut e = [0.0; 6];
    match *var {
        VarRef::Pose { slot, t } => {
            e[k] = h;
            out.poses[slot][t] = compose(&exp_map(&Twist::from_array(e)), &v.poses[slot][t]);
        }
        VarRef::Q { t } => out.joint.q[t] += h,
        VarRef::TTwist => {
            e[k] = h;
            out.joint.t_twist = compose(&exp_map(&Twist::from_array(e)), &v.joint.t_twist);
        }
        VarRef::Nu => {
            let proj = constraint_tangent_projector(&v.joint.nu, p.joint_constraint());
            let d = proj.column(k) * h;
            out.joint.nu = v.joint.nu + Twist::from_vector(&d.into_owned());
        }
    }
    out
}
