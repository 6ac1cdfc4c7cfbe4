//! Synthetic-pose sweeps: generate, estimate, score, aggregate.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor_graph::{build_problem, NoiseSpec, Observation, Payload, VariableAssignment};
use crate::joint::JointType;
use crate::lie::{adjoint, compose, Pose, Twist, Vec3};
use crate::metric::{tangent_similarity, GraspSpec};
use crate::rng::derive_seed;
use crate::solver::{solve, SolveResult, SolverConfig};
use crate::synth::{derive_center_delta_observations, generate_ground_truth, perturb_poses, GroundTruth, SceneSpec};

/// Lower bounds on the noise model handed to the estimator, so zero-noise
/// scenes still get finite whitening.
pub const NOISE_FLOOR_POS: f64 = 1e-3;
pub const NOISE_FLOOR_ORI_DEG: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationMode {
    Pose,
    CenterDelta,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Scene joint types to sweep.
    pub joint_types: Vec<JointType>,
    pub t_grid: Vec<usize>,
    pub q_max_revolute_deg: Vec<f64>,
    /// Meters.
    pub q_max_prismatic: Vec<f64>,
    /// Meters.
    pub sigma_pos: Vec<f64>,
    pub sigma_ori_deg: Vec<f64>,
    pub runs_per_cell: usize,
    pub observation_mode: ObservationMode,
    /// Constraint imposed by the estimator (independent of the scene type).
    pub joint_constraint: JointType,
    pub solver: SolverConfig,
    pub master_seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            joint_types: vec![JointType::Prismatic, JointType::Revolute],
            t_grid: vec![5, 10, 20, 40, 80, 160, 320],
            q_max_revolute_deg: vec![15.0, 45.0, 90.0],
            q_max_prismatic: vec![0.05, 0.2, 0.4],
            sigma_pos: vec![0.001, 0.03, 0.1],
            sigma_ori_deg: vec![1.0, 3.0, 10.0],
            runs_per_cell: 50,
            observation_mode: ObservationMode::Pose,
            joint_constraint: JointType::Unconstrained,
            solver: SolverConfig::default(),
            master_seed: 0,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.joint_types.is_empty()
            || self.t_grid.is_empty()
            || self.sigma_pos.is_empty()
            || self.sigma_ori_deg.is_empty()
        {
            return bad("grids must be non-empty");
        }
        if self.joint_types.contains(&JointType::Unconstrained) {
            return bad("scene joint types must be prismatic or revolute");
        }
        if self.joint_types.contains(&JointType::Revolute) && self.q_max_revolute_deg.is_empty() {
            return bad("q_max_revolute_deg must be non-empty");
        }
        if self.joint_types.contains(&JointType::Prismatic) && self.q_max_prismatic.is_empty() {
            return bad("q_max_prismatic must be non-empty");
        }
        if self.runs_per_cell < 1 {
            return bad("runs_per_cell must be at least 1");
        }
        if self.t_grid.iter().any(|&t| t < 2) {
            return bad("every T must be at least 2");
        }
        let finite_pos = |v: &[f64]| v.iter().all(|x| x.is_finite() && *x >= 0.0);
        if !finite_pos(&self.sigma_pos) || !finite_pos(&self.sigma_ori_deg) {
            return bad("noise levels must be finite and non-negative");
        }
        let q_ok = |v: &[f64]| v.iter().all(|x| x.is_finite() && *x > 0.0);
        if !q_ok(&self.q_max_revolute_deg) || !q_ok(&self.q_max_prismatic) {
            return bad("motion ranges must be positive");
        }
        self.solver.validate()
    }

    pub fn from_json(text: &str) -> Result<SweepConfig> {
        let cfg: SweepConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<SweepConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        SweepConfig::from_json(&text)
    }

    /// Grid cells in canonical order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        let mut types = self.joint_types.clone();
        types.sort_by_key(|t| t.name());
        types.dedup();
        for jt in types {
            let qs = match jt {
                JointType::Revolute => &self.q_max_revolute_deg,
                _ => &self.q_max_prismatic,
            };
            for &n_obs in &self.t_grid {
                for &q_max in qs {
                    for &sigma_pos in &self.sigma_pos {
                        for &sigma_ori_deg in &self.sigma_ori_deg {
                            out.push(Cell { joint_type: jt, n_obs, q_max, sigma_pos, sigma_ori_deg });
                        }
                    }
                }
            }
        }
        out
    }
}

/// One grid point. `q_max` is in degrees for revolute and meters for prismatic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub joint_type: JointType,
    pub n_obs: usize,
    pub q_max: f64,
    pub sigma_pos: f64,
    pub sigma_ori_deg: f64,
}

impl Cell {
    fn key(&self) -> [u64; 5] {
        let code = match self.joint_type {
            JointType::Prismatic => 0,
            JointType::Revolute => 1,
            JointType::Unconstrained => 2,
        };
        [code, self.n_obs as u64, self.q_max.to_bits(), self.sigma_pos.to_bits(), self.sigma_ori_deg.to_bits()]
    }

    /// Seed of run `run`; depends only on the cell values, not on grid layout.
    pub fn run_seed(&self, master: u64, run: usize) -> u64 {
        let mut path = self.key().to_vec();
        path.push(run as u64);
        derive_seed(master, &path)
    }

    pub fn scene(&self, seed: u64) -> SceneSpec {
        let q_max = match self.joint_type {
            JointType::Revolute => self.q_max.to_radians(),
            _ => self.q_max,
        };
        SceneSpec {
            joint_type: self.joint_type,
            n_obs: self.n_obs,
            q_max,
            sigma_pos: self.sigma_pos,
            sigma_ori: self.sigma_ori_deg.to_radians(),
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub cell: Cell,
    pub run: usize,
    pub seed: u64,
    pub j: Option<f64>,
    pub final_cost: Option<f64>,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    pub restart_index: Option<usize>,
    pub error: Option<String>,
    /// Seconds; excluded from the canonical CSV.
    pub wall_time_s: f64,
}

impl ResultRow {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

/// World twist of the mover implied by an estimate:
/// `x_b(q) = Exp(q Ad_{x_a(0) T} nu) x_b(0)`, signed so that motion runs
/// toward increasing `q` over the observed sequence.
pub fn predicted_world_twist(v: &VariableAssignment) -> Twist {
    let nu = adjoint(&compose(&v.poses[0][0], &v.joint.t_twist), &v.joint.nu);
    match v.joint.q.last() {
        Some(q) if *q < 0.0 => -nu,
        _ => nu,
    }
}

/// Tangent similarity of an estimate against the true scene, along the true
/// path `q in [0, q_max]` of the grasp point `x0`.
pub fn score_estimate(gt: &GroundTruth, v: &VariableAssignment, x0: &Vec3) -> Result<f64> {
    let g = GraspSpec::new(*x0, 0.0, gt.q_max)?;
    tangent_similarity(&gt.world_twist, &predicted_world_twist(v), &g)
}

/// First observed position of part `part` (earliest pose or center).
pub fn first_observed_center(obs: &[Observation], part: i64) -> Option<Vec3> {
    obs.iter()
        .filter(|o| o.part == part)
        .filter_map(|o| match &o.payload {
            Payload::FullPose(p) => Some((o.timestep, *p.translation())),
            Payload::Center(c) => Some((o.timestep, *c)),
            Payload::Delta(_) => None,
        })
        .min_by_key(|(t, _)| *t)
        .map(|(_, c)| c)
}

/// Observations of a scene in the requested mode; parts 0 (base) and 1 (mover).
pub fn scene_observations(gt: &GroundTruth, spec: &SceneSpec, mode: ObservationMode) -> Result<Vec<Observation>> {
    let poses = perturb_poses(gt, spec);
    match mode {
        ObservationMode::Pose => Ok(poses),
        ObservationMode::CenterDelta => {
            let mut parts: [Vec<Pose>; 2] = [Vec::new(), Vec::new()];
            for o in &poses {
                if let Payload::FullPose(p) = o.payload {
                    parts[o.part as usize].push(p);
                }
            }
            derive_center_delta_observations(&parts)
        }
    }
}

pub fn estimator_noise(spec: &SceneSpec) -> Result<NoiseSpec> {
    NoiseSpec::new(spec.sigma_pos.max(NOISE_FLOOR_POS), spec.sigma_ori.max(NOISE_FLOOR_ORI_DEG.to_radians()))
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub ground_truth: GroundTruth,
    pub observations: Vec<Observation>,
    pub solve: SolveResult,
    pub j: f64,
}

/// Generate, estimate and score one synthetic scene.
pub fn run_scene(
    spec: &SceneSpec,
    mode: ObservationMode,
    constraint: JointType,
    solver: &SolverConfig,
) -> Result<RunOutcome> {
    let gt = generate_ground_truth(spec)?;
    let obs = scene_observations(&gt, spec, mode)?;
    let problem = build_problem(&obs, estimator_noise(spec)?, constraint)?;
    let cfg = SolverConfig { master_seed: derive_seed(spec.seed, &[0x501e]), ..*solver };
    let result = solve(&problem, &cfg)?;
    let x0 = first_observed_center(&obs, 1).ok_or_else(|| Error::InvalidProblem("mover never observed".into()))?;
    let j = score_estimate(&gt, &result.assignment, &x0)?;
    Ok(RunOutcome { ground_truth: gt, observations: obs, solve: result, j })
}

pub fn run_cell(cfg: &SweepConfig, cell: &Cell, run: usize) -> ResultRow {
    let seed = cell.run_seed(cfg.master_seed, run);
    let start = Instant::now();
    let outcome = run_scene(&cell.scene(seed), cfg.observation_mode, cfg.joint_constraint, &cfg.solver);
    let wall_time_s = start.elapsed().as_secs_f64();
    let base = ResultRow {
        cell: *cell,
        run,
        seed,
        j: None,
        final_cost: None,
        iterations: None,
        converged: None,
        restart_index: None,
        error: None,
        wall_time_s,
    };
    match outcome {
        Ok(o) => ResultRow {
            j: Some(o.j),
            final_cost: Some(o.solve.final_cost),
            iterations: Some(o.solve.iterations),
            converged: Some(o.solve.converged),
            restart_index: Some(o.solve.restart_index),
            ..base
        },
        Err(e) => ResultRow { error: Some(e.to_string()), ..base },
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepOutput {
    pub rows: Vec<ResultRow>,
    /// Per-cell aggregates of `j`.
    pub aggregates: Vec<Aggregate>,
}

/// Runs every (cell, run) pair. Failures become rows; rows come back in
/// canonical order whatever the thread count.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepOutput> {
    cfg.validate()?;
    let tasks: Vec<(Cell, usize)> =
        cfg.cells().into_iter().flat_map(|c| (0..cfg.runs_per_cell).map(move |r| (c, r))).collect();
    let mut rows: Vec<ResultRow> = tasks.par_iter().map(|(c, r)| run_cell(cfg, c, *r)).collect();
    sort_canonical(&mut rows);
    let aggregates = aggregate(&rows, &GroupKey::CELL)?;
    Ok(SweepOutput { rows, aggregates })
}

pub fn sort_canonical(rows: &mut [ResultRow]) {
    rows.sort_by(|a, b| {
        (a.cell.joint_type.name(), a.cell.n_obs)
            .cmp(&(b.cell.joint_type.name(), b.cell.n_obs))
            .then(a.cell.q_max.total_cmp(&b.cell.q_max))
            .then(a.cell.sigma_pos.total_cmp(&b.cell.sigma_pos))
            .then(a.cell.sigma_ori_deg.total_cmp(&b.cell.sigma_ori_deg))
            .then(a.run.cmp(&b.run))
    });
}

pub const RESULT_HEADER: [&str; 12] = [
    "joint_type",
    "n_obs",
    "q_max",
    "sigma_pos",
    "sigma_ori_deg",
    "run",
    "seed",
    "j",
    "final_cost",
    "iterations",
    "converged",
    "error",
];

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

fn csv_string(write: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    write(&mut w).map_err(|e| Error::Io(e.to_string()))?;
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

/// Canonical result table (no timing column).
pub fn rows_to_csv(rows: &[ResultRow]) -> Result<String> {
    csv_string(|w| {
        w.write_record(RESULT_HEADER)?;
        for r in rows {
            w.write_record([
                r.cell.joint_type.name().to_string(),
                r.cell.n_obs.to_string(),
                r.cell.q_max.to_string(),
                r.cell.sigma_pos.to_string(),
                r.cell.sigma_ori_deg.to_string(),
                r.run.to_string(),
                r.seed.to_string(),
                opt(&r.j),
                opt(&r.final_cost),
                opt(&r.iterations),
                opt(&r.converged),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
        Ok(())
    })
}

/// Wall times, kept apart from the canonical table.
pub fn timings_to_csv(rows: &[ResultRow]) -> Result<String> {
    csv_string(|w| {
        w.write_record(["joint_type", "n_obs", "q_max", "sigma_pos", "sigma_ori_deg", "run", "wall_time_s"])?;
        for r in rows {
            w.write_record([
                r.cell.joint_type.name().to_string(),
                r.cell.n_obs.to_string(),
                r.cell.q_max.to_string(),
                r.cell.sigma_pos.to_string(),
                r.cell.sigma_ori_deg.to_string(),
                r.run.to_string(),
                format!("{:.6}", r.wall_time_s),
            ])?;
        }
        Ok(())
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum GroupKey {
    JointType,
    NObs,
    QMax,
    SigmaPos,
    SigmaOriDeg,
}

impl GroupKey {
    pub const CELL: [GroupKey; 5] =
        [GroupKey::JointType, GroupKey::NObs, GroupKey::QMax, GroupKey::SigmaPos, GroupKey::SigmaOriDeg];

    pub fn name(&self) -> &'static str {
        match self {
            GroupKey::JointType => "joint_type",
            GroupKey::NObs => "n_obs",
            GroupKey::QMax => "q_max",
            GroupKey::SigmaPos => "sigma_pos",
            GroupKey::SigmaOriDeg => "sigma_ori_deg",
        }
    }

    pub fn parse(s: &str) -> Result<GroupKey> {
        GroupKey::CELL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown group key {s:?}")))
    }

    fn value(&self, c: &Cell) -> String {
        match self {
            GroupKey::JointType => c.joint_type.name().to_string(),
            GroupKey::NObs => c.n_obs.to_string(),
            GroupKey::QMax => c.q_max.to_string(),
            GroupKey::SigmaPos => c.sigma_pos.to_string(),
            GroupKey::SigmaOriDeg => c.sigma_ori_deg.to_string(),
        }
    }

    fn sort_value(&self, c: &Cell) -> SortVal {
        match self {
            GroupKey::JointType => SortVal::Text(c.joint_type.name().to_string()),
            GroupKey::NObs => SortVal::Num(c.n_obs as f64),
            GroupKey::QMax => SortVal::Num(c.q_max),
            GroupKey::SigmaPos => SortVal::Num(c.sigma_pos),
            GroupKey::SigmaOriDeg => SortVal::Num(c.sigma_ori_deg),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum SortVal {
    Text(String),
    Num(f64),
}

impl Eq for SortVal {}

impl PartialOrd for SortVal {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SortVal {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        match (self, other) {
            (SortVal::Text(a), SortVal::Text(b)) => a.cmp(b),
            (SortVal::Num(a), SortVal::Num(b)) => a.total_cmp(b),
            (SortVal::Text(_), SortVal::Num(_)) => std::cmp::Ordering::Less,
            (SortVal::Num(_), SortVal::Text(_)) => std::cmp::Ordering::Greater,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub keys: Vec<(GroupKey, String)>,
    pub median: f64,
    pub p25: f64,
    pub p75: f64,
    /// Successful runs in the group.
    pub n: usize,
    pub failures: usize,
}

/// Nearest-rank percentile of sorted data: the value at 1-based rank
/// `ceil(p / 100 * n)` (rank 1 for `p = 0`).
pub fn nearest_rank(sorted: &[f64], p: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::InvalidArgument("percentile of empty data".into()));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("percentile {p} outside [0, 100]")));
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    Ok(sorted[rank.min(sorted.len()) - 1])
}

pub fn aggregate(rows: &[ResultRow], keys: &[GroupKey]) -> Result<Vec<Aggregate>> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("empty result table".into()));
    }
    if keys.is_empty() {
        return Err(Error::InvalidArgument("need at least one group key".into()));
    }
    // Sort key -> (labelled key values, successful scores, failure count).
    type Group = (Vec<(GroupKey, String)>, Vec<f64>, usize);
    let mut groups: BTreeMap<Vec<SortVal>, Group> = BTreeMap::new();
    for r in rows {
        let sk: Vec<SortVal> = keys.iter().map(|k| k.sort_value(&r.cell)).collect();
        let entry =
            groups.entry(sk).or_insert_with(|| (keys.iter().map(|k| (*k, k.value(&r.cell))).collect(), Vec::new(), 0));
        match r.j {
            Some(j) if r.error.is_none() => entry.1.push(j),
            _ => entry.2 += 1,
        }
    }
    let mut out = Vec::with_capacity(groups.len());
    for (_, (k, mut js, failures)) in groups {
        js.sort_by(f64::total_cmp);
        let (median, p25, p75) = if js.is_empty() {
            (f64::NAN, f64::NAN, f64::NAN)
        } else {
            (nearest_rank(&js, 50.0)?, nearest_rank(&js, 25.0)?, nearest_rank(&js, 75.0)?)
        };
        out.push(Aggregate { keys: k, median, p25, p75, n: js.len(), failures });
    }
    Ok(out)
}

/// Plot-ready CSV: `keys..., median, p25, p75, n`.
pub fn emit_plot_data(rows: &[ResultRow], keys: &[&str]) -> Result<String> {
    let keys: Vec<GroupKey> = keys.iter().map(|k| GroupKey::parse(k)).collect::<Result<_>>()?;
    let aggs = aggregate(rows, &keys)?;
    aggregates_to_csv(&keys, &aggs)
}

pub fn aggregates_to_csv(keys: &[GroupKey], aggs: &[Aggregate]) -> Result<String> {
    csv_string(|w| {
        let mut header: Vec<&str> = keys.iter().map(|k| k.name()).collect();
        header.extend(["median", "p25", "p75", "n"]);
        w.write_record(&header)?;
        for a in aggs {
            let mut rec: Vec<String> = a.keys.iter().map(|(_, v)| v.clone()).collect();
            let num = |x: f64| if x.is_nan() { String::new() } else { x.to_string() };
            rec.extend([num(a.median), num(a.p25), num(a.p75), a.n.to_string()]);
            w.write_record(&rec)?;
        }
        Ok(())
    })
}
