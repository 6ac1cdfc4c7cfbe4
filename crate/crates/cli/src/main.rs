//! `artic`: synthetic sweeps, the motion-map pipeline, and joint estimation
//! from observation files.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 bad input data,
//! 3 solver or clustering failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use artic_core::experiment::{
    aggregates_to_csv, first_observed_center, predicted_world_twist, rows_to_csv, run_sweep, scene_observations,
    timings_to_csv, Cell, GroupKey, ObservationMode, SweepConfig,
};
use artic_core::factor_graph::build_problem_for_parts;
use artic_core::io::{ingest_observations, observations_to_jsonl};
use artic_core::metric::{screw_to_twist, tangent_similarity, GraspSpec, ScrewParams};
use artic_core::pipeline::{pipeline_observations, run_pipeline, trackable_scene, PipelineConfig};
use artic_core::solver::{solve, SolverConfig};
use artic_core::synth::{generate_ground_truth, SceneSpec};
use artic_core::{Error, JointType, NoiseSpec, Twist};

#[derive(Parser)]
#[command(name = "artic", version, about = "Articulation estimation from part motion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a synthetic sweep and write per-run and aggregate CSVs.
    Sweep(SweepArgs),
    /// Simulate one scene and write its observations as JSON Lines.
    Simulate(SimulateArgs),
    /// Run motion maps, clustering, matching and estimation on one scene.
    Pipeline(PipelineArgs),
    /// Estimate the joint between two parts of an observation file.
    Estimate(EstimateArgs),
    /// Tangent similarity between a true and a predicted twist.
    Score(ScoreArgs),
}

#[derive(Args)]
struct SweepArgs {
    /// JSON sweep config; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Per-run result CSV.
    #[arg(long)]
    out: PathBuf,
    /// Aggregate CSV (median and quartiles of J).
    #[arg(long)]
    aggregates: Option<PathBuf>,
    /// Wall-time CSV, kept apart so the result CSV is reproducible.
    #[arg(long)]
    timings: Option<PathBuf>,
    /// Comma-separated aggregate keys (joint_type,n_obs,q_max,sigma_pos,sigma_ori_deg).
    #[arg(long, value_delimiter = ',')]
    group_by: Option<Vec<String>>,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct SceneArgs {
    /// Scene joint type: prismatic or revolute.
    #[arg(long, default_value = "revolute")]
    joint: JointType,
    /// Number of observations T.
    #[arg(long, default_value_t = 10)]
    n_obs: usize,
    /// Motion range: degrees for revolute, meters for prismatic.
    #[arg(long, default_value_t = 90.0)]
    q_max: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    scene: SceneArgs,
    /// Position noise (meters).
    #[arg(long, default_value_t = 0.001)]
    sigma_pos: f64,
    /// Orientation noise (degrees).
    #[arg(long, default_value_t = 1.0)]
    sigma_ori_deg: f64,
    /// Emit centers and deltas instead of full poses.
    #[arg(long)]
    center_delta: bool,
    #[arg(long)]
    out: PathBuf,
    /// Also write the ground-truth scene as JSON.
    #[arg(long)]
    truth_out: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    #[command(flatten)]
    scene: SceneArgs,
    /// JSON pipeline config; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Per-pixel jitter on centers and deltas (meters); overrides the config.
    #[arg(long)]
    jitter: Option<f64>,
    /// Write per-map detections and matched trajectories as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the matched trajectories as center/delta JSON Lines.
    #[arg(long)]
    observations_out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    /// JSON Lines observation file.
    observations: PathBuf,
    #[arg(long, default_value_t = 0)]
    base: i64,
    #[arg(long, default_value_t = 1)]
    mover: i64,
    /// Constraint on the estimated twist.
    #[arg(long, default_value = "unconstrained")]
    constraint: JointType,
    #[arg(long, default_value_t = 0.001)]
    sigma_pos: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma_ori_deg: f64,
    /// JSON solver config.
    #[arg(long)]
    solver: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ScoreArgs {
    /// True twist `v1,v2,v3,w1,w2,w3`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    truth: Vec<f64>,
    /// Predicted twist `v1,v2,v3,w1,w2,w3`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "pred_screw")]
    pred: Option<Vec<f64>>,
    /// Predicted screw `l1,l2,l3,m1,m2,m3,theta,d` (unit l, l.m = 0).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pred_screw: Option<Vec<f64>>,
    /// Grasp point at q = 0.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    grasp: Vec<f64>,
    #[arg(long)]
    q_max: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    q_min: f64,
    #[arg(long, default_value_t = artic_core::metric::DEFAULT_SAMPLES)]
    samples: usize,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) => 1,
        Error::SolverFailure(_) | Error::Clustering(_) => 3,
        _ => 2,
    }
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json values serialize"));
}

fn scene_spec(a: &SceneArgs, sigma_pos: f64, sigma_ori_deg: f64) -> Result<SceneSpec, Error> {
    if a.joint == JointType::Unconstrained {
        return Err(Error::InvalidArgument("scene joint must be prismatic or revolute".into()));
    }
    let cell = Cell { joint_type: a.joint, n_obs: a.n_obs, q_max: a.q_max, sigma_pos, sigma_ori_deg };
    let spec = cell.scene(a.seed);
    spec.validate()?;
    Ok(spec)
}

fn sweep(a: SweepArgs) -> Result<(), Error> {
    let mut cfg = match &a.config {
        Some(p) => SweepConfig::load(p)?,
        None => SweepConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.master_seed = s;
    }
    let keys: Vec<GroupKey> = match &a.group_by {
        Some(names) => names.iter().map(|n| GroupKey::parse(n.trim())).collect::<Result<_, _>>()?,
        None => GroupKey::CELL.to_vec(),
    };
    let pool = rayon_pool(a.threads)?;
    let out = pool.install(|| run_sweep(&cfg))?;
    write(&a.out, &rows_to_csv(&out.rows)?)?;
    if let Some(p) = &a.aggregates {
        let aggs = artic_core::experiment::aggregate(&out.rows, &keys)?;
        write(p, &aggregates_to_csv(&keys, &aggs)?)?;
    }
    if let Some(p) = &a.timings {
        write(p, &timings_to_csv(&out.rows)?)?;
    }
    let failures = out.rows.iter().filter(|r| r.failed()).count();
    eprintln!("{} runs, {} failed, {} cells", out.rows.len(), failures, out.aggregates.len());
    Ok(())
}

fn rayon_pool(threads: Option<usize>) -> Result<rayon::ThreadPool, Error> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::InvalidArgument("--threads must be positive".into()));
        }
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::Config(e.to_string()))
}

fn simulate(a: SimulateArgs) -> Result<(), Error> {
    let spec = scene_spec(&a.scene, a.sigma_pos, a.sigma_ori_deg)?;
    let gt = generate_ground_truth(&spec)?;
    let mode = if a.center_delta { ObservationMode::CenterDelta } else { ObservationMode::Pose };
    let obs = scene_observations(&gt, &spec, mode)?;
    write(&a.out, &observations_to_jsonl(&obs))?;
    if let Some(p) = &a.truth_out {
        let text = serde_json::to_string_pretty(&gt).map_err(|e| Error::Io(e.to_string()))?;
        write(p, &text)?;
    }
    print_json(&json!({ "scene": spec, "observations": obs.len() }));
    Ok(())
}

fn pipeline(a: PipelineArgs) -> Result<(), Error> {
    let mut cfg: PipelineConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = a.jitter {
        if !(s.is_finite() && s >= 0.0) {
            return Err(Error::InvalidArgument(format!("jitter must be non-negative, got {s}")));
        }
        cfg = cfg.with_jitter(s);
    }
    cfg.image.validate()?;
    cfg.jitter.validate()?;
    cfg.solver.validate()?;
    let scene = trackable_scene(&scene_spec(&a.scene, 0.0, 0.0)?, &cfg)?;
    let out = run_pipeline(&scene, &cfg)?;
    if let Some(p) = &a.out {
        let text = serde_json::to_string_pretty(&out).map_err(|e| Error::Io(e.to_string()))?;
        write(p, &text)?;
    }
    if let Some(p) = &a.observations_out {
        let header = json!({ "header": { "image": cfg.image, "scene": scene, "base": out.base, "mover": out.mover } });
        let text = format!("{header}\n{}", observations_to_jsonl(&pipeline_observations(&out.trajectories)?));
        write(p, &text)?;
    }
    print_json(&json!({
        "scene": scene,
        "cluster_counts": out.cluster_counts(),
        "trajectories": out.trajectories.len(),
        "base": out.base,
        "mover": out.mover,
        "j": out.j,
        "final_cost": out.solve.final_cost,
        "converged": out.solve.converged,
    }));
    Ok(())
}

fn estimate(a: EstimateArgs) -> Result<(), Error> {
    let mut solver: SolverConfig = match &a.solver {
        Some(p) => read_json(p)?,
        None => SolverConfig::default(),
    };
    if let Some(s) = a.seed {
        solver.master_seed = s;
    }
    solver.validate()?;
    let noise = NoiseSpec::new(a.sigma_pos, a.sigma_ori_deg.to_radians())?;
    let (obs, horizon) = ingest_observations(&a.observations)?;
    let problem = build_problem_for_parts(&obs, noise, a.constraint, a.base, a.mover)?;
    let result = solve(&problem, &solver)?;
    let joint = &result.assignment.joint;
    print_json(&json!({
        "horizon": horizon,
        "joint": joint.normalized(),
        "world_twist": predicted_world_twist(&result.assignment),
        "mover_origin": first_observed_center(&obs, a.mover),
        "final_cost": result.final_cost,
        "iterations": result.iterations,
        "converged": result.converged,
        "restart_index": result.restart_index,
    }));
    Ok(())
}

fn exact<'a>(xs: &'a [f64], n: usize, flag: &str) -> Result<&'a [f64], Error> {
    if xs.len() == n {
        Ok(xs)
    } else {
        Err(Error::InvalidArgument(format!("--{flag} takes {n} comma-separated values, got {}", xs.len())))
    }
}

fn twist(xs: &[f64], flag: &str) -> Result<Twist, Error> {
    let xs = exact(xs, 6, flag)?;
    Ok(Twist::from_array([xs[0], xs[1], xs[2], xs[3], xs[4], xs[5]]))
}

fn score(a: ScoreArgs) -> Result<(), Error> {
    let pred = match (&a.pred, &a.pred_screw) {
        (Some(p), None) => twist(p, "pred")?,
        (None, Some(s)) => {
            let s = exact(s, 8, "pred-screw")?;
            screw_to_twist(&ScrewParams {
                l: [s[0], s[1], s[2]].into(),
                m: [s[3], s[4], s[5]].into(),
                theta: s[6],
                d: s[7],
            })?
        }
        _ => return Err(Error::InvalidArgument("give exactly one of --pred and --pred-screw".into())),
    };
    let x0 = exact(&a.grasp, 3, "grasp")?;
    let g = GraspSpec::new([x0[0], x0[1], x0[2]].into(), a.q_min, a.q_max)?.with_samples(a.samples)?;
    let j = tangent_similarity(&twist(&a.truth, "truth")?, &pred, &g)?;
    print_json(&json!({ "j": j }));
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Sweep(a) => sweep(a),
        Command::Simulate(a) => simulate(a),
        Command::Pipeline(a) => pipeline(a),
        Command::Estimate(a) => estimate(a),
        Command::Score(a) => score(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
