//! JSON Lines observation files.
//!
//! One record per line: `{"part": 0, "t": 3, "kind": "pose", "data": [...]}`
//! with 12 floats for a pose (row-major rotation, then translation), 3 for a
//! center and 6 for a delta `(v, w)`. Blank lines and lines carrying a
//! `"header"` key are skipped.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor_graph::{Observation, Payload};
use crate::lie::{Mat3, Pose, Twist, Vec3};

#[derive(Serialize, Deserialize)]
struct Record {
    part: i64,
    t: usize,
    kind: String,
    data: Vec<f64>,
}

fn to_record(o: &Observation) -> Record {
    let data = match &o.payload {
        Payload::FullPose(p) => p.rotation_row_major().iter().chain(p.translation().iter()).copied().collect(),
        Payload::Center(c) => c.iter().copied().collect(),
        Payload::Delta(d) => d.to_array().to_vec(),
    };
    Record { part: o.part, t: o.timestep, kind: o.payload.kind_name().to_string(), data }
}

fn from_record(r: Record) -> std::result::Result<Observation, String> {
    let want = match r.kind.as_str() {
        "pose" => 12,
        "center" => 3,
        "delta" => 6,
        other => return Err(format!("unknown kind {other:?}")),
    };
    if r.data.len() != want {
        return Err(format!("{} record needs {want} values, got {}", r.kind, r.data.len()));
    }
    if !r.data.iter().all(|x| x.is_finite()) {
        return Err("non-finite value".into());
    }
    let d = &r.data;
    let payload = match want {
        12 => {
            let rot = Mat3::from_row_slice(&d[..9]);
            let pose = Pose::from_rotation_checked(rot, Vec3::new(d[9], d[10], d[11])).map_err(|e| e.to_string())?;
            Payload::FullPose(pose)
        }
        3 => Payload::Center(Vec3::new(d[0], d[1], d[2])),
        _ => Payload::Delta(Twist::from_array([d[0], d[1], d[2], d[3], d[4], d[5]])),
    };
    Ok(Observation { part: r.part, timestep: r.t, payload })
}

pub fn observation_to_json(o: &Observation) -> String {
    serde_json::to_string(&to_record(o)).expect("records always serialize")
}

pub fn observations_to_jsonl(obs: &[Observation]) -> String {
    let mut s = String::new();
    for o in obs {
        s.push_str(&observation_to_json(o));
        s.push('\n');
    }
    s
}

/// Parses observation records; errors carry the 1-based line number.
pub fn parse_observations(text: &str) -> Result<Vec<Observation>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse { line: i + 1, message };
        let value: serde_json::Value = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        if value.get("header").is_some() {
            continue;
        }
        let rec: Record = serde_json::from_value(value).map_err(|e| parse_err(e.to_string()))?;
        out.push(from_record(rec).map_err(parse_err)?);
    }
    Ok(out)
}

/// Common horizon of all parts; parts spanning different horizons are an error.
pub fn infer_horizon(obs: &[Observation]) -> Result<usize> {
    let mut per_part: BTreeMap<i64, usize> = BTreeMap::new();
    for o in obs {
        let h = per_part.entry(o.part).or_insert(0);
        *h = (*h).max(o.horizon_hint());
    }
    let mut it = per_part.iter();
    let Some((&first_part, &h)) = it.next() else {
        return Err(Error::InvalidProblem("no observations".into()));
    };
    for (&part, &other) in it {
        if other != h {
            return Err(Error::InvalidProblem(format!(
                "inconsistent horizons: part {first_part} spans {h} timesteps, part {part} spans {other}"
            )));
        }
    }
    Ok(h)
}

/// Reads and validates an observation file, returning the records and horizon.
pub fn ingest_observations(path: &Path) -> Result<(Vec<Observation>, usize)> {
    let text = std::fs::read_to_string(path)?;
    let obs = parse_observations(&text)?;
    let h = infer_horizon(&obs)?;
    Ok((obs, h))
}

pub fn write_observations(path: &Path, obs: &[Observation]) -> Result<()> {
    std::fs::write(path, observations_to_jsonl(obs))?;
    Ok(())
}
