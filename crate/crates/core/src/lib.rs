pub mod clustering;
pub mod error;
pub mod experiment;
pub mod factor_graph;
pub mod io;
pub mod joint;
pub mod lie;
pub mod metric;
pub mod pipeline;
pub mod rng;
pub mod solver;
pub mod synth;

pub use error::{Error, Result};
pub use factor_graph::{NoiseSpec, Observation, Payload};
pub use joint::{JointModel, JointType};
pub use lie::{Pose, Twist};
