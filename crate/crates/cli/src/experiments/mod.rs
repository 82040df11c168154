//! The four canned experiments. Each returns its summary, checks and the
//! artifacts it wrote.

use crate::output::{Artifact, Check};

pub mod control;
pub mod schrodinger;
pub mod torus;

pub type Outcome = (serde_json::Value, Vec<Check>, Vec<Artifact>);
