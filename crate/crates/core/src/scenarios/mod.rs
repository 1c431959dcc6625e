//! Declarative scenario documents: wiring, load, faults and expectations,
//! plus a deterministic runner and report tooling.

mod assertions;
mod diff;
mod document;
mod runner;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::loadgen::{parse_profile, LoadProfile, ProfileError};
use crate::mesh::MeshError;
use crate::scheduler::SchedulerError;

pub use assertions::{Assertion, AssertionResult};
pub use diff::{diff_timelines, TimelineDiff};
pub use document::{
    build_node, build_nodes, load_scenario, validate, ActionSpec, CollectorKind, CollectorSpec, CustomAction,
    CustomActionKind, EvaluatorSpec, FaultSpec, NodeSpec, ObserveSpec, ResourceModelSpec, ScenarioDocument,
    ScenarioSpec, StrategySpec, SubscriptionSpec,
};
pub use runner::{run_scenario, run_with, NodeReport, RequestSummary, RunOptions, ScenarioReport};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unresolved reference at `{0}`")]
    UnresolvedReference(String),
    #[error("invalid threshold at `{0}`")]
    InvalidThreshold(String),
    #[error("duplicate definition at `{0}`")]
    Duplicate(String),
    #[error("invalid fault at `{path}`: {reason}")]
    InvalidFault { path: String, reason: String },
    #[error("malformed scenario: {0}")]
    Malformed(String),
    #[error("unknown load profile `{0}`")]
    UnknownProfile(String),
    #[error("load profile: {0}")]
    Profile(#[from] ProfileError),
    #[error("{0}")]
    Io(String),
    #[error("wiring failed: {0}")]
    Wiring(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
}

pub const SHIPPED_SCENARIOS: [&str; 3] = ["self_healing", "self_protection", "self_optimization"];
pub const SHIPPED_PROFILES: [&str; 3] = [
    "increasingLowIntensity",
    "increasingMedIntensity",
    "increasingHighIntensity",
];

pub fn shipped_scenario(name: &str) -> Option<&'static str> {
    Some(match name {
        "self_healing" => include_str!("../../../../scenarios/self_healing.json"),
        "self_protection" => include_str!("../../../../scenarios/self_protection.json"),
        "self_optimization" => include_str!("../../../../scenarios/self_optimization.json"),
        _ => return None,
    })
}

pub fn shipped_profile(name: &str) -> Option<&'static str> {
    Some(match name {
        "increasingLowIntensity" => include_str!("../../../../profiles/increasingLowIntensity.csv"),
        "increasingMedIntensity" => include_str!("../../../../profiles/increasingMedIntensity.csv"),
        "increasingHighIntensity" => include_str!("../../../../profiles/increasingHighIntensity.csv"),
        _ => return None,
    })
}

/// Loads a shipped scenario by name.
pub fn load_shipped(name: &str) -> Result<ScenarioSpec, ScenarioError> {
    load_scenario(
        shipped_scenario(name).ok_or_else(|| ScenarioError::Malformed(format!("no shipped scenario `{name}`")))?,
    )
}

/// Reads a scenario from a file, or from the shipped set when `path` names one.
pub fn load_scenario_file(path: &Path) -> Result<ScenarioSpec, ScenarioError> {
    match std::fs::read_to_string(path) {
        Ok(text) => load_scenario(&text),
        Err(e) => {
            let stem = path.to_str().map(|s| s.trim_end_matches(".json"));
            match stem.and_then(shipped_scenario) {
                Some(text) if !path.exists() => load_scenario(text),
                _ => Err(ScenarioError::Io(format!("{}: {e}", path.display()))),
            }
        }
    }
}

/// Resolves a profile reference: an existing CSV file (relative to
/// `base_dir` when given) wins over a shipped profile of the same stem.
pub fn resolve_profile(reference: &str, base_dir: Option<&Path>) -> Result<LoadProfile, ScenarioError> {
    let candidate: PathBuf = match base_dir {
        Some(dir) if Path::new(reference).is_relative() => dir.join(reference),
        _ => PathBuf::from(reference),
    };
    if candidate.is_file() {
        let text = std::fs::read_to_string(&candidate)
            .map_err(|e| ScenarioError::Io(format!("{}: {e}", candidate.display())))?;
        let name = candidate.file_stem().and_then(|s| s.to_str()).unwrap_or(reference);
        return Ok(parse_profile(&text)?.named(name));
    }
    let stem = Path::new(reference)
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or(reference);
    let text = shipped_profile(stem).ok_or_else(|| ScenarioError::UnknownProfile(reference.to_string()))?;
    Ok(parse_profile(text)?.named(stem))
}
