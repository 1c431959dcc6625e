//! Simulated internals of the five TeaStore services: a synthetic database,
//! request accounting, a load-driven resource model and the business
//! behaviour that adaptation flags degrade.

mod observables;
mod service;
mod state;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use observables::{
    AffineMap, DatabaseProbe, Observables, RequestWindow, ResourceModel, SharedObservables, SimDatabase, WindowStats,
};
pub use service::{
    handle_request, ResponseCache, ResponseClass, ServiceError, ServiceRole, SimRequest, SimResponse,
    DEFAULT_CACHE_CAPACITY, EXTERNAL_IMAGE_LATENCY_MS,
};
pub use state::{AdaptationState, FlagValue, ImageProvider, PowerMode, StateFlag, StateTransition};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FaultError {
    #[error("unknown fault kind `{0}`")]
    UnknownKind(String),
    #[error("fault `{kind}` needs parameter {expected}")]
    BadParam { kind: String, expected: &'static str },
}

/// A perturbation of a node's observables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Fault {
    /// Database stops answering.
    DbDown,
    /// Database reachable again with its base latency.
    DbUp,
    /// Database answers after `latency_ms`.
    DbSlow { latency_ms: f64 },
    /// Pins CPU and memory usage, overriding the load model.
    Resources { cpu: f64, memory: f64 },
    /// Returns resource usage to the load model.
    ClearResources,
}

impl Fault {
    /// Builds a fault from the `{kind, param}` pair used on the wire.
    pub fn from_parts(kind: &str, param: Option<&serde_json::Value>) -> Result<Fault, FaultError> {
        let bad = |expected| FaultError::BadParam {
            kind: kind.to_string(),
            expected,
        };
        match kind {
            "db_down" => Ok(Fault::DbDown),
            "db_up" => Ok(Fault::DbUp),
            "clear_resources" => Ok(Fault::ClearResources),
            "db_slow" => {
                let latency_ms = param
                    .and_then(serde_json::Value::as_f64)
                    .filter(|v| v.is_finite() && *v >= 0.0)
                    .ok_or_else(|| bad("latency in ms"))?;
                Ok(Fault::DbSlow { latency_ms })
            }
            "resources" => {
                let p = param.ok_or_else(|| bad("{cpu, memory}"))?;
                let get = |k: &str| p.get(k).and_then(serde_json::Value::as_f64);
                match (get("cpu"), get("memory")) {
                    (Some(cpu), Some(memory)) if cpu.is_finite() && memory.is_finite() => {
                        Ok(Fault::Resources { cpu, memory })
                    }
                    _ => Err(bad("{cpu, memory}")),
                }
            }
            other => Err(FaultError::UnknownKind(other.to_string())),
        }
    }
}

/// Applies `fault` to the observables. Later collector reads reflect it.
pub fn inject_fault(observables: &mut Observables, fault: &Fault) {
    match *fault {
        Fault::DbDown => observables.database.up = false,
        Fault::DbUp => {
            observables.database.up = true;
            observables.database.injected_latency_ms = None;
        }
        Fault::DbSlow { latency_ms } => observables.database.injected_latency_ms = Some(latency_ms),
        Fault::Resources { cpu, memory } => observables.resources.pinned = Some((cpu, memory)),
        Fault::ClearResources => observables.resources.pinned = None,
    }
}
