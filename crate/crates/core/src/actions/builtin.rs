use std::collections::BTreeMap;
use std::sync::Arc;

use tracing::info;

use super::{ActionContext, ActionLevel, AdaptationAction, Effect, ExecutionMode, Outbound};
use crate::mesh::Notification;
use crate::sim::{FlagValue, ImageProvider, PowerMode, ServiceRole, StateFlag};

/// Business-level action that drives one adaptation flag to a fixed value.
#[derive(Debug, Clone)]
pub struct SetFlag {
    id: String,
    inverse: Option<String>,
    flag: StateFlag,
    value: FlagValue,
}

impl SetFlag {
    pub fn new(id: &str, flag: StateFlag, value: FlagValue) -> Self {
        Self {
            id: id.to_string(),
            inverse: None,
            flag,
            value,
        }
    }

    pub fn with_inverse(mut self, inverse: &str) -> Self {
        self.inverse = Some(inverse.to_string());
        self
    }
}

impl AdaptationAction for SetFlag {
    fn id(&self) -> &str {
        &self.id
    }

    fn level(&self) -> ActionLevel {
        ActionLevel::Business
    }

    fn inverse(&self) -> Option<&str> {
        self.inverse.as_deref()
    }

    fn apply(&self, ctx: &mut ActionContext<'_>) -> Result<Effect, String> {
        if ctx.state.get(self.flag) == self.value {
            return Ok(Effect::Unchanged);
        }
        ctx.state.set(self.flag, self.value);
        Ok(Effect::Changed(format!("{}={}", self.flag, self.value)))
    }
}

/// Sends a notification named after the triggering event to every peer.
#[derive(Debug, Clone)]
pub struct BroadcastEvent {
    id: String,
    event_name: String,
    inverse: Option<String>,
}

impl BroadcastEvent {
    pub fn new(id: &str, event_name: &str) -> Self {
        Self {
            id: id.to_string(),
            event_name: event_name.to_string(),
            inverse: None,
        }
    }

    pub fn with_inverse(mut self, inverse: &str) -> Self {
        self.inverse = Some(inverse.to_string());
        self
    }

    pub fn event_name(&self) -> &str {
        &self.event_name
    }
}

impl AdaptationAction for BroadcastEvent {
    fn id(&self) -> &str {
        &self.id
    }

    fn level(&self) -> ActionLevel {
        ActionLevel::Business
    }

    fn inverse(&self) -> Option<&str> {
        self.inverse.as_deref()
    }

    fn apply(&self, ctx: &mut ActionContext<'_>) -> Result<Effect, String> {
        let mut payload = BTreeMap::new();
        if let Some(sample) = ctx.evidence {
            payload.insert("evidence".to_string(), sample.digest());
        }
        ctx.outbox.push(Outbound::Broadcast(Notification {
            event_name: self.event_name.clone(),
            origin: ctx.node.to_string(),
            sent_at: ctx.now,
            payload,
        }));
        Ok(Effect::Emitted(format!("broadcast {}", self.event_name)))
    }
}

/// Infrastructure-level placeholder (scale, restart, ...) that only records
/// the request. Container runtimes are outside this crate.
#[derive(Debug, Clone)]
pub struct LoggingActuator {
    id: String,
    mode: ExecutionMode,
    inverse: Option<String>,
}

impl LoggingActuator {
    pub fn new(id: &str, mode: ExecutionMode) -> Self {
        Self {
            id: id.to_string(),
            mode,
            inverse: None,
        }
    }

    pub fn with_inverse(mut self, inverse: &str) -> Self {
        self.inverse = Some(inverse.to_string());
        self
    }
}

impl AdaptationAction for LoggingActuator {
    fn id(&self) -> &str {
        &self.id
    }

    fn level(&self) -> ActionLevel {
        ActionLevel::Infrastructure
    }

    fn mode(&self) -> ExecutionMode {
        self.mode
    }

    fn inverse(&self) -> Option<&str> {
        self.inverse.as_deref()
    }

    fn apply(&self, ctx: &mut ActionContext<'_>) -> Result<Effect, String> {
        info!(node = ctx.node, action = %self.id, "infrastructure action requested");
        Ok(Effect::Emitted("infrastructure request logged".into()))
    }
}

/// Every built-in action id.
pub const BUILTIN_ACTIONS: [&str; 16] = [
    "EnableCache",
    "DisableCache",
    "DatabaseAvailableEventBroadcast",
    "DatabaseUnavailableEventBroadcast",
    "EnableMaintenanceMode",
    "DisableMaintenanceMode",
    "OpenCircuitBreaker",
    "CloseCircuitBreaker",
    "DDoSAttackEventBroadcast",
    "LowPowerMode",
    "NormalMode",
    "EnableExternalImageProvider",
    "DisableExternalImageProvider",
    "ScaleService",
    "RestartContainer",
    "AlertAdministrator",
];

/// Instantiates a built-in action by id.
pub fn builtin_action(id: &str) -> Option<Arc<dyn AdaptationAction>> {
    use FlagValue::{Bool, Image, Power};
    let flag = |flag, value, inverse| -> Arc<dyn AdaptationAction> {
        Arc::new(SetFlag::new(id, flag, value).with_inverse(inverse))
    };
    Some(match id {
        "EnableCache" => flag(StateFlag::CacheEnabled, Bool(true), "DisableCache"),
        "DisableCache" => flag(StateFlag::CacheEnabled, Bool(false), "EnableCache"),
        "EnableMaintenanceMode" => flag(StateFlag::Maintenance, Bool(true), "DisableMaintenanceMode"),
        "DisableMaintenanceMode" => flag(StateFlag::Maintenance, Bool(false), "EnableMaintenanceMode"),
        "OpenCircuitBreaker" => flag(StateFlag::CircuitOpen, Bool(true), "CloseCircuitBreaker"),
        "CloseCircuitBreaker" => flag(StateFlag::CircuitOpen, Bool(false), "OpenCircuitBreaker"),
        "LowPowerMode" => flag(StateFlag::PowerMode, Power(PowerMode::Low), "NormalMode"),
        "NormalMode" => flag(StateFlag::PowerMode, Power(PowerMode::Normal), "LowPowerMode"),
        "EnableExternalImageProvider" => flag(
            StateFlag::ImageProvider,
            Image(ImageProvider::External),
            "DisableExternalImageProvider",
        ),
        "DisableExternalImageProvider" => flag(
            StateFlag::ImageProvider,
            Image(ImageProvider::Local),
            "EnableExternalImageProvider",
        ),
        "DatabaseAvailableEventBroadcast" => Arc::new(
            BroadcastEvent::new(id, "DatabaseAvailableEvent").with_inverse("DatabaseUnavailableEventBroadcast"),
        ),
        "DatabaseUnavailableEventBroadcast" => Arc::new(
            BroadcastEvent::new(id, "DatabaseUnavailableEvent").with_inverse("DatabaseAvailableEventBroadcast"),
        ),
        "DDoSAttackEventBroadcast" => Arc::new(BroadcastEvent::new(id, "DDoSAttackEvent")),
        "ScaleService" => Arc::new(LoggingActuator::new(id, ExecutionMode::Async)),
        "RestartContainer" => Arc::new(LoggingActuator::new(id, ExecutionMode::Async)),
        "AlertAdministrator" => Arc::new(LoggingActuator::new(id, ExecutionMode::Sync)),
        _ => return None,
    })
}

/// Business actions each TeaStore service exposes across the three scenarios.
pub fn role_catalog(role: ServiceRole) -> &'static [&'static str] {
    match role {
        ServiceRole::Persistence => &[
            "EnableCache",
            "DisableCache",
            "DatabaseAvailableEventBroadcast",
            "DatabaseUnavailableEventBroadcast",
            "AlertAdministrator",
        ],
        ServiceRole::Webui => &[
            "EnableMaintenanceMode",
            "DisableMaintenanceMode",
            "OpenCircuitBreaker",
            "CloseCircuitBreaker",
            "DDoSAttackEventBroadcast",
        ],
        ServiceRole::Recommender => &[
            "LowPowerMode",
            "NormalMode",
            "OpenCircuitBreaker",
            "CloseCircuitBreaker",
        ],
        ServiceRole::Auth => &["OpenCircuitBreaker", "CloseCircuitBreaker"],
        ServiceRole::Image => &[
            "EnableExternalImageProvider",
            "DisableExternalImageProvider",
            "OpenCircuitBreaker",
            "CloseCircuitBreaker",
        ],
        ServiceRole::Custom => &[],
    }
}
