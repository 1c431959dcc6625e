use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerMode {
    #[default]
    Normal,
    Low,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageProvider {
    #[default]
    Local,
    External,
}

/// One adaptation flag of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateFlag {
    Maintenance,
    CircuitOpen,
    CacheEnabled,
    PowerMode,
    ImageProvider,
    DdosArmed,
}

impl StateFlag {
    pub const ALL: [StateFlag; 6] = [
        StateFlag::Maintenance,
        StateFlag::CircuitOpen,
        StateFlag::CacheEnabled,
        StateFlag::PowerMode,
        StateFlag::ImageProvider,
        StateFlag::DdosArmed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StateFlag::Maintenance => "maintenance",
            StateFlag::CircuitOpen => "circuit_open",
            StateFlag::CacheEnabled => "cache_enabled",
            StateFlag::PowerMode => "power_mode",
            StateFlag::ImageProvider => "image_provider",
            StateFlag::DdosArmed => "ddos_armed",
        }
    }
}

impl fmt::Display for StateFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Value carried by a [`StateFlag`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FlagValue {
    Bool(bool),
    Power(PowerMode),
    Image(ImageProvider),
}

impl fmt::Display for FlagValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlagValue::Bool(b) => write!(f, "{b}"),
            FlagValue::Power(PowerMode::Normal) => f.write_str("normal"),
            FlagValue::Power(PowerMode::Low) => f.write_str("low"),
            FlagValue::Image(ImageProvider::Local) => f.write_str("local"),
            FlagValue::Image(ImageProvider::External) => f.write_str("external"),
        }
    }
}

/// The adaptation flags of one node. Flags that do not apply to a node's
/// role keep their defaults, since no registered action touches them.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AdaptationState {
    pub maintenance: bool,
    pub circuit_open: bool,
    pub cache_enabled: bool,
    pub power_mode: PowerMode,
    pub image_provider: ImageProvider,
    pub ddos_armed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateTransition {
    pub flag: StateFlag,
    pub from: FlagValue,
    pub to: FlagValue,
}

impl AdaptationState {
    pub fn get(&self, flag: StateFlag) -> FlagValue {
        match flag {
            StateFlag::Maintenance => FlagValue::Bool(self.maintenance),
            StateFlag::CircuitOpen => FlagValue::Bool(self.circuit_open),
            StateFlag::CacheEnabled => FlagValue::Bool(self.cache_enabled),
            StateFlag::PowerMode => FlagValue::Power(self.power_mode),
            StateFlag::ImageProvider => FlagValue::Image(self.image_provider),
            StateFlag::DdosArmed => FlagValue::Bool(self.ddos_armed),
        }
    }

    /// Sets `flag`; returns false when the value has the wrong type.
    pub fn set(&mut self, flag: StateFlag, value: FlagValue) -> bool {
        match (flag, value) {
            (StateFlag::Maintenance, FlagValue::Bool(b)) => self.maintenance = b,
            (StateFlag::CircuitOpen, FlagValue::Bool(b)) => self.circuit_open = b,
            (StateFlag::CacheEnabled, FlagValue::Bool(b)) => self.cache_enabled = b,
            (StateFlag::DdosArmed, FlagValue::Bool(b)) => self.ddos_armed = b,
            (StateFlag::PowerMode, FlagValue::Power(p)) => self.power_mode = p,
            (StateFlag::ImageProvider, FlagValue::Image(i)) => self.image_provider = i,
            _ => return false,
        }
        true
    }

    /// Flags that differ between `self` (before) and `after`, in flag order.
    pub fn transitions_to(&self, after: &AdaptationState) -> Vec<StateTransition> {
        StateFlag::ALL
            .iter()
            .filter_map(|&flag| {
                let (from, to) = (self.get(flag), after.get(flag));
                (from != to).then_some(StateTransition { flag, from, to })
            })
            .collect()
    }
}
