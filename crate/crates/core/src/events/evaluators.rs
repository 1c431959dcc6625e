use std::sync::Arc;

use serde::Serialize;

use super::{ConditionEvaluator, EventError};
use crate::metrics::{MetricsSample, CPU_USAGE, MEMORY_USAGE, NETWORK_OK, REQUEST_RATE, RESPONSE_TIME_MS};

pub const DATABASE_TIMEOUT_MS: f64 = 5000.0;
pub const DDOS_RATE_THRESHOLD: f64 = 300.0;
pub const CPU_HIGH: f64 = 75.0;
pub const MEMORY_HIGH: f64 = 80.0;
pub const RECOVERY_LOW: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "comparison", rename_all = "snake_case")]
pub enum Comparison {
    GreaterThan {
        bound: f64,
    },
    LessThan {
        bound: f64,
    },
    /// Inclusive on both ends.
    Between {
        lower: f64,
        upper: f64,
    },
}

/// Single-metric numeric threshold. Missing or non-numeric values are false.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdEvaluator {
    metric_key: String,
    #[serde(flatten)]
    comparison: Comparison,
}

impl ThresholdEvaluator {
    pub fn new(metric_key: &str, comparison: Comparison) -> Result<Self, EventError> {
        let finite = match comparison {
            Comparison::GreaterThan { bound } | Comparison::LessThan { bound } => bound.is_finite(),
            Comparison::Between { lower, upper } => lower.is_finite() && upper.is_finite() && lower <= upper,
        };
        if !finite {
            return Err(EventError::InvalidThreshold(format!("{metric_key}: {comparison:?}")));
        }
        Ok(Self {
            metric_key: metric_key.to_string(),
            comparison,
        })
    }

    pub fn greater_than(metric_key: &str, bound: f64) -> Result<Self, EventError> {
        Self::new(metric_key, Comparison::GreaterThan { bound })
    }

    pub fn less_than(metric_key: &str, bound: f64) -> Result<Self, EventError> {
        Self::new(metric_key, Comparison::LessThan { bound })
    }

    pub fn between(metric_key: &str, lower: f64, upper: f64) -> Result<Self, EventError> {
        Self::new(metric_key, Comparison::Between { lower, upper })
    }
}

impl ConditionEvaluator for ThresholdEvaluator {
    fn evaluate(&self, sample: &MetricsSample) -> bool {
        let Some(v) = sample.number(&self.metric_key) else {
            return false;
        };
        match self.comparison {
            Comparison::GreaterThan { bound } => v > bound,
            Comparison::LessThan { bound } => v < bound,
            Comparison::Between { lower, upper } => lower <= v && v <= upper,
        }
    }

    fn describe(&self) -> String {
        match self.comparison {
            Comparison::GreaterThan { bound } => format!("{} > {bound}", self.metric_key),
            Comparison::LessThan { bound } => format!("{} < {bound}", self.metric_key),
            Comparison::Between { lower, upper } => {
                format!("{lower} <= {} <= {upper}", self.metric_key)
            }
        }
    }
}

/// `response_time_ms > timeout OR network_ok == false`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnHealthyDatabaseEvaluator {
    pub timeout_ms: f64,
}

impl Default for UnHealthyDatabaseEvaluator {
    fn default() -> Self {
        Self {
            timeout_ms: DATABASE_TIMEOUT_MS,
        }
    }
}

impl ConditionEvaluator for UnHealthyDatabaseEvaluator {
    fn evaluate(&self, sample: &MetricsSample) -> bool {
        sample.number(RESPONSE_TIME_MS).is_some_and(|rt| rt > self.timeout_ms) || sample.flag(NETWORK_OK) == Some(false)
    }

    fn describe(&self) -> String {
        format!("response_time_ms > {} OR network_ok == false", self.timeout_ms)
    }
}

/// `response_time_ms <= timeout AND network_ok == true`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HealthyDatabaseEvaluator {
    pub timeout_ms: f64,
}

impl Default for HealthyDatabaseEvaluator {
    fn default() -> Self {
        Self {
            timeout_ms: DATABASE_TIMEOUT_MS,
        }
    }
}

impl ConditionEvaluator for HealthyDatabaseEvaluator {
    fn evaluate(&self, sample: &MetricsSample) -> bool {
        sample.number(RESPONSE_TIME_MS).is_some_and(|rt| rt <= self.timeout_ms) && sample.flag(NETWORK_OK) == Some(true)
    }

    fn describe(&self) -> String {
        format!("response_time_ms <= {} AND network_ok == true", self.timeout_ms)
    }
}

/// `request_rate > threshold`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DDoSEvaluator {
    pub max_rate: f64,
}

impl Default for DDoSEvaluator {
    fn default() -> Self {
        Self {
            max_rate: DDOS_RATE_THRESHOLD,
        }
    }
}

impl ConditionEvaluator for DDoSEvaluator {
    fn evaluate(&self, sample: &MetricsSample) -> bool {
        sample.number(REQUEST_RATE).is_some_and(|r| r > self.max_rate)
    }

    fn describe(&self) -> String {
        format!("request_rate > {}", self.max_rate)
    }
}

/// `request_rate <= threshold`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonDDoSEvaluator {
    pub max_rate: f64,
}

impl Default for NonDDoSEvaluator {
    fn default() -> Self {
        Self {
            max_rate: DDOS_RATE_THRESHOLD,
        }
    }
}

impl ConditionEvaluator for NonDDoSEvaluator {
    fn evaluate(&self, sample: &MetricsSample) -> bool {
        sample.number(REQUEST_RATE).is_some_and(|r| r <= self.max_rate)
    }

    fn describe(&self) -> String {
        format!("request_rate <= {}", self.max_rate)
    }
}

/// `cpu_usage > cpu_high OR memory_usage > memory_high`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncreaseResourceUsageEvaluator {
    pub cpu_high: f64,
    pub memory_high: f64,
}

impl Default for IncreaseResourceUsageEvaluator {
    fn default() -> Self {
        Self {
            cpu_high: CPU_HIGH,
            memory_high: MEMORY_HIGH,
        }
    }
}

impl ConditionEvaluator for IncreaseResourceUsageEvaluator {
    fn evaluate(&self, sample: &MetricsSample) -> bool {
        sample.number(CPU_USAGE).is_some_and(|c| c > self.cpu_high)
            || sample.number(MEMORY_USAGE).is_some_and(|m| m > self.memory_high)
    }

    fn describe(&self) -> String {
        format!("cpu_usage > {} OR memory_usage > {}", self.cpu_high, self.memory_high)
    }
}

/// `cpu_usage < cpu_low AND memory_usage < memory_low`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecreaseResourceUsageEvaluator {
    pub cpu_low: f64,
    pub memory_low: f64,
}

impl Default for DecreaseResourceUsageEvaluator {
    fn default() -> Self {
        Self {
            cpu_low: RECOVERY_LOW,
            memory_low: RECOVERY_LOW,
        }
    }
}

impl ConditionEvaluator for DecreaseResourceUsageEvaluator {
    fn evaluate(&self, sample: &MetricsSample) -> bool {
        sample.number(CPU_USAGE).is_some_and(|c| c < self.cpu_low)
            && sample.number(MEMORY_USAGE).is_some_and(|m| m < self.memory_low)
    }

    fn describe(&self) -> String {
        format!("cpu_usage < {} AND memory_usage < {}", self.cpu_low, self.memory_low)
    }
}

/// True when boolean metric `key` equals `expected`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlagEvaluator {
    pub key: String,
    pub expected: bool,
}

impl ConditionEvaluator for FlagEvaluator {
    fn evaluate(&self, sample: &MetricsSample) -> bool {
        sample.flag(&self.key) == Some(self.expected)
    }

    fn describe(&self) -> String {
        format!("{} == {}", self.key, self.expected)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantEvaluator(pub bool);

impl ConditionEvaluator for ConstantEvaluator {
    fn evaluate(&self, _sample: &MetricsSample) -> bool {
        self.0
    }

    fn describe(&self) -> String {
        self.0.to_string()
    }
}

/// Context-aware combination of other evaluators.
#[derive(Clone)]
pub enum Combinator {
    All(Vec<Arc<dyn ConditionEvaluator>>),
    Any(Vec<Arc<dyn ConditionEvaluator>>),
    Not(Arc<dyn ConditionEvaluator>),
}

impl ConditionEvaluator for Combinator {
    fn evaluate(&self, sample: &MetricsSample) -> bool {
        match self {
            Combinator::All(parts) => parts.iter().all(|p| p.evaluate(sample)),
            Combinator::Any(parts) => parts.iter().any(|p| p.evaluate(sample)),
            Combinator::Not(inner) => !inner.evaluate(sample),
        }
    }

    fn describe(&self) -> String {
        let join = |parts: &[Arc<dyn ConditionEvaluator>], op: &str| {
            parts
                .iter()
                .map(|p| format!("({})", p.describe()))
                .collect::<Vec<_>>()
                .join(op)
        };
        match self {
            Combinator::All(p) => join(p, " AND "),
            Combinator::Any(p) => join(p, " OR "),
            Combinator::Not(inner) => format!("NOT ({})", inner.describe()),
        }
    }
}
