//! Monitoring abstraction: metric descriptors, typed samples and the
//! collector contract services use to expose their observables.

mod builtin;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scheduler::Timestamp;

pub use builtin::{
    LocalDatabaseMetricsCollector, LocalRequestMetricsCollector, ResourceUsageCollector, DEFAULT_REQUEST_WINDOW_MS,
};

pub const CPU_USAGE: &str = "cpu_usage";
pub const MEMORY_USAGE: &str = "memory_usage";
pub const RESPONSE_TIME_MS: &str = "response_time_ms";
pub const NETWORK_OK: &str = "network_ok";
pub const ACTIVE_CONNECTIONS: &str = "active_connections";
pub const PENDING_QUERIES: &str = "pending_queries";
pub const REQUEST_RATE: &str = "request_rate";
pub const DISTINCT_IPS: &str = "distinct_ips";
pub const ERROR_RATE: &str = "error_rate";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("collector `{0}` cannot read its observables")]
    CollectorUnavailable(String),
    #[error("duplicate collector id `{0}`")]
    DuplicateCollectorId(String),
    #[error("unknown collector `{0}`")]
    UnknownCollector(String),
    #[error("collector `{collector}` produced key set {produced:?}, declared {declared:?}")]
    SchemaMismatch {
        collector: String,
        produced: Vec<String>,
        declared: Vec<String>,
    },
    #[error("metric `{0}` is not finite")]
    NonFinite(String),
    #[error("collector `{collector}` sampled at {now} after a sample at {last}")]
    NonMonotonic {
        collector: String,
        last: Timestamp,
        now: Timestamp,
    },
    #[error("invalid metric key `{0}`: keys are ASCII snake_case")]
    InvalidKey(String),
}

/// A single observed value. Numbers are always finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MetricValue {
    Bool(bool),
    Number(Finite),
    Text(String),
}

/// An `f64` known to be neither NaN nor infinite.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct Finite(f64);

impl Finite {
    pub fn new(v: f64) -> Option<Self> {
        v.is_finite().then_some(Finite(v))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl<'de> Deserialize<'de> for Finite {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        Finite::new(v).ok_or_else(|| serde::de::Error::custom("non-finite number"))
    }
}

impl MetricValue {
    pub fn number(v: f64) -> Result<Self, MetricsError> {
        Finite::new(v)
            .map(MetricValue::Number)
            .ok_or_else(|| MetricsError::NonFinite(v.to_string()))
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            MetricValue::Number(n) => Some(n.get()),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            MetricValue::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn kind(&self) -> MetricKind {
        match self {
            MetricValue::Bool(_) => MetricKind::Boolean,
            MetricValue::Number(_) => MetricKind::Numeric,
            MetricValue::Text(_) => MetricKind::Text,
        }
    }
}

impl fmt::Display for MetricValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricValue::Bool(b) => write!(f, "{b}"),
            MetricValue::Number(n) => write!(f, "{}", n.get()),
            MetricValue::Text(s) => f.write_str(s),
        }
    }
}

impl From<bool> for MetricValue {
    fn from(b: bool) -> Self {
        MetricValue::Bool(b)
    }
}

impl From<&str> for MetricValue {
    fn from(s: &str) -> Self {
        MetricValue::Text(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Numeric,
    Boolean,
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDescriptor {
    pub key: String,
    pub kind: MetricKind,
    pub unit: String,
    pub description: String,
}

impl MetricDescriptor {
    pub fn new(key: &str, kind: MetricKind, unit: &str, description: &str) -> Self {
        Self {
            key: key.to_string(),
            kind,
            unit: unit.to_string(),
            description: description.to_string(),
        }
    }
}

/// Keys are case-sensitive ASCII snake_case.
pub fn is_valid_key(key: &str) -> bool {
    let mut chars = key.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase())
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSample {
    pub source: String,
    pub collected_at: Timestamp,
    pub values: BTreeMap<String, MetricValue>,
}

impl MetricsSample {
    pub fn new(source: impl Into<String>, collected_at: Timestamp) -> Self {
        Self {
            source: source.into(),
            collected_at,
            values: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<MetricValue>) -> Self {
        self.values.insert(key.to_string(), value.into());
        self
    }

    /// Builder shorthand for numeric values. Panics on non-finite input.
    pub fn with_number(self, key: &str, value: f64) -> Self {
        let v = MetricValue::number(value).expect("finite metric value");
        self.with(key, v)
    }

    pub fn get(&self, key: &str) -> Option<&MetricValue> {
        self.values.get(key)
    }

    pub fn number(&self, key: &str) -> Option<f64> {
        self.values.get(key).and_then(MetricValue::as_f64)
    }

    pub fn flag(&self, key: &str) -> Option<bool> {
        self.values.get(key).and_then(MetricValue::as_bool)
    }

    /// Compact `key=value` rendering used as evidence in peer notifications.
    pub fn digest(&self) -> String {
        self.values
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// The collector contract. `read` must be pure observation: it may never
/// touch adaptation state, and it reads all observables as one snapshot.
pub trait MetricsCollector: Send + Sync {
    fn id(&self) -> &str;

    fn descriptors(&self) -> &[MetricDescriptor];

    fn read(&self, now: Timestamp) -> Result<BTreeMap<String, MetricValue>, MetricsError>;
}

/// Reads `collector` and checks the result against its declared descriptors.
pub fn collect(collector: &dyn MetricsCollector, source: &str, now: Timestamp) -> Result<MetricsSample, MetricsError> {
    let values = collector.read(now)?;
    let descriptors = collector.descriptors();
    let matches = values.len() == descriptors.len()
        && descriptors
            .iter()
            .all(|d| values.get(&d.key).is_some_and(|v| v.kind() == d.kind));
    if !matches {
        return Err(MetricsError::SchemaMismatch {
            collector: collector.id().to_string(),
            produced: values.keys().cloned().collect(),
            declared: descriptors.iter().map(|d| d.key.clone()).collect(),
        });
    }
    Ok(MetricsSample {
        source: source.to_string(),
        collected_at: now,
        values,
    })
}

/// Checks descriptor keys for uniqueness and naming conventions.
pub fn validate_descriptors(collector: &dyn MetricsCollector) -> Result<(), MetricsError> {
    let mut seen = std::collections::BTreeSet::new();
    for d in collector.descriptors() {
        if !is_valid_key(&d.key) || !seen.insert(d.key.as_str()) {
            return Err(MetricsError::InvalidKey(d.key.clone()));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed {
        descriptors: Vec<MetricDescriptor>,
        values: BTreeMap<String, MetricValue>,
    }

    impl MetricsCollector for Fixed {
        fn id(&self) -> &str {
            "fixed"
        }
        fn descriptors(&self) -> &[MetricDescriptor] {
            &self.descriptors
        }
        fn read(&self, _now: Timestamp) -> Result<BTreeMap<String, MetricValue>, MetricsError> {
            Ok(self.values.clone())
        }
    }

    #[test]
    fn empty_collector_yields_empty_sample() {
        let c = Fixed {
            descriptors: vec![],
            values: BTreeMap::new(),
        };
        let s = collect(&c, "webui", Timestamp(42)).unwrap();
        assert!(s.values.is_empty());
        assert_eq!(s.collected_at, Timestamp(42));
        assert_eq!(s.source, "webui");
    }

    #[test]
    fn undeclared_key_is_rejected() {
        let c = Fixed {
            descriptors: vec![MetricDescriptor::new("a", MetricKind::Numeric, "", "")],
            values: [("b".to_string(), MetricValue::Bool(true))].into(),
        };
        assert!(matches!(
            collect(&c, "n", Timestamp(0)),
            Err(MetricsError::SchemaMismatch { .. })
        ));
    }

    #[test]
    fn wrong_kind_is_rejected() {
        let c = Fixed {
            descriptors: vec![MetricDescriptor::new("a", MetricKind::Numeric, "", "")],
            values: [("a".to_string(), MetricValue::Bool(true))].into(),
        };
        assert!(collect(&c, "n", Timestamp(0)).is_err());
    }

    #[test]
    fn non_finite_numbers_never_become_values() {
        assert!(MetricValue::number(f64::NAN).is_err());
        assert!(MetricValue::number(f64::INFINITY).is_err());
        assert!(serde_json::from_str::<Finite>("1e999").is_err());
        assert_eq!(MetricValue::number(1.5).unwrap().as_f64(), Some(1.5));
    }

    #[test]
    fn key_convention() {
        assert!(is_valid_key("cpu_usage"));
        assert!(is_valid_key("p99_ms"));
        assert!(!is_valid_key("CpuUsage"));
        assert!(!is_valid_key("_x"));
        assert!(!is_valid_key(""));
        assert!(!is_valid_key("cpu-usage"));
    }

    #[test]
    fn sample_json_shape() {
        let s = MetricsSample::new("persistence", Timestamp(5000))
            .with_number(RESPONSE_TIME_MS, 120.0)
            .with(NETWORK_OK, true);
        let json = serde_json::to_value(&s).unwrap();
        assert_eq!(json["source"], "persistence");
        assert_eq!(json["collected_at"], 5000);
        assert_eq!(json["values"]["network_ok"], true);
        assert_eq!(json["values"]["response_time_ms"], 120.0);
        let back: MetricsSample = serde_json::from_value(json).unwrap();
        assert_eq!(back, s);
        assert_eq!(s.digest(), "network_ok=true,response_time_ms=120");
    }
}
