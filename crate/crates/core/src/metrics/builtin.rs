use std::collections::BTreeMap;

use super::{
    MetricDescriptor, MetricKind, MetricValue, MetricsCollector, MetricsError, ACTIVE_CONNECTIONS, CPU_USAGE,
    DISTINCT_IPS, ERROR_RATE, MEMORY_USAGE, NETWORK_OK, PENDING_QUERIES, REQUEST_RATE, RESPONSE_TIME_MS,
};
use crate::scheduler::Timestamp;
use crate::sim::SharedObservables;

pub const DEFAULT_REQUEST_WINDOW_MS: u64 = 60_000;

fn num(v: f64) -> Result<MetricValue, MetricsError> {
    MetricValue::number(v)
}

/// Database health: latency, reachability and connection-pool counters.
/// An unreachable database reports `network_ok = false` rather than failing.
pub struct LocalDatabaseMetricsCollector {
    id: String,
    observables: SharedObservables,
    descriptors: Vec<MetricDescriptor>,
}

impl LocalDatabaseMetricsCollector {
    pub fn new(id: impl Into<String>, observables: SharedObservables) -> Self {
        Self {
            id: id.into(),
            observables,
            descriptors: vec![
                MetricDescriptor::new(
                    RESPONSE_TIME_MS,
                    MetricKind::Numeric,
                    "ms",
                    "health-check query latency",
                ),
                MetricDescriptor::new(NETWORK_OK, MetricKind::Boolean, "", "database reachable"),
                MetricDescriptor::new(
                    ACTIVE_CONNECTIONS,
                    MetricKind::Numeric,
                    "connections",
                    "open pool connections",
                ),
                MetricDescriptor::new(
                    PENDING_QUERIES,
                    MetricKind::Numeric,
                    "queries",
                    "queries waiting for a connection",
                ),
            ],
        }
    }
}

impl MetricsCollector for LocalDatabaseMetricsCollector {
    fn id(&self) -> &str {
        &self.id
    }

    fn descriptors(&self) -> &[MetricDescriptor] {
        &self.descriptors
    }

    fn read(&self, _now: Timestamp) -> Result<BTreeMap<String, MetricValue>, MetricsError> {
        let probe = self.observables.lock().database.probe();
        Ok(BTreeMap::from([
            (RESPONSE_TIME_MS.into(), num(probe.response_time_ms)?),
            (NETWORK_OK.into(), MetricValue::Bool(probe.network_ok)),
            (ACTIVE_CONNECTIONS.into(), num(f64::from(probe.active_connections))?),
            (PENDING_QUERIES.into(), num(f64::from(probe.pending_queries))?),
        ]))
    }
}

/// Request rate, client spread and error ratio over the node's sliding window.
pub struct LocalRequestMetricsCollector {
    id: String,
    observables: SharedObservables,
    descriptors: Vec<MetricDescriptor>,
}

impl LocalRequestMetricsCollector {
    pub fn new(id: impl Into<String>, observables: SharedObservables) -> Self {
        Self {
            id: id.into(),
            observables,
            descriptors: vec![
                MetricDescriptor::new(
                    REQUEST_RATE,
                    MetricKind::Numeric,
                    "req/s",
                    "arrivals per second averaged over the window",
                ),
                MetricDescriptor::new(
                    DISTINCT_IPS,
                    MetricKind::Numeric,
                    "clients",
                    "distinct client addresses in the window",
                ),
                MetricDescriptor::new(
                    ERROR_RATE,
                    MetricKind::Numeric,
                    "fraction",
                    "failed responses / arrivals in the window",
                ),
            ],
        }
    }
}

impl MetricsCollector for LocalRequestMetricsCollector {
    fn id(&self) -> &str {
        &self.id
    }

    fn descriptors(&self) -> &[MetricDescriptor] {
        &self.descriptors
    }

    fn read(&self, now: Timestamp) -> Result<BTreeMap<String, MetricValue>, MetricsError> {
        let stats = self.observables.lock().requests.stats(now);
        Ok(BTreeMap::from([
            (REQUEST_RATE.into(), num(stats.rate)?),
            (DISTINCT_IPS.into(), num(stats.distinct_ips as f64)?),
            (ERROR_RATE.into(), num(stats.error_rate)?),
        ]))
    }
}

pub struct ResourceUsageCollector {
    id: String,
    observables: SharedObservables,
    descriptors: Vec<MetricDescriptor>,
}

impl ResourceUsageCollector {
    pub fn new(id: impl Into<String>, observables: SharedObservables) -> Self {
        Self {
            id: id.into(),
            observables,
            descriptors: vec![
                MetricDescriptor::new(CPU_USAGE, MetricKind::Numeric, "percent", "CPU utilisation"),
                MetricDescriptor::new(MEMORY_USAGE, MetricKind::Numeric, "percent", "memory utilisation"),
            ],
        }
    }
}

impl MetricsCollector for ResourceUsageCollector {
    fn id(&self) -> &str {
        &self.id
    }

    fn descriptors(&self) -> &[MetricDescriptor] {
        &self.descriptors
    }

    fn read(&self, now: Timestamp) -> Result<BTreeMap<String, MetricValue>, MetricsError> {
        let (cpu, mem) = self.observables.lock().resource_usage(now);
        Ok(BTreeMap::from([
            (CPU_USAGE.into(), num(cpu)?),
            (MEMORY_USAGE.into(), num(mem)?),
        ]))
    }
}
