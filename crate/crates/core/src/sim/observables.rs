use std::collections::{HashMap, VecDeque};
use std::net::IpAddr;
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::scheduler::Timestamp;

/// Everything a node's collectors can observe, behind one lock so that a
/// collector always reads a consistent snapshot.
pub type SharedObservables = Arc<Mutex<Observables>>;

#[derive(Debug, Clone, Default)]
pub struct Observables {
    pub database: SimDatabase,
    pub requests: RequestWindow,
    pub resources: ResourceModel,
}

impl Observables {
    pub fn shared(self) -> SharedObservables {
        Arc::new(Mutex::new(self))
    }

    /// Current (cpu, memory) usage derived from the windowed request rate.
    pub fn resource_usage(&mut self, now: Timestamp) -> (f64, f64) {
        let rate = self.requests.stats(now).rate;
        self.resources.usage(rate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatabaseProbe {
    pub response_time_ms: f64,
    pub network_ok: bool,
    pub active_connections: u32,
    pub pending_queries: u32,
}

/// A synthetic database with injectable outages and latency.
#[derive(Debug, Clone, PartialEq)]
pub struct SimDatabase {
    pub up: bool,
    pub base_latency_ms: f64,
    pub injected_latency_ms: Option<f64>,
    pub active_connections: u32,
    pub pending_queries: u32,
    /// Reported as the response time when the database cannot be reached.
    pub probe_timeout_ms: f64,
}

impl Default for SimDatabase {
    fn default() -> Self {
        Self {
            up: true,
            base_latency_ms: 12.0,
            injected_latency_ms: None,
            active_connections: 3,
            pending_queries: 0,
            probe_timeout_ms: 10_000.0,
        }
    }
}

impl SimDatabase {
    pub fn response_time_ms(&self) -> f64 {
        match self.injected_latency_ms {
            Some(l) => l.max(self.base_latency_ms),
            None => self.base_latency_ms,
        }
    }

    pub fn probe(&self) -> DatabaseProbe {
        if self.up {
            DatabaseProbe {
                response_time_ms: self.response_time_ms(),
                network_ok: true,
                active_connections: self.active_connections,
                pending_queries: self.pending_queries,
            }
        } else {
            DatabaseProbe {
                response_time_ms: self.probe_timeout_ms,
                network_ok: false,
                active_connections: 0,
                pending_queries: self.pending_queries,
            }
        }
    }

    /// Looks a product up. Every key exists while the database is reachable.
    pub fn query(&self, key: &str) -> Option<String> {
        self.up.then(|| format!("product:{key}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WindowStats {
    pub count: usize,
    /// Requests per second over the full window length.
    pub rate: f64,
    pub distinct_ips: usize,
    pub error_rate: f64,
}

/// Fixed-length sliding window over recorded request arrivals. An arrival at
/// time `t` counts at `now` while `now - window < t`.
#[derive(Debug, Clone)]
pub struct RequestWindow {
    window_ms: u64,
    entries: VecDeque<(Timestamp, IpAddr, bool)>,
    per_ip: HashMap<IpAddr, u32>,
    errors: usize,
    total: u64,
}

impl Default for RequestWindow {
    fn default() -> Self {
        Self::new(crate::metrics::DEFAULT_REQUEST_WINDOW_MS)
    }
}

impl RequestWindow {
    pub fn new(window_ms: u64) -> Self {
        assert!(window_ms > 0, "request window must be positive");
        Self {
            window_ms,
            entries: VecDeque::new(),
            per_ip: HashMap::new(),
            errors: 0,
            total: 0,
        }
    }

    pub fn window_ms(&self) -> u64 {
        self.window_ms
    }

    pub fn total_recorded(&self) -> u64 {
        self.total
    }

    pub fn record(&mut self, at: Timestamp, ip: IpAddr, error: bool) {
        debug_assert!(self.entries.back().is_none_or(|(t, _, _)| *t <= at));
        self.entries.push_back((at, ip, error));
        *self.per_ip.entry(ip).or_default() += 1;
        self.errors += usize::from(error);
        self.total += 1;
    }

    fn evict(&mut self, now: Timestamp) {
        while let Some(&(t, ip, err)) = self.entries.front() {
            if t.0 + self.window_ms > now.0 {
                break;
            }
            self.entries.pop_front();
            self.errors -= usize::from(err);
            if let Some(c) = self.per_ip.get_mut(&ip) {
                *c -= 1;
                if *c == 0 {
                    self.per_ip.remove(&ip);
                }
            }
        }
    }

    pub fn stats(&mut self, now: Timestamp) -> WindowStats {
        self.evict(now);
        let count = self.entries.len();
        WindowStats {
            count,
            rate: count as f64 / (self.window_ms as f64 / 1000.0),
            distinct_ips: self.per_ip.len(),
            error_rate: if count == 0 {
                0.0
            } else {
                self.errors as f64 / count as f64
            },
        }
    }
}

/// `base + per_rps * rate`, clamped to [0, 100].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub base: f64,
    pub per_rps: f64,
}

impl AffineMap {
    pub fn raw(&self, rate: f64) -> f64 {
        self.base + self.per_rps * rate
    }

    pub fn eval(&self, rate: f64) -> f64 {
        self.raw(rate).clamp(0.0, 100.0)
    }
}

/// Maps windowed request load onto CPU and memory percentages. An override
/// pins both values, used to replay recorded resource trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceModel {
    pub cpu: AffineMap,
    pub memory: AffineMap,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pinned: Option<(f64, f64)>,
}

impl Default for ResourceModel {
    fn default() -> Self {
        Self {
            cpu: AffineMap {
                base: 10.0,
                per_rps: 0.6,
            },
            memory: AffineMap {
                base: 25.0,
                per_rps: 0.25,
            },
            pinned: None,
        }
    }
}

impl ResourceModel {
    pub fn usage(&self, rate: f64) -> (f64, f64) {
        match self.pinned {
            Some((cpu, mem)) => (cpu.clamp(0.0, 100.0), mem.clamp(0.0, 100.0)),
            None => (self.cpu.eval(rate), self.memory.eval(rate)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::net::Ipv4Addr;

    fn ip(n: u8) -> IpAddr {
        IpAddr::V4(Ipv4Addr::new(10, 0, 0, n))
    }

    #[test]
    fn uniform_window_rate_matches_count_over_window() {
        // 18 000 arrivals spread over (0, 60 000] ms.
        let mut w = RequestWindow::new(60_000);
        for i in 1..=18_000u64 {
            let at = Timestamp((i * 60_000).div_ceil(18_000));
            w.record(at, ip((i % 7) as u8), false);
        }
        let s = w.stats(Timestamp(60_000));
        assert_eq!(s.count, 18_000);
        let expected = 18_000.0 / 60.0;
        assert!(((s.rate - expected) / expected).abs() <= 1e-9);
        assert_eq!(s.distinct_ips, 7);
    }

    #[test]
    fn empty_window_has_zero_rate() {
        let mut w = RequestWindow::new(60_000);
        let s = w.stats(Timestamp(123_456));
        assert_eq!(s, WindowStats::default());
    }

    #[test]
    fn arrivals_leave_the_window() {
        let mut w = RequestWindow::new(1000);
        w.record(Timestamp(0), ip(1), true);
        w.record(Timestamp(500), ip(2), false);
        assert_eq!(w.stats(Timestamp(999)).count, 2);
        let s = w.stats(Timestamp(1000));
        assert_eq!(s.count, 1);
        assert_eq!(s.distinct_ips, 1);
        assert_eq!(s.error_rate, 0.0);
        assert_eq!(w.stats(Timestamp(1500)).count, 0);
        assert_eq!(w.total_recorded(), 2);
    }

    #[test]
    fn error_rate_is_per_window() {
        let mut w = RequestWindow::new(10_000);
        for i in 0..10 {
            w.record(Timestamp(i * 100), ip(1), i % 4 == 0);
        }
        assert!((w.stats(Timestamp(1000)).error_rate - 0.3).abs() < 1e-12);
    }

    #[test]
    fn slow_database_reports_exact_latency_and_down_reports_unhealthy() {
        let mut db = SimDatabase {
            base_latency_ms: 120.0,
            ..SimDatabase::default()
        };
        let p = db.probe();
        assert_eq!(p.response_time_ms, 120.0);
        assert!(p.network_ok);
        assert_eq!(p.active_connections, 3);
        db.injected_latency_ms = Some(5000.0);
        assert_eq!(db.probe().response_time_ms, 5000.0);
        db.up = false;
        assert!(!db.probe().network_ok);
        assert_eq!(db.query("1"), None);
    }

    #[test]
    fn pinned_resources_override_load() {
        let m = ResourceModel {
            pinned: Some((78.0, 120.0)),
            ..ResourceModel::default()
        };
        assert_eq!(m.usage(0.0), (78.0, 100.0));
    }

    proptest! {
        #[test]
        fn resource_model_is_monotone_and_bounded(a in 0.0f64..2000.0, b in 0.0f64..2000.0) {
            let m = ResourceModel::default();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(m.cpu.raw(lo) <= m.cpu.raw(hi));
            prop_assert!(m.memory.raw(lo) <= m.memory.raw(hi));
            let (cpu, mem) = m.usage(hi);
            prop_assert!((0.0..=100.0).contains(&cpu));
            prop_assert!((0.0..=100.0).contains(&mem));
        }

        #[test]
        fn windowed_rate_is_count_over_window(k in 0usize..500, w_s in 1u64..120) {
            let w_ms = w_s * 1000;
            let mut w = RequestWindow::new(w_ms);
            let now = Timestamp(10 * w_ms);
            for i in 0..k as u64 {
                // strictly inside (now - w, now]
                let at = Timestamp(now.0 - w_ms + 1 + i * (w_ms - 1) / (k as u64).max(1));
                w.record(at, ip(1), false);
            }
            let s = w.stats(now);
            let expected = k as f64 / (w_ms as f64 / 1000.0);
            prop_assert_eq!(s.count, k);
            prop_assert!((s.rate - expected).abs() <= 1e-9 * expected.max(1.0));
        }
    }
}
