//! Load profiles (`time,arrivals` CSV) and the deterministic arrival driver.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::net::{IpAddr, Ipv4Addr};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{Mesh, TickReport};
use crate::scheduler::{Clock, Scheduler, Timestamp, VirtualClock};
use crate::sim::{Fault, ResponseClass};

pub const PROFILE_HEADER: &str = "time,arrivals";
/// Distinct client addresses the generator draws from.
pub const CLIENT_POOL_SIZE: u32 = 200;
/// Catalogue items page views are spread over.
pub const CATALOGUE_SIZE: u32 = 100;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProfileError {
    #[error("line {0}: expected `<time>,<arrivals>`")]
    MalformedLine(usize),
    #[error("line {0}: time does not increase")]
    NonMonotonicTime(usize),
    #[error("line {0}: negative arrival rate")]
    NegativeRate(usize),
    #[error("profile has no points")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub time_s: f64,
    pub rate: f64,
}

/// Piecewise-linear arrival rate over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadProfile {
    pub name: String,
    pub points: Vec<ProfilePoint>,
}

/// Parses a profile. Blank lines and lines starting with `#` are skipped;
/// the first remaining line may be the `time,arrivals` header. Line numbers
/// in errors are 1-based physical lines.
pub fn parse_profile(text: &str) -> Result<LoadProfile, ProfileError> {
    let mut points: Vec<ProfilePoint> = Vec::new();
    let mut seen_data_or_header = false;
    for (i, raw) in text.split('\n').enumerate() {
        let line_no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw).trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let first = !seen_data_or_header;
        seen_data_or_header = true;
        if first && line.replace(' ', "") == PROFILE_HEADER {
            continue;
        }
        let (t, r) = line.split_once(',').ok_or(ProfileError::MalformedLine(line_no))?;
        let number = |s: &str| {
            let s = s.trim();
            let numeric = !s.is_empty()
                && s.chars()
                    .all(|c| c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E'));
            s.parse::<f64>()
                .ok()
                .filter(|v| numeric && v.is_finite())
                .ok_or(ProfileError::MalformedLine(line_no))
        };
        let point = ProfilePoint {
            time_s: number(t)?,
            rate: number(r)?,
        };
        if point.rate < 0.0 {
            return Err(ProfileError::NegativeRate(line_no));
        }
        if points.last().is_some_and(|p| point.time_s <= p.time_s) {
            return Err(ProfileError::NonMonotonicTime(line_no));
        }
        points.push(point);
    }
    if points.is_empty() {
        return Err(ProfileError::Empty);
    }
    Ok(LoadProfile {
        name: String::new(),
        points,
    })
}

impl LoadProfile {
    pub fn named(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    /// Canonical CSV text. Values print in shortest round-trip form.
    pub fn serialize(&self) -> String {
        let mut out = String::from(PROFILE_HEADER);
        out.push('\n');
        for p in &self.points {
            let _ = writeln!(out, "{},{}", p.time_s, p.rate);
        }
        out
    }

    /// Interpolated rate at `t_s`, clamped to the end points.
    pub fn rate_at(&self, t_s: f64) -> f64 {
        let pts = &self.points;
        let (first, last) = (pts[0], pts[pts.len() - 1]);
        if t_s <= first.time_s {
            return first.rate;
        }
        if t_s >= last.time_s {
            return last.rate;
        }
        let i = pts.partition_point(|p| p.time_s <= t_s) - 1;
        let (a, b) = (pts[i], pts[i + 1]);
        a.rate + (b.rate - a.rate) * (t_s - a.time_s) / (b.time_s - a.time_s)
    }

    /// Exact integral of the rate over `[from_s, to_s]`.
    pub fn integral(&self, from_s: f64, to_s: f64) -> f64 {
        if to_s <= from_s {
            return 0.0;
        }
        let mut cuts = vec![from_s];
        cuts.extend(self.points.iter().map(|p| p.time_s).filter(|&t| t > from_s && t < to_s));
        cuts.push(to_s);
        cuts.windows(2)
            .map(|w| (w[1] - w[0]) * (self.rate_at(w[0]) + self.rate_at(w[1])) / 2.0)
            .sum()
    }

    /// Arrivals per one-second bucket: the bucket integral, rounded.
    pub fn bucket_counts(&self, duration_s: f64) -> Vec<u64> {
        let buckets = duration_s.max(0.0).ceil() as u64;
        (0..buckets)
            .map(|s| {
                let a = s as f64;
                let b = (a + 1.0).min(duration_s);
                self.integral(a, b).round() as u64
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arrival {
    pub at: Timestamp,
    pub client_ip: IpAddr,
    pub item: u32,
}

/// Client address number `k` of the generator's pool.
pub fn client_ip(k: u32) -> IpAddr {
    IpAddr::V4(Ipv4Addr::new(10, 0, (k / 256) as u8, (k % 256) as u8))
}

/// Deterministic arrival schedule: evenly spaced within each one-second
/// bucket, optionally shifted by seeded jitter that never leaves its slot.
pub fn arrival_schedule(
    profile: &LoadProfile,
    start: Timestamp,
    duration_s: f64,
    seed: u64,
    jitter: bool,
) -> Vec<Arrival> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total_ms = (duration_s.max(0.0) * 1000.0).round() as u64;
    let mut out = Vec::new();
    for (s, n) in profile.bucket_counts(duration_s).into_iter().enumerate() {
        let bucket_start = s as u64 * 1000;
        let bucket_ms = total_ms.saturating_sub(bucket_start).min(1000);
        if n == 0 || bucket_ms == 0 {
            continue;
        }
        let spacing = bucket_ms as f64 / n as f64;
        for i in 0..n {
            let shift = if jitter { rng.random::<f64>() * spacing } else { 0.0 };
            let offset = ((i as f64 * spacing + shift).floor() as u64).min(bucket_ms - 1);
            out.push(Arrival {
                at: start.plus(bucket_start + offset),
                client_ip: client_ip(rng.random_range(0..CLIENT_POOL_SIZE)),
                item: rng.random_range(0..CATALOGUE_SIZE),
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub at: Timestamp,
    pub client_ip: IpAddr,
    pub item: u32,
    pub class: ResponseClass,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RequestLog {
    pub entries: Vec<RequestRecord>,
}

impl RequestLog {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn counts(&self) -> BTreeMap<ResponseClass, usize> {
        let mut counts = BTreeMap::new();
        for e in &self.entries {
            *counts.entry(e.class).or_insert(0) += 1;
        }
        counts
    }

    pub fn count_between(&self, from: Timestamp, to: Timestamp) -> usize {
        self.entries.iter().filter(|e| e.at >= from && e.at < to).count()
    }
}

/// A fault to inject into one node at a given time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedFault {
    pub at: Timestamp,
    pub target: String,
    pub fault: Fault,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultRecord {
    pub at: Timestamp,
    pub target: String,
    pub fault: Fault,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLog {
    pub requests: RequestLog,
    pub ticks: Vec<TickReport>,
    pub faults: Vec<FaultRecord>,
}

fn apply_fault(mesh: &Mesh, f: &TimedFault, at: Timestamp) -> FaultRecord {
    FaultRecord {
        at,
        target: f.target.clone(),
        fault: f.fault.clone(),
        error: mesh.inject_fault(&f.target, &f.fault).err().map(|e| e.to_string()),
    }
}

fn serve(mesh: &Mesh, a: &Arrival, at: Timestamp) -> RequestRecord {
    RequestRecord {
        at,
        client_ip: a.client_ip,
        item: a.item,
        class: mesh.page_view(at, a.client_ip, a.item),
    }
}

/// The deterministic run loop. At equal timestamps faults go first, then
/// arrivals, then ticks. `arrivals` and `faults` must be sorted by time.
pub fn run_virtual(
    mesh: &Mesh,
    scheduler: &mut Scheduler,
    clock: &VirtualClock,
    arrivals: &[Arrival],
    faults: &[TimedFault],
    until: Timestamp,
) -> RunLog {
    let mut log = RunLog::default();
    let (mut ai, mut fi) = (0, 0);
    loop {
        let next = [
            faults.get(fi).map(|f| f.at),
            arrivals.get(ai).map(|a| a.at),
            scheduler.next_due(),
        ]
        .into_iter()
        .flatten()
        .min();
        let Some(t) = next.filter(|&t| t <= until) else {
            break;
        };
        clock.advance_to(t);
        while let Some(f) = faults.get(fi).filter(|f| f.at == t) {
            log.faults.push(apply_fault(mesh, f, t));
            fi += 1;
        }
        while let Some(a) = arrivals.get(ai).filter(|a| a.at == t) {
            log.requests.entries.push(serve(mesh, a, t));
            ai += 1;
        }
        if scheduler.next_due() == Some(t) {
            log.ticks.extend(scheduler.run_due(t));
        }
    }
    clock.advance_to(until);
    log
}

/// Replays a profile against the mesh on the virtual clock, ticking the
/// scheduler in between.
pub fn drive(
    profile: &LoadProfile,
    mesh: &Mesh,
    scheduler: &mut Scheduler,
    clock: &VirtualClock,
    duration_s: f64,
    seed: u64,
) -> RunLog {
    let start = clock.now();
    let arrivals = arrival_schedule(profile, start, duration_s, seed, true);
    let until = start.plus((duration_s * 1000.0).round() as u64);
    run_virtual(mesh, scheduler, clock, &arrivals, &[], until)
}

/// Real-time counterpart of [`run_virtual`] without ticks: sleeps until each
/// fault or arrival is due. Tick threads run separately.
pub fn drive_live(
    mesh: &Mesh,
    clock: &dyn Clock,
    arrivals: &[Arrival],
    faults: &[TimedFault],
    until: Timestamp,
) -> (RequestLog, Vec<FaultRecord>) {
    let mut requests = RequestLog::default();
    let mut records = Vec::new();
    let (mut ai, mut fi) = (0, 0);
    loop {
        let fault_next = faults.get(fi).map(|f| f.at);
        let arrival_next = arrivals.get(ai).map(|a| a.at);
        let Some(t) = [fault_next, arrival_next]
            .into_iter()
            .flatten()
            .min()
            .filter(|&t| t <= until)
        else {
            break;
        };
        let now = clock.now();
        if now < t {
            std::thread::sleep(Duration::from_millis(t.as_millis() - now.as_millis()));
        }
        let now = clock.now().max(t);
        if fault_next == Some(t) {
            records.push(apply_fault(mesh, &faults[fi], now));
            fi += 1;
        } else {
            requests.entries.push(serve(mesh, &arrivals[ai], now));
            ai += 1;
        }
    }
    while clock.now() < until {
        std::thread::sleep(Duration::from_millis(
            (until.as_millis() - clock.now().as_millis()).min(50),
        ));
    }
    (requests, records)
}
