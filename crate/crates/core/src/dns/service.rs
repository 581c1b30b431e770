//! The authoritative responder: zone configuration, request handling and
//! the UDP serving loop.
//!
//! Every in-zone A query is a resolution request from an LDNS, identified by
//! its source IP. The service polls its monitor feed, asks the balancer for
//! a link and answers with that link's address and the TTL the TTL policy
//! assigns to the source. The answer is not cached here; caching is the
//! LDNS's business.

use std::fmt::Write as _;
use std::net::{Ipv4Addr, SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{Receiver, SyncSender, TrySendError};
use std::sync::{mpsc, Mutex};
use std::time::{Duration, Instant};

use crate::balancer::{Balancer, BalancerDecision, LdnsKey, Policy, TtlPolicy, ViolationReading};
use crate::dns::wire::{self, DnsQuery, Rcode, WireError, TYPE_A};
use crate::monitor::{Direction, DirectionPolicy, MonitorSet};
use crate::sim::trace::{RecordKind, TraceRecord};
use crate::{Error, LinkId, Micros, Result};

pub const ZONE_HEADER: &str = "dnsite-zone 1";

/// Zone file: header `dnsite-zone 1`, then `key = value` lines.
///
/// | key                  | value                                      | default       |
/// |----------------------|--------------------------------------------|---------------|
/// | `zone`               | served name                                | required      |
/// | `addresses`          | comma-separated IPv4, one per link         | required      |
/// | `nominal_ttl`        | seconds                                    | `15`          |
/// | `violator_emulation` | `true` \| `false`                          | `false`       |
/// | `violator_fraction`  | `[0,1]`                                    | `0.4`         |
/// | `violator_ttl`       | `MIN MAX` seconds                          | `5 600`       |
/// | `violation_reading`  | `diverse` \| `ignore`                      | `diverse`     |
/// | `policy`             | `rr` \| `mb` \| `random` \| `static:L`      | `rr`          |
/// | `window`             | MB window, seconds                         | `10`          |
/// | `seed`               | unsigned 64-bit                            | `20090901`    |
#[derive(Debug, Clone, PartialEq)]
pub struct ZoneConfig {
    pub zone_name: String,
    pub addresses: Vec<Ipv4Addr>,
    pub nominal_ttl: u32,
    pub violator_emulation: bool,
    pub violator_fraction: f64,
    pub violator_ttl: (u32, u32),
    pub violation_reading: ViolationReading,
    pub policy: Policy,
    pub window: Micros,
    pub seed: u64,
}

impl ZoneConfig {
    pub fn new(zone_name: &str, addresses: Vec<Ipv4Addr>) -> Self {
        ZoneConfig {
            zone_name: zone_name.trim_end_matches('.').to_string(),
            addresses,
            nominal_ttl: 15,
            violator_emulation: false,
            violator_fraction: 0.4,
            violator_ttl: (5, 600),
            violation_reading: ViolationReading::DiverseTtl,
            policy: Policy::RoundRobin,
            window: Micros::from_secs(10),
            seed: crate::sim::scenario::DEFAULT_SEED,
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.zone_name.is_empty() {
            v.push("zone: must not be empty".to_string());
        }
        if self.addresses.len() < 2 {
            v.push(format!("addresses: need at least 2, got {}", self.addresses.len()));
        }
        for (i, a) in self.addresses.iter().enumerate() {
            if self.addresses[..i].contains(a) {
                v.push(format!("addresses: {a} listed twice"));
            }
        }
        if self.nominal_ttl == 0 {
            v.push("nominal_ttl: must be > 0".into());
        }
        if !(0.0..=1.0).contains(&self.violator_fraction) {
            v.push(format!("violator_fraction: must be in [0,1], got {}", self.violator_fraction));
        }
        if self.violator_ttl.0 == 0 || self.violator_ttl.0 > self.violator_ttl.1 {
            v.push(format!("violator_ttl: bad range {} {}", self.violator_ttl.0, self.violator_ttl.1));
        }
        if self.window.0 == 0 || self.window.0 % 100_000 != 0 {
            v.push(format!("window: must be a positive multiple of 0.1 s, got {}", self.window));
        }
        if let Policy::Static(l) = self.policy {
            if l >= self.addresses.len() {
                v.push(format!("policy: static link {l} out of range"));
            }
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Scenario(v))
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.find(|(_, l)| !l.trim().is_empty()) {
            Some((_, l)) if l.trim() == ZONE_HEADER => {}
            _ => return Err(Error::Scenario(vec![format!("expected header `{ZONE_HEADER}`")])),
        }
        let mut zone = None;
        let mut addresses = None;
        let mut cfg = ZoneConfig::new("", Vec::new());
        let mut errors = Vec::new();
        for (n, raw) in lines {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                errors.push(format!("line {n}: expected `key = value`"));
                continue;
            };
            let (k, v) = (k.trim(), v.trim());
            let res: std::result::Result<(), String> = (|| {
                match k {
                    "zone" => zone = Some(v.trim_end_matches('.').to_string()),
                    "addresses" => {
                        addresses = Some(
                            v.split(',')
                                .map(|a| a.trim().parse::<Ipv4Addr>().map_err(|_| format!("bad IPv4 address `{}`", a.trim())))
                                .collect::<std::result::Result<Vec<_>, _>>()?,
                        )
                    }
                    "nominal_ttl" => cfg.nominal_ttl = v.parse().map_err(|_| format!("bad TTL `{v}`"))?,
                    "violator_emulation" => cfg.violator_emulation = v.parse().map_err(|_| format!("expected true|false, got `{v}`"))?,
                    "violator_fraction" => cfg.violator_fraction = v.parse().map_err(|_| format!("bad fraction `{v}`"))?,
                    "violator_ttl" => {
                        let p: Vec<&str> = v.split_whitespace().collect();
                        let bad = || format!("expected `MIN MAX`, got `{v}`");
                        if p.len() != 2 {
                            return Err(bad());
                        }
                        cfg.violator_ttl = (p[0].parse().map_err(|_| bad())?, p[1].parse().map_err(|_| bad())?);
                    }
                    "violation_reading" => cfg.violation_reading = v.parse().map_err(|e: Error| e.to_string())?,
                    "policy" => cfg.policy = v.parse().map_err(|e: Error| e.to_string())?,
                    "window" => cfg.window = Micros::parse_secs(v).ok_or_else(|| format!("bad duration `{v}`"))?,
                    "seed" => cfg.seed = v.parse().map_err(|_| format!("bad seed `{v}`"))?,
                    other => return Err(format!("unknown key `{other}`")),
                }
                Ok(())
            })();
            if let Err(e) = res {
                errors.push(format!("line {n}: {k}: {e}"));
            }
        }
        match zone {
            Some(z) => cfg.zone_name = z,
            None => errors.push("zone: missing".into()),
        }
        match addresses {
            Some(a) => cfg.addresses = a,
            None => errors.push("addresses: missing".into()),
        }
        let missing: Vec<String> = errors.iter().filter(|e| e.ends_with(": missing")).cloned().collect();
        errors.extend(
            cfg.violations()
                .into_iter()
                .filter(|e| !missing.iter().any(|m| e.starts_with(m.trim_end_matches(" missing")))),
        );
        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Scenario(errors))
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{ZONE_HEADER}\n");
        let addrs: Vec<String> = self.addresses.iter().map(|a| a.to_string()).collect();
        writeln!(s, "zone = {}", self.zone_name).unwrap();
        writeln!(s, "addresses = {}", addrs.join(",")).unwrap();
        writeln!(s, "nominal_ttl = {}", self.nominal_ttl).unwrap();
        writeln!(s, "violator_emulation = {}", self.violator_emulation).unwrap();
        writeln!(s, "violator_fraction = {}", self.violator_fraction).unwrap();
        writeln!(s, "violator_ttl = {} {}", self.violator_ttl.0, self.violator_ttl.1).unwrap();
        writeln!(s, "violation_reading = {}", self.violation_reading).unwrap();
        writeln!(s, "policy = {}", self.policy).unwrap();
        writeln!(s, "window = {}", self.window).unwrap();
        writeln!(s, "seed = {}", self.seed).unwrap();
        s
    }
}

/// Source of link byte counts for the measurement-based balancer.
pub trait MonitorFeed: Send {
    /// Records every sample up to `now` into `monitors`.
    fn poll(&mut self, now: Micros, monitors: &mut MonitorSet) -> Result<()>;
}

/// No measurements; loads stay zero.
#[derive(Debug, Default)]
pub struct NullFeed;

impl MonitorFeed for NullFeed {
    fn poll(&mut self, _now: Micros, _monitors: &mut MonitorSet) -> Result<()> {
        Ok(())
    }
}

/// Plays the byte records of a trace against the service clock.
#[derive(Debug, Clone)]
pub struct ReplayFeed {
    samples: Vec<(Micros, LinkId, u64)>,
    next: usize,
}

impl ReplayFeed {
    pub fn new(records: &[TraceRecord]) -> Result<Self> {
        let mut samples = Vec::new();
        for r in records.iter().filter(|r| r.kind == RecordKind::Bytes) {
            let link = r
                .link
                .ok_or_else(|| Error::MissingAttribution(format!("bytes record at t={} has no link", r.t)))?;
            samples.push((r.t, link, r.bytes));
        }
        Ok(ReplayFeed { samples, next: 0 })
    }

    pub fn remaining(&self) -> usize {
        self.samples.len() - self.next
    }
}

impl MonitorFeed for ReplayFeed {
    fn poll(&mut self, now: Micros, monitors: &mut MonitorSet) -> Result<()> {
        while let Some(&(t, link, bytes)) = self.samples.get(self.next) {
            if t > now {
                break;
            }
            if link < monitors.link_count() {
                monitors.record(link, t, bytes, Direction::Ingress)?;
            }
            self.next += 1;
        }
        Ok(())
    }
}

/// Samples pushed from another thread (a packet counter, say).
#[derive(Debug)]
pub struct ChannelFeed {
    rx: Receiver<(Micros, LinkId, u64)>,
}

impl ChannelFeed {
    pub fn new() -> (mpsc::Sender<(Micros, LinkId, u64)>, Self) {
        let (tx, rx) = mpsc::channel();
        (tx, ChannelFeed { rx })
    }
}

impl MonitorFeed for ChannelFeed {
    fn poll(&mut self, _now: Micros, monitors: &mut MonitorSet) -> Result<()> {
        while let Ok((t, link, bytes)) = self.rx.try_recv() {
            if link < monitors.link_count() {
                monitors.record(link, t, bytes, Direction::Ingress)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Default)]
pub struct ServiceStats {
    pub queries_total: AtomicU64,
    pub parse_errors: AtomicU64,
    pub nxdomain: AtomicU64,
    pub refused: AtomicU64,
    pub empty_answers: AtomicU64,
    pub log_dropped: AtomicU64,
    pub decisions: Vec<AtomicU64>,
}

struct State {
    balancer: Balancer,
    ttl: TtlPolicy,
    monitors: MonitorSet,
    feed: Box<dyn MonitorFeed>,
}

pub struct DnsService {
    config: ZoneConfig,
    state: Mutex<State>,
    stats: ServiceStats,
    log: Option<SyncSender<BalancerDecision>>,
}

impl DnsService {
    pub fn new(config: ZoneConfig, feed: Box<dyn MonitorFeed>) -> Result<Self> {
        config.validate()?;
        let k = config.addresses.len();
        let fraction = if config.violator_emulation { config.violator_fraction } else { 0.0 };
        let state = State {
            balancer: Balancer::new(config.policy, k, crate::model::stream_seed(config.seed, "balancer", 0))?,
            ttl: TtlPolicy::new(
                config.nominal_ttl,
                fraction,
                config.violator_ttl,
                config.violation_reading,
                crate::model::stream_seed(config.seed, "ttl", 0),
            )?,
            monitors: MonitorSet::new(k, config.window, DirectionPolicy::Both)?,
            feed,
        };
        Ok(DnsService {
            stats: ServiceStats {
                decisions: (0..k).map(|_| AtomicU64::new(0)).collect(),
                ..ServiceStats::default()
            },
            config,
            state: Mutex::new(state),
            log: None,
        })
    }

    /// Sends every decision to a bounded queue; decisions that do not fit
    /// are dropped and counted.
    pub fn with_decision_log(mut self, capacity: usize) -> (Self, Receiver<BalancerDecision>) {
        let (tx, rx) = mpsc::sync_channel(capacity);
        self.log = Some(tx);
        (self, rx)
    }

    pub fn config(&self) -> &ZoneConfig {
        &self.config
    }

    pub fn stats(&self) -> &ServiceStats {
        &self.stats
    }

    /// Answers one datagram received from `src` at service time `now`.
    /// Returns `None` for datagrams that are dropped.
    pub fn handle_datagram(&self, buf: &[u8], src: SocketAddr, now: Micros) -> Option<Vec<u8>> {
        let mut q = match wire::parse_query(buf) {
            Ok(q) => q,
            Err(WireError::MultipleQuestions { id, rd }) => {
                self.stats.queries_total.fetch_add(1, Ordering::Relaxed);
                self.stats.refused.fetch_add(1, Ordering::Relaxed);
                return Some(wire::build_refused(id, rd));
            }
            Err(e) => {
                self.stats.parse_errors.fetch_add(1, Ordering::Relaxed);
                log::debug!("dropping datagram from {src}: {e}");
                return None;
            }
        };
        q.source = Some(src);
        self.stats.queries_total.fetch_add(1, Ordering::Relaxed);
        Some(self.answer(&q, now))
    }

    fn answer(&self, q: &DnsQuery, now: Micros) -> Vec<u8> {
        if !q.name_matches(&self.config.zone_name) {
            self.stats.nxdomain.fetch_add(1, Ordering::Relaxed);
            return wire::build_empty(q, Rcode::NxDomain);
        }
        if q.qtype != TYPE_A {
            self.stats.empty_answers.fetch_add(1, Ordering::Relaxed);
            return wire::build_empty(q, Rcode::NoError);
        }
        let key = LdnsKey::Addr(q.source.expect("set by caller").ip());
        let decision = {
            let mut st = self.state.lock().unwrap_or_else(|p| p.into_inner());
            let State { balancer, ttl, monitors, feed } = &mut *st;
            if let Err(e) = feed.poll(now, monitors) {
                log::warn!("monitor feed: {e}");
            }
            let advertised = ttl.ttl_for(key).advertised;
            balancer.decide(now, key, advertised, monitors)
        };
        self.stats.decisions[decision.chosen_link].fetch_add(1, Ordering::Relaxed);
        let resp = wire::build_answer(q, self.config.addresses[decision.chosen_link], decision.advertised_ttl);
        if let Some(tx) = &self.log {
            if let Err(TrySendError::Full(_) | TrySendError::Disconnected(_)) = tx.try_send(decision) {
                self.stats.log_dropped.fetch_add(1, Ordering::Relaxed);
            }
        }
        resp
    }

    /// Line-oriented counter dump.
    pub fn stats_text(&self) -> String {
        let s = &self.stats;
        let mut out = String::new();
        let get = |c: &AtomicU64| c.load(Ordering::Relaxed);
        writeln!(out, "queries_total {}", get(&s.queries_total)).unwrap();
        writeln!(out, "parse_errors {}", get(&s.parse_errors)).unwrap();
        writeln!(out, "nxdomain {}", get(&s.nxdomain)).unwrap();
        writeln!(out, "refused {}", get(&s.refused)).unwrap();
        writeln!(out, "empty_answers {}", get(&s.empty_answers)).unwrap();
        for (i, c) in s.decisions.iter().enumerate() {
            writeln!(out, "decisions_link_{i} {}", get(c)).unwrap();
        }
        writeln!(out, "decision_log_dropped {}", get(&s.log_dropped)).unwrap();
        out
    }
}

/// Serves `socket` with `workers` threads until `shutdown` is set. Each
/// worker answers datagrams as they arrive; the service clock starts when
/// this function is called.
pub fn serve(service: &DnsService, socket: &UdpSocket, workers: usize, shutdown: &AtomicBool) -> Result<()> {
    socket.set_read_timeout(Some(Duration::from_millis(100)))?;
    let start = Instant::now();
    std::thread::scope(|s| -> Result<()> {
        let mut handles = Vec::new();
        for _ in 0..workers.max(1) {
            let sock = socket.try_clone()?;
            handles.push(s.spawn(move || worker(service, &sock, start, shutdown)));
        }
        for h in handles {
            h.join().expect("worker panicked");
        }
        Ok(())
    })
}

fn worker(service: &DnsService, socket: &UdpSocket, start: Instant, shutdown: &AtomicBool) {
    let mut buf = [0u8; 1500];
    let mut failures = 0u32;
    while !shutdown.load(Ordering::Relaxed) {
        match socket.recv_from(&mut buf) {
            Ok((n, src)) => {
                failures = 0;
                let now = Micros(start.elapsed().as_micros() as u64);
                if let Some(resp) = service.handle_datagram(&buf[..n], src, now) {
                    if let Err(e) = socket.send_to(&resp, src) {
                        log::warn!("send to {src}: {e}");
                    }
                }
            }
            Err(e) if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {}
            Err(e) => {
                failures += 1;
                let backoff = Duration::from_millis((1u64 << failures.min(10)).min(1000));
                log::warn!("recv: {e}; retrying in {backoff:?}");
                std::thread::sleep(backoff);
            }
        }
    }
}
