//! Resolution-time link selection.
//!
//! The balancer only reads load snapshots; it never writes to monitors, so
//! measurement and control stay decoupled.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::net::IpAddr;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::invalid;
use crate::model::{stream_rng, LdnsProfile};
use crate::monitor::MonitorSet;
use crate::{LdnsId, LinkId, Micros, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Policy {
    /// Strict rotation over links.
    #[default]
    RoundRobin,
    /// Least loaded link over the sliding window; ties rotate.
    MeasurementBased,
    /// Uniform random link. Test baseline.
    Random,
    /// Always the same link. Test baseline.
    Static(LinkId),
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::RoundRobin => f.write_str("rr"),
            Policy::MeasurementBased => f.write_str("mb"),
            Policy::Random => f.write_str("random"),
            Policy::Static(l) => write!(f, "static:{l}"),
        }
    }
}

impl FromStr for Policy {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "rr" | "round_robin" => Ok(Policy::RoundRobin),
            "mb" | "measurement_based" => Ok(Policy::MeasurementBased),
            "random" => Ok(Policy::Random),
            other => match other.strip_prefix("static:").map(str::parse) {
                Some(Ok(l)) => Ok(Policy::Static(l)),
                _ => Err(invalid("policy", format!("unknown policy `{other}`"))),
            },
        }
    }
}

/// Who asked: a simulated LDNS id or the source address of a live query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LdnsKey {
    Id(LdnsId),
    Addr(IpAddr),
}

impl LdnsKey {
    fn stable_hash(&self) -> u64 {
        match *self {
            LdnsKey::Id(id) => u64::from(id),
            LdnsKey::Addr(IpAddr::V4(a)) => (1 << 40) | u64::from(u32::from(a)),
            LdnsKey::Addr(IpAddr::V6(a)) => {
                let v = u128::from(a);
                (v as u64) ^ ((v >> 64) as u64).rotate_left(17) ^ (2 << 40)
            }
        }
    }
}

impl fmt::Display for LdnsKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LdnsKey::Id(id) => write!(f, "{id}"),
            LdnsKey::Addr(a) => write!(f, "{a}"),
        }
    }
}

impl From<LdnsId> for LdnsKey {
    fn from(id: LdnsId) -> Self {
        LdnsKey::Id(id)
    }
}

impl From<IpAddr> for LdnsKey {
    fn from(a: IpAddr) -> Self {
        LdnsKey::Addr(a)
    }
}

/// One resolution outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct BalancerDecision {
    pub t: Micros,
    pub ldns: LdnsKey,
    pub chosen_link: LinkId,
    pub advertised_ttl: u32,
    /// Per-link load snapshot the decision was based on; empty unless the
    /// policy is measurement-based.
    pub loads: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Balancer {
    policy: Policy,
    link_count: usize,
    rr_cursor: LinkId,
    rng: ChaCha8Rng,
}

impl Balancer {
    pub fn new(policy: Policy, link_count: usize, seed: u64) -> Result<Self> {
        if link_count < 2 {
            return Err(invalid("link_count", format!("need at least 2 links, got {link_count}")));
        }
        if let Policy::Static(l) = policy {
            if l >= link_count {
                return Err(invalid("policy", format!("static link {l} out of range")));
            }
        }
        Ok(Balancer {
            policy,
            link_count,
            rr_cursor: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn policy(&self) -> Policy {
        self.policy
    }

    pub fn link_count(&self) -> usize {
        self.link_count
    }

    pub fn rr_cursor(&self) -> LinkId {
        self.rr_cursor
    }

    pub fn set_rr_cursor(&mut self, cursor: LinkId) {
        self.rr_cursor = cursor % self.link_count;
    }

    pub fn needs_loads(&self) -> bool {
        self.policy == Policy::MeasurementBased
    }

    /// Picks a link given a load snapshot (ignored unless measurement-based).
    pub fn choose(&mut self, loads: &[f64]) -> LinkId {
        let k = self.link_count;
        match self.policy {
            Policy::RoundRobin => {
                let l = self.rr_cursor;
                self.rr_cursor = (l + 1) % k;
                l
            }
            Policy::MeasurementBased => {
                debug_assert_eq!(loads.len(), k);
                let min = loads.iter().cloned().fold(f64::INFINITY, f64::min);
                let tied = loads.iter().filter(|&&x| x == min).count();
                // first minimum at or after the cursor
                let l = (0..k)
                    .map(|i| (self.rr_cursor + i) % k)
                    .find(|&l| loads[l] == min)
                    .unwrap_or(0);
                if tied > 1 {
                    self.rr_cursor = (l + 1) % k;
                }
                l
            }
            Policy::Random => self.rng.random_range(0..k),
            Policy::Static(l) => l,
        }
    }

    /// Takes one snapshot of all monitors at `t` and decides.
    pub fn decide(&mut self, t: Micros, ldns: LdnsKey, advertised_ttl: u32, monitors: &MonitorSet) -> BalancerDecision {
        let loads = if self.needs_loads() {
            monitors.snapshot(t)
        } else {
            Vec::new()
        };
        let chosen_link = self.choose(&loads);
        BalancerDecision {
            t,
            ldns,
            chosen_link,
            advertised_ttl,
            loads,
        }
    }
}

/// How TTL-violating LDNS servers are emulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ViolationReading {
    /// Violators are advertised a per-LDNS TTL drawn from the violator range
    /// and cache for exactly that long.
    #[default]
    DiverseTtl,
    /// Violators are advertised the nominal TTL and ignore it, caching for
    /// their own per-LDNS duration drawn from the violator range.
    IgnoreNominal,
}

impl fmt::Display for ViolationReading {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ViolationReading::DiverseTtl => "diverse",
            ViolationReading::IgnoreNominal => "ignore",
        })
    }
}

impl FromStr for ViolationReading {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "diverse" => Ok(ViolationReading::DiverseTtl),
            "ignore" => Ok(ViolationReading::IgnoreNominal),
            other => Err(invalid("violation_reading", format!("expected diverse|ignore, got `{other}`"))),
        }
    }
}

/// TTL treatment of one LDNS, fixed for the experiment lifetime.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LdnsTtl {
    pub violator: bool,
    /// What the authoritative server puts in its answers.
    pub advertised: u32,
    /// How long the LDNS actually caches.
    pub effective: u32,
}

#[derive(Debug, Clone)]
pub struct TtlPolicy {
    pub nominal: u32,
    pub violator_fraction: f64,
    pub violator_range: (u32, u32),
    pub reading: ViolationReading,
    seed: u64,
    assigned: HashMap<LdnsKey, LdnsTtl>,
}

impl TtlPolicy {
    pub fn new(nominal: u32, violator_fraction: f64, violator_range: (u32, u32), reading: ViolationReading, seed: u64) -> Result<Self> {
        if nominal == 0 {
            return Err(invalid("nominal_ttl", "must be > 0"));
        }
        if !(0.0..=1.0).contains(&violator_fraction) {
            return Err(invalid("violator_fraction", format!("must be in [0,1], got {violator_fraction}")));
        }
        let (lo, hi) = violator_range;
        if lo == 0 || lo > hi {
            return Err(invalid("violator_ttl", format!("bad range [{lo},{hi}]")));
        }
        Ok(TtlPolicy {
            nominal,
            violator_fraction,
            violator_range,
            reading,
            seed,
            assigned: HashMap::new(),
        })
    }

    /// Nominal 15 s, 40% violators with TTLs uniform in [5, 600] s.
    pub fn with_defaults(seed: u64) -> Self {
        Self::new(15, 0.4, (5, 600), ViolationReading::DiverseTtl, seed).expect("defaults are valid")
    }

    fn violator_ttl(&self, key: LdnsKey) -> u32 {
        let (lo, hi) = self.violator_range;
        stream_rng(self.seed, "violator-ttl", key.stable_hash()).random_range(lo..=hi)
    }

    fn treatment(&self, key: LdnsKey, violator: bool) -> LdnsTtl {
        if !violator {
            return LdnsTtl {
                violator,
                advertised: self.nominal,
                effective: self.nominal,
            };
        }
        let own = self.violator_ttl(key);
        match self.reading {
            ViolationReading::DiverseTtl => LdnsTtl {
                violator,
                advertised: own,
                effective: own,
            },
            ViolationReading::IgnoreNominal => LdnsTtl {
                violator,
                advertised: self.nominal,
                effective: own,
            },
        }
    }

    /// Classifies an LDNS from the configured violator fraction. The outcome
    /// depends only on the seed and the key, never on arrival order.
    pub fn classify(&self, key: LdnsKey) -> LdnsTtl {
        let violator = stream_rng(self.seed, "violator", key.stable_hash()).random::<f64>() < self.violator_fraction;
        self.treatment(key, violator)
    }

    /// Pins the treatment of a known LDNS.
    pub fn register(&mut self, key: LdnsKey, honors_ttl: bool) -> LdnsTtl {
        let t = self.treatment(key, !honors_ttl);
        self.assigned.insert(key, t);
        t
    }

    /// The TTL to advertise to `key`; unknown LDNS are classified on first
    /// sight and then remembered.
    pub fn ttl_for(&mut self, key: LdnsKey) -> LdnsTtl {
        if let Some(t) = self.assigned.get(&key) {
            return *t;
        }
        let t = self.classify(key);
        self.assigned.insert(key, t);
        t
    }

    pub fn advertised_ttl_for(&mut self, ldns: &LdnsProfile) -> u32 {
        let key = LdnsKey::Id(ldns.id);
        match self.assigned.get(&key) {
            Some(t) => t.advertised,
            None => self.register(key, ldns.honors_ttl).advertised,
        }
    }
}

/// Header of the decision log CSV for `links` links.
pub fn decision_log_header(links: usize) -> String {
    let mut h = String::from("t_seconds,ldns_id,chosen_link,advertised_ttl");
    for l in 0..links.max(2) {
        let _ = write!(h, ",load{l}_bps");
    }
    h
}

/// One CSV row; load columns are empty for decisions made without loads.
pub fn decision_log_row(d: &BalancerDecision, links: usize) -> String {
    let mut row = format!("{},{},{},{}", d.t, d.ldns, d.chosen_link, d.advertised_ttl);
    for l in 0..links.max(2) {
        match d.loads.get(l) {
            Some(v) => {
                let _ = write!(row, ",{v:.3}");
            }
            None => row.push(','),
        }
    }
    row
}

pub fn decision_log_csv(decisions: &[BalancerDecision], links: usize) -> String {
    let mut out = decision_log_header(links);
    out.push('\n');
    for d in decisions {
        out.push_str(&decision_log_row(d, links));
        out.push('\n');
    }
    out
}
