//! Trace replay: re-run link assignment over a recorded workload.
//!
//! Each `dns_request` is re-decided by a fresh balancer that has observed
//! every earlier byte record under the replayed assignment. `dns_response`
//! binds a client to its LDNS's current link, `flow_start` fixes the link of
//! that client's transfer, and byte records follow the transfer's link, or
//! the LDNS's latest decision for traffic not tied to a transfer.

use std::collections::HashMap;

use crate::balancer::{BalancerDecision, Policy};
use crate::monitor::{error_series_until, ErrorSeries};
use crate::sim::assign::LinkAssigner;
use crate::sim::trace::{RecordKind, TraceRecord};
use crate::{ClientId, Error, LdnsId, LinkId, Micros, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayConfig {
    pub policy: Policy,
    pub link_count: usize,
    pub window: Micros,
    pub timescale: Micros,
    pub step: Micros,
    /// Last instant covered by the error series; defaults to the last record.
    pub end: Option<Micros>,
    pub seed: u64,
}

impl ReplayConfig {
    pub fn new(policy: Policy, window: Micros, timescale: Micros) -> Self {
        ReplayConfig {
            policy,
            link_count: 2,
            window,
            timescale,
            step: Micros::from_secs(1),
            end: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReplayOutput {
    pub records: Vec<TraceRecord>,
    pub decisions: Vec<BalancerDecision>,
    pub errors: ErrorSeries,
}

/// Fails when the log has traffic but no attributable DNS requests.
pub fn check_attribution(records: &[TraceRecord]) -> Result<()> {
    let mut requests = 0usize;
    for r in records {
        if r.kind == RecordKind::DnsRequest {
            if r.ldns_id.is_none() {
                return Err(Error::MissingAttribution(format!("dns_request at t={} has no ldns_id", r.t)));
            }
            requests += 1;
        }
    }
    if requests == 0 && records.iter().any(|r| r.kind == RecordKind::Bytes) {
        return Err(Error::MissingAttribution("trace has byte records but no dns_request records".into()));
    }
    Ok(())
}

pub fn replay(records: &[TraceRecord], cfg: &ReplayConfig) -> Result<ReplayOutput> {
    check_attribution(records)?;
    let mut assigner = LinkAssigner::new(cfg.policy, cfg.link_count, cfg.window, cfg.seed)?;
    let mut ldns_link: HashMap<LdnsId, LinkId> = HashMap::new();
    let mut pending: HashMap<ClientId, LinkId> = HashMap::new();
    let mut flow_link: HashMap<ClientId, LinkId> = HashMap::new();
    let mut out = Vec::with_capacity(records.len());

    let unattributed = |r: &TraceRecord| {
        Error::MissingAttribution(format!("{} record at t={} cannot be tied to an LDNS decision", r.kind, r.t))
    };

    for r in records {
        let by_ldns = r.ldns_id.and_then(|l| ldns_link.get(&l).copied());
        let link = match r.kind {
            RecordKind::DnsRequest => {
                let ldns = r.ldns_id.expect("checked");
                let link = assigner.decide(r.t, ldns, 0);
                ldns_link.insert(ldns, link);
                link
            }
            RecordKind::DnsResponse => {
                let link = by_ldns.or(r.link).ok_or_else(|| unattributed(r))?;
                if let Some(c) = r.client_id {
                    pending.insert(c, link);
                }
                link
            }
            RecordKind::FlowStart => {
                let link = r
                    .client_id
                    .and_then(|c| pending.get(&c).copied())
                    .or(by_ldns)
                    .or(r.link)
                    .ok_or_else(|| unattributed(r))?;
                if let Some(c) = r.client_id {
                    flow_link.insert(c, link);
                }
                link
            }
            RecordKind::Bytes => {
                let link = r
                    .client_id
                    .and_then(|c| flow_link.get(&c).copied())
                    .or(by_ldns)
                    .or(r.link)
                    .ok_or_else(|| unattributed(r))?;
                if link >= cfg.link_count {
                    return Err(Error::InvalidParameter {
                        name: "link",
                        reason: format!("record at t={} names link {link} of {}", r.t, cfg.link_count),
                    });
                }
                assigner.observe(r.t, link, r.bytes)?;
                link
            }
            RecordKind::FlowEnd => r
                .client_id
                .and_then(|c| flow_link.remove(&c))
                .or(by_ldns)
                .or(r.link)
                .ok_or_else(|| unattributed(r))?,
        };
        out.push(TraceRecord { link: Some(link), ..*r });
    }

    let end = cfg.end.unwrap_or_else(|| records.last().map_or(Micros::ZERO, |r| r.t));
    let errors = error_series_until(&out, cfg.timescale, cfg.step, end);
    Ok(ReplayOutput {
        records: out,
        decisions: assigner.into_decisions(),
        errors,
    })
}

/// Error series of a measurement-based balancer with window `window`
/// replayed over `records`.
pub fn replay_mb(records: &[TraceRecord], window: Micros, timescale: Micros) -> Result<ErrorSeries> {
    let cfg = ReplayConfig::new(Policy::MeasurementBased, window, timescale);
    Ok(replay(records, &cfg)?.errors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::monitor::{MonitorSet, DirectionPolicy, Direction};

    fn secs(s: f64) -> Micros {
        Micros::from_secs_f64(s)
    }

    #[test]
    fn missing_ldns_is_rejected() {
        let recs = vec![TraceRecord { ldns_id: None, ..TraceRecord::new(secs(1.0), RecordKind::DnsRequest, 0, 0, 0, 0) }];
        assert!(matches!(replay_mb(&recs, secs(1.0), secs(20.0)), Err(Error::MissingAttribution(_))));
        let bytes_only = vec![TraceRecord::bytes(secs(1.0), 0, 0, 0, 10)];
        assert!(matches!(replay_mb(&bytes_only, secs(1.0), secs(20.0)), Err(Error::MissingAttribution(_))));
    }

    #[test]
    fn bytes_follow_latest_ldns_decision() {
        let recs = vec![
            TraceRecord::new(secs(0.0), RecordKind::DnsRequest, 0, 7, 0, 0),
            TraceRecord::bytes(secs(0.5), 0, 7, 0, 100),
            TraceRecord::new(secs(1.0), RecordKind::DnsRequest, 0, 7, 0, 0),
            TraceRecord::bytes(secs(1.5), 0, 7, 0, 100),
        ];
        let cfg = ReplayConfig::new(Policy::RoundRobin, secs(1.0), secs(1.0));
        let out = replay(&recs, &cfg).unwrap();
        let links: Vec<_> = out.records.iter().map(|r| r.link.unwrap()).collect();
        assert_eq!(links, vec![0, 0, 1, 1]);
    }

    #[test]
    fn flows_keep_their_link_across_redecisions() {
        let recs = vec![
            TraceRecord::new(secs(0.0), RecordKind::DnsRequest, 0, 1, 5, 0),
            TraceRecord::new(secs(0.0), RecordKind::DnsResponse, 0, 1, 5, 0),
            TraceRecord::new(secs(0.1), RecordKind::FlowStart, 0, 1, 5, 300),
            TraceRecord::new(secs(0.2), RecordKind::DnsRequest, 0, 1, 6, 0),
            TraceRecord::bytes(secs(0.3), 0, 1, 5, 300),
            TraceRecord::new(secs(0.3), RecordKind::FlowEnd, 0, 1, 5, 300),
        ];
        let cfg = ReplayConfig::new(Policy::RoundRobin, secs(1.0), secs(1.0));
        let out = replay(&recs, &cfg).unwrap();
        let links: Vec<_> = out.records.iter().map(|r| r.link.unwrap()).collect();
        assert_eq!(links, vec![0, 0, 0, 1, 0, 0]);
    }

    // Greedy oracle: at each decision, recompute window loads by brute force
    // over the already reassigned byte records and take the argmin; ties go
    // to the first link at or after a cursor that only moves on ties.
    fn greedy_oracle(recs: &[TraceRecord], window: Micros) -> Vec<LinkId> {
        let mut assigned: Vec<(Micros, LinkId, u64)> = Vec::new();
        let mut ldns_link: HashMap<LdnsId, LinkId> = HashMap::new();
        let mut cursor = 0;
        let mut out = Vec::new();
        for r in recs {
            match r.kind {
                RecordKind::DnsRequest => {
                    let mut mon = MonitorSet::new(2, window, DirectionPolicy::Both).unwrap();
                    for &(t, l, b) in &assigned {
                        mon.record(l, t, b, Direction::Egress).unwrap();
                    }
                    let loads = mon.snapshot(r.t);
                    let min = loads.iter().cloned().fold(f64::INFINITY, f64::min);
                    let chosen = (0..2).map(|k| (cursor + k) % 2).find(|&l| loads[l] == min).unwrap();
                    if loads[0] == loads[1] {
                        cursor = (chosen + 1) % 2;
                    }
                    ldns_link.insert(r.ldns_id.unwrap(), chosen);
                    out.push(chosen);
                }
                RecordKind::Bytes => {
                    let l = ldns_link[&r.ldns_id.unwrap()];
                    assigned.push((r.t, l, r.bytes));
                }
                _ => {}
            }
        }
        out
    }

    proptest::proptest! {
        #[test]
        fn small_window_matches_greedy(events in proptest::collection::vec((0u64..3000, 0u32..4, proptest::bool::ANY, 1u64..5000), 1..100)) {
            let mut evs = events;
            evs.sort_by_key(|e| e.0);
            let mut recs: Vec<TraceRecord> = (0..4).map(|l| TraceRecord::new(Micros::ZERO, RecordKind::DnsRequest, 0, l, 0, 0)).collect();
            for (ms, ldns, is_req, b) in evs {
                let t = Micros::from_millis(ms);
                if is_req {
                    recs.push(TraceRecord::new(t, RecordKind::DnsRequest, 0, ldns, 0, 0));
                } else {
                    recs.push(TraceRecord { client_id: None, ..TraceRecord::bytes(t, 0, ldns, 0, b) });
                }
            }
            let window = Micros::from_millis(100);
            let cfg = ReplayConfig::new(Policy::MeasurementBased, window, Micros::from_secs(1));
            let out = replay(&recs, &cfg).unwrap();
            let got: Vec<LinkId> = out.decisions.iter().map(|d| d.chosen_link).collect();
            proptest::prop_assert_eq!(got, greedy_oracle(&recs, window));
        }
    }
}
