//! Synthetic open-loop traffic: constant-bit-rate flows and aggregates of
//! Pareto renewal sources.
//!
//! Generators build an attributed log (every flow or source is its own LDNS
//! and client) and hand it to [`replay`] for link assignment, so the same
//! log can be re-balanced with any policy and window.

use rand::Rng;
use rand_distr::{Distribution, Exp, Pareto};

use crate::balancer::Policy;
use crate::error::invalid;
use crate::model::stream_rng;
use crate::monitor::DEFAULT_SMALL_WINDOW;
use crate::sim::replay::{replay, ReplayConfig};
use crate::sim::trace::{RecordKind, TraceRecord};
use crate::{Micros, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum ArrivalSchedule {
    Poisson { rate: f64 },
    Periodic { interval: f64 },
    /// Arrival instants in seconds.
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CbrConfig {
    pub flows: usize,
    pub flow_size: u64,
    /// Bits per second.
    pub flow_rate: f64,
    pub packet_size: u64,
    pub arrivals: ArrivalSchedule,
    pub link_count: usize,
    pub seed: u64,
}

impl Default for CbrConfig {
    fn default() -> Self {
        CbrConfig {
            flows: 600,
            flow_size: 250_000,
            flow_rate: 100_000.0,
            packet_size: 125,
            arrivals: ArrivalSchedule::Poisson { rate: 1.0 },
            link_count: 2,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParetoConfig {
    pub sources: usize,
    pub shape: f64,
    /// Mean inter-packet gap in seconds.
    pub mean_gap: f64,
    pub packet_size: u64,
    pub duration: f64,
    /// Mean of the exponential interval between a source's re-resolutions.
    pub resolve_interval: f64,
    pub link_count: usize,
    pub seed: u64,
}

impl Default for ParetoConfig {
    fn default() -> Self {
        ParetoConfig {
            sources: 20,
            shape: 1.5,
            mean_gap: 0.05,
            packet_size: 1000,
            duration: 600.0,
            resolve_interval: 5.0,
            link_count: 2,
            seed: 1,
        }
    }
}

fn rank(kind: RecordKind) -> u8 {
    match kind {
        RecordKind::Bytes => 0,
        RecordKind::FlowEnd => 1,
        RecordKind::DnsRequest => 2,
        RecordKind::DnsResponse => 3,
        RecordKind::FlowStart => 4,
    }
}

fn finish(mut recs: Vec<TraceRecord>) -> Vec<TraceRecord> {
    // stable: equal keys keep generation order
    recs.sort_by_key(|r| (r.t, rank(r.kind)));
    recs
}

fn grid_end(t: Micros) -> Micros {
    let w = DEFAULT_SMALL_WINDOW.0;
    Micros(t.0.div_ceil(w) * w)
}

fn assign(recs: Vec<TraceRecord>, links: usize, seed: u64) -> Result<Vec<TraceRecord>> {
    let mut cfg = ReplayConfig::new(Policy::RoundRobin, Micros::from_secs(1), Micros::from_secs(20));
    cfg.link_count = links;
    cfg.seed = seed;
    Ok(replay(&recs, &cfg)?.records)
}

fn arrival_times(cfg: &CbrConfig) -> Result<Vec<f64>> {
    match &cfg.arrivals {
        ArrivalSchedule::Poisson { rate } => {
            if !(*rate > 0.0 && rate.is_finite()) {
                return Err(invalid("arrival rate", format!("must be positive, got {rate}")));
            }
            let exp = Exp::new(*rate).expect("checked");
            let mut rng = stream_rng(cfg.seed, "cbr-arrivals", 0);
            let mut t = 0.0;
            Ok((0..cfg.flows)
                .map(|_| {
                    t += exp.sample(&mut rng);
                    t
                })
                .collect())
        }
        ArrivalSchedule::Periodic { interval } => {
            if !(*interval > 0.0 && interval.is_finite()) {
                return Err(invalid("arrival interval", format!("must be positive, got {interval}")));
            }
            Ok((0..cfg.flows).map(|i| i as f64 * interval).collect())
        }
        ArrivalSchedule::Explicit(ts) => {
            if ts.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
                return Err(invalid("arrivals", "instants must be finite and non-negative"));
            }
            Ok(ts.clone())
        }
    }
}

/// Constant-rate flows: packets of `packet_size` bytes spaced evenly at
/// `flow_rate`, the first one packet interval after arrival. Bytes are
/// reported on the 100 ms grid. The log is assigned round-robin.
pub fn synthetic_cbr(cfg: &CbrConfig) -> Result<Vec<TraceRecord>> {
    if cfg.flow_size == 0 {
        return Err(invalid("flow_size", "must be positive"));
    }
    if cfg.packet_size == 0 {
        return Err(invalid("packet_size", "must be positive"));
    }
    if !(cfg.flow_rate > 0.0 && cfg.flow_rate.is_finite()) {
        return Err(invalid("flow_rate", format!("must be positive, got {}", cfg.flow_rate)));
    }
    let gap = cfg.packet_size as f64 * 8.0 / cfg.flow_rate;
    let packets = cfg.flow_size.div_ceil(cfg.packet_size);
    let mut recs = Vec::new();
    for (f, a) in arrival_times(cfg)?.into_iter().enumerate() {
        let id = f as u32;
        let start = Micros::from_secs_f64(a);
        recs.push(TraceRecord::new(start, RecordKind::DnsRequest, 0, id, id, 0));
        recs.push(TraceRecord::new(start, RecordKind::DnsResponse, 0, id, id, 0));
        recs.push(TraceRecord::new(start, RecordKind::FlowStart, 0, id, id, cfg.flow_size));
        let mut bin = None;
        let mut acc = 0u64;
        for k in 1..=packets {
            let t = Micros::from_secs_f64(a + k as f64 * gap);
            let size = if k == packets { cfg.flow_size - (packets - 1) * cfg.packet_size } else { cfg.packet_size };
            let g = grid_end(t);
            if bin.is_some_and(|b| b != g) {
                recs.push(TraceRecord::bytes(bin.unwrap(), 0, id, id, acc));
                acc = 0;
            }
            bin = Some(g);
            acc += size;
        }
        let last = bin.expect("at least one packet");
        recs.push(TraceRecord::bytes(last, 0, id, id, acc));
        recs.push(TraceRecord::new(last, RecordKind::FlowEnd, 0, id, id, cfg.flow_size));
    }
    assign(finish(recs), cfg.link_count, cfg.seed)
}

/// Pareto inter-packet gaps with the given shape and mean.
pub fn pareto_gaps(shape: f64, mean: f64) -> Result<Pareto<f64>> {
    if !(shape > 1.0 && shape.is_finite()) {
        return Err(invalid("shape", format!("must exceed 1 for a finite mean, got {shape}")));
    }
    if !(mean > 0.0 && mean.is_finite()) {
        return Err(invalid("mean_gap", format!("must be positive, got {mean}")));
    }
    Ok(Pareto::new(mean * (shape - 1.0) / shape, shape).expect("checked"))
}

/// Long-lived sources emitting packets with i.i.d. Pareto gaps. Each source
/// resolves at time zero and again after exponential intervals; its bytes
/// follow its latest resolution. The log is assigned round-robin.
pub fn synthetic_pareto(cfg: &ParetoConfig) -> Result<Vec<TraceRecord>> {
    let gaps = pareto_gaps(cfg.shape, cfg.mean_gap)?;
    if cfg.sources == 0 {
        return Err(invalid("sources", "must be at least 1"));
    }
    if !(cfg.duration > 0.0 && cfg.duration.is_finite()) {
        return Err(invalid("duration", "must be positive"));
    }
    if !(cfg.resolve_interval > 0.0 && cfg.resolve_interval.is_finite()) {
        return Err(invalid("resolve_interval", "must be positive"));
    }
    let resolve = Exp::new(1.0 / cfg.resolve_interval).expect("checked");
    let end = Micros::from_secs_f64(cfg.duration);
    let mut recs = Vec::new();
    for s in 0..cfg.sources {
        let id = s as u32;
        let mut rng = stream_rng(cfg.seed, "pareto-source", s as u64);
        let mut dns = stream_rng(cfg.seed, "pareto-resolve", s as u64);
        recs.push(TraceRecord::new(Micros::ZERO, RecordKind::DnsRequest, 0, id, id, 0));
        let mut t = resolve.sample(&mut dns);
        while t < cfg.duration {
            recs.push(TraceRecord::new(Micros::from_secs_f64(t), RecordKind::DnsRequest, 0, id, id, 0));
            t += resolve.sample(&mut dns);
        }
        // random phase so sources are not synchronised at t=0
        let mut t = rng.random::<f64>() * cfg.mean_gap;
        let mut bin = None;
        let mut acc = 0u64;
        loop {
            let at = Micros::from_secs_f64(t);
            if at >= end {
                break;
            }
            let g = grid_end(at);
            if bin.is_some_and(|b| b != g) {
                recs.push(TraceRecord { client_id: None, ..TraceRecord::bytes(bin.unwrap(), 0, id, id, acc) });
                acc = 0;
            }
            bin = Some(g);
            acc += cfg.packet_size;
            t += gaps.sample(&mut rng);
        }
        if let Some(b) = bin {
            recs.push(TraceRecord { client_id: None, ..TraceRecord::bytes(b, 0, id, id, acc) });
        }
    }
    assign(finish(recs), cfg.link_count, cfg.seed)
}
