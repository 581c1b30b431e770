//! Discrete-event simulation of closed-loop clients behind caching LDNS
//! servers.
//!
//! Each client repeatedly resolves the server name through its LDNS,
//! downloads one file and sleeps. A resolution is answered from the LDNS
//! cache while the cached answer is younger than the LDNS's effective TTL;
//! otherwise the LDNS asks the balancer. The download starts `δ` after the
//! answer and drains at a constant rate (fluid model). Byte records are
//! emitted for every active flow on a 100 ms grid, plus one residual record
//! when the flow completes.
//!
//! Every random draw comes from a stream keyed on the scenario seed and the
//! entity it belongs to, so the generated workload is the same whatever the
//! balancing policy: runs that differ only in policy or TTL see identical
//! client behaviour.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::balancer::{BalancerDecision, LdnsTtl, TtlPolicy};
use crate::model::{stream_rng, stream_seed, ClientSession, LdnsProfile};
use crate::monitor::{error_series_until, ErrorSeries, DEFAULT_SMALL_WINDOW};
use crate::sim::assign::LinkAssigner;
use crate::sim::scenario::{HiddenClients, Scenario};
use crate::sim::trace::{RecordKind, TraceRecord};
use crate::{ClientId, LdnsId, LinkId, Micros, Result};

/// The LDNS servers and clients of a scenario.
#[derive(Debug, Clone)]
pub struct Population {
    pub ldns: Vec<LdnsProfile>,
    pub ttl: Vec<LdnsTtl>,
    pub clients: Vec<ClientSession>,
}

fn log_uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi <= lo {
        lo
    } else {
        rng.random_range(lo.ln()..hi.ln()).exp()
    }
}

impl Population {
    pub fn generate(sc: &Scenario) -> Result<Population> {
        sc.validate()?;
        let policy = TtlPolicy::new(
            sc.nominal_ttl,
            sc.violator_fraction,
            sc.violator_ttl,
            sc.violation_reading,
            stream_seed(sc.seed, "ttl", 0),
        )?;
        let mut counts = stream_rng(sc.seed, "hidden-clients", 0);
        let mut ldns = Vec::with_capacity(sc.ldns_count as usize);
        let mut ttl = Vec::with_capacity(sc.ldns_count as usize);
        let mut clients = Vec::new();
        for id in 0..sc.ldns_count {
            let n = match sc.hidden_clients {
                HiddenClients::Uniform { min, max } => counts.random_range(min..=max),
                HiddenClients::Fixed(n) => n,
                HiddenClients::Pareto { shape, min, max } => {
                    let u: f64 = 1.0 - counts.random::<f64>();
                    let x = min as f64 * u.powf(-1.0 / shape);
                    (x.floor() as u32).clamp(min, max)
                }
            };
            let t = policy.classify(id.into());
            let client_ids: Vec<ClientId> = (0..n).map(|k| clients.len() as ClientId + k).collect();
            for &c in &client_ids {
                let mut path = stream_rng(sc.seed, "client-path", u64::from(c));
                clients.push(ClientSession {
                    id: c,
                    ldns_id: id,
                    size_dist: sc.size,
                    sleep_dist: sc.sleep,
                    path_rtt: log_uniform(&mut path, sc.path_rtt),
                    path_rate: log_uniform(&mut path, sc.path_rate),
                });
            }
            ldns.push(LdnsProfile {
                id,
                honors_ttl: !t.violator,
                caching: sc.caching,
                effective_ttl: f64::from(t.effective),
                client_ids,
            });
            ttl.push(t);
        }
        Ok(Population { ldns, ttl, clients })
    }
}

/// One transfer.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub flow_id: usize,
    pub client_id: ClientId,
    pub ldns_id: LdnsId,
    pub link: LinkId,
    pub size: u64,
    pub sent: u64,
    /// Rate in bits per second.
    pub rate: f64,
    pub dns_decision_t: Micros,
    pub start_t: Micros,
    pub end_t: Micros,
}

impl FlowState {
    pub fn size_remaining(&self) -> u64 {
        self.size - self.sent
    }

    /// Bytes delivered by `t` under the fluid model.
    fn delivered_by(&self, t: Micros) -> u64 {
        if t <= self.start_t {
            return 0;
        }
        if t >= self.end_t {
            return self.size;
        }
        let elapsed = u128::from((t - self.start_t).0);
        let dur = u128::from((self.end_t - self.start_t).0);
        (u128::from(self.size) * elapsed / dur) as u64
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSummary {
    pub dns_requests: u64,
    pub flows: u64,
    pub bytes_per_link: Vec<u64>,
    pub median_epsilon: Option<f64>,
    /// Total bytes divided by DNS requests.
    pub bytes_per_dns_request: f64,
    /// Flows started per client per second of the run.
    pub realized_request_rate: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<TraceRecord>,
    pub decisions: Vec<BalancerDecision>,
    pub errors: ErrorSeries,
    pub summary: RunSummary,
    pub population: Population,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    // variant order breaks ties at equal times
    Tick,
    End(usize),
    Start(usize),
    Wake(ClientId),
}

struct Engine<'a> {
    sc: &'a Scenario,
    pop: &'a Population,
    assigner: LinkAssigner,
    queue: BinaryHeap<Reverse<(Micros, Event, u64)>>,
    seq: u64,
    records: Vec<TraceRecord>,
    flows: Vec<FlowState>,
    active: Vec<usize>,
    outstanding: usize,
    cache: Vec<Option<(LinkId, Micros)>>,
    rngs: Vec<ChaCha8Rng>,
    end: Micros,
}

impl Engine<'_> {
    fn schedule(&mut self, t: Micros, ev: Event) {
        self.seq += 1;
        self.queue.push(Reverse((t, ev, self.seq)));
    }

    fn emit_bytes(&mut self, t: Micros, f: usize, upto: Micros) -> Result<()> {
        let flow = &mut self.flows[f];
        let delivered = flow.delivered_by(upto);
        let delta = delivered - flow.sent;
        if delta == 0 {
            return Ok(());
        }
        flow.sent = delivered;
        let rec = TraceRecord::bytes(t, flow.link, flow.ldns_id, flow.client_id, delta);
        self.records.push(rec);
        self.assigner.observe(t, rec.link.unwrap(), delta)
    }

    fn run(&mut self) -> Result<()> {
        for c in &self.pop.clients {
            let first = self.rngs[c.id as usize].random::<f64>() * c.sleep_dist.mean();
            self.schedule(Micros::from_secs_f64(first), Event::Wake(c.id));
        }
        self.schedule(Micros::ZERO, Event::Tick);
        while let Some(Reverse((t, ev, _))) = self.queue.pop() {
            match ev {
                Event::Tick => {
                    for i in 0..self.active.len() {
                        let f = self.active[i];
                        self.emit_bytes(t, f, t)?;
                    }
                    if t < self.end || self.outstanding > 0 {
                        self.schedule(t + DEFAULT_SMALL_WINDOW, Event::Tick);
                    }
                }
                Event::Wake(c) => self.wake(t, c),
                Event::Start(f) => self.start(t, f),
                Event::End(f) => self.finish(t, f)?,
            }
        }
        Ok(())
    }

    fn wake(&mut self, t: Micros, c: ClientId) {
        if t >= self.end {
            return;
        }
        let client = &self.pop.clients[c as usize];
        let ldns = client.ldns_id;
        let ttl = self.pop.ttl[ldns as usize];
        let cached = match self.cache[ldns as usize] {
            Some((link, at)) if self.sc.caching && t < at + Micros::from_secs(u64::from(ttl.effective)) => Some((link, at)),
            _ => None,
        };
        let (link, decided_at) = match cached {
            Some(hit) => hit,
            None => {
                let link = self.assigner.decide(t, ldns, ttl.advertised);
                self.records
                    .push(TraceRecord::new(t, RecordKind::DnsRequest, link, ldns, c, 0));
                self.cache[ldns as usize] = Some((link, t));
                (link, t)
            }
        };
        self.records
            .push(TraceRecord::new(t, RecordKind::DnsResponse, link, ldns, c, 0));
        let rng = &mut self.rngs[c as usize];
        let size = client.size_dist.sample(rng);
        let start = t + Micros::from_secs_f64(self.sc.delay.delta(client.path_rtt));
        let rate = match self.sc.flow_rate_cap {
            Some(cap) => client.path_rate.min(cap),
            None => client.path_rate,
        };
        let dur = Micros(((size as f64 * 8.0 / rate) * Micros::PER_SEC as f64).ceil().max(1.0) as u64);
        self.flows.push(FlowState {
            flow_id: self.flows.len(),
            client_id: c,
            ldns_id: ldns,
            link,
            size,
            sent: 0,
            rate,
            dns_decision_t: decided_at,
            start_t: start,
            end_t: start + dur,
        });
        self.outstanding += 1;
        self.schedule(start, Event::Start(self.flows.len() - 1));
    }

    fn start(&mut self, t: Micros, f: usize) {
        let flow = &self.flows[f];
        self.records.push(TraceRecord::new(
            t,
            RecordKind::FlowStart,
            flow.link,
            flow.ldns_id,
            flow.client_id,
            flow.size,
        ));
        let end = flow.end_t;
        self.active.push(f);
        self.schedule(end, Event::End(f));
    }

    fn finish(&mut self, t: Micros, f: usize) -> Result<()> {
        self.emit_bytes(t, f, t)?;
        let flow = &self.flows[f];
        self.records.push(TraceRecord::new(
            t,
            RecordKind::FlowEnd,
            flow.link,
            flow.ldns_id,
            flow.client_id,
            flow.size,
        ));
        let c = flow.client_id;
        self.active.retain(|&x| x != f);
        self.outstanding -= 1;
        let client = &self.pop.clients[c as usize];
        let sleep = client.sleep_dist.sample(&mut self.rngs[c as usize]);
        self.schedule(t + Micros::from_secs_f64(sleep), Event::Wake(c));
        Ok(())
    }
}

/// Runs a scenario to completion. Clients stop issuing requests at the end
/// of the scenario; transfers already under way run to completion.
pub fn run(sc: &Scenario) -> Result<RunOutput> {
    let pop = Population::generate(sc)?;
    let assigner = LinkAssigner::new(sc.policy, sc.link_count, sc.window_micros(), stream_seed(sc.seed, "balancer", 0))?;
    let mut engine = Engine {
        sc,
        pop: &pop,
        assigner,
        queue: BinaryHeap::new(),
        seq: 0,
        records: Vec::new(),
        flows: Vec::new(),
        active: Vec::new(),
        outstanding: 0,
        cache: vec![None; pop.ldns.len()],
        rngs: pop
            .clients
            .iter()
            .map(|c| stream_rng(sc.seed, "client", u64::from(c.id)))
            .collect(),
        end: sc.duration_micros(),
    };
    engine.run()?;
    let Engine {
        records,
        flows,
        assigner,
        end,
        ..
    } = engine;
    let errors = error_series_until(&records, sc.timescale_micros(), sc.step_micros(), end);
    let mut bytes_per_link = vec![0u64; sc.link_count];
    for r in records.iter().filter(|r| r.kind == RecordKind::Bytes) {
        bytes_per_link[r.link.unwrap()] += r.bytes;
    }
    let dns_requests = records.iter().filter(|r| r.kind == RecordKind::DnsRequest).count() as u64;
    let total: u64 = bytes_per_link.iter().sum();
    let summary = RunSummary {
        dns_requests,
        flows: flows.len() as u64,
        bytes_per_link,
        median_epsilon: errors.median(),
        bytes_per_dns_request: if dns_requests > 0 { total as f64 / dns_requests as f64 } else { 0.0 },
        realized_request_rate: flows.len() as f64 / (pop.clients.len() as f64 * sc.duration),
    };
    Ok(RunOutput {
        records,
        decisions: assigner.into_decisions(),
        errors,
        summary,
        population: pop,
    })
}
