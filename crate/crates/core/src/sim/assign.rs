//! Online link assignment shared by the simulator and trace replay.
//!
//! Both feed byte records to the monitors in log order and call
//! [`LinkAssigner::decide`] at DNS request instants, so a replay of a log
//! with the policy and window that produced it reproduces every decision.

use crate::balancer::{Balancer, BalancerDecision, LdnsKey, Policy};
use crate::monitor::{Direction, DirectionPolicy, MonitorSet};
use crate::{LdnsId, LinkId, Micros, Result};

#[derive(Debug, Clone)]
pub struct LinkAssigner {
    balancer: Balancer,
    monitors: MonitorSet,
    decisions: Vec<BalancerDecision>,
    keep_decisions: bool,
}

impl LinkAssigner {
    pub fn new(policy: Policy, link_count: usize, window: Micros, seed: u64) -> Result<Self> {
        Ok(LinkAssigner {
            balancer: Balancer::new(policy, link_count, seed)?,
            monitors: MonitorSet::new(link_count, window, DirectionPolicy::Both)?,
            decisions: Vec::new(),
            keep_decisions: true,
        })
    }

    /// Stops retaining decisions (large sweeps only need the trace).
    pub fn discard_decisions(mut self) -> Self {
        self.keep_decisions = false;
        self
    }

    pub fn link_count(&self) -> usize {
        self.monitors.link_count()
    }

    /// Simulated traffic is server-to-client downloads.
    pub fn observe(&mut self, t: Micros, link: LinkId, bytes: u64) -> Result<()> {
        self.monitors.record(link, t, bytes, Direction::Egress)
    }

    pub fn decide(&mut self, t: Micros, ldns: LdnsId, advertised_ttl: u32) -> LinkId {
        let d = self.balancer.decide(t, LdnsKey::Id(ldns), advertised_ttl, &self.monitors);
        let link = d.chosen_link;
        if self.keep_decisions {
            self.decisions.push(d);
        }
        link
    }

    pub fn decisions(&self) -> &[BalancerDecision] {
        &self.decisions
    }

    pub fn into_decisions(self) -> Vec<BalancerDecision> {
        self.decisions
    }
}
