//! Synthetic addressing for simulated populations, used to turn a simulator
//! trace into the DNS and flow logs a real site would collect, with the
//! true LDNS of every client request kept aside.
//!
//! LDNS `i` sits in its own /24 (`10.a.b.0/24` with `a.b` = `i`), at `.1`,
//! and its clients take `.2` onward. Each /24 maps to its own AS, except
//! that with probability `shared_as` an LDNS joins the AS of the previous
//! one, which makes both ambiguous. With probability `unmapped` a client
//! gets an address outside every prefix.

use std::net::{IpAddr, Ipv4Addr};

use rand::Rng;

use crate::analysis::associate::{DnsLogEntry, FlowLogEntry};
use crate::analysis::prefix::{Asn, PrefixTable};
use crate::model::stream_rng;
use crate::sim::trace::{RecordKind, TraceRecord};
use crate::sim::Population;
use crate::{LdnsId, Result};

pub const FIRST_ASN: Asn = 64_512;

#[derive(Debug, Clone)]
pub struct AddressPlan {
    pub table: PrefixTable,
    pub ldns_addr: Vec<IpAddr>,
    pub ldns_asn: Vec<Asn>,
    pub client_addr: Vec<IpAddr>,
}

impl AddressPlan {
    pub fn generate(pop: &Population, shared_as: f64, unmapped: f64, seed: u64) -> Result<Self> {
        for (name, p) in [("shared_as", shared_as), ("unmapped", unmapped)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(crate::error::invalid(name, format!("must lie in [0, 1], got {p}")));
            }
        }
        if pop.ldns.len() > 1 << 16 {
            return Err(crate::error::invalid("ldns_count", "address plan holds at most 65536 LDNS"));
        }
        let mut rng = stream_rng(seed, "address-plan", 0);
        let mut table = PrefixTable::new();
        let mut ldns_addr = Vec::with_capacity(pop.ldns.len());
        let mut ldns_asn = Vec::with_capacity(pop.ldns.len());
        let mut client_addr = vec![IpAddr::V4(Ipv4Addr::UNSPECIFIED); pop.clients.len()];
        let mut next_asn = FIRST_ASN;
        for l in &pop.ldns {
            let base = 0x0a00_0000u32 | (l.id << 8);
            let asn = match ldns_asn.last() {
                Some(&prev) if rng.random_bool(shared_as) => prev,
                _ => {
                    next_asn += 1;
                    next_asn - 1
                }
            };
            table.insert(IpAddr::V4(base.into()), 24, asn)?;
            ldns_addr.push(IpAddr::V4((base | 1).into()));
            ldns_asn.push(asn);
            for (k, &c) in l.client_ids.iter().enumerate() {
                if k > 250 {
                    return Err(crate::error::invalid("hidden clients", "address plan holds at most 251 clients per LDNS"));
                }
                client_addr[c as usize] = if rng.random_bool(unmapped) {
                    IpAddr::V4(Ipv4Addr::new(192, 0, 2, (c % 256) as u8))
                } else {
                    IpAddr::V4((base | (k as u32 + 2)).into())
                };
            }
        }
        Ok(AddressPlan { table, ldns_addr, ldns_asn, client_addr })
    }

    /// DNS log from the trace's `dns_request` records.
    pub fn dns_log(&self, records: &[TraceRecord], qname: &str) -> Vec<DnsLogEntry> {
        records
            .iter()
            .filter(|r| r.kind == RecordKind::DnsRequest)
            .filter_map(|r| {
                Some(DnsLogEntry {
                    t: r.t,
                    ldns: *self.ldns_addr.get(r.ldns_id? as usize)?,
                    qname: qname.to_string(),
                })
            })
            .collect()
    }

    /// Flow log from the trace's `flow_start` records, with each request's
    /// true LDNS.
    pub fn flow_log(&self, records: &[TraceRecord]) -> (Vec<FlowLogEntry>, Vec<LdnsId>) {
        records
            .iter()
            .filter(|r| r.kind == RecordKind::FlowStart)
            .filter_map(|r| {
                let entry = FlowLogEntry {
                    t: r.t,
                    client: *self.client_addr.get(r.client_id? as usize)?,
                    bytes: r.bytes,
                };
                Some((entry, r.ldns_id?))
            })
            .unzip()
    }
}
