//! LDNS/client association through a shared origin AS, and the DNS and
//! flow log formats it consumes.
//!
//! A client request is paired with the most recent DNS request of the only
//! LDNS server in the client's origin AS that has issued a request so far.
//! Requests whose AS has no such server, or several, are counted and
//! skipped.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::net::IpAddr;

use crate::analysis::prefix::{Asn, PrefixTable};
use crate::{Error, Micros, Result};

pub const DNS_LOG_HEADER: &str = "t,ldns_addr,qname";
pub const FLOW_LOG_HEADER: &str = "t,client_addr,bytes";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DnsLogEntry {
    pub t: Micros,
    pub ldns: IpAddr,
    pub qname: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowLogEntry {
    pub t: Micros,
    pub client: IpAddr,
    pub bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AssociatedPair {
    /// Index into the flow log.
    pub request: usize,
    pub ldns: IpAddr,
    pub dns_t: Micros,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssociationResult {
    pub pairs: Vec<AssociatedPair>,
    pub ignored_no_ldns: usize,
    pub ignored_ambiguous: usize,
    pub coverage_fraction: f64,
}

impl AssociationResult {
    pub fn total_requests(&self) -> usize {
        self.pairs.len() + self.ignored_no_ldns + self.ignored_ambiguous
    }
}

/// Both logs must be time-ordered. A DNS request at the same instant as a
/// client request counts as earlier.
pub fn associate(dns: &[DnsLogEntry], flows: &[FlowLogEntry], table: &PrefixTable) -> Result<AssociationResult> {
    if let Some(i) = dns.windows(2).position(|w| w[1].t < w[0].t) {
        return Err(crate::error::invalid("dns log", format!("entry {} goes back in time", i + 1)));
    }
    if let Some(i) = flows.windows(2).position(|w| w[1].t < w[0].t) {
        return Err(crate::error::invalid("flow log", format!("entry {} goes back in time", i + 1)));
    }
    let mut seen: HashMap<Asn, HashMap<IpAddr, Micros>> = HashMap::new();
    let mut res = AssociationResult {
        pairs: Vec::new(),
        ignored_no_ldns: 0,
        ignored_ambiguous: 0,
        coverage_fraction: 0.0,
    };
    let mut d = 0;
    for (i, f) in flows.iter().enumerate() {
        while d < dns.len() && dns[d].t <= f.t {
            if let Some(asn) = table.lookup(dns[d].ldns) {
                seen.entry(asn).or_default().insert(dns[d].ldns, dns[d].t);
            }
            d += 1;
        }
        let candidates = table.lookup(f.client).and_then(|asn| seen.get(&asn));
        match candidates.map(|c| c.len()).unwrap_or(0) {
            0 => res.ignored_no_ldns += 1,
            1 => {
                let (&ldns, &dns_t) = candidates.unwrap().iter().next().unwrap();
                res.pairs.push(AssociatedPair { request: i, ldns, dns_t });
            }
            _ => res.ignored_ambiguous += 1,
        }
    }
    if !flows.is_empty() {
        res.coverage_fraction = res.pairs.len() as f64 / flows.len() as f64;
    }
    Ok(res)
}

fn check_header<R: BufRead>(lines: &mut std::io::Lines<R>, header: &str) -> Result<()> {
    match lines.next().transpose()? {
        Some(l) if l.trim_end() == header => Ok(()),
        _ => Err(Error::TraceFormat { line: 1, reason: format!("expected header `{header}`") }),
    }
}

pub fn read_dns_log<R: BufRead>(r: R) -> Result<Vec<DnsLogEntry>> {
    let mut lines = r.lines();
    check_header(&mut lines, DNS_LOG_HEADER)?;
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |reason: String| Error::TraceFormat { line: i + 2, reason };
        let f: Vec<&str> = line.trim_end().split(',').collect();
        if f.len() != 3 {
            return Err(err(format!("expected 3 fields, got {}", f.len())));
        }
        out.push(DnsLogEntry {
            t: Micros::parse_secs(f[0]).ok_or_else(|| err(format!("bad time `{}`", f[0])))?,
            ldns: f[1].parse().map_err(|_| err(format!("bad address `{}`", f[1])))?,
            qname: f[2].to_string(),
        });
    }
    Ok(out)
}

pub fn read_flow_log<R: BufRead>(r: R) -> Result<Vec<FlowLogEntry>> {
    let mut lines = r.lines();
    check_header(&mut lines, FLOW_LOG_HEADER)?;
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |reason: String| Error::TraceFormat { line: i + 2, reason };
        let f: Vec<&str> = line.trim_end().split(',').collect();
        if f.len() != 3 {
            return Err(err(format!("expected 3 fields, got {}", f.len())));
        }
        out.push(FlowLogEntry {
            t: Micros::parse_secs(f[0]).ok_or_else(|| err(format!("bad time `{}`", f[0])))?,
            client: f[1].parse().map_err(|_| err(format!("bad address `{}`", f[1])))?,
            bytes: f[2].parse().map_err(|_| err(format!("bad byte count `{}`", f[2])))?,
        });
    }
    Ok(out)
}

pub fn write_dns_log<W: Write>(entries: &[DnsLogEntry], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{DNS_LOG_HEADER}")?;
    for e in entries {
        writeln!(w, "{},{},{}", e.t, e.ldns, e.qname)?;
    }
    w.flush()
}

pub fn write_flow_log<W: Write>(entries: &[FlowLogEntry], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{FLOW_LOG_HEADER}")?;
    for e in entries {
        writeln!(w, "{},{},{}", e.t, e.client, e.bytes)?;
    }
    w.flush()
}
