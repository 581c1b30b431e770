//! The unified event record shared by the simulator, replay, the monitors
//! and trace analysis, and its CSV form `t,kind,link,ldns_id,client_id,bytes`.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::{ClientId, Error, LdnsId, LinkId, Micros, Result};

pub const TRACE_HEADER: &str = "t,kind,link,ldns_id,client_id,bytes";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RecordKind {
    /// An LDNS cache miss reached the authoritative server; `link` is the
    /// decision.
    DnsRequest,
    /// A client obtained an answer, fresh or from its LDNS cache.
    DnsResponse,
    /// A transfer's first byte is on its way; `bytes` is the transfer size.
    FlowStart,
    /// Bytes delivered since the previous record of the same flow.
    Bytes,
    /// A transfer completed; `bytes` is the transfer size.
    FlowEnd,
}

impl RecordKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RecordKind::DnsRequest => "dns_request",
            RecordKind::DnsResponse => "dns_response",
            RecordKind::FlowStart => "flow_start",
            RecordKind::Bytes => "bytes",
            RecordKind::FlowEnd => "flow_end",
        }
    }
}

impl fmt::Display for RecordKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RecordKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "dns_request" => RecordKind::DnsRequest,
            "dns_response" => RecordKind::DnsResponse,
            "flow_start" => RecordKind::FlowStart,
            "bytes" => RecordKind::Bytes,
            "flow_end" => RecordKind::FlowEnd,
            other => return Err(format!("unknown record kind `{other}`")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TraceRecord {
    pub t: Micros,
    pub kind: RecordKind,
    pub link: Option<LinkId>,
    pub ldns_id: Option<LdnsId>,
    pub client_id: Option<ClientId>,
    pub bytes: u64,
}

impl TraceRecord {
    pub fn new(t: Micros, kind: RecordKind, link: LinkId, ldns: LdnsId, client: ClientId, bytes: u64) -> Self {
        TraceRecord {
            t,
            kind,
            link: Some(link),
            ldns_id: Some(ldns),
            client_id: Some(client),
            bytes,
        }
    }

    pub fn bytes(t: Micros, link: LinkId, ldns: LdnsId, client: ClientId, bytes: u64) -> Self {
        Self::new(t, RecordKind::Bytes, link, ldns, client, bytes)
    }

    pub fn write_csv_row<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        fn opt<T: fmt::Display>(v: Option<T>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        writeln!(
            w,
            "{},{},{},{},{},{}",
            self.t,
            self.kind,
            opt(self.link),
            opt(self.ldns_id),
            opt(self.client_id),
            self.bytes
        )
    }

    fn parse_row(line: &str, lineno: usize) -> Result<Self> {
        let err = |reason: String| Error::TraceFormat { line: lineno, reason };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(err(format!("expected 6 fields, got {}", fields.len())));
        }
        fn opt<T: FromStr>(s: &str) -> std::result::Result<Option<T>, ()> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| ())
            }
        }
        Ok(TraceRecord {
            t: Micros::parse_secs(fields[0]).ok_or_else(|| err(format!("bad time `{}`", fields[0])))?,
            kind: fields[1].parse().map_err(err)?,
            link: opt(fields[2]).map_err(|_| err(format!("bad link `{}`", fields[2])))?,
            ldns_id: opt(fields[3]).map_err(|_| err(format!("bad ldns_id `{}`", fields[3])))?,
            client_id: opt(fields[4]).map_err(|_| err(format!("bad client_id `{}`", fields[4])))?,
            bytes: fields[5].parse().map_err(|_| err(format!("bad bytes `{}`", fields[5])))?,
        })
    }
}

pub fn write_trace<W: Write>(records: &[TraceRecord], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for r in records {
        r.write_csv_row(&mut w)?;
    }
    w.flush()
}

pub fn trace_to_string(records: &[TraceRecord]) -> String {
    let mut buf = Vec::new();
    write_trace(records, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii")
}

/// Reads a trace and checks that timestamps never decrease.
pub fn read_trace<R: BufRead>(r: R) -> Result<Vec<TraceRecord>> {
    let mut out = Vec::new();
    let mut last = Micros::ZERO;
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if i == 0 {
            if line != TRACE_HEADER {
                return Err(Error::TraceFormat {
                    line: 1,
                    reason: format!("expected header `{TRACE_HEADER}`, got `{line}`"),
                });
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let rec = TraceRecord::parse_row(line, i + 1)?;
        if rec.t < last {
            return Err(Error::TraceFormat {
                line: i + 1,
                reason: format!("time goes backwards ({} after {})", rec.t, last),
            });
        }
        last = rec.t;
        out.push(rec);
    }
    Ok(out)
}
