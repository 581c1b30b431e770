//! The subset of the DNS wire format an authoritative A-record responder
//! needs: query parsing (with name decompression) and response building.

use std::fmt;
use std::net::{Ipv4Addr, SocketAddr};

pub const HEADER_LEN: usize = 12;
pub const MAX_UDP_PAYLOAD: usize = 512;
pub const MAX_NAME_LEN: usize = 255;
pub const MAX_LABEL_LEN: usize = 63;
pub const TYPE_A: u16 = 1;
pub const TYPE_AAAA: u16 = 28;
pub const CLASS_IN: u16 = 1;

const FLAG_QR: u16 = 0x8000;
const FLAG_AA: u16 = 0x0400;
const FLAG_TC: u16 = 0x0200;
const FLAG_RD: u16 = 0x0100;
const FLAG_RA: u16 = 0x0080;
const MAX_POINTERS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Rcode {
    NoError = 0,
    FormErr = 1,
    ServFail = 2,
    NxDomain = 3,
    NotImp = 4,
    Refused = 5,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WireError {
    Truncated { offset: usize },
    NotAQuery,
    Opcode(u8),
    NoQuestion,
    /// More than one question; answered with REFUSED.
    MultipleQuestions { id: u16, rd: bool },
    NameTooLong,
    BadLabel,
    PointerLoop,
}

impl fmt::Display for WireError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WireError::Truncated { offset } => write!(f, "datagram truncated at offset {offset}"),
            WireError::NotAQuery => f.write_str("QR bit set on a query"),
            WireError::Opcode(op) => write!(f, "unsupported opcode {op}"),
            WireError::NoQuestion => f.write_str("no question"),
            WireError::MultipleQuestions { .. } => f.write_str("more than one question"),
            WireError::NameTooLong => f.write_str("name longer than 255 bytes"),
            WireError::BadLabel => f.write_str("label with reserved type bits or unprintable bytes"),
            WireError::PointerLoop => f.write_str("compression pointer loop"),
        }
    }
}

impl std::error::Error for WireError {}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DnsQuery {
    pub id: u16,
    /// Labels joined by dots, without the trailing dot; original case.
    pub qname: String,
    pub qtype: u16,
    pub qclass: u16,
    pub rd: bool,
    pub source: Option<SocketAddr>,
}

impl DnsQuery {
    pub fn new(id: u16, qname: &str, qtype: u16) -> Self {
        DnsQuery {
            id,
            qname: qname.trim_end_matches('.').to_string(),
            qtype,
            qclass: CLASS_IN,
            rd: false,
            source: None,
        }
    }

    pub fn name_matches(&self, zone: &str) -> bool {
        self.qname.eq_ignore_ascii_case(zone.trim_end_matches('.'))
    }
}

fn u16_at(buf: &[u8], at: usize) -> Result<u16, WireError> {
    match buf.get(at..at + 2) {
        Some(b) => Ok(u16::from_be_bytes([b[0], b[1]])),
        None => Err(WireError::Truncated { offset: buf.len() }),
    }
}

/// Reads a possibly compressed name starting at `at`. Returns the dotted
/// name and the offset just past it in the original position.
pub fn read_name(buf: &[u8], mut at: usize) -> Result<(String, usize), WireError> {
    let mut name = String::new();
    let mut wire_len = 1;
    let mut end = None;
    let mut jumps = 0;
    loop {
        let len = *buf.get(at).ok_or(WireError::Truncated { offset: buf.len() })? as usize;
        match len & 0xc0 {
            0x00 => {}
            0xc0 => {
                let lo = *buf.get(at + 1).ok_or(WireError::Truncated { offset: buf.len() })? as usize;
                jumps += 1;
                if jumps > MAX_POINTERS {
                    return Err(WireError::PointerLoop);
                }
                end.get_or_insert(at + 2);
                at = ((len & 0x3f) << 8) | lo;
                continue;
            }
            // 0x40 and 0x80 are reserved label types; lengths above 63 land here
            _ => return Err(WireError::BadLabel),
        }
        if len == 0 {
            return Ok((name, end.unwrap_or(at + 1)));
        }
        wire_len += len + 1;
        if wire_len > MAX_NAME_LEN {
            return Err(WireError::NameTooLong);
        }
        let label = buf.get(at + 1..at + 1 + len).ok_or(WireError::Truncated { offset: buf.len() })?;
        if label.iter().any(|&b| !(0x21..=0x7e).contains(&b) || b == b'.') {
            return Err(WireError::BadLabel);
        }
        if !name.is_empty() {
            name.push('.');
        }
        name.extend(label.iter().map(|&b| b as char));
        at += 1 + len;
    }
}

pub fn parse_query(buf: &[u8]) -> Result<DnsQuery, WireError> {
    if buf.len() < HEADER_LEN {
        return Err(WireError::Truncated { offset: buf.len() });
    }
    let id = u16_at(buf, 0)?;
    let flags = u16_at(buf, 2)?;
    if flags & FLAG_QR != 0 {
        return Err(WireError::NotAQuery);
    }
    let opcode = ((flags >> 11) & 0xf) as u8;
    if opcode != 0 {
        return Err(WireError::Opcode(opcode));
    }
    let rd = flags & FLAG_RD != 0;
    match u16_at(buf, 4)? {
        0 => return Err(WireError::NoQuestion),
        1 => {}
        _ => return Err(WireError::MultipleQuestions { id, rd }),
    }
    let (qname, at) = read_name(buf, HEADER_LEN)?;
    Ok(DnsQuery {
        id,
        qname,
        qtype: u16_at(buf, at)?,
        qclass: u16_at(buf, at + 2)?,
        rd,
        source: None,
    })
}

fn push_name(out: &mut Vec<u8>, name: &str) {
    for label in name.split('.').filter(|l| !l.is_empty()) {
        out.push(label.len() as u8);
        out.extend_from_slice(label.as_bytes());
    }
    out.push(0);
}

fn header(out: &mut Vec<u8>, id: u16, flags: u16, counts: [u16; 4]) {
    out.extend_from_slice(&id.to_be_bytes());
    out.extend_from_slice(&flags.to_be_bytes());
    for c in counts {
        out.extend_from_slice(&c.to_be_bytes());
    }
}

fn question(out: &mut Vec<u8>, q: &DnsQuery) {
    push_name(out, &q.qname);
    out.extend_from_slice(&q.qtype.to_be_bytes());
    out.extend_from_slice(&q.qclass.to_be_bytes());
}

/// Encodes a query with a single uncompressed question.
pub fn serialize_query(q: &DnsQuery) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + q.qname.len() + 6);
    header(&mut out, q.id, if q.rd { FLAG_RD } else { 0 }, [1, 0, 0, 0]);
    question(&mut out, q);
    out
}

fn response_flags(rd: bool, rcode: Rcode) -> u16 {
    FLAG_QR | FLAG_AA | if rd { FLAG_RD } else { 0 } | rcode as u16
}

/// Authoritative answer with one A record; the owner name points back at
/// the question.
pub fn build_answer(q: &DnsQuery, addr: Ipv4Addr, ttl: u32) -> Vec<u8> {
    let mut out = Vec::with_capacity(64);
    header(&mut out, q.id, response_flags(q.rd, Rcode::NoError), [1, 1, 0, 0]);
    question(&mut out, q);
    out.extend_from_slice(&[0xc0, HEADER_LEN as u8]);
    out.extend_from_slice(&TYPE_A.to_be_bytes());
    out.extend_from_slice(&CLASS_IN.to_be_bytes());
    out.extend_from_slice(&ttl.to_be_bytes());
    out.extend_from_slice(&4u16.to_be_bytes());
    out.extend_from_slice(&addr.octets());
    out
}

/// Authoritative response without answers (NXDOMAIN, or NOERROR for a type
/// the zone does not serve).
pub fn build_empty(q: &DnsQuery, rcode: Rcode) -> Vec<u8> {
    let mut out = Vec::with_capacity(32);
    header(&mut out, q.id, response_flags(q.rd, rcode), [1, 0, 0, 0]);
    question(&mut out, q);
    out
}

/// Header-only REFUSED response.
pub fn build_refused(id: u16, rd: bool) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN);
    header(&mut out, id, response_flags(rd, Rcode::Refused), [0, 0, 0, 0]);
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResourceRecord {
    pub name: String,
    pub rtype: u16,
    pub class: u16,
    pub ttl: u32,
    pub rdata: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DnsResponse {
    pub id: u16,
    pub qr: bool,
    pub opcode: u8,
    pub aa: bool,
    pub tc: bool,
    pub rd: bool,
    pub ra: bool,
    pub rcode: u8,
    pub question: Option<(String, u16, u16)>,
    pub answers: Vec<ResourceRecord>,
}

impl DnsResponse {
    pub fn first_a(&self) -> Option<Ipv4Addr> {
        self.answers
            .iter()
            .find(|r| r.rtype == TYPE_A && r.rdata.len() == 4)
            .map(|r| Ipv4Addr::new(r.rdata[0], r.rdata[1], r.rdata[2], r.rdata[3]))
    }
}

/// Parses a response (at most one question, answer section only).
pub fn parse_response(buf: &[u8]) -> Result<DnsResponse, WireError> {
    if buf.len() < HEADER_LEN {
        return Err(WireError::Truncated { offset: buf.len() });
    }
    let flags = u16_at(buf, 2)?;
    let qd = u16_at(buf, 4)?;
    let an = u16_at(buf, 6)?;
    if qd > 1 {
        return Err(WireError::MultipleQuestions { id: u16_at(buf, 0)?, rd: flags & FLAG_RD != 0 });
    }
    let mut at = HEADER_LEN;
    let question = if qd == 1 {
        let (name, next) = read_name(buf, at)?;
        at = next + 4;
        Some((name, u16_at(buf, next)?, u16_at(buf, next + 2)?))
    } else {
        None
    };
    let mut answers = Vec::new();
    for _ in 0..an {
        let (name, next) = read_name(buf, at)?;
        let rdlen = u16_at(buf, next + 8)? as usize;
        let rdata = buf
            .get(next + 10..next + 10 + rdlen)
            .ok_or(WireError::Truncated { offset: buf.len() })?
            .to_vec();
        let ttl_hi = u16_at(buf, next + 4)?;
        let ttl_lo = u16_at(buf, next + 6)?;
        answers.push(ResourceRecord {
            name,
            rtype: u16_at(buf, next)?,
            class: u16_at(buf, next + 2)?,
            ttl: (u32::from(ttl_hi) << 16) | u32::from(ttl_lo),
            rdata,
        });
        at = next + 10 + rdlen;
    }
    Ok(DnsResponse {
        id: u16_at(buf, 0)?,
        qr: flags & FLAG_QR != 0,
        opcode: ((flags >> 11) & 0xf) as u8,
        aa: flags & FLAG_AA != 0,
        tc: flags & FLAG_TC != 0,
        rd: flags & FLAG_RD != 0,
        ra: flags & FLAG_RA != 0,
        rcode: (flags & 0xf) as u8,
        question,
        answers,
    })
}
