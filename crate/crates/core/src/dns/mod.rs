//! Minimal authoritative DNS responder.

pub mod service;
pub mod wire;

pub use service::{serve, ChannelFeed, DnsService, MonitorFeed, NullFeed, ReplayFeed, ZoneConfig};
pub use wire::{
    build_answer, build_empty, build_refused, parse_query, parse_response, serialize_query, DnsQuery, DnsResponse, Rcode,
    WireError, TYPE_A,
};
