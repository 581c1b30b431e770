//! Building blocks for DNS-based ingress traffic engineering on a multihomed
//! site.
//!
//! An authoritative DNS server picks one of `k` server addresses (one per
//! upstream link) for every resolution request it receives from a local DNS
//! (LDNS) server. Everything the LDNS's clients download until the cached
//! answer expires then flows over that link. This crate contains:
//!
//! * [`model`]: the analytical granularity model and the workload
//!   distributions (file sizes, think times).
//! * [`monitor`]: per-link sliding-window byte accounting and the
//!   load-balancing error metric.
//! * [`balancer`]: round-robin and measurement-based link selection, and
//!   the per-LDNS TTL policy.
//! * [`sim`]: a deterministic discrete-event simulator of closed-loop
//!   clients behind caching LDNS servers, synthetic CBR/Pareto generators
//!   and a trace-replay engine.
//! * [`analysis`]: LDNS/client association by origin AS, TTL-honoring
//!   estimates, CCDF regression fits and median confidence intervals.
//! * [`dns`]: a minimal UDP authoritative responder wired to the balancer.

pub mod analysis;
pub mod balancer;
pub mod dns;
pub mod error;
pub mod model;
pub mod monitor;
pub mod sim;
mod time;

pub use error::{Error, Result};
pub use time::Micros;

/// Index of an upstream link (and of the server address reached over it).
pub type LinkId = usize;

/// Identifier of a simulated LDNS server.
pub type LdnsId = u32;

/// Identifier of a simulated client.
pub type ClientId = u32;
