//! Analytical granularity model and workload distributions.
//!
//! With `n` clients behind an LDNS, each opening connections at rate `r` and
//! downloading `s` bytes per connection, the LDNS sends DNS requests at
//!
//! ```text
//! λ = n·r                 non-caching LDNS
//! λ = min(n·r, 1/T)       LDNS caching answers for T seconds
//! ```
//!
//! and the balancer steers `R/λ` bytes per decision, where `R = n·r·s`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::invalid;
use crate::{ClientId, LdnsId, Result};

/// Parameters of the granularity model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GranularityInput {
    /// Clients behind the LDNS.
    pub n: f64,
    /// Connections per second per client.
    pub r: f64,
    /// Bytes per connection.
    pub s: f64,
    /// TTL the LDNS caches answers for, in seconds.
    pub ttl: f64,
    pub caching: bool,
}

impl GranularityInput {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("n", self.n), ("r", self.r), ("s", self.s), ("ttl", self.ttl)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, format!("must be finite and > 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Aggregate traffic rate `R = n·r·s` in bytes per second.
    pub fn traffic_rate(&self) -> f64 {
        self.n * self.r * self.s
    }

    fn caches_below_demand(&self) -> bool {
        self.caching && self.n * self.r >= 1.0 / self.ttl
    }
}

/// DNS request rate `λ` of one LDNS, in requests per second.
pub fn ldns_request_rate(g: &GranularityInput) -> f64 {
    let demand = g.n * g.r;
    if g.caching {
        demand.min(1.0 / g.ttl)
    } else {
        demand
    }
}

/// Bytes of traffic steered by one DNS decision, `R/λ`.
///
/// The cached branch is evaluated in closed form rather than as a quotient so
/// that the non-caching branch returns `s` exactly.
pub fn granularity_bytes_per_request(g: &GranularityInput) -> f64 {
    if g.caches_below_demand() {
        g.n * g.r * g.s * g.ttl
    } else {
        g.s
    }
}

/// Expected number of DNS requests routed while the traffic of one earlier
/// decision is still in flight, `δ·λ`. Values above one mean the
/// measurement-based balancer cannot see load it has already committed.
pub fn pending_load_ratio(delta_secs: f64, lambda: f64) -> f64 {
    delta_secs * lambda
}

/// Per-connection download size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SizeDistribution {
    Fixed { bytes: u64 },
    /// Lognormal with the given arithmetic mean and log-scale shape, clamped
    /// to `cap_bytes`. The location is `ln(mean) - sigma²/2`.
    LognormalTruncated {
        mean_bytes: f64,
        cap_bytes: u64,
        sigma: f64,
    },
}

pub const DEFAULT_LOGNORMAL_SIGMA: f64 = 1.5;

impl SizeDistribution {
    pub fn fixed(bytes: u64) -> Result<Self> {
        let d = SizeDistribution::Fixed { bytes };
        d.validate()?;
        Ok(d)
    }

    pub fn lognormal(mean_bytes: f64, cap_bytes: u64, sigma: f64) -> Result<Self> {
        let d = SizeDistribution::LognormalTruncated {
            mean_bytes,
            cap_bytes,
            sigma,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SizeDistribution::Fixed { bytes } => {
                if bytes == 0 {
                    return Err(invalid("size", "fixed size must be > 0"));
                }
            }
            SizeDistribution::LognormalTruncated {
                mean_bytes,
                cap_bytes,
                sigma,
            } => {
                if !(mean_bytes.is_finite() && mean_bytes >= 1.0) {
                    return Err(invalid("size", format!("mean must be >= 1 byte, got {mean_bytes}")));
                }
                if !(sigma.is_finite() && sigma > 0.0) {
                    return Err(invalid("size", format!("sigma must be > 0, got {sigma}")));
                }
                if (cap_bytes as f64) < mean_bytes {
                    return Err(invalid(
                        "size",
                        format!("truncation cap {cap_bytes} is below the configured mean {mean_bytes}"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// The configured (pre-truncation) mean.
    pub fn nominal_mean(&self) -> f64 {
        match *self {
            SizeDistribution::Fixed { bytes } => bytes as f64,
            SizeDistribution::LognormalTruncated { mean_bytes, .. } => mean_bytes,
        }
    }

    /// Mean of the distribution actually sampled, i.e. `E[min(X, cap)]`.
    pub fn expected_mean(&self) -> f64 {
        match *self {
            SizeDistribution::Fixed { bytes } => bytes as f64,
            SizeDistribution::LognormalTruncated {
                mean_bytes,
                cap_bytes,
                sigma,
            } => {
                let mu = mean_bytes.ln() - sigma * sigma / 2.0;
                let c = cap_bytes as f64;
                let z = (c.ln() - mu) / sigma;
                let std = Normal::standard();
                mean_bytes * std.cdf(z - sigma) + c * (1.0 - std.cdf(z))
            }
        }
    }

    pub fn cap(&self) -> u64 {
        match *self {
            SizeDistribution::Fixed { bytes } => bytes,
            SizeDistribution::LognormalTruncated { cap_bytes, .. } => cap_bytes,
        }
    }

    /// Draws one size in `[1, cap]`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match *self {
            SizeDistribution::Fixed { bytes } => bytes,
            SizeDistribution::LognormalTruncated {
                mean_bytes,
                cap_bytes,
                sigma,
            } => {
                let mu = mean_bytes.ln() - sigma * sigma / 2.0;
                // parameters were validated
                let x = LogNormal::new(mu, sigma).unwrap().sample(rng);
                (x.round() as u64).clamp(1, cap_bytes)
            }
        }
    }
}

/// Client think time between the end of one download and the next request.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SleepDistribution {
    Exponential { mean_secs: f64 },
    Fixed { secs: f64 },
}

impl SleepDistribution {
    pub fn validate(&self) -> Result<()> {
        let v = self.mean();
        if !(v.is_finite() && v >= 0.0) {
            return Err(invalid("sleep", format!("mean must be finite and >= 0, got {v}")));
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match *self {
            SleepDistribution::Exponential { mean_secs } => mean_secs,
            SleepDistribution::Fixed { secs } => secs,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            SleepDistribution::Exponential { mean_secs } if mean_secs > 0.0 => {
                Exp::new(1.0 / mean_secs).unwrap().sample(rng)
            }
            SleepDistribution::Exponential { .. } => 0.0,
            SleepDistribution::Fixed { secs } => secs,
        }
    }
}

/// One remote LDNS server.
#[derive(Debug, Clone, PartialEq)]
pub struct LdnsProfile {
    pub id: LdnsId,
    pub honors_ttl: bool,
    pub caching: bool,
    /// TTL this LDNS actually applies, fixed for its lifetime.
    pub effective_ttl: f64,
    pub client_ids: Vec<ClientId>,
}

impl LdnsProfile {
    pub fn hidden_client_count(&self) -> usize {
        self.client_ids.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.client_ids.is_empty() {
            return Err(invalid("hidden_client_count", "an LDNS needs at least one client"));
        }
        if self.caching && !(self.effective_ttl.is_finite() && self.effective_ttl > 0.0) {
            return Err(invalid(
                "effective_ttl",
                format!("caching LDNS {} needs a positive TTL, got {}", self.id, self.effective_ttl),
            ));
        }
        Ok(())
    }
}

/// One closed-loop client.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientSession {
    pub id: ClientId,
    pub ldns_id: LdnsId,
    pub size_dist: SizeDistribution,
    pub sleep_dist: SleepDistribution,
    /// Round-trip time to the server, seconds.
    pub path_rtt: f64,
    /// Bottleneck rate to the server, bits per second.
    pub path_rate: f64,
}

impl ClientSession {
    pub fn validate(&self) -> Result<()> {
        if !(self.path_rtt.is_finite() && self.path_rtt > 0.0) {
            return Err(invalid("path_rtt", format!("must be > 0, got {}", self.path_rtt)));
        }
        if !(self.path_rate.is_finite() && self.path_rate > 0.0) {
            return Err(invalid("path_rate", format!("must be > 0, got {}", self.path_rate)));
        }
        self.size_dist.validate()?;
        self.sleep_dist.validate()
    }

    /// Approximate connection rate `1 / (mean sleep + mean transfer time)`.
    ///
    /// In closed-loop operation the realized rate is an output of the
    /// simulation; this is the open-loop value fed to the granularity model.
    pub fn request_rate(&self) -> f64 {
        let transfer = self.size_dist.expected_mean() * 8.0 / self.path_rate;
        1.0 / (self.sleep_dist.mean() + transfer)
    }
}

/// Derives an independent 64-bit seed for a named stream of a run.
///
/// Each entity draws from its own stream so that changing one part of a
/// scenario (the balancing policy, say) leaves every other random draw intact.
pub fn stream_seed(seed: u64, stream: &str, index: u64) -> u64 {
    // FNV-1a over the stream name, then SplitMix64 finalization.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stream.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix(splitmix(seed ^ h).wrapping_add(index))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream_rng(seed: u64, stream: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(seed, stream, index))
}
