//! Per-LDNS minimum gap between DNS requests, the usual estimate of
//! whether a resolver honors the advertised TTL.

use std::collections::BTreeMap;

use crate::Micros;

#[derive(Debug, Clone, PartialEq)]
pub struct InterarrivalReport<K> {
    /// Minimum gap in seconds, for LDNS servers with at least two requests.
    pub min_gap: BTreeMap<K, f64>,
    /// LDNS servers seen exactly once.
    pub single_request: Vec<K>,
    /// `(gap, fraction of LDNS with min gap <= gap)`.
    pub cdf: Vec<(f64, f64)>,
}

impl<K> InterarrivalReport<K> {
    /// Fraction of LDNS servers (two or more requests) whose minimum gap is
    /// at least `ttl` seconds.
    pub fn honoring_fraction(&self, ttl: f64) -> Option<f64> {
        if self.min_gap.is_empty() {
            return None;
        }
        let ok = self.min_gap.values().filter(|&&g| g >= ttl).count();
        Some(ok as f64 / self.min_gap.len() as f64)
    }
}

/// `requests` must be time-ordered.
pub fn min_interarrival_per_ldns<K: Ord + Clone>(requests: &[(Micros, K)]) -> InterarrivalReport<K> {
    let mut last: BTreeMap<K, (Micros, Option<Micros>)> = BTreeMap::new();
    for (t, k) in requests {
        last.entry(k.clone())
            .and_modify(|(prev, min)| {
                let gap = t.saturating_sub(*prev);
                *min = Some(min.map_or(gap, |m| m.min(gap)));
                *prev = *t;
            })
            .or_insert((*t, None));
    }
    let mut min_gap = BTreeMap::new();
    let mut single_request = Vec::new();
    for (k, (_, min)) in last {
        match min {
            Some(g) => {
                min_gap.insert(k, g.as_secs_f64());
            }
            None => single_request.push(k),
        }
    }
    let mut gaps: Vec<f64> = min_gap.values().copied().collect();
    gaps.sort_by(f64::total_cmp);
    let n = gaps.len() as f64;
    let cdf = gaps.iter().enumerate().map(|(i, &g)| (g, (i + 1) as f64 / n)).collect();
    InterarrivalReport { min_gap, single_request, cdf }
}
