//! Per-link traffic accounting.
//!
//! A [`LinkMonitor`] keeps `n` byte counters, one per small window of width
//! `w`, on a grid aligned to the experiment start. The load over the sliding
//! window `W = n·w` at time `t` is the sum of the counters of the window
//! containing `t` and the `n - 1` windows before it. The window moves in
//! steps of `w`.

use std::fmt::Write as _;

use crate::error::invalid;
use crate::sim::trace::{RecordKind, TraceRecord};
use crate::{Error, LinkId, Micros, Result};

/// Small-window width used throughout: 100 ms.
pub const DEFAULT_SMALL_WINDOW: Micros = Micros::from_millis(100);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Ingress,
    Egress,
}

/// Which traffic direction a monitor counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DirectionPolicy {
    Ingress,
    Egress,
    #[default]
    Both,
}

impl DirectionPolicy {
    pub fn accepts(self, d: Direction) -> bool {
        matches!(
            (self, d),
            (DirectionPolicy::Both, _)
                | (DirectionPolicy::Ingress, Direction::Ingress)
                | (DirectionPolicy::Egress, Direction::Egress)
        )
    }
}

/// Something that turns byte events into a load estimate.
///
/// Only the sliding window ships; the trait exists so that the balancer does
/// not depend on the concrete estimator.
pub trait LoadEstimator {
    fn record(&mut self, t: Micros, bytes: u64, direction: Direction) -> Result<()>;
    /// Estimated load in bits per second as of `t`.
    fn load_bps(&self, t: Micros) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Slot {
    window: Option<u64>,
    bytes: u64,
}

#[derive(Debug, Clone)]
pub struct LinkMonitor {
    link: LinkId,
    w: Micros,
    ring: Vec<Slot>,
    latest: Micros,
    policy: DirectionPolicy,
    total_recorded: u64,
}

impl LinkMonitor {
    pub fn new(link: LinkId, small_window: Micros, count: usize, policy: DirectionPolicy) -> Result<Self> {
        if small_window.0 == 0 {
            return Err(invalid("small_window_w", "must be > 0"));
        }
        if count == 0 {
            return Err(invalid("window_count_n", "must be >= 1"));
        }
        Ok(LinkMonitor {
            link,
            w: small_window,
            ring: vec![Slot { window: None, bytes: 0 }; count],
            latest: Micros::ZERO,
            policy,
            total_recorded: 0,
        })
    }

    /// A monitor with `w = 100 ms` and `n = W / w`. `W` must be a positive
    /// multiple of 100 ms.
    pub fn with_window(link: LinkId, window: Micros, policy: DirectionPolicy) -> Result<Self> {
        let w = DEFAULT_SMALL_WINDOW;
        if window.0 == 0 || window.0 % w.0 != 0 {
            return Err(invalid(
                "window",
                format!("W={window}s must be a positive multiple of {w}s"),
            ));
        }
        Self::new(link, w, (window.0 / w.0) as usize, policy)
    }

    pub fn link(&self) -> LinkId {
        self.link
    }

    pub fn small_window(&self) -> Micros {
        self.w
    }

    pub fn window_count(&self) -> usize {
        self.ring.len()
    }

    /// The sliding window length `W = n·w`.
    pub fn window(&self) -> Micros {
        Micros(self.w.0 * self.ring.len() as u64)
    }

    pub fn policy(&self) -> DirectionPolicy {
        self.policy
    }

    /// Latest timestamp seen.
    pub fn latest(&self) -> Micros {
        self.latest
    }

    /// Bytes accepted by the direction policy since creation, including
    /// bytes that have since been evicted.
    pub fn total_recorded(&self) -> u64 {
        self.total_recorded
    }

    /// Start of the small window that contains the latest event.
    pub fn current_window_start(&self) -> Micros {
        Micros(self.latest.0 / self.w.0 * self.w.0)
    }

    /// Adds `bytes` to the small window containing `t`.
    ///
    /// Events may arrive up to one small window behind the latest one seen;
    /// anything older means the feed is broken.
    pub fn record_bytes(&mut self, t: Micros, bytes: u64, direction: Direction) -> Result<()> {
        if t.0 + self.w.0 < self.latest.0 {
            return Err(Error::OutOfOrder {
                link: self.link,
                t,
                latest: self.latest,
            });
        }
        self.latest = self.latest.max(t);
        if !self.policy.accepts(direction) {
            return Ok(());
        }
        self.total_recorded += bytes;
        let idx = t.0 / self.w.0;
        let newest = self.latest.0 / self.w.0;
        let n = self.ring.len() as u64;
        if idx + n <= newest {
            // already outside every window that can still be queried
            return Ok(());
        }
        let slot = &mut self.ring[(idx % n) as usize];
        if slot.window != Some(idx) {
            *slot = Slot {
                window: Some(idx),
                bytes: 0,
            };
        }
        slot.bytes += bytes;
        Ok(())
    }

    /// Bytes in the `n` small windows ending with the one that contains `t`.
    pub fn window_bytes(&self, t: Micros) -> u64 {
        let idx = t.0 / self.w.0;
        let n = self.ring.len() as u64;
        self.ring
            .iter()
            .filter_map(|s| s.window.filter(|&k| k <= idx && k + n > idx).map(|_| s.bytes))
            .sum()
    }

    /// Load over the sliding window in bits per second.
    pub fn utilization(&self, t: Micros) -> f64 {
        self.window_bytes(t) as f64 * 8.0 / self.window().as_secs_f64()
    }

    /// Sum of all counters currently held, regardless of `t`.
    pub fn held_bytes(&self) -> u64 {
        self.ring.iter().map(|s| s.bytes).sum()
    }
}

impl LoadEstimator for LinkMonitor {
    fn record(&mut self, t: Micros, bytes: u64, direction: Direction) -> Result<()> {
        self.record_bytes(t, bytes, direction)
    }

    fn load_bps(&self, t: Micros) -> f64 {
        self.utilization(t)
    }
}

/// One monitor per link, all with the same window.
#[derive(Debug, Clone)]
pub struct MonitorSet {
    monitors: Vec<LinkMonitor>,
}

impl MonitorSet {
    pub fn new(link_count: usize, window: Micros, policy: DirectionPolicy) -> Result<Self> {
        if link_count == 0 {
            return Err(invalid("link_count", "must be >= 1"));
        }
        let monitors = (0..link_count)
            .map(|l| LinkMonitor::with_window(l, window, policy))
            .collect::<Result<_>>()?;
        Ok(MonitorSet { monitors })
    }

    pub fn link_count(&self) -> usize {
        self.monitors.len()
    }

    pub fn window(&self) -> Micros {
        self.monitors[0].window()
    }

    pub fn record(&mut self, link: LinkId, t: Micros, bytes: u64, direction: Direction) -> Result<()> {
        match self.monitors.get_mut(link) {
            Some(m) => m.record_bytes(t, bytes, direction),
            None => Err(invalid("link", format!("no monitor for link {link}"))),
        }
    }

    /// Loads of every link at the same instant.
    pub fn snapshot(&self, t: Micros) -> Vec<f64> {
        self.monitors.iter().map(|m| m.utilization(t)).collect()
    }

    pub fn get(&self, link: LinkId) -> Option<&LinkMonitor> {
        self.monitors.get(link)
    }
}

/// Relative load-balancing error `|U1 - U2| / (U1 + U2)`; zero when both
/// links are idle.
pub fn error_metric(u1: f64, u2: f64) -> f64 {
    let sum = u1 + u2;
    if sum <= 0.0 {
        0.0
    } else {
        ((u1 - u2).abs() / sum).clamp(0.0, 1.0)
    }
}

/// Generalization to `k` links: `(max - min) / sum`. Equal to
/// [`error_metric`] for two links.
pub fn spread_error(loads: &[f64]) -> f64 {
    let sum: f64 = loads.iter().sum();
    if loads.len() < 2 || sum <= 0.0 {
        return 0.0;
    }
    let max = loads.iter().cloned().fold(f64::MIN, f64::max);
    let min = loads.iter().cloned().fold(f64::MAX, f64::min);
    ((max - min) / sum).clamp(0.0, 1.0)
}

/// The error `ε_I(t)` sampled every `step`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSeries {
    pub timescale: Micros,
    pub step: Micros,
    pub samples: Vec<(Micros, f64)>,
}

impl ErrorSeries {
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.samples.iter().map(|&(_, e)| e).collect()
    }

    /// Sample median, `None` for an empty series.
    pub fn median(&self) -> Option<f64> {
        crate::analysis::ci::median(&self.values())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_seconds,epsilon\n");
        for (t, e) in &self.samples {
            let _ = writeln!(out, "{:.6},{:.6}", t.as_secs_f64(), e);
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Vec<(f64, f64)>> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if i == 0 {
                if line.trim() != "t_seconds,epsilon" {
                    return Err(Error::TraceFormat {
                        line: 1,
                        reason: format!("unexpected header `{line}`"),
                    });
                }
                continue;
            }
            let bad = || Error::TraceFormat {
                line: i + 1,
                reason: format!("malformed row `{line}`"),
            };
            let (t, e) = line.split_once(',').ok_or_else(bad)?;
            rows.push((t.parse().map_err(|_| bad())?, e.parse().map_err(|_| bad())?));
        }
        Ok(rows)
    }
}

/// Computes `ε_I(t)` from the byte records of a trace, for `t` stepping from
/// `I` (warm-up excluded) while the window `[t, t + I)` ends by the last
/// record.
pub fn error_series(records: &[TraceRecord], timescale: Micros, step: Micros) -> ErrorSeries {
    let end = records.iter().map(|r| r.t).max().unwrap_or(Micros::ZERO);
    error_series_until(records, timescale, step, end)
}

/// Like [`error_series`] but with an explicit end of the experiment span.
pub fn error_series_until(records: &[TraceRecord], timescale: Micros, step: Micros, end: Micros) -> ErrorSeries {
    let mut series = ErrorSeries {
        timescale,
        step,
        samples: Vec::new(),
    };
    if timescale.0 == 0 || step.0 == 0 {
        return series;
    }
    let links = records
        .iter()
        .filter(|r| r.kind == RecordKind::Bytes)
        .filter_map(|r| r.link)
        .max()
        .map_or(2, |m| (m + 1).max(2));
    // per link: sorted times and cumulative bytes
    let mut times: Vec<Vec<u64>> = vec![Vec::new(); links];
    let mut cum: Vec<Vec<u64>> = vec![vec![0]; links];
    let mut bytes_records: Vec<&TraceRecord> = records
        .iter()
        .filter(|r| r.kind == RecordKind::Bytes && r.link.is_some())
        .collect();
    bytes_records.sort_by_key(|r| r.t);
    for r in bytes_records {
        let l = r.link.unwrap();
        times[l].push(r.t.0);
        let last = *cum[l].last().unwrap();
        cum[l].push(last + r.bytes);
    }
    let bytes_in = |l: usize, from: u64, to: u64| -> u64 {
        let a = times[l].partition_point(|&x| x < from);
        let b = times[l].partition_point(|&x| x < to);
        cum[l][b] - cum[l][a]
    };
    let mut t = timescale.0;
    let mut loads = vec![0.0; links];
    while t + timescale.0 <= end.0 {
        for (l, load) in loads.iter_mut().enumerate() {
            *load = bytes_in(l, t, t + timescale.0) as f64;
        }
        series.samples.push((Micros(t), spread_error(&loads)));
        t += step.0;
    }
    series
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const W: Micros = DEFAULT_SMALL_WINDOW;

    fn mon(n: usize, policy: DirectionPolicy) -> LinkMonitor {
        LinkMonitor::new(0, W, n, policy).unwrap()
    }

    /// Re-scans the whole event log: bytes whose small window lies among the
    /// `n` ending with the one containing `t`, and with timestamp `<= t`.
    fn rescan(events: &[(u64, u64)], w: u64, n: u64, t: u64) -> u64 {
        let idx = t / w;
        events
            .iter()
            .filter(|&&(et, _)| et <= t && et / w <= idx && et / w + n > idx)
            .map(|&(_, b)| b)
            .sum()
    }

    #[test]
    fn accumulation_and_policy() {
        let mut m = mon(3, DirectionPolicy::Egress);
        m.record_bytes(Micros(10), 1000, Direction::Egress).unwrap();
        assert_eq!(m.window_bytes(Micros(10)), 1000);
        m.record_bytes(Micros(20), 5000, Direction::Ingress).unwrap();
        assert_eq!(m.window_bytes(Micros(20)), 1000);

        let mut m = mon(1, DirectionPolicy::Both);
        m.record_bytes(Micros(5), 500, Direction::Ingress).unwrap();
        m.record_bytes(Micros(50), 700, Direction::Egress).unwrap();
        assert_eq!(m.window_bytes(Micros(60)), 1200);
    }

    #[test]
    fn empty_monitor_reads_zero() {
        let m = mon(10, DirectionPolicy::Both);
        assert_eq!(m.utilization(Micros::from_secs(5)), 0.0);
    }

    #[test]
    fn constant_rate_is_fixed_point() {
        for n in [1usize, 5, 10, 100] {
            let mut m = mon(n, DirectionPolicy::Both);
            // 125 000 B/s as 12 500 B every 100 ms
            let mut t = 0;
            while t <= 12_000_000 {
                m.record_bytes(Micros(t), 12_500, Direction::Egress).unwrap();
                t += 100_000;
            }
            assert_eq!(m.utilization(Micros(12_000_000)), 1_000_000.0, "n={n}");
            assert_eq!(m.utilization(Micros(12_050_000)), 1_000_000.0, "n={n}");
        }
    }

    #[test]
    fn out_of_order_tolerance() {
        let mut m = mon(4, DirectionPolicy::Both);
        m.record_bytes(Micros(1_000_000), 1, Direction::Egress).unwrap();
        // within one small window behind: accepted
        m.record_bytes(Micros(900_000), 1, Direction::Egress).unwrap();
        assert_eq!(m.window_bytes(Micros(1_000_000)), 2);
        assert!(matches!(
            m.record_bytes(Micros(899_999), 1, Direction::Egress),
            Err(Error::OutOfOrder { .. })
        ));
        assert_eq!(m.latest(), Micros(1_000_000));
        assert_eq!(m.current_window_start(), Micros(1_000_000));
    }

    #[test]
    fn window_constructor() {
        let m = LinkMonitor::with_window(1, Micros::from_secs(10), DirectionPolicy::Both).unwrap();
        assert_eq!(m.window_count(), 100);
        assert_eq!(m.window(), Micros::from_secs(10));
        assert!(LinkMonitor::with_window(1, Micros(150_000), DirectionPolicy::Both).is_err());
        assert!(LinkMonitor::with_window(1, Micros(0), DirectionPolicy::Both).is_err());
    }

    #[test]
    fn sum_conservation_before_eviction() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut set = MonitorSet::new(3, Micros::from_secs(60), DirectionPolicy::Both).unwrap();
        let mut total = 0;
        let mut t = 0;
        for _ in 0..2000 {
            t += rng.random_range(0..20_000);
            let b = rng.random_range(0..1500);
            total += b;
            set.record(rng.random_range(0..3), Micros(t), b, Direction::Egress).unwrap();
        }
        assert!(t < 60_000_000);
        let held: u64 = (0..3).map(|l| set.get(l).unwrap().held_bytes()).sum();
        let recorded: u64 = (0..3).map(|l| set.get(l).unwrap().total_recorded()).sum();
        assert_eq!(held, total);
        assert_eq!(recorded, total);
    }

    #[test]
    fn error_metric_examples() {
        assert_eq!(error_metric(4e6, 4e6), 0.0);
        assert_eq!(error_metric(5e6, 0.0), 1.0);
        assert!((error_metric(6e6, 4e6) - 0.2).abs() < 1e-15);
        assert_eq!(error_metric(0.0, 0.0), 0.0);
        assert_eq!(spread_error(&[6e6, 4e6]), error_metric(6e6, 4e6));
    }

    fn bytes(t: u64, link: usize, b: u64) -> TraceRecord {
        TraceRecord::bytes(Micros(t), link, 0, 0, b)
    }

    #[test]
    fn error_series_one_sided_and_balanced() {
        let mut all_one = Vec::new();
        let mut even = Vec::new();
        for k in 0..1000u64 {
            all_one.push(bytes(k * 100_000, 0, 100));
            even.push(bytes(k * 100_000, (k % 2) as usize, 100));
        }
        let s = error_series(&all_one, Micros::from_secs(20), Micros::from_secs(1));
        assert!(!s.is_empty());
        assert!(s.samples.iter().all(|&(_, e)| e == 1.0));
        let s = error_series(&even, Micros::from_secs(20), Micros::from_secs(1));
        assert!(s.samples.iter().all(|&(_, e)| e == 0.0));
        // first sample after warm-up, last window ends by the last record
        assert_eq!(s.samples[0].0, Micros::from_secs(20));
        let last = s.samples.last().unwrap().0;
        assert!(last.0 + 20_000_000 <= 99_900_000);
        // timestamps strictly increasing by one step
        assert!(s.samples.windows(2).all(|p| p[1].0 .0 - p[0].0 .0 == 1_000_000));
    }

    #[test]
    fn error_series_too_short_is_empty() {
        let recs: Vec<_> = (0..10).map(|k| bytes(k * 100_000, 0, 1)).collect();
        assert!(error_series(&recs, Micros::from_secs(20), Micros::from_secs(1)).is_empty());
        assert!(error_series(&[], Micros::from_secs(20), Micros::from_secs(1)).is_empty());
    }

    #[test]
    fn error_series_csv_round_trip() {
        let s = ErrorSeries {
            timescale: Micros::from_secs(20),
            step: Micros::from_secs(1),
            samples: vec![(Micros::from_secs(20), 0.25), (Micros::from_secs(21), 1.0 / 3.0)],
        };
        let csv = s.to_csv();
        assert_eq!(csv, "t_seconds,epsilon\n20.000000,0.250000\n21.000000,0.333333\n");
        let rows = ErrorSeries::from_csv(&csv).unwrap();
        assert_eq!(rows, vec![(20.0, 0.25), (21.0, 0.333333)]);
    }

    proptest! {
        #[test]
        fn utilization_matches_rescan(
            seed in any::<u64>(),
            n in 1usize..40,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut m = mon(n, DirectionPolicy::Both);
            let mut events = Vec::new();
            let mut t = 0u64;
            for _ in 0..200 {
                t += rng.random_range(0..150_000);
                let b = rng.random_range(0..10_000);
                m.record_bytes(Micros(t), b, Direction::Egress).unwrap();
                events.push((t, b));
                let q = t + rng.random_range(0..50_000);
                prop_assert_eq!(m.window_bytes(Micros(q)), rescan(&events, W.0, n as u64, q));
            }
        }

        #[test]
        fn eviction_ignores_old_history(seed in any::<u64>(), n in 1usize..20) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t_query = 10_000_000u64;
            let recent: Vec<(u64, u64)> = (0..50)
                .map(|_| (rng.random_range(t_query - n as u64 * W.0 + W.0..=t_query), rng.random_range(0..5000)))
                .collect();
            let mut sorted = recent.clone();
            sorted.sort();
            let mut a = mon(n, DirectionPolicy::Both);
            // arbitrary traffic older than the window only reaches `b2`
            let mut b2 = mon(n, DirectionPolicy::Both);
            let mut old_events: Vec<(u64, u64)> = (0..50)
                .map(|_| (rng.random_range(0..t_query - n as u64 * W.0 - W.0), rng.random_range(0..5000)))
                .collect();
            old_events.sort();
            for &(t, x) in &old_events {
                b2.record_bytes(Micros(t), x, Direction::Egress).unwrap();
            }
            for &(t, x) in &sorted {
                a.record_bytes(Micros(t), x, Direction::Egress).unwrap();
                b2.record_bytes(Micros(t), x, Direction::Egress).unwrap();
            }
            prop_assert_eq!(a.window_bytes(Micros(t_query)), b2.window_bytes(Micros(t_query)));
        }

        #[test]
        fn error_metric_properties(u1 in 0.0f64..1e9, u2 in 0.0f64..1e9, c in 1e-3f64..1e3) {
            let e = error_metric(u1, u2);
            prop_assert!((0.0..=1.0).contains(&e));
            prop_assert_eq!(e, error_metric(u2, u1));
            prop_assert!((error_metric(c * u1, c * u2) - e).abs() < 1e-9);
        }
    }
}
