//! Scenario description and its text format.
//!
//! A scenario file starts with the header line `dnsite-scenario 1`, followed
//! by `key = value` lines. `#` starts a comment. Keys not given keep their
//! defaults. A file may end with any number of `[variant NAME]` sections,
//! each overriding some keys of the base scenario; such a file expands into
//! one scenario per variant.
//!
//! | key                 | value syntax                                   | default                 |
//! |---------------------|------------------------------------------------|-------------------------|
//! | `name`              | text                                           | `default`               |
//! | `duration`          | seconds                                        | `600`                   |
//! | `ldns_count`        | integer                                        | `46`                    |
//! | `hidden_clients`    | `uniform MIN MAX` \| `fixed N` \| `pareto SHAPE MIN MAX` | `uniform 1 5` |
//! | `violator_fraction` | `[0,1]`                                        | `0.4`                   |
//! | `violation_reading` | `diverse` \| `ignore`                          | `diverse`               |
//! | `violator_ttl`      | `MIN MAX` seconds                              | `5 600`                 |
//! | `nominal_ttl`       | seconds                                        | `15`                    |
//! | `caching`           | `true` \| `false`                              | `true`                  |
//! | `sleep`             | `exp MEAN` \| `fixed SECS`                     | `exp 35`                |
//! | `size`              | `lognormal MEAN CAP SIGMA` \| `fixed BYTES`     | `lognormal 225000 625000 1.5` |
//! | `path_rate`         | `MIN MAX` bits/s, log-uniform                  | `500000 10000000`       |
//! | `path_rtt`          | `MIN MAX` seconds, log-uniform                 | `0.01 0.3`              |
//! | `flow_rate_cap`     | bits/s \| `none`                               | `none`                  |
//! | `link_count`        | integer                                        | `2`                     |
//! | `policy`            | `rr` \| `mb` \| `random` \| `static:L`          | `rr`                    |
//! | `window`            | MB window `W`, seconds, multiple of 0.1        | `10`                    |
//! | `delay`             | `rtt MULTIPLIER` \| `fixed SECS`               | `rtt 3`                 |
//! | `timescale`         | error averaging timescale `I`, seconds         | `20`                    |
//! | `step`              | error sampling step, seconds                   | `1`                     |
//! | `seed`              | unsigned 64-bit                                | `20090901`              |

use std::fmt::Write as _;

use crate::balancer::{Policy, ViolationReading};
use crate::sim::kvfile;
use crate::model::{SizeDistribution, SleepDistribution, DEFAULT_LOGNORMAL_SIGMA};
use crate::{Error, Micros, Result};

pub const SCENARIO_HEADER: &str = "dnsite-scenario 1";
pub const DEFAULT_SEED: u64 = 20_090_901;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HiddenClients {
    Uniform { min: u32, max: u32 },
    Fixed(u32),
    /// Pareto with the given shape and scale `min`, rounded down and capped.
    Pareto { shape: f64, min: u32, max: u32 },
}

impl HiddenClients {
    fn to_text(self) -> String {
        match self {
            HiddenClients::Uniform { min, max } => format!("uniform {min} {max}"),
            HiddenClients::Fixed(n) => format!("fixed {n}"),
            HiddenClients::Pareto { shape, min, max } => format!("pareto {shape} {min} {max}"),
        }
    }

    pub fn mean(self) -> f64 {
        match self {
            HiddenClients::Uniform { min, max } => (min + max) as f64 / 2.0,
            HiddenClients::Fixed(n) => n as f64,
            HiddenClients::Pareto { shape, min, .. } if shape > 1.0 => shape * min as f64 / (shape - 1.0),
            HiddenClients::Pareto { max, .. } => max as f64,
        }
    }
}

/// Delay `δ` between a DNS answer and the arrival of the traffic it steers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DelayModel {
    Fixed { secs: f64 },
    /// A multiple of the client's RTT: resolution, handshake and one
    /// slow-start round by default.
    RttDerived { multiplier: f64 },
}

impl DelayModel {
    pub fn delta(self, path_rtt: f64) -> f64 {
        match self {
            DelayModel::Fixed { secs } => secs,
            DelayModel::RttDerived { multiplier } => multiplier * path_rtt,
        }
    }
}

impl Default for DelayModel {
    fn default() -> Self {
        DelayModel::RttDerived { multiplier: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub duration: f64,
    pub ldns_count: u32,
    pub hidden_clients: HiddenClients,
    pub violator_fraction: f64,
    pub violation_reading: ViolationReading,
    pub violator_ttl: (u32, u32),
    pub nominal_ttl: u32,
    pub caching: bool,
    pub sleep: SleepDistribution,
    pub size: SizeDistribution,
    pub path_rate: (f64, f64),
    pub path_rtt: (f64, f64),
    pub flow_rate_cap: Option<f64>,
    pub link_count: usize,
    pub policy: Policy,
    pub window: f64,
    pub delay: DelayModel,
    pub timescale: f64,
    pub step: f64,
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            name: "default".into(),
            duration: 600.0,
            ldns_count: 46,
            hidden_clients: HiddenClients::Uniform { min: 1, max: 5 },
            violator_fraction: 0.4,
            violation_reading: ViolationReading::DiverseTtl,
            violator_ttl: (5, 600),
            nominal_ttl: 15,
            caching: true,
            sleep: SleepDistribution::Exponential { mean_secs: 35.0 },
            size: SizeDistribution::LognormalTruncated {
                mean_bytes: 225_000.0,
                cap_bytes: 625_000,
                sigma: DEFAULT_LOGNORMAL_SIGMA,
            },
            path_rate: (500_000.0, 10_000_000.0),
            path_rtt: (0.010, 0.300),
            flow_rate_cap: None,
            link_count: 2,
            policy: Policy::RoundRobin,
            window: 10.0,
            delay: DelayModel::default(),
            timescale: 20.0,
            step: 1.0,
            seed: DEFAULT_SEED,
        }
    }
}

const KEYS: &[&str] = &[
    "name",
    "duration",
    "ldns_count",
    "hidden_clients",
    "violator_fraction",
    "violation_reading",
    "violator_ttl",
    "nominal_ttl",
    "caching",
    "sleep",
    "size",
    "path_rate",
    "path_rtt",
    "flow_rate_cap",
    "link_count",
    "policy",
    "window",
    "delay",
    "timescale",
    "step",
    "seed",
];

fn num<T: std::str::FromStr>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|_| format!("`{s}` is not a valid number"))
}

fn words(v: &str) -> Vec<&str> {
    v.split_whitespace().collect()
}

fn pair<T: std::str::FromStr>(v: &str) -> std::result::Result<(T, T), String> {
    match words(v)[..] {
        [a, b] => Ok((num(a)?, num(b)?)),
        _ => Err(format!("expected two numbers, got `{v}`")),
    }
}

impl Scenario {
    pub fn duration_micros(&self) -> Micros {
        Micros::from_secs_f64(self.duration)
    }

    pub fn window_micros(&self) -> Micros {
        Micros::from_secs_f64(self.window)
    }

    pub fn timescale_micros(&self) -> Micros {
        Micros::from_secs_f64(self.timescale)
    }

    pub fn step_micros(&self) -> Micros {
        Micros::from_secs_f64(self.step)
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let v = value.trim();
        match key {
            "name" => {
                if v.is_empty() || v.contains(['\n', '[', ']']) {
                    return Err(format!("bad name `{v}`"));
                }
                self.name = v.to_string();
            }
            "duration" => self.duration = num(v)?,
            "ldns_count" => self.ldns_count = num(v)?,
            "hidden_clients" => {
                self.hidden_clients = match words(v)[..] {
                    ["uniform", a, b] => HiddenClients::Uniform { min: num(a)?, max: num(b)? },
                    ["fixed", n] => HiddenClients::Fixed(num(n)?),
                    ["pareto", s, a, b] => HiddenClients::Pareto {
                        shape: num(s)?,
                        min: num(a)?,
                        max: num(b)?,
                    },
                    _ => return Err(format!("expected `uniform MIN MAX`, `fixed N` or `pareto SHAPE MIN MAX`, got `{v}`")),
                }
            }
            "violator_fraction" => self.violator_fraction = num(v)?,
            "violation_reading" => self.violation_reading = v.parse().map_err(|e: Error| e.to_string())?,
            "violator_ttl" => self.violator_ttl = pair(v)?,
            "nominal_ttl" => self.nominal_ttl = num(v)?,
            "caching" => {
                self.caching = match v {
                    "true" => true,
                    "false" => false,
                    _ => return Err(format!("expected true|false, got `{v}`")),
                }
            }
            "sleep" => {
                self.sleep = match words(v)[..] {
                    ["exp", m] => SleepDistribution::Exponential { mean_secs: num(m)? },
                    ["fixed", s] => SleepDistribution::Fixed { secs: num(s)? },
                    _ => return Err(format!("expected `exp MEAN` or `fixed SECS`, got `{v}`")),
                }
            }
            "size" => {
                self.size = match words(v)[..] {
                    ["fixed", b] => SizeDistribution::Fixed { bytes: num(b)? },
                    ["lognormal", m, c, s] => SizeDistribution::LognormalTruncated {
                        mean_bytes: num(m)?,
                        cap_bytes: num(c)?,
                        sigma: num(s)?,
                    },
                    _ => return Err(format!("expected `fixed BYTES` or `lognormal MEAN CAP SIGMA`, got `{v}`")),
                }
            }
            "path_rate" => self.path_rate = pair(v)?,
            "path_rtt" => self.path_rtt = pair(v)?,
            "flow_rate_cap" => self.flow_rate_cap = if v == "none" { None } else { Some(num(v)?) },
            "link_count" => self.link_count = num(v)?,
            "policy" => self.policy = v.parse().map_err(|e: Error| e.to_string())?,
            "window" => self.window = num(v)?,
            "delay" => {
                self.delay = match words(v)[..] {
                    ["rtt", m] => DelayModel::RttDerived { multiplier: num(m)? },
                    ["fixed", s] => DelayModel::Fixed { secs: num(s)? },
                    _ => return Err(format!("expected `rtt MULTIPLIER` or `fixed SECS`, got `{v}`")),
                }
            }
            "timescale" => self.timescale = num(v)?,
            "step" => self.step = num(v)?,
            "seed" => self.seed = num(v)?,
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    fn get(&self, key: &str) -> String {
        match key {
            "name" => self.name.clone(),
            "duration" => self.duration.to_string(),
            "ldns_count" => self.ldns_count.to_string(),
            "hidden_clients" => self.hidden_clients.to_text(),
            "violator_fraction" => self.violator_fraction.to_string(),
            "violation_reading" => self.violation_reading.to_string(),
            "violator_ttl" => format!("{} {}", self.violator_ttl.0, self.violator_ttl.1),
            "nominal_ttl" => self.nominal_ttl.to_string(),
            "caching" => self.caching.to_string(),
            "sleep" => match self.sleep {
                SleepDistribution::Exponential { mean_secs } => format!("exp {mean_secs}"),
                SleepDistribution::Fixed { secs } => format!("fixed {secs}"),
            },
            "size" => match self.size {
                SizeDistribution::Fixed { bytes } => format!("fixed {bytes}"),
                SizeDistribution::LognormalTruncated {
                    mean_bytes,
                    cap_bytes,
                    sigma,
                } => format!("lognormal {mean_bytes} {cap_bytes} {sigma}"),
            },
            "path_rate" => format!("{} {}", self.path_rate.0, self.path_rate.1),
            "path_rtt" => format!("{} {}", self.path_rtt.0, self.path_rtt.1),
            "flow_rate_cap" => self.flow_rate_cap.map_or("none".into(), |c| c.to_string()),
            "link_count" => self.link_count.to_string(),
            "policy" => self.policy.to_string(),
            "window" => self.window.to_string(),
            "delay" => match self.delay {
                DelayModel::RttDerived { multiplier } => format!("rtt {multiplier}"),
                DelayModel::Fixed { secs } => format!("fixed {secs}"),
            },
            "timescale" => self.timescale.to_string(),
            "step" => self.step.to_string(),
            "seed" => self.seed.to_string(),
            _ => unreachable!("unknown key {key}"),
        }
    }

    /// Canonical text form: header plus every key in a fixed order.
    pub fn to_text(&self) -> String {
        let mut out = format!("{SCENARIO_HEADER}\n");
        for k in KEYS {
            let _ = writeln!(out, "{k} = {}", self.get(k));
        }
        out
    }

    /// Every violated constraint, one message per field.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let mut check = |ok: bool, msg: String| {
            if !ok {
                v.push(msg);
            }
        };
        let pos = |x: f64| x.is_finite() && x > 0.0;
        check(pos(self.duration), format!("duration: must be > 0, got {}", self.duration));
        check(self.ldns_count >= 1, "ldns_count: must be >= 1".into());
        match self.hidden_clients {
            HiddenClients::Uniform { min, max } => {
                check(min >= 1 && min <= max, format!("hidden_clients: need 1 <= min <= max, got [{min},{max}]"))
            }
            HiddenClients::Fixed(n) => check(n >= 1, "hidden_clients: must be >= 1".into()),
            HiddenClients::Pareto { shape, min, max } => check(
                pos(shape) && min >= 1 && min <= max,
                format!("hidden_clients: need shape > 0 and 1 <= min <= max, got {shape} [{min},{max}]"),
            ),
        }
        check(
            (0.0..=1.0).contains(&self.violator_fraction),
            format!("violator_fraction: must be in [0,1], got {}", self.violator_fraction),
        );
        let (lo, hi) = self.violator_ttl;
        check(lo >= 1 && lo <= hi, format!("violator_ttl: need 1 <= min <= max, got [{lo},{hi}]"));
        check(self.nominal_ttl >= 1, "nominal_ttl: must be >= 1".into());
        if let Err(e) = self.sleep.validate() {
            v.push(format!("sleep: {e}"));
        }
        if let Err(e) = self.size.validate() {
            v.push(format!("size: {e}"));
        }
        let (a, b) = self.path_rate;
        let ok = pos(a) && pos(b) && a <= b;
        let mut check = |ok: bool, msg: String| {
            if !ok {
                v.push(msg);
            }
        };
        check(ok, format!("path_rate: need 0 < min <= max, got [{a},{b}]"));
        let (a, b) = self.path_rtt;
        check(pos(a) && pos(b) && a <= b, format!("path_rtt: need 0 < min <= max, got [{a},{b}]"));
        if let Some(c) = self.flow_rate_cap {
            check(pos(c), format!("flow_rate_cap: must be > 0, got {c}"));
        }
        check(self.link_count >= 2, format!("link_count: need >= 2, got {}", self.link_count));
        if let Policy::Static(l) = self.policy {
            check(l < self.link_count, format!("policy: static link {l} out of range"));
        }
        let w = Micros::from_secs_f64(self.window);
        check(
            pos(self.window) && w.0 % 100_000 == 0 && (w.as_secs_f64() - self.window).abs() < 1e-9,
            format!("window: must be a positive multiple of 0.1 s, got {}", self.window),
        );
        let delay_ok = match self.delay {
            DelayModel::Fixed { secs } => secs.is_finite() && secs >= 0.0,
            DelayModel::RttDerived { multiplier } => multiplier.is_finite() && multiplier >= 0.0,
        };
        check(delay_ok, "delay: must produce a non-negative delay".into());
        check(pos(self.timescale), format!("timescale: must be > 0, got {}", self.timescale));
        check(pos(self.step), format!("step: must be > 0, got {}", self.step));
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Scenario(v))
        }
    }

    /// Parses a single scenario (no variants allowed).
    pub fn parse(text: &str) -> Result<Scenario> {
        let file = ScenarioFile::parse(text)?;
        if !file.variants.is_empty() {
            return Err(Error::Scenario(vec!["expected a single scenario, found variants".into()]));
        }
        Ok(file.base)
    }
}

/// A parsed scenario file: a base scenario plus named overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFile {
    pub base: Scenario,
    pub variants: Vec<(String, Vec<(String, String)>)>,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<ScenarioFile> {
        let file = kvfile::parse(text, SCENARIO_HEADER).map_err(Error::Scenario)?;
        let mut errors = file.errors.clone();
        let mut base = Scenario::default();
        for (n, k, v) in &file.base {
            if let Err(e) = base.set(k, v) {
                errors.push(format!("line {n}: {k}: {e}"));
            }
        }
        let mut variants = Vec::new();
        for (_, name, entries) in file.variants {
            // values are checked on expansion, but reject unknown keys early
            for (n, k, _) in &entries {
                if !KEYS.contains(&k.as_str()) {
                    errors.push(format!("line {n}: unknown key `{k}`"));
                }
            }
            variants.push((name, entries.into_iter().map(|(_, k, v)| (k, v)).collect()));
        }
        if !errors.is_empty() && variants.is_empty() {
            errors.extend(base.violations());
        }
        if errors.is_empty() {
            Ok(ScenarioFile { base, variants })
        } else {
            Err(Error::Scenario(errors))
        }
    }

    /// One scenario per variant (or just the base), each validated.
    pub fn expand(&self) -> Result<Vec<Scenario>> {
        if self.variants.is_empty() {
            self.base.validate()?;
            return Ok(vec![self.base.clone()]);
        }
        let mut out = Vec::new();
        let mut errors = Vec::new();
        for (name, overrides) in &self.variants {
            let mut sc = self.base.clone();
            sc.name = format!("{}-{}", self.base.name, name);
            for (k, v) in overrides {
                if let Err(e) = sc.set(k, v) {
                    errors.push(format!("variant {name}: {k}: {e}"));
                }
            }
            errors.extend(sc.violations().into_iter().map(|e| format!("variant {name}: {e}")));
            out.push(sc);
        }
        if errors.is_empty() {
            Ok(out)
        } else {
            Err(Error::Scenario(errors))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_are_valid_and_round_trip() {
        let sc = Scenario::default();
        assert!(sc.validate().is_ok());
        let text = sc.to_text();
        assert!(text.starts_with("dnsite-scenario 1\n"));
        assert_eq!(Scenario::parse(&text).unwrap(), sc);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let sc = Scenario::parse("dnsite-scenario 1\n# comment\nldns_count = 10 # trailing\nsize = fixed 30000\n").unwrap();
        assert_eq!(sc.ldns_count, 10);
        assert_eq!(sc.size, SizeDistribution::Fixed { bytes: 30_000 });
        assert_eq!(sc.nominal_ttl, 15);
    }

    #[test]
    fn validation_lists_every_field() {
        let sc = Scenario {
            duration: -1.0,
            ldns_count: 0,
            violator_fraction: 1.5,
            window: 0.15,
            link_count: 1,
            ..Scenario::default()
        };
        let Err(Error::Scenario(v)) = sc.validate() else { panic!() };
        for field in ["duration", "ldns_count", "violator_fraction", "window", "link_count"] {
            assert!(v.iter().any(|m| m.starts_with(field)), "{field} missing in {v:?}");
        }
        assert_eq!(v.len(), 5);
    }

    #[test]
    fn parse_errors_list_every_line() {
        let Err(Error::Scenario(v)) = ScenarioFile::parse("dnsite-scenario 1\nfoo = 1\nduration = x\nnonsense\n") else {
            panic!()
        };
        assert_eq!(v.len(), 3, "{v:?}");
        let Err(Error::Scenario(v)) = ScenarioFile::parse("dnsite-scenario 1\nfoo = 1\nduration = -1\n") else {
            panic!()
        };
        assert_eq!(v.len(), 2, "{v:?}");
        assert!(ScenarioFile::parse("ldns_count = 3\n").is_err());
        assert!(ScenarioFile::parse("").is_err());
    }

    #[test]
    fn variants_expand() {
        let f = ScenarioFile::parse(
            "dnsite-scenario 1\nname = fs\nldns_count = 20\n[variant small]\nsize = fixed 30000\nsleep = exp 4\n[variant large]\nsize = fixed 625000\n",
        )
        .unwrap();
        let scs = f.expand().unwrap();
        assert_eq!(scs.len(), 2);
        assert_eq!(scs[0].name, "fs-small");
        assert_eq!(scs[0].sleep, SleepDistribution::Exponential { mean_secs: 4.0 });
        assert_eq!(scs[1].size, SizeDistribution::Fixed { bytes: 625_000 });
        assert_eq!(scs[1].ldns_count, 20);
        assert_eq!(scs[1].sleep, SleepDistribution::Exponential { mean_secs: 35.0 });

        let bad = ScenarioFile::parse("dnsite-scenario 1\n[variant a]\nduration = -3\n").unwrap();
        assert!(bad.expand().is_err());
        assert!(ScenarioFile::parse("dnsite-scenario 1\n[variant a]\nbogus = 1\n").is_err());
        assert!(Scenario::parse("dnsite-scenario 1\n[variant a]\n").is_err());
    }

    proptest! {
        #[test]
        fn text_round_trip_is_lossless(
            duration in 1.0f64..1e5,
            ldns in 1u32..500,
            frac in 0.0f64..=1.0,
            ttl in 1u32..10_000,
            mean in 1.0f64..1e6,
            sigma in 0.01f64..4.0,
            cap_factor in 1.0f64..10.0,
            win in 1u32..1000,
            seed in any::<u64>(),
            mb in any::<bool>(),
            exp_sleep in any::<bool>(),
        ) {
            let sc = Scenario {
                duration,
                ldns_count: ldns,
                violator_fraction: frac,
                nominal_ttl: ttl,
                size: SizeDistribution::LognormalTruncated { mean_bytes: mean, cap_bytes: (mean * cap_factor).ceil() as u64, sigma },
                sleep: if exp_sleep { SleepDistribution::Exponential { mean_secs: mean / 1e4 } } else { SleepDistribution::Fixed { secs: sigma } },
                window: win as f64 / 10.0,
                policy: if mb { Policy::MeasurementBased } else { Policy::Static(1) },
                flow_rate_cap: if mb { Some(mean) } else { None },
                hidden_clients: HiddenClients::Pareto { shape: sigma, min: 1, max: ldns },
                delay: DelayModel::Fixed { secs: sigma },
                seed,
                ..Scenario::default()
            };
            let back = Scenario::parse(&sc.to_text()).unwrap();
            prop_assert_eq!(back, sc);
        }
    }
}
