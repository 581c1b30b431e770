//! Text format for synthetic window sweeps.
//!
//! Same layout as scenario files, with header `dnsite-synthetic 1`:
//!
//! | key                | value syntax                          | default          |
//! |--------------------|---------------------------------------|------------------|
//! | `name`             | text                                  | `synthetic`      |
//! | `model`            | `cbr` \| `pareto`                     | `cbr`            |
//! | `flows`            | CBR flow count                        | `600`            |
//! | `flow_size`        | CBR bytes per flow                    | `250000`         |
//! | `flow_rate`        | CBR bits/s per flow                   | `100000`         |
//! | `arrivals`         | `poisson RATE` \| `periodic SECS`     | `poisson 1`      |
//! | `sources`          | Pareto source count                   | `20`             |
//! | `shape`            | Pareto gap shape, > 1                 | `1.5`            |
//! | `mean_gap`         | Pareto mean gap, seconds              | `0.05`           |
//! | `duration`         | Pareto run length, seconds            | `600`            |
//! | `resolve_interval` | Pareto mean re-resolution interval    | `5`              |
//! | `packet_size`      | bytes, both models                    | `125` / `1000`   |
//! | `link_count`       | integer                               | `2`              |
//! | `windows`          | comma-separated MB windows, seconds   | `0.1, 1, 10`     |
//! | `timescale`        | seconds                               | `20`             |
//! | `seed`             | unsigned 64-bit                       | `1`              |

use crate::sim::kvfile;
use crate::sim::synthetic::{synthetic_cbr, synthetic_pareto, ArrivalSchedule, CbrConfig, ParetoConfig};
use crate::sim::trace::TraceRecord;
use crate::{Error, Micros, Result};

pub const SYNTHETIC_HEADER: &str = "dnsite-synthetic 1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticModel {
    Cbr,
    Pareto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub name: String,
    pub model: SyntheticModel,
    pub cbr: CbrConfig,
    pub pareto: ParetoConfig,
    pub windows: Vec<f64>,
    pub timescale: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            name: "synthetic".into(),
            model: SyntheticModel::Cbr,
            cbr: CbrConfig::default(),
            pareto: ParetoConfig::default(),
            windows: vec![0.1, 1.0, 10.0],
            timescale: 20.0,
        }
    }
}

fn num<T: std::str::FromStr>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|_| format!("`{s}` is not a valid number"))
}

/// Parses a comma-separated list of window lengths in seconds.
pub fn parse_windows(v: &str) -> std::result::Result<Vec<f64>, String> {
    v.split(',').map(str::trim).filter(|w| !w.is_empty()).map(num).collect()
}

impl SyntheticSpec {
    pub fn seed(&self) -> u64 {
        self.cbr.seed
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.cbr.seed = seed;
        self.pareto.seed = seed;
    }

    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let v = value.trim();
        match key {
            "name" => self.name = v.to_string(),
            "model" => {
                self.model = match v {
                    "cbr" => SyntheticModel::Cbr,
                    "pareto" => SyntheticModel::Pareto,
                    _ => return Err(format!("expected cbr|pareto, got `{v}`")),
                }
            }
            "flows" => self.cbr.flows = num(v)?,
            "flow_size" => self.cbr.flow_size = num(v)?,
            "flow_rate" => self.cbr.flow_rate = num(v)?,
            "arrivals" => {
                self.cbr.arrivals = match v.split_whitespace().collect::<Vec<_>>()[..] {
                    ["poisson", r] => ArrivalSchedule::Poisson { rate: num(r)? },
                    ["periodic", i] => ArrivalSchedule::Periodic { interval: num(i)? },
                    _ => return Err(format!("expected `poisson RATE` or `periodic SECS`, got `{v}`")),
                }
            }
            "sources" => self.pareto.sources = num(v)?,
            "shape" => self.pareto.shape = num(v)?,
            "mean_gap" => self.pareto.mean_gap = num(v)?,
            "duration" => self.pareto.duration = num(v)?,
            "resolve_interval" => self.pareto.resolve_interval = num(v)?,
            "packet_size" => {
                let p = num(v)?;
                self.cbr.packet_size = p;
                self.pareto.packet_size = p;
            }
            "link_count" => {
                let k = num(v)?;
                self.cbr.link_count = k;
                self.pareto.link_count = k;
            }
            "windows" => self.windows = parse_windows(v)?,
            "timescale" => self.timescale = num(v)?,
            "seed" => self.set_seed(num(v)?),
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.windows.is_empty() {
            out.push("windows: at least one window is required".into());
        }
        for w in &self.windows {
            let steps = w / 0.1;
            if !(*w > 0.0 && (steps - steps.round()).abs() < 1e-6) {
                out.push(format!("windows: {w} is not a positive multiple of 0.1 s"));
            }
        }
        if !(self.timescale > 0.0 && self.timescale.is_finite()) {
            out.push(format!("timescale: must be positive, got {}", self.timescale));
        }
        if self.cbr.link_count < 2 {
            out.push("link_count: must be >= 2".into());
        }
        out
    }

    pub fn timescale_micros(&self) -> Micros {
        Micros::from_secs_f64(self.timescale)
    }

    pub fn window_micros(&self) -> Vec<Micros> {
        self.windows.iter().map(|&w| Micros::from_secs_f64(w)).collect()
    }

    /// Builds the round-robin assigned log for this model.
    pub fn generate(&self) -> Result<Vec<TraceRecord>> {
        match self.model {
            SyntheticModel::Cbr => synthetic_cbr(&self.cbr),
            SyntheticModel::Pareto => synthetic_pareto(&self.pareto),
        }
    }

    /// Parses a file and expands it into one spec per variant, or the base
    /// alone when there are none.
    pub fn parse_file(text: &str) -> Result<Vec<SyntheticSpec>> {
        let file = kvfile::parse(text, SYNTHETIC_HEADER).map_err(Error::Scenario)?;
        let mut errors = file.errors.clone();
        let mut base = SyntheticSpec::default();
        for (n, k, v) in &file.base {
            if let Err(e) = base.set(k, v) {
                errors.push(format!("line {n}: {k}: {e}"));
            }
        }
        let mut out = Vec::new();
        if file.variants.is_empty() {
            errors.extend(base.violations());
            out.push(base.clone());
        }
        for (_, name, entries) in &file.variants {
            let mut s = base.clone();
            s.name = format!("{}-{}", base.name, name);
            for (n, k, v) in entries {
                if let Err(e) = s.set(k, v) {
                    errors.push(format!("line {n}: {k}: {e}"));
                }
            }
            errors.extend(s.violations().into_iter().map(|e| format!("variant {name}: {e}")));
            out.push(s);
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

    #[test]
    fn variants_override_base() {
        let text = "dnsite-synthetic 1\nname = w\nwindows = 0.1, 1\nseed = 7\n[variant cbr]\nmodel = cbr\n[variant pareto]\nmodel = pareto\nshape = 1.2\n";
        let specs = SyntheticSpec::parse_file(text).unwrap();
        assert_eq!(specs.len(), 2);
        assert_eq!(specs[0].name, "w-cbr");
        assert_eq!(specs[1].model, SyntheticModel::Pareto);
        assert_eq!(specs[1].pareto.shape, 1.2);
        assert_eq!(specs[1].pareto.seed, 7);
        assert_eq!(specs[0].windows, vec![0.1, 1.0]);
    }

    #[test]
    fn every_problem_reported() {
        let Err(Error::Scenario(errs)) = SyntheticSpec::parse_file("dnsite-synthetic 1\nmodel = udp\nwindows = 0.15\nbogus = 1\n")
        else {
            panic!("expected errors")
        };
        assert_eq!(errs.len(), 3, "{errs:?}");
        let Err(Error::Scenario(errs)) = SyntheticSpec::parse_file("dnsite-synthetic 1\nwindows = 0.15\ntimescale = 0\n") else {
            panic!("expected errors")
        };
        assert_eq!(errs.len(), 2, "{errs:?}");
    }

    #[test]
    fn small_cbr_generates() {
        let mut s = SyntheticSpec::default();
        s.set("flows", "5").unwrap();
        assert!(!s.generate().unwrap().is_empty());
    }
}
