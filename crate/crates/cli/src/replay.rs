//! `dnsite replay`: window sweeps over a recorded trace.

use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use dnsite_core::balancer::{decision_log_csv, Policy};
use dnsite_core::model::stream_seed;
use dnsite_core::sim::scenario::DEFAULT_SEED;
use dnsite_core::sim::{parse_windows, read_trace, replay, ReplayConfig, TraceRecord};
use dnsite_core::Micros;
use rayon::prelude::*;

use crate::output::{opt, read_input, sha256_hex, window_label, Invalid, RunDir};
use crate::OutArgs;

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Trace CSV with LDNS attribution.
    #[arg(long)]
    trace: PathBuf,
    /// Comma-separated windows in seconds, e.g. `0.1,1,10`.
    #[arg(long, alias = "window", allow_hyphen_values = true)]
    windows: String,
    /// Error averaging timescale in seconds.
    #[arg(long, default_value_t = 20.0)]
    timescale: f64,
    #[arg(long, value_parser = crate::parse_policy, default_value = "mb")]
    policy: Policy,
    /// Seed of the balancer (matters for `random` only).
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[command(flatten)]
    out: OutArgs,
}

pub struct Sweep<'a> {
    pub records: &'a [TraceRecord],
    pub policy: Policy,
    pub link_count: usize,
    pub timescale: f64,
    pub seed: u64,
}

impl Sweep<'_> {
    /// Replays every window in parallel and writes `errors_W{w}.csv`,
    /// `decisions_W{w}.csv` and `summary.csv` into `dir`.
    pub fn run(&self, windows: &[f64], dir: &mut RunDir) -> anyhow::Result<Vec<(f64, Option<f64>)>> {
        let results: Vec<_> = windows
            .par_iter()
            .map(|&w| {
                let mut cfg = ReplayConfig::new(self.policy, Micros::from_secs_f64(w), Micros::from_secs_f64(self.timescale));
                cfg.link_count = self.link_count;
                cfg.seed = stream_seed(self.seed, "balancer", 0);
                replay(self.records, &cfg).with_context(|| format!("replaying with W = {w} s"))
            })
            .collect();
        let mut summary = String::from("W,median_epsilon\n");
        let mut medians = Vec::new();
        for (&w, res) in windows.iter().zip(results) {
            let out = res?;
            let label = window_label(w);
            dir.write(&format!("errors_W{label}.csv"), &out.errors.to_csv())?;
            dir.write(&format!("decisions_W{label}.csv"), &decision_log_csv(&out.decisions, self.link_count))?;
            let m = out.errors.median();
            writeln!(summary, "{label},{}", opt(m)).unwrap();
            medians.push((w, m));
        }
        dir.write("summary.csv", &summary)?;
        Ok(medians)
    }
}

/// Windows must be positive multiples of the 100 ms slot.
pub fn check_windows(windows: &[f64]) -> anyhow::Result<()> {
    let bad: Vec<String> = windows
        .iter()
        .filter(|&&w| {
            let steps = w / 0.1;
            !(w > 0.0 && (steps - steps.round()).abs() < 1e-6)
        })
        .map(|w| w.to_string())
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Invalid(format!("windows must be positive multiples of 0.1 s: {}", bad.join(", "))).into())
    }
}

pub fn link_count(records: &[TraceRecord]) -> usize {
    records.iter().filter_map(|r| r.link).max().map_or(2, |l| (l + 1).max(2))
}

pub fn run(args: ReplayArgs) -> anyhow::Result<()> {
    let windows = parse_windows(&args.windows).map_err(|e| Invalid(format!("--windows: {e}")))?;
    if windows.is_empty() {
        log::warn!("empty window list; nothing to replay");
        return Ok(());
    }
    check_windows(&windows)?;
    if !(args.timescale > 0.0 && args.timescale.is_finite()) {
        return Err(Invalid(format!("--timescale must be positive, got {}", args.timescale)).into());
    }
    let text = read_input(&args.trace)?;
    let records = read_trace(text.as_bytes()).with_context(|| format!("reading {}", args.trace.display()))?;
    let links = link_count(&records);
    let mut dir = RunDir::create(args.out.out)?;
    let medians = Sweep { records: &records, policy: args.policy, link_count: links, timescale: args.timescale, seed: args.seed }
        .run(&windows, &mut dir)?;
    let canonical = format!(
        "trace_sha256 = {}\nwindows = {:?}\ntimescale = {}\npolicy = {}\nlinks = {links}\n",
        sha256_hex(text.as_bytes()),
        windows,
        args.timescale,
        args.policy
    );
    let name = args.trace.display().to_string();
    let dir_path = dir.dir.clone();
    dir.finish("replay", &name, &canonical, args.seed)?;
    for (w, m) in medians {
        println!("W={} median_epsilon={}", window_label(w), opt(m));
    }
    println!("wrote {}", dir_path.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_grid() {
        assert!(check_windows(&[0.1, 0.5, 60.0]).is_ok());
        assert!(check_windows(&[0.15]).is_err());
        assert!(check_windows(&[0.0]).is_err());
    }

    #[test]
    fn links_from_trace() {
        use dnsite_core::sim::RecordKind;
        assert_eq!(link_count(&[]), 2);
        let r = TraceRecord::new(Micros::from_secs(1), RecordKind::Bytes, 3, 0, 0, 1);
        assert_eq!(link_count(&[r]), 4);
    }
}
