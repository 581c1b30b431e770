//! `dnsite simulate`: scenario files and synthetic window sweeps.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use dnsite_core::analysis::associate::{write_dns_log, write_flow_log};
use dnsite_core::analysis::AddressPlan;
use dnsite_core::balancer::{decision_log_csv, Policy};
use dnsite_core::sim::{self, bundled, write_trace, Scenario, ScenarioFile, SyntheticSpec, SYNTHETIC_HEADER};
use rayon::prelude::*;

use crate::output::{opt, read_input, window_label, Invalid, RunDir};
use crate::replay::Sweep;
use crate::OutArgs;

/// Query name used in generated DNS logs.
pub const LOG_QNAME: &str = "www.example.com";

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario file, or the name of a bundled one (`dnsite scenarios`).
    #[arg(long)]
    scenario: String,
    /// Overrides the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = crate::parse_policy)]
    policy: Option<Policy>,
    /// MB window in seconds.
    #[arg(long)]
    window: Option<f64>,
    /// Error averaging timescale in seconds.
    #[arg(long)]
    timescale: Option<f64>,
    /// Run only this variant.
    #[arg(long)]
    variant: Option<String>,
    /// Also write DNS and flow logs, a prefix table and the true
    /// client-to-LDNS mapping.
    #[arg(long)]
    logs: bool,
    /// Fraction of LDNS sharing the previous LDNS's AS in the logs.
    #[arg(long, default_value_t = 0.2)]
    shared_as: f64,
    /// Fraction of clients outside every prefix in the logs.
    #[arg(long, default_value_t = 0.05)]
    unmapped: f64,
    #[command(flatten)]
    out: OutArgs,
}

fn load(spec: &str) -> anyhow::Result<String> {
    let p = Path::new(spec);
    if p.exists() {
        return read_input(p);
    }
    bundled(spec)
        .map(str::to_string)
        .ok_or_else(|| Invalid(format!("`{spec}` is neither a readable file nor a bundled scenario")).into())
}

fn is_synthetic(text: &str) -> bool {
    text.lines().find(|l| !l.trim().is_empty()).map(str::trim) == Some(SYNTHETIC_HEADER)
}

fn selected(name: &str, variant: Option<&str>) -> bool {
    match variant {
        None => true,
        Some(v) => name == v || name.ends_with(&format!("-{v}")),
    }
}

fn dir_name(name: &str) -> String {
    name.replace(['/', '\\'], "_")
}

pub fn run(args: SimulateArgs) -> anyhow::Result<()> {
    let text = load(&args.scenario)?;
    if is_synthetic(&text) {
        return synthetic(&args, &text);
    }
    let file = ScenarioFile::parse(&text)?;
    let mut scenarios = file.expand()?;
    scenarios.retain(|s| selected(&s.name, args.variant.as_deref()));
    if scenarios.is_empty() {
        return Err(Invalid(format!("no variant named `{}`", args.variant.unwrap_or_default())).into());
    }
    let mut errors = Vec::new();
    for sc in &mut scenarios {
        let overrides = [
            ("seed", args.seed.map(|s| s.to_string())),
            ("policy", args.policy.map(|p| p.to_string())),
            ("window", args.window.map(|w| w.to_string())),
            ("timescale", args.timescale.map(|t| t.to_string())),
        ];
        for (k, v) in overrides {
            if let Some(v) = v {
                if let Err(e) = sc.set(k, &v) {
                    errors.push(format!("--{k}: {e}"));
                }
            }
        }
        errors.extend(sc.violations().into_iter().map(|e| format!("{}: {e}", sc.name)));
    }
    if !errors.is_empty() {
        errors.dedup();
        return Err(dnsite_core::Error::Scenario(errors).into());
    }
    let root = args.out.out.clone();
    let rows: Vec<String> = scenarios
        .par_iter()
        .map(|sc| run_one(sc, &root, &args).with_context(|| format!("scenario {}", sc.name)))
        .collect::<anyhow::Result<_>>()?;
    let mut summary =
        String::from("scenario,seed,policy,window,timescale,median_epsilon,dns_requests,flows,bytes_per_dns_request\n");
    for r in &rows {
        summary.push_str(r);
    }
    std::fs::write(root.join("summary.csv"), &summary).with_context(|| format!("writing {}", root.display()))?;
    print!("{summary}");
    Ok(())
}

fn run_one(sc: &Scenario, root: &Path, args: &SimulateArgs) -> anyhow::Result<String> {
    let out = sim::run(sc)?;
    let canonical = sc.to_text();
    let mut d = RunDir::create(root.join(dir_name(&sc.name)))?;
    d.write("scenario.scn", &canonical)?;
    d.write_with("trace.csv", |w| write_trace(&out.records, w))?;
    d.write("errors.csv", &out.errors.to_csv())?;
    d.write("decisions.csv", &decision_log_csv(&out.decisions, sc.link_count))?;
    let s = &out.summary;
    let mut st = String::new();
    writeln!(st, "scenario {}", sc.name).unwrap();
    writeln!(st, "seed {}", sc.seed).unwrap();
    writeln!(st, "dns_requests {}", s.dns_requests).unwrap();
    writeln!(st, "flows {}", s.flows).unwrap();
    for (l, b) in s.bytes_per_link.iter().enumerate() {
        writeln!(st, "bytes_link_{l} {b}").unwrap();
    }
    writeln!(st, "median_epsilon {}", opt(s.median_epsilon)).unwrap();
    writeln!(st, "bytes_per_dns_request {:.3}", s.bytes_per_dns_request).unwrap();
    writeln!(st, "realized_request_rate {:.6}", s.realized_request_rate).unwrap();
    d.write("summary.txt", &st)?;
    if args.logs {
        let plan = AddressPlan::generate(&out.population, args.shared_as, args.unmapped, sc.seed)?;
        let dns = plan.dns_log(&out.records, LOG_QNAME);
        let (flows, truth) = plan.flow_log(&out.records);
        d.write_with("dns_log.csv", |w| write_dns_log(&dns, w))?;
        d.write_with("flow_log.csv", |w| write_flow_log(&flows, w))?;
        d.write("prefixes.txt", &plan.table.to_text())?;
        let mut t = String::from("request,ldns_addr\n");
        for (i, l) in truth.iter().enumerate() {
            writeln!(t, "{i},{}", plan.ldns_addr[*l as usize]).unwrap();
        }
        d.write("truth.csv", &t)?;
    }
    d.finish("simulate", &sc.name, &canonical, sc.seed)?;
    Ok(format!(
        "{},{},{},{},{},{},{},{},{:.3}\n",
        sc.name,
        sc.seed,
        sc.policy,
        sc.window,
        sc.timescale,
        opt(s.median_epsilon),
        s.dns_requests,
        s.flows,
        s.bytes_per_dns_request
    ))
}

fn synthetic(args: &SimulateArgs, text: &str) -> anyhow::Result<()> {
    if args.policy.is_some() || args.logs {
        return Err(Invalid("synthetic sweeps always use MB and carry no LDNS logs; drop --policy/--logs".into()).into());
    }
    let mut specs = SyntheticSpec::parse_file(text)?;
    specs.retain(|s| selected(&s.name, args.variant.as_deref()));
    if specs.is_empty() {
        return Err(Invalid(format!("no variant named `{}`", args.variant.clone().unwrap_or_default())).into());
    }
    for s in &mut specs {
        if let Some(seed) = args.seed {
            s.set_seed(seed);
        }
        if let Some(w) = args.window {
            s.windows = vec![w];
        }
        if let Some(t) = args.timescale {
            s.timescale = t;
        }
    }
    let errors: Vec<String> =
        specs.iter().flat_map(|s| s.violations().into_iter().map(move |e| format!("{}: {e}", s.name))).collect();
    if !errors.is_empty() {
        return Err(dnsite_core::Error::Scenario(errors).into());
    }
    let root: PathBuf = args.out.out.clone();
    let rows: Vec<String> = specs
        .par_iter()
        .map(|s| synthetic_one(s, &root).with_context(|| format!("synthetic {}", s.name)))
        .collect::<anyhow::Result<_>>()?;
    let mut summary = String::from("scenario,W,median_epsilon\n");
    for r in &rows {
        summary.push_str(r);
    }
    std::fs::write(root.join("summary.csv"), &summary).with_context(|| format!("writing {}", root.display()))?;
    print!("{summary}");
    Ok(())
}

fn synthetic_one(s: &SyntheticSpec, root: &Path) -> anyhow::Result<String> {
    let records = s.generate()?;
    let mut d = RunDir::create(root.join(dir_name(&s.name)))?;
    d.write_with("trace.csv", |w| write_trace(&records, w))?;
    let medians = Sweep {
        records: &records,
        policy: Policy::MeasurementBased,
        link_count: s.cbr.link_count,
        timescale: s.timescale,
        seed: s.seed(),
    }
    .run(&s.windows, &mut d)?;
    d.finish("simulate", &s.name, &format!("{s:?}"), s.seed())?;
    Ok(medians.iter().map(|(w, m)| format!("{},{},{}\n", s.name, window_label(*w), opt(*m))).collect())
}
