//! `dnsite analyze`: LDNS/client association, TTL honoring and fits.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::net::IpAddr;
use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use dnsite_core::analysis::associate::{read_dns_log, read_flow_log};
use dnsite_core::analysis::fit::{empirical_ccdf, MIN_FIT_SAMPLES};
use dnsite_core::analysis::{associate, median_ci, min_interarrival_per_ldns, select_family, FitParams, FitResult, PrefixTable};

use crate::output::{read_input, sha256_hex, Invalid, RunDir};
use crate::OutArgs;

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// DNS log CSV `t,ldns_addr,qname`.
    #[arg(long)]
    dns_log: PathBuf,
    /// Flow log CSV `t,client_addr,bytes`.
    #[arg(long)]
    flow_log: PathBuf,
    /// Prefix table, one `PREFIX/LEN,ASN` per line.
    #[arg(long)]
    prefixes: PathBuf,
    /// True LDNS of each flow-log row, CSV `request,ldns_addr`.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// TTL against which honoring is reported, seconds.
    #[arg(long, default_value_t = 15.0)]
    ttl: f64,
    /// Confidence of the median intervals.
    #[arg(long, default_value_t = 0.95)]
    confidence: f64,
    #[command(flatten)]
    out: OutArgs,
}

fn read_truth(text: &str) -> anyhow::Result<Vec<(usize, IpAddr)>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("request,ldns_addr") {
        return Err(Invalid("truth file: expected header `request,ldns_addr`".into()).into());
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = || Invalid(format!("truth file line {}: malformed row `{line}`", i + 2));
        let (r, a) = line.trim().split_once(',').ok_or_else(bad)?;
        out.push((r.parse().map_err(|_| bad())?, a.parse().map_err(|_| bad())?));
    }
    Ok(out)
}

fn fit_rows(quantity: &str, samples: &[f64], report: &mut String, fits: &mut String) {
    let (best, other) = match select_family(samples) {
        Ok(f) => f,
        Err(e) => {
            writeln!(report, "{quantity}_fit none ({e})").unwrap();
            return;
        }
    };
    writeln!(report, "{quantity}_best_fit {}", best.family).unwrap();
    for (f, selected) in [(best, true), (other, false)] {
        writeln!(report, "{quantity}_{}_goodness {:.6}", f.family, f.goodness).unwrap();
        let (a, b) = params(&f);
        writeln!(fits, "{quantity},{},{a:.6},{b:.6},{:.6},{selected}", f.family, f.goodness).unwrap();
    }
}

fn params(f: &FitResult) -> (f64, f64) {
    match f.params {
        FitParams::Pareto { shape, scale } => (shape, scale),
        FitParams::Lognormal { mu, sigma } => (mu, sigma),
    }
}

fn ccdf_csv(samples: &[f64]) -> String {
    let mut s = String::from("x,ccdf\n");
    for (x, p) in empirical_ccdf(samples) {
        writeln!(s, "{x},{p:.6}").unwrap();
    }
    s
}

fn median_row(quantity: &str, samples: &[f64], confidence: f64, report: &mut String) {
    match median_ci(samples, confidence) {
        Ok(ci) => writeln!(
            report,
            "{quantity}_median {} ci [{}, {}] coverage {:.4}{}",
            ci.median,
            ci.lower,
            ci.upper,
            ci.coverage,
            if ci.insufficient { " insufficient" } else { "" }
        )
        .unwrap(),
        Err(e) => writeln!(report, "{quantity}_median none ({e})").unwrap(),
    }
}

pub fn run(args: AnalyzeArgs) -> anyhow::Result<()> {
    if !(args.confidence > 0.0 && args.confidence < 1.0) {
        return Err(Invalid(format!("--confidence must lie in (0, 1), got {}", args.confidence)).into());
    }
    let dns_text = read_input(&args.dns_log)?;
    let flow_text = read_input(&args.flow_log)?;
    let prefix_text = read_input(&args.prefixes)?;
    let mut dns = read_dns_log(dns_text.as_bytes()).with_context(|| format!("reading {}", args.dns_log.display()))?;
    let flows = read_flow_log(flow_text.as_bytes()).with_context(|| format!("reading {}", args.flow_log.display()))?;
    let table = PrefixTable::parse(&prefix_text).with_context(|| format!("reading {}", args.prefixes.display()))?;
    let truth = match &args.truth {
        Some(p) => Some(read_truth(&read_input(p)?).with_context(|| format!("reading {}", p.display()))?),
        None => None,
    };
    dns.sort_by_key(|e| e.t);
    let assoc = associate(&dns, &flows, &table)?;

    let mut dir = RunDir::create(args.out.out.clone())?;
    let mut a = String::from("request,t,client_addr,ldns_addr,dns_t\n");
    for p in &assoc.pairs {
        let f = &flows[p.request];
        writeln!(a, "{},{},{},{},{}", p.request, f.t, f.client, p.ldns, p.dns_t).unwrap();
    }
    dir.write("association.csv", &a)?;

    let mut report = String::new();
    writeln!(report, "total_requests {}", assoc.total_requests()).unwrap();
    writeln!(report, "pairs {}", assoc.pairs.len()).unwrap();
    writeln!(report, "ignored_no_ldns {}", assoc.ignored_no_ldns).unwrap();
    writeln!(report, "ignored_ambiguous {}", assoc.ignored_ambiguous).unwrap();
    writeln!(report, "coverage_fraction {:.6}", assoc.coverage_fraction).unwrap();
    if let Some(truth) = &truth {
        let want: HashMap<usize, IpAddr> = truth.iter().copied().collect();
        let checked = assoc.pairs.iter().filter(|p| want.contains_key(&p.request)).count();
        let correct = assoc.pairs.iter().filter(|p| want.get(&p.request) == Some(&p.ldns)).count();
        writeln!(report, "truth_checked {checked}").unwrap();
        writeln!(report, "truth_correct {correct}").unwrap();
        let acc = if checked == 0 { 0.0 } else { correct as f64 / checked as f64 };
        writeln!(report, "truth_accuracy {acc:.6}").unwrap();
    }

    let requests: Vec<_> = dns.iter().map(|e| (e.t, e.ldns)).collect();
    let ia = min_interarrival_per_ldns(&requests);
    let mut cdf = String::from("min_gap_seconds,fraction\n");
    for (g, f) in &ia.cdf {
        writeln!(cdf, "{g:.6},{f:.6}").unwrap();
    }
    dir.write("interarrival_cdf.csv", &cdf)?;
    writeln!(report, "ldns_servers {}", ia.min_gap.len() + ia.single_request.len()).unwrap();
    writeln!(report, "ldns_single_request {}", ia.single_request.len()).unwrap();
    match ia.honoring_fraction(args.ttl) {
        Some(h) => writeln!(report, "honoring_fraction_ttl_{} {h:.6}", args.ttl).unwrap(),
        None => writeln!(report, "honoring_fraction_ttl_{} none", args.ttl).unwrap(),
    }

    let mut per_ldns: BTreeMap<IpAddr, (BTreeSet<IpAddr>, usize, u64)> = BTreeMap::new();
    for p in &assoc.pairs {
        let f = &flows[p.request];
        let e = per_ldns.entry(p.ldns).or_default();
        e.0.insert(f.client);
        e.1 += 1;
        e.2 += f.bytes;
    }
    let mut c = String::from("ldns_addr,clients,requests,bytes\n");
    for (l, (clients, n, b)) in &per_ldns {
        writeln!(c, "{l},{},{n},{b}", clients.len()).unwrap();
    }
    dir.write("clients_per_ldns.csv", &c)?;
    let clients: Vec<f64> = per_ldns.values().map(|v| v.0.len() as f64).collect();

    let mut per_client: BTreeMap<IpAddr, u64> = BTreeMap::new();
    for f in &flows {
        *per_client.entry(f.client).or_default() += f.bytes;
    }
    let bytes: Vec<f64> = per_client.values().filter(|&&b| b > 0).map(|&b| b as f64).collect();

    let mut fits = String::from("quantity,family,shape_or_mu,scale_or_sigma,goodness,selected\n");
    for (q, samples) in [("clients_per_ldns", &clients), ("bytes_per_client", &bytes)] {
        writeln!(report, "{q}_samples {}", samples.len()).unwrap();
        median_row(q, samples, args.confidence, &mut report);
        if samples.len() >= MIN_FIT_SAMPLES {
            fit_rows(q, samples, &mut report, &mut fits);
        } else {
            writeln!(report, "{q}_fit none (fewer than {MIN_FIT_SAMPLES} samples)").unwrap();
        }
        dir.write(&format!("{q}_ccdf.csv"), &ccdf_csv(samples))?;
    }
    dir.write("fits.csv", &fits)?;
    dir.write("report.txt", &report)?;

    let canonical = format!(
        "dns_log_sha256 = {}\nflow_log_sha256 = {}\nprefixes_sha256 = {}\nttl = {}\nconfidence = {}\n",
        sha256_hex(dns_text.as_bytes()),
        sha256_hex(flow_text.as_bytes()),
        sha256_hex(prefix_text.as_bytes()),
        args.ttl,
        args.confidence
    );
    let name = args.flow_log.display().to_string();
    dir.finish("analyze", &name, &canonical, 0)?;
    print!("{report}");
    Ok(())
}
