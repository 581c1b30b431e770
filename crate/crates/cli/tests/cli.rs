use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::net::{IpAddr, Ipv4Addr, SocketAddr, UdpSocket};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::time::Duration;

use dnsite_core::analysis::associate::{read_dns_log, read_flow_log};
use dnsite_core::analysis::{median, PrefixTable};
use dnsite_core::dns::{parse_response, serialize_query, DnsQuery, TYPE_A};
use dnsite_core::monitor::ErrorSeries;
use dnsite_core::sim::read_trace;
use tempfile::TempDir;

const ADDR0: Ipv4Addr = Ipv4Addr::new(192, 0, 2, 1);
const ADDR1: Ipv4Addr = Ipv4Addr::new(198, 51, 100, 1);

fn dnsite(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dnsite"))
        .args(args)
        .env_remove("DNSITE_OUT")
        .output()
        .expect("running dnsite")
}

fn ok(args: &[&str]) -> String {
    let out = dnsite(args);
    assert!(
        out.status.success(),
        "dnsite {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn median_of(errors_csv: &Path) -> f64 {
    let rows = ErrorSeries::from_csv(&fs::read_to_string(errors_csv).unwrap()).unwrap();
    median(&rows.iter().map(|r| r.1).collect::<Vec<_>>()).unwrap()
}

/// `key value` lines of a report.
fn report(path: &Path) -> HashMap<String, String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter_map(|l| l.split_once(' ').map(|(k, v)| (k.to_string(), v.to_string())))
        .collect()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn filesize_errors_grow_with_file_size() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("fs");
    ok(&["simulate", "--scenario", "fig_filesize", "--out", s(&out)]);
    let small = median_of(&out.join("filesize-fixed30k/errors.csv"));
    let large = median_of(&out.join("filesize-fixed625k/errors.csv"));
    assert!(small < large, "30 KB {small} vs 625 KB {large}");
}

#[test]
fn ttl_errors_rise_then_flatten() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("ttl");
    ok(&["simulate", "--scenario", "fig_ttl", "--out", s(&out)]);
    let m: Vec<f64> = ["1", "5", "15", "60", "600"]
        .iter()
        .map(|t| median_of(&out.join(format!("ttl-ttl{t}/errors.csv"))))
        .collect();
    assert!(m[0] < m[1] && m[1] < m[2], "no rise over 1, 5, 15 s: {m:?}");
    let flat = (m[3] - m[4]).abs() / m[3].min(m[4]);
    assert!(flat < 0.10, "60 s vs 600 s differ by {flat}: {m:?}");
}

#[test]
fn same_seed_gives_identical_files() {
    let tmp = TempDir::new().unwrap();
    let run = |name: &str, seed: &str, extra: &[&str]| {
        let out = tmp.path().join(name);
        let mut args = vec!["simulate", "--scenario", "fig_wndsize", "--variant", "mb1", "--seed", seed, "--out", s(&out)];
        args.extend_from_slice(extra);
        ok(&args);
        out.join("wndsize-mb1")
    };
    let a = run("a", "11", &[]);
    let b = run("b", "11", &[]);
    for f in ["trace.csv", "errors.csv", "decisions.csv", "summary.txt", "scenario.scn"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let digest = |d: &Path| -> String {
        let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("manifest.json")).unwrap()).unwrap();
        m["scenario_digest"].as_str().unwrap().to_string()
    };
    assert_eq!(digest(&a), digest(&b));
    let c = run("c", "11", &["--window", "2"]);
    assert_ne!(digest(&a), digest(&c));
    let d = run("d", "12", &[]);
    assert_ne!(digest(&a), digest(&d));
}

#[test]
fn manifest_lists_every_output() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("m");
    ok(&["simulate", "--scenario", "fig_ttl", "--variant", "ttl5", "--seed", "2", "--out", s(&out)]);
    let dir = out.join("ttl-ttl5");
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 2);
    assert_eq!(m["version"], env!("CARGO_PKG_VERSION"));
    assert!(m["wall_clock_secs"].as_f64().unwrap() >= 0.0);
    assert_eq!(m["scenario_digest"].as_str().unwrap().len(), 64);
    let outputs = m["outputs"].as_array().unwrap();
    for o in outputs {
        assert!(dir.join(o.as_str().unwrap()).exists(), "{o} missing");
    }
    let mut listed: Vec<_> = outputs.iter().map(|o| o.as_str().unwrap().to_string()).collect();
    let mut present: Vec<_> = fs::read_dir(&dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    listed.sort();
    present.sort();
    assert_eq!(listed, present);
}

#[test]
fn csv_outputs_parse_back() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("p");
    ok(&["simulate", "--scenario", "fig_clientrate", "--variant", "ldns10", "--logs", "--out", s(&out)]);
    let dir = out.join("clientrate-ldns10");
    let trace = read_trace(BufReader::new(fs::File::open(dir.join("trace.csv")).unwrap())).unwrap();
    assert!(!trace.is_empty());
    let errors = ErrorSeries::from_csv(&fs::read_to_string(dir.join("errors.csv")).unwrap()).unwrap();
    assert!(!errors.is_empty());
    let decisions = fs::read_to_string(dir.join("decisions.csv")).unwrap();
    let mut lines = decisions.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header[..4], ["t_seconds", "ldns_id", "chosen_link", "advertised_ttl"]);
    let mut rows = 0;
    for l in lines {
        let f: Vec<&str> = l.split(',').collect();
        assert_eq!(f.len(), header.len(), "{l}");
        assert!(f[0].parse::<f64>().is_ok() && f[2].parse::<usize>().unwrap() < 2 && f[3].parse::<u32>().is_ok());
        rows += 1;
    }
    let requests = trace.iter().filter(|r| r.kind.as_str() == "dns_request").count();
    assert_eq!(rows, requests);
    let dns = read_dns_log(fs::read_to_string(dir.join("dns_log.csv")).unwrap().as_bytes()).unwrap();
    assert_eq!(dns.len(), requests);
    let flows = read_flow_log(fs::read_to_string(dir.join("flow_log.csv")).unwrap().as_bytes()).unwrap();
    assert_eq!(flows.len(), trace.iter().filter(|r| r.kind.as_str() == "flow_start").count());
    assert!(!PrefixTable::parse(&fs::read_to_string(dir.join("prefixes.txt")).unwrap()).unwrap().is_empty());

    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert_eq!(
        lines.next().unwrap(),
        "scenario,seed,policy,window,timescale,median_epsilon,dns_requests,flows,bytes_per_dns_request"
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "clientrate-ldns10");
    assert_eq!(row[6].parse::<usize>().unwrap(), requests);
    assert!((row[5].parse::<f64>().unwrap() - median_of(&dir.join("errors.csv"))).abs() < 1e-6);
}

#[test]
fn invalid_scenario_lists_every_violation() {
    let tmp = TempDir::new().unwrap();
    let f = write(tmp.path(), "bad.scn", "dnsite-scenario 1\nduration = -1\nwindow = 0.15\nbogus = 2\n");
    let out = dnsite(&["simulate", "--scenario", s(&f), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    for key in ["duration", "window", "bogus"] {
        assert!(err.contains(key), "{key} not reported: {err}");
    }
    assert_eq!(dnsite(&["simulate", "--scenario", "no_such_scenario"]).status.code(), Some(2));
    assert_eq!(dnsite(&["simulate", "--scenario", "fig_ttl", "--policy", "fastest"]).status.code(), Some(2));
    assert_eq!(dnsite(&["simulate"]).status.code(), Some(2));
}

#[test]
fn replay_summary_and_self_replay() {
    let tmp = TempDir::new().unwrap();
    let sim = tmp.path().join("sim");
    ok(&["simulate", "--scenario", "fig_wndsize", "--variant", "mb10", "--seed", "5", "--out", s(&sim)]);
    let run_dir = sim.join("wndsize-mb10");
    let original = median_of(&run_dir.join("errors.csv"));
    let rep = tmp.path().join("rep");
    ok(&[
        "replay",
        "--trace",
        s(&run_dir.join("trace.csv")),
        "--windows",
        "0.1,1,10,60",
        "--seed",
        "5",
        "--out",
        s(&rep),
    ]);
    let summary = fs::read_to_string(rep.join("summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert_eq!(lines.next(), Some("W,median_epsilon"));
    let rows: Vec<(String, f64)> = lines
        .map(|l| {
            let (w, m) = l.split_once(',').unwrap();
            (w.to_string(), m.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.iter().map(|r| r.0.as_str()).collect::<Vec<_>>(), ["0.1", "1", "10", "60"]);
    for (w, m) in &rows {
        assert!((median_of(&rep.join(format!("errors_W{w}.csv"))) - m).abs() < 1e-6);
    }
    let replayed = rows[2].1;
    assert!((replayed - original).abs() / original < 0.05, "self-replay {replayed} vs run {original}");
}

#[test]
fn replay_degenerate_inputs() {
    let tmp = TempDir::new().unwrap();
    let sim = tmp.path().join("sim");
    ok(&["simulate", "--scenario", "fig_clientrate", "--variant", "ldns10", "--out", s(&sim)]);
    let trace = sim.join("clientrate-ldns10/trace.csv");

    let out = tmp.path().join("empty");
    let r = dnsite(&["replay", "--trace", s(&trace), "--windows", "", "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&r.stderr).contains("empty window list"));
    assert!(!out.exists());

    let text = fs::read_to_string(&trace).unwrap();
    let mut stripped = String::new();
    for (i, l) in text.lines().enumerate() {
        let mut f: Vec<&str> = l.split(',').collect();
        if i > 0 {
            f[3] = "";
        }
        stripped.push_str(&f.join(","));
        stripped.push('\n');
    }
    let bare = write(tmp.path(), "bare.csv", &stripped);
    let r = dnsite(&["replay", "--trace", s(&bare), "--windows", "1", "--out", s(&tmp.path().join("x"))]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("LDNS attribution"), "{}", String::from_utf8_lossy(&r.stderr));

    let r = dnsite(&["replay", "--trace", s(&trace), "--windows", "0.15"]);
    assert_eq!(r.status.code(), Some(2));
    let r = dnsite(&["replay", "--trace", s(&tmp.path().join("missing.csv")), "--windows", "1"]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn analyze_recovers_ground_truth() {
    let tmp = TempDir::new().unwrap();
    let sim = tmp.path().join("sim");
    ok(&["simulate", "--scenario", "fig_clientrate", "--variant", "ldns45", "--logs", "--out", s(&sim)]);
    let d = sim.join("clientrate-ldns45");
    let an = tmp.path().join("an");
    ok(&[
        "analyze",
        "--dns-log",
        s(&d.join("dns_log.csv")),
        "--flow-log",
        s(&d.join("flow_log.csv")),
        "--prefixes",
        s(&d.join("prefixes.txt")),
        "--truth",
        s(&d.join("truth.csv")),
        "--out",
        s(&an),
    ]);
    let r = report(&an.join("report.txt"));
    let n = |k: &str| r[k].parse::<f64>().unwrap();
    assert!(n("pairs") > 0.0);
    assert_eq!(n("truth_checked"), n("pairs"));
    assert_eq!(n("truth_correct"), n("pairs"));
    assert_eq!(n("pairs") + n("ignored_no_ldns") + n("ignored_ambiguous"), n("total_requests"));
    assert!((n("coverage_fraction") - n("pairs") / n("total_requests")).abs() < 1e-6);
    let assoc = fs::read_to_string(an.join("association.csv")).unwrap();
    assert_eq!(assoc.lines().count() as f64, n("pairs") + 1.0);
    let cdf = fs::read_to_string(an.join("interarrival_cdf.csv")).unwrap();
    let last = cdf.lines().last().unwrap();
    assert!(last.ends_with(",1.000000"), "{last}");
}

#[test]
fn analyze_prefers_pareto_for_pareto_clients() {
    let tmp = TempDir::new().unwrap();
    let scn = write(
        tmp.path(),
        "pareto.scn",
        "dnsite-scenario 1\nname = pc\nldns_count = 300\nhidden_clients = pareto 1.2 1 200\nduration = 300\nsleep = exp 20\nsize = fixed 30000\n",
    );
    let sim = tmp.path().join("sim");
    ok(&["simulate", "--scenario", s(&scn), "--logs", "--shared-as", "0", "--unmapped", "0", "--out", s(&sim)]);
    let d = sim.join("pc");
    let an = tmp.path().join("an");
    ok(&[
        "analyze",
        "--dns-log",
        s(&d.join("dns_log.csv")),
        "--flow-log",
        s(&d.join("flow_log.csv")),
        "--prefixes",
        s(&d.join("prefixes.txt")),
        "--out",
        s(&an),
    ]);
    let r = report(&an.join("report.txt"));
    assert_eq!(r["clients_per_ldns_best_fit"], "pareto", "{r:?}");
    let g = |f: &str| r[&format!("clients_per_ldns_{f}_goodness")].parse::<f64>().unwrap();
    assert!(g("pareto") < g("lognormal"));
    let fits = fs::read_to_string(an.join("fits.csv")).unwrap();
    assert!(fits.lines().any(|l| l.starts_with("clients_per_ldns,pareto,") && l.ends_with(",true")), "{fits}");
}

#[test]
fn analyze_empty_flow_log() {
    let tmp = TempDir::new().unwrap();
    let dns = write(tmp.path(), "dns.csv", "t,ldns_addr,qname\n1.0,10.0.0.1,www.example.com\n");
    let flows = write(tmp.path(), "flows.csv", "t,client_addr,bytes\n");
    let pfx = write(tmp.path(), "pfx.txt", "10.0.0.0/24,64512\n");
    let an = tmp.path().join("an");
    ok(&["analyze", "--dns-log", s(&dns), "--flow-log", s(&flows), "--prefixes", s(&pfx), "--out", s(&an)]);
    let r = report(&an.join("report.txt"));
    assert_eq!(r["pairs"], "0");
    assert_eq!(r["coverage_fraction"], "0.000000");
    let bad = write(tmp.path(), "bad.csv", "time,who\n");
    let out = dnsite(&["analyze", "--dns-log", s(&dns), "--flow-log", s(&bad), "--prefixes", s(&pfx), "--out", s(&an)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synthetic_sweep_writes_per_window_series() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("udp");
    ok(&["simulate", "--scenario", "fig_wnd_udp", "--variant", "cbr", "--out", s(&out)]);
    let dir = out.join("wnd-udp-cbr");
    let summary = fs::read_to_string(dir.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 7);
    for w in ["0.1", "0.5", "1", "2", "5", "10"] {
        assert!(dir.join(format!("errors_W{w}.csv")).exists());
    }
    let top = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(top.starts_with("scenario,W,median_epsilon\n"));
}

struct Server {
    child: Child,
    addr: SocketAddr,
    out: PathBuf,
}

impl Server {
    fn start(dir: &Path, extra: &[&str]) -> Server {
        let zone = write(dir, "zone.txt", &format!("dnsite-zone 1\nzone = www.example.com\naddresses = {ADDR0},{ADDR1}\n"));
        let out = dir.join("serve");
        let mut args = vec!["serve", "--zone", s(&zone), "--port", "0", "--out", s(&out)];
        args.extend_from_slice(extra);
        let mut child = Command::new(env!("CARGO_BIN_EXE_dnsite"))
            .args(&args)
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .unwrap();
        let mut line = String::new();
        BufReader::new(child.stdout.as_mut().unwrap()).read_line(&mut line).unwrap();
        let addr = line.trim().strip_prefix("listening on ").unwrap_or_else(|| panic!("unexpected `{line}`")).parse().unwrap();
        Server { child, addr, out }
    }

    fn ask(&self, from: Ipv4Addr, id: u16) -> Ipv4Addr {
        let sock = UdpSocket::bind((from, 0)).unwrap();
        sock.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
        sock.send_to(&serialize_query(&DnsQuery::new(id, "www.example.com", TYPE_A)), self.addr).unwrap();
        let mut buf = [0u8; 512];
        let (n, _) = sock.recv_from(&mut buf).unwrap();
        let r = parse_response(&buf[..n]).unwrap();
        assert_eq!(r.id, id);
        assert!(r.qr && r.aa && r.rcode == 0);
        assert_eq!(r.answers.len(), 1);
        let rd: [u8; 4] = r.answers[0].rdata[..].try_into().unwrap();
        Ipv4Addr::from(rd)
    }

    fn interrupt(mut self) -> PathBuf {
        let pid = self.child.id().to_string();
        assert!(Command::new("kill").args(["-INT", &pid]).status().unwrap().success());
        let status = self.child.wait().unwrap();
        assert!(status.success(), "serve exited with {status}");
        self.out
    }
}

#[test]
fn serve_round_robin_splits_sources_evenly() {
    let tmp = TempDir::new().unwrap();
    let srv = Server::start(tmp.path(), &["--policy", "rr"]);
    let answers: Vec<Ipv4Addr> = (1..=10).map(|i| srv.ask(Ipv4Addr::new(127, 0, 0, i as u8), i)).collect();
    assert_eq!(answers.iter().filter(|&&a| a == ADDR0).count(), 5);
    assert_eq!(answers.iter().filter(|&&a| a == ADDR1).count(), 5);
    let out = srv.interrupt();
    let log = fs::read_to_string(out.join("decisions.csv")).unwrap();
    assert_eq!(log.lines().count(), 11);
    let stats = report(&out.join("stats.txt"));
    assert_eq!(stats["queries_total"], "10");
    assert_eq!(stats["decisions_link_0"], "5");
    assert!(out.join("manifest.json").exists());
}

#[test]
fn serve_mb_avoids_the_loaded_link() {
    let tmp = TempDir::new().unwrap();
    let feed = write(
        tmp.path(),
        "feed.csv",
        "t,kind,link,ldns_id,client_id,bytes\n0.000000,bytes,0,0,0,5000000\n0.000000,bytes,1,0,0,1000\n",
    );
    let srv = Server::start(tmp.path(), &["--policy", "mb", "--window", "60", "--feed", s(&feed)]);
    for i in 1..=8u16 {
        assert_eq!(srv.ask(Ipv4Addr::LOCALHOST, i), ADDR1);
    }
    srv.interrupt();
}

#[test]
fn serve_stops_after_duration_and_reports_bind_failure() {
    let tmp = TempDir::new().unwrap();
    let zone = write(tmp.path(), "zone.txt", &format!("dnsite-zone 1\nzone = www.example.com\naddresses = {ADDR0},{ADDR1}\n"));
    let out = tmp.path().join("o");
    let r = dnsite(&["serve", "--zone", s(&zone), "--port", "0", "--duration", "0.2", "--out", s(&out)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(out.join("stats.txt").exists() && out.join("decisions.csv").exists());

    let taken = UdpSocket::bind((IpAddr::V4(Ipv4Addr::LOCALHOST), 0)).unwrap();
    let port = taken.local_addr().unwrap().port().to_string();
    let r = dnsite(&["serve", "--zone", s(&zone), "--port", &port, "--duration", "0.2", "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&r.stderr).contains("binding"));

    let bad = write(tmp.path(), "bad.txt", "dnsite-zone 1\naddresses = 1.2.3\n");
    let r = dnsite(&["serve", "--zone", s(&bad), "--port", "0"]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn scenarios_lists_bundled_files() {
    let list = ok(&["scenarios"]);
    assert_eq!(list.lines().count(), 8);
    assert!(ok(&["scenarios", "fig_ttl"]).starts_with("dnsite-scenario 1"));
    assert_eq!(dnsite(&["scenarios", "nope"]).status.code(), Some(2));
}
