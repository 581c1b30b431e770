//! `dnsite serve`: the live authoritative responder.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::UdpSocket;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::Context;
use clap::Args;
use dnsite_core::balancer::{decision_log_header, decision_log_row, Policy};
use dnsite_core::dns::{serve, DnsService, MonitorFeed, NullFeed, ReplayFeed, ZoneConfig};
use dnsite_core::sim::read_trace;
use dnsite_core::Micros;

use crate::output::{read_input, Invalid, RunDir};
use crate::OutArgs;

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Zone file (header `dnsite-zone 1`).
    #[arg(long)]
    zone: PathBuf,
    #[arg(long, value_parser = crate::parse_policy)]
    policy: Option<Policy>,
    /// MB window in seconds.
    #[arg(long)]
    window: Option<f64>,
    /// UDP port; 0 picks a free one.
    #[arg(long, default_value_t = 5353)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    bind: String,
    /// Trace CSV whose byte records feed the link monitors, replayed
    /// against the service clock.
    #[arg(long)]
    feed: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    workers: usize,
    /// Stop after this many seconds instead of waiting for a signal.
    #[arg(long)]
    duration: Option<f64>,
    #[command(flatten)]
    out: OutArgs,
}

pub fn run(args: ServeArgs) -> anyhow::Result<()> {
    let zone_text = read_input(&args.zone)?;
    let mut cfg = ZoneConfig::parse(&zone_text).with_context(|| format!("reading {}", args.zone.display()))?;
    if let Some(p) = args.policy {
        cfg.policy = p;
    }
    if let Some(w) = args.window {
        cfg.window = Micros::from_secs_f64(w);
    }
    cfg.validate()?;
    let feed: Box<dyn MonitorFeed> = match &args.feed {
        Some(p) => {
            let text = read_input(p)?;
            let records = read_trace(text.as_bytes()).with_context(|| format!("reading {}", p.display()))?;
            Box::new(ReplayFeed::new(&records)?)
        }
        None => Box::new(NullFeed),
    };
    if args.workers == 0 {
        return Err(Invalid("--workers must be at least 1".into()).into());
    }
    let links = cfg.addresses.len();
    let canonical = cfg.to_text();
    let seed = cfg.seed;
    let name = cfg.zone_name.clone();
    let (service, log_rx) = DnsService::new(cfg, feed)?.with_decision_log(1 << 16);

    let mut dir = RunDir::create(args.out.out.clone())?;
    let socket = UdpSocket::bind((args.bind.as_str(), args.port))
        .with_context(|| format!("binding {}:{}", args.bind, args.port))?;
    let local = socket.local_addr()?;

    let shutdown = Arc::new(AtomicBool::new(false));
    {
        let s = Arc::clone(&shutdown);
        ctrlc::set_handler(move || s.store(true, Ordering::Relaxed)).context("installing the signal handler")?;
    }
    let log_path = dir.path("decisions.csv");
    let mut log = BufWriter::new(File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?);
    writeln!(log, "{}", decision_log_header(links))?;

    println!("listening on {local}");
    std::io::stdout().flush()?;

    let served = std::thread::scope(|s| {
        let writer = s.spawn(move || -> std::io::Result<()> {
            for d in log_rx {
                writeln!(log, "{}", decision_log_row(&d, links))?;
            }
            log.flush()
        });
        if let Some(secs) = args.duration {
            let stop = Arc::clone(&shutdown);
            s.spawn(move || {
                let until = Instant::now() + Duration::from_secs_f64(secs.max(0.0));
                while !stop.load(Ordering::Relaxed) && Instant::now() < until {
                    std::thread::sleep(Duration::from_millis(20));
                }
                stop.store(true, Ordering::Relaxed);
            });
        }
        let res = serve(&service, &socket, args.workers, &shutdown);
        let stats = service.stats_text();
        // closes the decision log channel
        drop(service);
        let written = writer.join().expect("decision log writer panicked");
        (res, stats, written)
    });
    let (res, stats, written) = served;
    written.with_context(|| format!("writing {}", log_path.display()))?;
    dir.add_output("decisions.csv");
    dir.write("stats.txt", &stats)?;
    dir.finish("serve", &name, &canonical, seed)?;
    res?;
    print!("{stats}");
    Ok(())
}
