//! Implementations behind the subcommands. Every command reads its inputs,
//! does one job, writes its outputs under the resolved directory, and
//! prints the paths it produced.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context as _;
use oppsync::metrics::report_from_records;
use oppsync::mobility::{
    bridge, bus, churn, disaster, BridgeConfig, BusConfig, ChurnConfig, DisasterConfig, Scenario,
};
use oppsync::sim::{
    parse_log, run, validate_log, AppScenario, ContactTrace, RolePolicy, SimConfig, SimError,
};
use oppsync::sweep::relay_ratio_study;

use crate::config::{
    input, invariant, need, pick, usage, FileConfig, PropagationKind, Selection, Shape,
};
use crate::{GenArgs, ProtocolFlags, SweepArgs};

fn write_file(dir: &Path, name: &str, text: &str) -> anyhow::Result<PathBuf> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn read_file(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn gen(args: GenArgs, file: &FileConfig, out_dir: &Path) -> anyhow::Result<()> {
    let shape = need(args.shape, file.shape, "--shape")?;
    let seed = pick(args.seed, file.seed, 1);
    let replicas = args.replicas.or(file.replicas);
    let relays = args.relays.or(file.relays);
    let rate = args.rate.or(file.rate);
    let duration_s = args.duration_s.or(file.duration_s);
    let updates = args.updates.or(file.updates);
    let update_until_s = args.update_until_s.or(file.update_until_s);

    let (trace, app): Scenario = match shape {
        Shape::Churn => {
            let mut c = ChurnConfig {
                seed,
                ..ChurnConfig::default()
            };
            if let Some(n) = replicas {
                c.replicas = n;
            }
            if let Some(r) = rate {
                c.entry_rate_per_s = r;
            }
            if let Some(d) = duration_s {
                c.duration_s = d;
            }
            if let Some(u) = updates {
                c.updates_per_replica = u;
            }
            if let Some(t) = update_until_s {
                c.update_until_s = t;
            }
            churn(&c).map_err(usage)?
        }
        Shape::Bus => {
            let mut c = BusConfig {
                seed,
                ..BusConfig::default()
            };
            if let Some(n) = replicas {
                c.replicas = n;
            }
            if let Some(n) = relays {
                c.relays = n;
            }
            if let Some(d) = duration_s {
                c.duration_s = d;
            }
            if let Some(u) = updates {
                c.updates_per_replica = u;
            }
            if let Some(t) = update_until_s {
                c.update_until_s = t;
            }
            bus(&c).map_err(usage)?
        }
        Shape::Disaster => {
            let mut c = DisasterConfig {
                seed,
                ..DisasterConfig::default()
            };
            if let Some(n) = replicas {
                c.replicas = n;
            }
            if let Some(n) = relays {
                c.relays = n;
            }
            if let Some(d) = duration_s {
                c.duration_s = d;
            }
            if let Some(u) = updates {
                c.updates_per_replica = u;
            }
            if let Some(t) = update_until_s {
                c.update_until_s = t;
            }
            disaster(&c).map_err(usage)?
        }
        Shape::Bridge => {
            let mut c = BridgeConfig {
                seed,
                ..BridgeConfig::default()
            };
            if let Some(d) = duration_s {
                c.duration_s = d;
            }
            if let Some(u) = updates {
                c.updates_per_replica = u;
            }
            if let Some(t) = update_until_s {
                c.update_until_s = t;
            }
            bridge(&c).map_err(usage)?
        }
    };

    let trace_path = write_file(out_dir, "trace.txt", &trace.render())?;
    let app_path = write_file(out_dir, "app.txt", &app.render())?;
    println!(
        "wrote {} ({} events)",
        trace_path.display(),
        trace.events.len()
    );
    println!(
        "wrote {} ({} updates)",
        app_path.display(),
        app.events.len()
    );
    Ok(())
}

/// Builds the engine configuration from the flag and file layers.
pub fn build_sim_config(
    relay_ratio: Option<f64>,
    p: &ProtocolFlags,
    file: &FileConfig,
) -> SimConfig {
    let mut cfg = SimConfig {
        role_policy: match relay_ratio.or(file.relay_ratio) {
            Some(r) => RolePolicy::RelayRatio(r),
            None => RolePolicy::FromTrace,
        },
        ..SimConfig::default()
    };
    if let Some(mode) = p.mode.or(file.mode) {
        cfg.protocol.mode = mode.into();
    }
    if let Some(kind) = p.propagation.or(file.propagation) {
        cfg.protocol.propagation = match kind {
            PropagationKind::Immediate => oppsync::protocol::Propagation::Immediate,
            PropagationKind::Periodic => {
                oppsync::protocol::Propagation::Periodic(pick(p.period_ms, file.period_ms, 1000))
            }
        };
    }
    if let Some(selection) = p.selection.or(file.selection) {
        cfg.protocol.pure_greedy = selection == Selection::PureGreedy;
    }
    if let Some(payload) = p.payload.or(file.payload) {
        cfg.payload = payload;
    }
    cfg.base_latency_ms = pick(p.base_latency_ms, file.base_latency_ms, cfg.base_latency_ms);
    cfg.latency_per_kb_ms = pick(
        p.latency_per_kb_ms,
        file.latency_per_kb_ms,
        cfg.latency_per_kb_ms,
    );
    cfg.end_at_ms = p.end_at_ms.or(file.end_at_ms);
    cfg.validate_each_event = p.validate || file.validate.unwrap_or(false);
    cfg
}

fn map_sim_error(e: SimError) -> anyhow::Error {
    match e {
        SimError::Config(msg) => usage(msg),
        SimError::Scenario { .. } => input(e.to_string()),
        SimError::Invariant { .. } => invariant(e.to_string()),
    }
}

pub fn sim(
    trace: Option<PathBuf>,
    app: Option<PathBuf>,
    relay_ratio: Option<f64>,
    protocol: &ProtocolFlags,
    file: &FileConfig,
    out_dir: &Path,
) -> anyhow::Result<()> {
    let trace_path = need(trace, file.trace.clone(), "--trace")?;
    let app_path = need(app, file.app.clone(), "--app")?;
    let trace = ContactTrace::parse(&read_file(&trace_path)?)
        .map_err(|e| input(format!("{}: {e}", trace_path.display())))?;
    let app = AppScenario::parse(&read_file(&app_path)?)
        .map_err(|e| input(format!("{}: {e}", app_path.display())))?;

    let cfg = build_sim_config(relay_ratio, protocol, file);
    let out = run(&trace, &app, &cfg).map_err(map_sim_error)?;

    let log_path = write_file(out_dir, "log.txt", &out.log_text())?;
    let report = report_from_records(&out.log).map_err(|e| input(e.to_string()))?;
    let summary_path = write_file(out_dir, "summary.json", &report.summary_json())?;

    println!("wrote {} ({} records)", log_path.display(), out.log.len());
    println!("wrote {}", summary_path.display());
    let s = &report.summary;
    let latency = match s.mean_latency_ms {
        Some(ms) => format!("{ms:.0} ms"),
        None => "undefined".to_string(),
    };
    println!(
        "{} events, {} updates, mean latency {}, converged: {}",
        out.events_processed, s.updates, latency, s.converged
    );
    Ok(())
}

pub fn report(dir: Option<PathBuf>, out_dir: &Path) -> anyhow::Result<()> {
    let dir = dir.unwrap_or_else(|| out_dir.to_path_buf());
    let log_path = dir.join("log.txt");
    let records = parse_log(&read_file(&log_path)?)
        .map_err(|e| input(format!("{}: {e}", log_path.display())))?;
    let report = report_from_records(&records).map_err(|e| input(e.to_string()))?;

    for (name, text) in [
        ("latency.csv", report.latency_csv()),
        ("distance.csv", report.distance_csv()),
        ("store_hist.csv", report.store_hist_csv()),
        ("transfer_hist.csv", report.transfer_hist_csv()),
        ("summary.json", report.summary_json()),
    ] {
        let path = write_file(&dir, name, &text)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

pub fn check(dir: Option<PathBuf>, out_dir: &Path) -> anyhow::Result<()> {
    let dir = dir.unwrap_or_else(|| out_dir.to_path_buf());
    let log_path = dir.join("log.txt");
    let records = parse_log(&read_file(&log_path)?)
        .map_err(|e| input(format!("{}: {e}", log_path.display())))?;
    let report = validate_log(&records).map_err(|e| invariant(e.to_string()))?;
    println!(
        "ok: {} records, {} updates, {} syncs, {} store changes, {} delivered, {} dropped",
        report.records,
        report.updates,
        report.syncs,
        report.store_changes,
        report.messages_delivered,
        report.messages_dropped
    );
    Ok(())
}

pub fn sweep(args: SweepArgs, file: &FileConfig, out_dir: &Path) -> anyhow::Result<()> {
    let ratios = args
        .ratios
        .or_else(|| file.ratios.clone())
        .unwrap_or_else(|| vec![0.0, 0.5, 1.0]);
    let seed_count = pick(args.seeds, file.seeds, 5);
    let first_seed = pick(args.seed, file.seed, 1);
    let seeds: Vec<u64> = (first_seed..first_seed + seed_count).collect();
    for r in &ratios {
        if !(0.0..=1.0).contains(r) {
            return Err(usage(format!("relay ratio {r} outside [0, 1]")));
        }
    }

    let mut churn_cfg = ChurnConfig::default();
    if let Some(n) = args.replicas.or(file.replicas) {
        churn_cfg.replicas = n;
    }
    if let Some(r) = args.rate.or(file.rate) {
        churn_cfg.entry_rate_per_s = r;
    }
    if let Some(d) = args.duration_s.or(file.duration_s) {
        churn_cfg.duration_s = d;
    }
    if let Some(u) = args.updates.or(file.updates) {
        churn_cfg.updates_per_replica = u;
    }
    if let Some(t) = args.update_until_s.or(file.update_until_s) {
        churn_cfg.update_until_s = t;
    }

    let sim_cfg = build_sim_config(None, &args.protocol, file);
    let points = relay_ratio_study(&churn_cfg, &ratios, &seeds, &sim_cfg)
        .map_err(|e| input(format!("{}: {}", e.name, e.detail)))?;

    let mut csv = String::from(
        "ratio,seed,mean_latency_ms,max_latency_ms,undefined,mean_distance,converged,relays,relay_syncs,relay_syncs_le_one\n",
    );
    let mut rows = Vec::new();
    for p in &points {
        let s = &p.summary;
        let mean = s
            .mean_latency_ms
            .map(|v| format!("{v:.3}"))
            .unwrap_or_default();
        let max = s.max_latency_ms.map(|v| v.to_string()).unwrap_or_default();
        writeln!(
            csv,
            "{},{},{},{},{},{:.3},{},{},{},{}",
            p.ratio,
            p.seed,
            mean,
            max,
            s.undefined_latencies,
            s.mean_distance,
            s.converged,
            s.relays,
            s.relay_syncs,
            s.relay_syncs_le_one
        )
        .unwrap();
        rows.push(serde_json::json!({
            "ratio": p.ratio,
            "seed": p.seed,
            "summary": s,
        }));
    }
    let csv_path = write_file(out_dir, "sweep.csv", &csv)?;
    let json_path = write_file(
        out_dir,
        "sweep.json",
        &format!("{:#}\n", serde_json::Value::Array(rows)),
    )?;
    println!("wrote {} ({} points)", csv_path.display(), points.len());
    println!("wrote {}", json_path.display());
    Ok(())
}
