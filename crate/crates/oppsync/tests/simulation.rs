//! Whole-pipeline runs: generated scenarios through the engine, logs
//! through validation and metrics, with outcomes checked against closed
//! forms or independent oracles.

use oppsync::metrics::report_from_records;
use oppsync::mobility::{bridge, churn, BridgeConfig, ChurnConfig};
use oppsync::sim::{run, validate_log, AppScenario, ContactTrace, RolePolicy, SimConfig};
use oppsync::testutil::{fuzz_scenario, replicas_mutually_reachable, FuzzParams};

fn trace(text: &str) -> ContactTrace {
    ContactTrace::parse(text).unwrap()
}

fn app(text: &str) -> AppScenario {
    AppScenario::parse(text).unwrap()
}

#[test]
fn single_hop_run_matches_the_closed_form() {
    // One update at 500 ms; the pair meets at 1000 ms. The catch-up takes
    // the vector announcement (50 ms) plus the state transfer (50 ms), so
    // replica b holds the update at exactly 1100 ms.
    let tr = trace("0 ns a rep\n0 ns b rep\n1000 ea a b\n");
    let ap = app("500 up a\n");
    let out = run(&tr, &ap, &SimConfig::default()).unwrap();
    let report = report_from_records(&out.log).unwrap();

    assert_eq!(report.summary.updates, 1);
    assert!(report.summary.converged);
    assert_eq!(report.rows.len(), 1);
    let row = &report.rows[0];
    assert_eq!(row.at_ms, 500);
    assert_eq!(
        row.latency_min_ms,
        Some(0),
        "the issuer catches up instantly"
    );
    assert_eq!(row.latency_max_ms, Some(600));
    assert_eq!(row.latency_mean_ms, Some(300.0));
    assert_eq!(row.distance_max, 1);
    assert_eq!(row.distance_mean, 0.5);
    assert_eq!(row.undefined, 0);

    // Replicas ship at most one state per episode.
    assert!(report.replica_transfers.keys().all(|&n| n <= 1));
    assert_eq!(report.summary.relay_syncs, 0);
}

#[test]
fn bridge_scenario_converges_only_through_the_relay() {
    let cfg = BridgeConfig::default();
    let (tr, ap) = bridge(&cfg).unwrap();

    // The replicas never share an edge, yet the shuttle makes them
    // mutually reachable after the last update.
    let last_update = ap.events.last().unwrap().at_ms;
    assert!(replicas_mutually_reachable(&tr, last_update));
    assert!(!tr.render().contains("ea a b") && !tr.render().contains("ea b a"));

    let sim_cfg = SimConfig {
        validate_each_event: true,
        ..SimConfig::default()
    };
    let out = run(&tr, &ap, &sim_cfg).unwrap();
    let checked = validate_log(&out.log).unwrap();
    assert_eq!(checked.updates, ap.events.len() as u64);

    let report = report_from_records(&out.log).unwrap();
    assert!(
        report.summary.converged,
        "both ends must reach the global state"
    );
    assert_eq!(report.summary.undefined_latencies, 0);
    assert!(
        report.summary.relay_syncs > 0,
        "all traffic rides the shuttle"
    );
}

#[test]
fn identical_runs_produce_identical_logs() {
    let cfg = ChurnConfig {
        duration_s: 300,
        update_until_s: 200,
        ..ChurnConfig::default()
    };
    let (tr, ap) = churn(&cfg).unwrap();
    let sim_cfg = SimConfig {
        role_policy: RolePolicy::RelayRatio(0.5),
        ..SimConfig::default()
    };
    let a = run(&tr, &ap, &sim_cfg).unwrap();
    let b = run(&tr, &ap, &sim_cfg).unwrap();
    assert_eq!(a.log_text(), b.log_text());
    assert_eq!(a.events_processed, b.events_processed);
}

#[test]
fn fuzzed_churn_passes_continuous_invariant_checks() {
    // A short smoke version of the acceptance fuzz campaign: every event
    // re-checks the store and vector invariants.
    for seed in 0..5 {
        let (tr, ap) = fuzz_scenario(&FuzzParams {
            seed,
            replicas: 6,
            relays: 8,
            events: 400,
            ..FuzzParams::default()
        });
        let cfg = SimConfig {
            validate_each_event: true,
            ..SimConfig::default()
        };
        let out = run(&tr, &ap, &cfg);
        assert!(out.is_ok(), "seed {seed}: {:?}", out.err());
        validate_log(&out.unwrap().log).unwrap();
    }
}

#[test]
fn both_protocol_modes_complete_on_churn() {
    use oppsync::protocol::{ProtocolConfig, ProtocolMode};
    let cfg = ChurnConfig {
        duration_s: 300,
        update_until_s: 200,
        ..ChurnConfig::default()
    };
    let (tr, ap) = churn(&cfg).unwrap();
    for mode in [ProtocolMode::Basic, ProtocolMode::Enhanced] {
        let sim_cfg = SimConfig {
            protocol: ProtocolConfig {
                mode,
                ..ProtocolConfig::default()
            },
            role_policy: RolePolicy::RelayRatio(1.0),
            ..SimConfig::default()
        };
        let out = run(&tr, &ap, &sim_cfg).unwrap();
        validate_log(&out.log).unwrap();
    }
}
