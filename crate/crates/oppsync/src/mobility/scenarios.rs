//! Ready-made scenario shapes combining movers, contact computation, and
//! update schedules. Each generator is a pure function of its config, so
//! the same seed always produces the same trace and scenario.
//!
//! Shapes:
//! * `churn`: a street grid with a few persistent walker replicas and a
//!   Poisson flow of pedestrians crossing the area. Pedestrians are
//!   declared `none`, so the simulator's relay-ratio policy decides which
//!   of them relay; the same trace replays under different ratios.
//! * `bus`: static replicas spread over the grid with bus-like relays
//!   looping the streets.
//! * `disaster`: free-space random waypoint, many ground replicas and a
//!   few fast airborne relays.
//! * `bridge`: two static replicas far out of mutual range and one relay
//!   shuttling between them; the minimal store-carry-forward setting.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::contacts::{compute_contacts, ContactParams, Entity, MotionClass};
use super::graph::StreetGraph;
use super::movers::{GraphWalk, PathFollower, RandomWaypoint, Stationary};
use super::Vec2;
use crate::sim::trace::{AppEvent, AppScenario, ContactTrace, DeclaredRole};
use crate::versioning::ReplicaId;

/// A generated pair of simulator inputs.
pub type Scenario = (ContactTrace, AppScenario);

fn sub_rng(master: &mut ChaCha8Rng) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(master.gen())
}

/// Uniformly spreads `count` update times per replica over
/// `[0, until_ms]`, sorted into a valid scenario.
fn schedule_updates(
    replicas: &[ReplicaId],
    count: usize,
    until_ms: u64,
    rng: &mut ChaCha8Rng,
) -> AppScenario {
    let mut events: Vec<AppEvent> = Vec::new();
    for id in replicas {
        for _ in 0..count {
            events.push(AppEvent {
                at_ms: rng.gen_range(0..=until_ms),
                replica: id.clone(),
            });
        }
    }
    events.sort_by(|a, b| (a.at_ms, &a.replica).cmp(&(b.at_ms, &b.replica)));
    AppScenario { events }
}

/// Crossing-flow scenario on a street grid.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ChurnConfig {
    pub seed: u64,
    pub duration_s: u64,
    pub grid_cols: usize,
    pub grid_rows: usize,
    pub grid_spacing_m: f64,
    /// Persistent graph-walking replicas.
    pub replicas: usize,
    pub walker_speed_mps: (f64, f64),
    pub walker_pause_s: (f64, f64),
    /// Pedestrian arrivals per second (Poisson).
    pub entry_rate_per_s: f64,
    pub ped_speed_mps: (f64, f64),
    pub updates_per_replica: usize,
    /// Updates are only issued up to this instant, leaving a cool-down.
    pub update_until_s: u64,
    pub contact: ContactParams,
}

impl Default for ChurnConfig {
    fn default() -> Self {
        ChurnConfig {
            seed: 1,
            duration_s: 1800,
            grid_cols: 4,
            grid_rows: 4,
            grid_spacing_m: 100.0,
            replicas: 5,
            walker_speed_mps: (0.3, 1.5),
            walker_pause_s: (10.0, 60.0),
            entry_rate_per_s: 0.05,
            ped_speed_mps: (0.7, 2.0),
            updates_per_replica: 10,
            update_until_s: 900,
            contact: ContactParams::default(),
        }
    }
}

/// Entry-to-exit walking routes across the grid: west to east and south to
/// north along every full street, both directions.
fn crossing_paths(graph: &StreetGraph, cols: usize, rows: usize) -> Vec<Vec<usize>> {
    let idx = |r: usize, c: usize| r * cols + c;
    let mut paths = Vec::new();
    for r in 0..rows {
        let west_east: Vec<usize> = (0..cols).map(|c| idx(r, c)).collect();
        let mut east_west = west_east.clone();
        east_west.reverse();
        paths.push(west_east);
        paths.push(east_west);
    }
    for c in 0..cols {
        let south_north: Vec<usize> = (0..rows).map(|r| idx(r, c)).collect();
        let mut north_south = south_north.clone();
        north_south.reverse();
        paths.push(south_north);
        paths.push(north_south);
    }
    let _ = graph;
    paths
}

pub fn churn(cfg: &ChurnConfig) -> Result<Scenario, String> {
    if cfg.entry_rate_per_s < 0.0 || !cfg.entry_rate_per_s.is_finite() {
        return Err("entry rate must be non-negative".into());
    }
    if cfg.grid_cols < 2 || cfg.grid_rows < 2 {
        return Err("grid must be at least 2x2".into());
    }
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let graph = Arc::new(StreetGraph::grid(
        cfg.grid_cols,
        cfg.grid_rows,
        cfg.grid_spacing_m,
    ));
    let horizon_ms = cfg.duration_s * 1000;
    let mut entities = Vec::new();

    let mut replica_ids = Vec::new();
    for i in 0..cfg.replicas {
        let id: ReplicaId = format!("r{i}").as_str().into();
        replica_ids.push(id.clone());
        entities.push(Entity {
            id,
            role: DeclaredRole::Rep,
            class: MotionClass::Ground,
            start_ms: 0,
            end_ms: None,
            mover: Box::new(GraphWalk::new(
                graph.clone(),
                cfg.walker_speed_mps,
                cfg.walker_pause_s,
                sub_rng(&mut master),
            )?),
        });
    }

    // Poisson pedestrian arrivals, each crossing on a random route.
    let paths = crossing_paths(&graph, cfg.grid_cols, cfg.grid_rows);
    let mut t_s = 0.0f64;
    let mut ped = 0usize;
    if cfg.entry_rate_per_s > 0.0 {
        loop {
            let u: f64 = master.gen_range(f64::EPSILON..1.0);
            t_s += -u.ln() / cfg.entry_rate_per_s;
            if t_s * 1000.0 >= horizon_ms as f64 {
                break;
            }
            let start_ms = (t_s * 1000.0) as u64;
            let path = &paths[master.gen_range(0..paths.len())];
            let speed = master.gen_range(cfg.ped_speed_mps.0..=cfg.ped_speed_mps.1);
            let follower = PathFollower::new(graph.waypoints(path), speed);
            let walk_ms = (follower.traversal_time_s() * 1000.0).ceil() as u64;
            entities.push(Entity {
                id: format!("p{ped}").as_str().into(),
                role: DeclaredRole::None,
                class: MotionClass::Ground,
                start_ms,
                end_ms: Some(start_ms + walk_ms.max(1)),
                mover: Box::new(follower),
            });
            ped += 1;
        }
    }

    let trace = compute_contacts(entities, horizon_ms, &cfg.contact)?;
    let app = schedule_updates(
        &replica_ids,
        cfg.updates_per_replica,
        cfg.update_until_s * 1000,
        &mut master,
    );
    Ok((trace, app))
}

/// Static replicas served by bus-like relays riding the street grid.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct BusConfig {
    pub seed: u64,
    pub duration_s: u64,
    pub grid_cols: usize,
    pub grid_rows: usize,
    pub grid_spacing_m: f64,
    pub replicas: usize,
    pub relays: usize,
    pub bus_speed_mps: (f64, f64),
    pub bus_pause_s: (f64, f64),
    pub updates_per_replica: usize,
    pub update_until_s: u64,
    pub contact: ContactParams,
}

impl Default for BusConfig {
    fn default() -> Self {
        BusConfig {
            seed: 1,
            duration_s: 1800,
            grid_cols: 5,
            grid_rows: 5,
            grid_spacing_m: 200.0,
            replicas: 8,
            relays: 3,
            bus_speed_mps: (6.0, 12.0),
            bus_pause_s: (5.0, 20.0),
            updates_per_replica: 10,
            update_until_s: 900,
            contact: ContactParams::default(),
        }
    }
}

pub fn bus(cfg: &BusConfig) -> Result<Scenario, String> {
    if cfg.grid_cols < 2 || cfg.grid_rows < 2 {
        return Err("grid must be at least 2x2".into());
    }
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let graph = Arc::new(StreetGraph::grid(
        cfg.grid_cols,
        cfg.grid_rows,
        cfg.grid_spacing_m,
    ));
    let horizon_ms = cfg.duration_s * 1000;
    let mut entities = Vec::new();

    let mut replica_ids = Vec::new();
    for i in 0..cfg.replicas {
        let id: ReplicaId = format!("r{i}").as_str().into();
        replica_ids.push(id.clone());
        // Pin each replica to a random junction.
        let at = graph.position(master.gen_range(0..graph.len()));
        entities.push(Entity {
            id,
            role: DeclaredRole::Rep,
            class: MotionClass::Ground,
            start_ms: 0,
            end_ms: None,
            mover: Box::new(Stationary(at)),
        });
    }
    for i in 0..cfg.relays {
        entities.push(Entity {
            id: format!("bus{i}").as_str().into(),
            role: DeclaredRole::Rel,
            class: MotionClass::Ground,
            start_ms: 0,
            end_ms: None,
            mover: Box::new(GraphWalk::new(
                graph.clone(),
                cfg.bus_speed_mps,
                cfg.bus_pause_s,
                sub_rng(&mut master),
            )?),
        });
    }

    let trace = compute_contacts(entities, horizon_ms, &cfg.contact)?;
    let app = schedule_updates(
        &replica_ids,
        cfg.updates_per_replica,
        cfg.update_until_s * 1000,
        &mut master,
    );
    Ok((trace, app))
}

/// Free-space random waypoint: many ground replicas, few airborne relays.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct DisasterConfig {
    pub seed: u64,
    pub duration_s: u64,
    pub area_m: (f64, f64),
    pub replicas: usize,
    pub relays: usize,
    pub ground_speed_mps: (f64, f64),
    pub ground_pause_s: (f64, f64),
    pub ground_flight_m: f64,
    pub air_speed_mps: (f64, f64),
    pub air_pause_s: (f64, f64),
    pub air_flight_m: f64,
    pub updates_per_replica: usize,
    pub update_until_s: u64,
    pub contact: ContactParams,
}

impl Default for DisasterConfig {
    fn default() -> Self {
        DisasterConfig {
            seed: 1,
            duration_s: 1800,
            area_m: (1500.0, 1500.0),
            replicas: 20,
            relays: 2,
            ground_speed_mps: (0.5, 1.5),
            ground_pause_s: (30.0, 120.0),
            ground_flight_m: 300.0,
            air_speed_mps: (5.0, 20.0),
            air_pause_s: (0.0, 10.0),
            air_flight_m: 1500.0,
            updates_per_replica: 5,
            update_until_s: 900,
            contact: ContactParams::default(),
        }
    }
}

pub fn disaster(cfg: &DisasterConfig) -> Result<Scenario, String> {
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let horizon_ms = cfg.duration_s * 1000;
    let (w, h) = cfg.area_m;
    let mut entities = Vec::new();
    let mut replica_ids = Vec::new();
    for i in 0..cfg.replicas {
        let id: ReplicaId = format!("r{i}").as_str().into();
        replica_ids.push(id.clone());
        entities.push(Entity {
            id,
            role: DeclaredRole::Rep,
            class: MotionClass::Ground,
            start_ms: 0,
            end_ms: None,
            mover: Box::new(RandomWaypoint::new(
                w,
                h,
                cfg.ground_flight_m,
                cfg.ground_speed_mps,
                cfg.ground_pause_s,
                sub_rng(&mut master),
            )),
        });
    }
    for i in 0..cfg.relays {
        entities.push(Entity {
            id: format!("uav{i}").as_str().into(),
            role: DeclaredRole::Rel,
            class: MotionClass::Air,
            start_ms: 0,
            end_ms: None,
            mover: Box::new(RandomWaypoint::new(
                w,
                h,
                cfg.air_flight_m,
                cfg.air_speed_mps,
                cfg.air_pause_s,
                sub_rng(&mut master),
            )),
        });
    }
    let trace = compute_contacts(entities, horizon_ms, &cfg.contact)?;
    let app = schedule_updates(
        &replica_ids,
        cfg.updates_per_replica,
        cfg.update_until_s * 1000,
        &mut master,
    );
    Ok((trace, app))
}

/// Two isolated static replicas bridged by one shuttling relay.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct BridgeConfig {
    pub duration_s: u64,
    /// Distance between the two replicas, meters. Must exceed every range
    /// so they can never talk directly.
    pub separation_m: f64,
    pub shuttle_speed_mps: f64,
    pub updates_per_replica: usize,
    pub update_until_s: u64,
    pub contact: ContactParams,
    pub seed: u64,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        BridgeConfig {
            duration_s: 1200,
            separation_m: 1000.0,
            shuttle_speed_mps: 10.0,
            updates_per_replica: 3,
            update_until_s: 300,
            contact: ContactParams::default(),
            seed: 1,
        }
    }
}

pub fn bridge(cfg: &BridgeConfig) -> Result<Scenario, String> {
    let reach = cfg.contact.ground_range_m.max(cfg.contact.air_range_m);
    if cfg.separation_m <= 2.0 * reach {
        return Err("separation must exceed twice the radio range".into());
    }
    if cfg.shuttle_speed_mps <= 0.0 {
        return Err("shuttle speed must be positive".into());
    }
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let horizon_ms = cfg.duration_s * 1000;
    let a = Vec2::new(0.0, 0.0);
    let b = Vec2::new(cfg.separation_m, 0.0);
    // Enough back-and-forth legs to outlast the horizon.
    let leg_s = cfg.separation_m / cfg.shuttle_speed_mps;
    let legs = (cfg.duration_s as f64 / leg_s).ceil() as usize + 1;
    let mut points = vec![a];
    for i in 0..legs {
        points.push(if i % 2 == 0 { b } else { a });
    }
    let entities = vec![
        Entity {
            id: "a".into(),
            role: DeclaredRole::Rep,
            class: MotionClass::Ground,
            start_ms: 0,
            end_ms: None,
            mover: Box::new(Stationary(a)),
        },
        Entity {
            id: "b".into(),
            role: DeclaredRole::Rep,
            class: MotionClass::Ground,
            start_ms: 0,
            end_ms: None,
            mover: Box::new(Stationary(b)),
        },
        Entity {
            id: "shuttle".into(),
            role: DeclaredRole::Rel,
            class: MotionClass::Air,
            start_ms: 0,
            end_ms: None,
            mover: Box::new(PathFollower::new(points, cfg.shuttle_speed_mps)),
        },
    ];
    let trace = compute_contacts(entities, horizon_ms, &cfg.contact)?;
    let app = schedule_updates(
        &[ReplicaId::from("a"), ReplicaId::from("b")],
        cfg.updates_per_replica,
        cfg.update_until_s * 1000,
        &mut master,
    );
    Ok((trace, app))
}
