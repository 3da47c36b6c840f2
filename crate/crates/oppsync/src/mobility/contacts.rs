//! Turning position timelines into a contact trace.
//!
//! Positions are sampled on a fixed step; two live entities are in radio
//! contact while their distance stays within the range of their class pair.
//! An optional hysteresis factor makes an established contact survive until
//! the distance exceeds `range * (1 + hysteresis)`, which suppresses edge
//! flapping right at the range boundary.
//!
//! The output trace orders events at equal instants as: edge drops, node
//! departures, node arrivals, edge additions. That way an edge never
//! references a node that is not live.

use std::collections::BTreeSet;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use super::{Mover, Vec2};
use crate::sim::trace::{ContactEvent, ContactTrace, DeclaredRole, TimedContact};
use crate::versioning::ReplicaId;

/// Radio class of an entity; determines which range applies to a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotionClass {
    Ground,
    Air,
}

/// One moving node to be traced.
pub struct Entity {
    pub id: ReplicaId,
    pub role: DeclaredRole,
    pub class: MotionClass,
    pub start_ms: u64,
    /// Departure instant; None means the entity outlives the horizon.
    pub end_ms: Option<u64>,
    pub mover: Box<dyn Mover>,
}

/// Contact computation parameters.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ContactParams {
    /// Sampling step in milliseconds.
    pub step_ms: u64,
    /// Range for ground-to-ground pairs, meters.
    pub ground_range_m: f64,
    /// Range for any pair involving an airborne node, meters.
    pub air_range_m: f64,
    /// Contact-break slack as a fraction of the range; 0 disables it.
    pub hysteresis: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        ContactParams {
            step_ms: 1000,
            ground_range_m: 50.0,
            air_range_m: 200.0,
            hysteresis: 0.0,
        }
    }
}

impl ContactParams {
    fn validate(&self) -> Result<(), String> {
        if self.step_ms == 0 {
            return Err("step_ms must be positive".into());
        }
        if self.ground_range_m <= 0.0 || self.air_range_m <= 0.0 {
            return Err("transmission ranges must be positive".into());
        }
        if self.hysteresis < 0.0 || !self.hysteresis.is_finite() {
            return Err("hysteresis must be a non-negative factor".into());
        }
        Ok(())
    }

    fn range_for(&self, a: MotionClass, b: MotionClass) -> f64 {
        if a == MotionClass::Ground && b == MotionClass::Ground {
            self.ground_range_m
        } else {
            self.air_range_m
        }
    }
}

struct Track {
    id: ReplicaId,
    role: DeclaredRole,
    class: MotionClass,
    start_ms: u64,
    /// Clamped to the horizon; u64::MAX when the entity never departs.
    end_ms: u64,
    /// One slot per global sample instant; None while not live.
    positions: Vec<Option<Vec2>>,
}

/// Samples every entity and derives the contact trace up to `horizon_ms`
/// inclusive. Entities starting after the horizon are omitted entirely.
///
/// With the `parallel` feature the pairwise detection fans out over a
/// rayon pool; [`compute_contacts_serial`] always runs single-threaded
/// and produces the identical trace.
pub fn compute_contacts(
    entities: Vec<Entity>,
    horizon_ms: u64,
    params: &ContactParams,
) -> Result<ContactTrace, String> {
    compute_contacts_impl(entities, horizon_ms, params, cfg!(feature = "parallel"))
}

/// Single-threaded variant of [`compute_contacts`], for callers that
/// already parallelize at a coarser grain (and for benchmarking one
/// against the other).
pub fn compute_contacts_serial(
    entities: Vec<Entity>,
    horizon_ms: u64,
    params: &ContactParams,
) -> Result<ContactTrace, String> {
    compute_contacts_impl(entities, horizon_ms, params, false)
}

fn compute_contacts_impl(
    entities: Vec<Entity>,
    horizon_ms: u64,
    params: &ContactParams,
    parallel: bool,
) -> Result<ContactTrace, String> {
    params.validate()?;
    let mut ids = BTreeSet::new();
    for e in &entities {
        if !ids.insert(e.id.clone()) {
            return Err(format!("duplicate entity id {}", e.id));
        }
        if let Some(end) = e.end_ms {
            if end <= e.start_ms {
                return Err(format!("entity {} departs before arriving", e.id));
            }
        }
    }

    let step = params.step_ms;
    let samples = (horizon_ms / step) as usize + 1;
    let tracks: Vec<Track> = entities
        .into_iter()
        .filter(|e| e.start_ms <= horizon_ms)
        .map(|mut e| {
            let end_ms = e.end_ms.unwrap_or(u64::MAX);
            let mut positions = vec![None; samples];
            let mut advanced_to: Option<u64> = None;
            for (k, slot) in positions.iter_mut().enumerate() {
                let t = k as u64 * step;
                if t < e.start_ms || t >= end_ms {
                    continue;
                }
                let from = advanced_to.unwrap_or(e.start_ms);
                e.mover.advance((t - from) as f64 / 1000.0);
                advanced_to = Some(t);
                *slot = Some(e.mover.position());
            }
            Track {
                id: e.id,
                role: e.role,
                class: e.class,
                start_ms: e.start_ms,
                end_ms,
                positions,
            }
        })
        .collect();

    // Pairwise contact intervals. Each pair is independent, which is what
    // makes this loop worth running in parallel: it is the O(n^2 * samples)
    // part of generation. Results are collected in pair order either way,
    // so the trace does not depend on scheduling.
    let pairs: Vec<(usize, usize)> = (0..tracks.len())
        .flat_map(|i| (i + 1..tracks.len()).map(move |j| (i, j)))
        .collect();
    #[cfg(feature = "parallel")]
    let pair_events: Vec<Vec<(u64, bool)>> = if parallel {
        pairs
            .par_iter()
            .map(|&(i, j)| pair_contacts(&tracks[i], &tracks[j], step, horizon_ms, params))
            .collect()
    } else {
        pairs
            .iter()
            .map(|&(i, j)| pair_contacts(&tracks[i], &tracks[j], step, horizon_ms, params))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let pair_events: Vec<Vec<(u64, bool)>> = {
        let _ = parallel;
        pairs
            .iter()
            .map(|&(i, j)| pair_contacts(&tracks[i], &tracks[j], step, horizon_ms, params))
            .collect()
    };

    // Assemble, ordering same-instant events as ed < nd < ns < ea.
    let mut keyed: Vec<(u64, u8, usize, ContactEvent)> = Vec::new();
    for t in &tracks {
        keyed.push((
            t.start_ms,
            2,
            keyed.len(),
            ContactEvent::NodeStart {
                id: t.id.clone(),
                role: t.role,
            },
        ));
        if t.end_ms <= horizon_ms {
            keyed.push((
                t.end_ms,
                1,
                keyed.len(),
                ContactEvent::NodeStop { id: t.id.clone() },
            ));
        }
    }
    for (&(i, j), events) in pairs.iter().zip(&pair_events) {
        let (a, b) = (&tracks[i], &tracks[j]);
        for &(t, up) in events {
            let event = if up {
                ContactEvent::EdgeUp {
                    a: a.id.clone(),
                    b: b.id.clone(),
                }
            } else {
                ContactEvent::EdgeDown {
                    a: a.id.clone(),
                    b: b.id.clone(),
                }
            };
            keyed.push((t, if up { 3 } else { 0 }, keyed.len(), event));
        }
    }
    keyed.sort_by_key(|x| (x.0, x.1, x.2));
    Ok(ContactTrace {
        events: keyed
            .into_iter()
            .map(|(at_ms, _, _, event)| TimedContact { at_ms, event })
            .collect(),
    })
}

/// Contact transitions for one pair: (time, up?) entries, time-ordered.
fn pair_contacts(
    a: &Track,
    b: &Track,
    step: u64,
    horizon_ms: u64,
    params: &ContactParams,
) -> Vec<(u64, bool)> {
    let enter = params.range_for(a.class, b.class);
    let exit = enter * (1.0 + params.hysteresis);
    let mut events = Vec::new();
    let mut in_contact = false;
    for (k, (pa, pb)) in a.positions.iter().zip(&b.positions).enumerate() {
        let t = k as u64 * step;
        let (Some(pa), Some(pb)) = (pa, pb) else {
            if in_contact {
                // One of the two departed between samples; the contact ends
                // at the departure instant, not the next sample.
                let died_at = a.end_ms.min(b.end_ms);
                events.push((died_at.min(t), false));
                in_contact = false;
            }
            continue;
        };
        let d = pa.dist(*pb);
        if !in_contact && d <= enter {
            events.push((t, true));
            in_contact = true;
        } else if in_contact && d > exit {
            events.push((t, false));
            in_contact = false;
        }
    }
    if in_contact {
        // Still in contact at the last sample; close only if a departure
        // follows before the horizon runs out.
        let died_at = a.end_ms.min(b.end_ms);
        if died_at <= horizon_ms {
            events.push((died_at, false));
        }
    }
    events
}
