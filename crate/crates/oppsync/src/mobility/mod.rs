//! Synthetic mobility: movement models, radio contact computation, and
//! ready-made scenario shapes.
//!
//! The pipeline is position-based: movers produce per-entity position
//! timelines on a common clock, and [`contacts::compute_contacts`] turns
//! pairwise distances into the edge events of a contact trace. Everything
//! is seeded, so a given configuration always yields the same trace.

pub mod contacts;
pub mod graph;
pub mod movers;
pub mod scenarios;

pub use contacts::{compute_contacts, compute_contacts_serial, ContactParams, Entity, MotionClass};
pub use graph::StreetGraph;
pub use movers::{GraphWalk, Mover, PathFollower, RandomWaypoint, Stationary};
pub use scenarios::{
    bridge, bus, churn, disaster, BridgeConfig, BusConfig, ChurnConfig, DisasterConfig, Scenario,
};

/// A point or displacement in the plane, in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dist(self, other: Vec2) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }

    /// Point a fraction `f` of the way towards `other`.
    pub fn lerp(self, other: Vec2, f: f64) -> Vec2 {
        Vec2 {
            x: self.x + (other.x - self.x) * f,
            y: self.y + (other.y - self.y) * f,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distance_and_interpolation() {
        let a = Vec2::new(0.0, 0.0);
        let b = Vec2::new(3.0, 4.0);
        assert_eq!(a.dist(b), 5.0);
        assert_eq!(a.lerp(b, 0.5), Vec2::new(1.5, 2.0));
        assert_eq!(a.lerp(b, 0.0), a);
        assert_eq!(a.lerp(b, 1.0), b);
    }
}
