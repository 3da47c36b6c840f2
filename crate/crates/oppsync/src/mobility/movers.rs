//! Movement models. Each mover owns its random state, so entities evolve
//! independently and a fixed seed reproduces the exact same trajectory.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::graph::StreetGraph;
use super::Vec2;

/// Something that has a position and can be advanced through time.
pub trait Mover: Send {
    fn position(&self) -> Vec2;
    /// Advances the trajectory by `dt_s` seconds.
    fn advance(&mut self, dt_s: f64);
}

/// A fixed installation.
pub struct Stationary(pub Vec2);

impl Mover for Stationary {
    fn position(&self) -> Vec2 {
        self.0
    }

    fn advance(&mut self, _dt_s: f64) {}
}

/// Classic random waypoint over a rectangle: pick a destination at most
/// `max_flight_m` away, fly to it at a uniformly drawn speed, pause, repeat.
pub struct RandomWaypoint {
    width: f64,
    height: f64,
    max_flight_m: f64,
    speed_mps: (f64, f64),
    pause_s: (f64, f64),
    pos: Vec2,
    target: Vec2,
    speed: f64,
    pause_left: f64,
    rng: ChaCha8Rng,
}

impl RandomWaypoint {
    pub fn new(
        width: f64,
        height: f64,
        max_flight_m: f64,
        speed_mps: (f64, f64),
        pause_s: (f64, f64),
        mut rng: ChaCha8Rng,
    ) -> Self {
        assert!(width > 0.0 && height > 0.0 && max_flight_m > 0.0);
        assert!(speed_mps.0 > 0.0 && speed_mps.1 >= speed_mps.0);
        assert!(pause_s.0 >= 0.0 && pause_s.1 >= pause_s.0);
        let pos = Vec2::new(rng.gen_range(0.0..width), rng.gen_range(0.0..height));
        let mut mover = RandomWaypoint {
            width,
            height,
            max_flight_m,
            speed_mps,
            pause_s,
            pos,
            target: pos,
            speed: speed_mps.0,
            pause_left: 0.0,
            rng,
        };
        mover.pick_leg();
        mover
    }

    fn pick_leg(&mut self) {
        // Uniform over the rectangle, restricted to the flight radius by
        // rejection. For tiny radii fall back to a polar draw clamped to
        // the area, trading exact uniformity for bounded work.
        let mut target = None;
        for _ in 0..1000 {
            let p = Vec2::new(
                self.rng.gen_range(0.0..self.width),
                self.rng.gen_range(0.0..self.height),
            );
            if self.pos.dist(p) <= self.max_flight_m {
                target = Some(p);
                break;
            }
        }
        self.target = target.unwrap_or_else(|| {
            let angle = self.rng.gen_range(0.0..std::f64::consts::TAU);
            let r = self.rng.gen_range(0.0..=self.max_flight_m);
            Vec2::new(
                (self.pos.x + r * angle.cos()).clamp(0.0, self.width),
                (self.pos.y + r * angle.sin()).clamp(0.0, self.height),
            )
        });
        self.speed = self.rng.gen_range(self.speed_mps.0..=self.speed_mps.1);
        self.pause_left = self.rng.gen_range(self.pause_s.0..=self.pause_s.1);
    }
}

impl Mover for RandomWaypoint {
    fn position(&self) -> Vec2 {
        self.pos
    }

    fn advance(&mut self, dt_s: f64) {
        let mut left = dt_s;
        while left > 1e-9 {
            let to_target = self.pos.dist(self.target);
            if to_target > 1e-9 {
                let travel_time = to_target / self.speed;
                if travel_time > left {
                    self.pos = self.pos.lerp(self.target, left * self.speed / to_target);
                    return;
                }
                self.pos = self.target;
                left -= travel_time;
            } else if self.pause_left > left {
                self.pause_left -= left;
                return;
            } else {
                left -= self.pause_left;
                self.pause_left = 0.0;
                self.pick_leg();
            }
        }
    }
}

/// Wanders a street graph: walk an edge, rest at the junction, pick the
/// next edge at random (avoiding an immediate U-turn where possible).
pub struct GraphWalk {
    graph: Arc<StreetGraph>,
    from: usize,
    to: usize,
    progress_m: f64,
    speed_mps: (f64, f64),
    speed: f64,
    pause_s: (f64, f64),
    pause_left: f64,
    rng: ChaCha8Rng,
}

impl GraphWalk {
    /// Starts at a random junction. The graph must be connected so every
    /// walker can in principle meet every other.
    pub fn new(
        graph: Arc<StreetGraph>,
        speed_mps: (f64, f64),
        pause_s: (f64, f64),
        mut rng: ChaCha8Rng,
    ) -> Result<Self, String> {
        if graph.len() < 2 {
            return Err("street graph needs at least two junctions".into());
        }
        if !graph.is_connected() {
            return Err("street graph is not connected".into());
        }
        assert!(speed_mps.0 > 0.0 && speed_mps.1 >= speed_mps.0);
        assert!(pause_s.0 >= 0.0 && pause_s.1 >= pause_s.0);
        let start = rng.gen_range(0..graph.len());
        let mut walk = GraphWalk {
            graph,
            from: start,
            to: start,
            progress_m: 0.0,
            speed_mps,
            speed: speed_mps.0,
            pause_s,
            pause_left: 0.0,
            rng,
        };
        walk.pick_edge(start);
        Ok(walk)
    }

    fn pick_edge(&mut self, arrived_at: usize) {
        let came_from = self.from;
        let neighbors = self.graph.neighbors(arrived_at);
        let next = match neighbors.len() {
            0 => arrived_at,
            1 => neighbors[0],
            _ => {
                // Uniform over the other directions.
                let options: Vec<usize> = neighbors
                    .iter()
                    .copied()
                    .filter(|&n| n != came_from)
                    .collect();
                options[self.rng.gen_range(0..options.len())]
            }
        };
        self.from = arrived_at;
        self.to = next;
        self.progress_m = 0.0;
        self.speed = self.rng.gen_range(self.speed_mps.0..=self.speed_mps.1);
        self.pause_left = self.rng.gen_range(self.pause_s.0..=self.pause_s.1);
    }
}

impl Mover for GraphWalk {
    fn position(&self) -> Vec2 {
        let a = self.graph.position(self.from);
        let b = self.graph.position(self.to);
        let len = a.dist(b);
        if len < 1e-9 {
            return a;
        }
        a.lerp(b, (self.progress_m / len).min(1.0))
    }

    fn advance(&mut self, dt_s: f64) {
        let mut left = dt_s;
        // Degenerate graphs (zero-length edges, zero pauses) could cycle
        // without consuming time; cap the junction transitions per call.
        let mut hops = 0;
        while left > 1e-9 && hops < 100_000 {
            if self.pause_left > 1e-9 {
                if self.pause_left > left {
                    self.pause_left -= left;
                    return;
                }
                left -= self.pause_left;
                self.pause_left = 0.0;
                continue;
            }
            let edge_len = self.graph.edge_len(self.from, self.to);
            let remaining = edge_len - self.progress_m;
            let travel_time = remaining / self.speed;
            if travel_time > left {
                self.progress_m += left * self.speed;
                return;
            }
            left -= travel_time;
            let arrived = self.to;
            self.pick_edge(arrived);
            hops += 1;
        }
    }
}

/// Follows a fixed polyline at constant speed, then stays at the end. Used
/// for through-traffic that enters, crosses, and leaves.
pub struct PathFollower {
    points: Vec<Vec2>,
    leg: usize,
    progress_m: f64,
    speed: f64,
}

impl PathFollower {
    pub fn new(points: Vec<Vec2>, speed_mps: f64) -> Self {
        assert!(!points.is_empty() && speed_mps > 0.0);
        PathFollower {
            points,
            leg: 0,
            progress_m: 0.0,
            speed: speed_mps,
        }
    }

    /// Total time to walk the whole path, in seconds.
    pub fn traversal_time_s(&self) -> f64 {
        let length: f64 = self.points.windows(2).map(|w| w[0].dist(w[1])).sum();
        length / self.speed
    }

    pub fn done(&self) -> bool {
        self.leg + 1 >= self.points.len()
    }
}

impl Mover for PathFollower {
    fn position(&self) -> Vec2 {
        if self.done() {
            return *self.points.last().unwrap();
        }
        let a = self.points[self.leg];
        let b = self.points[self.leg + 1];
        let len = a.dist(b);
        if len < 1e-9 {
            return a;
        }
        a.lerp(b, (self.progress_m / len).min(1.0))
    }

    fn advance(&mut self, dt_s: f64) {
        let mut left = dt_s;
        while left > 1e-9 && !self.done() {
            let len = self.points[self.leg].dist(self.points[self.leg + 1]);
            let remaining = len - self.progress_m;
            let travel_time = remaining / self.speed;
            if travel_time > left {
                self.progress_m += left * self.speed;
                return;
            }
            left -= travel_time;
            self.leg += 1;
            self.progress_m = 0.0;
        }
    }
}
