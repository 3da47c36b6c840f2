//! Street graphs for map-constrained movement.
//!
//! The text format is an edge list with coordinates:
//!
//! ```text
//! # junction lines: <id> <x> <y>   (meters)
//! a 0 0
//! b 120 0
//! c 120 80
//! # edge lines: edge <id> <id>
//! edge a b
//! edge b c
//! ```
//!
//! Lines starting with `#` and blank lines are ignored. The keyword `edge`
//! is reserved and cannot name a junction.

use std::fmt::Write as _;

use super::Vec2;

/// An undirected street graph with junction coordinates in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct StreetGraph {
    names: Vec<String>,
    positions: Vec<Vec2>,
    adjacency: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {detail}")]
pub struct GraphParseError {
    pub line: usize,
    pub detail: String,
}

impl StreetGraph {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, node: usize) -> &str {
        &self.names[node]
    }

    pub fn position(&self, node: usize) -> Vec2 {
        self.positions[node]
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn edge_len(&self, a: usize, b: usize) -> f64 {
        self.positions[a].dist(self.positions[b])
    }

    /// True when every junction can reach every other.
    pub fn is_connected(&self) -> bool {
        if self.is_empty() {
            return true;
        }
        let mut seen = vec![false; self.len()];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(n) = stack.pop() {
            for &m in &self.adjacency[n] {
                if !seen[m] {
                    seen[m] = true;
                    count += 1;
                    stack.push(m);
                }
            }
        }
        count == self.len()
    }

    /// Shortest path by metric length, as a junction sequence including both
    /// endpoints. None when unreachable. Street graphs are small, so this is
    /// Dijkstra with a linear scan instead of a heap.
    pub fn shortest_path(&self, from: usize, to: usize) -> Option<Vec<usize>> {
        let mut dist = vec![f64::INFINITY; self.len()];
        let mut prev = vec![usize::MAX; self.len()];
        let mut done = vec![false; self.len()];
        dist[from] = 0.0;
        loop {
            let next = (0..self.len())
                .filter(|&n| !done[n] && dist[n].is_finite())
                .min_by(|&a, &b| dist[a].total_cmp(&dist[b]));
            let Some(n) = next else { break };
            if n == to {
                break;
            }
            done[n] = true;
            for &m in &self.adjacency[n] {
                let nd = dist[n] + self.edge_len(n, m);
                if nd < dist[m] {
                    dist[m] = nd;
                    prev[m] = n;
                }
            }
        }
        if dist[to].is_infinite() {
            return None;
        }
        let mut path = vec![to];
        let mut n = to;
        while n != from {
            n = prev[n];
            path.push(n);
        }
        path.reverse();
        Some(path)
    }

    /// Positions along a junction path, for handing to a path follower.
    pub fn waypoints(&self, path: &[usize]) -> Vec<Vec2> {
        path.iter().map(|&n| self.positions[n]).collect()
    }

    pub fn parse(text: &str) -> Result<StreetGraph, GraphParseError> {
        let mut names: Vec<String> = Vec::new();
        let mut positions: Vec<Vec2> = Vec::new();
        let mut edges: Vec<(usize, usize, usize)> = Vec::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = ln + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split_whitespace().collect();
            let err = |detail: String| GraphParseError { line, detail };
            if fields[0] == "edge" {
                if fields.len() != 3 {
                    return Err(err("expected: edge <id> <id>".into()));
                }
                let a = names
                    .iter()
                    .position(|n| n == fields[1])
                    .ok_or_else(|| err(format!("unknown junction {}", fields[1])))?;
                let b = names
                    .iter()
                    .position(|n| n == fields[2])
                    .ok_or_else(|| err(format!("unknown junction {}", fields[2])))?;
                if a == b {
                    return Err(err(format!("self edge on {}", fields[1])));
                }
                edges.push((line, a, b));
            } else {
                if fields.len() != 3 {
                    return Err(err("expected: <id> <x> <y>".into()));
                }
                if names.iter().any(|n| n == fields[0]) {
                    return Err(err(format!("duplicate junction {}", fields[0])));
                }
                let x: f64 = fields[1]
                    .parse()
                    .map_err(|_| err(format!("bad x coordinate {}", fields[1])))?;
                let y: f64 = fields[2]
                    .parse()
                    .map_err(|_| err(format!("bad y coordinate {}", fields[2])))?;
                if !x.is_finite() || !y.is_finite() {
                    return Err(err("coordinates must be finite".into()));
                }
                names.push(fields[0].to_string());
                positions.push(Vec2::new(x, y));
            }
        }
        let mut adjacency = vec![Vec::new(); names.len()];
        for (line, a, b) in edges {
            if adjacency[a].contains(&b) {
                return Err(GraphParseError {
                    line,
                    detail: format!("duplicate edge {} {}", names[a], names[b]),
                });
            }
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        Ok(StreetGraph {
            names,
            positions,
            adjacency,
        })
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (name, pos) in self.names.iter().zip(&self.positions) {
            writeln!(out, "{} {} {}", name, pos.x, pos.y).unwrap();
        }
        for (a, neighbors) in self.adjacency.iter().enumerate() {
            for &b in neighbors {
                if a < b {
                    writeln!(out, "edge {} {}", self.names[a], self.names[b]).unwrap();
                }
            }
        }
        out
    }

    /// Rectangular street grid: `cols` by `rows` junctions spaced `spacing`
    /// meters apart, with all axis-aligned streets. Junction `g<r>_<c>` sits
    /// at (c * spacing, r * spacing).
    pub fn grid(cols: usize, rows: usize, spacing: f64) -> StreetGraph {
        assert!(cols >= 1 && rows >= 1 && spacing > 0.0);
        let mut names = Vec::new();
        let mut positions = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                names.push(format!("g{r}_{c}"));
                positions.push(Vec2::new(c as f64 * spacing, r as f64 * spacing));
            }
        }
        let idx = |r: usize, c: usize| r * cols + c;
        let mut adjacency = vec![Vec::new(); names.len()];
        for r in 0..rows {
            for c in 0..cols {
                if c + 1 < cols {
                    adjacency[idx(r, c)].push(idx(r, c + 1));
                    adjacency[idx(r, c + 1)].push(idx(r, c));
                }
                if r + 1 < rows {
                    adjacency[idx(r, c)].push(idx(r + 1, c));
                    adjacency[idx(r + 1, c)].push(idx(r, c));
                }
            }
        }
        StreetGraph {
            names,
            positions,
            adjacency,
        }
    }
}
