//! Random geometric graphs: nodes uniform in `[0, L]^2`, unit communication
//! radius, no wraparound at the borders.

use std::collections::VecDeque;
use std::io::{BufRead, Write};

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};

/// Communication radius. Distances are measured in units of this radius.
pub const RADIUS: f64 = 1.0;

/// Upper bound on regeneration attempts in [`generate_connected_rgg`].
pub const MAX_CONNECT_ATTEMPTS: u32 = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    side_length: f64,
    positions: Vec<(f64, f64)>,
    adjacency: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphStats {
    /// Nodes per unit area, `n / L^2`.
    pub density: f64,
    /// Average node degree.
    pub mean_degree: f64,
    pub connected: bool,
}

impl Graph {
    /// Builds the unit-disk graph over fixed positions. Two nodes are adjacent
    /// iff their Euclidean distance is at most [`RADIUS`].
    pub fn from_positions(side_length: f64, positions: Vec<(f64, f64)>) -> Result<Self> {
        if !(side_length > 0.0) || !side_length.is_finite() {
            return Err(Error::param(format!("side length must be positive, got {side_length}")));
        }
        let n = positions.len();
        let r2 = RADIUS * RADIUS;
        let mut adjacency = vec![Vec::new(); n];
        for u in 0..n {
            let (xu, yu) = positions[u];
            for v in (u + 1)..n {
                let (xv, yv) = positions[v];
                let (dx, dy) = (xu - xv, yu - yv);
                if dx * dx + dy * dy <= r2 {
                    adjacency[u].push(v);
                    adjacency[v].push(u);
                }
            }
        }
        Ok(Graph {
            side_length,
            positions,
            adjacency,
        })
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn side_length(&self) -> f64 {
        self.side_length
    }

    pub fn positions(&self) -> &[(f64, f64)] {
        &self.positions
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.adjacency[u]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.adjacency[u].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency.iter().map(Vec::len).collect()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Edges as `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<_> = self
            .adjacency
            .iter()
            .enumerate()
            .flat_map(|(u, nbrs)| nbrs.iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
            .collect();
        edges.sort_unstable();
        edges
    }

    /// Writes the debugging dump: `n L`, then `id x y` per node, then `u v`
    /// per edge with `u < v`.
    pub fn write_dump<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{} {}", self.node_count(), self.side_length)?;
        for (id, (x, y)) in self.positions.iter().enumerate() {
            writeln!(out, "{id} {x} {y}")?;
        }
        for (u, v) in self.edges() {
            writeln!(out, "{u} {v}")?;
        }
        Ok(())
    }

    /// Reads a dump produced by [`Graph::write_dump`]. Adjacency is rebuilt
    /// from the positions and must agree with the listed edges.
    pub fn read_dump<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let bad = |line: usize, reason: &str| Error::Dump {
            line: line + 1,
            reason: reason.to_string(),
        };
        let (ln, header) = lines.next().ok_or_else(|| bad(0, "empty dump"))?;
        let header = header?;
        let mut it = header.split_whitespace();
        let n: usize = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(ln, "expected node count"))?;
        let side: f64 = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(ln, "expected side length"))?;

        let mut positions = Vec::with_capacity(n);
        for expected in 0..n {
            let (ln, line) = lines.next().ok_or_else(|| bad(n, "truncated node list"))?;
            let line = line?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 || fields[0].parse::<usize>().ok() != Some(expected) {
                return Err(bad(ln, "expected `id x y`"));
            }
            let x: f64 = fields[1].parse().map_err(|_| bad(ln, "bad x"))?;
            let y: f64 = fields[2].parse().map_err(|_| bad(ln, "bad y"))?;
            positions.push((x, y));
        }

        let mut listed = Vec::new();
        for (ln, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split_whitespace().map(str::parse::<usize>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(u)), Some(Ok(v)), None) if u < v && v < n => listed.push((u, v)),
                _ => return Err(bad(ln, "expected `u v` with u < v < n")),
            }
        }
        listed.sort_unstable();

        let graph = Graph::from_positions(side, positions)?;
        if graph.edges() != listed {
            return Err(bad(n + 1, "edge list disagrees with node positions"));
        }
        Ok(graph)
    }
}

/// Places `n` nodes independently and uniformly in `[0, L]^2`.
pub fn generate_rgg<R: Rng + ?Sized>(n: usize, side_length: f64, rng: &mut R) -> Result<Graph> {
    if n < 2 {
        return Err(Error::param(format!("need at least 2 nodes, got n={n}")));
    }
    if !(side_length > RADIUS) || !side_length.is_finite() {
        return Err(Error::param(format!(
            "side length must exceed the radius 1, got L={side_length}"
        )));
    }
    let positions = (0..n)
        .map(|_| {
            (
                rng.gen::<f64>() * side_length,
                rng.gen::<f64>() * side_length,
            )
        })
        .collect();
    Graph::from_positions(side_length, positions)
}

/// Regenerates with a fresh sub-seed until the graph is connected.
///
/// `seed_for_attempt` maps the attempt index to an RNG. Returns the graph and
/// the number of attempts used.
pub fn generate_connected_rgg<R, F>(
    n: usize,
    side_length: f64,
    mut seed_for_attempt: F,
) -> Result<(Graph, u32)>
where
    R: Rng,
    F: FnMut(u32) -> R,
{
    for attempt in 0..MAX_CONNECT_ATTEMPTS {
        let mut rng = seed_for_attempt(attempt);
        let g = generate_rgg(n, side_length, &mut rng)?;
        if is_connected(&g) {
            return Ok((g, attempt + 1));
        }
    }
    Err(Error::ConnectivityExhausted {
        attempts: MAX_CONNECT_ATTEMPTS,
        n,
        side_length,
    })
}

/// Breadth-first search from node 0.
pub fn is_connected(g: &Graph) -> bool {
    let n = g.node_count();
    if n == 0 {
        return true;
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    let mut reached = 1;
    while let Some(u) = queue.pop_front() {
        for &v in g.neighbors(u) {
            if !seen[v] {
                seen[v] = true;
                reached += 1;
                queue.push_back(v);
            }
        }
    }
    reached == n
}

pub fn graph_stats(g: &Graph) -> GraphStats {
    let n = g.node_count() as f64;
    let degree_sum: usize = g.degrees().iter().sum();
    GraphStats {
        density: n / (g.side_length * g.side_length),
        mean_degree: degree_sum as f64 / n,
        connected: is_connected(g),
    }
}

/// Picks `k` distinct nodes uniformly without replacement. Source `i` lives on
/// the `i`-th returned node.
pub fn select_sources<R: Rng + ?Sized>(g: &Graph, k: usize, rng: &mut R) -> Result<Vec<usize>> {
    let n = g.node_count();
    if k == 0 || k > n {
        return Err(Error::param(format!("source count must be in 1..={n}, got k={k}")));
    }
    Ok(index::sample(rng, n, k).into_vec())
}
