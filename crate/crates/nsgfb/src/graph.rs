//! Simple connected graphs: construction, ingestion and the neighborhood
//! services (geodesic balls, growth profiles) that the distributed
//! machinery is built on.
//!
//! Vertices are dense `0..n` ids. Graphs are undirected, unweighted,
//! without self-loops or multi-edges, every vertex has degree >= 1 and
//! the graph is connected, so geodesic distances are always finite.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// How a graph instance came to be; kept for reproducibility records.
#[derive(Debug, Clone, PartialEq)]
pub enum GraphOrigin {
    Rgg {
        requested: usize,
        initial_seed: u64,
        final_seed: u64,
        attempts: u32,
        giant_extracted: bool,
    },
    EdgeList {
        relabeled: bool,
    },
    Synthetic,
}

#[derive(Debug)]
pub struct Graph {
    n: usize,
    /// CSR adjacency pattern: neighbor lists ascending.
    row_ptr: Vec<usize>,
    neighbors: Vec<u32>,
    degrees: Vec<u32>,
    coords: Option<Vec<[f64; 2]>>,
    origin: GraphOrigin,
}

/// The ball B(i, r) of vertices within geodesic distance r of `source`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodIndex {
    pub source: usize,
    pub radius: usize,
    /// Ascending vertex ids; always contains `source`.
    pub members: Vec<u32>,
}

/// Polynomial ball-growth profile: mu(B(i,r)) <= density * (r+1)^dimension
/// over the probed radius range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthProfile {
    pub dimension: f64,
    pub density: f64,
}

pub struct RggOptions {
    pub retry_budget: u32,
    /// Fall back to the largest connected component when no attempt is
    /// connected, provided it covers at least this fraction of vertices.
    pub min_giant_fraction: f64,
}

impl Default for RggOptions {
    fn default() -> Self {
        Self {
            retry_budget: 16,
            min_giant_fraction: 0.9,
        }
    }
}

impl Graph {
    /// Validate and build a graph from an undirected edge set on `n` dense
    /// vertex ids. Edges are deduplicated and symmetrized.
    pub fn from_edges(n: usize, edges: &[(u32, u32)]) -> Result<Graph> {
        Self::from_edges_with(n, edges, None, GraphOrigin::Synthetic)
    }

    fn from_edges_with(
        n: usize,
        edges: &[(u32, u32)],
        coords: Option<Vec<[f64; 2]>>,
        origin: GraphOrigin,
    ) -> Result<Graph> {
        if n < 2 {
            return Err(Error::InvariantViolation(format!(
                "graph needs at least 2 vertices, got {n}"
            )));
        }
        let mut pairs: Vec<(u32, u32)> = Vec::with_capacity(edges.len() * 2);
        for &(u, v) in edges {
            if u as usize >= n || v as usize >= n {
                return Err(Error::InvariantViolation(format!(
                    "edge ({u}, {v}) references a vertex >= {n}"
                )));
            }
            if u == v {
                return Err(Error::InvariantViolation(format!("self-loop at vertex {u}")));
            }
            pairs.push((u, v));
            pairs.push((v, u));
        }
        pairs.sort_unstable();
        pairs.dedup();

        let mut row_ptr = vec![0usize; n + 1];
        for &(u, _) in &pairs {
            row_ptr[u as usize + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let neighbors: Vec<u32> = pairs.iter().map(|&(_, v)| v).collect();
        let degrees: Vec<u32> = (0..n)
            .map(|i| (row_ptr[i + 1] - row_ptr[i]) as u32)
            .collect();

        if let Some(i) = degrees.iter().position(|&d| d == 0) {
            return Err(Error::InvariantViolation(format!(
                "isolated vertex {i} (degree 0)"
            )));
        }

        let g = Graph {
            n,
            row_ptr,
            neighbors,
            degrees,
            coords,
            origin,
        };
        if !g.is_connected() {
            return Err(Error::InvariantViolation("graph is disconnected".into()));
        }
        Ok(g)
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn degree(&self, i: usize) -> u32 {
        self.degrees[i]
    }

    pub fn degrees(&self) -> &[u32] {
        &self.degrees
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.neighbors[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    /// Undirected edges with u < v, ascending.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for u in 0..self.n {
            for &v in self.neighbors(u) {
                if (u as u32) < v {
                    out.push((u as u32, v));
                }
            }
        }
        out
    }

    pub fn coords(&self) -> Option<&[[f64; 2]]> {
        self.coords.as_deref()
    }

    pub fn set_coords(&mut self, coords: Vec<[f64; 2]>) -> Result<()> {
        if coords.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: coords.len(),
            });
        }
        self.coords = Some(coords);
        Ok(())
    }

    pub fn origin(&self) -> &GraphOrigin {
        &self.origin
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::new();
        seen[0] = true;
        queue.push_back(0usize);
        let mut count = 1usize;
        while let Some(u) = queue.pop_front() {
            for &v in self.neighbors(u) {
                if !seen[v as usize] {
                    seen[v as usize] = true;
                    count += 1;
                    queue.push_back(v as usize);
                }
            }
        }
        count == self.n
    }

    /// BFS distances from `source` to every vertex.
    pub fn bfs_distances(&self, source: usize) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.n];
        dist[source] = 0;
        let mut queue = VecDeque::new();
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            let du = dist[u];
            for &v in self.neighbors(u) {
                if dist[v as usize] == u32::MAX {
                    dist[v as usize] = du + 1;
                    queue.push_back(v as usize);
                }
            }
        }
        dist
    }

    /// Geodesic distance rho(i, j).
    pub fn distance(&self, i: usize, j: usize) -> u32 {
        self.bfs_distances(i)[j]
    }

    /// Exact diameter via one BFS per vertex.
    pub fn diameter(&self) -> usize {
        (0..self.n)
            .map(|i| {
                self.bfs_distances(i)
                    .into_iter()
                    .max()
                    .expect("nonempty graph") as usize
            })
            .max()
            .expect("nonempty graph")
    }
}

/// B(i, r) by truncated BFS; members ascending.
pub fn geodesic_ball(g: &Graph, i: usize, r: usize) -> NeighborhoodIndex {
    assert!(i < g.vertex_count(), "vertex out of range");
    let mut dist = vec![u32::MAX; g.vertex_count()];
    dist[i] = 0;
    let mut members = vec![i as u32];
    let mut queue = VecDeque::new();
    queue.push_back(i);
    while let Some(u) = queue.pop_front() {
        if dist[u] as usize >= r {
            continue;
        }
        for &v in g.neighbors(u) {
            if dist[v as usize] == u32::MAX {
                dist[v as usize] = dist[u] + 1;
                members.push(v);
                queue.push_back(v as usize);
            }
        }
    }
    members.sort_unstable();
    NeighborhoodIndex {
        source: i,
        radius: r,
        members,
    }
}

/// Minimal density constant for the probed radius range at a fixed
/// dimension: max over all vertices i and radii 0..=max_radius of
/// mu(B(i,r)) / (r+1)^dimension.
pub fn estimate_growth(g: &Graph, max_radius: usize, dimension: f64) -> GrowthProfile {
    assert!(max_radius >= 1, "max_radius must be >= 1");
    let mut density = 0.0f64;
    for i in 0..g.vertex_count() {
        let dist = g.bfs_distances(i);
        let mut counts = vec![0usize; max_radius + 1];
        for &d in &dist {
            if (d as usize) <= max_radius {
                counts[d as usize] += 1;
            }
        }
        let mut mu = 0usize;
        for (r, c) in counts.iter().enumerate() {
            mu += c;
            let ratio = mu as f64 / ((r + 1) as f64).powf(dimension);
            if ratio > density {
                density = ratio;
            }
        }
    }
    GrowthProfile { dimension, density }
}

/// Random geometric graph on [0,1]^2: edge iff Euclidean distance
/// <= sqrt(2) * n^{-1/2}. If no attempt within the retry budget is
/// connected, the largest connected component of the best attempt is
/// extracted (recorded in the origin) provided it covers
/// `min_giant_fraction` of the vertices.
pub fn generate_rgg(n_vertices: usize, seed: u64) -> Result<Graph> {
    generate_rgg_with(n_vertices, seed, &RggOptions::default())
}

pub fn generate_rgg_with(n_vertices: usize, seed: u64, opts: &RggOptions) -> Result<Graph> {
    assert!(n_vertices >= 2, "n_vertices must be >= 2");
    let mut best: Option<(Vec<[f64; 2]>, Vec<(u32, u32)>, Vec<u32>, u64)> = None;
    let mut best_size = 0usize;

    for attempt in 0..opts.retry_budget.max(1) {
        let s = seed.wrapping_add(attempt as u64);
        let (pts, edges) = rgg_draw(n_vertices, s);
        let comp = largest_component(n_vertices, &edges);
        if comp.len() == n_vertices {
            return Graph::from_edges_with(
                n_vertices,
                &edges,
                Some(pts),
                GraphOrigin::Rgg {
                    requested: n_vertices,
                    initial_seed: seed,
                    final_seed: s,
                    attempts: attempt + 1,
                    giant_extracted: false,
                },
            );
        }
        if comp.len() > best_size {
            best_size = comp.len();
            best = Some((pts, edges, comp, s));
        }
    }

    let (pts, edges, comp, s) = best.expect("at least one attempt");
    if (comp.len() as f64) < opts.min_giant_fraction * n_vertices as f64 {
        return Err(Error::RetriesExhausted {
            n_vertices,
            attempts: opts.retry_budget,
            best_giant: comp.len(),
        });
    }
    // relabel the giant component to dense ids (comp ascending)
    let mut remap = vec![u32::MAX; n_vertices];
    for (new, &old) in comp.iter().enumerate() {
        remap[old as usize] = new as u32;
    }
    let sub_edges: Vec<(u32, u32)> = edges
        .iter()
        .filter(|(u, v)| remap[*u as usize] != u32::MAX && remap[*v as usize] != u32::MAX)
        .map(|&(u, v)| (remap[u as usize], remap[v as usize]))
        .collect();
    let sub_pts: Vec<[f64; 2]> = comp.iter().map(|&i| pts[i as usize]).collect();
    Graph::from_edges_with(
        comp.len(),
        &sub_edges,
        Some(sub_pts),
        GraphOrigin::Rgg {
            requested: n_vertices,
            initial_seed: seed,
            final_seed: s,
            attempts: opts.retry_budget,
            giant_extracted: true,
        },
    )
}

/// One RGG draw: positions and the edge set, found with a uniform grid of
/// cell width equal to the connection radius.
fn rgg_draw(n: usize, seed: u64) -> (Vec<[f64; 2]>, Vec<(u32, u32)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<[f64; 2]> = (0..n)
        .map(|_| [rng.random::<f64>(), rng.random::<f64>()])
        .collect();
    let radius = (2.0f64).sqrt() / (n as f64).sqrt();
    let r2 = radius * radius;

    let cells = ((1.0 / radius).floor() as usize).max(1);
    let cell_of = |p: &[f64; 2]| {
        let cx = ((p[0] * cells as f64) as usize).min(cells - 1);
        let cy = ((p[1] * cells as f64) as usize).min(cells - 1);
        cy * cells + cx
    };
    let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); cells * cells];
    for (i, p) in pts.iter().enumerate() {
        buckets[cell_of(p)].push(i as u32);
    }

    let mut edges = Vec::new();
    for (i, p) in pts.iter().enumerate() {
        let cx = ((p[0] * cells as f64) as usize).min(cells - 1) as isize;
        let cy = ((p[1] * cells as f64) as usize).min(cells - 1) as isize;
        for dy in -1..=1isize {
            for dx in -1..=1isize {
                let (nx, ny) = (cx + dx, cy + dy);
                if nx < 0 || ny < 0 || nx >= cells as isize || ny >= cells as isize {
                    continue;
                }
                for &j in &buckets[ny as usize * cells + nx as usize] {
                    if (j as usize) <= i {
                        continue;
                    }
                    let q = &pts[j as usize];
                    let (ddx, ddy) = (p[0] - q[0], p[1] - q[1]);
                    if ddx * ddx + ddy * ddy <= r2 {
                        edges.push((i as u32, j));
                    }
                }
            }
        }
    }
    (pts, edges)
}

/// Vertices of the largest connected component, ascending.
fn largest_component(n: usize, edges: &[(u32, u32)]) -> Vec<u32> {
    let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
    for &(u, v) in edges {
        adj[u as usize].push(v);
        adj[v as usize].push(u);
    }
    let mut seen = vec![false; n];
    let mut best: Vec<u32> = Vec::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        let mut comp = vec![s as u32];
        seen[s] = true;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v as usize] {
                    seen[v as usize] = true;
                    comp.push(v);
                    queue.push_back(v as usize);
                }
            }
        }
        if comp.len() > best.len() {
            best = comp;
        }
    }
    best.sort_unstable();
    best
}

/// Path graph P_n: 0 - 1 - ... - n-1.
pub fn path_graph(n: usize) -> Arc<Graph> {
    let edges: Vec<(u32, u32)> = (0..n - 1).map(|i| (i as u32, i as u32 + 1)).collect();
    Arc::new(Graph::from_edges(n, &edges).expect("path graph is valid"))
}

/// Cycle graph C_n.
pub fn cycle_graph(n: usize) -> Arc<Graph> {
    let mut edges: Vec<(u32, u32)> = (0..n - 1).map(|i| (i as u32, i as u32 + 1)).collect();
    edges.push((n as u32 - 1, 0));
    Arc::new(Graph::from_edges(n, &edges).expect("cycle graph is valid"))
}

/// Complete graph K_n.
pub fn complete_graph(n: usize) -> Arc<Graph> {
    let mut edges = Vec::new();
    for i in 0..n as u32 {
        for j in i + 1..n as u32 {
            edges.push((i, j));
        }
    }
    Arc::new(Graph::from_edges(n, &edges).expect("complete graph is valid"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p3_from_edges() {
        let g = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(g.degrees(), &[1, 2, 1]);
        assert_eq!(g.neighbors(1), &[0, 2]);
    }

    #[test]
    fn symmetrization_and_dedup() {
        let g = Graph::from_edges(2, &[(0, 1), (1, 0), (0, 1)]).unwrap();
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.degrees(), &[1, 1]);
    }

    #[test]
    fn self_loop_rejected() {
        let err = Graph::from_edges(2, &[(0, 0), (0, 1)]).unwrap_err();
        assert!(matches!(err, Error::InvariantViolation(_)));
    }

    #[test]
    fn disconnected_rejected() {
        let err = Graph::from_edges(4, &[(0, 1), (2, 3)]).unwrap_err();
        assert!(matches!(err, Error::InvariantViolation(_)));
    }

    #[test]
    fn three_cycle_distances() {
        let g = cycle_graph(3);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 0 } else { 1 };
                assert_eq!(g.distance(i, j), expect);
            }
        }
    }

    #[test]
    fn ball_on_p3() {
        let g = path_graph(3);
        let b = geodesic_ball(&g, 1, 1);
        assert_eq!(b.members, vec![0, 1, 2]);
        let b0 = geodesic_ball(&g, 2, 0);
        assert_eq!(b0.members, vec![2]);
    }

    #[test]
    fn growth_on_k4_and_edge() {
        let k4 = complete_graph(4);
        let p = estimate_growth(&k4, 3, 2.0);
        assert_eq!(p.density, 1.0); // r=1 dominates: 4/4

        let e = path_graph(2);
        let p = estimate_growth(&e, 2, 2.0);
        assert_eq!(p.density, 1.0); // max(1/1, 2/4)
    }

    #[test]
    fn rgg_reproducible() {
        let a = generate_rgg(64, 7).unwrap();
        let b = generate_rgg(64, 7).unwrap();
        assert_eq!(a.edges(), b.edges());
        assert_eq!(a.vertex_count(), b.vertex_count());
    }

    #[test]
    fn rgg_two_vertices() {
        // with two points the radius is 1, so any draw within distance 1
        // connects them; retry logic finds one quickly
        let g = generate_rgg(2, 1).unwrap();
        assert_eq!(g.degrees(), &[1, 1]);
    }

    #[test]
    fn rgg_edges_match_bruteforce() {
        let g = generate_rgg(64, 3).unwrap();
        let pts = g.coords().unwrap();
        let n = g.vertex_count();
        let radius2 = 2.0 / 64.0; // based on the requested size
        let mut expect = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let dx = pts[i][0] - pts[j][0];
                let dy = pts[i][1] - pts[j][1];
                if dx * dx + dy * dy <= radius2 {
                    expect.push((i as u32, j as u32));
                }
            }
        }
        expect.sort_unstable();
        assert_eq!(g.edges(), expect);
    }

    #[test]
    fn balls_match_floyd_warshall_on_rgg64() {
        let g = generate_rgg(64, 11).unwrap();
        let n = g.vertex_count();
        // dense all-pairs oracle
        let inf = u32::MAX / 4;
        let mut d = vec![vec![inf; n]; n];
        for i in 0..n {
            d[i][i] = 0;
            for &j in g.neighbors(i) {
                d[i][j as usize] = 1;
            }
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let via = d[i][k] + d[k][j];
                    if via < d[i][j] {
                        d[i][j] = via;
                    }
                }
            }
        }
        for &i in &[0usize, n / 3, n - 1] {
            let ball = geodesic_ball(&g, i, 3);
            let expect: Vec<u32> = (0..n).filter(|&j| d[i][j] <= 3).map(|j| j as u32).collect();
            assert_eq!(ball.members, expect);
        }
    }

    #[test]
    fn ball_union_covers_graph_and_growth_monotone() {
        let g = generate_rgg(64, 5).unwrap();
        let n = g.vertex_count();
        for r in 0..3 {
            let mut covered = vec![false; n];
            for i in 0..n {
                for &m in &geodesic_ball(&g, i, r).members {
                    covered[m as usize] = true;
                }
            }
            assert!(covered.iter().all(|&c| c));
        }
        // mu(B(i,r)) nondecreasing in r and bounded by n
        for i in (0..n).step_by(7) {
            let mut prev = 0usize;
            for r in 0..6 {
                let size = geodesic_ball(&g, i, r).members.len();
                assert!(size >= prev && size <= n);
                prev = size;
            }
        }
    }
}
