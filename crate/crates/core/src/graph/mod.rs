//! Symmetrically weighted graphs, their word metric, balls and boundaries.
//!
//! A [`WeightedGraph`] is built once from an edge list and is immutable
//! afterwards. The vertex measure is `m(u) = Σ_v μ_uv`, where a loop `(u, u, w)`
//! contributes `w` once.

pub mod families;
pub mod geometry;

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use geometry::{
    doubling_by_radius, doubling_exponent_bound, estimate_doubling, estimate_poincare,
    geometry_report, poincare_quotient, product_doubling_constant, product_geometry_check,
    product_poincare_constant, GeometryReport, MetricMeasureSpace, ProductGeometryReport, ProductSpace,
};

/// Finite connected graph with symmetric nonnegative weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    labels: Vec<String>,
    adjacency: Vec<Vec<(usize, f64)>>,
    measure: Vec<f64>,
}

/// Open ball `{v : d(center, v) < radius}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: usize,
    pub radius: f64,
    pub members: Vec<usize>,
}

impl Ball {
    pub fn contains(&self, v: usize) -> bool {
        self.members.binary_search(&v).is_ok()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Result of the `Δ*(α)` scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaStar {
    /// Largest α with `μ_uv ≥ α m(u)` on every edge.
    pub alpha: f64,
    /// Local uniform finiteness bound `A = ⌈1/α⌉` on the number of neighbours.
    pub degree_bound: usize,
}

impl WeightedGraph {
    /// Builds a graph on vertices `0..=max index` from `(u, v, μ_uv)` triples.
    ///
    /// Repeated pairs are merged by summing their weights; zero weights do not
    /// create an edge.
    pub fn from_edges<I>(edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let edges: Vec<_> = edges.into_iter().collect();
        let n = edges.iter().map(|&(u, v, _)| u.max(v) + 1).max().unwrap_or(0);
        let labels = (0..n).map(|i| i.to_string()).collect();
        Self::build(labels, edges)
    }

    /// Builds a graph from string-labelled edges; vertices are numbered in
    /// order of first appearance.
    pub fn from_labeled_edges<S: AsRef<str>>(edges: &[(S, S, f64)]) -> Result<Self> {
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut labels = Vec::new();
        let mut id = |s: &str| -> usize {
            if let Some(&i) = index.get(s) {
                return i;
            }
            index.insert(s.to_string(), labels.len());
            labels.push(s.to_string());
            labels.len() - 1
        };
        let numbered: Vec<_> = edges
            .iter()
            .map(|(u, v, w)| (id(u.as_ref()), id(v.as_ref()), *w))
            .collect();
        Self::build(labels, numbered)
    }

    fn build(labels: Vec<String>, edges: Vec<(usize, usize, f64)>) -> Result<Self> {
        if edges.is_empty() || labels.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut merged: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (u, v, w) in edges {
            if !w.is_finite() {
                return Err(Error::InvalidWeight {
                    u: labels[u].clone(),
                    v: labels[v].clone(),
                });
            }
            if w < 0.0 {
                return Err(Error::NegativeWeight {
                    u: labels[u].clone(),
                    v: labels[v].clone(),
                    weight: w,
                });
            }
            *merged.entry((u.min(v), u.max(v))).or_insert(0.0) += w;
        }
        let n = labels.len();
        let mut adjacency = vec![Vec::new(); n];
        for (&(u, v), &w) in &merged {
            if w == 0.0 {
                continue;
            }
            adjacency[u].push((v, w));
            if u != v {
                adjacency[v].push((u, w));
            }
        }
        for row in &mut adjacency {
            row.sort_by_key(|&(v, _)| v);
        }
        let measure: Vec<f64> = adjacency
            .iter()
            .map(|row| row.iter().map(|&(_, w)| w).sum())
            .collect();
        let graph = Self {
            labels,
            adjacency,
            measure,
        };
        let dist = graph.bfs_distances(0);
        if let Some(vertex) = dist.iter().position(|&d| d == usize::MAX) {
            return Err(Error::DisconnectedGraph { vertex });
        }
        Ok(graph)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, u: usize) -> &str {
        &self.labels[u]
    }

    /// Vertex index for a label, if present.
    pub fn vertex(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn measure(&self, u: usize) -> f64 {
        self.measure[u]
    }

    pub fn measures(&self) -> &[f64] {
        &self.measure
    }

    /// Neighbours of `u` with weights, sorted by index; a loop appears as `(u, μ_uu)`.
    pub fn neighbors(&self, u: usize) -> &[(usize, f64)] {
        &self.adjacency[u]
    }

    pub fn weight(&self, u: usize, v: usize) -> f64 {
        self.adjacency[u]
            .binary_search_by_key(&v, |&(x, _)| x)
            .map(|i| self.adjacency[u][i].1)
            .unwrap_or(0.0)
    }

    pub fn adjacent(&self, u: usize, v: usize) -> bool {
        self.weight(u, v) > 0.0
    }

    /// Each undirected edge once, as `(u, v, μ_uv)` with `u <= v`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.adjacency.iter().enumerate().flat_map(|(u, row)| {
            row.iter()
                .filter(move |&&(v, _)| v >= u)
                .map(move |&(v, w)| (u, v, w))
        })
    }

    /// `m(E) = Σ_{u∈E} m(u)`.
    pub fn volume(&self, set: &[usize]) -> f64 {
        set.iter().map(|&u| self.measure[u]).sum()
    }

    fn check_vertex(&self, u: usize) -> Result<()> {
        if u < self.len() {
            Ok(())
        } else {
            Err(Error::UnknownVertex(u))
        }
    }

    /// Breadth-first distances from `source`; unreachable vertices get `usize::MAX`.
    pub fn bfs_distances(&self, source: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.len()];
        let mut queue = VecDeque::new();
        dist[source] = 0;
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &self.adjacency[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Geodesic distance: the least number of edges between `u` and `v`.
    pub fn distance(&self, u: usize, v: usize) -> Result<usize> {
        self.check_vertex(u)?;
        self.check_vertex(v)?;
        Ok(self.bfs_distances(u)[v])
    }

    pub fn ball(&self, center: usize, radius: f64) -> Result<Ball> {
        self.check_vertex(center)?;
        let dist = self.bfs_distances(center);
        let members = (0..self.len())
            .filter(|&v| (dist[v] as f64) < radius)
            .collect();
        Ok(Ball {
            center,
            radius,
            members,
        })
    }

    /// `∂E = {u ∉ E : u ~ v for some v ∈ E}`, sorted.
    pub fn boundary(&self, set: &[usize]) -> Vec<usize> {
        let mut inside = vec![false; self.len()];
        for &u in set {
            inside[u] = true;
        }
        let mut mark = vec![false; self.len()];
        for &u in set {
            for &(v, _) in &self.adjacency[u] {
                if !inside[v] {
                    mark[v] = true;
                }
            }
        }
        (0..self.len()).filter(|&v| mark[v]).collect()
    }

    /// `E* = E ∪ ∂E`, sorted.
    pub fn closure(&self, set: &[usize]) -> Vec<usize> {
        let mut all: Vec<usize> = set.iter().copied().chain(self.boundary(set)).collect();
        all.sort_unstable();
        all.dedup();
        all
    }

    /// Largest α with `μ_uv ≥ α m(u)` for every edge, loops included.
    pub fn check_delta_star(&self) -> DeltaStar {
        let alpha = (0..self.len())
            .flat_map(|u| self.adjacency[u].iter().map(move |&(_, w)| (u, w)))
            .map(|(u, w)| w / self.measure[u])
            .fold(f64::INFINITY, f64::min);
        DeltaStar {
            alpha,
            degree_bound: (1.0 / alpha).ceil() as usize,
        }
    }

    /// Returns a copy with a loop of weight `loop_weight(u, m(u))` added at every vertex.
    pub fn with_loops<F: Fn(usize, f64) -> f64>(&self, loop_weight: F) -> Result<Self> {
        let mut edges: Vec<_> = self.edges().collect();
        edges.extend((0..self.len()).map(|u| (u, u, loop_weight(u, self.measure[u]))));
        Self::build(self.labels.clone(), edges)
    }

    /// Serializes to the `u v w` edge-list text format.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for (u, v, w) in self.edges() {
            let _ = writeln!(out, "{} {} {}", self.labels[u], self.labels[v], w);
        }
        out
    }
}

/// Parses the `u v w` edge-list format; blank lines and lines starting with `#` are skipped.
pub fn parse_edge_list(text: &str) -> Result<WeightedGraph> {
    let mut edges = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::InvalidParameter(format!(
                "line {}: expected `u v w`, got {:?}",
                lineno + 1,
                line
            )));
        }
        let w: f64 = fields[2].parse().map_err(|_| {
            Error::InvalidParameter(format!("line {}: bad weight {:?}", lineno + 1, fields[2]))
        })?;
        edges.push((fields[0].to_string(), fields[1].to_string(), w));
    }
    WeightedGraph::from_labeled_edges(&edges)
}

#[cfg(test)]
mod tests {
    use super::families::{cycle, grid, path, star};
    use super::*;

    #[test]
    fn path_measure() {
        let g = path(3).unwrap();
        assert_eq!(g.measures(), &[1.0, 2.0, 1.0]);
    }

    #[test]
    fn single_loop() {
        let g = WeightedGraph::from_edges([(0, 0, 2.5)]).unwrap();
        assert_eq!(g.measure(0), 2.5);
        assert!(g.adjacent(0, 0));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            WeightedGraph::from_edges([(0, 1, 1.0), (2, 3, 1.0)]),
            Err(Error::DisconnectedGraph { .. })
        ));
        assert!(matches!(
            WeightedGraph::from_edges([(0, 1, -1.0)]),
            Err(Error::NegativeWeight { .. })
        ));
        assert_eq!(
            WeightedGraph::from_edges(Vec::<(usize, usize, f64)>::new()),
            Err(Error::EmptyInput)
        );
        // vertex 1 only has a zero-weight edge
        assert!(matches!(
            WeightedGraph::from_edges([(0, 0, 1.0), (0, 1, 0.0)]),
            Err(Error::DisconnectedGraph { vertex: 1 })
        ));
    }

    #[test]
    fn duplicate_edges_merge() {
        let g = WeightedGraph::from_edges([(0, 1, 1.0), (1, 0, 2.0)]).unwrap();
        assert_eq!(g.weight(0, 1), 3.0);
        assert_eq!(g.measures(), &[3.0, 3.0]);
    }

    #[test]
    fn distances() {
        let p = path(3).unwrap();
        assert_eq!(p.distance(0, 2).unwrap(), 2);
        assert_eq!(p.distance(1, 1).unwrap(), 0);
        assert_eq!(p.distance(0, 7), Err(Error::UnknownVertex(7)));
        let c = cycle(6).unwrap();
        // brute force over both arcs of the cycle
        let brute = |u: usize, v: usize| {
            let cw = (v + 6 - u) % 6;
            cw.min(6 - cw)
        };
        for u in 0..6 {
            for v in 0..6 {
                assert_eq!(c.distance(u, v).unwrap(), brute(u, v));
            }
        }
        assert_eq!(c.distance(0, 3).unwrap(), 3);
    }

    #[test]
    fn boundaries() {
        let p = path(4).unwrap();
        assert_eq!(p.boundary(&[1, 2]), vec![0, 3]);
        assert_eq!(p.boundary(&[0, 1, 2, 3]), Vec::<usize>::new());
        assert_eq!(p.closure(&[1]), vec![0, 1, 2]);

        let g = grid(5, 5).unwrap();
        let center = 12;
        let ball = g.ball(center, 2.0).unwrap();
        let expected: Vec<usize> = (0..25)
            .filter(|&v| !ball.contains(v))
            .filter(|&v| ball.members.iter().any(|&u| g.adjacent(u, v)))
            .collect();
        assert_eq!(g.boundary(&ball.members), expected);
        assert_eq!(expected.len(), 8);
    }

    #[test]
    fn open_balls() {
        let p = path(7).unwrap();
        assert_eq!(p.ball(3, 1.0).unwrap().members, vec![3]);
        assert_eq!(p.ball(3, 2.0).unwrap().members, vec![2, 3, 4]);
        assert_eq!(p.ball(3, 1.5).unwrap().members, vec![2, 3, 4]);
    }

    #[test]
    fn delta_star_examples() {
        let c = cycle(7).unwrap();
        assert_eq!(c.check_delta_star().alpha, 0.5);
        let s = star(4).unwrap();
        let ds = s.check_delta_star();
        assert_eq!(ds.alpha, 0.25);
        assert_eq!(ds.degree_bound, 4);
        let lazy = families::lazy_segment(10, 2.0).unwrap();
        assert_eq!(lazy.check_delta_star().alpha, 0.25);
    }

    #[test]
    fn edge_list_round_trip() {
        let text = "# comment\na b 1.5\nb c 2\n\nc c 0.5\n";
        let g = parse_edge_list(text).unwrap();
        assert_eq!(g.len(), 3);
        assert_eq!(g.measure(g.vertex("c").unwrap()), 2.5);
        let again = parse_edge_list(&g.to_edge_list()).unwrap();
        assert_eq!(again, g);
        assert_eq!(parse_edge_list("# nothing\n"), Err(Error::EmptyInput));
        assert!(parse_edge_list("a b").is_err());
    }
}
