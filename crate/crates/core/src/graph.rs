//! Locally finite metric graphs with derived Dirichlet/Kirchhoff vertex roles.
//!
//! Every edge is parametrised by arclength `x ∈ [0, ℓ]` starting at
//! `endpoint_a`; a ray (`length = ∞`) has no `endpoint_b` and runs from
//! `endpoint_a` toward infinity. Slopes reported anywhere in the crate are
//! derivatives in that orientation unless stated otherwise.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{check_exponent, Error, Result};

/// Boundary-condition role of a vertex. Derived from the degree, never given.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BcRole {
    Dirichlet,
    Kirchhoff,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Vertex {
    pub id: String,
    pub bc_role: BcRole,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EdgeLength {
    Finite(f64),
    Infinite,
}

impl EdgeLength {
    pub fn is_infinite(self) -> bool {
        matches!(self, EdgeLength::Infinite)
    }

    /// Numeric length, `f64::INFINITY` for rays.
    pub fn value(self) -> f64 {
        match self {
            EdgeLength::Finite(l) => l,
            EdgeLength::Infinite => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Edge {
    pub id: String,
    pub endpoint_a: String,
    pub endpoint_b: Option<String>,
    pub length: EdgeLength,
}

impl Edge {
    pub fn segment(id: &str, a: &str, b: &str, length: f64) -> Self {
        Edge {
            id: id.to_owned(),
            endpoint_a: a.to_owned(),
            endpoint_b: Some(b.to_owned()),
            length: EdgeLength::Finite(length),
        }
    }

    pub fn ray(id: &str, a: &str) -> Self {
        Edge {
            id: id.to_owned(),
            endpoint_a: a.to_owned(),
            endpoint_b: None,
            length: EdgeLength::Infinite,
        }
    }

    pub fn is_ray(&self) -> bool {
        self.length.is_infinite()
    }

    /// Arclength parameter interval `[0, ℓ]`, 0 at `endpoint_a`.
    pub fn coordinates(&self) -> EdgeParam {
        EdgeParam {
            start: 0.0,
            end: self.length.value(),
        }
    }
}

/// Arclength interval of an edge; `end` is infinite for rays.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeParam {
    pub start: f64,
    pub end: f64,
}

impl EdgeParam {
    pub fn contains(&self, x: f64) -> bool {
        x >= self.start && x <= self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    InvalidExponent,
    EmptyGraph,
    DuplicateVertex,
    DuplicateEdge,
    UnknownEndpoint(String),
    DanglingFiniteEdge,
    RayWithSecondEndpoint,
    NonPositiveLength,
    Loop,
    Disconnected,
}

/// One invariant violation, naming the offending entity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub entity: String,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match &self.kind {
            ViolationKind::InvalidExponent => "exponent p must exceed 2".to_owned(),
            ViolationKind::EmptyGraph => "graph has no edges".to_owned(),
            ViolationKind::DuplicateVertex => "duplicate vertex id".to_owned(),
            ViolationKind::DuplicateEdge => "duplicate edge id".to_owned(),
            ViolationKind::UnknownEndpoint(v) => format!("unknown endpoint `{v}`"),
            ViolationKind::DanglingFiniteEdge => "dangling finite edge".to_owned(),
            ViolationKind::RayWithSecondEndpoint => {
                "infinite edge must not have a second endpoint".to_owned()
            }
            ViolationKind::NonPositiveLength => "edge length must be positive".to_owned(),
            ViolationKind::Loop => "loops are not supported".to_owned(),
            ViolationKind::Disconnected => "disconnected".to_owned(),
        };
        write!(f, "{}: {}", self.entity, what)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphClass {
    EquivalentToLine,
    EquivalentToHalfline,
    Bounded,
    StarLike,
    General,
}

/// Metric graph together with the exponent `p` of the inequality.
///
/// Immutable after construction. Construction never fails; use
/// [`MetricGraph::validate`] or [`MetricGraph::checked`] to enforce the
/// invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricGraph {
    p: f64,
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    index: BTreeMap<String, usize>,
}

impl MetricGraph {
    pub fn new<S: Into<String>>(p: f64, vertices: Vec<S>, edges: Vec<Edge>) -> Self {
        let ids: Vec<String> = vertices.into_iter().map(Into::into).collect();
        let mut index = BTreeMap::new();
        for (i, id) in ids.iter().enumerate() {
            index.entry(id.clone()).or_insert(i);
        }
        let mut degree = vec![0usize; ids.len()];
        for e in &edges {
            if let Some(&i) = index.get(&e.endpoint_a) {
                degree[i] += 1;
            }
            if let Some(&i) = e.endpoint_b.as_ref().and_then(|b| index.get(b)) {
                degree[i] += 1;
            }
        }
        let vertices = ids
            .into_iter()
            .zip(degree)
            .map(|(id, d)| Vertex {
                id,
                bc_role: if d == 1 {
                    BcRole::Dirichlet
                } else {
                    BcRole::Kirchhoff
                },
            })
            .collect();
        MetricGraph {
            p,
            vertices,
            edges,
            index,
        }
    }

    /// Builds the graph and rejects it if any invariant fails.
    pub fn checked<S: Into<String>>(p: f64, vertices: Vec<S>, edges: Vec<Edge>) -> Result<Self> {
        let g = Self::new(p, vertices, edges);
        g.ensure_valid()?;
        Ok(g)
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Same graph with a different exponent.
    pub fn with_exponent(&self, p: f64) -> Self {
        MetricGraph {
            p,
            ..self.clone()
        }
    }

    pub fn vertex_index(&self, id: &str) -> Result<usize> {
        self.index.get(id).copied().ok_or_else(|| Error::UnknownId {
            kind: "vertex",
            id: id.to_owned(),
        })
    }

    pub fn edge_index(&self, id: &str) -> Result<usize> {
        self.edges
            .iter()
            .position(|e| e.id == id)
            .ok_or_else(|| Error::UnknownId {
                kind: "edge",
                id: id.to_owned(),
            })
    }

    pub fn edge(&self, id: &str) -> Result<&Edge> {
        Ok(&self.edges[self.edge_index(id)?])
    }

    /// Number of edge ends incident to the vertex.
    pub fn total_degree(&self, vertex: &str) -> Result<usize> {
        let id = &self.vertices[self.vertex_index(vertex)?].id;
        Ok(self
            .edges
            .iter()
            .map(|e| {
                usize::from(&e.endpoint_a == id) + usize::from(e.endpoint_b.as_ref() == Some(id))
            })
            .sum())
    }

    pub fn edge_arclength_coordinates(&self, edge: &str) -> Result<EdgeParam> {
        Ok(self.edge(edge)?.coordinates())
    }

    pub fn bc_role(&self, vertex: &str) -> Result<BcRole> {
        Ok(self.vertices[self.vertex_index(vertex)?].bc_role)
    }

    /// Indices of the edges incident to a vertex, in edge order.
    pub fn incident_edges(&self, vertex: usize) -> Vec<usize> {
        let id = &self.vertices[vertex].id;
        self.edges
            .iter()
            .enumerate()
            .filter(|(_, e)| &e.endpoint_a == id || e.endpoint_b.as_ref() == Some(id))
            .map(|(i, _)| i)
            .collect()
    }

    /// Vertices of degree at least two.
    pub fn inner_vertices(&self) -> Vec<usize> {
        (0..self.vertices.len())
            .filter(|&i| self.degree_of(i) >= 2)
            .collect()
    }

    pub fn ray_count(&self) -> usize {
        self.edges.iter().filter(|e| e.is_ray()).count()
    }

    pub fn has_ray(&self) -> bool {
        self.ray_count() > 0
    }

    pub fn shortest_edge(&self) -> f64 {
        self.edges
            .iter()
            .map(|e| e.length.value())
            .fold(f64::INFINITY, f64::min)
    }

    fn degree_of(&self, i: usize) -> usize {
        let id = &self.vertices[i].id;
        self.edges
            .iter()
            .map(|e| {
                usize::from(&e.endpoint_a == id) + usize::from(e.endpoint_b.as_ref() == Some(id))
            })
            .sum()
    }

    /// Lists every violated invariant. Empty means the graph is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let graph = || "graph".to_owned();
        if !(self.p.is_finite() && self.p > 2.0) {
            out.push(Violation {
                entity: graph(),
                kind: ViolationKind::InvalidExponent,
            });
        }
        if self.edges.is_empty() {
            out.push(Violation {
                entity: graph(),
                kind: ViolationKind::EmptyGraph,
            });
        }
        let mut seen = BTreeSet::new();
        for v in &self.vertices {
            if !seen.insert(v.id.as_str()) {
                out.push(Violation {
                    entity: format!("vertex {}", v.id),
                    kind: ViolationKind::DuplicateVertex,
                });
            }
        }
        let mut seen = BTreeSet::new();
        for e in &self.edges {
            let entity = format!("edge {}", e.id);
            if !seen.insert(e.id.as_str()) {
                out.push(Violation {
                    entity: entity.clone(),
                    kind: ViolationKind::DuplicateEdge,
                });
            }
            for end in std::iter::once(&e.endpoint_a).chain(e.endpoint_b.iter()) {
                if !self.index.contains_key(end) {
                    out.push(Violation {
                        entity: entity.clone(),
                        kind: ViolationKind::UnknownEndpoint(end.clone()),
                    });
                }
            }
            match (e.length, &e.endpoint_b) {
                (EdgeLength::Finite(_), None) => out.push(Violation {
                    entity: entity.clone(),
                    kind: ViolationKind::DanglingFiniteEdge,
                }),
                (EdgeLength::Infinite, Some(_)) => out.push(Violation {
                    entity: entity.clone(),
                    kind: ViolationKind::RayWithSecondEndpoint,
                }),
                _ => {}
            }
            if let EdgeLength::Finite(l) = e.length {
                if !(l.is_finite() && l > 0.0) {
                    out.push(Violation {
                        entity: entity.clone(),
                        kind: ViolationKind::NonPositiveLength,
                    });
                }
            }
            if e.endpoint_b.as_ref() == Some(&e.endpoint_a) {
                out.push(Violation {
                    entity,
                    kind: ViolationKind::Loop,
                });
            }
        }
        if !self.vertices.is_empty() && !self.is_connected() {
            out.push(Violation {
                entity: graph(),
                kind: ViolationKind::Disconnected,
            });
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }

    pub(crate) fn ensure_valid(&self) -> Result<()> {
        check_exponent(self.p)?;
        let report = self.validate();
        if report.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidGraph(
                report.iter().map(ToString::to_string).collect(),
            ))
        }
    }

    fn is_connected(&self) -> bool {
        let n = self.vertices.len();
        let mut adj = vec![Vec::new(); n];
        for e in &self.edges {
            let a = self.index.get(&e.endpoint_a);
            let b = e.endpoint_b.as_ref().and_then(|b| self.index.get(b));
            if let (Some(&a), Some(&b)) = (a, b) {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Graph distances (along edges) from one vertex to every vertex.
    pub fn vertex_distances(&self, from: usize) -> Vec<f64> {
        let n = self.vertices.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut done = vec![false; n];
        dist[from] = 0.0;
        for _ in 0..n {
            let Some(i) = (0..n)
                .filter(|&i| !done[i] && dist[i].is_finite())
                .min_by(|&a, &b| dist[a].total_cmp(&dist[b]))
            else {
                break;
            };
            done[i] = true;
            for e in &self.edges {
                let (Some(&a), Some(&b)) = (
                    self.index.get(&e.endpoint_a),
                    e.endpoint_b.as_ref().and_then(|b| self.index.get(b)),
                ) else {
                    continue;
                };
                let l = e.length.value();
                for (x, y) in [(a, b), (b, a)] {
                    if x == i && dist[i] + l < dist[y] {
                        dist[y] = dist[i] + l;
                    }
                }
            }
        }
        dist
    }

    /// Structural classification. Chains come first, then bounded graphs,
    /// then graphs with a single inner vertex.
    pub fn classify(&self) -> Result<GraphClass> {
        self.ensure_valid()?;
        let n = self.vertices.len();
        let bounded_edges = self.edges.iter().filter(|e| !e.is_ray()).count();
        let max_degree = (0..n).map(|i| self.degree_of(i)).max().unwrap_or(0);
        let is_chain = max_degree <= 2 && bounded_edges + 1 == n;
        let rays = self.ray_count();
        Ok(if is_chain && rays == 2 {
            GraphClass::EquivalentToLine
        } else if is_chain && rays == 1 {
            GraphClass::EquivalentToHalfline
        } else if rays == 0 {
            GraphClass::Bounded
        } else if self.inner_vertices().len() == 1 {
            GraphClass::StarLike
        } else {
            GraphClass::General
        })
    }
}

/// Star of `n` rays meeting at vertex `O`.
pub fn ray_star(p: f64, n: usize) -> MetricGraph {
    let edges = (0..n).map(|i| Edge::ray(&format!("r{i}"), "O")).collect();
    MetricGraph::new(p, vec!["O"], edges)
}

/// One ray plus bounded pendant edges, all attached at `O`.
pub fn ray_with_pendants(p: f64, lengths: &[f64]) -> MetricGraph {
    let mut vertices = vec!["O".to_owned()];
    let mut edges = vec![Edge::ray("e0", "O")];
    for (i, &l) in lengths.iter().enumerate() {
        let v = format!("V{}", i + 1);
        edges.push(Edge::segment(&format!("e{}", i + 1), "O", &v, l));
        vertices.push(v);
    }
    MetricGraph::new(p, vertices, edges)
}

/// Bounded star: edges of the given lengths meeting at `O`.
pub fn bounded_star(p: f64, lengths: &[f64]) -> MetricGraph {
    let mut vertices = vec!["O".to_owned()];
    let mut edges = Vec::new();
    for (i, &l) in lengths.iter().enumerate() {
        let v = format!("V{}", i + 1);
        edges.push(Edge::segment(&format!("e{}", i + 1), "O", &v, l));
        vertices.push(v);
    }
    MetricGraph::new(p, vertices, edges)
}
