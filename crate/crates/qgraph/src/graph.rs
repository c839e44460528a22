//! Metric-graph data model: vertices with matching conditions, finite bonds
//! and infinite leads, plus the directed-edge indexing conventions every
//! solver module consumes.
//!
//! A graph is immutable after construction. Vertex ids are dense
//! `0..vertex_count()` and edge ids dense `0..edge_count()`, so all matrices
//! are addressed by plain array indices. Edge orientation is fixed at
//! construction and never mutated; no spectral quantity depends on it.

use crate::{CMatrix, Error, Result};
use std::fmt;

/// Dense vertex index.
pub type VertexId = usize;
/// Dense edge index.
pub type EdgeId = usize;

/// Matching condition imposed at a vertex.
#[derive(Debug, Clone, PartialEq)]
pub enum VertexCondition {
    /// Standard condition: continuity plus vanishing sum of outgoing
    /// derivatives (a delta coupling of strength zero).
    NeumannKirchhoff,
    /// The wave function vanishes at the vertex.
    Dirichlet,
    /// Delta coupling: continuity plus derivative jump `alpha * psi(v)`.
    Delta(f64),
    /// Directly prescribed vertex scattering matrix. Must be unitary and of
    /// dimension equal to the vertex degree; rows/columns follow the
    /// canonical endpoint order (edges by ascending id, origin endpoint
    /// before terminus endpoint for loops).
    CustomUnitary(CMatrix),
}

impl VertexCondition {
    /// Delta coupling strength if this is a delta-type condition
    /// (Neumann-Kirchhoff counts as strength zero).
    pub fn delta_strength(&self) -> Option<f64> {
        match self {
            VertexCondition::NeumannKirchhoff => Some(0.0),
            VertexCondition::Delta(a) => Some(*a),
            _ => None,
        }
    }

    /// True when the vertex scattering matrix depends on the wave number.
    pub fn is_k_dependent(&self) -> bool {
        matches!(self, VertexCondition::Delta(a) if *a != 0.0)
    }
}

/// A vertex: an equivalence class of edge endpoints plus its condition.
#[derive(Debug, Clone)]
pub struct Vertex {
    pub id: VertexId,
    pub condition: VertexCondition,
}

/// Whether an edge is a finite bond or an infinite lead.
#[derive(Debug, Clone, PartialEq)]
pub enum EdgeKind {
    /// Finite edge with terminus `t(e)` and length `l > 0`. A loop has
    /// `terminus == origin`.
    Bond { terminus: VertexId, length: f64 },
    /// Semi-infinite edge attached only at its origin.
    Lead,
}

/// An edge with its origin `o(e)`, and terminus/length for bonds.
#[derive(Debug, Clone)]
pub struct Edge {
    pub id: EdgeId,
    pub origin: VertexId,
    pub kind: EdgeKind,
}

impl Edge {
    pub fn is_lead(&self) -> bool {
        matches!(self.kind, EdgeKind::Lead)
    }

    /// Finite length, if a bond.
    pub fn length(&self) -> Option<f64> {
        match self.kind {
            EdgeKind::Bond { length, .. } => Some(length),
            EdgeKind::Lead => None,
        }
    }

    pub fn terminus(&self) -> Option<VertexId> {
        match self.kind {
            EdgeKind::Bond { terminus, .. } => Some(terminus),
            EdgeKind::Lead => None,
        }
    }

    pub fn is_loop(&self) -> bool {
        self.terminus() == Some(self.origin)
    }
}

/// A single invariant violation found by [`validate_graph`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// Edge endpoint references a vertex id outside `0..vertex_count`.
    BadVertexRef { edge: EdgeId, vertex: VertexId },
    /// Finite edge with length `<= 0` (or non-finite float).
    NonpositiveLength { edge: EdgeId },
    /// Vertex contains no endpoint.
    IsolatedVertex { vertex: VertexId },
    /// The graph is not connected.
    Disconnected,
    /// Custom unitary matrix has the wrong dimension for the vertex degree.
    ConditionDimensionMismatch { vertex: VertexId, expected: usize, got: usize },
    /// Custom matrix is not unitary to 1e-12.
    NotUnitary { vertex: VertexId, defect: f64 },
    /// Delta coupling strength is not a finite real.
    NonFiniteCoupling { vertex: VertexId },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::BadVertexRef { edge, vertex } => {
                write!(f, "edge {edge} references missing vertex {vertex}")
            }
            Violation::NonpositiveLength { edge } => {
                write!(f, "edge {edge} has nonpositive length")
            }
            Violation::IsolatedVertex { vertex } => {
                write!(f, "vertex {vertex} has no incident edge")
            }
            Violation::Disconnected => write!(f, "graph is disconnected"),
            Violation::ConditionDimensionMismatch { vertex, expected, got } => write!(
                f,
                "vertex {vertex}: condition matrix is {got}x{got}, degree is {expected}"
            ),
            Violation::NotUnitary { vertex, defect } => {
                write!(f, "vertex {vertex}: condition matrix unitarity defect {defect:.3e}")
            }
            Violation::NonFiniteCoupling { vertex } => {
                write!(f, "vertex {vertex}: delta coupling is not finite")
            }
        }
    }
}

/// Outcome of [`validate_graph`]: empty iff every invariant holds.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        let msgs: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", msgs.join("; "))
    }
}

/// A metric graph: combinatorial graph plus positive edge lengths and
/// per-vertex matching conditions. Immutable after construction.
#[derive(Debug, Clone)]
pub struct MetricGraph {
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
}

impl MetricGraph {
    /// Assemble a graph from parts without checking the metric-graph
    /// invariants (use [`validate_graph`] or [`GraphBuilder::build`] for
    /// that). Ids are rewritten to the positional order.
    pub fn from_parts(
        conditions: Vec<VertexCondition>,
        edges: Vec<(VertexId, Option<VertexId>, Option<f64>)>,
    ) -> Self {
        let vertices = conditions
            .into_iter()
            .enumerate()
            .map(|(id, condition)| Vertex { id, condition })
            .collect();
        let edges = edges
            .into_iter()
            .enumerate()
            .map(|(id, (origin, terminus, length))| Edge {
                id,
                origin,
                kind: match (terminus, length) {
                    (Some(t), Some(l)) => EdgeKind::Bond { terminus: t, length: l },
                    _ => EdgeKind::Lead,
                },
            })
            .collect();
        MetricGraph { vertices, edges }
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn bond_count(&self) -> usize {
        self.edges.iter().filter(|e| !e.is_lead()).count()
    }

    pub fn lead_count(&self) -> usize {
        self.edges.iter().filter(|e| e.is_lead()).count()
    }

    pub fn is_closed(&self) -> bool {
        self.lead_count() == 0
    }

    /// Total metric length: the sum of the finite edge lengths.
    pub fn total_length(&self) -> f64 {
        self.edges.iter().filter_map(|e| e.length()).sum()
    }

    /// Largest / smallest finite edge length (None if there are no bonds).
    pub fn max_length(&self) -> Option<f64> {
        self.edges.iter().filter_map(|e| e.length()).fold(None, |m, l| {
            Some(m.map_or(l, |m: f64| m.max(l)))
        })
    }

    pub fn min_length(&self) -> Option<f64> {
        self.edges.iter().filter_map(|e| e.length()).fold(None, |m, l| {
            Some(m.map_or(l, |m: f64| m.min(l)))
        })
    }

    /// Number of endpoints at `v` (loops count twice, leads once).
    pub fn degree(&self, v: VertexId) -> usize {
        self.edges
            .iter()
            .map(|e| {
                (e.origin == v) as usize
                    + (e.terminus() == Some(v)) as usize
            })
            .sum()
    }

    /// Condition at vertex `v`.
    pub fn condition(&self, v: VertexId) -> &VertexCondition {
        &self.vertices[v].condition
    }

    /// True when some vertex makes the edge scattering matrix k-dependent.
    pub fn has_k_dependent_scattering(&self) -> bool {
        self.vertices.iter().any(|v| v.condition.is_k_dependent())
    }

    /// True when the free constant function is an eigenfunction with E = 0:
    /// closed and every condition is Neumann-Kirchhoff (delta strength 0).
    pub fn has_free_zero_mode(&self) -> bool {
        self.is_closed()
            && self
                .vertices
                .iter()
                .all(|v| v.condition.delta_strength() == Some(0.0))
    }

    /// First Betti number `|E| - |V| + 1` (cycle rank) of a closed connected
    /// graph.
    pub fn betti_number(&self) -> Result<usize> {
        if !self.is_closed() {
            return Err(Error::ClosedGraphRequired);
        }
        let report = validate_graph(self);
        if !report.is_valid() {
            return Err(Error::InvalidGraph(report));
        }
        Ok(self.edge_count() + 1 - self.vertex_count())
    }

    /// Vertices reachable from vertex 0 along edges (either direction).
    fn reachable(&self) -> Vec<bool> {
        let mut seen = vec![false; self.vertex_count()];
        if self.vertices.is_empty() {
            return seen;
        }
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for e in &self.edges {
                let pair = match e.kind {
                    EdgeKind::Bond { terminus, .. } => Some((e.origin, terminus)),
                    EdgeKind::Lead => None,
                };
                if let Some((a, b)) = pair {
                    if a == v && a < seen.len() && b < seen.len() && !seen[b] {
                        seen[b] = true;
                        stack.push(b);
                    }
                    if b == v && a < seen.len() && !seen[a] {
                        seen[a] = true;
                        stack.push(a);
                    }
                }
            }
        }
        seen
    }

    /// Validate and return `self`, or the violation list as an error.
    pub fn checked(self) -> Result<Self> {
        let report = validate_graph(&self);
        if report.is_valid() {
            Ok(self)
        } else {
            Err(Error::InvalidGraph(report))
        }
    }
}

/// Check every metric-graph invariant; violations are data, not failures.
pub fn validate_graph(g: &MetricGraph) -> ValidationReport {
    let mut violations = Vec::new();
    let nv = g.vertex_count();
    for e in g.edges() {
        if e.origin >= nv {
            violations.push(Violation::BadVertexRef { edge: e.id, vertex: e.origin });
        }
        if let Some(t) = e.terminus() {
            if t >= nv {
                violations.push(Violation::BadVertexRef { edge: e.id, vertex: t });
            }
        }
        if let Some(l) = e.length() {
            if !(l > 0.0) || !l.is_finite() {
                violations.push(Violation::NonpositiveLength { edge: e.id });
            }
        }
    }
    // Degree and condition checks only make sense with valid endpoint refs.
    if violations.iter().all(|v| !matches!(v, Violation::BadVertexRef { .. })) {
        for v in g.vertices() {
            let d = g.degree(v.id);
            if d == 0 {
                violations.push(Violation::IsolatedVertex { vertex: v.id });
            }
            match &v.condition {
                VertexCondition::Delta(a) if !a.is_finite() => {
                    violations.push(Violation::NonFiniteCoupling { vertex: v.id });
                }
                VertexCondition::CustomUnitary(m) => {
                    if m.nrows() != d || m.ncols() != d {
                        violations.push(Violation::ConditionDimensionMismatch {
                            vertex: v.id,
                            expected: d,
                            got: m.nrows(),
                        });
                    } else {
                        let defect = crate::linalg::unitarity_defect(m);
                        if defect > 1e-12 {
                            violations.push(Violation::NotUnitary { vertex: v.id, defect });
                        }
                    }
                }
                _ => {}
            }
        }
        if nv > 0 && g.reachable().iter().any(|&s| !s) {
            violations.push(Violation::Disconnected);
        }
    }
    ValidationReport { violations }
}

/// Incremental construction of a [`MetricGraph`].
#[derive(Debug, Default)]
pub struct GraphBuilder {
    conditions: Vec<VertexCondition>,
    edges: Vec<(VertexId, Option<VertexId>, Option<f64>)>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add a vertex, returning its id.
    pub fn vertex(&mut self, condition: VertexCondition) -> VertexId {
        self.conditions.push(condition);
        self.conditions.len() - 1
    }

    /// Add a finite bond from `a` to `b` (a loop when `a == b`).
    pub fn bond(&mut self, a: VertexId, b: VertexId, length: f64) -> EdgeId {
        self.edges.push((a, Some(b), Some(length)));
        self.edges.len() - 1
    }

    /// Add a lead attached at `v`.
    pub fn lead(&mut self, v: VertexId) -> EdgeId {
        self.edges.push((v, None, None));
        self.edges.len() - 1
    }

    /// Finish, validating all metric-graph invariants.
    pub fn build(self) -> Result<MetricGraph> {
        MetricGraph::from_parts(self.conditions, self.edges).checked()
    }

    /// Finish without validation (for constructing deliberately invalid
    /// graphs in tests of [`validate_graph`]).
    pub fn build_unchecked(self) -> MetricGraph {
        MetricGraph::from_parts(self.conditions, self.edges)
    }
}

/// One channel in the directed-edge amplitude space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    /// Bond traversed in its stored orientation (`e+`).
    Forward(EdgeId),
    /// Bond traversed against its stored orientation (`e-`).
    Backward(EdgeId),
    /// Lead channel (one per lead; incoming and outgoing amplitudes share
    /// the index).
    Lead(EdgeId),
}

impl Channel {
    pub fn edge(&self) -> EdgeId {
        match *self {
            Channel::Forward(e) | Channel::Backward(e) | Channel::Lead(e) => e,
        }
    }
}

/// One endpoint slot at a vertex: the pair of channels that depart from and
/// arrive at the vertex through that endpoint.
#[derive(Debug, Clone, Copy)]
pub struct EndpointSlot {
    /// Channel whose origin is this vertex (outgoing amplitude row).
    pub out_channel: usize,
    /// Channel whose terminus is this vertex (incoming amplitude column).
    pub in_channel: usize,
}

/// Canonical bijection between directed bonds / lead channels and indices
/// `0..N`, `N = 2B + L`.
///
/// Layout: `[e_1+, ..., e_B+, e_1-, ..., e_B-, lead_1, ..., lead_L]`, bonds
/// and leads each in ascending edge-id order. The reversal map swaps
/// `e_j+ <-> e_j-` and fixes lead channels, so it is an involution.
#[derive(Debug, Clone)]
pub struct DirectedEdges {
    channels: Vec<Channel>,
    origin: Vec<VertexId>,
    terminus: Vec<VertexId>,
    lengths: Vec<Option<f64>>,
    n_bonds: usize,
    n_leads: usize,
    /// Per vertex, ordered endpoint slots (ascending edge id, origin
    /// endpoint before terminus endpoint for loops).
    slots: Vec<Vec<EndpointSlot>>,
}

impl DirectedEdges {
    /// Build the index for a validated graph.
    pub fn new(g: &MetricGraph) -> Self {
        let bonds: Vec<EdgeId> =
            g.edges().iter().filter(|e| !e.is_lead()).map(|e| e.id).collect();
        let leads: Vec<EdgeId> =
            g.edges().iter().filter(|e| e.is_lead()).map(|e| e.id).collect();
        let b = bonds.len();
        let n = 2 * b + leads.len();

        let mut channels = Vec::with_capacity(n);
        channels.extend(bonds.iter().map(|&e| Channel::Forward(e)));
        channels.extend(bonds.iter().map(|&e| Channel::Backward(e)));
        channels.extend(leads.iter().map(|&e| Channel::Lead(e)));

        let mut origin = vec![0; n];
        let mut terminus = vec![0; n];
        let mut lengths = vec![None; n];
        for (i, ch) in channels.iter().enumerate() {
            let edge = &g.edges()[ch.edge()];
            match ch {
                Channel::Forward(_) => {
                    origin[i] = edge.origin;
                    terminus[i] = edge.terminus().unwrap();
                    lengths[i] = edge.length();
                }
                Channel::Backward(_) => {
                    origin[i] = edge.terminus().unwrap();
                    terminus[i] = edge.origin;
                    lengths[i] = edge.length();
                }
                Channel::Lead(_) => {
                    // As a scattering source the lead wave arrives at the
                    // attachment vertex; as a target it departs from it.
                    origin[i] = edge.origin;
                    terminus[i] = edge.origin;
                }
            }
        }

        let mut slots = vec![Vec::new(); g.vertex_count()];
        let fwd = |edge: EdgeId| bonds.binary_search(&edge).unwrap();
        for e in g.edges() {
            match e.kind {
                EdgeKind::Bond { terminus: t, .. } => {
                    let f = fwd(e.id);
                    // Origin endpoint: depart along e+, arrive along e-.
                    slots[e.origin].push(EndpointSlot { out_channel: f, in_channel: b + f });
                    // Terminus endpoint: depart along e-, arrive along e+.
                    slots[t].push(EndpointSlot { out_channel: b + f, in_channel: f });
                }
                EdgeKind::Lead => {
                    let l = 2 * b + leads.binary_search(&e.id).unwrap();
                    slots[e.origin].push(EndpointSlot { out_channel: l, in_channel: l });
                }
            }
        }

        DirectedEdges {
            channels,
            origin,
            terminus,
            lengths,
            n_bonds: b,
            n_leads: leads.len(),
            slots,
        }
    }

    /// Total channel count `N = 2B + L`.
    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn bond_count(&self) -> usize {
        self.n_bonds
    }

    pub fn lead_count(&self) -> usize {
        self.n_leads
    }

    pub fn channel(&self, i: usize) -> Channel {
        self.channels[i]
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    /// Vertex the channel departs from.
    pub fn origin(&self, i: usize) -> VertexId {
        self.origin[i]
    }

    /// Vertex the channel arrives at.
    pub fn terminus(&self, i: usize) -> VertexId {
        self.terminus[i]
    }

    /// Finite length of the underlying edge (None for lead channels).
    pub fn length(&self, i: usize) -> Option<f64> {
        self.lengths[i]
    }

    /// Direction-reversal involution: swaps `e+ <-> e-`, fixes leads.
    pub fn reversal(&self, i: usize) -> usize {
        match self.channels[i] {
            Channel::Forward(_) => i + self.n_bonds,
            Channel::Backward(_) => i - self.n_bonds,
            Channel::Lead(_) => i,
        }
    }

    /// Follows relation: channel `a` can be entered after channel `b`
    /// (`b -> a`, i.e. `o(a) = t(b)` and neither endpoint usage is the
    /// blind side of a lead).
    pub fn follows(&self, b: usize, a: usize) -> bool {
        self.origin[a] == self.terminus[b]
    }

    /// Index of the forward channel of bond `edge`.
    pub fn forward_index(&self, edge: EdgeId) -> Option<usize> {
        self.channels[..self.n_bonds]
            .iter()
            .position(|c| c.edge() == edge)
    }

    /// Index of the lead channel of `edge`.
    pub fn lead_index(&self, edge: EdgeId) -> Option<usize> {
        self.channels[2 * self.n_bonds..]
            .iter()
            .position(|c| c.edge() == edge)
            .map(|p| p + 2 * self.n_bonds)
    }

    /// Ordered endpoint slots at vertex `v`; the slot order is the
    /// row/column order of the vertex scattering matrix.
    pub fn vertex_slots(&self, v: VertexId) -> &[EndpointSlot] {
        &self.slots[v]
    }
}

/// Build the canonical directed-edge index for a valid graph.
pub fn directed_edge_index(g: &MetricGraph) -> Result<DirectedEdges> {
    let report = validate_graph(g);
    if !report.is_valid() {
        return Err(Error::InvalidGraph(report));
    }
    Ok(DirectedEdges::new(g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builders;

    #[test]
    fn tadpole_is_valid() {
        let g = builders::tadpole(1.0, 1.0);
        assert!(validate_graph(&g).is_valid());
        assert_eq!(g.bond_count(), 2);
        assert_eq!(g.total_length(), 2.0);
        assert_eq!(g.betti_number().unwrap(), 1);
    }

    #[test]
    fn zero_length_edge_is_flagged() {
        let mut b = GraphBuilder::new();
        let v0 = b.vertex(VertexCondition::NeumannKirchhoff);
        let v1 = b.vertex(VertexCondition::NeumannKirchhoff);
        b.bond(v0, v1, 0.0);
        let report = validate_graph(&b.build_unchecked());
        assert_eq!(report.violations, vec![Violation::NonpositiveLength { edge: 0 }]);
    }

    #[test]
    fn disjoint_triangles_are_flagged() {
        let mut b = GraphBuilder::new();
        let vs: Vec<_> = (0..6).map(|_| b.vertex(VertexCondition::NeumannKirchhoff)).collect();
        for t in 0..2 {
            let o = 3 * t;
            b.bond(vs[o], vs[o + 1], 1.0);
            b.bond(vs[o + 1], vs[o + 2], 1.0);
            b.bond(vs[o + 2], vs[o], 1.0);
        }
        let report = validate_graph(&b.build_unchecked());
        assert!(report.violations.contains(&Violation::Disconnected));
    }

    #[test]
    fn betti_numbers() {
        assert_eq!(builders::tadpole(1.0, 2.0).betti_number().unwrap(), 1);
        assert_eq!(builders::star(&[1.0, 1.2, 1.4]).betti_number().unwrap(), 0);
        assert_eq!(builders::figure_eight(1.0, 1.3).betti_number().unwrap(), 2);
    }

    #[test]
    fn betti_rejects_open_graphs() {
        let g = builders::open_loop(1.0);
        assert!(matches!(g.betti_number(), Err(Error::ClosedGraphRequired)));
    }

    #[test]
    fn tadpole_channel_order_matches_amplitude_vector() {
        // Ordering (e1+, e2+, e1-, e2-) with e1 the tail and e2 the loop.
        let g = builders::tadpole(1.0, 1.0);
        let de = directed_edge_index(&g).unwrap();
        assert_eq!(de.len(), 4);
        assert_eq!(de.channel(0), Channel::Forward(0));
        assert_eq!(de.channel(1), Channel::Forward(1));
        assert_eq!(de.channel(2), Channel::Backward(0));
        assert_eq!(de.channel(3), Channel::Backward(1));
    }

    #[test]
    fn single_bond_reversal_is_swap() {
        let g = builders::interval(
            VertexCondition::NeumannKirchhoff,
            VertexCondition::NeumannKirchhoff,
            1.0,
        );
        let de = directed_edge_index(&g).unwrap();
        assert_eq!(de.len(), 2);
        assert_eq!(de.reversal(0), 1);
        assert_eq!(de.reversal(1), 0);
    }

    #[test]
    fn open_loop_has_three_channels() {
        let g = builders::open_loop(2.0);
        let de = directed_edge_index(&g).unwrap();
        assert_eq!(de.len(), 3);
        assert_eq!(de.bond_count(), 1);
        assert_eq!(de.lead_count(), 1);
    }

    #[test]
    fn reversal_is_involution() {
        for g in [
            builders::tadpole(1.0, 2.0),
            builders::star(&[0.7, 1.1, 1.9, 0.5]),
            builders::open_loop(1.0),
        ] {
            let de = directed_edge_index(&g).unwrap();
            for i in 0..de.len() {
                assert_eq!(de.reversal(de.reversal(i)), i);
            }
        }
    }

    #[test]
    fn total_length_ignores_leads_and_reindexing() {
        let g = builders::open_loop(2.5);
        assert_eq!(g.total_length(), 2.5);
    }
}
