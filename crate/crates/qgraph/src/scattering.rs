//! Scattering description of the wave dynamics: vertex scattering matrices,
//! the global edge scattering matrix `S`, the transport matrix `T(k, alpha)`,
//! the quantum map `U(k, alpha) = T S`, the open-graph scattering matrix and
//! the Wigner-Smith delay matrix.
//!
//! Matrices are indexed by the canonical [`DirectedEdges`] channel order
//! `[e_1+, ..., e_B+, e_1-, ..., e_B-, lead_1, ..., lead_L]`. Lead channels
//! accumulate no transport phase (identity rows in `T`).

use crate::graph::{directed_edge_index, DirectedEdges, MetricGraph, VertexCondition};
use crate::linalg::{self, IM};
use crate::{CMatrix, Complex, Error, Result};

/// Tolerance below which a unitarity defect is considered zero.
pub const UNITARITY_TOL: f64 = 1e-12;

/// Condition-number threshold above which `I - U_BB` is treated as a
/// removable singularity of the open scattering matrix.
pub const SINGULARITY_CONDITION_LIMIT: f64 = 1e12;

/// Wave-number offset used to resolve removable singularities by two-sided
/// evaluation.
const SINGULARITY_STEP: f64 = 1e-9;

/// Vertex scattering matrix for a condition at a vertex of the given degree.
///
/// Neumann-Kirchhoff: `-I + (2/d) E`; Dirichlet: `-I`; delta coupling of
/// strength `alpha`: `-I + 2/(d + i alpha / k) E` (k-dependent, singular at
/// k = 0); a custom unitary is returned as-is.
pub fn vertex_scattering_matrix(
    cond: &VertexCondition,
    degree: usize,
    k: f64,
) -> Result<CMatrix> {
    assert!(degree >= 1, "vertex degree must be at least 1");
    let d = degree;
    match cond {
        VertexCondition::NeumannKirchhoff => Ok(uniform_coupling(d, 2.0 / d as f64)),
        VertexCondition::Dirichlet => Ok(-CMatrix::identity(d, d)),
        VertexCondition::Delta(alpha) => {
            if *alpha == 0.0 {
                return Ok(uniform_coupling(d, 2.0 / d as f64));
            }
            if k == 0.0 {
                return Err(Error::DeltaAtZeroWaveNumber);
            }
            let c = Complex::new(2.0, 0.0) / Complex::new(d as f64, alpha / k);
            Ok(uniform_coupling_c(d, c))
        }
        VertexCondition::CustomUnitary(m) => Ok(m.clone()),
    }
}

fn uniform_coupling(d: usize, c: f64) -> CMatrix {
    uniform_coupling_c(d, Complex::new(c, 0.0))
}

/// `-I + c E` with `E` the all-ones matrix.
fn uniform_coupling_c(d: usize, c: Complex) -> CMatrix {
    CMatrix::from_fn(d, d, |i, j| if i == j { c - 1.0 } else { c })
}

/// Global edge scattering matrix with its k-dependence flag.
#[derive(Debug, Clone)]
pub struct EdgeScattering {
    pub matrix: CMatrix,
    /// True when any vertex carries a nonzero delta coupling.
    pub k_dependent: bool,
}

/// Assemble the edge scattering matrix: `S[a, b] = sigma^(v)[a, b]` when
/// channel `b` is followed by channel `a` at `v = t(b) = o(a)`, else 0.
pub fn assemble_edge_scattering(g: &MetricGraph, k: f64) -> Result<EdgeScattering> {
    let de = directed_edge_index(g)?;
    let matrix = assemble_scattering_with(g, &de, k)?;
    Ok(EdgeScattering { matrix, k_dependent: g.has_k_dependent_scattering() })
}

fn assemble_scattering_with(g: &MetricGraph, de: &DirectedEdges, k: f64) -> Result<CMatrix> {
    let n = de.len();
    let mut s = CMatrix::zeros(n, n);
    for v in g.vertices() {
        let slots = de.vertex_slots(v.id);
        let sigma = vertex_scattering_matrix(&v.condition, slots.len(), k)?;
        for (i, si) in slots.iter().enumerate() {
            for (j, sj) in slots.iter().enumerate() {
                s[(si.out_channel, sj.in_channel)] = sigma[(i, j)];
            }
        }
    }
    Ok(s)
}

/// Diagonal transport matrix `T(k, alpha)`: `e^{i(k l_j + alpha_j)}` on
/// forward bond channels, `e^{i(k l_j - alpha_j)}` on backward ones, 1 on
/// lead channels. `alpha` is indexed by edge id; `None` means no magnetic
/// phases.
pub fn transport_matrix(de: &DirectedEdges, k: f64, alpha: Option<&[f64]>) -> CMatrix {
    let n = de.len();
    let mut t = CMatrix::identity(n, n);
    for i in 0..n {
        if let Some(l) = de.length(i) {
            let a = alpha.map_or(0.0, |a| a[de.channel(i).edge()]);
            let sign = if i < de.bond_count() { 1.0 } else { -1.0 };
            t[(i, i)] = (IM * (k * l + sign * a)).exp();
        }
    }
    t
}

/// Evaluator producing `U(k, alpha) = T(k, alpha) S(k)`; caches `S` when it
/// is k-independent. Immutable, safe to share across threads.
#[derive(Debug, Clone)]
pub struct QuantumMap {
    graph: MetricGraph,
    directed: DirectedEdges,
    cached: Option<CMatrix>,
}

impl QuantumMap {
    pub fn new(g: &MetricGraph) -> Result<Self> {
        let directed = directed_edge_index(g)?;
        let cached = if g.has_k_dependent_scattering() {
            None
        } else {
            Some(assemble_scattering_with(g, &directed, 0.0)?)
        };
        Ok(QuantumMap { graph: g.clone(), directed, cached })
    }

    pub fn graph(&self) -> &MetricGraph {
        &self.graph
    }

    pub fn directed(&self) -> &DirectedEdges {
        &self.directed
    }

    /// Channel count `N = 2B + L`.
    pub fn dimension(&self) -> usize {
        self.directed.len()
    }

    pub fn is_k_dependent(&self) -> bool {
        self.cached.is_none()
    }

    /// Edge scattering matrix at `k`.
    pub fn scattering_at(&self, k: f64) -> Result<CMatrix> {
        match &self.cached {
            Some(s) => Ok(s.clone()),
            None => assemble_scattering_with(&self.graph, &self.directed, k),
        }
    }

    /// `U(k, alpha) = T(k, alpha) S(k)`.
    pub fn evaluate_magnetic(&self, k: f64, alpha: Option<&[f64]>) -> Result<CMatrix> {
        let s = self.scattering_at(k)?;
        let t = transport_matrix(&self.directed, k, alpha);
        Ok(t * s)
    }

    /// `U(k)` without magnetic phases.
    pub fn evaluate(&self, k: f64) -> Result<CMatrix> {
        self.evaluate_magnetic(k, None)
    }
}

/// One-shot quantum map evaluation; `alpha` is indexed by edge id.
pub fn quantum_map(g: &MetricGraph, k: f64, alpha: Option<&[f64]>) -> Result<CMatrix> {
    QuantumMap::new(g)?.evaluate_magnetic(k, alpha)
}

/// The four lead/bond blocks of an open-graph quantum map.
#[derive(Debug, Clone)]
pub struct OpenBlocks {
    pub ll: CMatrix,
    pub lb: CMatrix,
    pub bl: CMatrix,
    pub bb: CMatrix,
}

/// Partition `U` into lead/bond blocks following the channel layout.
pub fn open_blocks(u: &CMatrix, de: &DirectedEdges) -> OpenBlocks {
    let nb = 2 * de.bond_count();
    let nl = de.lead_count();
    OpenBlocks {
        ll: u.view((nb, nb), (nl, nl)).into(),
        lb: u.view((nb, 0), (nl, nb)).into(),
        bl: u.view((0, nb), (nb, nl)).into(),
        bb: u.view((0, 0), (nb, nb)).into(),
    }
}

/// Open-graph scattering result.
#[derive(Debug, Clone)]
pub struct OpenScattering {
    /// Lead-to-lead scattering matrix `S_Gamma(k)`, `L x L`, unitary.
    pub s_matrix: CMatrix,
    /// Internal response `R_Gamma(k) = (I - U_BB)^{-1} U_BL`, `2B x L`,
    /// mapping incoming lead amplitudes to internal bond amplitudes.
    pub internal_response: CMatrix,
    /// Set when `I - U_BB` was numerically singular and the result was
    /// obtained by averaging two-sided evaluations (removable singularity).
    pub singularity_resolved: bool,
}

/// `S_Gamma = U_LL + U_LB (I - U_BB)^{-1} U_BL` and the internal response.
///
/// At isolated wave numbers `I - U_BB` is singular; the singularity is
/// removable, so the result is computed at `k -+ 1e-9` and averaged, with
/// the event flagged.
pub fn open_scattering_matrix(g: &MetricGraph, k: f64) -> Result<OpenScattering> {
    let map = QuantumMap::new(g)?;
    if map.directed().lead_count() == 0 {
        return Err(Error::OpenGraphRequired);
    }
    match open_scattering_direct(&map, k)? {
        Some(res) => Ok(res),
        None => {
            let lo = open_scattering_direct(&map, k - SINGULARITY_STEP)?
                .ok_or(Error::SingularInterior)?;
            let hi = open_scattering_direct(&map, k + SINGULARITY_STEP)?
                .ok_or(Error::SingularInterior)?;
            Ok(OpenScattering {
                s_matrix: (lo.s_matrix + hi.s_matrix) * Complex::new(0.5, 0.0),
                internal_response: (lo.internal_response + hi.internal_response)
                    * Complex::new(0.5, 0.0),
                singularity_resolved: true,
            })
        }
    }
}

/// Direct evaluation; `None` when `I - U_BB` is too ill-conditioned.
fn open_scattering_direct(map: &QuantumMap, k: f64) -> Result<Option<OpenScattering>> {
    let de = map.directed();
    let u = map.evaluate(k)?;
    let blocks = open_blocks(&u, de);
    let nb = 2 * de.bond_count();
    if nb == 0 {
        return Ok(Some(OpenScattering {
            s_matrix: blocks.ll,
            internal_response: CMatrix::zeros(0, de.lead_count()),
            singularity_resolved: false,
        }));
    }
    let m = CMatrix::identity(nb, nb) - &blocks.bb;
    if linalg::condition_number(&m) > SINGULARITY_CONDITION_LIMIT {
        return Ok(None);
    }
    let response = linalg::solve(&m, &blocks.bl).ok_or(Error::SingularInterior)?;
    let s_matrix = &blocks.ll + &blocks.lb * &response;
    Ok(Some(OpenScattering {
        s_matrix,
        internal_response: response,
        singularity_resolved: false,
    }))
}

/// Wigner-Smith delay matrix `Q(k) = -i S_Gamma(k)^dagger dS_Gamma/dk`,
/// with the derivative by central differences of step `h`. Hermitian up to
/// `O(h^2)` for unitary `S_Gamma`.
pub fn wigner_smith(g: &MetricGraph, k: f64, h: f64) -> Result<CMatrix> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument("Wigner-Smith step must be positive".into()));
    }
    let center = open_scattering_matrix(g, k)?;
    let hi = open_scattering_matrix(g, k + h)?;
    let lo = open_scattering_matrix(g, k - h)?;
    if center.singularity_resolved || hi.singularity_resolved || lo.singularity_resolved {
        return Err(Error::ContinuationFailed(format!(
            "scattering matrix has a flagged singularity within {h:.3e} of k = {k}"
        )));
    }
    let ds = (hi.s_matrix - lo.s_matrix) / Complex::new(2.0 * h, 0.0);
    Ok(center.s_matrix.adjoint() * ds * (-IM))
}

/// `|| U U^dagger - I ||_max`, exposed for tests and diagnostics.
pub fn unitarity_defect(m: &CMatrix) -> f64 {
    linalg::unitarity_defect(m)
}
