//! The Dirichlet-to-Neumann hierarchy: per-edge DtN coefficients, the
//! all-vertex DtN matrix, Schur-complement reduction to a boundary vertex
//! set, and the DtN secular equation — an independent route to the spectrum
//! that works directly with wave-function values at the vertices.
//!
//! The matrix entries have poles at the Dirichlet eigenvalues of the
//! individual edges; wave numbers near those poles are masked during scans
//! (states hiding there — loop scars and edge-Dirichlet states — must be
//! recovered through the scattering route).

use crate::graph::{EdgeId, MetricGraph, VertexCondition, VertexId};
use crate::spectrum::SpectrumRecord;
use crate::{Error, RMatrix, Result};
use rayon::prelude::*;

/// `|sin(k l)|` below this counts as an edge-Dirichlet pole.
const POLE_SIN_TOL: f64 = 1e-12;

/// Condition-number limit for the interior block of a Schur reduction.
const INTERIOR_CONDITION_LIMIT: f64 = 1e12;

/// Per-edge DtN coefficients `A_e(k) = -k cot(k l)`, `B_e(k) = k / sin(k l)`.
#[derive(Debug, Clone, Copy)]
pub struct EdgeDtn {
    pub a: f64,
    pub b: f64,
}

/// Coefficients of the single-edge DtN map; errors at the Dirichlet
/// eigenvalues of the edge where both entries blow up.
pub fn edge_dtn(length: f64, k: f64) -> Result<EdgeDtn> {
    edge_dtn_for(length, k, usize::MAX)
}

fn edge_dtn_for(length: f64, k: f64, edge: EdgeId) -> Result<EdgeDtn> {
    let s = (k * length).sin();
    if s.abs() <= POLE_SIN_TOL {
        return Err(Error::EdgeDtnPole { edge });
    }
    let c = (k * length).cos();
    Ok(EdgeDtn { a: -k * c / s, b: k / s })
}

/// How loops enter the all-vertex DtN matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoopHandling {
    /// Break every loop with an extra Neumann-Kirchhoff vertex at its
    /// midpoint (the matrix gains one row per loop).
    SplitDummy,
    /// Keep loops and add `2 A_e + 2 B_e` (full loop length) to the
    /// diagonal entry of the base vertex.
    DirectAdjustment,
}

/// A DtN matrix over a vertex subset at spectral parameter `k`.
///
/// `vertices` maps row/column indices to working-graph vertex ids; dummy
/// vertices introduced by loop splitting have ids `>= g.vertex_count()` and
/// carry Neumann-Kirchhoff conditions.
#[derive(Debug, Clone)]
pub struct DtnMatrix {
    pub matrix: RMatrix,
    pub vertices: Vec<VertexId>,
    pub k: f64,
}

/// Edges of the working graph after loop preprocessing: `(u, v, length,
/// original edge id, is_loop)` plus the total vertex count.
fn working_edges(
    g: &MetricGraph,
    loops: LoopHandling,
) -> (Vec<(VertexId, VertexId, f64, EdgeId, bool)>, usize) {
    let mut edges = Vec::new();
    let mut next_vertex = g.vertex_count();
    for e in g.edges() {
        let l = e.length().expect("closed graph");
        let t = e.terminus().unwrap();
        if e.is_loop() {
            match loops {
                LoopHandling::SplitDummy => {
                    let w = next_vertex;
                    next_vertex += 1;
                    edges.push((e.origin, w, l / 2.0, e.id, false));
                    edges.push((w, t, l / 2.0, e.id, false));
                }
                LoopHandling::DirectAdjustment => {
                    edges.push((e.origin, t, l, e.id, true));
                }
            }
        } else {
            edges.push((e.origin, t, l, e.id, false));
        }
    }
    (edges, next_vertex)
}

/// Delta strength of a working vertex (`None` for Dirichlet).
fn vertex_theta(g: &MetricGraph, v: VertexId) -> Result<Option<f64>> {
    if v >= g.vertex_count() {
        return Ok(Some(0.0)); // dummy vertex, Neumann-Kirchhoff
    }
    match g.condition(v) {
        VertexCondition::NeumannKirchhoff => Ok(Some(0.0)),
        VertexCondition::Delta(a) => Ok(Some(*a)),
        VertexCondition::Dirichlet => Ok(None),
        VertexCondition::CustomUnitary(_) => Err(Error::InvalidArgument(
            "DtN maps require delta-type or Dirichlet vertex conditions".into(),
        )),
    }
}

/// All-vertex DtN matrix: diagonal entries sum `A_e` over incident edges,
/// off-diagonal entries sum `B_e` over connecting edges.
pub fn all_vertex_dtn(g: &MetricGraph, k: f64, loops: LoopHandling) -> Result<DtnMatrix> {
    let report = crate::graph::validate_graph(g);
    if !report.is_valid() {
        return Err(Error::InvalidGraph(report));
    }
    if !g.is_closed() {
        return Err(Error::ClosedGraphRequired);
    }
    let (edges, n) = working_edges(g, loops);
    let mut m = RMatrix::zeros(n, n);
    for &(u, v, l, id, is_loop) in &edges {
        let c = edge_dtn_for(l, k, id)?;
        if is_loop {
            m[(u, u)] += 2.0 * (c.a + c.b);
        } else {
            m[(u, u)] += c.a;
            m[(v, v)] += c.a;
            m[(u, v)] += c.b;
            m[(v, u)] += c.b;
        }
    }
    Ok(DtnMatrix { matrix: m, vertices: (0..n).collect(), k })
}

/// Schur-complement reduction of an all-vertex DtN matrix to a boundary
/// vertex set. Interior Dirichlet vertices are removed; interior
/// delta-type vertices are eliminated through the Schur complement of
/// `Lambda_II - Theta_II`.
pub fn reduce_dtn(g: &MetricGraph, dtn: &DtnMatrix, boundary: &[VertexId]) -> Result<DtnMatrix> {
    for &v in boundary {
        if !dtn.vertices.contains(&v) {
            return Err(Error::InvalidArgument(format!(
                "boundary vertex {v} not present in the DtN matrix"
            )));
        }
    }
    let mut boundary_idx = Vec::new();
    let mut interior_idx = Vec::new();
    for (i, &v) in dtn.vertices.iter().enumerate() {
        if boundary.contains(&v) {
            boundary_idx.push(i);
        } else if vertex_theta(g, v)?.is_some() {
            interior_idx.push(i);
        }
        // Interior Dirichlet rows/columns are dropped.
    }

    let pick = |rows: &[usize], cols: &[usize]| {
        RMatrix::from_fn(rows.len(), cols.len(), |i, j| dtn.matrix[(rows[i], cols[j])])
    };
    let bb = pick(&boundary_idx, &boundary_idx);
    if interior_idx.is_empty() {
        return Ok(DtnMatrix {
            matrix: bb,
            vertices: boundary_idx.iter().map(|&i| dtn.vertices[i]).collect(),
            k: dtn.k,
        });
    }

    let bi = pick(&boundary_idx, &interior_idx);
    let ib = pick(&interior_idx, &boundary_idx);
    let mut ii = pick(&interior_idx, &interior_idx);
    for (j, &i) in interior_idx.iter().enumerate() {
        ii[(j, j)] -= vertex_theta(g, dtn.vertices[i])?.unwrap();
    }

    let svd = ii.clone().svd(false, false);
    let (mut smax, mut smin) = (0.0f64, f64::INFINITY);
    for &s in svd.singular_values.iter() {
        smax = smax.max(s);
        smin = smin.min(s);
    }
    // Scale the singularity test against both the block itself and the
    // spectral parameter, so a 1x1 block that has collapsed to ~0 is caught.
    let scale = smax.max(dtn.k.abs()).max(1.0);
    if smin < scale / INTERIOR_CONDITION_LIMIT {
        return Err(Error::SingularInterior);
    }
    let solved = ii.lu().solve(&ib).ok_or(Error::SingularInterior)?;
    Ok(DtnMatrix {
        matrix: bb - bi * solved,
        vertices: boundary_idx.iter().map(|&i| dtn.vertices[i]).collect(),
        k: dtn.k,
    })
}

/// A masked wave number: an edge-Dirichlet pole of the DtN entries where
/// eigenvalues may hide.
#[derive(Debug, Clone, Copy)]
pub struct MaskedPole {
    pub k: f64,
    /// Original edge whose Dirichlet eigenvalue this is.
    pub edge: EdgeId,
}

/// Options for [`find_spectrum_dtn`].
#[derive(Debug, Clone)]
pub struct DtnOptions {
    /// Scan grid step; default `pi / (8 L_Gamma)`.
    pub grid_step: Option<f64>,
    /// Relative bisection tolerance.
    pub tol: f64,
    /// Exclusion radius around edge-Dirichlet poles.
    pub mask_radius: f64,
}

impl Default for DtnOptions {
    fn default() -> Self {
        DtnOptions { grid_step: None, tol: 1e-12, mask_radius: 1e-6 }
    }
}

/// DtN spectrum: the roots found plus the masked pole locations where
/// states may be hidden.
#[derive(Debug, Clone)]
pub struct DtnSpectrum {
    pub records: Vec<SpectrumRecord>,
    pub masked: Vec<MaskedPole>,
    pub k_min: f64,
    pub k_max: f64,
    pub grid_step: f64,
}

impl DtnSpectrum {
    /// True when `k` falls in a masked interval.
    pub fn is_masked(&self, k: f64, radius: f64) -> bool {
        self.masked.iter().any(|m| (m.k - k).abs() < radius)
    }
}

/// Spectrum from the DtN secular equation `det(Lambda(k; V) - Theta) = 0`.
///
/// Dirichlet vertices are removed from the matrix (their value is pinned
/// to zero); loops are broken with dummy vertices. The scan runs on the
/// pole-free form `det(Lambda - Theta) * prod_e sin(k l_e)` with
/// sign-change bisection, skipping the masked pole neighbourhoods.
pub fn find_spectrum_dtn(g: &MetricGraph, k_max: f64, opts: &DtnOptions) -> Result<DtnSpectrum> {
    let report = crate::graph::validate_graph(g);
    if !report.is_valid() {
        return Err(Error::InvalidGraph(report));
    }
    if !g.is_closed() {
        return Err(Error::ClosedGraphRequired);
    }
    let (edges, n_work) = working_edges(g, LoopHandling::SplitDummy);
    // Kept (non-Dirichlet) vertices and their couplings.
    let mut kept = Vec::new();
    let mut theta = Vec::new();
    for v in 0..n_work {
        if let Some(t) = vertex_theta(g, v)? {
            kept.push(v);
            theta.push(t);
        }
    }
    let index_of = {
        let mut idx = vec![usize::MAX; n_work];
        for (i, &v) in kept.iter().enumerate() {
            idx[v] = i;
        }
        idx
    };

    let total_len = g.total_length();
    let step = opts
        .grid_step
        .unwrap_or(std::f64::consts::PI / (8.0 * total_len))
        .min(k_max / 4.0);
    let k_floor = step;

    // Pole list over the working edges.
    let mut masked = Vec::new();
    for &(_, _, l, id, _) in &edges {
        let mut m = 1;
        loop {
            let k = m as f64 * std::f64::consts::PI / l;
            if k > k_max + opts.mask_radius {
                break;
            }
            if k > k_floor {
                masked.push(MaskedPole { k, edge: id });
            }
            m += 1;
        }
    }
    masked.sort_by(|a, b| a.k.partial_cmp(&b.k).unwrap());
    let is_masked =
        |k: f64| masked.iter().any(|m| (m.k - k).abs() < opts.mask_radius);

    // Pole-free secular form.
    let kept_ref = &kept;
    let theta_ref = &theta;
    let edges_ref = &edges;
    let index_ref = &index_of;
    let eval = move |k: f64| -> Option<f64> {
        let mut m = RMatrix::zeros(kept_ref.len(), kept_ref.len());
        let mut sin_prod = 1.0f64;
        for &(u, v, l, _, _) in edges_ref {
            let s = (k * l).sin();
            if s.abs() <= POLE_SIN_TOL {
                return None;
            }
            sin_prod *= s;
            let c = (k * l).cos();
            let (a_c, b_c) = (-k * c / s, k / s);
            let (iu, iv) = (index_ref[u], index_ref[v]);
            if iu != usize::MAX {
                m[(iu, iu)] += a_c;
            }
            if iv != usize::MAX {
                m[(iv, iv)] += a_c;
            }
            if iu != usize::MAX && iv != usize::MAX {
                m[(iu, iv)] += b_c;
                m[(iv, iu)] += b_c;
            }
        }
        for (i, &t) in theta_ref.iter().enumerate() {
            m[(i, i)] -= t;
        }
        Some(m.lu().determinant() * sin_prod)
    };

    if kept.is_empty() {
        return Ok(DtnSpectrum {
            records: Vec::new(),
            masked,
            k_min: k_floor,
            k_max,
            grid_step: step,
        });
    }

    let n_points = ((k_max - k_floor) / step).ceil() as usize + 1;
    let h = (k_max - k_floor) / (n_points - 1) as f64;
    let grid: Vec<f64> = (0..n_points).map(|i| k_floor + i as f64 * h).collect();
    let values: Vec<Option<f64>> = grid
        .par_iter()
        .map(|&k| if is_masked(k) { None } else { eval(k) })
        .collect();

    let mut roots: Vec<f64> = Vec::new();
    let mut hunt = |lo: f64, hi: f64, flo: f64, fhi: f64| {
        if flo == 0.0 {
            roots.push(lo);
        } else if flo.signum() != fhi.signum() {
            roots.push(bisect(&eval, lo, hi, flo, opts.tol));
        }
    };
    for i in 0..grid.len() - 1 {
        if let (Some(f0), Some(f1)) = (values[i], values[i + 1]) {
            // Fine sub-scan: catches double sign changes inside one cell.
            let sub = 8;
            let mut prev_k = grid[i];
            let mut prev_f = f0;
            for j in 1..=sub {
                let k = grid[i] + h * j as f64 / sub as f64;
                if is_masked(k) {
                    break;
                }
                let f = if j == sub { Some(f1) } else { eval(k) };
                let Some(f) = f else { break };
                hunt(prev_k, k, prev_f, f);
                prev_k = k;
                prev_f = f;
            }
        }
    }

    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * (1.0 + *a));
    // The sine factors clearing the poles create zeros of the scanned form
    // at the pole points themselves; anything inside a masked interval is a
    // masked state, not a DtN root.
    roots.retain(|&k| !is_masked(k));

    let records = roots
        .par_iter()
        .map(|&k| {
            // Residual and multiplicity from the eigenvalues of
            // Lambda(k) - Theta itself (entries are finite off the masks).
            let (rec, _) = assemble_kept(g, &edges, &kept, &theta, k);
            let eig = rec.symmetric_eigenvalues();
            let scale = eig.iter().fold(0.0f64, |m, &e| m.max(e.abs()));
            let mult = eig.iter().filter(|e| e.abs() < 1e-6 * (1.0 + scale)).count().max(1);
            let resid = eig.iter().fold(f64::INFINITY, |m, &e| m.min(e.abs()));
            SpectrumRecord { k, multiplicity: mult, residual: resid }
        })
        .collect();

    Ok(DtnSpectrum { records, masked, k_min: k_floor, k_max, grid_step: step })
}

fn assemble_kept(
    _g: &MetricGraph,
    edges: &[(VertexId, VertexId, f64, EdgeId, bool)],
    kept: &[VertexId],
    theta: &[f64],
    k: f64,
) -> (RMatrix, f64) {
    let mut index = std::collections::HashMap::new();
    for (i, &v) in kept.iter().enumerate() {
        index.insert(v, i);
    }
    let mut m = RMatrix::zeros(kept.len(), kept.len());
    let mut sin_prod = 1.0;
    for &(u, v, l, _, _) in edges {
        let s = (k * l).sin();
        sin_prod *= s;
        let c = (k * l).cos();
        let (a_c, b_c) = (-k * c / s, k / s);
        if let Some(&iu) = index.get(&u) {
            m[(iu, iu)] += a_c;
        }
        if let Some(&iv) = index.get(&v) {
            m[(iv, iv)] += a_c;
        }
        if let (Some(&iu), Some(&iv)) = (index.get(&u), index.get(&v)) {
            m[(iu, iv)] += b_c;
            m[(iv, iu)] += b_c;
        }
    }
    for (i, &t) in theta.iter().enumerate() {
        m[(i, i)] -= t;
    }
    (m, sin_prod)
}

fn bisect(f: &impl Fn(f64) -> Option<f64>, mut lo: f64, mut hi: f64, mut flo: f64, tol: f64) -> f64 {
    while hi - lo > tol * (1.0 + lo) {
        let mid = 0.5 * (lo + hi);
        let Some(fm) = f(mid) else { break };
        if fm == 0.0 {
            return mid;
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builders;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn edge_dtn_at_quarter_period() {
        // k l = pi/2: cot = 0, sin = 1.
        let k = 1.3;
        let l = PI / 2.0 / k;
        let c = edge_dtn(l, k).unwrap();
        assert!(c.a.abs() < 1e-12);
        assert!((c.b - k).abs() < 1e-12);
    }

    #[test]
    fn edge_dtn_identity() {
        // A^2 - B^2 = -k^2 wherever defined.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let k = rng.random_range(0.1f64..20.0);
            let l = rng.random_range(0.3f64..2.5);
            if (k * l).sin().abs() < 1e-6 {
                continue;
            }
            let c = edge_dtn(l, k).unwrap();
            let lhs = c.a * c.a - c.b * c.b;
            assert!(
                (lhs + k * k).abs() <= 1e-9 * (1.0 + k * k),
                "k = {k}, l = {l}: {lhs}"
            );
        }
    }

    #[test]
    fn edge_dtn_pole_is_an_error() {
        let k = 1.0;
        let l = PI;
        assert!(matches!(edge_dtn(l, k), Err(Error::EdgeDtnPole { .. })));
    }

    #[test]
    fn four_star_all_vertex_matrix() {
        let lengths = [0.9, 1.1, 1.3, 0.7];
        let g = builders::star(&lengths);
        let k = 1.234;
        let dtn = all_vertex_dtn(&g, k, LoopHandling::SplitDummy).unwrap();
        // Vertex order: center 0, tips 1..=4.
        let coeff: Vec<EdgeDtn> = lengths.iter().map(|&l| edge_dtn(l, k).unwrap()).collect();
        let m = &dtn.matrix;
        assert_eq!(m.nrows(), 5);
        let sum_a: f64 = coeff.iter().map(|c| c.a).sum();
        assert!((m[(0, 0)] - sum_a).abs() < 1e-12);
        for i in 0..4 {
            assert!((m[(i + 1, i + 1)] - coeff[i].a).abs() < 1e-12);
            assert!((m[(0, i + 1)] - coeff[i].b).abs() < 1e-12);
            assert!((m[(i + 1, 0)] - coeff[i].b).abs() < 1e-12);
        }
        // Tips are not adjacent to each other.
        for i in 1..5 {
            for j in 1..5 {
                if i != j {
                    assert_eq!(m[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn tadpole_dummy_vertex_matrix() {
        let (l1, l2) = (1.0, 1.6);
        let g = builders::tadpole(l1, l2);
        let k = 0.77;
        let dtn = all_vertex_dtn(&g, k, LoopHandling::SplitDummy).unwrap();
        // Vertices: 0 = tail end, 1 = junction, 2 = dummy midpoint.
        let c1 = edge_dtn(l1, k).unwrap();
        let c2 = edge_dtn(l2 / 2.0, k).unwrap();
        let m = &dtn.matrix;
        assert_eq!(m.nrows(), 3);
        assert!((m[(0, 0)] - c1.a).abs() < 1e-12);
        assert!((m[(0, 1)] - c1.b).abs() < 1e-12);
        assert!((m[(1, 1)] - (c1.a + 2.0 * c2.a)).abs() < 1e-12);
        assert!((m[(1, 2)] - 2.0 * c2.b).abs() < 1e-12);
        assert!((m[(2, 2)] - 2.0 * c2.a).abs() < 1e-12);
        assert_eq!(m[(0, 2)], 0.0);
    }

    #[test]
    fn square_with_diagonal_partitioned_matrix() {
        let lengths = [0.9, 1.1, 1.3, 0.7, 1.0];
        let g = builders::square_with_diagonal(lengths);
        let k = 0.93;
        let dtn = all_vertex_dtn(&g, k, LoopHandling::SplitDummy).unwrap();
        let c: Vec<EdgeDtn> = lengths.iter().map(|&l| edge_dtn(l, k).unwrap()).collect();
        let m = &dtn.matrix;
        // Edges: 0: v0-v2, 1: v2-v1, 2: v1-v3, 3: v3-v0, 4: v2-v3.
        assert!((m[(0, 0)] - (c[0].a + c[3].a)).abs() < 1e-12);
        assert!((m[(1, 1)] - (c[1].a + c[2].a)).abs() < 1e-12);
        assert!((m[(2, 2)] - (c[0].a + c[1].a + c[4].a)).abs() < 1e-12);
        assert!((m[(3, 3)] - (c[2].a + c[3].a + c[4].a)).abs() < 1e-12);
        assert_eq!(m[(0, 1)], 0.0);
        assert!((m[(0, 2)] - c[0].b).abs() < 1e-12);
        assert!((m[(0, 3)] - c[3].b).abs() < 1e-12);
        assert!((m[(1, 2)] - c[1].b).abs() < 1e-12);
        assert!((m[(1, 3)] - c[2].b).abs() < 1e-12);
        assert!((m[(2, 3)] - c[4].b).abs() < 1e-12);
    }

    #[test]
    fn star_reduction_matches_closed_form() {
        let lengths = [0.9, 1.1, 1.3, 0.7];
        let g = builders::star_with_tip_conditions(&lengths, |i| {
            if i >= 2 {
                VertexCondition::Dirichlet
            } else {
                VertexCondition::NeumannKirchhoff
            }
        });
        let k = 1.234;
        let dtn = all_vertex_dtn(&g, k, LoopHandling::SplitDummy).unwrap();
        let red = reduce_dtn(&g, &dtn, &[1, 2]).unwrap();
        let c: Vec<EdgeDtn> = lengths.iter().map(|&l| edge_dtn(l, k).unwrap()).collect();
        let sum_a: f64 = c.iter().map(|x| x.a).sum();
        assert_eq!(red.vertices, vec![1, 2]);
        assert!((red.matrix[(0, 0)] - (c[0].a - c[0].b * c[0].b / sum_a)).abs() < 1e-10);
        assert!((red.matrix[(1, 1)] - (c[1].a - c[1].b * c[1].b / sum_a)).abs() < 1e-10);
        assert!((red.matrix[(0, 1)] + c[0].b * c[1].b / sum_a).abs() < 1e-10);
        assert!((red.matrix[(0, 1)] - red.matrix[(1, 0)]).abs() < 1e-12);
    }

    #[test]
    fn two_tail_loop_reduction_matches_closed_form() {
        let (l1, l2, l3, l4) = (0.8, 1.2, 0.9, 1.05);
        let g = builders::tadpole_two_tails(l1, l2, l3, l4);
        let k = 0.63;
        let dtn = all_vertex_dtn(&g, k, LoopHandling::SplitDummy).unwrap();
        let red = reduce_dtn(&g, &dtn, &[0]).unwrap();
        let c1 = edge_dtn(l1, k).unwrap();
        let c2 = edge_dtn(l2, k).unwrap();
        let c3 = edge_dtn(l3, k).unwrap();
        let c4 = edge_dtn(l4, k).unwrap();
        let want = c1.a
            - c1.b * c1.b * (c2.a + c3.a + c4.a)
                / ((c1.a + c2.a + c3.a) * (c2.a + c3.a + c4.a) - (c2.b + c3.b).powi(2));
        assert_eq!(red.matrix.nrows(), 1);
        assert!((red.matrix[(0, 0)] - want).abs() < 1e-9, "{} vs {want}", red.matrix[(0, 0)]);
    }

    #[test]
    fn reduction_with_full_boundary_is_identity() {
        let g = builders::star(&[1.0, 1.2, 0.8]);
        let dtn = all_vertex_dtn(&g, 0.9, LoopHandling::SplitDummy).unwrap();
        let red = reduce_dtn(&g, &dtn, &[0, 1, 2, 3]).unwrap();
        assert!((red.matrix.clone() - dtn.matrix.clone()).iter().all(|x| x.abs() < 1e-14));
    }

    #[test]
    fn schur_reduction_is_transitive() {
        let g = builders::square_with_diagonal([0.9, 1.1, 1.3, 0.7, 1.0]);
        let k = 1.41;
        let dtn = all_vertex_dtn(&g, k, LoopHandling::SplitDummy).unwrap();
        let via_x = {
            let x = reduce_dtn(&g, &dtn, &[0, 1, 2]).unwrap();
            reduce_dtn(&g, &x, &[0, 1]).unwrap()
        };
        let direct = reduce_dtn(&g, &dtn, &[0, 1]).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!(
                    (via_x.matrix[(i, j)] - direct.matrix[(i, j)]).abs() < 1e-9,
                    "entry ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn singular_interior_is_detected() {
        // Path of two unit bonds; boundary = the two ends; interior = the
        // middle NK vertex. The reduction fails exactly when k^2 is an
        // eigenvalue of the path with Dirichlet ends: k = m pi / 2.
        let mut b = crate::graph::GraphBuilder::new();
        let v0 = b.vertex(VertexCondition::NeumannKirchhoff);
        let v1 = b.vertex(VertexCondition::NeumannKirchhoff);
        let v2 = b.vertex(VertexCondition::NeumannKirchhoff);
        b.bond(v0, v1, 1.0);
        b.bond(v1, v2, 1.0);
        let g = b.build().unwrap();
        let dtn = all_vertex_dtn(&g, PI / 2.0, LoopHandling::SplitDummy).unwrap();
        assert!(matches!(reduce_dtn(&g, &dtn, &[0, 2]), Err(Error::SingularInterior)));
        let dtn = all_vertex_dtn(&g, 1.3, LoopHandling::SplitDummy).unwrap();
        assert!(reduce_dtn(&g, &dtn, &[0, 2]).is_ok());
    }

    /// Dense-scan roots of the delta-tadpole secular equation
    /// `k cos(k l2/2) sin(k l1) + 2 k cos(k l1) sin(k l2/2)
    ///  - alpha cos(k l1) cos(k l2/2) = 0`.
    fn delta_tadpole_reference_roots(l1: f64, l2: f64, alpha: f64, k_max: f64) -> Vec<f64> {
        let f = |k: f64| {
            k * (k * l2 / 2.0).cos() * (k * l1).sin()
                + 2.0 * k * (k * l1).cos() * (k * l2 / 2.0).sin()
                - alpha * (k * l1).cos() * (k * l2 / 2.0).cos()
        };
        let mut roots = Vec::new();
        let step = 1e-4;
        let mut prev_k = step;
        let mut prev_f = f(prev_k);
        let mut k = prev_k + step;
        while k <= k_max {
            let fk = f(k);
            if prev_f == 0.0 {
                roots.push(prev_k);
            } else if prev_f.signum() != fk.signum() {
                let (mut lo, mut hi, mut flo) = (prev_k, k, prev_f);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    let fm = f(mid);
                    if fm == 0.0 || hi - lo < 1e-14 * (1.0 + lo) {
                        break;
                    }
                    if fm.signum() == flo.signum() {
                        lo = mid;
                        flo = fm;
                    } else {
                        hi = mid;
                    }
                }
                roots.push(0.5 * (lo + hi));
            }
            prev_k = k;
            prev_f = fk;
            k += step;
        }
        roots
    }

    #[test]
    fn delta_tadpole_dtn_roots_match_reference() {
        let (l1, l2) = (1.0, 2f64.sqrt());
        for alpha in [-2.0, 0.0, 3.0] {
            let g = builders::delta_tadpole(l1, l2, alpha);
            let spec = find_spectrum_dtn(&g, 12.0, &DtnOptions::default()).unwrap();
            let reference: Vec<f64> = delta_tadpole_reference_roots(l1, l2, alpha, 12.0)
                .into_iter()
                .filter(|&k| k > spec.k_min && !spec.is_masked(k, 1e-5))
                .collect();
            assert_eq!(
                spec.records.len(),
                reference.len(),
                "alpha = {alpha}: {:?} vs {:?}",
                spec.records,
                reference
            );
            for (r, want) in spec.records.iter().zip(reference.iter()) {
                assert!((r.k - want).abs() < 1e-8, "alpha = {alpha}: {} vs {want}", r.k);
            }
        }
    }

    #[test]
    fn loop_handling_modes_agree_on_roots() {
        // det(Lambda - Theta) carries the same roots whether the loop is
        // split with a dummy vertex or folded into the diagonal.
        let g = builders::delta_tadpole(1.0, 2f64.sqrt(), 1.5);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut checked = 0;
        while checked < 100 {
            let k: f64 = rng.random_range(0.2f64..15.0);
            let split = all_vertex_dtn(&g, k, LoopHandling::SplitDummy);
            let direct = all_vertex_dtn(&g, k, LoopHandling::DirectAdjustment);
            let (Ok(split), Ok(direct)) = (split, direct) else { continue };
            checked += 1;
            // Compare the two secular functions through their sign pattern
            // after pole clearing: split uses sin(k l/2)^2, direct sin(k l).
            let theta = [0.0, 1.5, 0.0];
            let det_split = {
                let mut m = split.matrix.clone();
                for i in 0..2 {
                    m[(i, i)] -= theta[i];
                }
                m.lu().determinant()
            };
            let det_direct = {
                let mut m = direct.matrix.clone();
                for i in 0..2 {
                    m[(i, i)] -= theta[i];
                }
                m.lu().determinant()
            };
            // Ratio is smooth and nonzero away from masked points, so the
            // root sets coincide; check det_direct == 0 iff det_split == 0
            // via a scaled comparison at this sample.
            if det_direct.abs() < 1e-6 {
                assert!(det_split.abs() < 1e-2, "k = {k}");
            }
        }
    }

    #[test]
    fn tadpole_loop_states_are_masked_not_found() {
        let (l1, l2) = (1.0, 2f64.sqrt());
        let g = builders::tadpole(l1, l2);
        let spec = find_spectrum_dtn(&g, 14.0, &DtnOptions::default()).unwrap();
        for n in 1..=3 {
            let loop_state = 2.0 * PI * n as f64 / l2;
            assert!(
                !spec.records.iter().any(|r| (r.k - loop_state).abs() < 1e-6),
                "loop state {loop_state} wrongly found by DtN"
            );
            assert!(spec.is_masked(loop_state, 1e-5), "loop state {loop_state} not masked");
        }
    }

    #[test]
    fn dtn_and_scattering_spectra_agree_on_generic_tadpole() {
        let (l1, l2) = (1.0, 2f64.sqrt());
        let g = builders::tadpole(l1, l2);
        let dtn = find_spectrum_dtn(&g, 12.0, &DtnOptions::default()).unwrap();
        let scat = crate::spectrum::find_spectrum(
            &g,
            12.0,
            &crate::spectrum::SpectrumOptions::default(),
        )
        .unwrap();
        // Every non-masked scattering root appears in the DtN list.
        let mut dtn_iter = dtn.records.iter();
        for s in scat.expanded() {
            if dtn.is_masked(s, 1e-5) {
                continue;
            }
            let d = dtn_iter.next().expect("enough DtN roots");
            assert!((d.k - s).abs() < 1e-8, "{} vs {s}", d.k);
        }
        assert!(dtn_iter.next().is_none());
    }
}
