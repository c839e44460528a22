//! Nodal statistics and the magnetic interpretation of the nodal surplus:
//! zero counts of real eigenfunctions, nodal-domain counts, the empirical
//! surplus distribution, and the finite-difference magnetic Hessian whose
//! Morse index reproduces the surplus for generic states.
//!
//! Eigenfunctions are `R_e cos(kx + theta_e)` on each edge after the real
//! gauge, so zeros are counted analytically from the phase interval. Genericity
//! means a simple eigenvalue whose eigenfunction does not vanish at any
//! non-Dirichlet vertex; non-generic states are skipped and reported.

use crate::graph::{EdgeKind, MetricGraph, VertexCondition};
use crate::spectrum::{
    eigenfunctions_at, find_spectrum, find_spectrum_magnetic, zero_mode_count, Eigenfunction,
    Spectrum, SpectrumOptions,
};
use crate::{Error, RMatrix, Result};

/// Relative vertex-zero threshold of the genericity check.
const VERTEX_ZERO_TOL: f64 = 1e-6;

/// Nodal quantities of one eigenfunction.
#[derive(Debug, Clone, Copy)]
pub struct NodalData {
    /// Spectral index `n` (1-based, counting the `E = 0` state of a
    /// Neumann-Kirchhoff graph as `n = 1`).
    pub index: usize,
    pub k: f64,
    /// Nodal count `phi`: zeros on the open edges.
    pub nodal_count: usize,
    /// Nodal domain count `nu`.
    pub domain_count: usize,
    /// Surplus `sigma_n = phi - (n - 1)`.
    pub surplus: i64,
    /// Deficiency `delta_n = n - nu`.
    pub deficiency: i64,
    pub generic: bool,
}

/// Genericity check: real gauge and no vertex is closer to a zero than
/// `1e-6` of the sup norm (Dirichlet vertices excepted).
fn check_vertex_genericity(g: &MetricGraph, ef: &Eigenfunction) -> Result<()> {
    if !ef.real_gauge {
        return Err(Error::NonGeneric("eigenfunction is not in real gauge".into()));
    }
    let sup = ef.sup_norm();
    for v in g.vertices() {
        if matches!(v.condition, VertexCondition::Dirichlet) {
            continue;
        }
        // Value at the vertex from any incident edge endpoint.
        let value = g
            .edges()
            .iter()
            .find_map(|e| {
                if e.origin == v.id {
                    Some(ef.value(e.id, 0.0))
                } else if e.terminus() == Some(v.id) {
                    Some(ef.value(e.id, e.length().unwrap()))
                } else {
                    None
                }
            })
            .expect("vertex has an endpoint");
        if value.norm() <= VERTEX_ZERO_TOL * sup {
            return Err(Error::NonGeneric(format!(
                "eigenfunction vanishes at vertex {} (|psi| = {:.3e})",
                v.id,
                value.norm()
            )));
        }
    }
    Ok(())
}

/// Zeros of `psi_e` strictly inside edge `e`, counted from the phase
/// interval of `2|c| cos(kx + theta)`.
fn zeros_on_edge(ef: &Eigenfunction, edge: usize) -> usize {
    let amp = ef
        .amplitudes()
        .iter()
        .find(|a| a.edge == edge)
        .expect("edge amplitudes present");
    let k = ef.k;
    if amp.forward.norm() == 0.0 {
        return 0;
    }
    let theta = amp.forward.arg();
    // Zeros at kx + theta = pi/2 + m pi, x in (0, l): strictly between
    // lo = (theta - pi/2)/pi and hi = (k l + theta - pi/2)/pi. Endpoint
    // zeros (Dirichlet vertices) land exactly on integers; a small inward
    // margin keeps the count strictly interior. Genericity keeps interior
    // zeros much farther than the margin from non-Dirichlet endpoints.
    const MARGIN: f64 = 1e-9;
    let lo = (theta - std::f64::consts::FRAC_PI_2) / std::f64::consts::PI + MARGIN;
    let hi =
        (k * amp.length + theta - std::f64::consts::FRAC_PI_2) / std::f64::consts::PI - MARGIN;
    (hi.floor() - lo.floor()).max(0.0) as usize
}

/// Nodal count `phi`: the number of interior zeros over all edges.
/// Requires a generic real-gauge eigenfunction (vertex zeros rejected);
/// Dirichlet vertices are not nodal points.
pub fn nodal_count(g: &MetricGraph, ef: &Eigenfunction) -> Result<usize> {
    check_vertex_genericity(g, ef)?;
    Ok(g.edges().iter().map(|e| zeros_on_edge(ef, e.id)).sum())
}

/// Nodal domain count `nu`: connected components of the graph cut at the
/// interior zeros (vertices never cut — Dirichlet vertices are excluded
/// from the nodal set by definition, all others are nonzero by
/// genericity).
pub fn nodal_domain_count(g: &MetricGraph, ef: &Eigenfunction) -> Result<usize> {
    check_vertex_genericity(g, ef)?;
    // Segments per edge: zeros + 1; connect end segments through vertices.
    let mut segment_offset = vec![0usize; g.edge_count() + 1];
    let mut zeros = vec![0usize; g.edge_count()];
    for e in g.edges() {
        zeros[e.id] = zeros_on_edge(ef, e.id);
        segment_offset[e.id + 1] = segment_offset[e.id] + zeros[e.id] + 1;
    }
    let total = segment_offset[g.edge_count()];
    let mut parent: Vec<usize> = (0..total).collect();
    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut union = |parent: &mut Vec<usize>, a: usize, b: usize| {
        let (ra, rb) = (find(parent, a), find(parent, b));
        if ra != rb {
            parent[ra] = rb;
        }
    };
    for v in g.vertices() {
        // Merge all edge-end segments meeting at this vertex.
        let mut anchor: Option<usize> = None;
        for e in g.edges() {
            let mut ends = Vec::new();
            if e.origin == v.id {
                ends.push(segment_offset[e.id]); // first segment
            }
            if e.terminus() == Some(v.id) {
                ends.push(segment_offset[e.id] + zeros[e.id]); // last segment
            }
            for s in ends {
                match anchor {
                    None => anchor = Some(s),
                    Some(a) => union(&mut parent, a, s),
                }
            }
        }
    }
    let mut roots = std::collections::BTreeSet::new();
    for i in 0..total {
        let r = find(&mut parent, i);
        roots.insert(r);
    }
    Ok(roots.len())
}

/// Nodal data of the state with (1-based) spectral index `index`.
pub fn nodal_data(g: &MetricGraph, index: usize, ef: &Eigenfunction) -> Result<NodalData> {
    let phi = nodal_count(g, ef)?;
    let nu = nodal_domain_count(g, ef)?;
    Ok(NodalData {
        index,
        k: ef.k,
        nodal_count: phi,
        domain_count: nu,
        surplus: phi as i64 - (index as i64 - 1),
        deficiency: index as i64 - nu as i64,
        generic: true,
    })
}

/// Empirical distribution of the nodal surplus over the first `n_states`
/// states.
#[derive(Debug, Clone)]
pub struct SurplusDistribution {
    /// `P(sigma = s)` for `s = 0..=beta`, over the generic states.
    pub probabilities: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
    /// `|mean - beta/2|` (the asymptotic mean is `beta / 2`).
    pub mean_deviation_from_half_beta: f64,
    /// Binomial-style standard error of the mean.
    pub mean_std_error: f64,
    /// States skipped as non-generic (degenerate or vertex-vanishing).
    pub skipped_non_generic: usize,
    /// Generic states actually counted.
    pub counted: usize,
    /// Surpluses falling outside `[0, beta]` (should stay 0).
    pub out_of_bounds: usize,
}

/// Compute nodal data for the first `n_states` states (spectral indices
/// `1..=n_states`, including the `E = 0` mode of NK graphs); non-generic
/// states are skipped and counted.
pub fn nodal_sequence(g: &MetricGraph, n_states: usize) -> Result<Vec<NodalData>> {
    let report = crate::graph::validate_graph(g);
    if !report.is_valid() {
        return Err(Error::InvalidGraph(report));
    }
    if !g.is_closed() {
        return Err(Error::ClosedGraphRequired);
    }
    let zero_modes = zero_mode_count(g);
    let total_len = g.total_length();
    let mut k_max = (n_states + 4) as f64 * std::f64::consts::PI / total_len;
    let spectrum = loop {
        let s = find_spectrum(g, k_max, &SpectrumOptions::default())?;
        if s.state_count() + zero_modes >= n_states {
            break s;
        }
        k_max *= 1.3;
    };

    let mut out = Vec::new();
    let mut index = 0usize;
    if zero_modes == 1 {
        // The constant eigenfunction: no zeros, one domain.
        index = 1;
        out.push(NodalData {
            index: 1,
            k: 0.0,
            nodal_count: 0,
            domain_count: 1,
            surplus: 0,
            deficiency: 0,
            generic: true,
        });
    }
    for r in &spectrum.records {
        if index >= n_states {
            break;
        }
        if r.multiplicity > 1 {
            for _ in 0..r.multiplicity {
                index += 1;
                out.push(NodalData {
                    index,
                    k: r.k,
                    nodal_count: 0,
                    domain_count: 0,
                    surplus: 0,
                    deficiency: 0,
                    generic: false,
                });
            }
            continue;
        }
        index += 1;
        let efs = eigenfunctions_at(g, r.k)?;
        let data = efs
            .first()
            .ok_or(Error::ResidualTooLarge { k: r.k, residual: r.residual, tol: 2e-7 })
            .and_then(|ef| nodal_data(g, index, ef));
        match data {
            Ok(d) => out.push(d),
            Err(Error::NonGeneric(_)) => out.push(NodalData {
                index,
                k: r.k,
                nodal_count: 0,
                domain_count: 0,
                surplus: 0,
                deficiency: 0,
                generic: false,
            }),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Empirical surplus distribution over the first `n_states` states.
pub fn surplus_distribution(g: &MetricGraph, n_states: usize) -> Result<SurplusDistribution> {
    let beta = g.betti_number()?;
    let seq = nodal_sequence(g, n_states)?;
    let mut counts = vec![0usize; beta + 1];
    let mut skipped = 0usize;
    let mut out_of_bounds = 0usize;
    for d in &seq {
        if !d.generic {
            skipped += 1;
            continue;
        }
        if d.surplus < 0 || d.surplus > beta as i64 {
            out_of_bounds += 1;
            continue;
        }
        counts[d.surplus as usize] += 1;
    }
    let counted: usize = counts.iter().sum();
    if counted == 0 {
        return Err(Error::InsufficientData("no generic states found".into()));
    }
    let probabilities: Vec<f64> =
        counts.iter().map(|&c| c as f64 / counted as f64).collect();
    let mean: f64 =
        probabilities.iter().enumerate().map(|(s, p)| s as f64 * p).sum();
    let variance: f64 = probabilities
        .iter()
        .enumerate()
        .map(|(s, p)| (s as f64 - mean).powi(2) * p)
        .sum();
    Ok(SurplusDistribution {
        probabilities,
        mean,
        variance,
        mean_deviation_from_half_beta: (mean - beta as f64 / 2.0).abs(),
        mean_std_error: (variance / counted as f64).sqrt(),
        skipped_non_generic: skipped,
        counted,
        out_of_bounds,
    })
}

/// Magnetic eigenvalue branch `k_n(alpha)` around `alpha = 0` with its
/// finite-difference Hessian data.
#[derive(Debug, Clone)]
pub struct MagneticBranch {
    pub base_k: f64,
    /// Norm of the full finite-difference gradient at `alpha = 0`
    /// (`alpha = 0` is a critical point, so this is a consistency check).
    pub gradient_norm: f64,
    /// Hessian over the reduced parameterization: one magnetic parameter
    /// per independent cycle (non-tree edge), the rest gauged to zero.
    pub reduced_hessian: RMatrix,
    pub reduced_eigenvalues: Vec<f64>,
    /// Number of negative reduced-Hessian eigenvalues.
    pub morse_index: usize,
    /// Hessian over all `|E|` magnetic parameters.
    pub full_hessian: RMatrix,
    pub full_eigenvalues: Vec<f64>,
    /// Kernel dimension of the full Hessian (must be `|E| - beta`).
    pub kernel_dimension: usize,
    /// Cycle (non-tree) edge ids carrying the reduced parameters.
    pub cycle_edges: Vec<usize>,
}

/// Non-tree edges of a spanning tree (one per independent cycle).
fn cycle_edges(g: &MetricGraph) -> Vec<usize> {
    let mut in_tree = vec![false; g.vertex_count()];
    let mut cycle = Vec::new();
    in_tree[0] = true;
    let mut grew = true;
    let mut tree_edges = vec![false; g.edge_count()];
    while grew {
        grew = false;
        for e in g.edges() {
            if tree_edges[e.id] {
                continue;
            }
            if let EdgeKind::Bond { terminus, .. } = e.kind {
                let (a, b) = (e.origin, terminus);
                if in_tree[a] != in_tree[b] {
                    in_tree[a] = true;
                    in_tree[b] = true;
                    tree_edges[e.id] = true;
                    grew = true;
                }
            }
        }
    }
    for e in g.edges() {
        if !e.is_lead() && !tree_edges[e.id] {
            cycle.push(e.id);
        }
    }
    cycle
}

/// Continue the root `k_n` of the magnetic secular equation to parameter
/// `alpha` by minimizing the smallest singular value within the bracket.
fn continue_root(
    g: &MetricGraph,
    alpha: &[f64],
    k0: f64,
    half_window: f64,
    tol: f64,
) -> Result<f64> {
    let opts = SpectrumOptions {
        grid_step: Some(half_window / 4.0),
        tol,
        residual_tol: None,
        zoom_depth: 4,
    };
    let lo = (k0 - half_window).max(half_window * 1e-3);
    let spec = find_spectrum_magnetic(g, k0 + half_window, Some(alpha), &opts)?;
    let candidates: Vec<f64> =
        spec.records.iter().map(|r| r.k).filter(|&k| k >= lo).collect();
    candidates
        .iter()
        .min_by(|a, b| {
            ((*a - k0).abs()).partial_cmp(&((*b - k0).abs())).unwrap()
        })
        .copied()
        .ok_or_else(|| {
            Error::ContinuationFailed(format!(
                "no magnetic root within {half_window:.3e} of k = {k0}"
            ))
        })
}

/// Magnetic Hessian of `k_n(alpha)` at `alpha = 0` with its Morse index.
///
/// `state` selects the record in `spectrum`; the eigenvalue must be simple
/// and its eigenfunction vertex-nonvanishing (generic). Central
/// differences of step `fd_step` (default 1e-4 when zero is passed);
/// Hessian eigenvalues split into negative / kernel / positive with
/// threshold `1e-3 * max |eigenvalue|`.
pub fn magnetic_hessian_morse_index(
    g: &MetricGraph,
    spectrum: &Spectrum,
    state: usize,
    fd_step: f64,
) -> Result<MagneticBranch> {
    let record = spectrum
        .records
        .get(state)
        .ok_or_else(|| Error::InvalidArgument(format!("no spectral record {state}")))?;
    if record.multiplicity != 1 {
        return Err(Error::NonGeneric(format!(
            "eigenvalue at k = {} has multiplicity {}",
            record.k, record.multiplicity
        )));
    }
    let efs = eigenfunctions_at(g, record.k)?;
    check_vertex_genericity(g, &efs[0])?;

    let h = if fd_step > 0.0 { fd_step } else { 1e-4 };
    let k0 = record.k;
    // Continuation window: half the distance to the neighbouring records.
    let prev = if state > 0 { spectrum.records[state - 1].k } else { spectrum.k_min };
    let next = spectrum
        .records
        .get(state + 1)
        .map(|r| r.k)
        .unwrap_or(k0 + std::f64::consts::PI / g.total_length());
    let half_window = 0.5 * (k0 - prev).min(next - k0);
    if half_window <= 0.0 {
        return Err(Error::ContinuationFailed("degenerate neighbour spacing".into()));
    }

    let n_edges = g.edge_count();
    let solve = |alpha: &[f64]| continue_root(g, alpha, k0, half_window, 1e-13);

    let k_center = solve(&vec![0.0; n_edges])?;
    let mut full = RMatrix::zeros(n_edges, n_edges);
    let mut gradient = vec![0.0; n_edges];
    // Diagonal entries and gradient.
    let mut plus = vec![0.0; n_edges];
    let mut minus = vec![0.0; n_edges];
    for e in 0..n_edges {
        let mut a = vec![0.0; n_edges];
        a[e] = h;
        plus[e] = solve(&a)?;
        a[e] = -h;
        minus[e] = solve(&a)?;
        gradient[e] = (plus[e] - minus[e]) / (2.0 * h);
        full[(e, e)] = (plus[e] - 2.0 * k_center + minus[e]) / (h * h);
    }
    // Mixed entries by the 4-point stencil.
    for i in 0..n_edges {
        for j in (i + 1)..n_edges {
            let mut a = vec![0.0; n_edges];
            a[i] = h;
            a[j] = h;
            let pp = solve(&a)?;
            a[j] = -h;
            let pm = solve(&a)?;
            a[i] = -h;
            a[j] = h;
            let mp = solve(&a)?;
            a[j] = -h;
            let mm = solve(&a)?;
            let v = (pp - pm - mp + mm) / (4.0 * h * h);
            full[(i, j)] = v;
            full[(j, i)] = v;
        }
    }

    let cycles = cycle_edges(g);
    let beta = cycles.len();
    let reduced = RMatrix::from_fn(beta, beta, |i, j| full[(cycles[i], cycles[j])]);

    let mut full_eigenvalues: Vec<f64> =
        full.clone().symmetric_eigenvalues().iter().copied().collect();
    full_eigenvalues.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut reduced_eigenvalues: Vec<f64> = if beta > 0 {
        reduced.clone().symmetric_eigenvalues().iter().copied().collect()
    } else {
        Vec::new()
    };
    reduced_eigenvalues.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let scale = full_eigenvalues.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    let threshold = 1e-3 * scale.max(1e-12);
    let morse_index = reduced_eigenvalues.iter().filter(|&&e| e < -threshold).count();
    let kernel_dimension = full_eigenvalues.iter().filter(|e| e.abs() <= threshold).count();
    if kernel_dimension != n_edges - beta {
        return Err(Error::ContinuationFailed(format!(
            "full magnetic Hessian kernel has dimension {kernel_dimension}, expected {}",
            n_edges - beta
        )));
    }

    Ok(MagneticBranch {
        base_k: k_center,
        gradient_norm: gradient.iter().map(|x| x * x).sum::<f64>().sqrt(),
        reduced_hessian: reduced,
        reduced_eigenvalues,
        morse_index,
        full_hessian: full,
        full_eigenvalues,
        kernel_dimension,
        cycle_edges: cycles,
    })
}
