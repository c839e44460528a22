//! Secular function, wave-number spectrum and eigenfunctions of closed
//! graphs.
//!
//! The spectrum is located by scanning the smallest singular value of
//! `I - U(k)` on a uniform grid: it is real, nonnegative, and vanishes
//! exactly at eigenvalues (including degenerate ones), unlike the wildly
//! oscillatory complex secular function. Local minima are bracketed and
//! refined by golden-section search; multiplicities come from the number of
//! vanishing singular values.

use crate::graph::{Channel, EdgeId, MetricGraph, VertexCondition};
use crate::linalg::{self, IM};
use crate::scattering::QuantumMap;
use crate::{CMatrix, Complex, Error, Result};
use rayon::prelude::*;

/// Secular function `xi(k) = det(I - U(k))`; its positive zeros, with
/// multiplicity, are the wave-number spectrum.
pub fn secular_function(g: &MetricGraph, k: f64) -> Result<Complex> {
    let map = QuantumMap::new(g)?;
    let u = map.evaluate(k)?;
    let n = u.nrows();
    Ok(linalg::determinant(&(CMatrix::identity(n, n) - u)))
}

/// Magnetic secular function `det(I - T(k, alpha) S(k))`.
pub fn magnetic_secular_function(g: &MetricGraph, k: f64, alpha: &[f64]) -> Result<Complex> {
    let map = QuantumMap::new(g)?;
    let u = map.evaluate_magnetic(k, Some(alpha))?;
    let n = u.nrows();
    Ok(linalg::determinant(&(CMatrix::identity(n, n) - u)))
}

/// Options for [`find_spectrum`].
#[derive(Debug, Clone)]
pub struct SpectrumOptions {
    /// Scan grid step; default `pi / (8 L_Gamma)`.
    pub grid_step: Option<f64>,
    /// Relative refinement tolerance: brackets are shrunk below
    /// `tol * (1 + k)`.
    pub tol: f64,
    /// Acceptance threshold on the smallest singular value of `I - U(k)`;
    /// default `1e-9 * N`.
    pub residual_tol: Option<f64>,
    /// Recursion depth for zooming into intervals where the eigenphase
    /// count exceeds the roots found (resolves near-degenerate pairs).
    pub zoom_depth: usize,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        SpectrumOptions { grid_step: None, tol: 1e-12, residual_tol: None, zoom_depth: 12 }
    }
}

/// One spectral point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumRecord {
    /// Wave number `k_n > 0`; the eigenvalue is `E_n = k_n^2`.
    pub k: f64,
    pub multiplicity: usize,
    /// Smallest singular value of `I - U(k_n)`.
    pub residual: f64,
}

/// Root-counting audit of a completed scan.
#[derive(Debug, Clone)]
pub struct ScanAudit {
    /// States predicted on the scanned interval by the phase winding of
    /// `det U(k)` (equals the Weyl estimate when `S` is constant).
    pub winding_states: f64,
    /// Weyl estimate `L_Gamma (k_max - k_floor) / pi`.
    pub weyl_estimate: f64,
    /// States found (multiplicities expanded).
    pub found_states: usize,
    /// Positive when the audit suspects missed roots after all rescans.
    pub suspected_missing: usize,
    /// True when the eigenphase-monotonicity assumption behind the audit is
    /// unproven (k-dependent scattering); the audit is then a heuristic.
    pub heuristic: bool,
}

/// Ordered positive wave-number spectrum with scan metadata.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub records: Vec<SpectrumRecord>,
    pub k_min: f64,
    pub k_max: f64,
    pub grid_step: f64,
    pub tol: f64,
    pub audit: ScanAudit,
    pub warnings: Vec<String>,
}

impl Spectrum {
    /// Wave numbers with multiplicities expanded.
    pub fn expanded(&self) -> Vec<f64> {
        self.records
            .iter()
            .flat_map(|r| std::iter::repeat(r.k).take(r.multiplicity))
            .collect()
    }

    /// Total state count (multiplicities expanded).
    pub fn state_count(&self) -> usize {
        self.records.iter().map(|r| r.multiplicity).sum()
    }

    /// Eigenvalues `E_n = k_n^2`, multiplicities expanded.
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.expanded().iter().map(|k| k * k).collect()
    }
}

/// Number of `E = 0` eigenvalues the secular scan cannot see: 1 for a
/// connected closed graph where the constant function is an eigenstate
/// (all conditions Neumann-Kirchhoff), else 0.
pub fn zero_mode_count(g: &MetricGraph) -> usize {
    usize::from(g.has_free_zero_mode())
}

/// Locate all wave numbers in `(grid_step, k_max]` at which `I - U(k)` is
/// singular, with multiplicities.
pub fn find_spectrum(g: &MetricGraph, k_max: f64, opts: &SpectrumOptions) -> Result<Spectrum> {
    find_spectrum_magnetic(g, k_max, None, opts)
}

/// [`find_spectrum`] with magnetic phases `alpha` (indexed by edge id).
pub fn find_spectrum_magnetic(
    g: &MetricGraph,
    k_max: f64,
    alpha: Option<&[f64]>,
    opts: &SpectrumOptions,
) -> Result<Spectrum> {
    let map = QuantumMap::new(g)?;
    if !g.is_closed() {
        return Err(Error::ClosedGraphRequired);
    }
    if !(k_max > 0.0) {
        return Err(Error::InvalidArgument("k_max must be positive".into()));
    }

    let total_len = g.total_length();
    let mut warnings = Vec::new();
    if g.vertices().iter().any(|v| matches!(v.condition, VertexCondition::Delta(a) if a < 0.0)) {
        warnings.push(
            "negative delta couplings present: any negative-energy spectrum is not searched"
                .to_string(),
        );
    }

    let step = opts
        .grid_step
        .unwrap_or(std::f64::consts::PI / (8.0 * total_len))
        .min(k_max / 4.0);
    let n_channels = map.dimension();
    let accept = opts.residual_tol.unwrap_or(1e-9 * n_channels as f64);
    let heuristic = map.is_k_dependent();
    let k_floor = step;

    let scanner = RootScanner {
        map: &map,
        alpha,
        tol: opts.tol,
        accept,
        lips: lipschitz_bound(&map, k_floor),
        constant_s: !heuristic,
        total_len,
    };
    let (mut roots, deficit) = scanner.locate(k_floor, k_max, step, opts.zoom_depth);
    roots.retain(|r| r.k > k_floor * (1.0 - 1e-12) && r.k <= k_max * (1.0 + 1e-12));

    let weyl = total_len * (k_max - k_floor) / std::f64::consts::PI;
    let winding = scanner.expected_count(k_floor, k_max, step);
    let found: usize = roots.iter().map(|r| r.multiplicity).sum();
    if (winding - winding.round()).abs() > 0.1 {
        warnings.push(format!(
            "eigenphase count {winding:.3} is far from an integer; an endpoint may sit on a root"
        ));
    }

    Ok(Spectrum {
        records: roots,
        k_min: k_floor,
        k_max,
        grid_step: step,
        tol: opts.tol,
        audit: ScanAudit {
            winding_states: winding,
            weyl_estimate: weyl,
            found_states: found,
            suspected_missing: deficit,
            heuristic,
        },
        warnings,
    })
}

/// Bound on `|d s_min / dk|`: `l_max` from the transport phases plus the
/// drift of delta vertex matrices on `k >= k_floor`.
fn lipschitz_bound(map: &QuantumMap, k_floor: f64) -> f64 {
    let g = map.graph();
    let l_max = g.max_length().unwrap_or(0.0);
    let delta_drift: f64 = g
        .vertices()
        .iter()
        .filter_map(|v| match v.condition {
            VertexCondition::Delta(a) if a != 0.0 => {
                let d = g.degree(v.id) as f64;
                // |dc/dk| = |2 alpha / (d k + i alpha / k * ...)^2| <= 2|alpha| d / (d k)^2
                Some(2.0 * a.abs() / (d * k_floor).powi(2) * d)
            }
            _ => None,
        })
        .sum();
    l_max + delta_drift
}

/// Grid scanner with an exact root-counting audit.
///
/// For a constant scattering matrix the eigenphases of `U(k)` increase
/// monotonically in `k`, so the number of states in `(a, b]` equals the
/// total eigenphase winding plus the fractional eigenphase parts at the two
/// endpoints; the winding in turn is `2 L_Gamma (b - a)` exactly. Intervals
/// where the scan found fewer roots than this count are re-scanned with a
/// finer grid, which resolves near-degenerate pairs.
struct RootScanner<'a> {
    map: &'a QuantumMap,
    alpha: Option<&'a [f64]>,
    tol: f64,
    accept: f64,
    lips: f64,
    constant_s: bool,
    total_len: f64,
}

impl RootScanner<'_> {
    fn smin(&self, k: f64) -> f64 {
        let u = self.map.evaluate_magnetic(k, self.alpha).expect("k > 0 evaluation");
        let n = u.nrows();
        linalg::smallest_singular_value(&(CMatrix::identity(n, n) - u))
    }

    /// Find roots in `(a, b]`, zooming where the count audit reports a
    /// deficit. Returns sorted records and the unresolved deficit.
    fn locate(&self, a: f64, b: f64, step: f64, depth: usize) -> (Vec<SpectrumRecord>, usize) {
        let roots = self.scan_refine(a, b, step);
        let expected = self.expected_count(a, b, step).round() as i64;
        let found: i64 = roots.iter().map(|r| r.multiplicity as i64).sum();
        let deficit = (expected - found).max(0) as usize;
        if deficit == 0 || depth == 0 {
            return (roots, deficit);
        }

        let splits = self.safe_splits(a, b, step);
        let mut all: Vec<SpectrumRecord> = Vec::new();
        let mut total_deficit = 0;
        for w in splits.windows(2) {
            let (sub, d) = self.locate(w[0], w[1], step / 4.0, depth - 1);
            total_deficit += d;
            all.extend(sub);
        }
        all.sort_by(|x, y| x.k.partial_cmp(&y.k).unwrap());
        all.dedup_by(|x, y| {
            if (x.k - y.k).abs() <= 1e-9 * (1.0 + x.k) {
                if x.residual < y.residual {
                    *y = *x;
                }
                true
            } else {
                false
            }
        });
        (all, total_deficit)
    }

    /// One scan pass over `[a, b]`: bracket local minima of the smallest
    /// singular value, refine by golden section, keep accepted roots in
    /// `(a, b]` with multiplicities.
    fn scan_refine(&self, a: f64, b: f64, step: f64) -> Vec<SpectrumRecord> {
        let n_points = (((b - a) / step).ceil() as usize + 1).max(5);
        let h = (b - a) / (n_points - 1) as f64;
        let grid: Vec<f64> = (0..n_points).map(|i| a + i as f64 * h).collect();
        let values: Vec<f64> = grid.par_iter().map(|&k| self.smin(k)).collect();

        // A root inside a bracket forces the minimum below the value
        // reachable under the Lipschitz bound.
        let reachable = 2.0 * self.lips * h;
        let mut brackets = Vec::new();
        for i in 0..grid.len() {
            let left = if i == 0 { f64::INFINITY } else { values[i - 1] };
            let right = if i + 1 == grid.len() { f64::INFINITY } else { values[i + 1] };
            if values[i] <= left && values[i] <= right && values[i] <= reachable {
                let lo = if i == 0 { grid[0] } else { grid[i - 1] };
                let hi = if i + 1 == grid.len() { grid[i] } else { grid[i + 1] };
                brackets.push((lo, hi));
            }
        }

        let mut roots: Vec<(f64, f64)> = brackets
            .par_iter()
            .map(|&(lo, hi)| golden_section_min(|k| self.smin(k), lo, hi, self.tol))
            .filter(|&(k, s)| s <= self.accept && k > a * (1.0 - 1e-12) && k <= b * (1.0 + 1e-12))
            .collect();
        roots.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
        let mut merged: Vec<(f64, f64)> = Vec::new();
        for (k, s) in roots {
            match merged.last_mut() {
                Some(last) if (k - last.0).abs() <= 1e-9 * (1.0 + k) => {
                    if s < last.1 {
                        *last = (k, s);
                    }
                }
                _ => merged.push((k, s)),
            }
        }

        merged
            .par_iter()
            .map(|&(k, s)| {
                let u = self.map.evaluate_magnetic(k, self.alpha).expect("evaluation");
                let n = u.nrows();
                let m = CMatrix::identity(n, n) - u;
                let multiplicity = linalg::rank_defect(&m, 2e-7).max(1);
                SpectrumRecord { k, multiplicity, residual: s }
            })
            .collect()
    }

    /// Quarter the interval at points kept away from roots (largest local
    /// smallest-singular-value among a few candidates).
    fn safe_splits(&self, a: f64, b: f64, step: f64) -> Vec<f64> {
        let mut splits = vec![a];
        let width = b - a;
        let delta = (step * 0.5).min(width / 32.0);
        for q in 1..4 {
            let target = a + width * q as f64 / 4.0;
            let best = (-2..=2)
                .map(|j| target + j as f64 * delta)
                .map(|k| (k, self.smin(k)))
                .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
                .unwrap()
                .0;
            if best > *splits.last().unwrap() && best < b {
                splits.push(best);
            }
        }
        splits.push(b);
        splits
    }

    /// Exact number of states in `(a, b]` from eigenphase winding plus the
    /// endpoint fractional eigenphases (monotone eigenphases assumed; exact
    /// for constant scattering matrices).
    fn expected_count(&self, a: f64, b: f64, step: f64) -> f64 {
        let winding = if self.constant_s {
            2.0 * self.total_len * (b - a)
        } else {
            self.det_winding(a, b, step)
        };
        winding / (2.0 * std::f64::consts::PI) + self.eigenphase_frac_sum(a)
            - self.eigenphase_frac_sum(b)
    }

    /// Sum of fractional eigenphases `frac(theta_j / 2 pi)` of `U(k)`,
    /// computed through the Cayley transform of a rotated copy of `U`.
    fn eigenphase_frac_sum(&self, k: f64) -> f64 {
        let u = self.map.evaluate_magnetic(k, self.alpha).expect("evaluation");
        let n = u.nrows();
        let id = CMatrix::identity(n, n);
        // Rotate so that no eigenvalue sits near -1, where the transform has
        // a pole.
        for phi in [0.0, 0.9, 1.7, 2.6, 0.45] {
            let rot = Complex::new(0.0, phi).exp();
            let u_rot = &u * rot;
            let m = &id + &u_rot;
            if linalg::condition_number(&m) > 1e10 {
                continue;
            }
            let rhs = (&id - &u_rot) * IM;
            let Some(h) = linalg::solve(&m, &rhs) else { continue };
            // H = i (I - U')(I + U')^{-1} is Hermitian with eigenvalues
            // tan(theta'_j / 2); symmetrize against roundoff.
            let h = (&h + h.adjoint()) * Complex::new(0.5, 0.0);
            let eig = h.symmetric_eigenvalues();
            return eig
                .iter()
                .map(|t| {
                    let theta = 2.0 * t.atan() - phi;
                    (theta / (2.0 * std::f64::consts::PI)).rem_euclid(1.0)
                })
                .sum();
        }
        f64::NAN
    }

    /// Phase winding of `det U(k)` over `[a, b]` in radians, tracked on a
    /// grid fine enough that each increment stays below pi.
    fn det_winding(&self, a: f64, b: f64, step: f64) -> f64 {
        let n_points = (((b - a) / step).ceil() as usize + 1).max(2);
        let h = (b - a) / (n_points - 1) as f64;
        let phases: Vec<f64> = (0..n_points)
            .into_par_iter()
            .map(|i| {
                let k = a + i as f64 * h;
                let u = self.map.evaluate_magnetic(k, self.alpha).expect("evaluation");
                linalg::determinant(&u).arg()
            })
            .collect();
        let mut total = 0.0;
        for w in phases.windows(2) {
            let mut d = w[1] - w[0];
            while d > std::f64::consts::PI {
                d -= 2.0 * std::f64::consts::PI;
            }
            while d < -std::f64::consts::PI {
                d += 2.0 * std::f64::consts::PI;
            }
            total += d;
        }
        total
    }
}

/// Golden-section minimisation tracking the best evaluated point.
fn golden_section_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut best = if f1 < f2 { (x1, f1) } else { (x2, f2) };
    while hi - lo > tol * (1.0 + lo.abs()) {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
            if f1 < best.1 {
                best = (x1, f1);
            }
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
            if f2 < best.1 {
                best = (x2, f2);
            }
        }
    }
    best
}

/// Plane-wave amplitude pair on one bond: `psi_e(x) = backward e^{-ikx} +
/// forward e^{ikx}` with `x` in `[0, l]` along the stored orientation.
#[derive(Debug, Clone, Copy)]
pub struct EdgeAmplitudes {
    pub edge: EdgeId,
    pub length: f64,
    /// Coefficient of `e^{ikx}`.
    pub forward: Complex,
    /// Coefficient of `e^{-ikx}`.
    pub backward: Complex,
}

/// A normalized eigenfunction given by per-bond plane-wave amplitude pairs.
#[derive(Debug, Clone)]
pub struct Eigenfunction {
    pub k: f64,
    /// Singular value of the defining linear system.
    pub residual: f64,
    /// True when a global phase made the function real everywhere.
    pub real_gauge: bool,
    amplitudes: Vec<EdgeAmplitudes>,
}

impl Eigenfunction {
    pub fn amplitudes(&self) -> &[EdgeAmplitudes] {
        &self.amplitudes
    }

    fn on_edge(&self, edge: EdgeId) -> Option<&EdgeAmplitudes> {
        self.amplitudes.iter().find(|a| a.edge == edge)
    }

    /// `psi_e(x)`; zero on edges without amplitudes (leads).
    pub fn value(&self, edge: EdgeId, x: f64) -> Complex {
        match self.on_edge(edge) {
            Some(a) => {
                a.backward * (-IM * self.k * x).exp() + a.forward * (IM * self.k * x).exp()
            }
            None => Complex::new(0.0, 0.0),
        }
    }

    /// `psi_e'(x)` along the stored orientation.
    pub fn derivative(&self, edge: EdgeId, x: f64) -> Complex {
        match self.on_edge(edge) {
            Some(a) => {
                IM * self.k
                    * (a.forward * (IM * self.k * x).exp()
                        - a.backward * (-IM * self.k * x).exp())
            }
            None => Complex::new(0.0, 0.0),
        }
    }

    /// Exact supremum of `|psi|` over one edge.
    pub fn sup_norm_on_edge(&self, edge: EdgeId) -> f64 {
        let Some(a) = self.on_edge(edge) else { return 0.0 };
        if self.real_gauge {
            // psi = 2 |forward| cos(kx + arg forward).
            let amp = 2.0 * a.forward.norm();
            if amp == 0.0 {
                return 0.0;
            }
            let theta = a.forward.arg();
            let (t0, t1) = (theta, theta + self.k * a.length);
            // |cos| attains 1 iff the phase interval contains a multiple of pi.
            if (t1 / std::f64::consts::PI).floor() > (t0 / std::f64::consts::PI).floor()
                || t0 / std::f64::consts::PI == (t0 / std::f64::consts::PI).floor()
            {
                amp
            } else {
                amp * t0.cos().abs().max(t1.cos().abs())
            }
        } else {
            a.forward.norm() + a.backward.norm()
        }
    }

    /// Largest supremum over all edges.
    pub fn sup_norm(&self) -> f64 {
        self.amplitudes
            .iter()
            .map(|a| self.sup_norm_on_edge(a.edge))
            .fold(0.0, f64::max)
    }

    /// Closed-form `L^2` inner product with another eigenfunction at the
    /// same wave number.
    pub fn inner(&self, other: &Eigenfunction) -> Complex {
        inner_product(self.k, &self.amplitudes, &other.amplitudes)
    }

    /// Closed-form `L^2` norm.
    pub fn l2_norm(&self) -> f64 {
        self.inner(self).re.max(0.0).sqrt()
    }
}

fn inner_product(k: f64, a: &[EdgeAmplitudes], b: &[EdgeAmplitudes]) -> Complex {
    let mut acc = Complex::new(0.0, 0.0);
    for (ea, eb) in a.iter().zip(b.iter()) {
        debug_assert_eq!(ea.edge, eb.edge);
        let l = ea.length;
        let j = if k == 0.0 {
            Complex::new(l, 0.0)
        } else {
            ((2.0 * IM * k * l).exp() - 1.0) / (2.0 * IM * k)
        };
        acc += (ea.backward.conj() * eb.backward + ea.forward.conj() * eb.forward) * l
            + ea.backward.conj() * eb.forward * j
            + ea.forward.conj() * eb.backward * j.conj();
    }
    acc
}

/// Singular-value threshold used for null-space extraction and multiplicity.
const NULL_TOL: f64 = 2e-7;

/// Orthonormal eigenfunction basis at an accepted wave number `k_n`:
/// the null space of `I - U(k_n)`, in real gauge where the conditions are
/// time-reversal invariant.
pub fn eigenfunctions_at(g: &MetricGraph, k: f64) -> Result<Vec<Eigenfunction>> {
    let map = QuantumMap::new(g)?;
    if !g.is_closed() {
        return Err(Error::ClosedGraphRequired);
    }
    let u = map.evaluate(k)?;
    let n = u.nrows();
    let m = CMatrix::identity(n, n) - u;
    let sv = linalg::singular_values(&m);
    if sv[0] > NULL_TOL {
        return Err(Error::ResidualTooLarge { k, residual: sv[0], tol: NULL_TOL });
    }
    let null = linalg::null_space(&m, NULL_TOL);
    let raw: Vec<Vec<EdgeAmplitudes>> =
        null.iter().map(|v| amplitudes_from_bond_vector(g, &map, k, v)).collect();
    let time_reversal_ok = g.vertices().iter().all(|v| {
        matches!(
            v.condition,
            VertexCondition::NeumannKirchhoff
                | VertexCondition::Dirichlet
                | VertexCondition::Delta(_)
        )
    });
    Ok(orthonormal_basis(k, raw, time_reversal_ok, sv[0]))
}

/// Bound states of an open graph at `k`: the null space of `I - U_BB(k)`,
/// normalizable eigenfunctions supported on the bonds (zero on all leads).
pub fn bound_states_at(g: &MetricGraph, k: f64) -> Result<Vec<Eigenfunction>> {
    let map = QuantumMap::new(g)?;
    if g.is_closed() {
        return Err(Error::OpenGraphRequired);
    }
    let de = map.directed();
    let nb = 2 * de.bond_count();
    let u = map.evaluate(k)?;
    let bb: CMatrix = u.view((0, 0), (nb, nb)).into();
    let m = CMatrix::identity(nb, nb) - bb;
    let null = linalg::null_space(&m, NULL_TOL);
    let sv = linalg::singular_values(&m);
    let raw: Vec<Vec<EdgeAmplitudes>> =
        null.iter().map(|v| amplitudes_from_bond_vector(g, &map, k, v)).collect();
    Ok(orthonormal_basis(k, raw, true, sv[0]))
}

/// Convert an incoming-amplitude null vector (bond channels first) to
/// per-edge plane-wave pairs: `backward = a_in[e-]`,
/// `forward = a_in[e+] e^{-ikl}`.
fn amplitudes_from_bond_vector(
    g: &MetricGraph,
    map: &QuantumMap,
    k: f64,
    v: &crate::CVector,
) -> Vec<EdgeAmplitudes> {
    let de = map.directed();
    let b = de.bond_count();
    let mut out = Vec::with_capacity(b);
    for i in 0..b {
        let Channel::Forward(edge) = de.channel(i) else { unreachable!() };
        let l = g.edges()[edge].length().unwrap();
        out.push(EdgeAmplitudes {
            edge,
            length: l,
            forward: v[i] * (-IM * k * l).exp(),
            backward: v[b + i],
        });
    }
    out
}

/// Apply the antilinear conjugation map `psi -> conj(psi)` in amplitude
/// coordinates: swaps and conjugates the pair.
fn conjugated(amps: &[EdgeAmplitudes]) -> Vec<EdgeAmplitudes> {
    amps.iter()
        .map(|a| EdgeAmplitudes {
            edge: a.edge,
            length: a.length,
            forward: a.backward.conj(),
            backward: a.forward.conj(),
        })
        .collect()
}

fn linear_combination(
    a: &[EdgeAmplitudes],
    ca: Complex,
    b: &[EdgeAmplitudes],
    cb: Complex,
) -> Vec<EdgeAmplitudes> {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| EdgeAmplitudes {
            edge: x.edge,
            length: x.length,
            forward: ca * x.forward + cb * y.forward,
            backward: ca * x.backward + cb * y.backward,
        })
        .collect()
}

/// Gram-Schmidt in the closed-form `L^2` inner product. When the conditions
/// are time-reversal invariant the basis is first projected onto
/// conjugation-fixed (real-valued) combinations.
fn orthonormal_basis(
    k: f64,
    raw: Vec<Vec<EdgeAmplitudes>>,
    real_gauge: bool,
    residual: f64,
) -> Vec<Eigenfunction> {
    let dim = raw.len();
    let mut candidates: Vec<Vec<EdgeAmplitudes>> = Vec::new();
    if real_gauge {
        let one = Complex::new(1.0, 0.0);
        let i = Complex::new(0.0, 1.0);
        for v in &raw {
            let kv = conjugated(v);
            candidates.push(linear_combination(v, one, &kv, one));
            candidates.push(linear_combination(v, i, &kv, -i));
        }
    } else {
        candidates = raw;
    }

    let mut basis: Vec<Vec<EdgeAmplitudes>> = Vec::new();
    for mut c in candidates {
        if basis.len() == dim {
            break;
        }
        for b in &basis {
            let proj = inner_product(k, b, &c);
            c = linear_combination(&c, Complex::new(1.0, 0.0), b, -proj);
        }
        let norm = inner_product(k, &c, &c).re.max(0.0).sqrt();
        if norm > 1e-8 {
            let scale = Complex::new(1.0 / norm, 0.0);
            basis.push(
                c.iter()
                    .map(|a| EdgeAmplitudes {
                        edge: a.edge,
                        length: a.length,
                        forward: a.forward * scale,
                        backward: a.backward * scale,
                    })
                    .collect(),
            );
        }
    }

    basis
        .into_iter()
        .map(|amplitudes| Eigenfunction { k, residual, real_gauge, amplitudes })
        .collect()
}

/// A perfect scar: an eigenfunction vanishing identically on a nonempty
/// edge set, supported on the complementary subgraph.
#[derive(Debug, Clone)]
pub struct ScarReport {
    /// Index into the eigenfunction list passed to the detector.
    pub eigenfunction: usize,
    /// Edges carrying the state.
    pub support: Vec<EdgeId>,
    /// Edges where the state vanishes (sup-norm below tolerance).
    pub vanished: Vec<EdgeId>,
}

/// Flag eigenfunctions whose sup-norm vanishes on some nonempty proper edge
/// subset (relative tolerance `tol`).
pub fn detect_perfect_scars(efs: &[Eigenfunction], tol: f64) -> Vec<ScarReport> {
    let mut out = Vec::new();
    for (idx, ef) in efs.iter().enumerate() {
        let global = ef.sup_norm();
        if global == 0.0 {
            continue;
        }
        let mut vanished = Vec::new();
        let mut support = Vec::new();
        for a in ef.amplitudes() {
            if ef.sup_norm_on_edge(a.edge) < tol * global {
                vanished.push(a.edge);
            } else {
                support.push(a.edge);
            }
        }
        if !vanished.is_empty() && !support.is_empty() {
            out.push(ScarReport { eigenfunction: idx, support, vanished });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builders;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn tadpole_secular_closed_form(k: f64, l1: f64, l2: f64) -> Complex {
        let e = |x: f64| (IM * x).exp();
        (1.0 - e(k * l2)) * (3.0 - e(k * l2) + e(2.0 * k * l1) - 3.0 * e(k * (2.0 * l1 + l2)))
            / 3.0
    }

    #[test]
    fn tadpole_secular_matches_paper_form() {
        let (l1, l2) = (1.0, 2f64.sqrt());
        let g = builders::tadpole(l1, l2);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let k = rng.random_range(0.01f64..50.0);
            let xi = secular_function(&g, k).unwrap();
            let want = tadpole_secular_closed_form(k, l1, l2);
            assert!(
                (xi - want).norm() <= 1e-10 * (1.0 + want.norm()),
                "k = {k}: {xi} vs {want}"
            );
        }
    }

    #[test]
    fn equal_star_secular_matches_paper_form() {
        let n = 3;
        let l = 1.0;
        let g = builders::equal_star(n, l);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..200 {
            let k: f64 = rng.random_range(0.01f64..30.0);
            let xi = secular_function(&g, k).unwrap();
            let want = -IM
                * Complex::new(2.0f64.powi(n as i32), 0.0)
                * (IM * k * (n as f64) * l).exp()
                * (k * l).cos().powi(n as i32 - 1)
                * (k * l).sin();
            assert!(
                (xi - want).norm() <= 1e-10 * (1.0 + want.norm()),
                "k = {k}: {xi} vs {want}"
            );
        }
    }

    #[test]
    fn dirichlet_bond_secular_is_one_minus_exp() {
        let l = 0.8;
        let g = builders::interval(VertexCondition::Dirichlet, VertexCondition::Dirichlet, l);
        for k in [0.3, 1.0, 2.7, 11.0] {
            let xi = secular_function(&g, k).unwrap();
            let want = 1.0 - (2.0 * IM * k * l).exp();
            assert!((xi - want).norm() < 1e-12);
        }
    }

    #[test]
    fn neumann_bond_spectrum_is_integer_multiples_of_pi() {
        let g = builders::neumann_interval(1.0);
        let spec = find_spectrum(&g, 10.0, &SpectrumOptions::default()).unwrap();
        let ks = spec.expanded();
        assert_eq!(ks.len(), 3);
        for (i, k) in ks.iter().enumerate() {
            assert!((k - (i + 1) as f64 * PI).abs() < 1e-9, "k_{i} = {k}");
        }
        assert_eq!(spec.audit.suspected_missing, 0);
    }

    #[test]
    fn equal_star_spectrum_with_degeneracies() {
        // Spectrum: simple k = n pi plus (N-1)-fold degenerate
        // k = (2n+1) pi / 2, n >= 0 (the lowest state is the degenerate
        // pair at pi/2: psi_j = c_j sin(k x_j) with sum c_j = 0).
        let g = builders::equal_star(3, 1.0);
        let spec = find_spectrum(&g, 14.0, &SpectrumOptions::default()).unwrap();
        let want: [(f64, usize); 8] = [
            (0.5 * PI, 2),
            (PI, 1),
            (1.5 * PI, 2),
            (2.0 * PI, 1),
            (2.5 * PI, 2),
            (3.0 * PI, 1),
            (3.5 * PI, 2),
            (4.0 * PI, 1),
        ];
        assert!(spec.records.len() >= want.len());
        for (r, (k, m)) in spec.records.iter().zip(want.iter()) {
            assert!((r.k - k).abs() < 1e-9, "{} vs {k}", r.k);
            assert_eq!(r.multiplicity, *m, "multiplicity at k = {k}");
        }
    }

    #[test]
    fn tadpole_spectrum_contains_loop_states_and_symmetric_roots() {
        let g = builders::tadpole(1.0, 1.0);
        let spec = find_spectrum(&g, 14.0, &SpectrumOptions::default()).unwrap();
        for n in 1..=2 {
            let target = 2.0 * PI * n as f64;
            assert!(
                spec.records.iter().any(|r| (r.k - target).abs() < 1e-9),
                "loop state {target} missing"
            );
        }
        // Every reported root solves the secular equation.
        for r in &spec.records {
            assert!(r.residual <= 1e-9 * 4.0);
        }
        // Roots of sin(k/2) = 3 sin(3k/2) (l1 = l2 = 1) are present:
        // the smallest positive one, found by dense scan.
        let f = |k: f64| (k / 2.0).sin() - 3.0 * (1.5 * k).sin();
        let mut k0 = None;
        let mut prev = f(1e-3);
        let mut k = 1e-3;
        while k < 3.0 {
            let next = f(k + 1e-4);
            if prev.signum() != next.signum() {
                k0 = Some(k);
                break;
            }
            prev = next;
            k += 1e-4;
        }
        let k0 = k0.unwrap();
        assert!(
            spec.records.iter().any(|r| (r.k - k0).abs() < 2e-4),
            "symmetric-part root near {k0} missing"
        );
    }

    #[test]
    fn orientation_flip_preserves_spectrum() {
        // Same tadpole, loop stored with swapped endpoints and the tail
        // reversed.
        let mut b = crate::graph::GraphBuilder::new();
        let end = b.vertex(VertexCondition::NeumannKirchhoff);
        let junction = b.vertex(VertexCondition::NeumannKirchhoff);
        b.bond(end, junction, 1.0); // tail flipped
        b.bond(junction, junction, 2f64.sqrt());
        let flipped = b.build().unwrap();
        let reference = builders::tadpole(1.0, 2f64.sqrt());

        let sa = find_spectrum(&reference, 12.0, &SpectrumOptions::default()).unwrap();
        let sb = find_spectrum(&flipped, 12.0, &SpectrumOptions::default()).unwrap();
        assert_eq!(sa.state_count(), sb.state_count());
        for (a, b) in sa.expanded().iter().zip(sb.expanded().iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn subdividing_a_bond_is_invisible() {
        let reference = builders::star(&[1.0, 1.3, 0.7]);
        // Split the first bond into 0.4 + 0.6 with a degree-2 NK vertex.
        let mut b = crate::graph::GraphBuilder::new();
        let c = b.vertex(VertexCondition::NeumannKirchhoff);
        let t1 = b.vertex(VertexCondition::NeumannKirchhoff);
        let t2 = b.vertex(VertexCondition::NeumannKirchhoff);
        let t3 = b.vertex(VertexCondition::NeumannKirchhoff);
        let mid = b.vertex(VertexCondition::NeumannKirchhoff);
        b.bond(c, mid, 0.4);
        b.bond(mid, t1, 0.6);
        b.bond(c, t2, 1.3);
        b.bond(c, t3, 0.7);
        let subdivided = b.build().unwrap();

        let sa = find_spectrum(&reference, 12.0, &SpectrumOptions::default()).unwrap();
        let sb = find_spectrum(&subdivided, 12.0, &SpectrumOptions::default()).unwrap();
        assert_eq!(sa.state_count(), sb.state_count());
        for (a, b) in sa.expanded().iter().zip(sb.expanded().iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn tree_magnetic_phases_are_removable() {
        let g = builders::star(&[1.0, 1.3, 0.7]);
        let alpha = [0.9, -0.4, 2.2];
        let sa = find_spectrum(&g, 12.0, &SpectrumOptions::default()).unwrap();
        let sb =
            find_spectrum_magnetic(&g, 12.0, Some(&alpha), &SpectrumOptions::default()).unwrap();
        assert_eq!(sa.state_count(), sb.state_count());
        for (a, b) in sa.expanded().iter().zip(sb.expanded().iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn neumann_bond_eigenfunction_is_cosine() {
        let g = builders::neumann_interval(1.0);
        let efs = eigenfunctions_at(&g, PI).unwrap();
        assert_eq!(efs.len(), 1);
        let ef = &efs[0];
        assert!(ef.real_gauge);
        assert!((ef.l2_norm() - 1.0).abs() < 1e-10);
        // psi(x) = +/- sqrt(2) cos(pi x).
        let sign = ef.value(0, 0.0).re.signum();
        for i in 0..50 {
            let x = i as f64 / 49.0;
            let want = sign * 2f64.sqrt() * (PI * x).cos();
            let got = ef.value(0, x);
            assert!(got.im.abs() < 1e-10);
            assert!((got.re - want).abs() < 1e-8, "x = {x}: {} vs {want}", got.re);
        }
    }

    #[test]
    fn tadpole_loop_states_are_perfect_scars() {
        // Generic lengths: the loop states are simple (for l1 = l2 they
        // collide with a symmetric-part root).
        let l2 = 2f64.sqrt();
        let g = builders::tadpole(1.0, l2);
        let k = 2.0 * PI / l2;
        let efs = eigenfunctions_at(&g, k).unwrap();
        assert_eq!(efs.len(), 1);
        let ef = &efs[0];
        // Zero on the tail, sqrt(2/l2) sin(2 pi x / l2) on the loop.
        assert!(ef.sup_norm_on_edge(0) < 1e-9);
        let sign = ef.value(1, 0.1).re.signum();
        for i in 1..40 {
            let x = l2 * i as f64 / 40.0;
            let want = sign * (2.0 / l2).sqrt() * (2.0 * PI * x / l2).sin();
            assert!((ef.value(1, x).re - want).abs() < 1e-8);
            assert!(ef.value(1, x).im.abs() < 1e-9);
        }
        let scars = detect_perfect_scars(&efs, 1e-8);
        assert_eq!(scars.len(), 1);
        assert_eq!(scars[0].support, vec![1]);
        assert_eq!(scars[0].vanished, vec![0]);
    }

    #[test]
    fn equal_star_degenerate_space_has_real_basis() {
        let g = builders::equal_star(3, 1.0);
        let k = 1.5 * PI;
        let efs = eigenfunctions_at(&g, k).unwrap();
        assert_eq!(efs.len(), 2);
        for ef in &efs {
            assert!(ef.real_gauge);
            assert!((ef.l2_norm() - 1.0).abs() < 1e-9);
            // Vanishes at the center: psi(center) = 0 for these states.
            assert!(ef.value(0, 0.0).norm() < 1e-8);
        }
        // Orthogonal pair.
        assert!(efs[0].inner(&efs[1]).norm() < 1e-8);
    }

    #[test]
    fn generic_star_has_no_scars() {
        let g = builders::star(&[1.0, 2f64.sqrt(), 3f64.sqrt()]);
        let spec = find_spectrum(&g, 10.0, &SpectrumOptions::default()).unwrap();
        for r in &spec.records {
            let efs = eigenfunctions_at(&g, r.k).unwrap();
            assert!(detect_perfect_scars(&efs, 1e-9).is_empty(), "scar at k = {}", r.k);
        }
    }

    #[test]
    fn open_loop_bound_state_in_continuum() {
        let l = 1.0;
        let g = builders::open_loop(l);
        let k = 2.0 * PI / l;
        let bs = bound_states_at(&g, k).unwrap();
        assert_eq!(bs.len(), 1);
        let ef = &bs[0];
        // Supported on the loop (edge 1), zero coupling to the lead.
        assert!((ef.l2_norm() - 1.0).abs() < 1e-9);
        let sign = ef.value(1, 0.1).re.signum();
        for i in 1..20 {
            let x = l * i as f64 / 20.0;
            let want = sign * (2.0 / l).sqrt() * (2.0 * PI * x / l).sin();
            assert!((ef.value(1, x).re - want).abs() < 1e-7);
        }
        // Away from the special wave numbers there is no bound state.
        assert!(bound_states_at(&g, 1.234).unwrap().is_empty());
    }

    #[test]
    fn eigenfunction_satisfies_vertex_conditions() {
        let g = builders::delta_tadpole(1.0, 2f64.sqrt(), 2.5);
        let spec = find_spectrum(&g, 9.0, &SpectrumOptions::default()).unwrap();
        assert!(!spec.records.is_empty());
        for r in spec.records.iter().take(6) {
            for ef in eigenfunctions_at(&g, r.k).unwrap() {
                // Continuity at the junction (vertex 1): tail x=0 meets both
                // loop endpoints.
                let tail = ef.value(0, 0.0);
                let loop_start = ef.value(1, 0.0);
                let loop_end = ef.value(1, 2f64.sqrt());
                assert!((tail - loop_start).norm() < 1e-7);
                assert!((tail - loop_end).norm() < 1e-7);
                // Derivative jump: sum of outgoing derivatives = alpha psi(v).
                let outgoing = ef.derivative(0, 0.0) + ef.derivative(1, 0.0)
                    - ef.derivative(1, 2f64.sqrt());
                assert!(
                    (outgoing - tail * 2.5).norm() < 1e-7,
                    "k = {}: jump {outgoing} vs {}",
                    r.k,
                    tail * 2.5
                );
            }
        }
    }

    #[test]
    fn weyl_counting_stays_within_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let opts = builders::RandomGraphOptions { max_bonds: 4, ..Default::default() };
        for _ in 0..3 {
            let g = builders::random_connected_nk(&mut rng, &opts);
            let total_len = g.total_length();
            let beta = g.betti_number().unwrap() as f64;
            let k_max = 200.0 / total_len * std::f64::consts::PI.max(1.0);
            let spec = find_spectrum(&g, k_max, &SpectrumOptions::default()).unwrap();
            let n = spec.state_count() as f64 + zero_mode_count(&g) as f64;
            let weyl = total_len * k_max / PI;
            assert!(
                (n - weyl).abs() <= 2.0 + beta + 1.0,
                "count {n} vs weyl {weyl} (beta = {beta})"
            );
        }
    }
}
