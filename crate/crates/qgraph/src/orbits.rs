//! Classical dynamics and periodic-orbit theory: the bi-stochastic Markov
//! map `M = |S|^2`, enumeration of primitive periodic orbits with their
//! amplitudes, exact trace identities `tr U^n = sum over orbits`, the trace
//! formula with a smooth test function, and the trajectory expansion of the
//! open scattering matrix.

use crate::graph::{DirectedEdges, EdgeId, MetricGraph};
use crate::linalg::{self, IM};
use crate::scattering::{open_blocks, QuantumMap};
use crate::spectrum::Spectrum;
use crate::{CMatrix, Complex, Error, RMatrix, Result};
use rayon::prelude::*;

/// Enumeration guard: hard cap on the number of primitive orbits.
pub const ORBIT_BUDGET: usize = 10_000_000;

/// The classical (Markov) map on directed edges with its spectral
/// diagnostics.
#[derive(Debug, Clone)]
pub struct ClassicalMap {
    /// `M[a, b] = |S[a, b]|^2`, bi-stochastic.
    pub matrix: RMatrix,
    /// Eigenvalues sorted by `|1 - lambda|` ascending (the invariant
    /// eigenvalue 1 first).
    pub eigenvalues: Vec<Complex>,
    /// Spectral gap `min_{lambda != 1} |1 - lambda|`.
    pub spectral_gap: f64,
    /// Modulus gap `min_{lambda != 1} (1 - |lambda|)` (zero for bipartite
    /// dynamics with an eigenvalue on the unit circle).
    pub modulus_gap: f64,
    /// An eigenvalue within 1e-9 of -1 (bipartite signature).
    pub has_minus_one: bool,
    /// `|| M p_inv - p_inv ||_max` for the uniform distribution.
    pub invariant_defect: f64,
}

/// Classical map of a graph with k-independent scattering.
pub fn classical_map(g: &MetricGraph) -> Result<ClassicalMap> {
    let map = QuantumMap::new(g)?;
    if map.is_k_dependent() {
        return Err(Error::KDependentScattering);
    }
    let s = map.scattering_at(0.0)?;
    let n = s.nrows();
    let m = RMatrix::from_fn(n, n, |i, j| s[(i, j)].norm_sqr());

    let mut eigenvalues: Vec<Complex> = linalg::complex_eigenvalues(&m);
    eigenvalues.sort_by(|a, b| {
        let da = (Complex::new(1.0, 0.0) - a).norm();
        let db = (Complex::new(1.0, 0.0) - b).norm();
        da.partial_cmp(&db).unwrap()
    });
    let spectral_gap = eigenvalues
        .iter()
        .skip(1)
        .map(|l| (Complex::new(1.0, 0.0) - l).norm())
        .fold(f64::INFINITY, f64::min);
    let modulus_gap = eigenvalues
        .iter()
        .skip(1)
        .map(|l| (1.0 - l.norm()).max(0.0))
        .fold(f64::INFINITY, f64::min);
    let has_minus_one =
        eigenvalues.iter().any(|l| (l + Complex::new(1.0, 0.0)).norm() < 1e-9);

    let uniform = 1.0 / n as f64;
    let mut invariant_defect = 0.0f64;
    for i in 0..n {
        let row: f64 = (0..n).map(|j| m[(i, j)] * uniform).sum();
        invariant_defect = invariant_defect.max((row - uniform).abs());
    }

    Ok(ClassicalMap {
        matrix: m,
        eigenvalues,
        spectral_gap,
        modulus_gap,
        has_minus_one,
        invariant_defect,
    })
}

/// A primitive periodic orbit in canonical form (lexicographically minimal
/// rotation of its directed-channel sequence).
#[derive(Debug, Clone)]
pub struct PeriodicOrbit {
    /// Channel indices of the canonical representative.
    pub channels: Vec<usize>,
    /// Topological length `n_p`.
    pub topological_length: usize,
    /// Metric length `L_p` (sum of traversed bond lengths).
    pub metric_length: f64,
    /// Amplitude `A_p`: product of scattering entries around the cycle.
    pub amplitude: Complex,
    /// Repetition number (always 1 for the primitives returned here).
    pub repetition: usize,
    /// Orbit equals its own time reversal.
    pub self_retracing: bool,
    /// Index of the time-reversed partner in the same list (`== own index`
    /// for self-retracing orbits).
    pub time_reversal_partner: usize,
}

/// Lexicographically minimal rotation.
fn canonical_rotation(seq: &[usize]) -> Vec<usize> {
    let n = seq.len();
    let mut best = 0;
    for start in 1..n {
        for off in 0..n {
            let a = seq[(start + off) % n];
            let b = seq[(best + off) % n];
            if a < b {
                best = start;
                break;
            }
            if a > b {
                break;
            }
        }
    }
    (0..n).map(|i| seq[(best + i) % n]).collect()
}

/// Time-reversed sequence: same bonds in opposite order and direction.
fn time_reversed(de: &DirectedEdges, seq: &[usize]) -> Vec<usize> {
    seq.iter().rev().map(|&c| de.reversal(c)).collect()
}

/// Sink for the orbit generator: absorbs one primitive orbit at a time and
/// merges partial results from parallel subtrees in deterministic order.
trait OrbitSink: Send {
    fn absorb(&mut self, de: &DirectedEdges, seq: &[usize], amplitude: Complex, length: f64);
    fn merge(&mut self, other: Self);
}

/// Precomputed transition structure over bond channels.
struct OrbitTransitions {
    /// Admissible successors of each channel (nonzero scattering entry),
    /// sorted by channel index.
    succ: Vec<Vec<(usize, Complex)>>,
    lengths: Vec<f64>,
}

impl OrbitTransitions {
    fn new(s: &CMatrix, de: &DirectedEdges) -> Self {
        let bonds = 2 * de.bond_count();
        let succ = (0..bonds)
            .map(|last| {
                (0..bonds)
                    .filter(|&next| de.follows(last, next) && s[(next, last)].norm() > 0.0)
                    .map(|next| (next, s[(next, last)]))
                    .collect()
            })
            .collect();
        let lengths = (0..bonds).map(|c| de.length(c).unwrap_or(0.0)).collect();
        OrbitTransitions { succ, lengths }
    }

    fn amplitude(&self, from: usize, to: usize) -> Option<Complex> {
        let list = &self.succ[from];
        list.binary_search_by_key(&to, |x| x.0).ok().map(|i| list[i].1)
    }
}

struct OrbitVisitor<'a, A: OrbitSink> {
    tr: &'a OrbitTransitions,
    de: &'a DirectedEdges,
    /// Prune walks whose metric length exceeds this (orbits only get
    /// longer as the walk grows).
    max_metric: f64,
    sink: A,
    count: usize,
    budget: usize,
}

impl<A: OrbitSink> OrbitVisitor<'_, A> {
    /// Depth-first generation of primitive orbits as Lyndon words over the
    /// directed-channel alphabet, restricted to admissible transitions.
    ///
    /// The walk under construction is kept a prenecklace via Duval's
    /// period bookkeeping: appending `c` at position `t` with current
    /// period `q` keeps the period when `c == seq[t % q]`, resets it to
    /// `t + 1` when `c > seq[t % q]`, and is rejected when smaller. A
    /// closed walk is a primitive canonical representative (Lyndon word)
    /// exactly when its period equals its length.
    fn extend(
        &mut self,
        seq: &mut Vec<usize>,
        period: usize,
        partial: Complex,
        length: f64,
        n_max: usize,
    ) -> Result<()> {
        let t = seq.len();
        let start = seq[0];
        let last = seq[t - 1];
        if period == t {
            if let Some(closing) = self.tr.amplitude(last, start) {
                self.count += 1;
                if self.count > self.budget {
                    return Err(Error::OrbitBudgetExceeded { budget: self.budget });
                }
                self.sink.absorb(self.de, seq, partial * closing, length);
            }
        }
        if t == n_max {
            return Ok(());
        }
        // Prenecklace condition: next symbol must not undercut seq[t % q].
        let floor = seq[t % period];
        let list = &self.tr.succ[last];
        let from = list.partition_point(|x| x.0 < floor);
        for &(next, a) in &list[from..] {
            let l = length + self.tr.lengths[next];
            if l > self.max_metric {
                continue;
            }
            let new_period = if next == floor { period } else { t + 1 };
            seq.push(next);
            self.extend(seq, new_period, partial * a, l, n_max)?;
            seq.pop();
        }
        Ok(())
    }
}

/// Run the generator over depth-2 prefix tasks in parallel; partial sinks
/// are merged in task order, so results are independent of thread count.
fn generate_orbits<A: OrbitSink>(
    g: &MetricGraph,
    n_max: usize,
    max_metric: f64,
    make: impl Fn() -> A + Sync,
) -> Result<A> {
    let map = QuantumMap::new(g)?;
    if map.is_k_dependent() {
        return Err(Error::KDependentScattering);
    }
    if n_max == 0 {
        return Ok(make());
    }
    let s = map.scattering_at(0.0)?;
    let de = map.directed();
    let bonds = 2 * de.bond_count();
    let tr = OrbitTransitions::new(&s, de);

    // Tasks: (start,) emits the length-1 orbit; (start, second) runs the
    // subtree below that prefix.
    let mut tasks: Vec<(usize, Option<usize>)> = Vec::new();
    for start in 0..bonds {
        if tr.lengths[start] > max_metric {
            continue;
        }
        tasks.push((start, None));
        for &(second, _) in &tr.succ[start] {
            if second >= start {
                tasks.push((start, Some(second)));
            }
        }
    }

    let partials: Vec<Result<(A, usize)>> = tasks
        .par_iter()
        .map(|&(start, second)| {
            let mut visitor = OrbitVisitor {
                tr: &tr,
                de,
                max_metric,
                sink: make(),
                count: 0,
                budget: ORBIT_BUDGET,
            };
            let l0 = tr.lengths[start];
            match second {
                None => {
                    // Length-1 orbits: a channel following itself.
                    if let Some(closing) = tr.amplitude(start, start) {
                        visitor.sink.absorb(de, &[start], closing, l0);
                        visitor.count = 1;
                    }
                }
                Some(c) => {
                    let l = l0 + tr.lengths[c];
                    if l <= max_metric && n_max >= 2 {
                        let amp = tr.amplitude(start, c).expect("admissible transition");
                        let mut seq = vec![start, c];
                        let period = if c == start { 1 } else { 2 };
                        visitor.extend(&mut seq, period, amp, l, n_max)?;
                    }
                }
            }
            Ok((visitor.sink, visitor.count))
        })
        .collect();

    let mut sink = make();
    let mut total = 0usize;
    for p in partials {
        let (part, count) = p?;
        total += count;
        if total > ORBIT_BUDGET {
            return Err(Error::OrbitBudgetExceeded { budget: ORBIT_BUDGET });
        }
        sink.merge(part);
    }
    Ok(sink)
}

#[derive(Default)]
struct OrbitCollector {
    orbits: Vec<PeriodicOrbit>,
}

impl OrbitSink for OrbitCollector {
    fn absorb(&mut self, _de: &DirectedEdges, seq: &[usize], amplitude: Complex, length: f64) {
        self.orbits.push(PeriodicOrbit {
            channels: seq.to_vec(),
            topological_length: seq.len(),
            metric_length: length,
            amplitude,
            repetition: 1,
            self_retracing: false,
            time_reversal_partner: usize::MAX,
        });
    }

    fn merge(&mut self, other: Self) {
        self.orbits.extend(other.orbits);
    }
}

/// All primitive periodic orbits with topological length `<= n_max`, each
/// exactly once (canonical representative), with amplitudes, lengths and
/// time-reversal pairing. Orbits with vanishing amplitude are pruned by
/// construction.
pub fn enumerate_primitive_orbits(g: &MetricGraph, n_max: usize) -> Result<Vec<PeriodicOrbit>> {
    enumerate_primitive_orbits_bounded(g, n_max, f64::INFINITY)
}

/// [`enumerate_primitive_orbits`] restricted to orbits of metric length
/// `<= max_metric`.
pub fn enumerate_primitive_orbits_bounded(
    g: &MetricGraph,
    n_max: usize,
    max_metric: f64,
) -> Result<Vec<PeriodicOrbit>> {
    let map = QuantumMap::new(g)?;
    let mut orbits =
        generate_orbits(g, n_max, max_metric, OrbitCollector::default)?.orbits;
    let de = map.directed();

    // Time-reversal pairing over canonical forms.
    let mut index = std::collections::HashMap::new();
    for (i, o) in orbits.iter().enumerate() {
        index.insert(o.channels.clone(), i);
    }
    for i in 0..orbits.len() {
        let rev = canonical_rotation(&time_reversed(de, &orbits[i].channels));
        // The partner has the same metric length, so it survives any cutoff.
        let partner = *index.get(&rev).expect("time-reversed orbit enumerated");
        orbits[i].time_reversal_partner = partner;
        orbits[i].self_retracing = partner == i;
    }
    Ok(orbits)
}

/// Edge-visit counts of an orbit (forward and backward traversals of an
/// edge both count), indexed by edge id.
pub fn edge_visit_counts(g: &MetricGraph, orbit: &PeriodicOrbit) -> Vec<usize> {
    let de = DirectedEdges::new(g);
    let mut counts = vec![0usize; g.edge_count()];
    for &c in &orbit.channels {
        counts[de.channel(c).edge()] += 1;
    }
    counts
}

/// Orbit-sum side of the trace identity:
/// `tr U(k)^n = sum over primitives p with n_p | n of n_p A_p^r e^{i k r L_p}`,
/// `r = n / n_p`.
pub fn orbit_trace_sum(orbits: &[PeriodicOrbit], k: f64, n: usize) -> Complex {
    let mut acc = Complex::new(0.0, 0.0);
    for o in orbits {
        if n % o.topological_length != 0 {
            continue;
        }
        let r = (n / o.topological_length) as i32;
        acc += o.amplitude.powi(r)
            * (IM * k * o.metric_length * r as f64).exp()
            * o.topological_length as f64;
    }
    acc
}

/// Both sides of the exact trace identity at topological time `n`.
#[derive(Debug, Clone, Copy)]
pub struct TraceIdentity {
    pub matrix_trace: Complex,
    pub orbit_trace: Complex,
}

/// Evaluate `tr U(k)^n` by matrix powers and by the periodic-orbit sum.
pub fn trace_identity_check(g: &MetricGraph, k: f64, n: usize) -> Result<TraceIdentity> {
    let map = QuantumMap::new(g)?;
    let u = map.evaluate(k)?;
    let mut p = CMatrix::identity(u.nrows(), u.ncols());
    for _ in 0..n {
        p = &p * &u;
    }
    let matrix_trace = p.trace();
    let orbits = enumerate_primitive_orbits(g, n)?;
    Ok(TraceIdentity { matrix_trace, orbit_trace: orbit_trace_sum(&orbits, k, n) })
}

/// Gaussian test function `h(x) = exp(-x^2 / (2 sigma^2))` with transform
/// `h_hat(xi) = sigma sqrt(2 pi) exp(-sigma^2 xi^2 / 2)` (convention
/// `h_hat(xi) = int e^{-i xi x} h(x) dx`).
#[derive(Debug, Clone, Copy)]
pub struct GaussianTest {
    pub sigma: f64,
}

impl GaussianTest {
    pub fn new(sigma: f64) -> Self {
        GaussianTest { sigma }
    }

    /// Width chosen so that `h_hat(l_cut) < tail`.
    pub fn for_tail(l_cut: f64, tail: f64) -> Self {
        // sigma^2 l_cut^2 / 2 = ln(sigma sqrt(2 pi) / tail); iterate once.
        let mut sigma = 1.0f64;
        for _ in 0..40 {
            sigma = ((2.0 * (sigma * (2.0 * std::f64::consts::PI).sqrt() / tail).ln())
                .max(1e-30)
                .sqrt())
                / l_cut;
        }
        GaussianTest { sigma }
    }

    pub fn h(&self, x: f64) -> f64 {
        (-x * x / (2.0 * self.sigma * self.sigma)).exp()
    }

    pub fn h_hat(&self, xi: f64) -> f64 {
        self.sigma
            * (2.0 * std::f64::consts::PI).sqrt()
            * (-self.sigma * self.sigma * xi * xi / 2.0).exp()
    }
}

/// Both sides of the trace formula with a computable truncation bound.
#[derive(Debug, Clone)]
pub struct TraceFormulaReport {
    /// `m_0 h(0) + sum_n mult_n (h(k_n) + h(-k_n))` over the computed
    /// spectrum (the symmetrized secular root set).
    pub spectral_side: f64,
    /// `(L/pi) h_hat(0) + sum_p (L_p / 2 pi) sum_{r != 0} A_p^r h_hat(r L_p)`
    /// truncated at `|r| L_p <= l_cut`.
    pub geometric_side: f64,
    /// Upper bound on the dropped orbit terms.
    pub truncation_bound: f64,
    /// Multiplicity of the secular root at k = 0 (`dim ker(I - S)`), used
    /// on the spectral side.
    pub zero_mode_multiplicity: usize,
    /// `h(0) * |m_0 - 1|`: how much the k = 0 handling differs from
    /// counting the constant eigenstate once.
    pub zero_mode_sensitivity: f64,
    pub warnings: Vec<String>,
}

/// Verify the trace formula: test a smooth `h` against the symmetrized
/// secular root set `{0^(m_0)} U {+-k_n}` and the periodic-orbit sum.
///
/// The spectrum must be complete up to a `k_max` where `h` is negligible.
pub fn trace_formula_check(
    g: &MetricGraph,
    spectrum: &Spectrum,
    h: &GaussianTest,
    l_cut: f64,
) -> Result<TraceFormulaReport> {
    let map = QuantumMap::new(g)?;
    if map.is_k_dependent() {
        return Err(Error::KDependentScattering);
    }
    if !g.is_closed() {
        return Err(Error::ClosedGraphRequired);
    }
    let mut warnings = Vec::new();

    // Secular multiplicity of k = 0: dim ker(I - S).
    let s = map.scattering_at(0.0)?;
    let n = s.nrows();
    let zero_mode_multiplicity =
        linalg::rank_defect(&(CMatrix::identity(n, n) - &s), 1e-8 * n as f64);
    let zero_mode_sensitivity =
        h.h(0.0) * (zero_mode_multiplicity as f64 - 1.0).abs();
    if zero_mode_sensitivity > 1e-10 {
        warnings.push(format!(
            "k = 0 secular multiplicity is {zero_mode_multiplicity}; it differs from the \
             single constant eigenstate and shifts the spectral side by {zero_mode_sensitivity:.3e}"
        ));
    }

    let mut spectral_side = zero_mode_multiplicity as f64 * h.h(0.0);
    for r in &spectrum.records {
        spectral_side += r.multiplicity as f64 * (h.h(r.k) + h.h(-r.k));
    }
    let spectral_tail = h.h(spectrum.k_max);
    if spectral_tail > 1e-12 {
        warnings.push(format!(
            "test function is not negligible at the spectrum cutoff: h(k_max) = {spectral_tail:.3e}"
        ));
    }

    let total_len = g.total_length();
    let mut geometric = total_len / std::f64::consts::PI * h.h_hat(0.0);
    let mut bound = 0.0;

    let l_min = g.min_length().unwrap_or(1.0);
    let l_max_edge = g.max_length().unwrap_or(1.0);
    let n_max = (l_cut / l_min).floor() as usize;
    let folded = generate_orbits(g, n_max, l_cut, || TraceOrbitSink {
        h: *h,
        l_cut,
        geometric: 0.0,
        geometric_im: 0.0,
        bound: 0.0,
    })?;
    geometric += folded.geometric;
    let geometric_im = folded.geometric_im;
    bound += folded.bound;
    if geometric_im.abs() > 1e-10 {
        warnings.push(format!(
            "geometric side has imaginary remainder {geometric_im:.3e}"
        ));
    }

    // Orbits outside the enumeration (metric length above l_cut, at any
    // topological length), bounded through closed-walk counts of the
    // connectivity structure: an orbit of topological length nn has at
    // most W(nn)/nn representatives, weight at most nn l_max / (2 pi), and
    // every repetition argument is at least max(l_cut, nn l_min).
    let s01 = RMatrix::from_fn(n, n, |i, j| if s[(i, j)].norm() > 0.0 { 1.0 } else { 0.0 });
    let mut power = RMatrix::identity(n, n);
    let mut nn = 0usize;
    loop {
        power = &power * &s01;
        nn += 1;
        let pruned_possible = nn as f64 * l_max_edge > l_cut;
        if nn <= n_max && !pruned_possible {
            continue;
        }
        let walks = power.trace();
        if !walks.is_finite() || walks > 1e250 {
            bound += h.h_hat((nn as f64 * l_min).max(l_cut));
            break;
        }
        let arg = (nn as f64 * l_min).max(l_cut);
        let term = walks * l_max_edge / std::f64::consts::PI * repetition_envelope(h, arg);
        bound += term;
        if (nn > n_max && term < 1e-18 * (1.0 + bound)) || nn > n_max + 400 {
            break;
        }
    }

    Ok(TraceFormulaReport {
        spectral_side,
        geometric_side: geometric,
        truncation_bound: bound,
        zero_mode_multiplicity,
        zero_mode_sensitivity,
        warnings,
    })
}

/// Streams primitive orbits straight into the geometric side of the trace
/// formula and its truncation bound.
struct TraceOrbitSink {
    h: GaussianTest,
    l_cut: f64,
    geometric: f64,
    geometric_im: f64,
    bound: f64,
}

impl OrbitSink for TraceOrbitSink {
    fn absorb(&mut self, _de: &DirectedEdges, _seq: &[usize], amplitude: Complex, length: f64) {
        let weight = length / (2.0 * std::f64::consts::PI);
        let mut r = 1;
        loop {
            let rl = r as f64 * length;
            if rl > self.l_cut {
                // Tail of the repetition series, summed until negligible.
                let term = 2.0 * weight * amplitude.norm().powi(r) * self.h.h_hat(rl);
                self.bound += term;
                if term < 1e-18 * (1.0 + self.bound) || r > 100_000 {
                    break;
                }
            } else {
                let a = amplitude.powi(r);
                let contrib = a * self.h.h_hat(rl) + a.conj() * self.h.h_hat(-rl);
                self.geometric += weight * contrib.re;
                self.geometric_im += weight * contrib.im;
            }
            r += 1;
        }
    }

    fn merge(&mut self, other: Self) {
        self.geometric += other.geometric;
        self.geometric_im += other.geometric_im;
        self.bound += other.bound;
    }
}

/// `sum_{r >= 1} h_hat(r l)`, summed until negligible.
fn repetition_envelope(h: &GaussianTest, l: f64) -> f64 {
    let mut acc = 0.0;
    for r in 1..=100_000 {
        let t = h.h_hat(r as f64 * l);
        acc += t;
        if t < 1e-18 * (1.0 + acc) {
            break;
        }
    }
    acc
}

/// Partial sums of the trajectory expansion of the open scattering matrix.
#[derive(Debug, Clone)]
pub struct TrajectoryExpansion {
    /// Partial sum over trajectories of topological length `<= n_max`.
    pub partial_sum: Complex,
    /// Partial sums after each topological length `1..=n_max`.
    pub partial_sums: Vec<Complex>,
    /// Estimated spectral radius of `U_BB`.
    pub interior_spectral_radius: f64,
    /// Set when convergence of the geometric series is not guaranteed
    /// (`rho(U_BB) >= 1 - 1e-6`, e.g. near a bound state in the continuum).
    pub convergence_warning: bool,
}

/// Sum `A_theta e^{i k L_theta}` over trajectories from `lead_in` to
/// `lead_out` of topological length `<= n_max` (interior steps on bonds
/// only). Converges to the scattering matrix element as `n_max -> inf`
/// whenever the interior spectral radius is below one.
pub fn scattering_trajectory_expansion(
    g: &MetricGraph,
    lead_in: EdgeId,
    lead_out: EdgeId,
    k: f64,
    n_max: usize,
) -> Result<TrajectoryExpansion> {
    let map = QuantumMap::new(g)?;
    let de = map.directed();
    if de.lead_count() == 0 {
        return Err(Error::OpenGraphRequired);
    }
    let (Some(ch_in), Some(ch_out)) = (de.lead_index(lead_in), de.lead_index(lead_out)) else {
        return Err(Error::InvalidArgument("lead edge id not found".into()));
    };
    if n_max == 0 {
        return Err(Error::InvalidArgument("n_max must be at least 1".into()));
    }
    let nb = 2 * de.bond_count();
    let u = map.evaluate(k)?;
    let blocks = open_blocks(&u, de);
    let (li, lo) = (ch_in - nb, ch_out - nb);

    // Spectral radius estimate via ||U_BB^64||_2^(1/64).
    let interior_spectral_radius = if nb == 0 {
        0.0
    } else {
        let mut p = blocks.bb.clone();
        for _ in 0..6 {
            p = &p * &p;
        }
        let sv = linalg::singular_values(&p);
        sv[sv.len() - 1].powf(1.0 / 64.0)
    };
    let convergence_warning = interior_spectral_radius >= 1.0 - 1e-6;

    // n = 1: direct lead-to-lead scattering.
    let mut acc = blocks.ll[(lo, li)];
    let mut partial_sums = vec![acc];
    if nb > 0 {
        // n = m + 2 steps: U_LB U_BB^m U_BL.
        let mut x = blocks.bl.column(li).into_owned();
        for _ in 2..=n_max {
            let out = blocks.lb.row(lo).into_owned();
            let dot: Complex = (0..nb).map(|i| out[i] * x[i]).sum();
            acc += dot;
            partial_sums.push(acc);
            x = &blocks.bb * x;
        }
    }
    Ok(TrajectoryExpansion {
        partial_sum: acc,
        partial_sums,
        interior_spectral_radius,
        convergence_warning,
    })
}
