//! Ready-made graphs: the worked examples used throughout the test suites
//! (tadpole, star, open loop, ...) and a seeded random-graph generator.

use crate::graph::{GraphBuilder, MetricGraph, VertexCondition};
use rand::Rng;

use VertexCondition::NeumannKirchhoff as NK;

/// Single bond of length `l` with the given endpoint conditions.
pub fn interval(at_origin: VertexCondition, at_terminus: VertexCondition, l: f64) -> MetricGraph {
    let mut b = GraphBuilder::new();
    let v0 = b.vertex(at_origin);
    let v1 = b.vertex(at_terminus);
    b.bond(v0, v1, l);
    b.build().expect("interval is valid")
}

/// Neumann interval: NK at both ends, spectrum `k = n pi / l`.
pub fn neumann_interval(l: f64) -> MetricGraph {
    interval(NK, NK, l)
}

/// Star graph: dangling bonds around a common NK center, NK tips.
pub fn star(lengths: &[f64]) -> MetricGraph {
    star_with_tip_conditions(lengths, |_| NK)
}

/// Star with per-tip conditions (tip `i` belongs to bond `i`).
pub fn star_with_tip_conditions(
    lengths: &[f64],
    tip: impl Fn(usize) -> VertexCondition,
) -> MetricGraph {
    let mut b = GraphBuilder::new();
    let center = b.vertex(NK);
    for (i, &l) in lengths.iter().enumerate() {
        let t = b.vertex(tip(i));
        b.bond(center, t, l);
    }
    b.build().expect("star is valid")
}

/// Star with all bonds of equal length.
pub fn equal_star(n: usize, l: f64) -> MetricGraph {
    star(&vec![l; n])
}

/// Tadpole (lasso): dangling bond `e_0` of length `l_tail` from the
/// junction to a degree-1 NK vertex, plus a loop `e_1` of length `l_loop`
/// at the junction.
pub fn tadpole(l_tail: f64, l_loop: f64) -> MetricGraph {
    delta_tadpole(l_tail, l_loop, 0.0)
}

/// Tadpole with a delta coupling of strength `alpha` at the junction.
pub fn delta_tadpole(l_tail: f64, l_loop: f64, alpha: f64) -> MetricGraph {
    let mut b = GraphBuilder::new();
    let end = b.vertex(NK);
    let junction = b.vertex(if alpha == 0.0 { NK } else { VertexCondition::Delta(alpha) });
    b.bond(junction, end, l_tail);
    b.bond(junction, junction, l_loop);
    b.build().expect("tadpole is valid")
}

/// Open loop: one lead and one loop of length `l` at the same NK vertex.
pub fn open_loop(l: f64) -> MetricGraph {
    let mut b = GraphBuilder::new();
    let v = b.vertex(NK);
    b.lead(v);
    b.bond(v, v, l);
    b.build().expect("open loop is valid")
}

/// Open star: `n_leads` leads and dangling bonds of the given lengths, all
/// at a common NK center; bond tips are NK.
pub fn open_star(n_leads: usize, bond_lengths: &[f64]) -> MetricGraph {
    let mut b = GraphBuilder::new();
    let center = b.vertex(NK);
    for _ in 0..n_leads {
        b.lead(center);
    }
    for &l in bond_lengths {
        let t = b.vertex(NK);
        b.bond(center, t, l);
    }
    b.build().expect("open star is valid")
}

/// Figure-eight: two loops at a single NK vertex (Betti number 2).
pub fn figure_eight(l1: f64, l2: f64) -> MetricGraph {
    let mut b = GraphBuilder::new();
    let v = b.vertex(NK);
    b.bond(v, v, l1);
    b.bond(v, v, l2);
    b.build().expect("figure-eight is valid")
}

/// Tadpole with two tails: `v0 -e0- v1 =e1,e2= v2 -e3- v3`, with two
/// parallel edges forming the loop, NK conditions except Dirichlet at `v3`.
pub fn tadpole_two_tails(l_tail: f64, l_loop_a: f64, l_loop_b: f64, l_tail2: f64) -> MetricGraph {
    let mut b = GraphBuilder::new();
    let v0 = b.vertex(NK);
    let v1 = b.vertex(NK);
    let v2 = b.vertex(NK);
    let v3 = b.vertex(VertexCondition::Dirichlet);
    b.bond(v0, v1, l_tail);
    b.bond(v1, v2, l_loop_a);
    b.bond(v1, v2, l_loop_b);
    b.bond(v2, v3, l_tail2);
    b.build().expect("tadpole with two tails is valid")
}

/// Square on vertices `(v0, v2, v1, v3)` with an extra diagonal `v2 - v3`;
/// NK everywhere. Edge order: `v0-v2, v2-v1, v1-v3, v3-v0, v2-v3`.
pub fn square_with_diagonal(lengths: [f64; 5]) -> MetricGraph {
    let mut b = GraphBuilder::new();
    let v0 = b.vertex(NK);
    let v1 = b.vertex(NK);
    let v2 = b.vertex(NK);
    let v3 = b.vertex(NK);
    b.bond(v0, v2, lengths[0]);
    b.bond(v2, v1, lengths[1]);
    b.bond(v1, v3, lengths[2]);
    b.bond(v3, v0, lengths[3]);
    b.bond(v2, v3, lengths[4]);
    b.build().expect("square with diagonal is valid")
}

/// Complete NK graph on `n` vertices; edge `(i, j)` for `i < j` gets the
/// next length from `lengths` (cycled).
pub fn complete_nk(n: usize, lengths: &[f64]) -> MetricGraph {
    let mut b = GraphBuilder::new();
    let vs: Vec<_> = (0..n).map(|_| b.vertex(NK)).collect();
    let mut li = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            b.bond(vs[i], vs[j], lengths[li % lengths.len()]);
            li += 1;
        }
    }
    b.build().expect("complete graph is valid")
}

/// Ladder: two rails of `rungs` NK vertices each, bipartite by
/// construction. Rail edges get length `l_rail`, rung edges `l_rung`.
pub fn ladder(rungs: usize, l_rail: f64, l_rung: f64) -> MetricGraph {
    assert!(rungs >= 2, "ladder needs at least two rungs");
    let mut b = GraphBuilder::new();
    let top: Vec<_> = (0..rungs).map(|_| b.vertex(NK)).collect();
    let bot: Vec<_> = (0..rungs).map(|_| b.vertex(NK)).collect();
    for i in 0..rungs - 1 {
        b.bond(top[i], top[i + 1], l_rail);
        b.bond(bot[i], bot[i + 1], l_rail);
    }
    for i in 0..rungs {
        b.bond(top[i], bot[i], l_rung);
    }
    b.build().expect("ladder is valid")
}

/// A handful of pairwise rationally independent lengths (square roots of
/// primes, scaled into `[0.9, 1.5)`).
pub fn generic_lengths(n: usize) -> Vec<f64> {
    const PRIMES: [f64; 12] = [2.0, 3.0, 5.0, 7.0, 11.0, 13.0, 17.0, 19.0, 23.0, 29.0, 31.0, 37.0];
    (0..n)
        .map(|i| {
            let r = PRIMES[i % PRIMES.len()].sqrt();
            // Scale into [0.9, 1.5) so spectra stay comparable.
            let mut l = r;
            while l >= 1.5 {
                l /= 1.5;
            }
            while l < 0.9 {
                l *= 1.3;
            }
            l
        })
        .collect()
}

/// Options for [`random_connected_nk`].
#[derive(Debug, Clone)]
pub struct RandomGraphOptions {
    pub max_bonds: usize,
    pub allow_loops: bool,
    pub min_length: f64,
    pub max_length: f64,
}

impl Default for RandomGraphOptions {
    fn default() -> Self {
        RandomGraphOptions { max_bonds: 5, allow_loops: true, min_length: 0.5, max_length: 2.0 }
    }
}

/// Random connected closed NK graph: a random spanning tree plus extra
/// bonds (loops and multi-edges allowed unless disabled).
pub fn random_connected_nk<R: Rng + ?Sized>(
    rng: &mut R,
    opts: &RandomGraphOptions,
) -> MetricGraph {
    let bonds = rng.random_range(1..=opts.max_bonds);
    let min_vertices = if opts.allow_loops { 1 } else { 2 };
    let nv = rng.random_range(min_vertices..=bonds + 1);
    let mut b = GraphBuilder::new();
    let vs: Vec<_> = (0..nv).map(|_| b.vertex(NK)).collect();
    let len = |rng: &mut R| rng.random_range(opts.min_length..opts.max_length);
    for v in 1..nv {
        let parent = rng.random_range(0..v);
        let l = len(rng);
        b.bond(vs[parent], vs[v], l);
    }
    for _ in (nv.saturating_sub(1))..bonds {
        let i = rng.random_range(0..nv);
        let j = loop {
            let j = rng.random_range(0..nv);
            if opts.allow_loops || j != i {
                break j;
            }
        };
        let l = len(rng);
        b.bond(vs[i], vs[j], l);
    }
    b.build().expect("random graph is connected by construction")
}
