//! Invariants checked on generated inputs.

mod common;

use cast_core::assignment::{assignment_cost, hungarian};
use cast_core::config::SwdCost;
use cast_core::fusion::{fuse, probe, response_entropy, transition};
use cast_core::lsrc::{direct_coverage, propagate, relation_graph};
use cast_core::matching::{random_directions, swd, swd_with_directions};
use cast_core::optimizer::reg_loss;
use cast_core::refinement::refine;
use cast_core::topology::{fuzzy_graph, knn, sigma_bounds, solve_sigma};
use cast_core::SparseGraph;
use common::{gaussian, random_graph, unit_rows};
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    gaussian(rows, cols, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn graph(n: usize, p: f64, seed: u64) -> SparseGraph {
    random_graph(n, p, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn symmetric(g: &SparseGraph) -> bool {
    g.edges()
        .all(|(i, j, w)| i != j && g.weight(j, i) == w && g.weight(i, j) == w)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn fuzzy_graph_is_symmetric_and_saturates(n in 8usize..60, d in 1usize..6, k in 2usize..7, seed: u64) {
        let x = matrix(n, d, seed);
        let topo = fuzzy_graph(&x, k).unwrap();
        let g = &topo.graph;
        prop_assert!(symmetric(g));
        prop_assert!(g.edges().all(|(_, _, w)| w > 0.0 && w <= 1.0));
        // The nearest neighbour of every node carries full membership, up to
        // rounding in `a + b - ab`.
        let nl = knn(&x, k).unwrap();
        for i in 0..n {
            prop_assert!((g.weight(i, nl.indices(i)[0]) - 1.0).abs() <= 1e-15);
        }
    }

    #[test]
    fn sigma_meets_constraint_or_clamps(dists in prop::collection::vec(0.0f64..10.0, 2..20)) {
        let mut ds = dists;
        ds.sort_by(f64::total_cmp);
        let k = ds.len();
        let rho = ds[0];
        let sigma = solve_sigma(&ds, rho, k);
        let sum: f64 = ds.iter().map(|&v| (-(v - rho).max(0.0) / sigma).exp()).sum();
        let (lo, hi) = sigma_bounds(&ds);
        prop_assert!((sum - (k as f64).log2()).abs() <= 1e-5 || sigma == lo || sigma == hi);
    }

    #[test]
    fn membership_falls_as_a_neighbour_recedes(
        dists in prop::collection::vec(0.1f64..5.0, 3..12),
        which in 1usize..12,
        bump in 0.01f64..3.0,
    ) {
        let mut ds = dists;
        ds.sort_by(f64::total_cmp);
        let j = which % (ds.len() - 1) + 1;
        let k = ds.len();
        let m = |ds: &[f64], j: usize| {
            let s = solve_sigma(ds, ds[0], k);
            (-(ds[j] - ds[0]).max(0.0) / s).exp()
        };
        let before = m(&ds, j);
        let mut moved = ds.clone();
        moved[j] += bump;
        // Keep the list ascending so ρ stays the first entry.
        moved.sort_by(f64::total_cmp);
        let pos = moved.iter().position(|&v| v == ds[j] + bump).unwrap();
        prop_assert!(m(&moved, pos) <= before + 1e-12);
    }

    #[test]
    fn refinement_is_bounded(n in 6usize..40, p in 0.1f64..0.6, s1: u64, s2: u64, theta in 0.0f64..0.5, kappa in 0.0f64..1.0) {
        let a = graph(n, p, s1);
        let b = graph(n, p, s2);
        let r = refine(&a, &b, theta, kappa);
        for (orig, other, hat, prof) in [(&a, &b, &r.img, &r.img_profile), (&b, &a, &r.txt, &r.txt_profile)] {
            prop_assert!(symmetric(hat));
            for (i, j, w) in hat.edges() {
                prop_assert!((0.0..=1.0).contains(&w));
                let w0 = orig.weight(i, j);
                let wo = other.weight(i, j);
                prop_assert!((w - w0).abs() <= kappa + 1e-12);
                // Compensation never overshoots the other modality.
                prop_assert!(w >= w0.min(wo) - 1e-12 && w <= w0.max(wo) + 1e-12);
            }
            prop_assert!(prof.redundancy.iter().all(|v| (-1.0..=1.0).contains(v)));
            prop_assert!(prof.inseparability.iter().all(|v| (0.0..=1.0 + 1e-9).contains(v)));
            prop_assert!(prof.degradation.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn identical_graphs_refine_to_themselves(n in 6usize..40, p in 0.1f64..0.6, seed: u64) {
        let a = graph(n, p, seed);
        let r = refine(&a, &a, 0.1, 0.3);
        prop_assert_eq!(&r.img, &a);
        prop_assert_eq!(&r.txt, &a);
    }

    #[test]
    fn unified_graph_bounds(n in 8usize..40, p in 0.1f64..0.5, s1: u64, s2: u64, lambda_sp in 0.0f64..0.5) {
        let a = graph(n, p, s1);
        let b = graph(n, p, s2);
        let q = probe(n, 4, s1 ^ s2);
        let f = fuse(&a, &b, &[1, 2, 4], &[1.0 / 3.0; 3], &q, 0.1, lambda_sp).unwrap();
        let support = SparseGraph::union_support(&a, &b);
        prop_assert!(symmetric(&f.unified));
        for (i, j, w) in f.unified.edges() {
            prop_assert!(w > 0.0 && w <= 1.0 - lambda_sp + 1e-12);
            prop_assert!(support.contains(&(i.min(j), i.max(j))));
        }
        for s in &f.scales {
            prop_assert!((s.weights.gamma_img + s.weights.gamma_txt - 1.0).abs() <= 1e-12);
        }
        let pm = transition(&f.unified).to_dense();
        for row in pm.rows() {
            prop_assert!((row.sum() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn entropy_is_a_fraction(n in 2usize..50, q in 1usize..4, seed: u64, zeros in 0usize..50) {
        let mut w = matrix(n, q, seed);
        for mut r in w.rows_mut().into_iter().take(zeros.min(n)) {
            r.fill(0.0);
        }
        let h = response_entropy(&w);
        prop_assert!((0.0..=1.0).contains(&h));
    }

    #[test]
    fn indirect_coverage_is_a_convex_combination(n in 6usize..40, k in 1usize..5, seed: u64, beta in 0.0f64..1.0, tau_c in 0.05f64..2.0) {
        let z = unit_rows(matrix(n, 4, seed));
        let y = matrix(k, 4, seed.wrapping_add(1)) * 0.5;
        let g = graph(n, 0.2, seed);
        let r = relation_graph(&z, &g, &g, None, 0.5, 3);
        let h = direct_coverage(&z, &y, tau_c);
        prop_assert!(h.iter().all(|&v| v > 0.0 && v <= 1.0));
        let hb = propagate(&h, &r, beta);
        let lo = h.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = h.iter().copied().fold(0.0, f64::max);
        prop_assert!(hb.iter().all(|&v| v >= lo - 1e-15 && v <= hi + 1e-15));
    }

    #[test]
    fn constant_coverage_is_a_fixpoint(n in 6usize..40, seed: u64, c in 0.01f64..1.0, beta in 0.0f64..1.0) {
        let z = unit_rows(matrix(n, 3, seed));
        let g = graph(n, 0.3, seed);
        let r = relation_graph(&z, &g, &g, None, 0.5, 3);
        let hb = propagate(&Array1::from_elem(n, c), &r, beta);
        prop_assert!(hb.iter().all(|&v| (v - c).abs() <= 1e-15));
    }

    #[test]
    fn hungarian_is_injective_and_scale_invariant(k in 1usize..8, extra in 0usize..6, seed: u64, scale in 0.01f64..100.0) {
        let n = k + extra;
        let c = matrix(k, n, seed).mapv(f64::abs);
        let pi = hungarian(&c).unwrap();
        let mut seen = pi.clone();
        seen.sort_unstable();
        seen.dedup();
        prop_assert_eq!(seen.len(), k);
        let scaled = hungarian(&(&c * scale)).unwrap();
        let base = assignment_cost(&c, &pi);
        // Equal up to rounding: different optima may tie exactly.
        prop_assert!((assignment_cost(&c, &scaled) - base).abs() <= 1e-12 * base.max(1.0));
    }

    #[test]
    fn swd_identity_and_symmetry(n in 2usize..30, m in 2usize..30, d in 1usize..5, seed: u64) {
        let a = matrix(n, d, seed);
        let b = matrix(m, d, seed.wrapping_add(7));
        prop_assert_eq!(swd(a.view(), a.view(), 16, seed).unwrap(), 0.0);
        let dirs = random_directions(16, d, seed);
        let ab = swd_with_directions(a.view(), b.view(), &dirs, SwdCost::Squared).unwrap();
        let ba = swd_with_directions(b.view(), a.view(), &dirs, SwdCost::Squared).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() <= 1e-12 * ab.max(1e-300));
    }

    #[test]
    fn regulariser_is_bounded_below(k in 2usize..8, seed: u64, margin in 0.0f64..2.0, w_div in 0.0f64..1.0, diam in 0.01f64..5.0) {
        let y = matrix(k, 3, seed);
        let (v, _) = reg_loss(&y, margin, w_div, diam);
        prop_assert!(v >= -w_div * diam - 1e-12);
    }
}
