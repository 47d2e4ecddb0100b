#![allow(dead_code)]

use cast_core::config::SwdCost;
use cast_core::fusion::transition;
use cast_core::lsrc::{relation_graph, LsrcObjective};
use cast_core::matching::{node_response, random_directions, ScaleTerm, WaveletObjective};
use cast_core::SparseGraph;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

pub fn unit_rows(mut a: Array2<f64>) -> Array2<f64> {
    for mut r in a.rows_mut() {
        let n = r.dot(&r).sqrt();
        if n > 0.0 {
            r /= n;
        }
    }
    a
}

/// Erdős–Rényi graph with uniform weights in `(0.05, 1]`.
pub fn random_graph(n: usize, p: f64, rng: &mut ChaCha8Rng) -> SparseGraph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                edges.push((i, j, 0.05 + 0.95 * rng.random::<f64>()));
            }
        }
    }
    SparseGraph::from_edges(n, edges)
}

pub struct Instance {
    pub z: Array2<f64>,
    pub y: Array2<f64>,
    pub graph: SparseGraph,
    pub wavelet: WaveletObjective,
    pub lsrc: LsrcObjective,
}

/// Small matching instance: proxies sit near data rows, three scales.
pub fn instance(n: usize, k: usize, d: usize, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = unit_rows(gaussian(n, d, &mut rng));
    let graph = random_graph(n, 0.2, &mut rng);
    let mut y = Array2::<f64>::zeros((k, d));
    for mut row in y.rows_mut() {
        let i = rng.random_range(0..n);
        row.assign(&z.row(i));
        row.iter_mut().for_each(|v| {
            let e: f64 = StandardNormal.sample(&mut rng);
            *v += 0.15 * e
        });
    }
    let p = transition(&graph);
    let dirs = random_directions(16, d, seed ^ 0x5eed);
    let terms = [1usize, 2, 4]
        .iter()
        .map(|&s| {
            let r = node_response(z.view(), &p, s);
            let tau = r.iter().map(|v| v * v).sum::<f64>() / n as f64;
            ScaleTerm::new(s, 1.0 / 3.0, tau, r, k, dirs.clone(), SwdCost::Squared).unwrap()
        })
        .collect();
    let wavelet = WaveletObjective {
        terms,
        k_proxy: 6,
        tau_eta: 0.3,
        lambda_edge: 1.0,
        lambda_cov: 0.5,
    };
    let relation = relation_graph(&z, &graph, &graph, None, 0.5, 4);
    let lsrc = LsrcObjective {
        relation,
        tau_c: 0.4,
        beta: 0.5,
        mu: 1.0,
    };
    Instance {
        z,
        y,
        graph,
        wavelet,
        lsrc,
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct FdStats {
    pub checked: usize,
    pub skipped_ties: usize,
    pub max_rel: f64,
}

/// Central differences of `loss` against `grad`. Coordinates whose `±h`
/// perturbation changes `state` are left out.
pub fn fd_check<S: PartialEq>(
    y: &Array2<f64>,
    grad: &Array2<f64>,
    h: f64,
    loss: impl Fn(&Array2<f64>) -> f64,
    state: impl Fn(&Array2<f64>) -> S,
) -> FdStats {
    let base = state(y);
    let mut stats = FdStats::default();
    for k in 0..y.nrows() {
        for d in 0..y.ncols() {
            let g = grad[[k, d]];
            if g.abs() <= 1e-8 {
                continue;
            }
            let mut yp = y.clone();
            yp[[k, d]] += h;
            let mut ym = y.clone();
            ym[[k, d]] -= h;
            if state(&yp) != base || state(&ym) != base {
                stats.skipped_ties += 1;
                continue;
            }
            let fd = (loss(&yp) - loss(&ym)) / (2.0 * h);
            let rel = (g - fd).abs() / g.abs().max(fd.abs());
            stats.max_rel = stats.max_rel.max(rel);
            stats.checked += 1;
        }
    }
    stats
}
