//! Per-modality fuzzy k-NN graphs.
//!
//! Each node gets a local scale `σ_i` such that its `k` exponential
//! memberships `exp(-max(0, d_ij - ρ_i) / σ_i)` sum to `log2 k`, where `ρ_i`
//! is the distance to its nearest neighbour. The directed memberships are then
//! merged with the probabilistic t-conorm `a + b - ab`.

use std::collections::BTreeMap;

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::SparseGraph;

pub const BISECTION_ITERS: usize = 64;

/// `k` nearest neighbours per node, ascending by distance, ties by index.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborList {
    k: usize,
    indices: Vec<usize>,
    distances: Vec<f64>,
}

impl NeighborList {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.indices.len() / self.k.max(1)
    }

    pub fn indices(&self, i: usize) -> &[usize] {
        &self.indices[i * self.k..(i + 1) * self.k]
    }

    pub fn distances(&self, i: usize) -> &[f64] {
        &self.distances[i * self.k..(i + 1) * self.k]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalScale {
    pub rho: Vec<f64>,
    pub sigma: Vec<f64>,
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Exact Euclidean k-NN by exhaustive scan. Requires `n > k`.
pub fn knn(features: &Array2<f64>, k: usize) -> Result<NeighborList> {
    let n = features.nrows();
    if n <= k {
        return Err(Error::TooFewSamples { n, k });
    }
    let features = features.as_standard_layout();
    let data = features.as_slice().expect("standard layout");
    let dim = features.ncols();
    let row = |i: usize| &data[i * dim..(i + 1) * dim];

    let rows: Vec<(Vec<usize>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = row(i);
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (euclidean(xi, row(j)), j))
                .collect();
            let by_dist =
                |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            if k < cand.len() {
                cand.select_nth_unstable_by(k - 1, by_dist);
                cand.truncate(k);
            }
            cand.sort_unstable_by(by_dist);
            cand.into_iter().map(|(d, j)| (j, d)).unzip()
        })
        .collect();

    let mut indices = Vec::with_capacity(n * k);
    let mut distances = Vec::with_capacity(n * k);
    for (idx, dist) in rows {
        indices.extend(idx);
        distances.extend(dist);
    }
    Ok(NeighborList {
        k,
        indices,
        distances,
    })
}

fn membership_sum(distances: &[f64], rho: f64, sigma: f64) -> f64 {
    distances
        .iter()
        .map(|&d| (-(d - rho).max(0.0) / sigma).exp())
        .sum()
}

/// Bisection bracket for one node's `σ`.
pub fn sigma_bounds(distances: &[f64]) -> (f64, f64) {
    const FLOOR: f64 = 1e-8;
    let nonzero: Vec<f64> = distances.iter().copied().filter(|&d| d > 0.0).collect();
    let lo = if nonzero.is_empty() {
        FLOOR
    } else {
        (1e-3 * nonzero.iter().sum::<f64>() / nonzero.len() as f64).max(FLOOR)
    };
    let max = distances.iter().copied().fold(0.0, f64::max);
    let hi = (1e3 * max).max(lo);
    (lo, hi)
}

/// Solves `Σ_j exp(-max(0, d_j - ρ) / σ) = log2 k` for `σ` by bisection,
/// returning the nearer bracket end when the target is out of reach.
pub fn solve_sigma(distances: &[f64], rho: f64, k: usize) -> f64 {
    let target = (k as f64).log2();
    let (mut lo, mut hi) = sigma_bounds(distances);
    if membership_sum(distances, rho, lo) >= target {
        return lo;
    }
    if membership_sum(distances, rho, hi) <= target {
        return hi;
    }
    // The membership sum is increasing in σ.
    for _ in 0..BISECTION_ITERS {
        let mid = 0.5 * (lo + hi);
        if membership_sum(distances, rho, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Directed memberships `A_{i→j}` of one node's neighbours.
pub fn directed_membership(distances: &[f64], rho: f64, sigma: f64) -> Vec<f64> {
    distances
        .iter()
        .map(|&d| (-(d - rho).max(0.0) / sigma).exp())
        .collect()
}

/// Probabilistic fuzzy union of two directed memberships.
pub fn fuzzy_union(a: f64, b: f64) -> f64 {
    a + b - a * b
}

/// Merges per-node directed membership lists `(j, A_{i→j})` into an
/// undirected graph with `B_ij = a + b - ab`.
pub fn symmetrize(directed: &[Vec<(usize, f64)>]) -> SparseGraph {
    let n = directed.len();
    let mut pairs: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
    for (i, row) in directed.iter().enumerate() {
        for &(j, a) in row {
            if i == j {
                continue;
            }
            let entry = pairs.entry((i.min(j), i.max(j))).or_insert((0.0, 0.0));
            if i < j {
                entry.0 = a;
            } else {
                entry.1 = a;
            }
        }
    }
    SparseGraph::from_edges(
        n,
        pairs
            .into_iter()
            .map(|((i, j), (a, b))| (i, j, fuzzy_union(a, b))),
    )
}

/// Everything produced while building one modality's topology graph.
#[derive(Debug, Clone)]
pub struct ModalityTopology {
    pub neighbors: NeighborList,
    pub scale: LocalScale,
    pub graph: SparseGraph,
}

pub fn fuzzy_graph(features: &Array2<f64>, k: usize) -> Result<ModalityTopology> {
    let neighbors = knn(features, k)?;
    let n = neighbors.n();
    let solved: Vec<(f64, f64, Vec<(usize, f64)>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let d = neighbors.distances(i);
            let rho = d[0];
            let sigma = solve_sigma(d, rho, k);
            let memberships = directed_membership(d, rho, sigma);
            let row = neighbors
                .indices(i)
                .iter()
                .copied()
                .zip(memberships)
                .collect();
            (rho, sigma, row)
        })
        .collect();
    let mut rho = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    let mut directed = Vec::with_capacity(n);
    for (r, s, row) in solved {
        rho.push(r);
        sigma.push(s);
        directed.push(row);
    }
    let graph = symmetrize(&directed);
    Ok(ModalityTopology {
        neighbors,
        scale: LocalScale { rho, sigma },
        graph,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn knn_on_a_line() {
        let x = array![[0.0], [1.0], [3.0]];
        let nl = knn(&x, 1).unwrap();
        assert_eq!((nl.indices(0), nl.distances(0)), (&[1][..], &[1.0][..]));
        assert_eq!((nl.indices(1), nl.distances(1)), (&[0][..], &[1.0][..]));
        assert_eq!((nl.indices(2), nl.distances(2)), (&[1][..], &[2.0][..]));
    }

    #[test]
    fn knn_ties_prefer_lower_index() {
        let x = Array2::<f64>::ones((4, 3));
        let nl = knn(&x, 2).unwrap();
        assert_eq!(nl.indices(0), &[1, 2]);
        assert_eq!(nl.indices(1), &[0, 2]);
        assert_eq!(nl.indices(2), &[0, 1]);
        assert_eq!(nl.indices(3), &[0, 1]);
        assert!(nl.distances(3).iter().all(|&d| d == 0.0));
    }

    #[test]
    fn knn_needs_more_samples_than_k() {
        let x = Array2::<f64>::zeros((3, 2));
        assert!(matches!(
            knn(&x, 3),
            Err(Error::TooFewSamples { n: 3, k: 3 })
        ));
    }

    #[test]
    fn sigma_closed_form_root() {
        let sigma = solve_sigma(&[1.0, 2.0, 2.0, 2.0], 1.0, 4);
        assert!((sigma - 1.0 / 3f64.ln()).abs() < 1e-9, "{sigma}");
    }

    #[test]
    fn sigma_unattainable_target_clamps_low() {
        let d = [1.0, 1.0];
        assert_eq!(solve_sigma(&d, 1.0, 2), sigma_bounds(&d).0);
        assert_eq!(sigma_bounds(&d).0, 1e-3);
    }

    #[test]
    fn sigma_grows_with_neighbor_distances() {
        let near = solve_sigma(&[1.0, 2.0, 2.0, 2.0], 1.0, 4);
        let far = solve_sigma(&[1.0, 10.0, 10.0, 10.0], 1.0, 4);
        assert!(far > near);
    }

    #[test]
    fn membership_examples() {
        let m = directed_membership(&[1.0, 1.5, 0.5], 1.0, 0.5);
        assert_eq!(m[0], 1.0);
        assert!((m[1] - (-1f64).exp()).abs() < 1e-15);
        assert_eq!(m[2], 1.0);
    }

    #[test]
    fn symmetrize_algebra() {
        assert_eq!(fuzzy_union(1.0, 0.0), 1.0);
        assert_eq!(fuzzy_union(0.5, 0.5), 0.75);
        assert_eq!(fuzzy_union(1.0, 1.0), 1.0);
        let g = symmetrize(&[vec![(1, 0.5)], vec![(0, 0.5), (2, 1.0)], vec![]]);
        assert_eq!(g.weight(0, 1), 0.75);
        assert_eq!(g.weight(2, 1), 1.0);
    }
}
