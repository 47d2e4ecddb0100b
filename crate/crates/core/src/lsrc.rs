//! Local soft relational coverage.
//!
//! Direct coverage `h_i` measures how close node `i` is to the proxies.
//! It is spread over a sparse relation graph
//! `R_ij = g_ij (η r_ij + 1 - η)`, with geometric decay
//! `g_ij = exp(-‖z_i - z_j‖² / σ_r²)` and cross-modal support
//! `r_ij = max(B̂_I(i,j), B̂_T(i,j))`:
//!
//! ```text
//! h̄_i = (1 - β) h_i + β Σ_j R_ij h_j / Σ_j R_ij
//! L   = -(1/N) Σ_i log(h̄_i + ε) + μ Σ_{i<j} R_ij (h_i - h_j)² / (Σ_{i<j} R_ij + ε)
//! ```
//!
//! Two proxies parked in the same dense region add little indirect coverage
//! beyond one, so the log term rewards moving one of them elsewhere.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::graph::SparseGraph;
use crate::matching::pairwise_sqdist;

pub const LSRC_EPS: f64 = 1e-12;

/// Rows of `Z` compared per block when searching spatial neighbours.
const KNN_BLOCK: usize = 512;

#[derive(Debug, Clone)]
pub struct RelationGraph {
    pub graph: SparseGraph,
    pub sigma_r: f64,
    pub eta: f64,
    row_sum: Vec<f64>,
    total: f64,
}

impl RelationGraph {
    pub fn from_graph(graph: SparseGraph, sigma_r: f64, eta: f64) -> Self {
        let row_sum = (0..graph.n()).map(|i| graph.degree(i)).collect();
        let total = graph.edges().map(|(_, _, w)| w).sum();
        RelationGraph {
            graph,
            sigma_r,
            eta,
            row_sum,
            total,
        }
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row_sum[i]
    }

    /// `Σ_{i<j} R_ij`.
    pub fn total_weight(&self) -> f64 {
        self.total
    }
}

/// The `cap` nearest rows of `z` to every row, ties by index.
pub fn spatial_neighbors(z: &Array2<f64>, cap: usize) -> Vec<Vec<usize>> {
    let n = z.nrows();
    let cap = cap.min(n.saturating_sub(1));
    if cap == 0 {
        return vec![Vec::new(); n];
    }
    let mut out = Vec::with_capacity(n);
    for start in (0..n).step_by(KNN_BLOCK) {
        let end = (start + KNN_BLOCK).min(n);
        let d = pairwise_sqdist(z.slice(ndarray::s![start..end, ..]), z.view());
        let block: Vec<Vec<usize>> = d
            .as_slice()
            .expect("standard layout")
            .par_chunks(n)
            .enumerate()
            .map(|(r, row)| {
                let i = start + r;
                let mut cand: Vec<usize> = (0..n).filter(|&j| j != i).collect();
                let by = |a: &usize, b: &usize| row[*a].total_cmp(&row[*b]).then(a.cmp(b));
                if cap < cand.len() {
                    cand.select_nth_unstable_by(cap - 1, by);
                    cand.truncate(cap);
                }
                cand.sort_unstable_by(by);
                cand
            })
            .collect();
        out.extend(block);
    }
    out
}

/// Relation support: edges of either refined graph plus each node's
/// `support_cap` nearest neighbours in `Z`. Pairs are `(i, j)` with `i < j`.
pub fn relation_support(
    z: &Array2<f64>,
    b_img: &SparseGraph,
    b_txt: &SparseGraph,
    support_cap: usize,
) -> Vec<(usize, usize)> {
    let mut pairs = SparseGraph::union_support(b_img, b_txt);
    for (i, nbrs) in spatial_neighbors(z, support_cap).into_iter().enumerate() {
        pairs.extend(nbrs.into_iter().map(|j| (i.min(j), i.max(j))));
    }
    pairs.sort_unstable();
    pairs.dedup();
    pairs
}

fn sqdist_rows(z: &Array2<f64>, i: usize, j: usize) -> f64 {
    z.row(i)
        .iter()
        .zip(z.row(j))
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// Median Euclidean length of the support pairs, the default `σ_r`.
pub fn median_support_distance(z: &Array2<f64>, support: &[(usize, usize)]) -> f64 {
    let mut d: Vec<f64> = support
        .iter()
        .map(|&(i, j)| sqdist_rows(z, i, j).sqrt())
        .collect();
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let m = d.len();
    let med = if m % 2 == 1 {
        d[m / 2]
    } else {
        0.5 * (d[m / 2 - 1] + d[m / 2])
    };
    if med > 0.0 {
        med
    } else {
        1.0
    }
}

/// Builds `R` on an explicit support.
pub fn relation_graph_on(
    z: &Array2<f64>,
    b_img: &SparseGraph,
    b_txt: &SparseGraph,
    support: &[(usize, usize)],
    sigma_r: f64,
    eta: f64,
) -> RelationGraph {
    let s2 = sigma_r * sigma_r;
    let edges: Vec<(usize, usize, f64)> = support
        .par_iter()
        .map(|&(i, j)| {
            let g = (-sqdist_rows(z, i, j) / s2).exp();
            let cross = b_img.weight(i, j).max(b_txt.weight(i, j));
            (i, j, g * (eta * cross + 1.0 - eta))
        })
        .collect();
    RelationGraph::from_graph(SparseGraph::from_edges(z.nrows(), edges), sigma_r, eta)
}

/// Builds `R`; `sigma_r = None` uses the median support distance.
pub fn relation_graph(
    z: &Array2<f64>,
    b_img: &SparseGraph,
    b_txt: &SparseGraph,
    sigma_r: Option<f64>,
    eta: f64,
    support_cap: usize,
) -> RelationGraph {
    let support = relation_support(z, b_img, b_txt, support_cap);
    let sigma_r = sigma_r.unwrap_or_else(|| median_support_distance(z, &support));
    relation_graph_on(z, b_img, b_txt, &support, sigma_r, eta)
}

/// `h_i = (1/K) Σ_k exp(-‖z_i - y_k‖² / τ_c)` from precomputed squared distances.
pub fn direct_coverage_from_sqdist(sqdist: ArrayView2<'_, f64>, tau_c: f64) -> Array1<f64> {
    let k = sqdist.ncols() as f64;
    sqdist
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|&d| (-d / tau_c).exp()).sum::<f64>() / k)
        .collect()
}

pub fn direct_coverage(z: &Array2<f64>, y: &Array2<f64>, tau_c: f64) -> Array1<f64> {
    direct_coverage_from_sqdist(pairwise_sqdist(z.view(), y.view()).view(), tau_c)
}

/// Indirect coverage with row-normalised `R`.
pub fn propagate(h: &Array1<f64>, r: &RelationGraph, beta: f64) -> Array1<f64> {
    (0..h.len())
        .map(|i| {
            let s = r.row_sum(i);
            if s <= 0.0 {
                return h[i];
            }
            let spread: f64 = r
                .graph
                .neighbors(i)
                .iter()
                .map(|&(j, w)| w * h[j])
                .sum::<f64>()
                / s;
            (1.0 - beta) * h[i] + beta * spread
        })
        .collect()
}

pub fn lsrc_loss(h: &Array1<f64>, h_bar: &Array1<f64>, r: &RelationGraph, mu: f64) -> f64 {
    let n = h.len() as f64;
    let nll = -h_bar.iter().map(|&v| (v + LSRC_EPS).ln()).sum::<f64>() / n;
    if mu == 0.0 {
        return nll;
    }
    let smooth: f64 = r
        .graph
        .edges()
        .map(|(i, j, w)| w * (h[i] - h[j]).powi(2))
        .sum();
    nll + mu * smooth / (r.total_weight() + LSRC_EPS)
}

/// `∂L/∂h`, holding `R` fixed.
pub fn lsrc_grad_h(
    h: &Array1<f64>,
    h_bar: &Array1<f64>,
    r: &RelationGraph,
    beta: f64,
    mu: f64,
) -> Array1<f64> {
    let n = h.len();
    let mut g = Array1::<f64>::zeros(n);
    for i in 0..n {
        let u = -1.0 / (n as f64 * (h_bar[i] + LSRC_EPS));
        let s = r.row_sum(i);
        if s <= 0.0 {
            g[i] += u;
            continue;
        }
        g[i] += (1.0 - beta) * u;
        for &(j, w) in r.graph.neighbors(i) {
            g[j] += beta * u * w / s;
        }
    }
    if mu != 0.0 {
        let c = 2.0 * mu / (r.total_weight() + LSRC_EPS);
        for (i, j, w) in r.graph.edges() {
            let t = c * w * (h[i] - h[j]);
            g[i] += t;
            g[j] -= t;
        }
    }
    g
}

#[derive(Debug, Clone)]
pub struct LsrcReport {
    pub value: f64,
    pub h: Array1<f64>,
    pub h_bar: Array1<f64>,
    /// `∂L/∂Y`, `K x D_Z`.
    pub grad: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct LsrcObjective {
    pub relation: RelationGraph,
    pub tau_c: f64,
    pub beta: f64,
    pub mu: f64,
}

impl LsrcObjective {
    pub fn evaluate(&self, z: &Array2<f64>, y: &Array2<f64>) -> LsrcReport {
        let d = pairwise_sqdist(z.view(), y.view());
        self.evaluate_with(z, y, d.view())
    }

    /// Loss and gradient given the `N x K` squared distances between `Z` and `Y`.
    pub fn evaluate_with(
        &self,
        z: &Array2<f64>,
        y: &Array2<f64>,
        sqdist: ArrayView2<'_, f64>,
    ) -> LsrcReport {
        let kp = y.nrows();
        let c = sqdist.mapv(|d| (-d / self.tau_c).exp());
        let h: Array1<f64> = c.sum_axis(Axis(1)) / kp as f64;
        let h_bar = propagate(&h, &self.relation, self.beta);
        let value = lsrc_loss(&h, &h_bar, &self.relation, self.mu);
        let gh = lsrc_grad_h(&h, &h_bar, &self.relation, self.beta, self.mu);
        // ∂h_i/∂y_k = (2 / (K τ_c)) c_ik (z_i - y_k)
        let mut a = c;
        for (mut row, &g) in a.rows_mut().into_iter().zip(gh.iter()) {
            row.mapv_inplace(|v| v * g);
        }
        let mut grad = a.t().dot(z);
        for (k, colsum) in a.sum_axis(Axis(0)).iter().enumerate() {
            grad.row_mut(k).scaled_add(-colsum, &y.row(k));
        }
        grad *= 2.0 / (kp as f64 * self.tau_c);
        LsrcReport {
            value,
            h,
            h_bar,
            grad,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn two_node(w: f64) -> RelationGraph {
        RelationGraph::from_graph(SparseGraph::from_edges(2, [(0, 1, w)]), 1.0, 0.5)
    }

    #[test]
    fn relation_weight_examples() {
        let z = array![[0.0, 0.0], [1.0, 0.0], [0.0, 0.0]];
        let b = SparseGraph::from_edges(3, [(0, 2, 1.0)]);
        let empty = SparseGraph::empty(3);
        let support = [(0, 1), (0, 2)];
        let r = relation_graph_on(&z, &b, &empty, &support, 1.0, 0.0);
        assert!((r.graph.weight(0, 1) - (-1f64).exp()).abs() < 1e-15);
        assert_eq!(r.graph.weight(0, 2), 1.0);
        let r1 = relation_graph_on(&z, &b, &empty, &support, 1.0, 1.0);
        assert_eq!(r1.graph.weight(0, 2), 1.0);
        assert_eq!(r1.graph.weight(0, 1), 0.0);
    }

    #[test]
    fn support_includes_spatial_neighbors() {
        let z = array![[0.0], [1.0], [5.0], [5.5]];
        let empty = SparseGraph::empty(4);
        let s = relation_support(&z, &empty, &empty, 1);
        assert_eq!(s, vec![(0, 1), (2, 3)]);
    }

    #[test]
    fn direct_coverage_examples() {
        let z = array![[0.0, 0.0]];
        let tau: f64 = 0.4;
        let y = array![[0.0, 0.0], [tau.sqrt(), 0.0]];
        let h = direct_coverage(&z, &y, tau);
        assert!((h[0] - (1.0 + (-1f64).exp()) / 2.0).abs() < 1e-12);
        assert!((h[0] - 0.68394).abs() < 1e-5);
        assert_eq!(direct_coverage(&z, &array![[0.0, 0.0]], 1.0)[0], 1.0);
    }

    #[test]
    fn propagation_examples() {
        let r = two_node(0.3);
        let h = array![1.0, 0.0];
        assert_eq!(propagate(&h, &r, 0.5), array![0.5, 0.5]);
        assert_eq!(propagate(&h, &r, 0.0), h);
        let flat = array![0.25, 0.25];
        assert_eq!(propagate(&flat, &r, 0.8), flat);
        let isolated = RelationGraph::from_graph(SparseGraph::empty(2), 1.0, 0.5);
        assert_eq!(propagate(&h, &isolated, 0.9), h);
    }

    #[test]
    fn loss_examples() {
        let r = two_node(0.7);
        let one = array![1.0, 1.0];
        assert!(lsrc_loss(&one, &one, &r, 3.0).abs() < 1e-11);
        let h = array![0.9, 0.1];
        let hb = propagate(&h, &r, 0.5);
        let nll = -((hb[0] + LSRC_EPS).ln() + (hb[1] + LSRC_EPS).ln()) / 2.0;
        assert_eq!(lsrc_loss(&h, &hb, &r, 0.0), nll);
        let full = lsrc_loss(&h, &hb, &r, 2.0);
        assert!((full - nll - 2.0 * 0.7 * 0.64 / (0.7 + LSRC_EPS)).abs() < 1e-12);
    }
}
