//! Local-collapse detection and cross-modal bounded compensation.
//!
//! Two node-level symptoms are measured per modality. Redundancy `R_i` is the
//! mean cosine similarity between node `i`'s edge pattern and those of its
//! neighbours, all evaluated over `i`'s candidate neighbourhood (the union of
//! its neighbours in both modalities). Inseparability `S_i` is the normalised
//! entropy of `i`'s outgoing edge weights. Their clamped mean is the node's
//! degradation, and an edge is as reliable as its worse endpoint.
//!
//! An edge whose reliability in this modality trails the other modality's by
//! more than `θ` is pulled toward the other modality's weight by a step
//! `κ = min(κ_max, gap)`. No weight ever moves by more than `κ_max`.

use rayon::prelude::*;

use crate::graph::SparseGraph;

pub const LOG_EPS: f64 = 1e-12;

/// Sorted union of `i`'s neighbours in both graphs.
pub fn candidate_support(a: &SparseGraph, b: &SparseGraph, i: usize) -> Vec<usize> {
    let mut s: Vec<usize> = a
        .neighbors(i)
        .iter()
        .chain(b.neighbors(i))
        .map(|&(j, _)| j)
        .collect();
    s.sort_unstable();
    s.dedup();
    s
}

/// Edge weights of `node` over `support`, zero where there is no edge.
pub fn edge_pattern_vector(graph: &SparseGraph, node: usize, support: &[usize]) -> Vec<f64> {
    support.iter().map(|&j| graph.weight(node, j)).collect()
}

/// Cosine similarity, defined as 0 when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

/// Mean cosine similarity between one pattern and each of `others`.
pub fn mean_pattern_similarity(own: &[f64], others: &[Vec<f64>]) -> f64 {
    if others.is_empty() {
        return 0.0;
    }
    others.iter().map(|b| cosine(own, b)).sum::<f64>() / others.len() as f64
}

/// `R_i` for every node of `graph`, using `other` only to widen the support.
pub fn relation_redundancy(graph: &SparseGraph, other: &SparseGraph) -> Vec<f64> {
    (0..graph.n())
        .into_par_iter()
        .map(|i| {
            let nbrs = graph.neighbors(i);
            if nbrs.is_empty() {
                return 0.0;
            }
            let support = candidate_support(graph, other, i);
            let own = edge_pattern_vector(graph, i, &support);
            let others: Vec<Vec<f64>> = nbrs
                .iter()
                .map(|&(j, _)| edge_pattern_vector(graph, j, &support))
                .collect();
            mean_pattern_similarity(&own, &others)
        })
        .collect()
}

/// Shannon entropy of `weights` after normalisation, divided by `log(len)`.
/// Zero for fewer than two entries or an all-zero vector.
pub fn normalized_entropy(weights: &[f64]) -> f64 {
    if weights.len() <= 1 {
        return 0.0;
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let h: f64 = weights
        .iter()
        .map(|&w| {
            let p = w / total;
            -p * (p + LOG_EPS).ln()
        })
        .sum();
    (h / (weights.len() as f64).ln()).max(0.0)
}

pub fn neighborhood_inseparability(graph: &SparseGraph) -> Vec<f64> {
    (0..graph.n())
        .map(|i| {
            let w: Vec<f64> = graph.neighbors(i).iter().map(|&(_, w)| w).collect();
            normalized_entropy(&w)
        })
        .collect()
}

pub fn degradation(redundancy: &[f64], inseparability: &[f64]) -> Vec<f64> {
    redundancy
        .iter()
        .zip(inseparability)
        .map(|(&r, &s)| ((r.clamp(0.0, 1.0) + s.clamp(0.0, 1.0)) / 2.0).clamp(0.0, 1.0))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollapseProfile {
    pub redundancy: Vec<f64>,
    pub inseparability: Vec<f64>,
    pub degradation: Vec<f64>,
}

impl CollapseProfile {
    pub fn measure(graph: &SparseGraph, other: &SparseGraph) -> Self {
        let redundancy = relation_redundancy(graph, other);
        let inseparability = neighborhood_inseparability(graph);
        let degradation = degradation(&redundancy, &inseparability);
        CollapseProfile {
            redundancy,
            inseparability,
            degradation,
        }
    }
}

/// Edge reliability derived from endpoint degradation: `1 - max(deg_i, deg_j)`.
/// Defined for every node pair, so it also covers edges present only in the
/// other modality.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeReliability {
    degradation: Vec<f64>,
}

impl EdgeReliability {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        1.0 - self.degradation[i].max(self.degradation[j])
    }
}

pub fn edge_reliability(degradation: &[f64]) -> EdgeReliability {
    EdgeReliability {
        degradation: degradation.to_vec(),
    }
}

/// Compensation step for one edge, `None` when the gap does not exceed `θ`.
pub fn compensation_step(rel_m: f64, rel_other: f64, theta: f64, kappa_max: f64) -> Option<f64> {
    let gap = rel_other - rel_m;
    (gap > theta).then(|| kappa_max.min(gap))
}

pub fn cross_modal_compensate(
    b_m: &SparseGraph,
    b_other: &SparseGraph,
    rel_m: &EdgeReliability,
    rel_other: &EdgeReliability,
    theta: f64,
    kappa_max: f64,
) -> SparseGraph {
    let edges = SparseGraph::union_support(b_m, b_other)
        .into_iter()
        .map(|(i, j)| {
            let w_m = b_m.weight(i, j);
            let w = match compensation_step(rel_m.get(i, j), rel_other.get(i, j), theta, kappa_max)
            {
                Some(kappa) => (1.0 - kappa) * w_m + kappa * b_other.weight(i, j),
                None => w_m,
            };
            (i, j, w.clamp(0.0, 1.0))
        });
    SparseGraph::from_edges(b_m.n(), edges)
}

/// Result of one bidirectional refinement pass.
#[derive(Debug, Clone)]
pub struct Refined {
    pub img_profile: CollapseProfile,
    pub txt_profile: CollapseProfile,
    pub img: SparseGraph,
    pub txt: SparseGraph,
}

pub fn refine(img: &SparseGraph, txt: &SparseGraph, theta: f64, kappa_max: f64) -> Refined {
    let img_profile = CollapseProfile::measure(img, txt);
    let txt_profile = CollapseProfile::measure(txt, img);
    let rel_img = edge_reliability(&img_profile.degradation);
    let rel_txt = edge_reliability(&txt_profile.degradation);
    let img_hat = cross_modal_compensate(img, txt, &rel_img, &rel_txt, theta, kappa_max);
    let txt_hat = cross_modal_compensate(txt, img, &rel_txt, &rel_img, theta, kappa_max);
    Refined {
        img_profile,
        txt_profile,
        img: img_hat,
        txt: txt_hat,
    }
}
