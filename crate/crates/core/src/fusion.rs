//! Diffusion-wavelet fusion of the refined modality graphs.
//!
//! For a random-walk matrix `P` and a signal `X`, the band-pass response at
//! scale `s` is `W_s = P^s X - P^{2s} X`. It is always evaluated by repeated
//! sparse application of `P`; no matrix power is ever formed.
//!
//! Per scale, the spread of response energy across nodes (a normalised
//! entropy) tells how evenly each modality's graph reacts. The modality with
//! the flatter energy profile gets the larger softmax weight in the consensus
//! response, and the unified graph is read off the consensus by clipped
//! cosine similarity over the joint candidate edge set.

use ndarray::{Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::SparseGraph;

pub const ENERGY_EPS: f64 = 1e-12;

/// Row-stochastic sparse matrix in CSR layout.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl TransitionMatrix {
    pub fn n(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn identity(n: usize) -> Self {
        TransitionMatrix {
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Dense copy, for tests and small oracles.
    pub fn to_dense(&self) -> Array2<f64> {
        let n = self.n();
        let mut out = Array2::zeros((n, n));
        for i in 0..n {
            for (j, v) in self.row(i) {
                out[[i, j]] += v;
            }
        }
        out
    }

    /// `P · X` for a dense `N x q` signal.
    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        assert_eq!(x.nrows(), self.n(), "signal has wrong row count");
        let q = x.ncols();
        let x = x.as_standard_layout();
        let src = x.as_slice().expect("standard layout");
        let mut out = Array2::<f64>::zeros((self.n(), q));
        out.as_slice_mut()
            .expect("fresh array")
            .par_chunks_mut(q.max(1))
            .enumerate()
            .for_each(|(i, dst)| {
                for (j, p) in self.row(i) {
                    let xj = &src[j * q..(j + 1) * q];
                    for (d, &v) in dst.iter_mut().zip(xj) {
                        *d += p * v;
                    }
                }
            });
        out
    }

    /// `P^steps · X`.
    pub fn apply_power(&self, x: ArrayView2<'_, f64>, steps: usize) -> Array2<f64> {
        let mut cur = x.to_owned();
        for _ in 0..steps {
            cur = self.apply(cur.view());
        }
        cur
    }
}

/// `P = D^{-1} B`; isolated nodes get a unit self-loop.
pub fn transition(graph: &SparseGraph) -> TransitionMatrix {
    let n = graph.n();
    let mut indptr = Vec::with_capacity(n + 1);
    let mut indices = Vec::new();
    let mut values = Vec::new();
    indptr.push(0);
    for i in 0..n {
        let deg = graph.degree(i);
        if deg > 0.0 {
            for &(j, w) in graph.neighbors(i) {
                indices.push(j);
                values.push(w / deg);
            }
        } else {
            indices.push(i);
            values.push(1.0);
        }
        indptr.push(indices.len());
    }
    TransitionMatrix {
        indptr,
        indices,
        values,
    }
}

/// Seeded Gaussian probe with columns standardised to zero mean and unit
/// (population) variance.
pub fn probe(n: usize, q: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Array2::from_shape_simple_fn((n, q), || StandardNormal.sample(&mut rng));
    for mut col in out.axis_iter_mut(Axis(1)) {
        let mean = col.mean().unwrap_or(0.0);
        col.mapv_inplace(|v| v - mean);
        let sd = (col.dot(&col) / n as f64).sqrt();
        if sd > 0.0 {
            col.mapv_inplace(|v| v / sd);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveletResponse {
    pub scale: usize,
    pub response: Array2<f64>,
}

/// Band-pass response `P^s X - P^{2s} X`.
pub fn wavelet_response(
    p: &TransitionMatrix,
    x: ArrayView2<'_, f64>,
    scale: usize,
) -> WaveletResponse {
    assert!(scale >= 1, "scale must be at least 1");
    let near = p.apply_power(x, scale);
    let far = p.apply_power(near.view(), scale);
    WaveletResponse {
        scale,
        response: near - far,
    }
}

/// Normalised entropy of the per-node response energy. A response with no
/// energy at all carries no preference and scores 1.
pub fn response_entropy(w: &Array2<f64>) -> f64 {
    let n = w.nrows();
    assert!(n >= 2, "entropy needs at least two nodes");
    let energy: Vec<f64> = w.rows().into_iter().map(|r| r.dot(&r)).collect();
    let total: f64 = energy.iter().sum();
    if total <= ENERGY_EPS {
        return 1.0;
    }
    let h: f64 = energy
        .iter()
        .map(|&e| {
            let pi = e / (total + ENERGY_EPS);
            -pi * (pi + ENERGY_EPS).ln()
        })
        .sum();
    (h / (n as f64).ln()).clamp(0.0, 1.0)
}

/// Collapse scores and softmax fusion weights for one scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleWeights {
    pub entropy_img: f64,
    pub entropy_txt: f64,
    pub collapse_img: f64,
    pub collapse_txt: f64,
    pub gamma_img: f64,
    pub gamma_txt: f64,
}

pub fn fusion_weights(entropy_img: f64, entropy_txt: f64, temperature: f64) -> ScaleWeights {
    assert!(temperature > 0.0, "temperature must be positive");
    let collapse_img = 1.0 - entropy_img;
    let collapse_txt = 1.0 - entropy_txt;
    let li = -collapse_img / temperature;
    let lt = -collapse_txt / temperature;
    let shift = li.max(lt);
    let ei = (li - shift).exp();
    let et = (lt - shift).exp();
    let gamma_img = ei / (ei + et);
    ScaleWeights {
        entropy_img,
        entropy_txt,
        collapse_img,
        collapse_txt,
        gamma_img,
        gamma_txt: 1.0 - gamma_img,
    }
}

pub fn consensus_response(
    w_img: &Array2<f64>,
    w_txt: &Array2<f64>,
    gamma_img: f64,
    gamma_txt: f64,
) -> Result<Array2<f64>> {
    if w_img.dim() != w_txt.dim() {
        return Err(Error::ShapeMismatch(format!(
            "image response {:?} vs text response {:?}",
            w_img.dim(),
            w_txt.dim()
        )));
    }
    Ok(w_img * gamma_img + w_txt * gamma_txt)
}

/// Unified graph over `support`: weights are `Σ_s ω_s max(0, cos(Y_s,i, Y_s,j))`
/// minus the sparsity threshold, with non-positive results dropped.
pub fn reconstruct_unified(
    targets: &[Array2<f64>],
    omega: &[f64],
    support: &[(usize, usize)],
    lambda_sp: f64,
) -> SparseGraph {
    assert_eq!(targets.len(), omega.len(), "one weight per scale");
    let n = targets.first().map_or(0, Array2::nrows);
    let norms: Vec<Vec<f64>> = targets
        .iter()
        .map(|y| y.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect())
        .collect();
    let weights: Vec<(usize, usize, f64)> = support
        .par_iter()
        .map(|&(i, j)| {
            let mut w = 0.0;
            for ((y, nrm), &om) in targets.iter().zip(&norms).zip(omega) {
                if nrm[i] > 0.0 && nrm[j] > 0.0 {
                    let cos = y.row(i).dot(&y.row(j)) / (nrm[i] * nrm[j]);
                    w += om * cos.clamp(0.0, 1.0);
                }
            }
            (i, j, (w - lambda_sp).max(0.0))
        })
        .collect();
    SparseGraph::from_edges(n, weights)
}

/// Per-scale record of the fusion stage.
#[derive(Debug, Clone)]
pub struct ScaleFusion {
    pub scale: usize,
    pub weights: ScaleWeights,
    pub img: WaveletResponse,
    pub txt: WaveletResponse,
    pub target: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct Fusion {
    pub scales: Vec<ScaleFusion>,
    pub unified: SparseGraph,
}

/// Runs the whole fusion stage on the refined graphs.
pub fn fuse(
    img: &SparseGraph,
    txt: &SparseGraph,
    scales: &[usize],
    omega: &[f64],
    probe_signal: &Array2<f64>,
    temperature: f64,
    lambda_sp: f64,
) -> Result<Fusion> {
    let p_img = transition(img);
    let p_txt = transition(txt);
    let per_scale: Vec<Result<ScaleFusion>> = scales
        .par_iter()
        .map(|&s| {
            let w_img = wavelet_response(&p_img, probe_signal.view(), s);
            let w_txt = wavelet_response(&p_txt, probe_signal.view(), s);
            let weights = fusion_weights(
                response_entropy(&w_img.response),
                response_entropy(&w_txt.response),
                temperature,
            );
            let target = consensus_response(
                &w_img.response,
                &w_txt.response,
                weights.gamma_img,
                weights.gamma_txt,
            )?;
            Ok(ScaleFusion {
                scale: s,
                weights,
                img: w_img,
                txt: w_txt,
                target,
            })
        })
        .collect();
    let scales = per_scale.into_iter().collect::<Result<Vec<_>>>()?;
    let support = SparseGraph::union_support(img, txt);
    let targets: Vec<Array2<f64>> = scales.iter().map(|s| s.target.clone()).collect();
    let unified = reconstruct_unified(&targets, omega, &support, lambda_sp);
    Ok(Fusion { scales, unified })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn transition_examples() {
        let pair = transition(&SparseGraph::from_edges(2, [(0, 1, 0.8)]));
        assert_eq!(pair.to_dense(), array![[0.0, 1.0], [1.0, 0.0]]);

        let lonely = transition(&SparseGraph::from_edges(3, [(0, 1, 1.0)]));
        assert_eq!(lonely.row(2).collect::<Vec<_>>(), vec![(2, 1.0)]);

        let tri = transition(&SparseGraph::from_edges(
            3,
            [(0, 1, 0.3), (1, 2, 0.3), (0, 2, 0.3)],
        ));
        for i in 0..3 {
            for (j, v) in tri.row(i) {
                assert_ne!(i, j);
                assert!((v - 0.5).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn probe_is_seeded_and_standardised() {
        let a = probe(50, 16, 9);
        assert_eq!(a, probe(50, 16, 9));
        for col in a.axis_iter(Axis(1)) {
            let mean = col.mean().unwrap();
            let var = col.mapv(|v| (v - mean).powi(2)).mean().unwrap();
            assert!(mean.abs() < 1e-9);
            assert!((var - 1.0).abs() < 1e-9);
        }
        let two = probe(2, 1, 3);
        assert!((two[[0, 0]].abs() - 1.0).abs() < 1e-12);
        assert!((two[[0, 0]] + two[[1, 0]]).abs() < 1e-12);
    }

    #[test]
    fn wavelet_on_a_swap() {
        let p = transition(&SparseGraph::from_edges(2, [(0, 1, 1.0)]));
        let w = wavelet_response(&p, array![[1.0], [0.0]].view(), 1);
        assert_eq!(w.response, array![[-1.0], [1.0]]);
        let id = TransitionMatrix::identity(4);
        let q = probe(4, 3, 1);
        for s in [1, 2, 4] {
            assert!(wavelet_response(&id, q.view(), s)
                .response
                .iter()
                .all(|&v| v == 0.0));
        }
    }

    #[test]
    fn entropy_examples() {
        assert!((response_entropy(&Array2::ones((8, 2))) - 1.0).abs() < 1e-9);
        let mut one = Array2::zeros((16, 2));
        one[[3, 0]] = 2.0;
        assert!(response_entropy(&one) < 1e-9);
        let mut two = Array2::zeros((4, 1));
        two[[0, 0]] = 1.0;
        two[[2, 0]] = -1.0;
        assert!((response_entropy(&two) - 0.5).abs() < 1e-9);
        assert_eq!(response_entropy(&Array2::zeros((5, 3))), 1.0);
    }

    #[test]
    fn fusion_weight_examples() {
        let even = fusion_weights(0.4, 0.4, 0.7);
        assert_eq!((even.gamma_img, even.gamma_txt), (0.5, 0.5));
        let w = fusion_weights(1.0, 0.0, 1.0);
        assert!((w.gamma_img - 1.0 / (1.0 + (-1f64).exp())).abs() < 1e-12);
        assert!((w.gamma_img - 0.7311).abs() < 1e-4);
        let hard = fusion_weights(0.9, 0.2, 1e-6);
        assert_eq!(hard.gamma_img, 1.0);
    }

    #[test]
    fn consensus_examples() {
        let a = array![[4.0, 1.0]];
        let b = array![[0.0, 1.0]];
        assert_eq!(consensus_response(&a, &b, 1.0, 0.0).unwrap(), a);
        assert_eq!(consensus_response(&a, &a, 0.3, 0.7).unwrap(), a);
        assert_eq!(consensus_response(&a, &b, 0.25, 0.75).unwrap()[[0, 0]], 1.0);
        assert!(consensus_response(&a, &array![[1.0]], 0.5, 0.5).is_err());
    }

    #[test]
    fn reconstruction_examples() {
        let y = array![[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let targets = vec![y.clone(), y];
        let g = reconstruct_unified(&targets, &[0.5, 0.5], &[(0, 1), (1, 2)], 0.05);
        assert!((g.weight(0, 1) - 0.95).abs() < 1e-12);
        assert_eq!(g.weight(1, 2), 0.0);
        assert_eq!(g.n_edges(), 1);
        let none = reconstruct_unified(&targets, &[0.5, 0.5], &[(0, 1), (1, 2)], 1.0);
        assert_eq!(none.n_edges(), 0);
    }
}
