//! Wavelet-domain matching between the data and a set of continuous proxies.
//!
//! Node responses are `Φ_s(Z) = P*^s Z - P*^{2s} Z`. A proxy has no graph
//! position of its own, so its response is interpolated from its `k_proxy`
//! nearest nodes with softmax weights `η_ki ∝ exp(-‖y_k - z_i‖² / τ_η)`.
//! Three losses compare the two response sets at each active scale:
//!
//! * `L_dist`: sliced Wasserstein distance between `Φ_s(Z)` and `Φ_s(Y)`;
//! * `L_edge`: energy-weighted distance from each node to its closest proxy
//!   response;
//! * `L_cov`: negative log of the mean Gaussian coverage of each node.
//!
//! Gradients are assembled by hand. Within one evaluation the neighbour sets,
//! sort orders and argmins are held fixed.

pub mod swd;

use std::ops::Range;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::config::SwdCost;
use crate::feature_store::normalize_rows;
use crate::fusion::{probe, transition, wavelet_response, TransitionMatrix};
use crate::graph::SparseGraph;

pub use swd::{random_directions, swd, swd_with_directions, SwdTarget};

pub const LOSS_EPS: f64 = 1e-12;

/// Column ranges of the three blocks of `Z`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub img: Range<usize>,
    pub txt: Range<usize>,
    pub diffusion: Range<usize>,
}

#[derive(Debug, Clone)]
pub struct FusedRepresentation {
    pub z: Array2<f64>,
    pub layout: Layout,
}

impl FusedRepresentation {
    pub fn dim(&self) -> usize {
        self.z.ncols()
    }
}

/// Concatenates `[img | txt | W_1 | W_2 | ...]` and normalises each row, where
/// the `W_s` are wavelet responses of the seeded probe on the unified graph.
pub fn build_z(
    img_norm: &Array2<f64>,
    txt_norm: &Array2<f64>,
    unified: &SparseGraph,
    scales: &[usize],
    probe_width: usize,
    probe_seed: u64,
) -> FusedRepresentation {
    let n = img_norm.nrows();
    assert_eq!(txt_norm.nrows(), n, "modalities not aligned");
    assert_eq!(unified.n(), n, "graph not aligned with features");
    let p = transition(unified);
    let q = probe(n, probe_width, probe_seed);
    let (di, dt) = (img_norm.ncols(), txt_norm.ncols());
    let dd = probe_width * scales.len();
    let mut z = Array2::<f64>::zeros((n, di + dt + dd));
    z.slice_mut(s![.., ..di]).assign(img_norm);
    z.slice_mut(s![.., di..di + dt]).assign(txt_norm);
    for (idx, &scale) in scales.iter().enumerate() {
        let w = wavelet_response(&p, q.view(), scale).response;
        let off = di + dt + idx * probe_width;
        z.slice_mut(s![.., off..off + probe_width]).assign(&w);
    }
    FusedRepresentation {
        z: normalize_rows(z),
        layout: Layout {
            img: 0..di,
            txt: di..di + dt,
            diffusion: di + dt..di + dt + dd,
        },
    }
}

/// `Φ_s(Z)`.
pub fn node_response(z: ArrayView2<'_, f64>, p: &TransitionMatrix, scale: usize) -> Array2<f64> {
    wavelet_response(p, z, scale).response
}

/// Interpolation neighbourhood of one proxy.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxyNeighborhood {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Picks the `k_proxy` smallest entries of one proxy's squared distances to
/// all nodes (ties by index) and turns them into softmax weights.
pub fn neighborhood_from_sqdist(sqdist: &[f64], k_proxy: usize, tau_eta: f64) -> ProxyNeighborhood {
    let k = k_proxy.min(sqdist.len());
    let mut idx: Vec<usize> = (0..sqdist.len()).collect();
    let by = |a: &usize, b: &usize| sqdist[*a].total_cmp(&sqdist[*b]).then(a.cmp(b));
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, by);
        idx.truncate(k);
    }
    idx.sort_unstable_by(by);
    let d0 = sqdist[idx[0]];
    let raw: Vec<f64> = idx
        .iter()
        .map(|&i| (-(sqdist[i] - d0) / tau_eta).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    ProxyNeighborhood {
        indices: idx,
        weights: raw.into_iter().map(|w| w / total).collect(),
    }
}

/// Neighbourhood and interpolation weights of a single point `y`.
pub fn proxy_weights(
    y: &[f64],
    z: &Array2<f64>,
    k_proxy: usize,
    tau_eta: f64,
) -> ProxyNeighborhood {
    let sq: Vec<f64> = z
        .rows()
        .into_iter()
        .map(|r| r.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum())
        .collect();
    neighborhood_from_sqdist(&sq, k_proxy, tau_eta)
}

/// `N x K` matrix of squared distances between the rows of `a` and `b`.
pub fn pairwise_sqdist(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    let na: Array1<f64> = a.rows().into_iter().map(|r| r.dot(&r)).collect();
    let nb: Array1<f64> = b.rows().into_iter().map(|r| r.dot(&r)).collect();
    let mut d = a.dot(&b.t());
    if !d.is_standard_layout() {
        d = d.as_standard_layout().into_owned();
    }
    let cols = d.ncols().max(1);
    d.as_slice_mut()
        .expect("standard layout")
        .par_chunks_mut(cols)
        .zip(na.as_slice().unwrap().par_iter())
        .for_each(|(row, &ai)| {
            for (v, &bj) in row.iter_mut().zip(nb.iter()) {
                *v = (ai + bj - 2.0 * *v).max(0.0);
            }
        });
    d
}

/// `Σ_i e_i δ_i / (Σ_i e_i + ε)` with `δ_i` the squared distance of node `i`
/// to its closest proxy response.
pub fn edge_loss(phi_z: ArrayView2<'_, f64>, phi_y: ArrayView2<'_, f64>) -> f64 {
    let d = pairwise_sqdist(phi_z, phi_y);
    let (num, den) =
        phi_z
            .rows()
            .into_iter()
            .zip(d.rows())
            .fold((0.0, 0.0), |(num, den), (f, row)| {
                let e = f.dot(&f);
                let delta = row.iter().copied().fold(f64::INFINITY, f64::min);
                (num + e * delta, den + e)
            });
    num / (den + LOSS_EPS)
}

/// `-(1/N) Σ_i log(cov_i + ε)` with `cov_i = (1/K) Σ_k exp(-d_ik / τ)` given
/// squared distances `d`.
pub fn coverage_loss_from_sqdist(sqdist: ArrayView2<'_, f64>, tau: f64) -> f64 {
    let n = sqdist.nrows() as f64;
    let k = sqdist.ncols() as f64;
    sqdist
        .rows()
        .into_iter()
        .map(|r| {
            let cov = r.iter().map(|&d| (-d / tau).exp()).sum::<f64>() / k;
            -(cov + LOSS_EPS).ln()
        })
        .sum::<f64>()
        / n
}

pub fn coverage_loss(phi_z: ArrayView2<'_, f64>, phi_y: ArrayView2<'_, f64>, tau: f64) -> f64 {
    coverage_loss_from_sqdist(pairwise_sqdist(phi_z, phi_y).view(), tau)
}

/// One scale of the wavelet objective.
#[derive(Debug, Clone)]
pub struct ScaleTerm {
    pub scale: usize,
    pub beta: f64,
    pub tau: f64,
    /// `Φ_s(Z)`.
    pub response: Array2<f64>,
    energy: Vec<f64>,
    swd: SwdTarget,
}

impl ScaleTerm {
    pub fn new(
        scale: usize,
        beta: f64,
        tau: f64,
        response: Array2<f64>,
        n_proxies: usize,
        dirs: Array2<f64>,
        kind: SwdCost,
    ) -> crate::Result<Self> {
        let energy = response.rows().into_iter().map(|r| r.dot(&r)).collect();
        let swd = SwdTarget::new(response.view(), n_proxies, dirs, kind)?;
        Ok(ScaleTerm {
            scale,
            beta,
            tau,
            response,
            energy,
            swd,
        })
    }

    pub fn energy(&self) -> &[f64] {
        &self.energy
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleLoss {
    pub scale: usize,
    pub dist: f64,
    pub edge: f64,
    pub cov: f64,
}

#[derive(Debug, Clone)]
pub struct LossReport {
    pub per_scale: Vec<ScaleLoss>,
    pub total: f64,
    /// `∂L/∂Y`, `K x D_Z`.
    pub grad: Array2<f64>,
}

/// Per-evaluation geometry shared by the wavelet and relational coverage
/// terms: squared spatial distances and the proxies' interpolation sets.
#[derive(Debug, Clone)]
pub struct ProxyFrame {
    /// `N x K` squared distances `‖z_i - y_k‖²`.
    pub sqdist: Array2<f64>,
    pub neighborhoods: Vec<ProxyNeighborhood>,
}

impl ProxyFrame {
    pub fn new(z: &Array2<f64>, y: &Array2<f64>, k_proxy: usize, tau_eta: f64) -> Self {
        let sqdist = pairwise_sqdist(z.view(), y.view());
        let neighborhoods = (0..y.nrows())
            .into_par_iter()
            .map(|k| {
                let col = sqdist.column(k).to_vec();
                neighborhood_from_sqdist(&col, k_proxy, tau_eta)
            })
            .collect();
        ProxyFrame {
            sqdist,
            neighborhoods,
        }
    }
}

/// Discrete choices frozen inside one gradient evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteState {
    pub neighborhoods: Vec<Vec<usize>>,
    pub rankings: Vec<Vec<Vec<usize>>>,
    pub argmins: Vec<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct WaveletObjective {
    pub terms: Vec<ScaleTerm>,
    pub k_proxy: usize,
    pub tau_eta: f64,
    pub lambda_edge: f64,
    pub lambda_cov: f64,
}

impl WaveletObjective {
    pub fn scales(&self) -> Vec<usize> {
        self.terms.iter().map(|t| t.scale).collect()
    }

    /// `Φ_s(y_k) = Σ_i η_ki Φ_s(z_i)` for all proxies.
    pub fn proxy_response(term: &ScaleTerm, frame: &ProxyFrame) -> Array2<f64> {
        let d = term.response.ncols();
        let mut out = Array2::<f64>::zeros((frame.neighborhoods.len(), d));
        for (mut row, nb) in out.rows_mut().into_iter().zip(&frame.neighborhoods) {
            for (&i, &w) in nb.indices.iter().zip(&nb.weights) {
                row.scaled_add(w, &term.response.row(i));
            }
        }
        out
    }

    pub fn evaluate(&self, z: &Array2<f64>, y: &Array2<f64>, active: &[usize]) -> LossReport {
        let frame = ProxyFrame::new(z, y, self.k_proxy, self.tau_eta);
        self.evaluate_with(z, y, &frame, active)
    }

    /// Losses over the `active` scales (given as scale values) and their
    /// gradient with respect to the proxy coordinates.
    pub fn evaluate_with(
        &self,
        z: &Array2<f64>,
        y: &Array2<f64>,
        frame: &ProxyFrame,
        active: &[usize],
    ) -> LossReport {
        let kp = y.nrows();
        // ∂L/∂η_ki, aligned with each proxy's neighbourhood.
        let mut d_eta: Vec<Vec<f64>> = frame
            .neighborhoods
            .iter()
            .map(|nb| vec![0.0; nb.indices.len()])
            .collect();
        let mut per_scale = Vec::new();
        let mut total = 0.0;

        for term in self.terms.iter().filter(|t| active.contains(&t.scale)) {
            let phi_y = Self::proxy_response(term, frame);
            let (dist, mut g) = term.swd.value_and_grad(phi_y.view());
            let (edge, cov, g_edge, g_cov) = self.edge_and_coverage(term, &phi_y);
            g.scaled_add(self.lambda_edge, &g_edge);
            g.scaled_add(self.lambda_cov, &g_cov);
            g *= term.beta;
            for k in 0..kp {
                let gk = g.row(k);
                let nb = &frame.neighborhoods[k];
                for (slot, &i) in nb.indices.iter().enumerate() {
                    d_eta[k][slot] += gk.dot(&term.response.row(i));
                }
            }
            total += term.beta * (dist + self.lambda_edge * edge + self.lambda_cov * cov);
            per_scale.push(ScaleLoss {
                scale: term.scale,
                dist,
                edge,
                cov,
            });
        }

        let mut grad = Array2::<f64>::zeros(y.dim());
        for k in 0..kp {
            let nb = &frame.neighborhoods[k];
            let mean: f64 = nb.weights.iter().zip(&d_eta[k]).map(|(w, a)| w * a).sum();
            let mut gk = grad.row_mut(k);
            for ((&i, &w), &a) in nb.indices.iter().zip(&nb.weights).zip(&d_eta[k]) {
                gk.scaled_add(2.0 / self.tau_eta * w * (a - mean), &z.row(i));
            }
        }
        LossReport {
            per_scale,
            total,
            grad,
        }
    }

    /// Edge and coverage losses at one scale with gradients with respect to
    /// the proxy responses.
    fn edge_and_coverage(
        &self,
        term: &ScaleTerm,
        phi_y: &Array2<f64>,
    ) -> (f64, f64, Array2<f64>, Array2<f64>) {
        let f = &term.response;
        let n = f.nrows();
        let kp = phi_y.nrows();
        let d = pairwise_sqdist(f.view(), phi_y.view());
        let e = &term.energy;
        let e_total: f64 = e.iter().sum::<f64>() + LOSS_EPS;

        let mut edge_num = 0.0;
        let mut g_edge = Array2::<f64>::zeros(phi_y.dim());
        // Coverage weights c_ik / (cov_i + ε), scaled into the gradient below.
        let mut wcov = Array2::<f64>::zeros((n, kp));
        let mut cov_sum = 0.0;
        for i in 0..n {
            let row = d.row(i);
            let mut best = 0;
            for k in 1..kp {
                if row[k] < row[best] {
                    best = k;
                }
            }
            edge_num += e[i] * row[best];
            if e[i] > 0.0 {
                let mut gk = g_edge.row_mut(best);
                gk.scaled_add(2.0 * e[i] / e_total, &phi_y.row(best));
                gk.scaled_add(-2.0 * e[i] / e_total, &f.row(i));
            }
            let mut cov = 0.0;
            let mut wrow = wcov.row_mut(i);
            for k in 0..kp {
                let c = (-row[k] / term.tau).exp();
                wrow[k] = c;
                cov += c;
            }
            cov /= kp as f64;
            cov_sum += -(cov + LOSS_EPS).ln();
            let inv = 1.0 / (cov + LOSS_EPS);
            wrow.mapv_inplace(|c| c * inv);
        }
        let coef = 2.0 / (n as f64 * kp as f64 * term.tau);
        // Σ_i w_ik (Φ_k - F_i) = (Σ_i w_ik) Φ_k - (Wᵀ F)_k
        let mut g_cov = wcov.t().dot(f);
        g_cov.mapv_inplace(|v| -v);
        for (k, colsum) in wcov.sum_axis(Axis(0)).iter().enumerate() {
            g_cov.row_mut(k).scaled_add(*colsum, &phi_y.row(k));
        }
        g_cov *= coef;
        (edge_num / e_total, cov_sum / n as f64, g_edge, g_cov)
    }

    /// The discrete selections an evaluation at `y` would freeze.
    pub fn discrete_state(
        &self,
        z: &Array2<f64>,
        y: &Array2<f64>,
        active: &[usize],
    ) -> DiscreteState {
        let frame = ProxyFrame::new(z, y, self.k_proxy, self.tau_eta);
        let mut rankings = Vec::new();
        let mut argmins = Vec::new();
        for term in self.terms.iter().filter(|t| active.contains(&t.scale)) {
            let phi_y = Self::proxy_response(term, &frame);
            rankings.push(term.swd.ranking(phi_y.view()));
            let d = pairwise_sqdist(term.response.view(), phi_y.view());
            argmins.push(
                d.rows()
                    .into_iter()
                    .map(|r| {
                        let mut best = 0;
                        for k in 1..r.len() {
                            if r[k] < r[best] {
                                best = k;
                            }
                        }
                        best
                    })
                    .collect(),
            );
        }
        DiscreteState {
            neighborhoods: frame
                .neighborhoods
                .into_iter()
                .map(|nb| nb.indices)
                .collect(),
            rankings,
            argmins,
        }
    }
}
