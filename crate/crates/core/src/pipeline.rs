//! End-to-end selection: features in, coreset out.
//!
//! [`prepare`] builds everything that does not depend on the coreset size;
//! [`Prepared::select`] optimises proxies for one `K` and assigns them.
//!
//! Seeds derived from `RunConfig::seed`: the diffusion probe uses `seed`,
//! projection directions `seed + 1`, proxy initialisation `seed + 2`.

use ndarray::Array2;

use crate::assignment::{cost_matrix, hungarian, Coreset, CostMatrix, CostWeights};
use crate::config::{GraphInput, RunConfig};
use crate::error::Result;
use crate::feature_store::{normalize_rows, pair_check, FeatureMatrix};
use crate::fusion::{fuse, probe, transition, Fusion, TransitionMatrix};
use crate::lsrc::{relation_graph, LsrcObjective, RelationGraph};
use crate::matching::{
    build_z, node_response, random_directions, FusedRepresentation, ProxyFrame, ScaleTerm,
    WaveletObjective,
};
use crate::optimizer::{
    self, diameter, init_proxies, median_nearest_proxy_distance, Objective, OptimizerState,
    Schedule,
};
use crate::refinement::{refine, Refined};
use crate::topology::{fuzzy_graph, ModalityTopology};

/// Automatic `τ_c` as a fraction of `σ_r²`. At `σ_r²` direct coverage is
/// nearly flat over a cluster and proxies drift onto the densest mode.
pub const COVERAGE_TEMPERATURE_RATIO: f64 = 0.15;

/// Which modalities feed the graphs and the fused representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Modalities {
    #[default]
    Both,
    /// The text graph stands in for both modality graphs and the image
    /// block of `Z` is zero.
    TextOnly,
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub ids: Vec<String>,
    pub config: RunConfig,
    pub img_topology: ModalityTopology,
    pub txt_topology: ModalityTopology,
    pub refined: Refined,
    pub fusion: Fusion,
    pub z: FusedRepresentation,
    pub p_star: TransitionMatrix,
    /// `Φ_s(Z)` for each configured scale.
    pub responses: Vec<Array2<f64>>,
    pub relation: RelationGraph,
    pub tau_eta: f64,
    pub tau_c: f64,
    pub taus: Vec<f64>,
    pub diameter: f64,
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub state: OptimizerState,
    pub cost: CostMatrix,
    pub assignment: Vec<usize>,
    pub coreset: Coreset,
}

fn graph_features(m: &FeatureMatrix, norm: &Array2<f64>, input: GraphInput) -> Array2<f64> {
    match input {
        GraphInput::Raw => m.data().clone(),
        GraphInput::Normalized => norm.clone(),
    }
}

pub fn prepare(img: &FeatureMatrix, txt: &FeatureMatrix, cfg: &RunConfig) -> Result<Prepared> {
    prepare_with(img, txt, cfg, Modalities::Both)
}

pub fn prepare_with(
    img: &FeatureMatrix,
    txt: &FeatureMatrix,
    cfg: &RunConfig,
    mode: Modalities,
) -> Result<Prepared> {
    cfg.validate()?;
    let n = pair_check(img, txt)?;
    let mut img_norm = normalize_rows(img.data().clone());
    let txt_norm = normalize_rows(txt.data().clone());

    let txt_topology = fuzzy_graph(&graph_features(txt, &txt_norm, cfg.txt_graph_input), cfg.k)?;
    let img_topology = match mode {
        Modalities::Both => {
            fuzzy_graph(&graph_features(img, &img_norm, cfg.img_graph_input), cfg.k)?
        }
        Modalities::TextOnly => {
            img_norm.fill(0.0);
            txt_topology.clone()
        }
    };
    let refined = refine(
        &img_topology.graph,
        &txt_topology.graph,
        cfg.theta,
        cfg.kappa_max,
    );
    let fusion = fuse(
        &refined.img,
        &refined.txt,
        &cfg.scales,
        &cfg.fusion_weights(),
        &probe(n, cfg.probe_width, cfg.seed),
        cfg.temperature,
        cfg.lambda_sp,
    )?;
    let z = build_z(
        &img_norm,
        &txt_norm,
        &fusion.unified,
        &cfg.scales,
        cfg.probe_width,
        cfg.seed,
    );
    let p_star = transition(&fusion.unified);
    let responses: Vec<Array2<f64>> = cfg
        .scales
        .iter()
        .map(|&s| node_response(z.z.view(), &p_star, s))
        .collect();
    let relation = relation_graph(
        &z.z,
        &refined.img,
        &refined.txt,
        cfg.sigma_r,
        cfg.eta,
        cfg.support_cap,
    );
    let s2 = relation.sigma_r * relation.sigma_r;
    let taus = responses
        .iter()
        .map(|r| {
            cfg.tau.unwrap_or_else(|| {
                let e = r.iter().map(|v| v * v).sum::<f64>() / r.nrows() as f64;
                if e > 0.0 {
                    e
                } else {
                    1.0
                }
            })
        })
        .collect();
    Ok(Prepared {
        ids: img.ids().to_vec(),
        config: cfg.clone(),
        img_topology,
        txt_topology,
        refined,
        fusion,
        diameter: diameter(&z.z),
        z,
        p_star,
        responses,
        relation,
        tau_eta: cfg.tau_eta.unwrap_or(s2),
        tau_c: cfg.tau_c.unwrap_or(COVERAGE_TEMPERATURE_RATIO * s2),
        taus,
    })
}

impl Prepared {
    pub fn n(&self) -> usize {
        self.ids.len()
    }

    /// Objective for `k` proxies with the given initial positions.
    pub fn objective(&self, k: usize, y0: &Array2<f64>) -> Result<Objective> {
        let cfg = &self.config;
        let dirs = random_directions(cfg.n_projections, self.z.dim(), cfg.seed.wrapping_add(1));
        let terms = cfg
            .scales
            .iter()
            .zip(&self.responses)
            .zip(cfg.scale_weights())
            .zip(&self.taus)
            .map(|(((&s, r), beta), &tau)| {
                ScaleTerm::new(s, beta, tau, r.clone(), k, dirs.clone(), cfg.swd_cost)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Objective {
            wavelet: WaveletObjective {
                terms,
                k_proxy: cfg.k_proxy.min(self.n()),
                tau_eta: self.tau_eta,
                lambda_edge: cfg.lambda_edge,
                lambda_cov: cfg.lambda_cov,
            },
            lsrc: LsrcObjective {
                relation: self.relation.clone(),
                tau_c: self.tau_c,
                beta: cfg.beta,
                mu: cfg.mu,
            },
            lambda_lsrc: cfg.lambda_lsrc,
            lambda_reg: cfg.lambda_reg,
            margin: cfg
                .margin
                .unwrap_or_else(|| 0.5 * median_nearest_proxy_distance(y0)),
            w_div: cfg.w_div,
            diameter: self.diameter,
        })
    }

    pub fn schedule(&self) -> Schedule {
        Schedule {
            steps: self.config.steps,
            lr: self.config.lr,
            clip_norm: self.config.clip_norm,
            span: self.config.schedule_span,
        }
    }

    pub fn select(&self, k: usize) -> Result<Selection> {
        let cfg = &self.config;
        let (init, y0) = init_proxies(&self.z.z, k, cfg.seed.wrapping_add(2))?;
        let objective = self.objective(k, &y0)?;
        let state = optimizer::run(&self.z.z, &objective, init, y0, self.schedule())?;
        let y = &state.proxies.y;
        let frame = ProxyFrame::new(
            &self.z.z,
            y,
            objective.wavelet.k_proxy,
            objective.wavelet.tau_eta,
        );
        let cost = cost_matrix(
            y,
            &self.z.z,
            &objective.wavelet,
            &frame,
            &self.fusion.unified,
            &state.h_bar,
            CostWeights {
                dist: cfg.alpha_d,
                wavelet: cfg.alpha_w,
                topo: cfg.alpha_t,
                confidence: cfg.alpha_q,
            },
        );
        let assignment = hungarian(&cost.cost)?;
        let costs = assignment
            .iter()
            .enumerate()
            .map(|(k, &i)| cost.cost[[k, i]])
            .collect();
        let coreset = Coreset::from_assignment(&assignment, costs, &self.ids);
        Ok(Selection {
            state,
            cost,
            assignment,
            coreset,
        })
    }
}

/// `prepare` followed by `select`.
pub fn select(
    img: &FeatureMatrix,
    txt: &FeatureMatrix,
    k: usize,
    cfg: &RunConfig,
) -> Result<Selection> {
    prepare(img, txt, cfg)?.select(k)
}
