//! Proxy initialisation, scale schedule, auxiliary regularisation and the
//! gradient-descent loop.

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lsrc::LsrcObjective;
use crate::matching::{pairwise_sqdist, ProxyFrame, ProxyNeighborhood, WaveletObjective};

/// Farthest-point sampling from a given start row. Ties go to the lower index.
pub fn farthest_point_from(z: &Array2<f64>, k: usize, start: usize) -> Vec<usize> {
    let n = z.nrows();
    let mut chosen = vec![start];
    let sq = |i: usize, j: usize| -> f64 {
        z.row(i)
            .iter()
            .zip(z.row(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    };
    let mut nearest: Vec<f64> = (0..n).map(|i| sq(i, start)).collect();
    let mut taken = vec![false; n];
    taken[start] = true;
    while chosen.len() < k {
        let mut best = usize::MAX;
        for i in 0..n {
            if !taken[i] && (best == usize::MAX || nearest[i] > nearest[best]) {
                best = i;
            }
        }
        taken[best] = true;
        chosen.push(best);
        for i in 0..n {
            nearest[i] = nearest[i].min(sq(i, best));
        }
    }
    chosen
}

/// Row drawn by the seeded generator to start farthest-point sampling.
pub fn seeded_start(n: usize, seed: u64) -> usize {
    ChaCha8Rng::seed_from_u64(seed).random_range(0..n)
}

/// Indices picked by seeded farthest-point sampling and the proxies placed on them.
pub fn init_proxies(z: &Array2<f64>, k: usize, seed: u64) -> Result<(Vec<usize>, Array2<f64>)> {
    let n = z.nrows();
    if k == 0 || k > n {
        return Err(Error::KOutOfRange { k, n });
    }
    let idx = farthest_point_from(z, k, seeded_start(n, seed));
    let y = z.select(Axis(0), &idx);
    Ok((idx, y))
}

/// First step at which the `rank`-th largest of `n` scales is active.
pub fn activation_step(rank: usize, n_scales: usize, total_steps: usize, span: f64) -> usize {
    if n_scales <= 1 || rank == 0 {
        return 0;
    }
    let t = span * rank as f64 / (n_scales - 1) as f64 * total_steps as f64;
    (t - 1e-9).ceil().max(0.0) as usize
}

/// Active scales at `step`, ascending. The largest scale is always active;
/// smaller ones unlock at evenly spaced fractions of `span`.
pub fn schedule(step: usize, total_steps: usize, scales: &[usize], span: f64) -> Vec<usize> {
    let n = scales.len();
    (0..n)
        .filter(|&idx| step >= activation_step(n - 1 - idx, n, total_steps, span))
        .map(|idx| scales[idx])
        .collect()
}

/// Anti-collapse hinge plus clamped diversity reward, with gradient.
pub fn reg_loss(y: &Array2<f64>, margin: f64, w_div: f64, diameter: f64) -> (f64, Array2<f64>) {
    let k = y.nrows();
    let mut grad = Array2::<f64>::zeros(y.dim());
    if k < 2 {
        return (0.0, grad);
    }
    let pairs = (k * (k - 1) / 2) as f64;
    let mut hinge = 0.0;
    let mut dist_sum = 0.0;
    let mut unit = Vec::with_capacity(k * (k - 1) / 2);
    for a in 0..k {
        for b in a + 1..k {
            let diff = &y.row(a) - &y.row(b);
            let r = diff.dot(&diff).sqrt();
            let gap = (margin - r).max(0.0);
            hinge += gap * gap;
            dist_sum += r;
            unit.push((a, b, r, gap, diff));
        }
    }
    let mean_dist = dist_sum / pairs;
    let diversity_raw = -w_div * mean_dist;
    let floor = -w_div * diameter;
    let clamped = diversity_raw < floor;
    let diversity = diversity_raw.max(floor);
    for (a, b, r, gap, diff) in unit {
        if r == 0.0 {
            continue;
        }
        let mut c = -2.0 * gap / (r * pairs);
        if !clamped {
            c -= w_div / (r * pairs);
        }
        grad.row_mut(a).scaled_add(c, &diff);
        grad.row_mut(b).scaled_add(-c, &diff);
    }
    (hinge / pairs + diversity, grad)
}

/// Largest pairwise distance between rows.
pub fn diameter(z: &Array2<f64>) -> f64 {
    const BLOCK: usize = 1024;
    let n = z.nrows();
    let mut best: f64 = 0.0;
    for start in (0..n).step_by(BLOCK) {
        let end = (start + BLOCK).min(n);
        let d = pairwise_sqdist(
            z.slice(ndarray::s![start..end, ..]),
            z.slice(ndarray::s![start.., ..]),
        );
        best = d.iter().copied().fold(best, f64::max);
    }
    best.sqrt()
}

/// Median distance from each proxy to its nearest other proxy.
pub fn median_nearest_proxy_distance(y: &Array2<f64>) -> f64 {
    let k = y.nrows();
    if k < 2 {
        return 0.0;
    }
    let d = pairwise_sqdist(y.view(), y.view());
    let mut nearest: Vec<f64> = (0..k)
        .map(|a| {
            (0..k)
                .filter(|&b| b != a)
                .map(|b| d[[a, b]])
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect();
    nearest.sort_by(f64::total_cmp);
    if k % 2 == 1 {
        nearest[k / 2]
    } else {
        0.5 * (nearest[k / 2 - 1] + nearest[k / 2])
    }
}

/// Full objective `L_wavelet + λ_LSRC L_LSRC + λ_reg L_reg`.
#[derive(Debug, Clone)]
pub struct Objective {
    pub wavelet: WaveletObjective,
    pub lsrc: LsrcObjective,
    pub lambda_lsrc: f64,
    pub lambda_reg: f64,
    pub margin: f64,
    pub w_div: f64,
    pub diameter: f64,
}

/// One row of the loss history. The wavelet columns are `β_s`-weighted sums
/// over the active scales; `total` includes the `λ` factors.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub active_scales: Vec<usize>,
    pub dist: f64,
    pub edge: f64,
    pub cov: f64,
    pub lsrc: f64,
    pub reg: f64,
    pub total: f64,
}

impl StepRecord {
    pub const CSV_HEADER: &'static str =
        "step,active_scales,L_dist,L_edge,L_cov,L_lsrc,L_reg,total";

    pub fn csv_row(&self) -> String {
        let scales: Vec<String> = self.active_scales.iter().map(|s| s.to_string()).collect();
        format!(
            "{},{},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}",
            self.step,
            scales.join(" "),
            self.dist,
            self.edge,
            self.cov,
            self.lsrc,
            self.reg,
            self.total
        )
    }
}

pub struct Evaluation {
    pub record: StepRecord,
    pub grad: Array2<f64>,
    pub frame: ProxyFrame,
    pub h_bar: ndarray::Array1<f64>,
}

impl Objective {
    pub fn evaluate(&self, z: &Array2<f64>, y: &Array2<f64>, active: &[usize]) -> Evaluation {
        let frame = ProxyFrame::new(z, y, self.wavelet.k_proxy, self.wavelet.tau_eta);
        let w = self.wavelet.evaluate_with(z, y, &frame, active);
        let l = self.lsrc.evaluate_with(z, y, frame.sqdist.view());
        let (reg, g_reg) = reg_loss(y, self.margin, self.w_div, self.diameter);

        let weight = |scale: usize| {
            self.wavelet
                .terms
                .iter()
                .find(|t| t.scale == scale)
                .map_or(0.0, |t| t.beta)
        };
        let dist = w.per_scale.iter().map(|s| weight(s.scale) * s.dist).sum();
        let edge = w.per_scale.iter().map(|s| weight(s.scale) * s.edge).sum();
        let cov = w.per_scale.iter().map(|s| weight(s.scale) * s.cov).sum();
        let total = w.total + self.lambda_lsrc * l.value + self.lambda_reg * reg;

        let mut grad = w.grad;
        grad.scaled_add(self.lambda_lsrc, &l.grad);
        grad.scaled_add(self.lambda_reg, &g_reg);
        Evaluation {
            record: StepRecord {
                step: 0,
                active_scales: active.to_vec(),
                dist,
                edge,
                cov,
                lsrc: l.value,
                reg,
                total,
            },
            grad,
            frame,
            h_bar: l.h_bar,
        }
    }
}

/// Proxies with the interpolation neighbourhoods of their last evaluation.
#[derive(Debug, Clone)]
pub struct ProxySet {
    pub y: Array2<f64>,
    pub neighborhoods: Vec<ProxyNeighborhood>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub steps: usize,
    pub lr: f64,
    pub clip_norm: f64,
    pub span: f64,
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub step: usize,
    pub init_indices: Vec<usize>,
    pub proxies: ProxySet,
    pub active_scales: Vec<usize>,
    /// One record per step taken, then a final record at `step = steps`
    /// evaluated at the returned proxies with every scale active.
    pub history: Vec<StepRecord>,
    /// Indirect coverage at the returned proxies.
    pub h_bar: ndarray::Array1<f64>,
}

fn all_finite(a: &Array2<f64>) -> bool {
    a.iter().all(|v| v.is_finite())
}

pub fn run(
    z: &Array2<f64>,
    objective: &Objective,
    init_indices: Vec<usize>,
    y0: Array2<f64>,
    sched: Schedule,
) -> Result<OptimizerState> {
    let scales = objective.wavelet.scales();
    let mut y = y0;
    let mut history = Vec::with_capacity(sched.steps + 1);
    for step in 0..sched.steps {
        let active = schedule(step, sched.steps, &scales, sched.span);
        let mut ev = objective.evaluate(z, &y, &active);
        if !ev.record.total.is_finite() || !all_finite(&ev.grad) {
            return Err(Error::NonFiniteLoss { step });
        }
        let norm = ev.grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm > sched.clip_norm {
            ev.grad *= sched.clip_norm / norm;
        }
        y.scaled_add(-sched.lr, &ev.grad);
        ev.record.step = step;
        history.push(ev.record);
    }
    let mut last = objective.evaluate(z, &y, &scales);
    if !last.record.total.is_finite() {
        return Err(Error::NonFiniteLoss { step: sched.steps });
    }
    last.record.step = sched.steps;
    history.push(last.record);
    Ok(OptimizerState {
        step: sched.steps,
        init_indices,
        proxies: ProxySet {
            y,
            neighborhoods: last.frame.neighborhoods,
        },
        active_scales: scales,
        history,
        h_bar: last.h_bar,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn farthest_point_hand_trace() {
        let z = array![[0.0], [1.0], [10.0]];
        assert_eq!(farthest_point_from(&z, 2, 0), vec![0, 2]);
        assert_eq!(farthest_point_from(&z, 3, 0), vec![0, 2, 1]);
    }

    #[test]
    fn init_edge_cases() {
        let z = array![[0.0, 1.0], [1.0, 0.0], [0.5, 0.5]];
        let (idx, y) = init_proxies(&z, 3, 4).unwrap();
        let mut sorted = idx.clone();
        sorted.sort();
        assert_eq!(sorted, vec![0, 1, 2]);
        assert_eq!(y.row(0), z.row(idx[0]));
        let (one, _) = init_proxies(&z, 1, 4).unwrap();
        assert_eq!(one, vec![seeded_start(3, 4)]);
        assert!(matches!(
            init_proxies(&z, 0, 1),
            Err(Error::KOutOfRange { k: 0, n: 3 })
        ));
        assert!(matches!(
            init_proxies(&z, 4, 1),
            Err(Error::KOutOfRange { .. })
        ));
    }

    #[test]
    fn schedule_rule() {
        let s = [1, 2, 4];
        assert_eq!(schedule(0, 100, &s, 0.6), vec![4]);
        assert_eq!(schedule(29, 100, &s, 0.6), vec![4]);
        assert_eq!(schedule(30, 100, &s, 0.6), vec![2, 4]);
        assert_eq!(schedule(59, 100, &s, 0.6), vec![2, 4]);
        assert_eq!(schedule(60, 100, &s, 0.6), vec![1, 2, 4]);
        assert_eq!(schedule(0, 10, &[3], 0.6), vec![3]);
    }

    #[test]
    fn reg_examples() {
        let spread = array![[0.0, 0.0], [2.0, 0.0]];
        assert_eq!(reg_loss(&spread, 1.0, 0.0, 5.0).0, 0.0);
        let same = array![[0.3, 0.3], [0.3, 0.3]];
        let (v, g) = reg_loss(&same, 1.0, 0.0, 5.0);
        assert_eq!(v, 1.0);
        assert!(g.iter().all(|&x| x == 0.0));
        assert_eq!(reg_loss(&array![[1.0, 2.0]], 1.0, 1.0, 1.0).0, 0.0);
        // Mean distance 2 exceeds the diameter 1, so the reward is clamped.
        let (v, g) = reg_loss(&spread, 0.0, 0.5, 1.0);
        assert_eq!(v, -0.5);
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn diameter_and_median_nearest() {
        let z = array![[0.0, 0.0], [3.0, 4.0], [1.0, 0.0]];
        assert!((diameter(&z) - 5.0).abs() < 1e-12);
        assert_eq!(median_nearest_proxy_distance(&z), 1.0);
    }
}
