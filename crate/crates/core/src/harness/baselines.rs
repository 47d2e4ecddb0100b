//! Reference selectors: uniform random, herding and k-center greedy.

use std::str::FromStr;

use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::optimizer::{farthest_point_from, seeded_start};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    Random,
    Herding,
    KCenter,
}

impl FromStr for Baseline {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(Baseline::Random),
            "herding" => Ok(Baseline::Herding),
            "kcenter" => Ok(Baseline::KCenter),
            _ => Err(format!(
                "unknown baseline {s:?}; expected random, herding or kcenter"
            )),
        }
    }
}

impl Baseline {
    pub fn name(self) -> &'static str {
        match self {
            Baseline::Random => "random",
            Baseline::Herding => "herding",
            Baseline::KCenter => "kcenter",
        }
    }
}

pub fn random_select(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rand::seq::index::sample(&mut rng, n, k).into_vec()
}

/// Greedily adds the row that brings the running coreset mean closest to the
/// full mean. Ties go to the lower index.
pub fn herding(z: &Array2<f64>, k: usize) -> Vec<usize> {
    let n = z.nrows();
    let target: Array1<f64> = z
        .mean_axis(Axis(0))
        .unwrap_or_else(|| Array1::zeros(z.ncols()));
    let mut sum = Array1::<f64>::zeros(z.ncols());
    let mut taken = vec![false; n];
    let mut out = Vec::with_capacity(k);
    for t in 0..k {
        let mut best = (f64::INFINITY, usize::MAX);
        for i in 0..n {
            if taken[i] {
                continue;
            }
            let d: f64 = sum
                .iter()
                .zip(z.row(i))
                .zip(&target)
                .map(|((s, x), m)| {
                    let v = (s + x) / (t + 1) as f64 - m;
                    v * v
                })
                .sum();
            if d < best.0 {
                best = (d, i);
            }
        }
        taken[best.1] = true;
        sum += &z.row(best.1);
        out.push(best.1);
    }
    out
}

pub fn kcenter(z: &Array2<f64>, k: usize, seed: u64) -> Vec<usize> {
    farthest_point_from(z, k, seeded_start(z.nrows(), seed))
}

pub fn baseline_select(
    method: Baseline,
    z: &Array2<f64>,
    k: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    let n = z.nrows();
    if k == 0 || k > n {
        return Err(Error::KOutOfRange { k, n });
    }
    Ok(match method {
        Baseline::Random => random_select(n, k, seed),
        Baseline::Herding => herding(z, k),
        Baseline::KCenter => kcenter(z, k, seed),
    })
}
