//! Distributional quality of a selection relative to the full set.

use std::collections::HashSet;

use ndarray::{Array2, Axis};

use crate::error::Result;
use crate::matching::swd;

#[derive(Debug, Clone, PartialEq)]
pub struct FidelityReport {
    pub swd_to_full: f64,
    pub modes_covered: usize,
    pub redundancy_rate: f64,
}

impl FidelityReport {
    pub const CSV_HEADER: &'static str = "method,k,swd_to_full,modes_covered,redundancy_rate";

    pub fn csv_row(&self, method: &str, k: usize) -> String {
        format!(
            "{method},{k},{:.9e},{},{:.9e}",
            self.swd_to_full, self.modes_covered, self.redundancy_rate
        )
    }
}

pub fn swd_to_full(z: &Array2<f64>, indices: &[usize], n_proj: usize, seed: u64) -> Result<f64> {
    let sub = z.select(Axis(0), indices);
    swd(z.view(), sub.view(), n_proj, seed)
}

pub fn modes_covered(labels: &[usize], indices: &[usize]) -> usize {
    indices
        .iter()
        .map(|&i| labels[i])
        .collect::<HashSet<_>>()
        .len()
}

/// Fraction of selected pairs closer than `tau_red`; 0 with fewer than two.
pub fn redundancy_rate(z: &Array2<f64>, indices: &[usize], tau_red: f64) -> f64 {
    let k = indices.len();
    if k < 2 {
        return 0.0;
    }
    let mut close = 0usize;
    for a in 0..k {
        for b in a + 1..k {
            let d: f64 = z
                .row(indices[a])
                .iter()
                .zip(z.row(indices[b]))
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            if d < tau_red {
                close += 1;
            }
        }
    }
    close as f64 / (k * (k - 1) / 2) as f64
}

pub fn fidelity(
    z: &Array2<f64>,
    indices: &[usize],
    labels: Option<&[usize]>,
    tau_red: f64,
    n_proj: usize,
    seed: u64,
) -> Result<FidelityReport> {
    Ok(FidelityReport {
        swd_to_full: swd_to_full(z, indices, n_proj, seed)?,
        modes_covered: labels.map_or(0, |l| modes_covered(l, indices)),
        redundancy_rate: redundancy_rate(z, indices, tau_red),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn full_selection() {
        let z = array![[0.0, 1.0], [1.0, 0.0], [0.6, 0.8]];
        let all = [0, 1, 2];
        let r = fidelity(&z, &all, Some(&[0, 1, 1]), 0.1, 16, 0).unwrap();
        assert_eq!(r.swd_to_full, 0.0);
        assert_eq!(r.modes_covered, 2);
    }

    #[test]
    fn redundancy_extremes() {
        let z = array![[0.0], [0.01], [0.02], [5.0]];
        assert_eq!(redundancy_rate(&z, &[0, 1, 2], 1.0), 1.0);
        assert_eq!(redundancy_rate(&z, &[3], 1.0), 0.0);
        assert_eq!(redundancy_rate(&z, &[0, 3], 1.0), 0.0);
    }
}
