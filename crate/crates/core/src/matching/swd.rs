//! Sliced Wasserstein distance between point sets of possibly different sizes.
//!
//! Both sets are projected on a fixed set of random unit directions. On each
//! direction the sorted projections are compared at `m = min(|A|, |B|)`
//! quantile levels `(j + 0.5) / m`; the larger set is resampled at those
//! levels by linear interpolation of its sorted values, so equal-size sets are
//! compared rank by rank. The distance is the per-quantile transport cost
//! averaged over quantiles and directions.
//!
//! The sort order is treated as locally constant when differentiating.

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::SwdCost;
use crate::error::{Error, Result};

/// `n_proj x dim` matrix of unit directions drawn from a seeded generator.
pub fn random_directions(n_proj: usize, dim: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dirs = Array2::<f64>::zeros((n_proj, dim));
    for mut row in dirs.rows_mut() {
        loop {
            row.iter_mut()
                .for_each(|v| *v = StandardNormal.sample(&mut rng));
            let norm = row.dot(&row).sqrt();
            if norm > 1e-12 {
                row.mapv_inplace(|v| v / norm);
                break;
            }
        }
    }
    dirs
}

/// Where quantile `j` of `m` falls in a sorted sequence of length `n >= m`:
/// `(lower index, weight of the upper neighbour)`.
pub(crate) fn quantile_position(j: usize, m: usize, n: usize) -> (usize, f64) {
    if n == m {
        return (j, 0.0);
    }
    let p = ((j as f64 + 0.5) / m as f64 * n as f64 - 0.5).clamp(0.0, (n - 1) as f64);
    let lo = (p.floor() as usize).min(n - 1);
    let frac = if lo + 1 < n { p - lo as f64 } else { 0.0 };
    (lo, frac)
}

fn quantiles(sorted: &[f64], m: usize) -> Vec<f64> {
    (0..m)
        .map(|j| {
            let (lo, frac) = quantile_position(j, m, sorted.len());
            if frac > 0.0 {
                (1.0 - frac) * sorted[lo] + frac * sorted[lo + 1]
            } else {
                sorted[lo]
            }
        })
        .collect()
}

fn cost(diff: f64, kind: SwdCost) -> f64 {
    match kind {
        SwdCost::Squared => diff * diff,
        SwdCost::Absolute => diff.abs(),
    }
}

fn cost_grad(diff: f64, kind: SwdCost) -> f64 {
    match kind {
        SwdCost::Squared => 2.0 * diff,
        SwdCost::Absolute => diff.signum() * (diff != 0.0) as u8 as f64,
    }
}

fn sorted_by_value(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    order
}

fn check(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<()> {
    if a.nrows() == 0 || b.nrows() == 0 {
        return Err(Error::EmptySet);
    }
    if a.ncols() != b.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "point sets of dimension {} and {}",
            a.ncols(),
            b.ncols()
        )));
    }
    Ok(())
}

/// Distance under an explicit direction set.
pub fn swd_with_directions(
    a: ArrayView2<'_, f64>,
    b: ArrayView2<'_, f64>,
    dirs: &Array2<f64>,
    kind: SwdCost,
) -> Result<f64> {
    check(a, b)?;
    let m = a.nrows().min(b.nrows());
    let pa = a.dot(&dirs.t());
    let pb = b.dot(&dirs.t());
    let mut total = 0.0;
    for l in 0..dirs.nrows() {
        let mut va = pa.column(l).to_vec();
        let mut vb = pb.column(l).to_vec();
        va.sort_by(f64::total_cmp);
        vb.sort_by(f64::total_cmp);
        let qa = quantiles(&va, m);
        let qb = quantiles(&vb, m);
        total += qa
            .iter()
            .zip(&qb)
            .map(|(x, y)| cost(y - x, kind))
            .sum::<f64>()
            / m as f64;
    }
    Ok(total / dirs.nrows() as f64)
}

/// Squared-cost distance over `n_proj` seeded directions.
pub fn swd(
    a: ArrayView2<'_, f64>,
    b: ArrayView2<'_, f64>,
    n_proj: usize,
    seed: u64,
) -> Result<f64> {
    check(a, b)?;
    let dirs = random_directions(n_proj, a.ncols(), seed);
    swd_with_directions(a, b, &dirs, SwdCost::Squared)
}

/// Distance to a fixed reference set, with the reference side precomputed so
/// that repeated evaluation against a moving set of `m` points only projects
/// and sorts the moving side.
#[derive(Debug, Clone)]
pub struct SwdTarget {
    dirs: Array2<f64>,
    reference_len: usize,
    moving_len: usize,
    /// Per direction, the reference quantiles when the moving side is the
    /// smaller one, else the full sorted reference projection.
    reference: Vec<Vec<f64>>,
    kind: SwdCost,
}

impl SwdTarget {
    pub fn new(
        reference: ArrayView2<'_, f64>,
        moving_len: usize,
        dirs: Array2<f64>,
        kind: SwdCost,
    ) -> Result<Self> {
        if reference.nrows() == 0 || moving_len == 0 {
            return Err(Error::EmptySet);
        }
        let m = reference.nrows().min(moving_len);
        let proj = reference.dot(&dirs.t());
        let reference_sorted = (0..dirs.nrows())
            .map(|l| {
                let mut v = proj.column(l).to_vec();
                v.sort_by(f64::total_cmp);
                if moving_len <= reference.nrows() {
                    quantiles(&v, m)
                } else {
                    v
                }
            })
            .collect();
        Ok(SwdTarget {
            dirs,
            reference_len: reference.nrows(),
            moving_len,
            reference: reference_sorted,
            kind,
        })
    }

    pub fn directions(&self) -> &Array2<f64> {
        &self.dirs
    }

    /// Distance and its gradient with respect to the moving points.
    pub fn value_and_grad(&self, moving: ArrayView2<'_, f64>) -> (f64, Array2<f64>) {
        assert_eq!(moving.nrows(), self.moving_len, "moving set changed size");
        let n_proj = self.dirs.nrows();
        let mlen = self.moving_len;
        let m = self.reference_len.min(mlen);
        let proj = moving.dot(&self.dirs.t());
        let mut value = 0.0;
        // Gradient with respect to each moving point's projection, per direction.
        let mut gproj = Array2::<f64>::zeros((mlen, n_proj));
        let scale = 1.0 / (m as f64 * n_proj as f64);
        for l in 0..n_proj {
            let col: Vec<f64> = proj.column(l).to_vec();
            let order = sorted_by_value(&col);
            let refq = &self.reference[l];
            for j in 0..m {
                let (lo, frac) = quantile_position(j, m, mlen);
                let mq = if frac > 0.0 {
                    (1.0 - frac) * col[order[lo]] + frac * col[order[lo + 1]]
                } else {
                    col[order[lo]]
                };
                let rq = if mlen <= self.reference_len {
                    refq[j]
                } else {
                    let (rlo, rfrac) = quantile_position(j, m, self.reference_len);
                    if rfrac > 0.0 {
                        (1.0 - rfrac) * refq[rlo] + rfrac * refq[rlo + 1]
                    } else {
                        refq[rlo]
                    }
                };
                let diff = mq - rq;
                value += cost(diff, self.kind);
                let g = cost_grad(diff, self.kind) * scale;
                gproj[[order[lo], l]] += (1.0 - frac) * g;
                if frac > 0.0 {
                    gproj[[order[lo + 1], l]] += frac * g;
                }
            }
        }
        (value * scale, gproj.dot(&self.dirs))
    }

    /// Sort orders of the moving projections, one per direction. Used to
    /// detect when a perturbation crosses a ranking tie.
    pub fn ranking(&self, moving: ArrayView2<'_, f64>) -> Vec<Vec<usize>> {
        let proj = moving.dot(&self.dirs.t());
        (0..self.dirs.nrows())
            .map(|l| sorted_by_value(&proj.column(l).to_vec()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identical_sets_have_zero_distance() {
        let a = array![[0.0, 1.0], [2.0, -1.0], [0.5, 0.5]];
        assert_eq!(swd(a.view(), a.view(), 16, 3).unwrap(), 0.0);
    }

    #[test]
    fn one_dimensional_exact_value() {
        let a = array![[0.0], [2.0]];
        let b = array![[1.0], [3.0]];
        let d = swd(a.view(), b.view(), 8, 11).unwrap();
        assert!((d - 1.0).abs() < 1e-12, "{d}");
    }

    #[test]
    fn symmetric_under_fixed_directions() {
        let a = array![[0.0, 1.0], [2.0, -1.0], [0.5, 0.5], [1.0, 1.0]];
        let b = array![[0.1, 0.2], [1.0, 0.0]];
        let ab = swd(a.view(), b.view(), 32, 5).unwrap();
        let ba = swd(b.view(), a.view(), 32, 5).unwrap();
        assert_eq!(ab, ba);
    }

    #[test]
    fn empty_set_is_an_error() {
        let a = Array2::<f64>::zeros((0, 2));
        let b = array![[1.0, 2.0]];
        assert!(matches!(
            swd(a.view(), b.view(), 4, 0),
            Err(Error::EmptySet)
        ));
    }

    #[test]
    fn quantile_positions() {
        assert_eq!(quantile_position(1, 3, 3), (1, 0.0));
        // Median of four sorted values sits halfway between ranks 1 and 2.
        let (lo, frac) = quantile_position(0, 1, 4);
        assert_eq!(lo, 1);
        assert!((frac - 0.5).abs() < 1e-12);
        assert_eq!(quantile_position(0, 2, 2), (0, 0.0));
    }

    #[test]
    fn cached_target_matches_direct_evaluation() {
        let a = array![[0.0, 1.0], [2.0, -1.0], [0.5, 0.5], [1.0, 1.0], [-1.0, 0.3]];
        let b = array![[0.1, 0.2], [1.0, 0.0]];
        let dirs = random_directions(12, 2, 9);
        let direct = swd_with_directions(a.view(), b.view(), &dirs, SwdCost::Squared).unwrap();
        let target = SwdTarget::new(a.view(), 2, dirs.clone(), SwdCost::Squared).unwrap();
        let (cached, _) = target.value_and_grad(b.view());
        assert!((direct - cached).abs() < 1e-14);

        let rev = SwdTarget::new(b.view(), 5, dirs.clone(), SwdCost::Squared).unwrap();
        let (cached_rev, _) = rev.value_and_grad(a.view());
        assert!((direct - cached_rev).abs() < 1e-14);
    }
}
