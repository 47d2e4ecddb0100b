//! Seeded bimodal Gaussian mixtures with per-modality mode collapse.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::feature_store::FeatureMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_modes: usize,
    pub n_per_mode: usize,
    /// Per-mode sample counts overriding `n_per_mode`.
    pub mode_sizes: Option<Vec<usize>>,
    pub dim_img: usize,
    pub dim_txt: usize,
    /// Distance between mode centres in units of `noise_sigma`.
    pub separation: f64,
    pub collapse_img: f64,
    pub collapse_txt: f64,
    /// RMS distance of a sample from its mode centre.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_modes: 10,
            n_per_mode: 60,
            mode_sizes: None,
            dim_img: 16,
            dim_txt: 16,
            separation: 10.0,
            collapse_img: 0.0,
            collapse_txt: 0.0,
            noise_sigma: 1.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn sizes(&self) -> Vec<usize> {
        self.mode_sizes
            .clone()
            .unwrap_or_else(|| vec![self.n_per_mode; self.n_modes])
    }

    pub fn n_samples(&self) -> usize {
        self.sizes().iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::ShapeMismatch(msg));
        if self.n_modes == 0 {
            return bad("n_modes must be at least 1".into());
        }
        if let Some(s) = &self.mode_sizes {
            if s.len() != self.n_modes {
                return bad(format!("{} mode sizes for {} modes", s.len(), self.n_modes));
            }
        }
        for f in [self.collapse_img, self.collapse_txt] {
            if !(0.0..=1.0).contains(&f) {
                return bad(format!("collapse fraction {f} outside [0, 1]"));
            }
        }
        if self.dim_img == 0 || self.dim_txt == 0 {
            return bad("dimensions must be positive".into());
        }
        if !(self.noise_sigma > 0.0) || !(self.separation >= 0.0) {
            return bad("noise_sigma must be positive and separation non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub img: FeatureMatrix,
    pub txt: FeatureMatrix,
    pub labels: Vec<usize>,
}

fn centers(n_modes: usize, dim: usize, spacing: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let radius = spacing / 2f64.sqrt();
    let mut c = Array2::<f64>::zeros((n_modes, dim));
    if dim >= n_modes {
        for m in 0..n_modes {
            c[[m, m]] = radius;
        }
    } else {
        for mut row in c.rows_mut() {
            row.iter_mut().for_each(|v| *v = StandardNormal.sample(rng));
            let norm = row.dot(&row).sqrt().max(1e-12);
            row.mapv_inplace(|v| v * radius / norm);
        }
    }
    c
}

fn collapse(c: &mut Array2<f64>, fraction: f64, rng: &mut ChaCha8Rng) {
    let n_modes = c.nrows();
    let count = (fraction * n_modes as f64).round() as usize;
    let mut order: Vec<usize> = (0..n_modes).collect();
    order.shuffle(rng);
    let merged = &order[..count];
    if let Some(&first) = merged.first() {
        let target = c.row(first).to_owned();
        for &m in merged {
            c.row_mut(m).assign(&target);
        }
    }
}

fn sample(c: &Array2<f64>, labels: &[usize], sigma: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let dim = c.ncols();
    let scale = sigma / (dim as f64).sqrt();
    let mut x = Array2::<f64>::zeros((labels.len(), dim));
    for (mut row, &m) in x.rows_mut().into_iter().zip(labels) {
        for (v, &mu) in row.iter_mut().zip(c.row(m)) {
            let e: f64 = StandardNormal.sample(rng);
            *v = mu + scale * e;
        }
    }
    x
}

pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<Synthetic> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let spacing = spec.separation * spec.noise_sigma;
    let mut c_img = centers(spec.n_modes, spec.dim_img, spacing, &mut rng);
    let mut c_txt = centers(spec.n_modes, spec.dim_txt, spacing, &mut rng);
    collapse(&mut c_img, spec.collapse_img, &mut rng);
    collapse(&mut c_txt, spec.collapse_txt, &mut rng);

    let labels: Vec<usize> = spec
        .sizes()
        .iter()
        .enumerate()
        .flat_map(|(m, &s)| std::iter::repeat_n(m, s))
        .collect();
    let img = sample(&c_img, &labels, spec.noise_sigma, &mut rng);
    let txt = sample(&c_txt, &labels, spec.noise_sigma, &mut rng);
    let ids: Vec<String> = (0..labels.len()).map(|i| format!("s{i}")).collect();
    Ok(Synthetic {
        img: FeatureMatrix::new(ids.clone(), img)?,
        txt: FeatureMatrix::new(ids, txt)?,
        labels,
    })
}

pub fn write_labels(path: impl AsRef<Path>, labels: &[usize]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for l in labels {
        let _ = writeln!(out, "{l}");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse().map_err(|_| Error::Parse {
                what: "label file",
                line: i + 1,
                msg: format!("not a label: {l:?}"),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let spec = SyntheticSpec {
            n_modes: 3,
            n_per_mode: 5,
            seed: 4,
            ..Default::default()
        };
        let a = gen_synthetic(&spec).unwrap();
        let b = gen_synthetic(&spec).unwrap();
        assert_eq!(a.img, b.img);
        assert_eq!(a.txt, b.txt);
        assert_eq!(a.labels, [0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 2, 2, 2, 2, 2]);
    }

    #[test]
    fn full_text_collapse_shares_one_centre() {
        let base = SyntheticSpec {
            n_modes: 4,
            n_per_mode: 200,
            noise_sigma: 0.1,
            seed: 2,
            ..Default::default()
        };
        let collapsed = gen_synthetic(&SyntheticSpec {
            collapse_txt: 1.0,
            ..base.clone()
        })
        .unwrap();
        let plain = gen_synthetic(&base).unwrap();
        assert_eq!(collapsed.img, plain.img);
        let means: Vec<_> = (0..4)
            .map(|m| {
                collapsed
                    .txt
                    .data()
                    .slice(ndarray::s![m * 200..(m + 1) * 200, ..])
                    .mean_axis(ndarray::Axis(0))
                    .unwrap()
            })
            .collect();
        for m in &means[1..] {
            let d = (m - &means[0]).mapv(|v| v * v).sum().sqrt();
            assert!(d < 0.05, "{d}");
        }
    }

    #[test]
    fn rejects_bad_fraction() {
        let spec = SyntheticSpec {
            collapse_img: 1.5,
            ..Default::default()
        };
        assert!(gen_synthetic(&spec).is_err());
    }

    #[test]
    fn labels_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.labels");
        write_labels(&p, &[2, 0, 1]).unwrap();
        assert_eq!(read_labels(&p).unwrap(), vec![2, 0, 1]);
    }
}
