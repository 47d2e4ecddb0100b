//! Discrete realisation: cost matrix, rectangular Hungarian solve and the
//! coreset manifest.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::graph::{fmt_sig9, SparseGraph};
use crate::matching::{pairwise_sqdist, ProxyFrame, WaveletObjective};

pub const MANIFEST_TAG: &str = "cast-coreset v1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostWeights {
    pub dist: f64,
    pub wavelet: f64,
    pub topo: f64,
    pub confidence: f64,
}

/// `K x N` assignment costs with the normalised components kept for audit.
#[derive(Debug, Clone)]
pub struct CostMatrix {
    pub cost: Array2<f64>,
    pub d_diff: Array2<f64>,
    pub d_wavelet: Array2<f64>,
    pub c_topo: Array1<f64>,
    pub q: Array1<f64>,
}

/// Rescales to `[0, 1]`; a constant input maps to zeros.
pub fn min_max<D: ndarray::Dimension>(a: &ndarray::Array<f64, D>) -> ndarray::Array<f64, D> {
    let lo = a.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return a.mapv(|_| 0.0);
    }
    a.mapv(|v| (v - lo) / (hi - lo))
}

/// `1 - deg(i) / max_j deg(j)` in weighted degree; all zero on an edgeless graph.
pub fn topological_cost(graph: &SparseGraph) -> Array1<f64> {
    let deg: Array1<f64> = (0..graph.n()).map(|i| graph.degree(i)).collect();
    let max = deg.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Array1::zeros(graph.n());
    }
    deg.mapv(|d| 1.0 - d / max)
}

/// Combines already computed raw components.
pub fn combine(
    d_diff: &Array2<f64>,
    d_wavelet: &Array2<f64>,
    c_topo: &Array1<f64>,
    q: &Array1<f64>,
    w: CostWeights,
) -> CostMatrix {
    let d_diff = min_max(d_diff);
    let d_wavelet = min_max(d_wavelet);
    let c_topo = min_max(c_topo);
    let q = min_max(q);
    let mut cost = &d_diff * w.dist + &d_wavelet * w.wavelet;
    for mut row in cost.rows_mut() {
        row.scaled_add(w.topo, &c_topo);
        row.scaled_add(-w.confidence, &q);
    }
    CostMatrix {
        cost,
        d_diff,
        d_wavelet,
        c_topo,
        q,
    }
}

pub fn cost_matrix(
    y: &Array2<f64>,
    z: &Array2<f64>,
    wavelet: &WaveletObjective,
    frame: &ProxyFrame,
    unified: &SparseGraph,
    h_bar: &Array1<f64>,
    w: CostWeights,
) -> CostMatrix {
    let d_diff = frame.sqdist.t().to_owned();
    let mut d_wavelet = Array2::<f64>::zeros((y.nrows(), z.nrows()));
    for term in &wavelet.terms {
        let phi_y = WaveletObjective::proxy_response(term, frame);
        d_wavelet.scaled_add(
            term.beta,
            &pairwise_sqdist(phi_y.view(), term.response.view()),
        );
    }
    combine(&d_diff, &d_wavelet, &topological_cost(unified), h_bar, w)
}

/// Minimum-cost injective assignment of the `K` rows of `cost` to distinct
/// columns. Returns the column chosen for each row.
pub fn hungarian(cost: &Array2<f64>) -> Result<Vec<usize>> {
    let (n, m) = cost.dim();
    if n > m {
        return Err(Error::Infeasible { k: n, n: m });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    // Shortest augmenting paths with row and column potentials; index 0 is
    // the virtual column that starts each search.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            let row = cost.row(i0 - 1);
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = row[j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![usize::MAX; n];
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = j - 1;
        }
    }
    Ok(out)
}

/// `Σ_k C[k, π(k)]`, summed in row order.
pub fn assignment_cost(cost: &Array2<f64>, pi: &[usize]) -> f64 {
    pi.iter().enumerate().map(|(k, &i)| cost[[k, i]]).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coreset {
    pub indices: Vec<usize>,
    pub costs: Vec<f64>,
    pub total_cost: f64,
    pub ids: Vec<String>,
}

impl Coreset {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Builds the coreset for an injective assignment. Panics if `pi` repeats
    /// an index.
    pub fn from_assignment(pi: &[usize], costs: Vec<f64>, ids: &[String]) -> Self {
        let mut seen = vec![false; ids.len()];
        for &i in pi {
            assert!(!seen[i], "assignment selects sample {i} twice");
            seen[i] = true;
        }
        Coreset {
            indices: pi.to_vec(),
            total_cost: costs.iter().sum(),
            costs,
            ids: pi.iter().map(|&i| ids[i].clone()).collect(),
        }
    }

    pub fn manifest(&self, n: usize, seed: u64) -> String {
        let mut out = format!("{MANIFEST_TAG} K={} N={n} seed={seed}\n", self.len());
        for (rank, ((&i, id), &c)) in self
            .indices
            .iter()
            .zip(&self.ids)
            .zip(&self.costs)
            .enumerate()
        {
            let _ = writeln!(out, "{rank} {i} {id} {}", fmt_sig9(c));
        }
        out
    }
}

/// Resolves `pi` into a coreset and writes its manifest.
pub fn emit(
    pi: &[usize],
    cost: &Array2<f64>,
    ids: &[String],
    seed: u64,
    path: impl AsRef<Path>,
) -> Result<Coreset> {
    let costs = pi.iter().enumerate().map(|(k, &i)| cost[[k, i]]).collect();
    let coreset = Coreset::from_assignment(pi, costs, ids);
    let path = path.as_ref();
    std::fs::write(path, coreset.manifest(ids.len(), seed)).map_err(|e| Error::io(path, e))?;
    Ok(coreset)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub n: usize,
    pub seed: u64,
    pub indices: Vec<usize>,
    pub ids: Vec<String>,
    pub costs: Vec<f64>,
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::Parse {
            what: "coreset manifest",
            line,
            msg: msg.to_string(),
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad(1, "empty file"))?;
        let rest = header
            .strip_prefix(MANIFEST_TAG)
            .ok_or_else(|| bad(1, "missing header"))?;
        let (mut k, mut n, mut seed) = (None, None, None);
        for field in rest.split_whitespace() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| bad(1, "malformed header field"))?;
            let parsed: u64 = value
                .parse()
                .map_err(|_| bad(1, "non-numeric header value"))?;
            match key {
                "K" => k = Some(parsed as usize),
                "N" => n = Some(parsed as usize),
                "seed" => seed = Some(parsed),
                _ => return Err(bad(1, "unknown header field")),
            }
        }
        let (k, n, seed) = match (k, n, seed) {
            (Some(k), Some(n), Some(s)) => (k, n, s),
            _ => return Err(bad(1, "incomplete header")),
        };
        let mut m = Manifest {
            n,
            seed,
            indices: Vec::with_capacity(k),
            ids: Vec::with_capacity(k),
            costs: Vec::with_capacity(k),
        };
        for (off, line) in lines.enumerate() {
            let ln = off + 2;
            let parts: Vec<&str> = line.split(' ').collect();
            if parts.len() != 4 {
                return Err(bad(ln, "expected `<rank> <index> <id> <cost>`"));
            }
            let rank: usize = parts[0].parse().map_err(|_| bad(ln, "bad rank"))?;
            if rank != off {
                return Err(bad(ln, "ranks out of order"));
            }
            let index: usize = parts[1].parse().map_err(|_| bad(ln, "bad index"))?;
            if index >= n {
                return Err(bad(ln, "index out of range"));
            }
            m.indices.push(index);
            m.ids.push(parts[2].to_string());
            m.costs
                .push(parts[3].parse().map_err(|_| bad(ln, "bad cost"))?);
        }
        if m.indices.len() != k {
            return Err(bad(k + 2, "line count does not match K"));
        }
        Ok(m)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn dominant_diagonal() {
        let mut c = Array2::<f64>::zeros((4, 6));
        for k in 0..4 {
            c[[k, k]] = -1.0;
        }
        assert_eq!(hungarian(&c).unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn small_rectangular_example() {
        let c = array![[1.0, 2.0, 3.0], [2.0, 4.0, 1.0]];
        let pi = hungarian(&c).unwrap();
        assert_eq!(pi, vec![0, 2]);
        assert_eq!(assignment_cost(&c, &pi), 2.0);
    }

    #[test]
    fn more_rows_than_columns_is_infeasible() {
        let c = Array2::<f64>::zeros((3, 2));
        assert!(matches!(
            hungarian(&c),
            Err(Error::Infeasible { k: 3, n: 2 })
        ));
    }

    #[test]
    fn collapsed_weights_leave_spatial_distance() {
        let d = array![[0.0, 4.0, 2.0]];
        let w = CostWeights {
            dist: 1.0,
            wavelet: 0.0,
            topo: 0.0,
            confidence: 0.0,
        };
        let c = combine(
            &d,
            &array![[9.0, 1.0, 3.0]],
            &array![0.1, 0.7, 0.2],
            &array![0.5, 0.1, 0.9],
            w,
        );
        assert_eq!(c.cost, array![[0.0, 1.0, 0.5]]);
    }

    #[test]
    fn favourable_node_is_row_minimum() {
        let g = SparseGraph::from_edges(3, [(0, 1, 1.0), (0, 2, 1.0)]);
        let ct = topological_cost(&g);
        assert_eq!(ct, array![0.0, 0.5, 0.5]);
        let d = array![[0.0, 1.0, 2.0], [1.0, 0.0, 1.5]];
        let w = CostWeights {
            dist: 0.4,
            wavelet: 0.4,
            topo: 0.1,
            confidence: 0.1,
        };
        let c = combine(&d, &d, &ct, &array![1.0, 0.2, 0.3], w);
        let row = c.cost.row(0);
        assert!(row[0] < row[1] && row[0] < row[2]);
    }

    #[test]
    #[should_panic(expected = "twice")]
    fn duplicate_index_panics() {
        let ids: Vec<String> = (0..4).map(|i| i.to_string()).collect();
        Coreset::from_assignment(&[1, 1], vec![0.0, 0.0], &ids);
    }

    #[test]
    fn manifest_round_trip() {
        let ids: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        let cs = Coreset::from_assignment(&[3, 0, 2], vec![0.5, -0.25, 1.0 / 3.0], &ids);
        let text = cs.manifest(4, 9);
        assert!(text.starts_with("cast-coreset v1 K=3 N=4 seed=9\n0 3 d 5.00000000e-1\n"));
        let m = Manifest::parse(&text).unwrap();
        assert_eq!(m.indices, vec![3, 0, 2]);
        assert_eq!(m.ids, vec!["d", "a", "c"]);
        assert_eq!(m.seed, 9);
        assert!(Manifest::parse("cast-coreset v1 K=2 N=4 seed=0\n0 1 b 0\n").is_err());
    }
}
