//! Undirected weighted graphs with per-node adjacency.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Symmetric sparse adjacency over `n` nodes. Self-loops and non-positive
/// weights are never stored. Adjacency lists are sorted by neighbour index.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGraph {
    adj: Vec<Vec<(usize, f64)>>,
}

impl SparseGraph {
    pub fn empty(n: usize) -> Self {
        SparseGraph {
            adj: vec![Vec::new(); n],
        }
    }

    /// Builds a graph from undirected edges. Each unordered pair may appear at
    /// most once in either orientation; a repeated pair keeps the last weight.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut map = BTreeMap::new();
        for (i, j, w) in edges {
            assert!(i < n && j < n, "edge ({i}, {j}) outside {n} nodes");
            if i == j || !(w > 0.0) {
                continue;
            }
            map.insert((i.min(j), i.max(j)), w);
        }
        let mut adj = vec![Vec::new(); n];
        for ((i, j), w) in map {
            adj[i].push((j, w));
            adj[j].push((i, w));
        }
        for row in &mut adj {
            row.sort_unstable_by_key(|&(j, _)| j);
        }
        SparseGraph { adj }
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adj[i]
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        match self.adj[i].binary_search_by_key(&j, |&(v, _)| v) {
            Ok(pos) => self.adj[i][pos].1,
            Err(_) => 0.0,
        }
    }

    /// Weighted degree.
    pub fn degree(&self, i: usize) -> f64 {
        self.adj[i].iter().map(|&(_, w)| w).sum()
    }

    pub fn n_edges(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Each undirected edge once, as `(i, j, w)` with `i < j`, in index order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.adj.iter().enumerate().flat_map(|(i, row)| {
            row.iter()
                .filter(move |&&(j, _)| j > i)
                .map(move |&(j, w)| (i, j, w))
        })
    }

    /// Union of the edge sets of two graphs over the same nodes, as sorted
    /// `(i, j)` pairs with `i < j`.
    pub fn union_support(a: &SparseGraph, b: &SparseGraph) -> Vec<(usize, usize)> {
        assert_eq!(a.n(), b.n(), "graphs over different node sets");
        let mut out = Vec::with_capacity(a.n_edges().max(b.n_edges()));
        for i in 0..a.n() {
            let (ra, rb) = (a.neighbors(i), b.neighbors(i));
            let (mut p, mut q) = (0, 0);
            while p < ra.len() || q < rb.len() {
                let ja = ra.get(p).map_or(usize::MAX, |e| e.0);
                let jb = rb.get(q).map_or(usize::MAX, |e| e.0);
                let j = ja.min(jb);
                if ja == j {
                    p += 1;
                }
                if jb == j {
                    q += 1;
                }
                if j > i {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Text edge list: `n=<N>` then one `i j w` line per edge.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        writeln!(out, "n={}", self.n()).unwrap();
        for (i, j, w) in self.edges() {
            writeln!(out, "{i} {j} {}", fmt_sig9(w)).unwrap();
        }
        out
    }

    pub fn from_edge_list(text: &str) -> Result<Self> {
        let err = |line: usize, msg: &str| Error::Parse {
            what: "edge list",
            line,
            msg: msg.to_owned(),
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| err(1, "missing header"))?;
        let n: usize = header
            .trim()
            .strip_prefix("n=")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| err(1, "expected `n=<N>`"))?;
        let mut edges = Vec::new();
        for (idx, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let mut next = || parts.next().ok_or_else(|| err(idx + 1, "expected `i j w`"));
            let i: usize = next()?.parse().map_err(|_| err(idx + 1, "bad node"))?;
            let j: usize = next()?.parse().map_err(|_| err(idx + 1, "bad node"))?;
            let w: f64 = next()?.parse().map_err(|_| err(idx + 1, "bad weight"))?;
            if i >= n || j >= n {
                return Err(err(idx + 1, "node index out of range"));
            }
            edges.push((i, j, w));
        }
        Ok(SparseGraph::from_edges(n, edges))
    }
}

/// Formats a value with nine significant digits in scientific notation.
pub fn fmt_sig9(x: f64) -> String {
    format!("{x:.8e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn storage_is_symmetric_without_self_loops() {
        let g = SparseGraph::from_edges(3, [(0, 1, 0.5), (2, 1, 0.25), (1, 1, 1.0), (0, 2, 0.0)]);
        assert_eq!(g.n_edges(), 2);
        assert_eq!(g.weight(1, 0), 0.5);
        assert_eq!(g.weight(1, 2), 0.25);
        assert_eq!(g.weight(1, 1), 0.0);
        assert_eq!(g.weight(0, 2), 0.0);
        assert_eq!(
            g.edges().collect::<Vec<_>>(),
            vec![(0, 1, 0.5), (1, 2, 0.25)]
        );
        assert_eq!(g.degree(1), 0.75);
    }

    #[test]
    fn union_support_merges_both_edge_sets() {
        let a = SparseGraph::from_edges(4, [(0, 1, 1.0), (2, 3, 1.0)]);
        let b = SparseGraph::from_edges(4, [(0, 1, 0.5), (1, 2, 0.5)]);
        assert_eq!(
            SparseGraph::union_support(&a, &b),
            vec![(0, 1), (1, 2), (2, 3)]
        );
    }

    #[test]
    fn edge_list_format() {
        let g = SparseGraph::from_edges(3, [(0, 2, 0.75)]);
        let text = g.to_edge_list();
        assert_eq!(text, "n=3\n0 2 7.50000000e-1\n");
        assert_eq!(SparseGraph::from_edge_list(&text).unwrap(), g);
        assert!(SparseGraph::from_edge_list("n=2\n0 5 1.0\n").is_err());
    }
}
