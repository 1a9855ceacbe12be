//! Fill-reducing symmetric ordering by minimum degree on the elimination graph.

use std::collections::BTreeSet;

use super::cholesky::{symbolic, CscMatrix};

/// Symmetric sparsity pattern as adjacency lists (no self loops).
#[derive(Debug, Clone, PartialEq)]
pub struct SymPattern {
    pub adj: Vec<Vec<usize>>,
}

impl SymPattern {
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut adj = vec![Vec::new(); n];
        for (a, b) in edges {
            if a != b {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        for l in &mut adj {
            l.sort_unstable();
            l.dedup();
        }
        Self { adj }
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    /// Upper triangle of `P C P^T` (values zero) for the ordering `perm[new] = old`.
    pub fn permuted_upper(&self, perm: &[usize]) -> CscMatrix {
        let n = self.len();
        let pinv = invert(perm);
        let mut t = Vec::new();
        for (a, nbrs) in self.adj.iter().enumerate() {
            let pa = pinv[a];
            t.push((pa, pa, 0.0));
            for &b in nbrs {
                let pb = pinv[b];
                if pa < pb {
                    t.push((pa, pb, 0.0));
                }
            }
        }
        CscMatrix::from_triplets(n, t)
    }

    /// Entries of `L` created by elimination in the given order (excluding
    /// those already present in the lower triangle of the matrix).
    pub fn fill_count(&self, perm: &[usize]) -> usize {
        let upper = self.permuted_upper(perm);
        let (_, counts) = symbolic(&upper);
        counts.iter().sum::<usize>() - upper.nnz()
    }
}

pub fn invert(perm: &[usize]) -> Vec<usize> {
    let mut pinv = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        pinv[old] = new;
    }
    pinv
}

/// Minimum-degree elimination order, `perm[new] = old`.
///
/// Exact degrees on the explicit elimination graph; ties broken by the
/// smallest node index, so the result is deterministic.
pub fn amd_ordering(pattern: &SymPattern) -> Vec<usize> {
    let n = pattern.len();
    let mut adj: Vec<BTreeSet<usize>> = pattern
        .adj
        .iter()
        .map(|l| l.iter().copied().collect())
        .collect();
    let mut degree: Vec<usize> = adj.iter().map(BTreeSet::len).collect();
    let mut queue: BTreeSet<(usize, usize)> = (0..n).map(|v| (degree[v], v)).collect();
    let mut order = Vec::with_capacity(n);

    while let Some((_, v)) = queue.pop_first() {
        order.push(v);
        let nbrs: Vec<usize> = std::mem::take(&mut adj[v]).into_iter().collect();
        for &u in &nbrs {
            queue.remove(&(degree[u], u));
            adj[u].remove(&v);
        }
        for (i, &a) in nbrs.iter().enumerate() {
            for &b in &nbrs[i + 1..] {
                if adj[a].insert(b) {
                    adj[b].insert(a);
                }
            }
        }
        for &u in &nbrs {
            degree[u] = adj[u].len();
            queue.insert((degree[u], u));
        }
    }
    order
}
