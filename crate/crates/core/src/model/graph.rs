use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Undirected simple graph on `0..n` with sorted neighbor lists.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DependencyGraph {
    adjacency: Vec<Vec<usize>>,
}

impl DependencyGraph {
    /// Builds a graph from an edge list. Self-loops are rejected and
    /// duplicate edges collapse.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); n];
        for (u, v) in edges {
            if u >= n {
                return Err(Error::IndexOutOfRange { index: u, n });
            }
            if v >= n {
                return Err(Error::IndexOutOfRange { index: v, n });
            }
            if u == v {
                return Err(Error::InvalidModel(format!("self-loop at {u}")));
            }
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self { adjacency })
    }

    pub fn edgeless(n: usize) -> Self {
        Self { adjacency: vec![Vec::new(); n] }
    }

    pub fn path(n: usize) -> Self {
        Self::from_edges(n, (1..n).map(|i| (i - 1, i))).expect("path edges are valid")
    }

    pub fn grid(rows: usize, cols: usize) -> Self {
        let id = |r: usize, c: usize| r * cols + c;
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                if c + 1 < cols {
                    edges.push((id(r, c), id(r, c + 1)));
                }
                if r + 1 < rows {
                    edges.push((id(r, c), id(r + 1, c)));
                }
            }
        }
        Self::from_edges(rows * cols, edges).expect("grid edges are valid")
    }

    pub fn n(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().filter(move |&&v| u < v).map(move |&v| (u, v)))
    }

    /// BFS distances from `v`; `None` for unreachable vertices.
    pub fn distances_from(&self, v: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n()];
        dist[v] = Some(0);
        let mut queue = VecDeque::from([v]);
        while let Some(u) = queue.pop_front() {
            let d = dist[u].unwrap();
            for &w in &self.adjacency[u] {
                if dist[w].is_none() {
                    dist[w] = Some(d + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// `B_r(v)`: every vertex within graph distance `r` of `v`, sorted.
    pub fn ball(&self, v: usize, r: usize) -> Result<Vec<usize>> {
        if v >= self.n() {
            return Err(Error::IndexOutOfRange { index: v, n: self.n() });
        }
        Ok(self.ball_unchecked(v, r))
    }

    pub(crate) fn ball_unchecked(&self, v: usize, r: usize) -> Vec<usize> {
        let mut seen = vec![false; self.n()];
        seen[v] = true;
        let mut frontier = vec![v];
        let mut out = vec![v];
        for _ in 0..r {
            let mut next = Vec::new();
            for &u in &frontier {
                for &w in &self.adjacency[u] {
                    if !seen[w] {
                        seen[w] = true;
                        next.push(w);
                        out.push(w);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
        out.sort_unstable();
        out
    }

    /// Vertices at distance exactly `d` from `v`, sorted.
    pub fn sphere(&self, v: usize, d: usize) -> Vec<usize> {
        self.distances_from(v)
            .into_iter()
            .enumerate()
            .filter_map(|(u, du)| (du == Some(d)).then_some(u))
            .collect()
    }

    /// `max_v |B_r(v)|`.
    pub fn max_ball_size(&self, r: usize) -> usize {
        (0..self.n()).map(|v| self.ball_unchecked(v, r).len()).max().unwrap_or(0)
    }

    pub fn component_count(&self) -> usize {
        let mut seen = vec![false; self.n()];
        let mut count = 0;
        for s in 0..self.n() {
            if seen[s] {
                continue;
            }
            count += 1;
            let mut stack = vec![s];
            seen[s] = true;
            while let Some(u) = stack.pop() {
                for &w in &self.adjacency[u] {
                    if !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
        }
        count
    }

    /// Acyclic (a forest).
    pub fn is_forest(&self) -> bool {
        self.edge_count() + self.component_count() == self.n()
    }

    /// Connected and acyclic.
    pub fn is_tree(&self) -> bool {
        self.n() > 0 && self.component_count() == 1 && self.edge_count() + 1 == self.n()
    }

    /// Greedy distance-`r` coloring over ascending vertex index, each vertex
    /// taking the lowest color unused within distance `r`. Parts are returned
    /// in color order; within a part all pairwise distances exceed `r`.
    pub fn greedy_r_partition(&self, r: usize) -> Vec<Vec<usize>> {
        let n = self.n();
        let mut color = vec![usize::MAX; n];
        let mut parts: Vec<Vec<usize>> = Vec::new();
        for v in 0..n {
            let mut taken = Vec::new();
            for u in self.ball_unchecked(v, r) {
                if u != v && color[u] != usize::MAX {
                    taken.push(color[u]);
                }
            }
            taken.sort_unstable();
            taken.dedup();
            let mut c = 0;
            for t in taken {
                if t == c {
                    c += 1;
                } else if t > c {
                    break;
                }
            }
            color[v] = c;
            if c == parts.len() {
                parts.push(Vec::new());
            }
            parts[c].push(v);
        }
        parts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_distance(g: &DependencyGraph, u: usize, v: usize) -> Option<usize> {
        g.distances_from(u)[v]
    }

    #[test]
    fn balls_on_path() {
        let g = DependencyGraph::path(5);
        assert_eq!(g.ball(2, 0).unwrap(), vec![2]);
        assert_eq!(g.ball(2, 1).unwrap(), vec![1, 2, 3]);
        assert_eq!(g.ball(0, 10).unwrap(), vec![0, 1, 2, 3, 4]);
        assert!(g.ball(5, 1).is_err());
    }

    #[test]
    fn partition_examples() {
        let g = DependencyGraph::edgeless(6);
        assert_eq!(g.greedy_r_partition(3), vec![vec![0, 1, 2, 3, 4, 5]]);

        let g = DependencyGraph::path(5);
        assert_eq!(g.greedy_r_partition(2), vec![vec![0, 3], vec![1, 4], vec![2]]);

        let g = DependencyGraph::grid(3, 3);
        let parts = g.greedy_r_partition(1);
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[0], vec![0, 2, 4, 6, 8]);
    }

    #[test]
    fn partition_separation_exhaustive() {
        for (g, rs) in [
            (DependencyGraph::grid(4, 5), vec![1, 2, 3]),
            (DependencyGraph::path(9), vec![1, 2, 4]),
            (DependencyGraph::grid(3, 3), vec![1, 2, 5]),
        ] {
            for r in rs {
                let parts = g.greedy_r_partition(r);
                let mut covered = vec![0; g.n()];
                for part in &parts {
                    for (a, &u) in part.iter().enumerate() {
                        covered[u] += 1;
                        for &v in &part[a + 1..] {
                            if let Some(d) = brute_distance(&g, u, v) {
                                assert!(d > r, "{u},{v} at distance {d} share a part at r={r}");
                            }
                        }
                    }
                }
                assert!(covered.iter().all(|&c| c == 1));
                assert!(parts.len() <= g.max_ball_size(r) + 1);
            }
        }
    }

    #[test]
    fn tree_detection() {
        assert!(DependencyGraph::path(4).is_tree());
        assert!(!DependencyGraph::grid(2, 2).is_forest());
        assert!(DependencyGraph::edgeless(3).is_forest());
        assert!(!DependencyGraph::edgeless(3).is_tree());
        assert_eq!(DependencyGraph::grid(3, 3).edge_count(), 12);
    }
}
