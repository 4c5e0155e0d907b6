//! Exact-rational max flow and min-cut helpers on desk-scale graphs.

use std::collections::{BTreeSet, VecDeque};

use num_rational::BigRational;
use num_traits::Zero;

/// Residual-network max flow (Edmonds–Karp) over exact rational capacities.
/// Node/edge counts here are tiny, so clarity wins over asymptotics.
pub(crate) struct FlowNetwork {
    node_count: usize,
    /// Arcs come in (forward, backward) pairs at indices (2k, 2k+1).
    to: Vec<usize>,
    residual: Vec<BigRational>,
    adj: Vec<Vec<usize>>,
    caps: Vec<BigRational>,
}

impl FlowNetwork {
    pub fn new(node_count: usize) -> Self {
        Self {
            node_count,
            to: Vec::new(),
            residual: Vec::new(),
            adj: vec![Vec::new(); node_count],
            caps: Vec::new(),
        }
    }

    /// Returns the arc id of the forward arc; the k-th added edge has id 2k.
    pub fn add_edge(&mut self, from: usize, to: usize, cap: BigRational) -> usize {
        let id = self.to.len();
        self.adj[from].push(id);
        self.to.push(to);
        self.residual.push(cap.clone());
        self.adj[to].push(id + 1);
        self.to.push(from);
        self.residual.push(BigRational::zero());
        self.caps.push(cap);
        id
    }

    fn bfs_path(&self, source: usize, sink: usize) -> Option<Vec<usize>> {
        let mut pred: Vec<Option<usize>> = vec![None; self.node_count];
        let mut seen = vec![false; self.node_count];
        seen[source] = true;
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            for &arc in &self.adj[u] {
                let v = self.to[arc];
                if !seen[v] && !self.residual[arc].is_zero() {
                    seen[v] = true;
                    pred[v] = Some(arc);
                    if v == sink {
                        let mut path = Vec::new();
                        let mut node = sink;
                        while node != source {
                            let a = pred[node].unwrap();
                            path.push(a);
                            node = self.to[a ^ 1];
                        }
                        path.reverse();
                        return Some(path);
                    }
                    queue.push_back(v);
                }
            }
        }
        None
    }

    pub fn max_flow(&mut self, source: usize, sink: usize) -> BigRational {
        let mut value = BigRational::zero();
        while let Some(path) = self.bfs_path(source, sink) {
            let bottleneck = path
                .iter()
                .map(|&a| self.residual[a].clone())
                .min()
                .expect("non-empty path");
            for &a in &path {
                self.residual[a] -= bottleneck.clone();
                self.residual[a ^ 1] += bottleneck.clone();
            }
            value += bottleneck;
        }
        value
    }

    /// Flow on the k-th added edge after `max_flow`.
    pub fn edge_flow(&self, edge_index: usize) -> BigRational {
        self.residual[2 * edge_index + 1].clone()
    }

    /// Nodes reachable from `source` in the residual network; the source side
    /// of the canonical min cut once `max_flow` has run.
    pub fn residual_reachable(&self, source: usize) -> Vec<bool> {
        let mut seen = vec![false; self.node_count];
        seen[source] = true;
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            for &arc in &self.adj[u] {
                let v = self.to[arc];
                if !seen[v] && !self.residual[arc].is_zero() {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen
    }
}

/// All distinct min-cut edge sets, by exhaustive enumeration of node
/// partitions. Only meant for desk-scale graphs; callers gate on edge count.
pub(crate) fn enumerate_min_cut_edge_sets(
    node_count: usize,
    edges: &[(usize, usize)],
    capacities: &[BigRational],
    source: usize,
    sink: usize,
    min_cut_value: &BigRational,
) -> Vec<BTreeSet<usize>> {
    let free: Vec<usize> = (0..node_count).filter(|&v| v != source && v != sink).collect();
    let mut cuts: BTreeSet<BTreeSet<usize>> = BTreeSet::new();
    for mask in 0u64..(1u64 << free.len()) {
        let mut side = vec![false; node_count];
        side[source] = true;
        for (bit, &v) in free.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                side[v] = true;
            }
        }
        let mut value = BigRational::zero();
        let mut cut_edges = BTreeSet::new();
        for (idx, &(u, v)) in edges.iter().enumerate() {
            if side[u] && !side[v] {
                value += capacities[idx].clone();
                cut_edges.insert(idx);
            }
        }
        if value == *min_cut_value {
            cuts.insert(cut_edges);
        }
    }
    cuts.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::big_ratio;

    #[test]
    fn single_edge_flow() {
        let mut net = FlowNetwork::new(2);
        net.add_edge(0, 1, big_ratio(1, 2));
        assert_eq!(net.max_flow(0, 1), big_ratio(1, 2));
        assert_eq!(net.edge_flow(0), big_ratio(1, 2));
    }

    #[test]
    fn diamond_flow() {
        // s -> a, s -> b, a -> t, b -> t with caps 3/10, 7/10, 1/2, 1/2.
        let mut net = FlowNetwork::new(4);
        net.add_edge(0, 1, big_ratio(3, 10));
        net.add_edge(0, 2, big_ratio(7, 10));
        net.add_edge(1, 3, big_ratio(1, 2));
        net.add_edge(2, 3, big_ratio(1, 2));
        assert_eq!(net.max_flow(0, 3), big_ratio(4, 5));
    }

    #[test]
    fn min_cut_enumeration_finds_unique_cut() {
        // Line s -> a -> t with caps 1/2 and 4/5: unique min cut at the first edge.
        let edges = vec![(0, 1), (1, 2)];
        let caps = vec![big_ratio(1, 2), big_ratio(4, 5)];
        let cuts = enumerate_min_cut_edge_sets(3, &edges, &caps, 0, 2, &big_ratio(1, 2));
        assert_eq!(cuts.len(), 1);
        assert!(cuts[0].contains(&0));
    }

    #[test]
    fn min_cut_enumeration_multiple_cuts() {
        // Equal caps along a chain give one min cut per edge.
        let edges = vec![(0, 1), (1, 2)];
        let caps = vec![big_ratio(1, 2), big_ratio(1, 2)];
        let cuts = enumerate_min_cut_edge_sets(3, &edges, &caps, 0, 2, &big_ratio(1, 2));
        assert_eq!(cuts.len(), 2);
    }
}
