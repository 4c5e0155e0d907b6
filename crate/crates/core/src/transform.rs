//! Max-flow path decomposition and the correlated parallel-path transform.
//!
//! A max flow on capacities `1 - p_e` decomposes into source-sink flows; from
//! those flows the network is rebuilt as node-disjoint parallel paths whose
//! split links inherit correlated erasures from their original edge, one
//! group per edge. Coding on the rebuilt network is per-trace slower, so its
//! delay upper-bounds the original's, while the min-cut capacity is preserved
//! exactly.

use std::collections::VecDeque;

use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::flow::{enumerate_min_cut_edge_sets, FlowNetwork};
use crate::topology::{RawGroup, RawLink, Topology};

/// One source-sink flow of a decomposition; `links[i]` connects `nodes[i]`
/// to `nodes[i + 1]`.
#[derive(Debug, Clone)]
pub struct Flow {
    pub rate: BigRational,
    pub nodes: Vec<usize>,
    pub links: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct FlowDecomposition {
    pub capacity: BigRational,
    pub flows: Vec<Flow>,
    /// Total flow per original link, which the per-flow rates partition.
    pub edge_flow: Vec<BigRational>,
    /// Whether the network has a unique min cut: detected exhaustively on
    /// desk-scale graphs, taken from the caller's assertion on larger ones,
    /// `None` when neither applies.
    pub single_bottleneck: Option<bool>,
    /// Whether the desaturation pass rebalanced the flow so each path's
    /// unique worst link lies on the min cut.
    pub refined: bool,
    /// Links crossing the canonical (residual-reachability) min cut.
    pub min_cut_links: Vec<usize>,
}

impl FlowDecomposition {
    pub fn flows_through_link(&self, link: usize) -> Vec<usize> {
        self.flows
            .iter()
            .enumerate()
            .filter(|(_, f)| f.links.contains(&link))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn flows_through_node(&self, node: usize) -> Vec<usize> {
        self.flows
            .iter()
            .enumerate()
            .filter(|(_, f)| f.nodes.contains(&node))
            .map(|(i, _)| i)
            .collect()
    }
}

/// Edge count above which min-cut uniqueness is no longer checked
/// exhaustively and callers must assert it themselves.
pub const EXHAUSTIVE_CUT_LIMIT: usize = 20;

pub fn decompose_max_flow(t: &Topology) -> Result<FlowDecomposition> {
    decompose_max_flow_with(t, None)
}

/// `assume_single_bottleneck` overrides uniqueness detection for graphs too
/// large to enumerate.
pub fn decompose_max_flow_with(
    t: &Topology,
    assume_single_bottleneck: Option<bool>,
) -> Result<FlowDecomposition> {
    let links = t.links();
    let capacities: Vec<BigRational> =
        links.iter().map(|l| BigRational::one() - l.p.clone()).collect();

    let mut net = FlowNetwork::new(t.node_count());
    for link in links {
        net.add_edge(link.src, link.dst, BigRational::one() - link.p.clone());
    }
    let capacity = net.max_flow(t.source(), t.sink());
    if capacity.is_zero() {
        return Err(Error::InvalidTopology("network has zero capacity".into()));
    }
    let mut edge_flow: Vec<BigRational> = (0..links.len()).map(|i| net.edge_flow(i)).collect();
    cancel_cycles(t, &mut edge_flow);

    // Canonical min cut from residual reachability.
    let reachable = net.residual_reachable(t.source());
    let min_cut_links: Vec<usize> = links
        .iter()
        .enumerate()
        .filter(|(_, l)| reachable[l.src] && !reachable[l.dst])
        .map(|(i, _)| i)
        .collect();

    let single_bottleneck = match assume_single_bottleneck {
        Some(flag) => Some(flag),
        None if links.len() <= EXHAUSTIVE_CUT_LIMIT && t.node_count() <= EXHAUSTIVE_CUT_LIMIT + 2 => {
            let pairs: Vec<(usize, usize)> = links.iter().map(|l| (l.src, l.dst)).collect();
            let cuts = enumerate_min_cut_edge_sets(
                t.node_count(),
                &pairs,
                &capacities,
                t.source(),
                t.sink(),
                &capacity,
            );
            Some(cuts.len() == 1)
        }
        None => None,
    };

    let mut refined = false;
    if single_bottleneck == Some(true) {
        refined = desaturate_off_cut(t, &capacities, &mut edge_flow, &min_cut_links);
        if refined {
            cancel_cycles(t, &mut edge_flow);
        }
    }

    let flows = extract_paths(t, edge_flow.clone())?;
    debug_assert_eq!(
        flows.iter().map(|f| f.rate.clone()).sum::<BigRational>(),
        capacity
    );
    Ok(FlowDecomposition { capacity, flows, edge_flow, single_bottleneck, refined, min_cut_links })
}

/// Remove directed flow cycles; the flow value and edge feasibility are
/// untouched, and the positive-flow subgraph becomes acyclic.
fn cancel_cycles(t: &Topology, edge_flow: &mut [BigRational]) {
    loop {
        let Some(cycle) = find_flow_cycle(t, edge_flow) else { return };
        let step = cycle
            .iter()
            .map(|&l| edge_flow[l].clone())
            .min()
            .expect("non-empty cycle");
        for &l in &cycle {
            edge_flow[l] -= step.clone();
        }
    }
}

fn find_flow_cycle(t: &Topology, edge_flow: &[BigRational]) -> Option<Vec<usize>> {
    let n = t.node_count();
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, link) in t.links().iter().enumerate() {
        if !edge_flow[i].is_zero() {
            out[link.src].push(i);
        }
    }
    // Iterative DFS with colors; on a back edge, reconstruct the cycle.
    let mut color = vec![0u8; n]; // 0 white, 1 gray, 2 black
    let mut parent_link: Vec<Option<usize>> = vec![None; n];
    for start in 0..n {
        if color[start] != 0 {
            continue;
        }
        let mut stack = vec![(start, 0usize)];
        color[start] = 1;
        while let Some(&mut (u, ref mut next)) = stack.last_mut() {
            if *next < out[u].len() {
                let link = out[u][*next];
                *next += 1;
                let v = t.links()[link].dst;
                match color[v] {
                    0 => {
                        color[v] = 1;
                        parent_link[v] = Some(link);
                        stack.push((v, 0));
                    }
                    1 => {
                        // Cycle: v -> ... -> u -> v.
                        let mut cycle = vec![link];
                        let mut node = u;
                        while node != v {
                            let pl = parent_link[node].expect("path to gray node");
                            cycle.push(pl);
                            node = t.links()[pl].src;
                        }
                        cycle.reverse();
                        return Some(cycle);
                    }
                    _ => {}
                }
            } else {
                color[u] = 2;
                stack.pop();
            }
        }
    }
    None
}

/// For a unique-min-cut network, rebalance the max flow so that no off-cut
/// edge stays saturated. Each extracted path then meets its maximum split
/// probability only at its cut edge, giving a single worst link per path.
fn desaturate_off_cut(
    t: &Topology,
    capacities: &[BigRational],
    edge_flow: &mut [BigRational],
    min_cut_links: &[usize],
) -> bool {
    let mut changed = false;
    let two = BigRational::from_integer(2.into());
    for e in 0..edge_flow.len() {
        if min_cut_links.contains(&e) || edge_flow[e] < capacities[e] || edge_flow[e].is_zero() {
            continue;
        }
        let (from, to) = (t.links()[e].src, t.links()[e].dst);
        if let Some(path) = residual_path(t, capacities, edge_flow, from, to, e) {
            let mut slack = edge_flow[e].clone();
            for &(link, forward) in &path {
                let arc_residual = if forward {
                    capacities[link].clone() - edge_flow[link].clone()
                } else {
                    edge_flow[link].clone()
                };
                slack = slack.min(arc_residual);
            }
            let eps = slack / two.clone();
            if eps.is_zero() {
                continue;
            }
            for &(link, forward) in &path {
                if forward {
                    edge_flow[link] += eps.clone();
                } else {
                    edge_flow[link] -= eps.clone();
                }
            }
            edge_flow[e] -= eps;
            changed = true;
        }
    }
    changed
}

/// BFS a residual path from `from` to `to`, excluding both directions of the
/// edge being desaturated. Arcs are (link, forward?).
fn residual_path(
    t: &Topology,
    capacities: &[BigRational],
    edge_flow: &[BigRational],
    from: usize,
    to: usize,
    excluded: usize,
) -> Option<Vec<(usize, bool)>> {
    let n = t.node_count();
    let mut pred: Vec<Option<(usize, bool)>> = vec![None; n];
    let mut seen = vec![false; n];
    seen[from] = true;
    let mut queue = VecDeque::from([from]);
    while let Some(u) = queue.pop_front() {
        if u == to {
            break;
        }
        for (i, link) in t.links().iter().enumerate() {
            if i == excluded {
                continue;
            }
            if link.src == u && !seen[link.dst] && edge_flow[i] < capacities[i] {
                seen[link.dst] = true;
                pred[link.dst] = Some((i, true));
                queue.push_back(link.dst);
            }
            if link.dst == u && !seen[link.src] && !edge_flow[i].is_zero() {
                seen[link.src] = true;
                pred[link.src] = Some((i, false));
                queue.push_back(link.src);
            }
        }
    }
    if !seen[to] {
        return None;
    }
    let mut path = Vec::new();
    let mut node = to;
    while node != from {
        let (link, forward) = pred[node].expect("recorded");
        path.push((link, forward));
        node = if forward { t.links()[link].src } else { t.links()[link].dst };
    }
    path.reverse();
    Some(path)
}

/// Greedy widest-first path extraction with lexicographic tie-breaking on the
/// node-id sequence. Each pass pulls out the highest achievable bottleneck.
fn extract_paths(t: &Topology, mut edge_flow: Vec<BigRational>) -> Result<Vec<Flow>> {
    let mut flows = Vec::new();
    loop {
        let mut candidates: Vec<BigRational> =
            edge_flow.iter().filter(|f| !f.is_zero()).cloned().collect();
        if candidates.is_empty() {
            return Ok(flows);
        }
        candidates.sort();
        candidates.dedup();
        candidates.reverse();

        let mut extracted = false;
        for level in candidates {
            if let Some((nodes, links)) = lex_min_path(t, &edge_flow, &level) {
                for &l in &links {
                    edge_flow[l] -= level.clone();
                }
                flows.push(Flow { rate: level, nodes, links });
                extracted = true;
                break;
            }
        }
        if !extracted {
            return Err(Error::InvalidTopology(
                "flow is not decomposable into source-sink paths".into(),
            ));
        }
    }
}

/// Lexicographically smallest source-sink path (by node-id sequence, then
/// link id) in the subgraph of links carrying at least `level` flow.
fn lex_min_path(
    t: &Topology,
    edge_flow: &[BigRational],
    level: &BigRational,
) -> Option<(Vec<usize>, Vec<usize>)> {
    let n = t.node_count();
    let keep: Vec<bool> = edge_flow.iter().map(|f| f >= level).collect();
    // Nodes that can still reach the sink inside the subgraph.
    let mut reaches = vec![false; n];
    reaches[t.sink()] = true;
    let mut queue = VecDeque::from([t.sink()]);
    while let Some(v) = queue.pop_front() {
        for (i, link) in t.links().iter().enumerate() {
            if keep[i] && link.dst == v && !reaches[link.src] {
                reaches[link.src] = true;
                queue.push_back(link.src);
            }
        }
    }
    if !reaches[t.source()] {
        return None;
    }
    let mut nodes = vec![t.source()];
    let mut links = Vec::new();
    let mut at = t.source();
    while at != t.sink() {
        let mut best: Option<(usize, usize)> = None; // (link, dst)
        for (i, link) in t.links().iter().enumerate() {
            if keep[i] && link.src == at && reaches[link.dst] && !nodes.contains(&link.dst) {
                let better = match best {
                    None => true,
                    Some((bl, bd)) => {
                        let cand = (t.node_id(link.dst), &t.links()[i].id);
                        let incumbent = (t.node_id(bd), &t.links()[bl].id);
                        cand < incumbent
                    }
                };
                if better {
                    best = Some((i, link.dst));
                }
            }
        }
        let (link, dst) = best?;
        links.push(link);
        nodes.push(dst);
        at = dst;
    }
    Some((nodes, links))
}

/// Build the parallel-path network: one node copy per (node, flow), one split
/// link per (edge, flow) with erasure `1 - (rate/edge_flow)(1 - p)`, and one
/// correlation group per original edge keyed by the edge id so that traces on
/// the two networks couple slot by slot.
pub fn build_ghat(t: &Topology, d: &FlowDecomposition) -> Result<Topology> {
    let source_id = t.node_id(t.source()).to_string();
    let sink_id = t.node_id(t.sink()).to_string();
    let mut nodes = vec![source_id.clone()];
    let mut raw_links: Vec<RawLink> = Vec::new();
    let mut memberships: Vec<(usize, String, BigRational)> = Vec::new(); // (orig link, split id, weight)

    for (fi, flow) in d.flows.iter().enumerate() {
        let tag = fi + 1;
        for (pos, &orig_link) in flow.links.iter().enumerate() {
            let src = if pos == 0 {
                source_id.clone()
            } else {
                format!("{}~f{}", t.node_id(flow.nodes[pos]), tag)
            };
            let dst = if pos + 1 == flow.links.len() {
                sink_id.clone()
            } else {
                let id = format!("{}~f{}", t.node_id(flow.nodes[pos + 1]), tag);
                nodes.push(id.clone());
                id
            };
            let weight = flow.rate.clone() / d.edge_flow[orig_link].clone();
            let p_orig = &t.links()[orig_link].p;
            let p_split =
                BigRational::one() - weight.clone() * (BigRational::one() - p_orig.clone());
            let split_id = format!("{}~f{}", t.links()[orig_link].id, tag);
            memberships.push((orig_link, split_id.clone(), weight));
            raw_links.push(RawLink { id: split_id, src, dst, p: p_split });
        }
    }
    nodes.push(sink_id.clone());

    let mut raw_groups: Vec<RawGroup> = Vec::new();
    for (li, link) in t.links().iter().enumerate() {
        let members: Vec<&(usize, String, BigRational)> =
            memberships.iter().filter(|(orig, _, _)| *orig == li).collect();
        if members.is_empty() {
            continue;
        }
        raw_groups.push(RawGroup {
            id: Some(link.id.clone()),
            base_p: link.p.clone(),
            members: members.iter().map(|(_, id, _)| id.clone()).collect(),
            weights: members.iter().map(|(_, _, w)| w.clone()).collect(),
        });
    }

    Topology::from_parts(nodes, raw_links, raw_groups, &source_id, &sink_id)
}

/// Capacity preservation: for every original edge, the split capacities sum
/// exactly to the original capacity.
pub fn capacity_preserved(t: &Topology, d: &FlowDecomposition, ghat: &Topology) -> bool {
    for (li, link) in t.links().iter().enumerate() {
        if d.edge_flow[li].is_zero() {
            continue;
        }
        let mut split_total = BigRational::zero();
        for g in ghat.links() {
            if g.id.starts_with(&format!("{}~f", link.id)) {
                split_total += BigRational::one() - g.p.clone();
            }
        }
        if split_total != BigRational::one() - link.p.clone() {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::big_ratio;
    use crate::topology::min_cut_capacity as capacity_of;

    fn fig6() -> Topology {
        Topology::from_json_str(
            r#"{
            "nodes": ["s", "a", "t"],
            "links": [
                {"id": "1", "src": "s", "dst": "t", "p": 0.5},
                {"id": "2", "src": "s", "dst": "a", "p": 0.4},
                {"id": "3", "src": "a", "dst": "t", "p": 0.8},
                {"id": "4", "src": "a", "dst": "t", "p": 0.9}
            ],
            "source": "s",
            "sink": "t"
        }"#,
        )
        .unwrap()
    }

    #[test]
    fn fig6_decomposition_rates_and_paths() {
        let t = fig6();
        let d = decompose_max_flow(&t).unwrap();
        assert_eq!(d.capacity, big_ratio(4, 5));
        assert_eq!(d.single_bottleneck, Some(true));
        let rates: Vec<BigRational> = d.flows.iter().map(|f| f.rate.clone()).collect();
        assert_eq!(rates, vec![big_ratio(1, 2), big_ratio(1, 5), big_ratio(1, 10)]);
        // Flow 1 rides the direct link; flows 2 and 3 go through node a.
        assert_eq!(d.flows[0].links, vec![0]);
        assert_eq!(d.flows[1].links, vec![1, 2]);
        assert_eq!(d.flows[2].links, vec![1, 3]);
        assert_eq!(d.flows_through_link(1), vec![1, 2]);
    }

    #[test]
    fn line_decomposes_to_single_flow() {
        let t = Topology::line(&[0.2, 0.5, 0.3]).unwrap();
        let d = decompose_max_flow(&t).unwrap();
        assert_eq!(d.flows.len(), 1);
        assert_eq!(d.flows[0].rate, big_ratio(1, 2));
        assert_eq!(d.flows[0].links, vec![0, 1, 2]);
    }

    #[test]
    fn parallel_paths_decompose_one_flow_per_path() {
        let t = Topology::parallel_paths(&[vec![0.5, 0.2], vec![0.25, 0.1]]).unwrap();
        let d = decompose_max_flow(&t).unwrap();
        assert_eq!(d.flows.len(), 2);
        let mut rates: Vec<BigRational> = d.flows.iter().map(|f| f.rate.clone()).collect();
        rates.sort();
        assert_eq!(rates, vec![big_ratio(1, 2), big_ratio(3, 4)]);
    }

    #[test]
    fn fig6_ghat_split_probabilities() {
        let t = fig6();
        let d = decompose_max_flow(&t).unwrap();
        let ghat = build_ghat(&t, &d).unwrap();
        assert_eq!(ghat.kind().name(), "parallel-paths");
        // Link 2 carries flows of 0.2 and 0.1: splits at 0.6 and 0.8.
        let split1 = ghat.links().iter().find(|l| l.id == "2~f2").unwrap();
        let split2 = ghat.links().iter().find(|l| l.id == "2~f3").unwrap();
        assert_eq!(split1.p, big_ratio(3, 5));
        assert_eq!(split2.p, big_ratio(4, 5));
        let group = ghat.groups().iter().find(|g| g.id == "2").unwrap();
        assert_eq!(group.weights, vec![big_ratio(2, 3), big_ratio(1, 3)]);
        assert_eq!(group.base_p, big_ratio(2, 5));
    }

    #[test]
    fn ghat_preserves_min_cut_exactly() {
        let t = fig6();
        let d = decompose_max_flow(&t).unwrap();
        let ghat = build_ghat(&t, &d).unwrap();
        assert_eq!(capacity_of(&ghat).capacity, big_ratio(4, 5));
        assert!(capacity_preserved(&t, &d, &ghat));
    }

    #[test]
    fn single_flow_edge_gets_trivial_group() {
        let t = Topology::line(&[0.3]).unwrap();
        let d = decompose_max_flow(&t).unwrap();
        let ghat = build_ghat(&t, &d).unwrap();
        assert_eq!(ghat.links().len(), 1);
        assert_eq!(ghat.links()[0].p, big_ratio(3, 10));
        assert_eq!(ghat.groups().len(), 1);
        assert_eq!(ghat.groups()[0].weights, vec![big_ratio(1, 1)]);
    }

    #[test]
    fn desaturation_gives_unique_worst_per_path() {
        // Two parallel s->a links (cap 0.6 each) feeding one a->t link
        // (cap 0.9, the unique min cut). A naive max flow saturates one
        // s->a link; the refinement leaves both strictly under capacity.
        let t = Topology::from_json_str(
            r#"{
            "nodes": ["s", "a", "t"],
            "links": [
                {"id": "e1", "src": "s", "dst": "a", "p": 0.4},
                {"id": "e2", "src": "s", "dst": "a", "p": 0.4},
                {"id": "at", "src": "a", "dst": "t", "p": 0.1}
            ],
            "source": "s",
            "sink": "t"
        }"#,
        )
        .unwrap();
        let d = decompose_max_flow(&t).unwrap();
        assert_eq!(d.single_bottleneck, Some(true));
        assert_eq!(d.capacity, big_ratio(9, 10));
        let ghat = build_ghat(&t, &d).unwrap();
        let report = capacity_of(&ghat);
        assert_eq!(report.capacity, big_ratio(9, 10));
        for worst in &report.per_path {
            assert_eq!(worst.multiplicity, 1, "path {} has tied worst links", worst.path);
        }
        // Every path's worst split must descend from the cut edge "at".
        for path in ghat.paths().unwrap() {
            let (worst_link, _) = path
                .links
                .iter()
                .map(|&l| (l, ghat.link_p_f64(l)))
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            assert!(ghat.links()[worst_link].id.starts_with("at~f"));
        }
    }
}
