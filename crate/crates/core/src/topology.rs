//! Erasure-network topologies: validation, structure detection, capacity.
//!
//! A topology is a directed graph of erasure links between a source and a
//! sink. Each link drops a packet with probability `p` per slot. Links may be
//! tied into correlation groups in which at most one member succeeds per
//! slot; these arise from the parallel-path transformation of a general
//! network but can also be written directly in topology files.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowNetwork;
use crate::rational::{rational_from_f64, rational_to_f64};

/// Absolute tolerance when deciding whether two erasure probabilities tie
/// for "worst link" honors.
pub const WORST_LINK_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct Link {
    pub id: String,
    pub src: usize,
    pub dst: usize,
    /// Per-slot erasure probability, exact.
    pub p: BigRational,
}

/// Links derived from one original edge: at most one member succeeds per
/// slot. `weights[m]` is the conditional probability that member `m` is the
/// successful one, given the slot is not an erasure.
#[derive(Debug, Clone)]
pub struct CorrelationGroup {
    pub id: String,
    pub base_p: BigRational,
    pub members: Vec<usize>,
    pub weights: Vec<BigRational>,
}

/// A source-to-sink chain: `links[j]` goes from `nodes[j]` to `nodes[j + 1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathInfo {
    pub nodes: Vec<usize>,
    pub links: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Kind {
    Line { chain: PathInfo },
    ParallelPaths { paths: Vec<PathInfo> },
    General,
}

impl Kind {
    pub fn name(&self) -> &'static str {
        match self {
            Kind::Line { .. } => "line",
            Kind::ParallelPaths { .. } => "parallel-paths",
            Kind::General => "general",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Topology {
    nodes: Vec<String>,
    links: Vec<Link>,
    groups: Vec<CorrelationGroup>,
    source: usize,
    sink: usize,
    kind: Kind,
    /// For each link, the group it belongs to, if any.
    link_group: Vec<Option<usize>>,
}

/// Per-path summary of the worst link, used to classify bounded vs. sqrt(n)
/// delay regimes.
#[derive(Debug, Clone)]
pub struct PathWorst {
    pub path: usize,
    pub worst_p: f64,
    /// Number of links within [`WORST_LINK_TOLERANCE`] of the path maximum.
    pub multiplicity: usize,
}

#[derive(Debug, Clone)]
pub struct CapacityReport {
    pub capacity: BigRational,
    pub capacity_f64: f64,
    /// One entry per path for line and parallel-paths topologies; empty for
    /// general topologies.
    pub per_path: Vec<PathWorst>,
}

impl Topology {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_id(&self, index: usize) -> &str {
        &self.nodes[index]
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == id)
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn groups(&self) -> &[CorrelationGroup] {
        &self.groups
    }

    pub fn group_of(&self, link: usize) -> Option<usize> {
        self.link_group[link]
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn sink(&self) -> usize {
        self.sink
    }

    pub fn kind(&self) -> &Kind {
        &self.kind
    }

    pub fn link_p_f64(&self, link: usize) -> f64 {
        rational_to_f64(&self.links[link].p)
    }

    /// The chains of a line or parallel-paths topology, source to sink.
    pub fn paths(&self) -> Option<Vec<&PathInfo>> {
        match &self.kind {
            Kind::Line { chain } => Some(vec![chain]),
            Kind::ParallelPaths { paths } => Some(paths.iter().collect()),
            Kind::General => None,
        }
    }

    /// Worst-link erasure probability per path (tolerance-grouped max).
    pub fn path_worst_p(&self) -> Option<Vec<f64>> {
        self.paths().map(|paths| {
            paths
                .iter()
                .map(|path| {
                    path.links
                        .iter()
                        .map(|&l| self.link_p_f64(l))
                        .fold(0.0f64, f64::max)
                })
                .collect()
        })
    }

    /// Line network with the given per-hop erasure probabilities.
    pub fn line(ps: &[f64]) -> Result<Topology> {
        if ps.is_empty() {
            return Err(Error::InvalidTopology("line needs at least one link".into()));
        }
        let nodes: Vec<String> = (0..=ps.len()).map(|i| format!("n{i}")).collect();
        let links = ps
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                Ok(RawLink {
                    id: format!("l{}", i + 1),
                    src: format!("n{i}"),
                    dst: format!("n{}", i + 1),
                    p: probability_from_f64(p)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Topology::from_parts(nodes, links, Vec::new(), "n0", &format!("n{}", ps.len()))
    }

    /// k node-disjoint chains from a shared source to a shared sink.
    pub fn parallel_paths(ps: &[Vec<f64>]) -> Result<Topology> {
        if ps.is_empty() || ps.iter().any(|path| path.is_empty()) {
            return Err(Error::InvalidTopology("each path needs at least one link".into()));
        }
        let mut nodes = vec!["s".to_string()];
        let mut links = Vec::new();
        for (i, path) in ps.iter().enumerate() {
            for (j, &p) in path.iter().enumerate() {
                let src = if j == 0 { "s".to_string() } else { format!("p{}n{}", i + 1, j) };
                let dst = if j + 1 == path.len() {
                    "t".to_string()
                } else {
                    let interior = format!("p{}n{}", i + 1, j + 1);
                    nodes.push(interior.clone());
                    interior
                };
                links.push(RawLink {
                    id: format!("p{}l{}", i + 1, j + 1),
                    src,
                    dst,
                    p: probability_from_f64(p)?,
                });
            }
        }
        nodes.push("t".to_string());
        Topology::from_parts(nodes, links, Vec::new(), "s", "t")
    }

    /// Validate a raw description and infer the structural kind.
    pub fn from_parts(
        node_ids: Vec<String>,
        raw_links: Vec<RawLink>,
        raw_groups: Vec<RawGroup>,
        source: &str,
        sink: &str,
    ) -> Result<Topology> {
        let mut index: BTreeMap<String, usize> = BTreeMap::new();
        for (i, id) in node_ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::InvalidTopology(format!("duplicate node id '{id}'")));
            }
        }
        let source = *index
            .get(source)
            .ok_or_else(|| Error::InvalidTopology(format!("unknown source '{source}'")))?;
        let sink = *index
            .get(sink)
            .ok_or_else(|| Error::InvalidTopology(format!("unknown sink '{sink}'")))?;
        if source == sink {
            return Err(Error::InvalidTopology("source equals sink".into()));
        }

        let mut link_ids: BTreeSet<String> = BTreeSet::new();
        let mut links = Vec::with_capacity(raw_links.len());
        for raw in raw_links {
            if !link_ids.insert(raw.id.clone()) {
                return Err(Error::InvalidTopology(format!("duplicate link id '{}'", raw.id)));
            }
            let src = *index
                .get(&raw.src)
                .ok_or_else(|| Error::InvalidTopology(format!("link '{}': unknown node '{}'", raw.id, raw.src)))?;
            let dst = *index
                .get(&raw.dst)
                .ok_or_else(|| Error::InvalidTopology(format!("link '{}': unknown node '{}'", raw.id, raw.dst)))?;
            check_probability(&raw.p, &raw.id)?;
            links.push(Link { id: raw.id, src, dst, p: raw.p });
        }

        let link_index: BTreeMap<String, usize> =
            links.iter().enumerate().map(|(i, l)| (l.id.clone(), i)).collect();

        let mut link_group: Vec<Option<usize>> = vec![None; links.len()];
        let mut group_ids: BTreeSet<String> = BTreeSet::new();
        let mut groups = Vec::with_capacity(raw_groups.len());
        let tolerance = BigRational::new(1.into(), num_bigint::BigInt::from(10u64.pow(12)));
        for (gi, raw) in raw_groups.into_iter().enumerate() {
            let id = raw
                .id
                .or_else(|| raw.members.first().cloned())
                .ok_or_else(|| Error::InvalidGroup("group has no members".into()))?;
            if !group_ids.insert(id.clone()) {
                return Err(Error::InvalidGroup(format!("duplicate group id '{id}'")));
            }
            if raw.members.is_empty() {
                return Err(Error::InvalidGroup(format!("group '{id}' has no members")));
            }
            if raw.members.len() != raw.weights.len() {
                return Err(Error::InvalidGroup(format!(
                    "group '{id}': {} members but {} weights",
                    raw.members.len(),
                    raw.weights.len()
                )));
            }
            check_probability(&raw.base_p, &id)?;
            let mut members = Vec::with_capacity(raw.members.len());
            for m in &raw.members {
                let li = *link_index
                    .get(m)
                    .ok_or_else(|| Error::InvalidGroup(format!("group '{id}': unknown link '{m}'")))?;
                if link_group[li].is_some() {
                    return Err(Error::InvalidGroup(format!("link '{m}' belongs to two groups")));
                }
                link_group[li] = Some(gi);
                members.push(li);
            }
            let mut sum = BigRational::zero();
            for w in &raw.weights {
                if *w <= BigRational::zero() {
                    return Err(Error::InvalidGroup(format!("group '{id}': weights must be positive")));
                }
                sum += w.clone();
            }
            if (sum - BigRational::one()).abs() > tolerance {
                return Err(Error::InvalidGroup(format!("group '{id}': weights must sum to 1")));
            }
            groups.push(CorrelationGroup { id, base_p: raw.base_p, members, weights: raw.weights });
        }

        // A non-member link whose id collides with a group id would share the
        // group's random draws; reject the ambiguity.
        for (li, link) in links.iter().enumerate() {
            if link_group[li].is_none() && group_ids.contains(&link.id) {
                return Err(Error::InvalidTopology(format!(
                    "link id '{}' collides with a group id",
                    link.id
                )));
            }
        }

        // Member links must carry the marginal implied by the group draw:
        // p = 1 - weight * (1 - base_p). Snap to the exact value so capacity
        // arithmetic downstream stays exact.
        let snap_tolerance = BigRational::new(1.into(), num_bigint::BigInt::from(10u64.pow(9)));
        for group in &groups {
            let success = BigRational::one() - group.base_p.clone();
            for (pos, &li) in group.members.iter().enumerate() {
                let implied = BigRational::one() - group.weights[pos].clone() * success.clone();
                if (links[li].p.clone() - implied.clone()).abs() > snap_tolerance {
                    return Err(Error::InvalidGroup(format!(
                        "link '{}' marginal disagrees with its group (expected {})",
                        links[li].id,
                        rational_to_f64(&implied)
                    )));
                }
                links[li].p = implied;
            }
        }

        let reachable = reachable_from(node_ids.len(), &links, source);
        if !reachable[sink] {
            return Err(Error::InvalidTopology("sink unreachable from source".into()));
        }

        let kind = detect_kind(node_ids.len(), &links, source, sink);
        Ok(Topology { nodes: node_ids, links, groups, source, sink, kind, link_group })
    }

    pub fn from_json_str(text: &str) -> Result<Topology> {
        let file: TopologyFile = serde_json::from_str(text)
            .map_err(|e| Error::InvalidTopology(format!("malformed topology JSON: {e}")))?;
        file.into_topology()
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        let file = TopologyFile {
            nodes: self.nodes.clone(),
            links: self
                .links
                .iter()
                .map(|l| LinkFile {
                    id: l.id.clone(),
                    src: self.nodes[l.src].clone(),
                    dst: self.nodes[l.dst].clone(),
                    p: rational_to_f64(&l.p),
                })
                .collect(),
            groups: self
                .groups
                .iter()
                .map(|g| GroupFile {
                    id: Some(g.id.clone()),
                    base_p: rational_to_f64(&g.base_p),
                    members: g.members.iter().map(|&m| self.links[m].id.clone()).collect(),
                    weights: g.weights.iter().map(rational_to_f64).collect(),
                })
                .collect(),
            source: self.nodes[self.source].clone(),
            sink: self.nodes[self.sink].clone(),
        };
        serde_json::to_value(file).expect("topology serializes")
    }
}

/// Min-cut capacity between source and sink over link capacities `1 - p`,
/// with the per-path worst-link report for structured topologies.
pub fn min_cut_capacity(t: &Topology) -> CapacityReport {
    let mut net = FlowNetwork::new(t.node_count());
    for link in t.links() {
        net.add_edge(link.src, link.dst, BigRational::one() - link.p.clone());
    }
    let capacity = net.max_flow(t.source(), t.sink());
    let per_path = match t.paths() {
        Some(paths) => paths
            .iter()
            .enumerate()
            .map(|(i, path)| {
                let ps: Vec<f64> = path.links.iter().map(|&l| t.link_p_f64(l)).collect();
                let worst = ps.iter().fold(0.0f64, |a, &b| a.max(b));
                let multiplicity =
                    ps.iter().filter(|&&p| (worst - p).abs() <= WORST_LINK_TOLERANCE).count();
                PathWorst { path: i, worst_p: worst, multiplicity }
            })
            .collect(),
        None => Vec::new(),
    };
    let capacity_f64 = rational_to_f64(&capacity);
    CapacityReport { capacity, capacity_f64, per_path }
}

fn reachable_from(node_count: usize, links: &[Link], start: usize) -> Vec<bool> {
    let mut seen = vec![false; node_count];
    seen[start] = true;
    let mut queue = VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        for link in links {
            if link.src == u && !seen[link.dst] {
                seen[link.dst] = true;
                queue.push_back(link.dst);
            }
        }
    }
    seen
}

fn detect_kind(node_count: usize, links: &[Link], source: usize, sink: usize) -> Kind {
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); node_count];
    let mut inc: Vec<Vec<usize>> = vec![Vec::new(); node_count];
    for (i, link) in links.iter().enumerate() {
        out[link.src].push(i);
        inc[link.dst].push(i);
    }

    let follow_chain = |first_link: usize| -> Option<PathInfo> {
        let mut nodes = vec![links[first_link].src];
        let mut path_links = vec![first_link];
        let mut at = links[first_link].dst;
        loop {
            nodes.push(at);
            if at == sink {
                return Some(PathInfo { nodes, links: path_links });
            }
            // Interior node of a chain: exactly one in, one out.
            if inc[at].len() != 1 || out[at].len() != 1 || at == source {
                return None;
            }
            let next = out[at][0];
            path_links.push(next);
            at = links[next].dst;
            if nodes.contains(&at) && at != sink {
                return None;
            }
        }
    };

    if !inc[source].is_empty() || !out[sink].is_empty() {
        return Kind::General;
    }

    if out[source].len() == 1 {
        if let Some(chain) = follow_chain(out[source][0]) {
            let covered_links = chain.links.len() == links.len();
            let covered_nodes = chain.nodes.len() == node_count;
            if covered_links && covered_nodes {
                return Kind::Line { chain };
            }
        }
        return Kind::General;
    }

    let mut paths = Vec::new();
    let mut seen_interior: BTreeSet<usize> = BTreeSet::new();
    for &first in &out[source] {
        match follow_chain(first) {
            Some(path) => {
                for &v in &path.nodes[1..path.nodes.len() - 1] {
                    if !seen_interior.insert(v) {
                        return Kind::General;
                    }
                }
                paths.push(path);
            }
            None => return Kind::General,
        }
    }
    let total_links: usize = paths.iter().map(|p| p.links.len()).sum();
    let total_interior: usize = paths.iter().map(|p| p.nodes.len() - 2).sum();
    if total_links == links.len() && total_interior + 2 == node_count && paths.len() >= 2 {
        Kind::ParallelPaths { paths }
    } else {
        Kind::General
    }
}

fn check_probability(p: &BigRational, what: &str) -> Result<()> {
    if *p < BigRational::zero() {
        return Err(Error::InvalidProbability(format!("'{what}': p < 0")));
    }
    if *p >= BigRational::one() {
        return Err(Error::InvalidProbability(format!(
            "'{what}': link fails with probability 1"
        )));
    }
    Ok(())
}

pub fn probability_from_f64(p: f64) -> Result<BigRational> {
    rational_from_f64(p).ok_or_else(|| Error::InvalidProbability(format!("{p} is not finite")))
}

/// Raw link description prior to validation.
pub struct RawLink {
    pub id: String,
    pub src: String,
    pub dst: String,
    pub p: BigRational,
}

/// Raw correlation-group description prior to validation. A missing id
/// defaults to the first member's id.
pub struct RawGroup {
    pub id: Option<String>,
    pub base_p: BigRational,
    pub members: Vec<String>,
    pub weights: Vec<BigRational>,
}

#[derive(Serialize, Deserialize)]
struct TopologyFile {
    nodes: Vec<String>,
    links: Vec<LinkFile>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    groups: Vec<GroupFile>,
    source: String,
    sink: String,
}

#[derive(Serialize, Deserialize)]
struct LinkFile {
    id: String,
    src: String,
    dst: String,
    p: f64,
}

#[derive(Serialize, Deserialize)]
struct GroupFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    base_p: f64,
    members: Vec<String>,
    weights: Vec<f64>,
}

impl TopologyFile {
    fn into_topology(self) -> Result<Topology> {
        let links = self
            .links
            .into_iter()
            .map(|l| {
                Ok(RawLink {
                    p: probability_from_f64(l.p)?,
                    id: l.id,
                    src: l.src,
                    dst: l.dst,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let groups = self
            .groups
            .into_iter()
            .map(|g| {
                Ok(RawGroup {
                    base_p: probability_from_f64(g.base_p)?,
                    weights: g
                        .weights
                        .iter()
                        .map(|&w| {
                            rational_from_f64(w).ok_or_else(|| {
                                Error::InvalidGroup(format!("weight {w} is not finite"))
                            })
                        })
                        .collect::<Result<Vec<_>>>()?,
                    id: g.id,
                    members: g.members,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Topology::from_parts(self.nodes, links, groups, &self.source, &self.sink)
    }
}
