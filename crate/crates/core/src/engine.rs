//! Discrete-time transmission engines over reproducible erasure traces.
//!
//! Slot semantics are store-and-forward: every link acts on start-of-slot
//! state simultaneously, and updates commit at slot end, so a packet received
//! in slot `t` becomes transmittable at the next hop in slot `t + 1`.

use num_traits::ToPrimitive;

use crate::analytics::allocate_routing;
use crate::error::{Error, Result};
use crate::rng::{stable_key, unit_uniform};
use crate::topology::{min_cut_capacity, Topology};

/// Identifies the deterministic randomness stream of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedProvenance {
    pub master_seed: u64,
    pub trial: u64,
}

/// One random channel per independent link or correlation group. Group draws
/// are a single categorical variate: the member whose cumulative interval
/// contains `u` succeeds, and all members fail when `u >= 1 - base_p`. Keying
/// a group by its id makes traces couple with an original topology whose link
/// carries the same id.
#[derive(Debug, Clone)]
enum Channel {
    Independent { link: usize, key: u64, success_below: f64 },
    Group { key: u64, members: Vec<usize>, upper: Vec<f64> },
}

/// A per-slot, per-link success/failure realization, extendable in horizon
/// without perturbing earlier slots.
#[derive(Debug, Clone)]
pub struct ErasureTrace {
    seed: SeedProvenance,
    num_links: usize,
    horizon: u64,
    /// Slot-major: `outcomes[slot * num_links + link]`.
    outcomes: Vec<bool>,
    /// `None` for hand-written traces, which cannot be extended.
    channels: Option<Vec<Channel>>,
}

impl ErasureTrace {
    pub fn generate(t: &Topology, horizon: u64, master_seed: u64, trial: u64) -> ErasureTrace {
        let mut channels = Vec::new();
        for (i, link) in t.links().iter().enumerate() {
            if t.group_of(i).is_none() {
                channels.push(Channel::Independent {
                    link: i,
                    key: stable_key(&link.id),
                    success_below: 1.0 - t.link_p_f64(i),
                });
            }
        }
        for group in t.groups() {
            let success = num_rational::BigRational::from_integer(1.into()) - group.base_p.clone();
            let mut cumulative = num_rational::BigRational::from_integer(0.into());
            let mut upper = Vec::with_capacity(group.members.len());
            for w in &group.weights {
                cumulative += w.clone();
                upper.push(crate::rational::rational_to_f64(&(cumulative.clone() * success.clone())));
            }
            channels.push(Channel::Group {
                key: stable_key(&group.id),
                members: group.members.clone(),
                upper,
            });
        }
        let mut trace = ErasureTrace {
            seed: SeedProvenance { master_seed, trial },
            num_links: t.links().len(),
            horizon: 0,
            outcomes: Vec::new(),
            channels: Some(channels),
        };
        trace.extend_to(horizon);
        trace
    }

    /// Build a hand-written trace; `slots[s][l]` is the outcome of link `l`
    /// in slot `s`. Such traces cannot be extended.
    pub fn fixed(num_links: usize, slots: Vec<Vec<bool>>) -> ErasureTrace {
        let horizon = slots.len() as u64;
        let mut outcomes = Vec::with_capacity(slots.len() * num_links);
        for row in &slots {
            assert_eq!(row.len(), num_links);
            outcomes.extend_from_slice(row);
        }
        ErasureTrace {
            seed: SeedProvenance { master_seed: 0, trial: 0 },
            num_links,
            horizon,
            outcomes,
            channels: None,
        }
    }

    pub fn seed(&self) -> SeedProvenance {
        self.seed
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn num_links(&self) -> usize {
        self.num_links
    }

    #[inline]
    pub fn success(&self, slot: u64, link: usize) -> bool {
        debug_assert!(slot < self.horizon);
        self.outcomes[slot as usize * self.num_links + link]
    }

    /// Invert one (slot, link) entry; used by perturbation checks.
    pub fn flip(&mut self, slot: u64, link: usize) {
        let idx = slot as usize * self.num_links + link;
        self.outcomes[idx] = !self.outcomes[idx];
    }

    /// Grow the horizon at least to `slots`, doubling to amortize regrowth.
    pub fn ensure(&mut self, slots: u64) -> Result<()> {
        if slots <= self.horizon {
            return Ok(());
        }
        if self.channels.is_none() {
            return Err(Error::HorizonExhausted(format!(
                "fixed trace of {} slots cannot be extended to {}",
                self.horizon, slots
            )));
        }
        self.extend_to(slots.max(self.horizon * 2));
        Ok(())
    }

    fn extend_to(&mut self, horizon: u64) {
        let channels = self.channels.as_ref().expect("generated trace");
        let SeedProvenance { master_seed, trial } = self.seed;
        self.outcomes.resize(horizon as usize * self.num_links, false);
        for slot in self.horizon..horizon {
            let base = slot as usize * self.num_links;
            for channel in channels {
                match channel {
                    Channel::Independent { link, key, success_below } => {
                        let u = unit_uniform(master_seed, trial, slot, *key);
                        self.outcomes[base + link] = u < *success_below;
                    }
                    Channel::Group { key, members, upper } => {
                        let u = unit_uniform(master_seed, trial, slot, *key);
                        for (pos, &member) in members.iter().enumerate() {
                            if u < upper[pos] {
                                self.outcomes[base + member] = true;
                                break;
                            }
                        }
                    }
                }
            }
        }
        self.horizon = horizon;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    CodingQueue,
    CodingMaxflow,
    Routing,
}

impl Strategy {
    pub fn label(&self) -> &'static str {
        match self {
            Strategy::CodingQueue => "coding-queue",
            Strategy::CodingMaxflow => "coding-maxflow",
            Strategy::Routing => "routing",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub completion_slot: u64,
    pub strategy: Strategy,
    /// Sink innovative count after each slot, when recorded.
    pub rank_history: Option<Vec<u64>>,
    /// Peak interior-buffer occupancy under routing; buffers are unbounded
    /// and never throttle, this is purely diagnostic.
    pub max_buffer_occupancy: Option<u64>,
}

/// Hard stop for pathological parameters; completion is almost sure long
/// before this on any valid topology.
const SLOT_CAP: u64 = 10_000_000;

/// One slot of innovative-count evolution along a chain. `ranks[0]` is the
/// upstream feeder (left unchanged), `successes[j]` drives the link from
/// position `j` to `j + 1`. Processing right-to-left applies every link to
/// start-of-slot state without a scratch copy.
pub fn line_coding_step(ranks: &mut [u64], successes: &[bool]) {
    debug_assert_eq!(ranks.len(), successes.len() + 1);
    for j in (1..ranks.len()).rev() {
        if successes[j - 1] && ranks[j - 1] > ranks[j] {
            ranks[j] += 1;
        }
    }
}

/// Queue-rank coding engine for line and parallel-paths topologies.
///
/// Within each chain the innovative counts evolve as a tandem queue; the last
/// entry of each chain counts packets delivered to the sink through that
/// path. Completion is the first slot at which the sink holds `n` innovative
/// packets in total.
pub fn simulate_coding_queue(t: &Topology, n: u64, trace: &mut ErasureTrace) -> Result<SimOutcome> {
    let paths = t.paths().ok_or_else(|| {
        Error::UnsupportedTopology("queue-rank engine needs a line or parallel-paths topology".into())
    })?;
    if n == 0 {
        return Ok(SimOutcome {
            completion_slot: 0,
            strategy: Strategy::CodingQueue,
            rank_history: None,
            max_buffer_occupancy: None,
        });
    }
    let mut ranks: Vec<Vec<u64>> = paths
        .iter()
        .map(|path| {
            let mut r = vec![0u64; path.links.len() + 1];
            r[0] = n;
            r
        })
        .collect();
    let mut successes: Vec<Vec<bool>> = paths.iter().map(|p| vec![false; p.links.len()]).collect();

    for slot in 0..SLOT_CAP {
        trace.ensure(slot + 1)?;
        for (pi, path) in paths.iter().enumerate() {
            for (j, &link) in path.links.iter().enumerate() {
                successes[pi][j] = trace.success(slot, link);
            }
            line_coding_step(&mut ranks[pi], &successes[pi]);
        }
        let delivered: u64 = ranks.iter().map(|r| *r.last().unwrap()).sum();
        if delivered >= n {
            return Ok(SimOutcome {
                completion_slot: slot + 1,
                strategy: Strategy::CodingQueue,
                rank_history: None,
                max_buffer_occupancy: None,
            });
        }
    }
    Err(Error::HorizonExhausted(format!("no completion within {SLOT_CAP} slots")))
}

/// Incremental max flow on the time-expanded graph. Memory edges
/// `(v, i) -> (v, i + 1)` carry up to `n` units, transmission edges carry one
/// unit per successful slot, and the flow from the previous horizon is reused
/// when advancing.
struct TimeExpanded<'a> {
    topo: &'a Topology,
    n_cap: u64,
    out_links: Vec<Vec<usize>>,
    in_links: Vec<Vec<usize>>,
    /// mem[v][i]: units on the memory edge (v, i) -> (v, i + 1).
    mem: Vec<Vec<u64>>,
    /// used[i][l]: transmission edge of link l at slot i carries a unit.
    used: Vec<Vec<bool>>,
    horizon: u64,
    flow: u64,
}

impl<'a> TimeExpanded<'a> {
    fn new(topo: &'a Topology, n_cap: u64) -> Self {
        let v = topo.node_count();
        let mut out_links = vec![Vec::new(); v];
        let mut in_links = vec![Vec::new(); v];
        for (i, link) in topo.links().iter().enumerate() {
            out_links[link.src].push(i);
            in_links[link.dst].push(i);
        }
        TimeExpanded {
            topo,
            n_cap,
            out_links,
            in_links,
            mem: vec![Vec::new(); v],
            used: Vec::new(),
            horizon: 0,
            flow: 0,
        }
    }

    /// Extend the horizon by one slot and saturate augmenting paths.
    /// Returns the flow value, i.e. the sink rank after `horizon` slots.
    fn advance(&mut self, trace: &ErasureTrace) -> u64 {
        let sink = self.topo.sink();
        for v in 0..self.mem.len() {
            self.mem[v].push(0);
        }
        // Existing units ride the sink memory edge into the new final layer.
        self.mem[sink][self.horizon as usize] = self.flow;
        self.used.push(vec![false; self.topo.links().len()]);
        self.horizon += 1;

        while self.flow < self.n_cap && self.augment(trace) {
            self.flow += 1;
        }
        self.flow
    }

    /// BFS one unit of residual capacity from (source, 0) to (sink, horizon).
    fn augment(&mut self, trace: &ErasureTrace) -> bool {
        let v_count = self.topo.node_count();
        let layers = self.horizon as usize + 1;
        let total = layers * v_count;
        let idx = |time: usize, node: usize| time * v_count + node;
        let start = idx(0, self.topo.source());
        let goal = idx(self.horizon as usize, self.topo.sink());

        // Parent arc per visited state: (prev_state, arc), where arc encodes
        // how we got here for the augmentation pass.
        #[derive(Clone, Copy)]
        enum Arc {
            MemFwd,
            MemBwd,
            TransFwd(usize),
            TransBwd(usize),
        }
        let mut parent: Vec<Option<(usize, Arc)>> = vec![None; total];
        let mut seen = vec![false; total];
        seen[start] = true;
        let mut queue = std::collections::VecDeque::from([start]);
        let links = self.topo.links();

        'search: while let Some(state) = queue.pop_front() {
            let time = state / v_count;
            let node = state % v_count;
            let push = |next: usize,
                            arc: Arc,
                            seen: &mut Vec<bool>,
                            parent: &mut Vec<Option<(usize, Arc)>>,
                            queue: &mut std::collections::VecDeque<usize>|
             -> bool {
                if !seen[next] {
                    seen[next] = true;
                    parent[next] = Some((state, arc));
                    queue.push_back(next);
                    next == goal
                } else {
                    false
                }
            };
            if time + 1 < layers
                && self.mem[node][time] < self.n_cap
                && push(idx(time + 1, node), Arc::MemFwd, &mut seen, &mut parent, &mut queue)
            {
                break 'search;
            }
            if time > 0
                && self.mem[node][time - 1] > 0
                && push(idx(time - 1, node), Arc::MemBwd, &mut seen, &mut parent, &mut queue)
            {
                break 'search;
            }
            if time + 1 < layers {
                for &l in &self.out_links[node] {
                    if trace.success(time as u64, l)
                        && !self.used[time][l]
                        && push(idx(time + 1, links[l].dst), Arc::TransFwd(l), &mut seen, &mut parent, &mut queue)
                    {
                        break 'search;
                    }
                }
            }
            if time > 0 {
                for &l in &self.in_links[node] {
                    if trace.success(time as u64 - 1, l)
                        && self.used[time - 1][l]
                        && push(idx(time - 1, links[l].src), Arc::TransBwd(l), &mut seen, &mut parent, &mut queue)
                    {
                        break 'search;
                    }
                }
            }
        }

        if !seen[goal] {
            return false;
        }
        // Walk the path backward, committing unit updates.
        let mut state = goal;
        while state != start {
            let (prev, arc) = parent[state].expect("path recorded");
            let prev_time = prev / v_count;
            let prev_node = prev % v_count;
            match arc {
                Arc::MemFwd => self.mem[prev_node][prev_time] += 1,
                Arc::MemBwd => self.mem[prev_node][prev_time - 1] -= 1,
                Arc::TransFwd(l) => self.used[prev_time][l] = true,
                Arc::TransBwd(l) => self.used[prev_time - 1][l] = false,
            }
            state = prev;
        }
        true
    }
}

/// Oracle coding engine: sink rank as a time-expanded max flow, valid on any
/// topology including cyclic ones.
pub fn simulate_coding_maxflow(t: &Topology, n: u64, trace: &mut ErasureTrace) -> Result<SimOutcome> {
    if n == 0 {
        return Ok(SimOutcome {
            completion_slot: 0,
            strategy: Strategy::CodingMaxflow,
            rank_history: None,
            max_buffer_occupancy: None,
        });
    }
    let mut expanded = TimeExpanded::new(t, n);
    for slot in 0..SLOT_CAP {
        trace.ensure(slot + 1)?;
        let rank = expanded.advance(trace);
        if rank >= n {
            return Ok(SimOutcome {
                completion_slot: slot + 1,
                strategy: Strategy::CodingMaxflow,
                rank_history: None,
                max_buffer_occupancy: None,
            });
        }
    }
    Err(Error::HorizonExhausted(format!("no completion within {SLOT_CAP} slots")))
}

/// Sink innovative count R_t for t = 1..=horizon, via the max-flow engine
/// with rank capped at `n_cap`.
pub fn coding_rank_series(
    t: &Topology,
    n_cap: u64,
    trace: &mut ErasureTrace,
    horizon: u64,
) -> Result<Vec<u64>> {
    trace.ensure(horizon)?;
    let mut expanded = TimeExpanded::new(t, n_cap);
    let mut series = Vec::with_capacity(horizon as usize);
    for _ in 0..horizon {
        series.push(expanded.advance(trace));
    }
    Ok(series)
}

/// Hop-by-hop ARQ with a fixed per-path allocation: single-copy FIFO buffers,
/// instantaneous per-hop feedback, head-of-line retransmission until success.
pub fn simulate_routing(t: &Topology, allocation: &[u64], trace: &mut ErasureTrace) -> Result<SimOutcome> {
    let paths = t.paths().ok_or_else(|| {
        Error::UnsupportedTopology("routing needs a line or parallel-paths topology".into())
    })?;
    if allocation.len() != paths.len() {
        return Err(Error::AllocationMismatch(format!(
            "{} paths but {} allocation entries",
            paths.len(),
            allocation.len()
        )));
    }
    let n: u64 = allocation.iter().sum();
    if n == 0 {
        return Ok(SimOutcome {
            completion_slot: 0,
            strategy: Strategy::Routing,
            rank_history: None,
            max_buffer_occupancy: Some(0),
        });
    }
    // Per path: packets still at the source, interior buffer occupancy,
    // delivered count -- one slot queue identical in shape to the coding
    // engine, except the feeder is the finite allocation.
    let mut state: Vec<Vec<u64>> = paths
        .iter()
        .zip(allocation)
        .map(|(path, &alloc)| {
            let mut s = vec![0u64; path.links.len() + 1];
            s[0] = alloc;
            s
        })
        .collect();

    let mut max_occupancy = 0u64;
    for slot in 0..SLOT_CAP {
        trace.ensure(slot + 1)?;
        for (pi, path) in paths.iter().enumerate() {
            let s = &mut state[pi];
            // Right-to-left, so every hop sees start-of-slot occupancy.
            for j in (1..s.len()).rev() {
                if trace.success(slot, path.links[j - 1]) && s[j - 1] > 0 {
                    s[j - 1] -= 1;
                    s[j] += 1;
                }
            }
            for &occupancy in &s[1..s.len() - 1] {
                max_occupancy = max_occupancy.max(occupancy);
            }
        }
        let done = state
            .iter()
            .zip(allocation)
            .all(|(s, &alloc)| *s.last().unwrap() >= alloc);
        if done {
            return Ok(SimOutcome {
                completion_slot: slot + 1,
                strategy: Strategy::Routing,
                rank_history: None,
                max_buffer_occupancy: Some(max_occupancy),
            });
        }
    }
    Err(Error::HorizonExhausted(format!("no completion within {SLOT_CAP} slots")))
}

/// Monte Carlo summary of completion slots for one strategy.
#[derive(Debug, Clone)]
pub struct DelayEstimate {
    pub strategy: Strategy,
    pub n: u64,
    pub trials: u64,
    pub master_seed: u64,
    pub mean: f64,
    pub variance: f64,
    pub ci_halfwidth: f64,
    pub capacity: f64,
    /// n / C.
    pub capacity_term: f64,
    /// mean - n / C, the empirical delay function.
    pub delay_function: f64,
}

const Z_95: f64 = 1.959_963_984_540_054;

fn starting_horizon(t: &Topology, n: u64) -> u64 {
    let capacity = min_cut_capacity(t).capacity_f64.max(1e-9);
    ((n as f64 / capacity) * 1.3) as u64 + 16
}

fn run_single(t: &Topology, n: u64, strategy: Strategy, allocation: &[u64], trace: &mut ErasureTrace) -> Result<u64> {
    let outcome = match strategy {
        Strategy::CodingQueue => simulate_coding_queue(t, n, trace)?,
        Strategy::CodingMaxflow => simulate_coding_maxflow(t, n, trace)?,
        Strategy::Routing => simulate_routing(t, allocation, trace)?,
    };
    Ok(outcome.completion_slot)
}

/// Completion slots for `trials` independent trial indices, in trial order.
/// Results are identical for any worker count; trials are chunked across
/// threads and reassembled by index.
pub fn completion_samples(
    t: &Topology,
    n: u64,
    strategy: Strategy,
    trials: u64,
    master_seed: u64,
    workers: usize,
) -> Result<Vec<u64>> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be >= 1".into()));
    }
    let allocation: Vec<u64> = if strategy == Strategy::Routing {
        let worst = t.path_worst_p().ok_or_else(|| {
            Error::UnsupportedTopology("routing needs a line or parallel-paths topology".into())
        })?;
        allocate_routing(n, &worst)?
    } else {
        Vec::new()
    };
    let horizon = starting_horizon(t, n);
    let workers = workers.max(1).min(trials as usize);

    if workers == 1 {
        let mut out = Vec::with_capacity(trials as usize);
        for trial in 0..trials {
            let mut trace = ErasureTrace::generate(t, horizon, master_seed, trial);
            out.push(run_single(t, n, strategy, &allocation, &mut trace)?);
        }
        return Ok(out);
    }

    let chunk = trials.div_ceil(workers as u64);
    let mut results: Vec<Result<Vec<u64>>> = Vec::new();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for w in 0..workers as u64 {
            let lo = w * chunk;
            let hi = ((w + 1) * chunk).min(trials);
            if lo >= hi {
                break;
            }
            let allocation = &allocation;
            handles.push(scope.spawn(move || -> Result<Vec<u64>> {
                let mut out = Vec::with_capacity((hi - lo) as usize);
                for trial in lo..hi {
                    let mut trace = ErasureTrace::generate(t, horizon, master_seed, trial);
                    out.push(run_single(t, n, strategy, allocation, &mut trace)?);
                }
                Ok(out)
            }));
        }
        for handle in handles {
            results.push(handle.join().expect("worker panicked"));
        }
    });
    let mut out = Vec::with_capacity(trials as usize);
    for chunk_result in results {
        out.extend(chunk_result?);
    }
    Ok(out)
}

/// Run `trials` trials and aggregate mean, unbiased variance, and the normal
/// 95% confidence interval; deterministic given the master seed.
pub fn monte_carlo(
    t: &Topology,
    n: u64,
    strategy: Strategy,
    trials: u64,
    master_seed: u64,
    workers: usize,
) -> Result<DelayEstimate> {
    let samples = completion_samples(t, n, strategy, trials, master_seed, workers)?;
    let capacity = min_cut_capacity(t).capacity_f64;
    Ok(summarize(&samples, strategy, n, master_seed, capacity))
}

pub fn summarize(samples: &[u64], strategy: Strategy, n: u64, master_seed: u64, capacity: f64) -> DelayEstimate {
    let trials = samples.len() as u64;
    let sum: u128 = samples.iter().map(|&x| u128::from(x)).sum();
    let mean = sum as f64 / trials as f64;
    let variance = if trials <= 1 {
        0.0
    } else {
        let ss: f64 = samples
            .iter()
            .map(|&x| {
                let d = x as f64 - mean;
                d * d
            })
            .sum();
        ss / (trials as f64 - 1.0)
    };
    let ci_halfwidth = Z_95 * (variance / trials as f64).sqrt();
    let capacity_term = n as f64 / capacity;
    DelayEstimate {
        strategy,
        n,
        trials,
        master_seed,
        mean,
        variance,
        ci_halfwidth,
        capacity,
        capacity_term,
        delay_function: mean - capacity_term,
    }
}

/// Per-link empirical success frequency over the trace horizon.
pub fn success_frequencies(trace: &ErasureTrace) -> Vec<f64> {
    let mut counts = vec![0u64; trace.num_links()];
    for slot in 0..trace.horizon() {
        for (link, count) in counts.iter_mut().enumerate() {
            if trace.success(slot, link) {
                *count += 1;
            }
        }
    }
    counts.iter().map(|&c| c as f64 / trace.horizon() as f64).collect()
}

impl ErasureTrace {
    /// Number of slots where more than one member of any group succeeded;
    /// must be zero by construction.
    pub fn group_violations(&self, t: &Topology) -> u64 {
        let mut violations = 0;
        for slot in 0..self.horizon {
            for group in t.groups() {
                let winners = group.members.iter().filter(|&&m| self.success(slot, m)).count();
                if winners > 1 {
                    violations += 1;
                }
            }
        }
        violations
    }
}

pub fn capacity_f64(t: &Topology) -> f64 {
    min_cut_capacity(t).capacity_f64
}

/// n / C as f64, using the exact rational capacity.
pub fn capacity_term(t: &Topology, n: u64) -> f64 {
    let report = min_cut_capacity(t);
    let num = num_rational::BigRational::from_integer(n.into()) / report.capacity;
    num.to_f64().expect("finite")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::Topology;

    fn all_success_trace(t: &Topology, horizon: u64) -> ErasureTrace {
        let rows = vec![vec![true; t.links().len()]; horizon as usize];
        ErasureTrace::fixed(t.links().len(), rows)
    }

    #[test]
    fn trace_generation_is_deterministic() {
        let t = Topology::line(&[0.3, 0.6]).unwrap();
        let a = ErasureTrace::generate(&t, 500, 42, 7);
        let b = ErasureTrace::generate(&t, 500, 42, 7);
        for slot in 0..500 {
            for link in 0..2 {
                assert_eq!(a.success(slot, link), b.success(slot, link));
            }
        }
    }

    #[test]
    fn trace_extension_preserves_prefix() {
        let t = Topology::line(&[0.3, 0.6]).unwrap();
        let short = ErasureTrace::generate(&t, 100, 9, 3);
        let long = ErasureTrace::generate(&t, 1000, 9, 3);
        let mut grown = ErasureTrace::generate(&t, 100, 9, 3);
        grown.ensure(1000).unwrap();
        for slot in 0..1000 {
            for link in 0..2 {
                assert_eq!(grown.success(slot, link), long.success(slot, link));
                if slot < 100 {
                    assert_eq!(short.success(slot, link), long.success(slot, link));
                }
            }
        }
    }

    #[test]
    fn zero_erasure_link_always_succeeds() {
        let t = Topology::line(&[0.0]).unwrap();
        let trace = ErasureTrace::generate(&t, 10_000, 5, 0);
        assert!((0..10_000).all(|s| trace.success(s, 0)));
    }

    #[test]
    fn group_draw_marginals_and_exclusivity() {
        let json = r#"{
            "nodes": ["s", "t"],
            "links": [
                {"id": "a", "src": "s", "dst": "t", "p": 0.6},
                {"id": "b", "src": "s", "dst": "t", "p": 0.8}
            ],
            "groups": [{"id": "g", "base_p": 0.4, "members": ["a", "b"],
                        "weights": [0.6666666666666666, 0.3333333333333333]}],
            "source": "s",
            "sink": "t"
        }"#;
        let t = Topology::from_json_str(json).unwrap();
        let trace = ErasureTrace::generate(&t, 1_000_000, 123, 0);
        assert_eq!(trace.group_violations(&t), 0);
        let freq = success_frequencies(&trace);
        assert!((freq[0] - 0.4).abs() < 0.002, "member 1 frequency {}", freq[0]);
        assert!((freq[1] - 0.2).abs() < 0.002, "member 2 frequency {}", freq[1]);
    }

    #[test]
    fn single_link_all_success_takes_n_slots() {
        let t = Topology::line(&[0.5]).unwrap();
        let mut trace = all_success_trace(&t, 10);
        let out = simulate_coding_queue(&t, 3, &mut trace).unwrap();
        assert_eq!(out.completion_slot, 3);
    }

    #[test]
    fn two_hop_store_and_forward_needs_two_slots() {
        let t = Topology::line(&[0.5, 0.25]).unwrap();
        let mut trace = all_success_trace(&t, 10);
        let out = simulate_coding_queue(&t, 1, &mut trace).unwrap();
        assert_eq!(out.completion_slot, 2);
    }

    #[test]
    fn all_success_line_pipelines_exactly() {
        // On an all-success trace a line of h hops finishes in h + n - 1 slots.
        let t = Topology::line(&[0.5, 0.3, 0.7]).unwrap();
        for n in [1u64, 2, 5, 9] {
            let mut trace = all_success_trace(&t, 16);
            let out = simulate_coding_queue(&t, n, &mut trace).unwrap();
            assert_eq!(out.completion_slot, 3 + n - 1, "n = {n}");
        }
    }

    #[test]
    fn n_zero_completes_immediately() {
        let t = Topology::line(&[0.5, 0.25]).unwrap();
        let mut trace = all_success_trace(&t, 4);
        assert_eq!(simulate_coding_queue(&t, 0, &mut trace).unwrap().completion_slot, 0);
        assert_eq!(simulate_coding_maxflow(&t, 0, &mut trace).unwrap().completion_slot, 0);
    }

    #[test]
    fn engines_agree_on_handcrafted_two_hop_trace() {
        let t = Topology::line(&[0.5, 0.25]).unwrap();
        // slot 1: first link fails, second succeeds; slots 2-3: both succeed.
        let rows = vec![vec![false, true], vec![true, true], vec![true, true]];
        let mut trace = ErasureTrace::fixed(2, rows);
        let queue = simulate_coding_queue(&t, 1, &mut trace).unwrap();
        let flow = simulate_coding_maxflow(&t, 1, &mut trace).unwrap();
        assert_eq!(queue.completion_slot, 3);
        assert_eq!(flow.completion_slot, 3);
    }

    #[test]
    fn diamond_dag_pipelines_two_packets_per_slot() {
        let json = r#"{
            "nodes": ["s", "a", "b", "t"],
            "links": [
                {"id": "sa", "src": "s", "dst": "a", "p": 0.0},
                {"id": "sb", "src": "s", "dst": "b", "p": 0.0},
                {"id": "at", "src": "a", "dst": "t", "p": 0.0},
                {"id": "bt", "src": "b", "dst": "t", "p": 0.0}
            ],
            "source": "s",
            "sink": "t"
        }"#;
        let t = Topology::from_json_str(json).unwrap();
        let mut trace = all_success_trace(&t, 10);
        let out = simulate_coding_maxflow(&t, 4, &mut trace).unwrap();
        assert_eq!(out.completion_slot, 3);
    }

    #[test]
    fn routing_single_path_equals_coding_per_trace() {
        let t = Topology::line(&[0.5, 0.3, 0.2]).unwrap();
        for trial in 0..50 {
            let mut trace = ErasureTrace::generate(&t, 256, 77, trial);
            let coding = simulate_coding_queue(&t, 12, &mut trace).unwrap();
            let routing = simulate_routing(&t, &[12], &mut trace).unwrap();
            assert_eq!(coding.completion_slot, routing.completion_slot, "trial {trial}");
        }
    }

    #[test]
    fn routing_bottleneck_path_determines_completion() {
        let t = Topology::parallel_paths(&[vec![0.5], vec![0.25]]).unwrap();
        let mut trace = all_success_trace(&t, 10);
        let out = simulate_routing(&t, &[2, 3], &mut trace).unwrap();
        assert_eq!(out.completion_slot, 3);
    }

    #[test]
    fn routing_allocation_length_mismatch_is_rejected() {
        let t = Topology::parallel_paths(&[vec![0.5], vec![0.25]]).unwrap();
        let mut trace = all_success_trace(&t, 4);
        assert!(simulate_routing(&t, &[5], &mut trace).is_err());
    }

    #[test]
    fn two_hop_mean_matches_exact_value() {
        // E T_2 = 2/(1-p1) + 2/(1-p2) - 1/(1-p1 p2) for p = (0.5, 0.25).
        let t = Topology::line(&[0.5, 0.25]).unwrap();
        let est = monte_carlo(&t, 2, Strategy::CodingQueue, 100_000, 4242, 1).unwrap();
        let exact = 2.0 / 0.5 + 2.0 / 0.75 - 1.0 / 0.875;
        let se = (est.variance / est.trials as f64).sqrt();
        assert!(
            (est.mean - exact).abs() < 3.0 * se,
            "mean {} vs exact {exact} (se {se})",
            est.mean
        );
    }

    #[test]
    fn monte_carlo_is_seed_stable_across_workers() {
        let t = Topology::parallel_paths(&[vec![0.5, 0.2], vec![0.25, 0.1]]).unwrap();
        let a = monte_carlo(&t, 20, Strategy::CodingQueue, 500, 99, 1).unwrap();
        let b = monte_carlo(&t, 20, Strategy::CodingQueue, 500, 99, 4).unwrap();
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.variance.to_bits(), b.variance.to_bits());
    }

    #[test]
    fn perfect_links_have_zero_variance() {
        let t = Topology::line(&[0.0, 0.0]).unwrap();
        let est = monte_carlo(&t, 5, Strategy::CodingQueue, 100, 1, 1).unwrap();
        assert_eq!(est.variance, 0.0);
    }

    #[test]
    fn doubling_trials_shrinks_ci_like_sqrt_two() {
        let t = Topology::line(&[0.5, 0.25]).unwrap();
        let small = monte_carlo(&t, 10, Strategy::CodingQueue, 2000, 31, 1).unwrap();
        let large = monte_carlo(&t, 10, Strategy::CodingQueue, 4000, 31, 1).unwrap();
        let ratio = large.ci_halfwidth / small.ci_halfwidth * 2f64.sqrt();
        assert!((ratio - 1.0).abs() < 0.10, "ratio {ratio}");
    }

    #[test]
    fn rank_series_is_monotone_and_reaches_n() {
        let t = Topology::line(&[0.5, 0.25]).unwrap();
        let mut trace = ErasureTrace::generate(&t, 128, 11, 0);
        let series = coding_rank_series(&t, 8, &mut trace, 128).unwrap();
        assert!(series.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(*series.last().unwrap(), 8);
    }
}
