//! Exact and closed-form expected-delay computations.
//!
//! The central object is the delay function `D(n) = E[T_n] - n/C`: the
//! sub-linear part of the expected block completion time. For a line network
//! with a unique worst link, `D(n)` is non-decreasing in `n` and bounded by
//! `D_bar = sum_{i != m} p_m / (p_m - p_i)`, which is also its steady-state
//! limit.

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::rational::{rational_from_f64, rational_to_f64};
use crate::topology::{Topology, WORST_LINK_TOLERANCE};

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Split `n` packets across paths proportionally to path capacity
/// `1 - worst_p`, rounded by largest remainder so the total is exactly `n`.
/// Ties go to the lower path index.
pub fn allocate_routing(n: u64, worst_p: &[f64]) -> Result<Vec<u64>> {
    if worst_p.is_empty() {
        return Err(Error::InvalidArgument("no paths".into()));
    }
    let ps: Vec<BigRational> = worst_p
        .iter()
        .map(|&p| {
            let r = rational_from_f64(p)
                .ok_or_else(|| Error::InvalidProbability(format!("{p} is not finite")))?;
            if r < BigRational::zero() || r >= BigRational::one() {
                return Err(Error::InvalidProbability(format!("worst_p {p} outside [0, 1)")));
            }
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;
    let k = BigRational::from_integer(ps.len().into());
    let total_capacity = k - ps.iter().cloned().sum::<BigRational>();
    let n_big = BigRational::from_integer(n.into());

    let mut allocation = vec![0u64; ps.len()];
    let mut remainders: Vec<(BigRational, usize)> = Vec::with_capacity(ps.len());
    let mut assigned: u64 = 0;
    for (i, p) in ps.iter().enumerate() {
        let share = n_big.clone() * (BigRational::one() - p.clone()) / total_capacity.clone();
        let floor = share.floor();
        let units = floor.to_integer().to_u64().expect("share fits u64");
        allocation[i] = units;
        assigned += units;
        remainders.push((share - floor, i));
    }
    // Largest remainder first; exact rational comparison, lower index wins ties.
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let leftover = (n - assigned) as usize;
    for &(_, idx) in remainders.iter().take(leftover) {
        allocation[idx] += 1;
    }
    Ok(allocation)
}

#[derive(Debug, Clone)]
pub struct LineDelayBounds {
    pub unique_worst: bool,
    /// Upper bound on the delay function, present when the worst link is
    /// unique. Zero for a single-link line.
    pub d_bar: Option<f64>,
    /// Steady-state limit of the residual-drain time; equals `d_bar`.
    pub steady_state_limit: Option<f64>,
}

/// Delay-function bound for a line of erasure probabilities. Without a
/// unique worst link the bound does not apply and the delay grows as sqrt(n).
pub fn line_delay_bounds(p: &[f64]) -> Result<LineDelayBounds> {
    if p.is_empty() {
        return Err(Error::InvalidArgument("line needs at least one link".into()));
    }
    for &pi in p {
        if !(0.0..1.0).contains(&pi) {
            return Err(Error::InvalidProbability(format!("{pi} outside [0, 1)")));
        }
    }
    let worst = p.iter().cloned().fold(0.0f64, f64::max);
    let joint = p.iter().filter(|&&pi| (worst - pi).abs() <= WORST_LINK_TOLERANCE).count();
    if joint > 1 {
        return Ok(LineDelayBounds { unique_worst: false, d_bar: None, steady_state_limit: None });
    }
    let d_bar: f64 = p
        .iter()
        .filter(|&&pi| (worst - pi).abs() > WORST_LINK_TOLERANCE)
        .map(|&pi| worst / (worst - pi))
        .sum();
    Ok(LineDelayBounds { unique_worst: true, d_bar: Some(d_bar), steady_state_limit: Some(d_bar) })
}

#[derive(Debug, Clone)]
pub struct TwoHopDelay {
    pub n: u64,
    pub expected_completion: f64,
    /// E[T_n] - n / (1 - max(p1, p2)).
    pub delay_function: f64,
    /// Whether the exact rational path produced the value.
    pub exact: bool,
}

/// Largest block size evaluated in exact rationals by default; beyond this
/// the float dynamic program takes over.
pub const TWO_HOP_RATIONAL_LIMIT: u64 = 64;

/// Exact expected completion time of a two-hop line under the engine's slot
/// semantics, by dynamic programming on (packets at source, packets at relay).
pub fn two_hop_exact(n: u64, p1: f64, p2: f64) -> Result<TwoHopDelay> {
    let (expected, exact) = if n <= TWO_HOP_RATIONAL_LIMIT {
        let r1 = probability_rational(p1)?;
        let r2 = probability_rational(p2)?;
        (rational_to_f64(&two_hop_expected_completion_rational(n, &r1, &r2)?), true)
    } else {
        for &p in &[p1, p2] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::InvalidProbability(format!("{p} outside [0, 1)")));
            }
        }
        let series = line_expected_completion(&[p1, p2], n)?;
        (series[n as usize], false)
    };
    let capacity_term = n as f64 / (1.0 - p1.max(p2));
    Ok(TwoHopDelay { n, expected_completion: expected, delay_function: expected - capacity_term, exact })
}

/// Exact-rational E[T_n] for the two-hop line.
pub fn two_hop_expected_completion_rational(
    n: u64,
    p1: &BigRational,
    p2: &BigRational,
) -> Result<BigRational> {
    check_prob_rational(p1)?;
    check_prob_rational(p2)?;
    if n == 0 {
        return Ok(BigRational::zero());
    }
    let one = BigRational::one();
    let q1 = &one - p1; // per-slot success of link 1
    let q2 = &one - p2;
    let both_fail = p1 * p2;
    let denom = &one - &both_fail;

    let n = n as usize;
    // Layer s = 0: relay drains geometrically.
    let mut prev: Vec<BigRational> = (0..=n)
        .map(|r| BigRational::from_integer(r.into()) / q2.clone())
        .collect();
    let mut completion = prev[0].clone();
    for s in 1..=n {
        let width = n - s;
        let mut cur: Vec<BigRational> = Vec::with_capacity(width + 1);
        cur.push(q1.clone().recip() + prev[1].clone());
        for r in 1..=width {
            let value = (&one
                + &(q1.clone() * p2.clone() * prev[r + 1].clone())
                + &(p1.clone() * q2.clone() * cur[r - 1].clone())
                + &(q1.clone() * q2.clone() * prev[r].clone()))
                / denom.clone();
            cur.push(value);
        }
        completion = cur[0].clone();
        prev = cur;
    }
    Ok(completion)
}

/// Neumaier-compensated accumulator for the float dynamic programs.
#[derive(Clone, Copy, Default)]
struct Compensated {
    sum: f64,
    carry: f64,
}

impl Compensated {
    #[inline]
    fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.carry += (self.sum - t) + value;
        } else {
            self.carry += (value - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    fn total(self) -> f64 {
        self.sum + self.carry
    }
}

/// E[T_m] for m = 0..=n on a line of up to three hops, by exact dynamic
/// programming in floats. One sweep yields the whole block-size range.
pub fn line_expected_completion(p: &[f64], n: u64) -> Result<Vec<f64>> {
    for &pi in p {
        if !(0.0..1.0).contains(&pi) {
            return Err(Error::InvalidProbability(format!("{pi} outside [0, 1)")));
        }
    }
    match p.len() {
        1 => Ok((0..=n).map(|m| m as f64 / (1.0 - p[0])).collect()),
        2 => Ok(two_hop_series_f64(n as usize, p[0], p[1])),
        3 => Ok(three_hop_series_f64(n as usize, p[0], p[1], p[2])),
        len => Err(Error::InvalidArgument(format!(
            "exact line DP supports 1..=3 hops, got {len}"
        ))),
    }
}

fn two_hop_series_f64(n: usize, p1: f64, p2: f64) -> Vec<f64> {
    let q1 = 1.0 - p1;
    let q2 = 1.0 - p2;
    let denom = 1.0 - p1 * p2;
    let mut prev: Vec<f64> = (0..=n).map(|r| r as f64 / q2).collect();
    let mut out = vec![0.0];
    for s in 1..=n {
        let width = n - s;
        let mut cur = Vec::with_capacity(width + 1);
        cur.push(1.0 / q1 + prev[1]);
        for r in 1..=width {
            let mut acc = Compensated::default();
            acc.add(1.0);
            acc.add(q1 * p2 * prev[r + 1]);
            acc.add(p1 * q2 * cur[r - 1]);
            acc.add(q1 * q2 * prev[r]);
            cur.push(acc.total() / denom);
        }
        out.push(cur[0]);
        prev = cur;
    }
    out
}

fn three_hop_series_f64(n: usize, p1: f64, p2: f64, p3: f64) -> Vec<f64> {
    let p = [p1, p2, p3];
    // Ragged layer indexed by [rem][r1] with r2 = rem - r1.
    let layer = |s: usize| -> Vec<Vec<f64>> {
        (0..=(n - s)).map(|rem| vec![0.0; rem + 1]).collect()
    };
    // s = 0: no packets left at the source; pure two-stage drain through
    // links 2 and 3, itself a two-hop dynamic program over (r1, r2).
    let drain = drain_table(n, p2, p3);
    let mut prev: Vec<Vec<f64>> = layer(0);
    for rem in 0..=n {
        for r1 in 0..=rem {
            prev[rem][r1] = drain[r1][rem - r1];
        }
    }
    let mut out = vec![0.0];
    if n == 0 {
        return out;
    }

    for s in 1..=n {
        let mut cur = layer(s);
        for rem in 0..=(n - s) {
            for r1 in 0..=rem {
                let r2 = rem - r1;
                let mut acc = Compensated::default();
                acc.add(1.0);
                let mut self_prob = 0.0;
                for pattern in 0..8u32 {
                    let succ = [pattern & 1 != 0, pattern & 2 != 0, pattern & 4 != 0];
                    let mut prob = 1.0;
                    for (i, &ok) in succ.iter().enumerate() {
                        prob *= if ok { 1.0 - p[i] } else { p[i] };
                    }
                    if prob == 0.0 {
                        continue;
                    }
                    let move1 = succ[0]; // source always has packets while s > 0
                    let move2 = succ[1] && r1 > 0;
                    let move3 = succ[2] && r2 > 0;
                    if !move1 && !move2 && !move3 {
                        self_prob += prob;
                        continue;
                    }
                    let ns = s - usize::from(move1);
                    let nr1 = r1 + usize::from(move1) - usize::from(move2);
                    let nr2 = r2 + usize::from(move2) - usize::from(move3);
                    let value = if ns == s {
                        cur[nr1 + nr2][nr1]
                    } else {
                        prev[nr1 + nr2][nr1]
                    };
                    acc.add(prob * value);
                }
                cur[rem][r1] = acc.total() / (1.0 - self_prob);
            }
        }
        out.push(cur[0][0]);
        prev = cur;
    }
    out
}

/// Expected slots to drain (a, b) packets at two tandem relays through links
/// with erasures pa then pb, for all a + b <= n: table[a][b].
fn drain_table(n: usize, pa: f64, pb: f64) -> Vec<Vec<f64>> {
    let qa = 1.0 - pa;
    let qb = 1.0 - pb;
    let denom = 1.0 - pa * pb;
    let mut table: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    table.push((0..=n).map(|b| b as f64 / qb).collect());
    for a in 1..=n {
        let width = n - a;
        let mut cur = Vec::with_capacity(width + 1);
        cur.push(1.0 / qa + table[a - 1][1]);
        for b in 1..=width {
            let mut acc = Compensated::default();
            acc.add(1.0);
            acc.add(qa * pb * table[a - 1][b + 1]);
            acc.add(pa * qb * cur[b - 1]);
            acc.add(qa * qb * table[a - 1][b]);
            cur.push(acc.total() / denom);
        }
        table.push(cur);
    }
    table
}

/// Distribution of the number of links succeeding in one slot.
#[derive(Debug, Clone)]
pub struct SuccessDistribution {
    /// probs[i] = P(exactly i links succeed).
    pub probs: Vec<f64>,
}

impl SuccessDistribution {
    /// Poisson-binomial convolution over independent links with erasure
    /// probabilities `q`.
    pub fn from_independent(q: &[f64]) -> Result<SuccessDistribution> {
        for &qi in q {
            if !(0.0..1.0).contains(&qi) {
                return Err(Error::InvalidProbability(format!("{qi} outside [0, 1)")));
            }
        }
        let mut probs = vec![1.0];
        for &qi in q {
            probs = convolve(&probs, &[qi, 1.0 - qi]);
        }
        Ok(SuccessDistribution { probs })
    }

    /// Exact distribution over a set of links of a topology, enumerating
    /// correlated groups directly: within a group at most one member
    /// succeeds, so a group's members contribute a {0, 1}-valued count.
    pub fn from_topology_links(t: &Topology, links: &[usize]) -> Result<SuccessDistribution> {
        let mut group_success: std::collections::BTreeMap<usize, (f64, usize)> =
            std::collections::BTreeMap::new();
        let mut probs = vec![1.0];
        for &l in links {
            match t.group_of(l) {
                None => {
                    let p = t.link_p_f64(l);
                    probs = convolve(&probs, &[p, 1.0 - p]);
                }
                Some(g) => {
                    let entry = group_success.entry(g).or_insert((0.0, 0));
                    let group = &t.groups()[g];
                    let pos = group.members.iter().position(|&m| m == l).expect("member");
                    let weight = rational_to_f64(&group.weights[pos]);
                    let base_success = 1.0 - rational_to_f64(&group.base_p);
                    entry.0 += weight * base_success;
                    entry.1 += 1;
                }
            }
        }
        for (_, (p_one, members)) in group_success {
            let mut block = vec![0.0; members + 1];
            block[0] = 1.0 - p_one;
            block[1] = p_one;
            probs = convolve(&probs, &block);
        }
        Ok(SuccessDistribution { probs })
    }

    /// Highest possible success count, k.
    pub fn max_successes(&self) -> usize {
        self.probs.len() - 1
    }

    /// Expected successes per slot; equals k - sum(q) for independent links.
    pub fn expected_successes(&self) -> f64 {
        self.probs.iter().enumerate().map(|(i, &a)| i as f64 * a).sum()
    }
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct RecursionSolution {
    /// E[T_hat_n] for n = 1..=N.
    pub values: Vec<f64>,
    /// D = 1 / sum(i * A_i): the capacity term per packet.
    pub linear_coefficient: f64,
    /// B_n = E[T_hat_n] - D * n; bounded by the root structure.
    pub residuals: Vec<f64>,
    /// Roots of (1 - A_0) x^k - A_1 x^{k-1} - ... - A_k.
    pub roots: Vec<Complex64>,
}

/// Forward-evaluate the parallel-links delay recursion
/// `(1 - A_0) E[T_n] = A_1 E[T_{n-1}] + ... + A_k E[T_{n-k}] + 1`
/// with `E[T_m] = 0` for `m <= 0`, and analyze its characteristic roots:
/// exactly one root sits at 1 and the rest stay inside the closed unit disk.
pub fn coding_recursion(a: &SuccessDistribution, horizon: usize) -> Result<RecursionSolution> {
    let probs = &a.probs;
    if probs.len() < 2 {
        return Err(Error::InvalidArgument("need at least one link".into()));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || probs.iter().any(|&x| x < -1e-12) {
        return Err(Error::InvalidArgument("success-count probabilities must be a distribution".into()));
    }
    if probs[0] >= 1.0 - 1e-15 {
        return Err(Error::AllLinksFail);
    }
    let k = probs.len() - 1;
    let mut values = Vec::with_capacity(horizon);
    for n in 1..=horizon {
        let mut acc = 1.0;
        for i in 1..=k {
            if n > i {
                acc += probs[i] * values[n - i - 1];
            }
        }
        values.push(acc / (1.0 - probs[0]));
    }
    let linear_coefficient = 1.0 / a.expected_successes();
    let residuals: Vec<f64> = values
        .iter()
        .enumerate()
        .map(|(idx, &v)| v - linear_coefficient * (idx + 1) as f64)
        .collect();

    // Characteristic polynomial, highest power first.
    let mut coeffs = Vec::with_capacity(k + 1);
    coeffs.push(1.0 - probs[0]);
    coeffs.extend(probs[1..].iter().map(|&a| -a));
    let roots = polynomial_roots(&coeffs);
    let at_one = roots.iter().filter(|r| (*r - Complex64::new(1.0, 0.0)).norm() <= 1e-9).count();
    if at_one != 1 {
        return Err(Error::InvalidArgument(format!(
            "characteristic root structure violated: {at_one} roots at 1"
        )));
    }
    if roots.iter().any(|r| r.norm() > 1.0 + 1e-9) {
        return Err(Error::InvalidArgument("characteristic root outside the unit disk".into()));
    }
    Ok(RecursionSolution { values, linear_coefficient, residuals, roots })
}

/// All complex roots by Durand-Kerner simultaneous iteration. Degrees here
/// are at most 16 and the roots live in the closed unit disk, where the
/// iteration is reliable; a final Newton polish tightens each root.
pub fn polynomial_roots(coeffs_high_first: &[f64]) -> Vec<Complex64> {
    let degree = coeffs_high_first.len() - 1;
    assert!((1..=16).contains(&degree), "degree {degree} out of supported range");
    let lead = coeffs_high_first[0];
    let monic: Vec<Complex64> = coeffs_high_first
        .iter()
        .map(|&c| Complex64::new(c / lead, 0.0))
        .collect();
    let eval = |z: Complex64| -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for &c in &monic {
            acc = acc * z + c;
        }
        acc
    };
    let seed = Complex64::new(0.4, 0.9);
    let mut roots: Vec<Complex64> = (0..degree).map(|i| seed.powu(i as u32 + 1)).collect();
    for _ in 0..500 {
        let mut shift = 0.0f64;
        for i in 0..degree {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..degree {
                if j != i {
                    denom *= roots[i] - roots[j];
                }
            }
            let delta = eval(roots[i]) / denom;
            roots[i] -= delta;
            shift = shift.max(delta.norm());
        }
        if shift < 1e-14 {
            break;
        }
    }
    // Newton polish.
    let derive = |z: Complex64| -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, &c) in monic.iter().enumerate().take(degree) {
            let power = (degree - i) as f64;
            acc = acc * z + c * power;
        }
        acc
    };
    for root in &mut roots {
        for _ in 0..3 {
            let d = derive(*root);
            if d.norm() > 1e-12 {
                *root -= eval(*root) / d;
            }
        }
    }
    roots.sort_by(|a, b| {
        a.re.partial_cmp(&b.re).unwrap().then(a.im.partial_cmp(&b.im).unwrap())
    });
    roots
}

/// Exact n-th harmonic number.
pub fn harmonic_number(n: u64) -> BigRational {
    let mut acc = BigRational::zero();
    for i in 1..=n {
        acc += BigRational::new(BigInt::one(), BigInt::from(i));
    }
    acc
}

/// H_n in floats with Kahan compensation; adequate for the Young bounds up
/// to n = 10^4 and beyond.
pub fn harmonic_number_f64(n: u64) -> f64 {
    let mut acc = Compensated::default();
    for i in 1..=n {
        acc.add(1.0 / i as f64);
    }
    acc.total()
}

/// Young's strict sandwich: ln n + gamma + 1/(2(n+1)) < H_n < ln n + gamma + 1/(2n).
pub fn young_bounds(n: u64) -> (f64, f64) {
    let base = (n as f64).ln() + EULER_GAMMA;
    (base + 1.0 / (2.0 * (n as f64 + 1.0)), base + 1.0 / (2.0 * n as f64))
}

/// Exact evaluation of `sum_{m=a}^{b} (c1 - m) / (c2 + m)` through the
/// harmonic identity `a - b - 1 + (c1 + c2) (H_{c2+b} - H_{c2+a-1})`.
pub fn harmonic_sum(a: u64, b: u64, c1: u64, c2: u64) -> Result<BigRational> {
    if a == 0 || b == 0 || c1 == 0 || c2 == 0 {
        return Err(Error::InvalidArgument("arguments must be positive".into()));
    }
    if a > b {
        return Err(Error::InvalidArgument(format!("a = {a} exceeds b = {b}")));
    }
    // H_{c2+b} - H_{c2+a-1} is the partial sum of 1/i over (c2+a)..=(c2+b).
    let mut tail = BigRational::zero();
    for i in (c2 + a)..=(c2 + b) {
        tail += BigRational::new(BigInt::one(), BigInt::from(i));
    }
    let linear = BigRational::from_integer(BigInt::from(a as i64 - b as i64 - 1));
    Ok(linear + BigRational::from_integer(BigInt::from(c1 + c2)) * tail)
}

fn probability_rational(p: f64) -> Result<BigRational> {
    let r = rational_from_f64(p)
        .ok_or_else(|| Error::InvalidProbability(format!("{p} is not finite")))?;
    check_prob_rational(&r)?;
    Ok(r)
}

fn check_prob_rational(p: &BigRational) -> Result<()> {
    if *p < BigRational::zero() || *p >= BigRational::one() {
        return Err(Error::InvalidProbability(format!(
            "{} outside [0, 1)",
            rational_to_f64(p)
        )));
    }
    Ok(())
}
