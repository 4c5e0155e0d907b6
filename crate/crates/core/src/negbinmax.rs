//! Expected maximum of two independent negative binomial variables.
//!
//! `A_{i,j}` is the expected number of slots until i packets have crossed a
//! link with erasure q1 and j packets have crossed an independent link with
//! erasure q2, transmitting one packet per slot per link. Two routes compute
//! it: a two-dimensional recursion (the oracle) and a closed-form double sum
//! obtained by inverting the Z-transform of that recursion. The routing
//! overhead `U_n = A_{i,j} - n/(2 - q1 - q2)` at the capacity-proportional
//! split grows like sqrt(n).

use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::analytics::allocate_routing;
use crate::error::{Error, Result};
use crate::rational::{binomial_big, rational_from_f64, rational_to_f64};

/// Parameters of the closed form, with the derived constants
/// `W = (1-q1) q2 / (1-q1 q2)`, `E = q1 (1-q2) / (1-q1 q2)`,
/// `F = (1-q1 q2) / (q1 q2)`.
#[derive(Debug, Clone, Copy)]
pub struct NegBinMaxParams {
    pub i: u64,
    pub j: u64,
    pub q1: f64,
    pub q2: f64,
}

impl NegBinMaxParams {
    pub fn new(i: u64, j: u64, q1: f64, q2: f64) -> Result<Self> {
        if !(q1 > 0.0 && q1 < 1.0 && q2 > 0.0 && q2 < 1.0) {
            return Err(Error::InvalidArgument(
                "closed form needs q1, q2 in (0, 1); use the recursion at the boundary".into(),
            ));
        }
        Ok(NegBinMaxParams { i, j, q1, q2 })
    }

    pub fn w(&self) -> f64 {
        (1.0 - self.q1) * self.q2 / (1.0 - self.q1 * self.q2)
    }

    pub fn e(&self) -> f64 {
        self.q1 * (1.0 - self.q2) / (1.0 - self.q1 * self.q2)
    }

    pub fn f(&self) -> f64 {
        (1.0 - self.q1 * self.q2) / (self.q1 * self.q2)
    }
}

/// Closed-form `A_{i,j}` in log space. Every summand is non-negative, so
/// log-sum-exp accumulation is cancellation-free; relative error stays below
/// 1e-9 out to i + j ~ 2000 and degrades gracefully beyond.
pub fn negbin_max_closed(params: &NegBinMaxParams) -> Result<f64> {
    let &NegBinMaxParams { i, j, q1, q2 } = params;
    if j == 0 {
        return Ok(i as f64 / (1.0 - q1));
    }
    if i == 0 {
        return Ok(j as f64 / (1.0 - q2));
    }
    let ln_w = params.w().ln();
    let ln_e = params.e().ln();
    let ln_f = params.f().ln();
    let ln_fact = ln_factorials((i + j) as usize + 2);
    let ln_binom = |n: i64, k: i64| -> Option<f64> {
        if k < 0 || n < 0 || n < k {
            return None;
        }
        Some(ln_fact[n as usize] - ln_fact[k as usize] - ln_fact[(n - k) as usize])
    };

    // Streaming log-sum-exp over the double sum.
    let mut max_log = f64::NEG_INFINITY;
    let mut scaled_sum = 0.0f64;
    let mut push = |log_term: f64| {
        if log_term == f64::NEG_INFINITY {
            return;
        }
        if log_term <= max_log {
            scaled_sum += (log_term - max_log).exp();
        } else {
            scaled_sum = scaled_sum * (max_log - log_term).exp() + 1.0;
            max_log = log_term;
        }
    };

    for m in 0..i {
        // m = i contributes nothing: the (i - m) factor vanishes.
        let ln_lead = ((i - m) as f64 / (1.0 - q1)).ln() + m as f64 * ln_w;
        let t_max = m.min(j);
        for t in 0..=t_max {
            let Some(b1) = ln_binom(j as i64, t as i64) else { continue };
            let Some(b2) = ln_binom((m + j - t) as i64 - 1, j as i64 - 1) else { continue };
            push(ln_lead + b1 + b2 + t as f64 * ln_f);
        }
    }
    let ln_sum = max_log + scaled_sum.ln();
    Ok((ln_sum + j as f64 * ln_e).exp() + j as f64 / (1.0 - q2))
}

/// Closed-form `A_{i,j}` in exact rationals; intended for i + j <= 40.
pub fn negbin_max_closed_rational(
    i: u64,
    j: u64,
    q1: &BigRational,
    q2: &BigRational,
) -> Result<BigRational> {
    let zero = BigRational::zero();
    let one = BigRational::one();
    if *q1 <= zero || *q1 >= one || *q2 <= zero || *q2 >= one {
        return Err(Error::InvalidArgument("closed form needs q1, q2 in (0, 1)".into()));
    }
    let s1 = &one - q1;
    let s2 = &one - q2;
    if j == 0 {
        return Ok(BigRational::from_integer(i.into()) / s1);
    }
    if i == 0 {
        return Ok(BigRational::from_integer(j.into()) / s2);
    }
    let cross = &one - &(q1 * q2);
    let w = s1.clone() * q2.clone() / cross.clone();
    let e = q1.clone() * s2.clone() / cross.clone();
    let f = cross.clone() / (q1.clone() * q2.clone());

    let mut total = BigRational::zero();
    let mut w_pow = BigRational::one();
    for m in 0..i {
        let lead = BigRational::from_integer((i - m).into()) / s1.clone() * w_pow.clone();
        let mut f_pow = BigRational::one();
        for t in 0..=m.min(j) {
            let b1 = binomial_big(j as i64, t as i64);
            let b2 = binomial_big((m + j - t) as i64 - 1, j as i64 - 1);
            if !b1.is_zero() && !b2.is_zero() {
                total += lead.clone()
                    * BigRational::from_integer(b1 * b2)
                    * f_pow.clone();
            }
            f_pow *= f.clone();
        }
        w_pow *= w.clone();
    }
    let mut e_pow = BigRational::one();
    for _ in 0..j {
        e_pow *= e.clone();
    }
    Ok(total * e_pow + BigRational::from_integer(j.into()) / s2)
}

/// Oracle route: the two-dimensional recursion
/// `(1 - q1 q2) A_{i,j} = (1-q1) q2 A_{i-1,j} + q1 (1-q2) A_{i,j-1}
///  + (1-q1)(1-q2) A_{i-1,j-1} + 1`
/// with boundaries `A_{i,0} = i/(1-q1)`, `A_{0,j} = j/(1-q2)`.
pub fn negbin_max_recursion(i: u64, j: u64, q1: f64, q2: f64) -> Result<f64> {
    for &q in &[q1, q2] {
        if !(0.0..1.0).contains(&q) {
            return Err(Error::InvalidProbability(format!("{q} outside [0, 1)")));
        }
    }
    let s1 = 1.0 - q1;
    let s2 = 1.0 - q2;
    let denom = 1.0 - q1 * q2;
    let cols = j as usize + 1;
    let mut prev: Vec<f64> = (0..cols).map(|b| b as f64 / s2).collect();
    if i == 0 {
        return Ok(prev[j as usize]);
    }
    let mut cur = vec![0.0f64; cols];
    for a in 1..=i {
        cur[0] = a as f64 / s1;
        for b in 1..cols {
            cur[b] = (s1 * q2 * prev[b] + q1 * s2 * cur[b - 1] + s1 * s2 * prev[b - 1] + 1.0) / denom;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[j as usize])
}

/// Exact-rational recursion table: `table[a][b] = A_{a,b}` for all
/// `a <= i`, `b <= j`.
pub fn negbin_max_recursion_rational_table(
    i: u64,
    j: u64,
    q1: &BigRational,
    q2: &BigRational,
) -> Result<Vec<Vec<BigRational>>> {
    let zero = BigRational::zero();
    let one = BigRational::one();
    if *q1 < zero || *q1 >= one || *q2 < zero || *q2 >= one {
        return Err(Error::InvalidProbability("q outside [0, 1)".into()));
    }
    let s1 = &one - q1;
    let s2 = &one - q2;
    let denom = &one - &(q1 * q2);
    let cols = j as usize + 1;
    let mut table: Vec<Vec<BigRational>> = Vec::with_capacity(i as usize + 1);
    table.push(
        (0..cols)
            .map(|b| BigRational::from_integer(b.into()) / s2.clone())
            .collect(),
    );
    for a in 1..=i as usize {
        let mut cur = Vec::with_capacity(cols);
        cur.push(BigRational::from_integer(a.into()) / s1.clone());
        for b in 1..cols {
            let value = (s1.clone() * q2.clone() * table[a - 1][b].clone()
                + q1.clone() * s2.clone() * cur[b - 1].clone()
                + s1.clone() * s2.clone() * table[a - 1][b - 1].clone()
                + one.clone())
                / denom.clone();
            cur.push(value);
        }
        table.push(cur);
    }
    Ok(table)
}

/// Exact-rational recursion table entry.
pub fn negbin_max_recursion_rational(
    i: u64,
    j: u64,
    q1: &BigRational,
    q2: &BigRational,
) -> Result<BigRational> {
    let zero = BigRational::zero();
    let one = BigRational::one();
    if *q1 < zero || *q1 >= one || *q2 < zero || *q2 >= one {
        return Err(Error::InvalidProbability("q outside [0, 1)".into()));
    }
    let s1 = &one - q1;
    let s2 = &one - q2;
    let denom = &one - &(q1 * q2);
    let cols = j as usize + 1;
    let mut prev: Vec<BigRational> = (0..cols)
        .map(|b| BigRational::from_integer(b.into()) / s2.clone())
        .collect();
    for a in 1..=i {
        let mut cur = Vec::with_capacity(cols);
        cur.push(BigRational::from_integer(a.into()) / s1.clone());
        for b in 1..cols {
            let value = (s1.clone() * q2.clone() * prev[b].clone()
                + q1.clone() * s2.clone() * cur[b - 1].clone()
                + s1.clone() * s2.clone() * prev[b - 1].clone()
                + one.clone())
                / denom.clone();
            cur.push(value);
        }
        prev = cur;
    }
    Ok(prev[j as usize].clone())
}

/// `A_{i,j}` routed through the most precise path available: the recursion
/// for boundary q values, the closed form otherwise (they agree to 1e-9).
pub fn negbin_max(i: u64, j: u64, q1: f64, q2: f64) -> Result<f64> {
    if q1 == 0.0 || q2 == 0.0 {
        negbin_max_recursion(i, j, q1, q2)
    } else {
        negbin_max_closed(&NegBinMaxParams::new(i, j, q1, q2)?)
    }
}

#[derive(Debug, Clone)]
pub struct RoutingOverhead {
    pub n: u64,
    pub i: u64,
    pub j: u64,
    pub a_ij: f64,
    pub capacity_term: f64,
    pub u_n: f64,
    /// Whether the capacity-proportional shares had to be rounded.
    pub rounded: bool,
}

/// Routing overhead `U_n = A_{i,j} - n/(2 - q1 - q2)` with the Eq-style
/// proportional split `i = n(1-q1)/(2-q1-q2)`, `j = n(1-q2)/(2-q1-q2)`.
/// Non-integral shares are an error unless `allow_rounding` applies the
/// largest-remainder allocation instead.
pub fn routing_overhead_u(n: u64, q1: f64, q2: f64, allow_rounding: bool) -> Result<RoutingOverhead> {
    for &q in &[q1, q2] {
        if !(0.0..1.0).contains(&q) {
            return Err(Error::InvalidProbability(format!("{q} outside [0, 1)")));
        }
    }
    let r1 = rational_from_f64(q1).expect("finite");
    let r2 = rational_from_f64(q2).expect("finite");
    let one = BigRational::one();
    let total = BigRational::from_integer(2.into()) - r1.clone() - r2.clone();
    let share_i = BigRational::from_integer(n.into()) * (&one - &r1) / total.clone();
    let share_j = BigRational::from_integer(n.into()) * (&one - &r2) / total.clone();

    let (i, j, rounded) = if share_i.is_integer() && share_j.is_integer() {
        (
            share_i.to_integer().to_u64().expect("fits"),
            share_j.to_integer().to_u64().expect("fits"),
            false,
        )
    } else if allow_rounding {
        let alloc = allocate_routing(n, &[q1, q2])?;
        (alloc[0], alloc[1], true)
    } else {
        return Err(Error::NonIntegralShares(format!(
            "n = {n} does not split evenly across (q1, q2) = ({q1}, {q2})"
        )));
    };

    let a_ij = negbin_max_recursion(i, j, q1, q2)?;
    let capacity_term = rational_to_f64(&(BigRational::from_integer(n.into()) / total));
    Ok(RoutingOverhead { n, i, j, a_ij, capacity_term, u_n: a_ij - capacity_term, rounded })
}

/// Least-squares slope of log U against log n.
pub fn growth_exponent_fit(ns: &[u64], us: &[f64]) -> Result<f64> {
    if ns.len() != us.len() || ns.len() < 2 {
        return Err(Error::InvalidArgument("need at least two (n, U) points".into()));
    }
    if us.iter().any(|&u| u <= 0.0) {
        return Err(Error::InvalidArgument("U values must be positive for a log-log fit".into()));
    }
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = us.iter().map(|&u| u.ln()).collect();
    let x_mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let y_mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        num += (x - x_mean) * (y - y_mean);
        den += (x - x_mean) * (x - x_mean);
    }
    Ok(num / den)
}

fn ln_factorials(upto: usize) -> Vec<f64> {
    let mut table = Vec::with_capacity(upto + 1);
    table.push(0.0);
    let mut acc = 0.0f64;
    for k in 1..=upto {
        acc += (k as f64).ln();
        table.push(acc);
    }
    table
}
