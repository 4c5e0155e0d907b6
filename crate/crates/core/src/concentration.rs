//! Azuma-Hoeffding deviation machinery for the coding completion time.
//!
//! The sink rank after t slots is a 1-Lipschitz function of the t*L link
//! states, so R_t concentrates within `eps_t = sqrt((t L / 2) ln(2t))` of its
//! mean with probability 1 - 1/t. Pushing that window through
//! `T_n = arg_t(R_t = n)` bounds the exceedance of `|T_n - E T_n|` beyond
//! `n^(1/2+delta)/C` by `2C/n + 2C n^(2 delta) / (n^2 - n^(1+2 delta))`.

use crate::engine::{coding_rank_series, ErasureTrace};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::topology::Topology;

#[derive(Debug, Clone, Copy)]
pub struct ConcentrationParams {
    pub n: u64,
    pub capacity: f64,
    pub link_count: usize,
    /// Deviation exponent for T_n; in (0, 1/2).
    pub delta: f64,
    /// Window exponent for (t_l, t_u); in (0, delta).
    pub delta_prime: f64,
}

impl ConcentrationParams {
    pub fn new(n: u64, capacity: f64, link_count: usize, delta: f64, delta_prime: f64) -> Result<Self> {
        if !(0.0 < delta_prime && delta_prime < delta && delta < 0.5) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < delta' < delta < 1/2, got delta = {delta}, delta' = {delta_prime}"
            )));
        }
        if capacity <= 0.0 || link_count == 0 {
            return Err(Error::InvalidArgument("capacity and link count must be positive".into()));
        }
        Ok(ConcentrationParams { n, capacity, link_count, delta, delta_prime })
    }

    /// Deviation scale for T_n: n^(1/2 + delta) / C.
    pub fn epsilon_n(&self) -> f64 {
        (self.n as f64).powf(0.5 + self.delta) / self.capacity
    }
}

/// Azuma deviation for the rank martingale: sqrt((t L / 2) ln(2t)).
pub fn azuma_epsilon(t: u64, link_count: usize) -> f64 {
    let tf = t as f64;
    ((tf * link_count as f64 / 2.0) * (2.0 * tf).ln()).sqrt()
}

#[derive(Debug, Clone, Copy)]
pub struct ConcentrationBounds {
    pub t_lower: f64,
    pub t_upper: f64,
    /// 2C/n + 2C n^(2 delta) / (n^2 - n^(1+2 delta)).
    pub exceedance_bound: f64,
}

/// The completion-time window `t_l = (n - n^(1/2+delta'))/C`,
/// `t_u = (n + n^(1/2+delta'))/C` and the exceedance bound.
pub fn concentration_bounds(p: &ConcentrationParams) -> Result<ConcentrationBounds> {
    let n = p.n as f64;
    let window = n.powf(0.5 + p.delta_prime);
    if window >= n {
        return Err(Error::DegenerateWindow(format!(
            "n^(1/2+delta') = {window} reaches n = {n}"
        )));
    }
    let spread = n.powf(2.0 * p.delta);
    let denom = n * n - n * spread;
    Ok(ConcentrationBounds {
        t_lower: (n - window) / p.capacity,
        t_upper: (n + window) / p.capacity,
        exceedance_bound: 2.0 * p.capacity / n + 2.0 * p.capacity * spread / denom,
    })
}

#[derive(Debug, Clone)]
pub struct ExceedanceReport {
    pub n: u64,
    pub trials: u64,
    pub epsilon_n: f64,
    pub sample_mean: f64,
    pub fraction_exceeding: f64,
    pub bound: f64,
    pub standard_error: f64,
    pub pass: bool,
}

/// Fraction of completion samples deviating from the sample mean by more
/// than `epsilon_n`, checked against the exceedance bound plus three binomial
/// standard errors. The sample mean stands in for the population mean; the
/// slack absorbs the induced bias.
pub fn empirical_exceedance(samples: &[u64], p: &ConcentrationParams) -> Result<ExceedanceReport> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    let bounds = concentration_bounds(p)?;
    let epsilon = p.epsilon_n();
    let trials = samples.len() as f64;
    let mean = samples.iter().map(|&x| x as f64).sum::<f64>() / trials;
    let exceeding = samples.iter().filter(|&&x| (x as f64 - mean).abs() > epsilon).count();
    let fraction = exceeding as f64 / trials;
    let standard_error = (fraction * (1.0 - fraction) / trials).sqrt();
    Ok(ExceedanceReport {
        n: p.n,
        trials: samples.len() as u64,
        epsilon_n: epsilon,
        sample_mean: mean,
        fraction_exceeding: fraction,
        bound: bounds.exceedance_bound,
        standard_error,
        pass: fraction <= bounds.exceedance_bound + 3.0 * standard_error,
    })
}

#[derive(Debug, Clone)]
pub struct WindowPremise {
    pub n: u64,
    /// ceil(t_u), the slot at which the premise is evaluated.
    pub slot: u64,
    pub mean_rank: f64,
    pub epsilon_t: f64,
    /// mean_rank - epsilon_t - n; the premise holds when non-negative.
    pub margin: f64,
    pub holds: bool,
}

/// Check the window premise `E R_{t_u} - eps_{t_u} >= n` empirically, with
/// the sink rank computed by the time-expanded engine and the block cap
/// lifted out of the way. The premise only kicks in for large enough n; the
/// caller scans block sizes and reports the smallest that passes.
pub fn window_premise(
    t: &Topology,
    params: &ConcentrationParams,
    trials: u64,
    master_seed: u64,
) -> Result<WindowPremise> {
    let bounds = concentration_bounds(params)?;
    let slot = bounds.t_upper.ceil() as u64;
    let rank_cap = 2 * params.n + 1000;
    let mut total = 0.0f64;
    for trial in 0..trials {
        let mut trace = ErasureTrace::generate(t, slot, master_seed, trial);
        let series = coding_rank_series(t, rank_cap, &mut trace, slot)?;
        total += *series.last().expect("non-empty series") as f64;
    }
    let mean_rank = total / trials as f64;
    let epsilon_t = azuma_epsilon(slot, params.link_count);
    let margin = mean_rank - epsilon_t - params.n as f64;
    Ok(WindowPremise { n: params.n, slot, mean_rank, epsilon_t, margin, holds: margin >= 0.0 })
}

#[derive(Debug, Clone)]
pub struct LipschitzReport {
    pub trials: u64,
    /// Largest |R_t(original) - R_t(flipped)| observed over all t and trials.
    pub max_rank_shift: u64,
    pub pass: bool,
}

/// Flip one (slot, link) trace entry at a time and confirm the max-flow rank
/// series never moves by more than one: the bounded-differences property the
/// concentration argument rests on.
pub fn lipschitz_perturbation_check(
    t: &Topology,
    rank_cap: u64,
    horizon: u64,
    master_seed: u64,
    trials: u64,
) -> Result<LipschitzReport> {
    let mut picker = SplitMix64::new(master_seed ^ 0x5bd1_e995);
    let mut max_shift = 0u64;
    for trial in 0..trials {
        let mut trace = ErasureTrace::generate(t, horizon, master_seed, trial);
        let base = coding_rank_series(t, rank_cap, &mut trace, horizon)?;
        let slot = picker.next_below(horizon);
        let link = picker.next_below(t.links().len() as u64) as usize;
        trace.flip(slot, link);
        let flipped = coding_rank_series(t, rank_cap, &mut trace, horizon)?;
        for (a, b) in base.iter().zip(&flipped) {
            max_shift = max_shift.max(a.abs_diff(*b));
        }
    }
    Ok(LipschitzReport { trials, max_rank_shift: max_shift, pass: max_shift <= 1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{completion_samples, Strategy};

    #[test]
    fn azuma_epsilon_values() {
        // sqrt(ln 2) and sqrt(4 ln 16), evaluated directly.
        assert!((azuma_epsilon(1, 2) - 0.832_554_611_157_697_7).abs() < 1e-12);
        assert!((azuma_epsilon(8, 1) - 3.330_218_445_107_865).abs() < 1e-9);
    }

    #[test]
    fn azuma_epsilon_is_increasing() {
        let mut prev = 0.0;
        for t in 1..=1000 {
            let e = azuma_epsilon(t, 3);
            assert!(e > prev);
            prev = e;
        }
    }

    #[test]
    fn epsilon_is_sublinear_in_t() {
        let e1 = azuma_epsilon(100, 2) / 100.0;
        let e2 = azuma_epsilon(100_000, 2) / 100_000.0;
        assert!(e2 < e1 / 10.0);
    }

    #[test]
    fn window_reference_values() {
        let p = ConcentrationParams::new(100, 0.5, 2, 0.3, 0.25).unwrap();
        let b = concentration_bounds(&p).unwrap();
        assert!((b.t_upper - 263.245_553_203_367_6).abs() < 1e-6);
        assert!((b.t_lower - 136.754_446_796_632_4).abs() < 1e-6);
        // 2C/n + 2C n^0.6 / (n^2 - n^1.6) = 0.01 + 0.00188339...
        assert!((b.exceedance_bound - 0.011_883_390_945).abs() < 1e-9, "{}", b.exceedance_bound);
    }

    #[test]
    fn bound_vanishes_for_large_n() {
        let small = concentration_bounds(&ConcentrationParams::new(100, 0.5, 2, 0.3, 0.25).unwrap())
            .unwrap()
            .exceedance_bound;
        let large = concentration_bounds(&ConcentrationParams::new(1_000_000, 0.5, 2, 0.3, 0.25).unwrap())
            .unwrap()
            .exceedance_bound;
        assert!(large < small / 1000.0);
    }

    #[test]
    fn degenerate_window_is_rejected() {
        let p = ConcentrationParams::new(1, 0.5, 2, 0.3, 0.25).unwrap();
        assert!(matches!(concentration_bounds(&p), Err(Error::DegenerateWindow(_))));
    }

    #[test]
    fn invalid_exponent_ordering_is_rejected() {
        assert!(ConcentrationParams::new(100, 0.5, 2, 0.25, 0.3).is_err());
        assert!(ConcentrationParams::new(100, 0.5, 2, 0.6, 0.2).is_err());
    }

    #[test]
    fn zero_variance_samples_never_exceed() {
        let t = Topology::line(&[0.0, 0.0]).unwrap();
        let samples = completion_samples(&t, 50, Strategy::CodingQueue, 200, 7, 1).unwrap();
        let p = ConcentrationParams::new(50, 1.0, 2, 0.3, 0.25).unwrap();
        let report = empirical_exceedance(&samples, &p).unwrap();
        assert_eq!(report.fraction_exceeding, 0.0);
        assert!(report.pass);
    }

    #[test]
    fn empty_samples_error() {
        let p = ConcentrationParams::new(50, 1.0, 2, 0.3, 0.25).unwrap();
        assert!(empirical_exceedance(&[], &p).is_err());
    }

    #[test]
    fn lipschitz_on_small_network() {
        let t = Topology::line(&[0.5, 0.25]).unwrap();
        let report = lipschitz_perturbation_check(&t, 64, 64, 17, 50).unwrap();
        assert!(report.pass, "max shift {}", report.max_rank_shift);
    }
}
