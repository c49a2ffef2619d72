//! Exact first-return laws, tails and renewal sequences by dynamic programming,
//! plus finite-horizon certificates for the regularity and domination
//! conditions.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::chain_model::{ChainLabel, ChainSchedule};
use crate::dominator::DominatingLaw;
use crate::error::{Error, Result};

/// Absolute tolerance for the domination comparison.
pub const DOMINATION_TOLERANCE: f64 = 1e-12;

/// First-return law to `{0}` for a chain sitting at `0` at time `t0`.
///
/// `g[n]` is the probability that the first re-entry happens at `t0 + n`
/// (`g[0]` is unused and zero). `tail[n]` is the mass that has not returned
/// by step `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstReturnLaw {
    pub t0: u64,
    pub g: Vec<f64>,
    pub tail: Vec<f64>,
    /// Largest `|absorbed + alive - 1|` seen across DP steps.
    pub conservation_error: f64,
}

impl FirstReturnLaw {
    pub fn horizon(&self) -> usize {
        self.g.len() - 1
    }

    /// Mean return time truncated at the horizon.
    pub fn truncated_mean(&self) -> f64 {
        self.g.iter().enumerate().map(|(n, g)| n as f64 * g).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenewalSequence {
    pub t0: u64,
    pub u: Vec<f64>,
}

/// Forward DP over `(step, height)`, absorbing at `0`.
pub fn first_return_law(
    schedule: &ChainSchedule,
    t0: u64,
    horizon: usize,
) -> Result<FirstReturnLaw> {
    if horizon < 1 {
        return Err(Error::InvalidArgument(
            "first-return horizon must be at least 1".into(),
        ));
    }
    let mut g = vec![0.0; horizon + 1];
    // mass[h] = probability of being at height h >= 1 without having returned
    let mut mass = vec![0.0; horizon + 2];
    let mut next = vec![0.0; horizon + 2];

    let stay = schedule.alpha_at(t0, 0);
    g[1] = stay;
    mass[1] = 1.0 - stay;
    let mut absorbed = stay;
    let mut conservation_error = (absorbed + mass[1] - 1.0).abs();

    for k in 1..horizon {
        let t = t0 + k as u64;
        // after k steps only heights with the parity of k are occupied
        let first = if k % 2 == 1 { 1 } else { 2 };
        let mut returned = 0.0;
        for h in (first..=k).step_by(2) {
            let m = mass[h];
            if m == 0.0 {
                continue;
            }
            let down = schedule.alpha_at(t, h as u64);
            if h == 1 {
                returned += m * down;
            } else {
                next[h - 1] += m * down;
            }
            next[h + 1] += m * (1.0 - down);
        }
        g[k + 1] = returned;
        absorbed += returned;
        std::mem::swap(&mut mass, &mut next);
        next[..k + 2].iter_mut().for_each(|v| *v = 0.0);
        let alive: f64 = mass[..k + 2].iter().sum();
        conservation_error = conservation_error.max((absorbed + alive - 1.0).abs());
    }

    let tail = tails(&g);
    Ok(FirstReturnLaw {
        t0,
        g,
        tail,
        conservation_error,
    })
}

/// `G_n = 1 - sum_{k <= n} g_k` for `n = 0..=N`.
pub fn tails(g: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    g.iter()
        .enumerate()
        .map(|(n, v)| {
            if n > 0 {
                acc += v;
            }
            1.0 - acc
        })
        .collect()
}

/// Cache of first-return laws of one chain, keyed by start time.
///
/// Owned by a single worker; parallel callers each build their own.
#[derive(Debug)]
pub struct LawCache<'a> {
    schedule: &'a ChainSchedule,
    horizon: usize,
    laws: HashMap<u64, FirstReturnLaw>,
}

impl<'a> LawCache<'a> {
    pub fn new(schedule: &'a ChainSchedule, horizon: usize) -> Self {
        LawCache {
            schedule,
            horizon,
            laws: HashMap::new(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn schedule(&self) -> &ChainSchedule {
        self.schedule
    }

    pub fn get(&mut self, t0: u64) -> Result<&FirstReturnLaw> {
        if !self.laws.contains_key(&t0) {
            let law = first_return_law(self.schedule, t0, self.horizon)?;
            self.laws.insert(t0, law);
        }
        Ok(&self.laws[&t0])
    }

    fn ensure(&mut self, start: u64, count: usize) -> Result<()> {
        for t in start..start + count as u64 {
            self.get(t)?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.laws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.laws.is_empty()
    }
}

/// `u_0 = 1`, `u_n = sum_{k<n} u_k g^{(t0+k)}_{n-k}`.
pub fn renewal_sequence(
    schedule: &ChainSchedule,
    t0: u64,
    horizon: usize,
) -> Result<RenewalSequence> {
    let mut cache = LawCache::new(schedule, horizon.max(1));
    renewal_sequence_with(&mut cache, t0, horizon)
}

pub fn renewal_sequence_with(
    cache: &mut LawCache<'_>,
    t0: u64,
    horizon: usize,
) -> Result<RenewalSequence> {
    if cache.horizon() < horizon {
        return Err(Error::HorizonTooShort(format!(
            "renewal sequence to {horizon} needs laws of horizon {horizon}, cache has {}",
            cache.horizon()
        )));
    }
    cache.ensure(t0, horizon)?;
    let laws: Vec<&FirstReturnLaw> = (0..horizon as u64)
        .map(|k| &cache.laws[&(t0 + k)])
        .collect();
    let mut u = vec![0.0; horizon + 1];
    u[0] = 1.0;
    for n in 1..=horizon {
        u[n] = (0..n).map(|k| u[k] * laws[k].g[n - k]).sum();
    }
    Ok(RenewalSequence { t0, u })
}

/// Largest deviation of `seq` from the convolution recursion.
pub fn convolution_residual(cache: &mut LawCache<'_>, seq: &RenewalSequence) -> Result<f64> {
    let n_max = seq.u.len() - 1;
    cache.ensure(seq.t0, n_max)?;
    let mut worst = (seq.u[0] - 1.0).abs();
    for n in 1..=n_max {
        let rhs: f64 = (0..n)
            .map(|k| seq.u[k] * cache.laws[&(seq.t0 + k as u64)].g[n - k])
            .sum();
        worst = worst.max((seq.u[n] - rhs).abs());
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionAReport {
    pub gamma: f64,
    pub n0: u64,
    pub t_max: u64,
    pub horizon: usize,
    pub min_u: f64,
    pub argmin_t: u64,
    pub argmin_n: usize,
    pub argmin_chain: ChainLabel,
    pub pass: bool,
}

/// Finite-horizon certificate that `u^{(t)}_n >= gamma` for both chains,
/// `t <= t_max` and `n0 <= n <= horizon`.
pub fn check_condition_a(
    schedules: [&ChainSchedule; 2],
    gamma: f64,
    n0: u64,
    t_max: u64,
    horizon: usize,
) -> Result<ConditionAReport> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "gamma must lie in (0, 1], got {gamma}"
        )));
    }
    let mut best = (f64::INFINITY, 0, 0, ChainLabel::First);
    let start_n = (n0 as usize).min(horizon);
    for schedule in schedules {
        let mut cache = LawCache::new(schedule, horizon.max(1));
        for t in 0..=t_max {
            let seq = renewal_sequence_with(&mut cache, t, horizon)?;
            for (n, &u) in seq.u.iter().enumerate().skip(start_n) {
                if u < best.0 {
                    best = (u, t, n, schedule.label);
                }
            }
        }
    }
    Ok(ConditionAReport {
        gamma,
        n0,
        t_max,
        horizon,
        min_u: best.0,
        argmin_t: best.1,
        argmin_n: best.2,
        argmin_chain: best.3,
        pass: best.0 >= gamma,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominationReport {
    /// Start time at which the largest violation occurred.
    pub worst_t0: u64,
    pub worst_n: usize,
    /// `max_n (G_n - G_hat_n)`; negative when the dominant has slack everywhere.
    pub max_violation: f64,
    pub pass: bool,
}

/// Compares `G_n` against the dominant's tail for `n = 0..N-1`.
pub fn check_domination(
    law: &FirstReturnLaw,
    dominant: &DominatingLaw,
) -> Result<DominationReport> {
    let n_max = law.horizon();
    if dominant.horizon < n_max {
        return Err(Error::HorizonTooShort(format!(
            "dominant horizon {} below law horizon {n_max}",
            dominant.horizon
        )));
    }
    let (worst_n, max_violation) = (0..n_max)
        .map(|n| (n, law.tail[n] - dominant.tail_hat[n]))
        .fold(
            (0, f64::NEG_INFINITY),
            |acc, x| if x.1 > acc.1 { x } else { acc },
        );
    Ok(DominationReport {
        worst_t0: law.t0,
        worst_n,
        max_violation,
        pass: max_violation <= DOMINATION_TOLERANCE,
    })
}

/// Domination check over every start time `t0 <= t0_max`.
pub fn check_domination_grid(
    schedule: &ChainSchedule,
    dominant: &DominatingLaw,
    t0_max: u64,
    horizon: usize,
) -> Result<DominationReport> {
    let mut worst: Option<DominationReport> = None;
    for t0 in 0..=t0_max {
        let law = first_return_law(schedule, t0, horizon)?;
        let report = check_domination(&law, dominant)?;
        if worst
            .as_ref()
            .is_none_or(|w| report.max_violation > w.max_violation)
        {
            worst = Some(report);
        }
    }
    let mut report = worst.expect("t0 range is nonempty");
    report.pass = report.max_violation <= DOMINATION_TOLERANCE;
    Ok(report)
}
