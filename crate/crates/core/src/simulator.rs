//! Monte Carlo engine for pairs of chains.
//!
//! Every replication draws from its own ChaCha stream keyed by
//! `(seed, replication, chain)`, and aggregation runs in replication order,
//! so results do not depend on the number of worker threads.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain_model::{ChainLabel, ChainSchedule};
use crate::error::{Error, Result};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;
pub const DEFAULT_CENSOR_BUDGET: f64 = 1e-3;
const INITIAL_CHUNK: u64 = 64;

/// Random stream for one chain of one replication.
pub fn stream_for(seed: u64, replication: u64, label: ChainLabel) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(
        replication
            .wrapping_mul(2)
            .wrapping_add(label.index() as u64),
    );
    rng
}

/// Visits to `{0}` of one simulated path, as absolute times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenewalTrajectory {
    pub label: ChainLabel,
    pub start_state: u64,
    /// Last simulated time; nothing is known beyond it.
    pub horizon: u64,
    /// `tau[0]` is the first hitting time, later entries the successive returns.
    pub tau: Vec<u64>,
}

impl RenewalTrajectory {
    pub fn theta0(&self) -> Option<u64> {
        self.tau.first().copied()
    }
}

/// Simulates one chain step by step and records its visits to `{0}`.
/// Can be extended incrementally; step `t` always consumes the `t`-th draw.
#[derive(Debug)]
pub struct TrajectoryBuilder<'a, R> {
    schedule: &'a ChainSchedule,
    state: u64,
    rng: R,
    traj: RenewalTrajectory,
}

impl<'a, R: RngCore> TrajectoryBuilder<'a, R> {
    pub fn new(schedule: &'a ChainSchedule, start_state: u64, start_time: u64, rng: R) -> Self {
        let tau = if start_state == 0 {
            vec![start_time]
        } else {
            Vec::new()
        };
        TrajectoryBuilder {
            schedule,
            state: start_state,
            rng,
            traj: RenewalTrajectory {
                label: schedule.label,
                start_state,
                horizon: start_time,
                tau,
            },
        }
    }

    pub fn advance_to(&mut self, until: u64) {
        let mut t = self.traj.horizon;
        while t < until {
            let u: f64 = self.rng.random();
            self.state = self.schedule.step(t, self.state, u);
            t += 1;
            if self.state == 0 {
                self.traj.tau.push(t);
            }
        }
        self.traj.horizon = self.traj.horizon.max(until);
    }

    pub fn trajectory(&self) -> &RenewalTrajectory {
        &self.traj
    }

    pub fn into_trajectory(self) -> RenewalTrajectory {
        self.traj
    }
}

pub fn simulate_renewals<R: RngCore>(
    schedule: &ChainSchedule,
    start_state: u64,
    horizon: u64,
    stream: &mut R,
) -> RenewalTrajectory {
    let mut builder = TrajectoryBuilder::new(schedule, start_state, 0, stream);
    builder.advance_to(horizon);
    builder.into_trajectory()
}

/// First strictly positive common visit time; `None` when censored.
pub fn simultaneous_t(first: &RenewalTrajectory, second: &RenewalTrajectory) -> Option<u64> {
    let horizon = first.horizon.min(second.horizon);
    let (a, b) = (&first.tau, &second.tau);
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        let (x, y) = (a[i], b[j]);
        if x > horizon || y > horizon {
            return None;
        }
        match x.cmp(&y) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal if x == 0 => {
                i += 1;
                j += 1;
            }
            std::cmp::Ordering::Equal => return Some(x),
        }
    }
    None
}

/// First visit strictly after `m`, as an absolute time; `None` when censored.
pub fn excess_at(traj: &RenewalTrajectory, m: u64) -> Option<u64> {
    let idx = traj.tau.partition_point(|&t| t <= m);
    traj.tau.get(idx).copied()
}

/// The alternating coupling trials between the two renewal processes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingTrialTrace {
    /// Index into chain 1's visits for even trials, chain 2's for odd ones.
    pub nu: Vec<usize>,
    pub gaps: Vec<u64>,
    /// First trial with a zero gap.
    pub tau_stop: Option<usize>,
    pub censored: bool,
}

impl CouplingTrialTrace {
    /// `sum_{k <= tau_stop} B_k`, the time at which the trials coincide.
    pub fn gap_sum(&self) -> u64 {
        self.gaps.iter().sum()
    }
}

pub fn coupling_trials(
    first: &RenewalTrajectory,
    second: &RenewalTrajectory,
    n0: u64,
) -> CouplingTrialTrace {
    let mut trace = CouplingTrialTrace {
        nu: Vec::new(),
        gaps: Vec::new(),
        tau_stop: None,
        censored: true,
    };

    let Some(nu0) = (1..first.tau.len()).find(|&j| first.tau[j] > n0) else {
        return trace;
    };
    let mut anchor = first.tau[nu0];
    trace.nu.push(nu0);
    trace.gaps.push(anchor);

    let mut k = 1;
    loop {
        let other = if k % 2 == 1 { second } else { first };
        if anchor > other.horizon {
            return trace;
        }
        let at = other.tau.partition_point(|&t| t < anchor);
        let j = if other.tau.get(at) == Some(&anchor) {
            at
        } else {
            let past = other.tau.partition_point(|&t| t <= anchor + n0);
            if past == other.tau.len() {
                return trace;
            }
            past
        };
        let gap = other.tau[j] - anchor;
        trace.nu.push(j);
        trace.gaps.push(gap);
        if gap == 0 {
            trace.tau_stop = Some(k);
            trace.censored = false;
            return trace;
        }
        anchor = other.tau[j];
        k += 1;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub schedules: [ChainSchedule; 2],
    pub start_states: [u64; 2],
    pub horizon: u64,
    pub n_reps: u64,
    pub seed: u64,
    pub n0: u64,
    /// Times `m` at which the residual wait `R_m - m` is measured.
    pub probe_times: Vec<u64>,
    /// Largest `n` for the empirical `P{tau > n}`.
    pub tail_len: usize,
    pub censor_budget: f64,
}

impl SimConfig {
    pub fn new(
        schedules: [ChainSchedule; 2],
        start_states: [u64; 2],
        horizon: u64,
        n_reps: u64,
        seed: u64,
    ) -> Self {
        SimConfig {
            schedules,
            start_states,
            horizon,
            n_reps,
            seed,
            n0: 0,
            probe_times: vec![10, 50, 100],
            tail_len: 10,
            censor_budget: DEFAULT_CENSOR_BUDGET,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_reps < 1 {
            return Err(Error::InvalidArgument("n_reps must be at least 1".into()));
        }
        if self.horizon < 1 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        if let Some(m) = self.probe_times.iter().find(|&&m| m >= self.horizon) {
            return Err(Error::InvalidArgument(format!(
                "probe time {m} is not below the horizon"
            )));
        }
        Ok(())
    }
}

/// Outcome of one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: u64,
    pub theta0: [Option<u64>; 2],
    pub t: Option<u64>,
    pub tau_stop: Option<usize>,
    pub gap_sum: Option<u64>,
    /// Residual waits `R_m - m` per probe time, per chain.
    pub residual: Vec<[Option<u64>; 2]>,
    /// `T <= theta0_1 + sum B_k`; `None` when either side is censored.
    pub decomposition_ok: Option<bool>,
    /// `T > 0`, `T` a visit of both chains, `T >= max theta0`.
    pub t_consistent: Option<bool>,
    pub censored: bool,
}

fn run_replication(config: &SimConfig, rep: u64) -> RepRecord {
    let [s1, s2] = &config.schedules;
    let mut a = TrajectoryBuilder::new(
        s1,
        config.start_states[0],
        0,
        stream_for(config.seed, rep, s1.label),
    );
    let mut b = TrajectoryBuilder::new(
        s2,
        config.start_states[1],
        0,
        stream_for(config.seed, rep, s2.label),
    );
    let max_probe = config.probe_times.iter().copied().max().unwrap_or(0);
    let mut until = INITIAL_CHUNK.max(max_probe + 2).min(config.horizon);

    loop {
        a.advance_to(until);
        b.advance_to(until);
        let (ta, tb) = (a.trajectory(), b.trajectory());
        let t = simultaneous_t(ta, tb);
        let trace = coupling_trials(ta, tb, config.n0);
        let residual: Vec<[Option<u64>; 2]> = config
            .probe_times
            .iter()
            .map(|&m| {
                [
                    excess_at(ta, m).map(|r| r - m),
                    excess_at(tb, m).map(|r| r - m),
                ]
            })
            .collect();
        let resolved =
            t.is_some() && !trace.censored && residual.iter().flatten().all(Option::is_some);
        if resolved || until >= config.horizon {
            let theta0 = [ta.theta0(), tb.theta0()];
            let gap_sum = (!trace.censored).then(|| trace.gap_sum());
            let decomposition_ok = match (t, theta0[0], gap_sum) {
                (Some(t), Some(th), Some(sum)) => Some(t <= th + sum),
                _ => None,
            };
            let t_consistent = t.map(|t| {
                let floor = theta0[0]
                    .unwrap_or(u64::MAX)
                    .max(theta0[1].unwrap_or(u64::MAX));
                t > 0
                    && t >= floor
                    && ta.tau.binary_search(&t).is_ok()
                    && tb.tau.binary_search(&t).is_ok()
            });
            return RepRecord {
                rep,
                theta0,
                t,
                tau_stop: trace.tau_stop,
                gap_sum,
                residual,
                decomposition_ok,
                t_consistent,
                censored: !resolved,
            };
        }
        until = until.saturating_mul(2).min(config.horizon);
    }
}

/// Mean with a normal 95% interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEstimate {
    pub n_reps: u64,
    pub mean: f64,
    pub std_error: f64,
    pub ci95: [f64; 2],
    pub censored: u64,
    pub valid: bool,
}

impl SimEstimate {
    fn from_samples(samples: impl Iterator<Item = Option<f64>>, budget: f64) -> Self {
        let (mut n, mut mean, mut m2, mut censored) = (0u64, 0.0f64, 0.0f64, 0u64);
        for s in samples {
            match s {
                Some(x) => {
                    n += 1;
                    let d = x - mean;
                    mean += d / n as f64;
                    m2 += d * (x - mean);
                }
                None => censored += 1,
            }
        }
        let total = n + censored;
        if n == 0 {
            return SimEstimate {
                n_reps: 0,
                mean: 0.0,
                std_error: 0.0,
                ci95: [0.0, 0.0],
                censored,
                valid: false,
            };
        }
        let var = if n > 1 { m2 / (n - 1) as f64 } else { 0.0 };
        let std_error = (var / n as f64).sqrt();
        SimEstimate {
            n_reps: n,
            mean,
            std_error,
            ci95: [mean - Z95 * std_error, mean + Z95 * std_error],
            censored,
            valid: censored as f64 <= budget * total as f64,
        }
    }

    pub fn upper95(&self) -> f64 {
        self.ci95[1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailPoint {
    pub n: usize,
    pub prob: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualEstimate {
    pub m: u64,
    pub chain1: SimEstimate,
    pub chain2: SimEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathwiseSummary {
    pub checked: u64,
    pub decomposition_violations: u64,
    pub t_violations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub n_reps: u64,
    pub seed: u64,
    pub horizon: u64,
    pub n0: u64,
    pub et: SimEstimate,
    pub e_theta0: [SimEstimate; 2],
    /// Empirical `P{tau > n}` over uncensored coupling traces.
    pub tail_tau: Vec<TailPoint>,
    pub trace_censored: u64,
    pub residual: Vec<ResidualEstimate>,
    pub pathwise: PathwiseSummary,
    pub censored_reps: u64,
    pub valid: bool,
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub summary: SimSummary,
    pub records: Vec<RepRecord>,
}

/// Runs all replications on `workers` threads and aggregates in replication order.
pub fn estimate(config: &SimConfig, workers: usize) -> Result<SimOutcome> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()?;
    let records: Vec<RepRecord> = pool.install(|| {
        (0..config.n_reps)
            .into_par_iter()
            .map(|rep| run_replication(config, rep))
            .collect()
    });
    let summary = summarize(config, &records);
    Ok(SimOutcome { summary, records })
}

fn summarize(config: &SimConfig, records: &[RepRecord]) -> SimSummary {
    let budget = config.censor_budget;
    let as_f = |v: Option<u64>| v.map(|x| x as f64);
    let et = SimEstimate::from_samples(records.iter().map(|r| as_f(r.t)), budget);
    let e_theta0 = [0, 1]
        .map(|l| SimEstimate::from_samples(records.iter().map(|r| as_f(r.theta0[l])), budget));

    let stops: Vec<usize> = records.iter().filter_map(|r| r.tau_stop).collect();
    let trace_censored = records.len() as u64 - stops.len() as u64;
    let tail_tau = (1..=config.tail_len)
        .map(|n| {
            let k = stops.len() as f64;
            let prob = if k > 0.0 {
                stops.iter().filter(|&&s| s > n).count() as f64 / k
            } else {
                0.0
            };
            let std_error = if k > 0.0 {
                (prob * (1.0 - prob) / k).sqrt()
            } else {
                0.0
            };
            TailPoint { n, prob, std_error }
        })
        .collect();

    let residual = config
        .probe_times
        .iter()
        .enumerate()
        .map(|(idx, &m)| ResidualEstimate {
            m,
            chain1: SimEstimate::from_samples(
                records.iter().map(|r| as_f(r.residual[idx][0])),
                budget,
            ),
            chain2: SimEstimate::from_samples(
                records.iter().map(|r| as_f(r.residual[idx][1])),
                budget,
            ),
        })
        .collect();

    let pathwise = PathwiseSummary {
        checked: records
            .iter()
            .filter(|r| r.decomposition_ok.is_some())
            .count() as u64,
        decomposition_violations: records
            .iter()
            .filter(|r| r.decomposition_ok == Some(false))
            .count() as u64,
        t_violations: records
            .iter()
            .filter(|r| r.t_consistent == Some(false))
            .count() as u64,
    };
    let censored_reps = records.iter().filter(|r| r.censored).count() as u64;

    SimSummary {
        n_reps: config.n_reps,
        seed: config.seed,
        horizon: config.horizon,
        n0: config.n0,
        et,
        e_theta0,
        tail_tau,
        trace_censored,
        residual,
        pathwise,
        censored_reps,
        valid: censored_reps as f64 <= budget * config.n_reps as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain_model::{ScheduleKind, ScheduleSpec};

    fn traj(tau: &[u64], horizon: u64) -> RenewalTrajectory {
        RenewalTrajectory {
            label: ChainLabel::First,
            start_state: 0,
            horizon,
            tau: tau.to_vec(),
        }
    }

    fn constant(a: f64, label: ChainLabel) -> ChainSchedule {
        ChainSchedule::new(ScheduleSpec::constant(a).unwrap(), label)
    }

    #[test]
    fn starts_in_zero() {
        let s = constant(0.9, ChainLabel::First);
        let t = simulate_renewals(&s, 0, 50, &mut stream_for(1, 0, ChainLabel::First));
        assert_eq!(t.theta0(), Some(0));
        assert!(t.tau.windows(2).all(|w| w[1] > w[0]));
        assert!(t.tau.iter().all(|&x| x <= 50));
    }

    #[test]
    fn absorbing_chain_visits_every_step() {
        let s = ChainSchedule::new(
            ScheduleSpec::new_unchecked(ScheduleKind::Constant { value: 1.0 }, 1.0, 1.0),
            ChainLabel::First,
        );
        let t = simulate_renewals(&s, 0, 5, &mut stream_for(3, 0, ChainLabel::First));
        assert_eq!(t.tau, vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(simultaneous_t(&t, &t), Some(1));
    }

    #[test]
    fn simultaneous_examples() {
        assert_eq!(
            simultaneous_t(&traj(&[0, 2, 4, 6], 6), &traj(&[0, 3, 4], 6)),
            Some(4)
        );
        assert_eq!(simultaneous_t(&traj(&[0, 2], 3), &traj(&[0, 3], 3)), None);
        assert_eq!(simultaneous_t(&traj(&[0], 9), &traj(&[0], 9)), None);
    }

    #[test]
    fn excess_examples() {
        let t = traj(&[0, 2, 4], 5);
        assert_eq!(excess_at(&t, 2), Some(4));
        assert_eq!(excess_at(&t, 3), Some(4));
        assert_eq!(excess_at(&t, 4), None);
    }

    #[test]
    fn coupling_trace_examples() {
        let trace = coupling_trials(&traj(&[0, 3, 6], 8), &traj(&[0, 4, 6], 8), 2);
        assert_eq!(trace.nu, vec![1, 2, 2]);
        assert_eq!(trace.gaps, vec![3, 3, 0]);
        assert_eq!(trace.tau_stop, Some(2));
        assert!(!trace.censored);

        let same = coupling_trials(&traj(&[0, 3, 5], 8), &traj(&[0, 3, 5], 8), 2);
        assert_eq!(same.tau_stop, Some(1));
        assert_eq!(same.gaps, vec![3, 0]);

        let stuck = coupling_trials(&traj(&[0, 3], 8), &traj(&[0, 4], 8), 2);
        assert!(stuck.censored);
        assert_eq!(stuck.tau_stop, None);
    }

    #[test]
    fn decomposition_holds_on_paths() {
        let s1 = ChainSchedule::new(
            ScheduleSpec::bounded_random(1, 0.8, 0.9).unwrap(),
            ChainLabel::First,
        );
        let s2 = ChainSchedule::new(
            ScheduleSpec::bounded_random(2, 0.8, 0.9).unwrap(),
            ChainLabel::Second,
        );
        for rep in 0..2_000 {
            let a = simulate_renewals(
                &s1,
                rep % 3,
                400,
                &mut stream_for(5, rep, ChainLabel::First),
            );
            let b = simulate_renewals(
                &s2,
                rep % 4,
                400,
                &mut stream_for(5, rep, ChainLabel::Second),
            );
            for n0 in [0, 3] {
                let trace = coupling_trials(&a, &b, n0);
                if let (Some(t), false) = (simultaneous_t(&a, &b), trace.censored) {
                    assert!(t <= a.theta0().unwrap() + trace.gap_sum());
                    let stop = trace.tau_stop.unwrap();
                    assert!(trace.gaps[..stop].iter().all(|&g| g > n0));
                }
            }
        }
    }

    #[test]
    fn incremental_extension_matches_single_run() {
        let s = ChainSchedule::new(
            ScheduleSpec::bounded_random(8, 0.6, 0.9).unwrap(),
            ChainLabel::Second,
        );
        let whole = simulate_renewals(&s, 2, 500, &mut stream_for(9, 4, ChainLabel::Second));
        let mut b = TrajectoryBuilder::new(&s, 2, 0, stream_for(9, 4, ChainLabel::Second));
        for until in [10, 11, 64, 300, 500] {
            b.advance_to(until);
        }
        assert_eq!(b.into_trajectory(), whole);
    }

    #[test]
    fn estimate_rejects_zero_reps() {
        let cfg = SimConfig::new(
            [
                constant(0.9, ChainLabel::First),
                constant(0.9, ChainLabel::Second),
            ],
            [0, 0],
            1000,
            0,
            1,
        );
        assert!(estimate(&cfg, 1).is_err());
    }

    #[test]
    fn estimate_is_worker_invariant() {
        let mut cfg = SimConfig::new(
            [
                constant(0.9, ChainLabel::First),
                constant(0.85, ChainLabel::Second),
            ],
            [1, 2],
            2000,
            3000,
            42,
        );
        cfg.n0 = 2;
        let one = estimate(&cfg, 1).unwrap();
        let many = estimate(&cfg, 8).unwrap();
        assert_eq!(one.records, many.records);
        assert_eq!(one.summary, many.summary);
        assert_eq!(one.summary.pathwise.decomposition_violations, 0);
        assert_eq!(one.summary.pathwise.t_violations, 0);
    }

    #[test]
    fn short_horizon_is_censored() {
        let mut cfg = SimConfig::new(
            [
                constant(0.6, ChainLabel::First),
                constant(0.6, ChainLabel::Second),
            ],
            [30, 30],
            40,
            200,
            7,
        );
        cfg.probe_times = vec![10];
        let out = estimate(&cfg, 2).unwrap();
        assert!(out.summary.censored_reps > 0);
        assert!(!out.summary.valid);
        assert!(!out.summary.et.valid);
    }
}
