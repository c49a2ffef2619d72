//! Assembly of the regularity constant, the excess constant `M` and the two
//! upper bounds on the expected simultaneous renewal time.

use serde::{Deserialize, Serialize};

use crate::chain_model::{gamma0 as stay_infimum, sup_updown_product, ChainSchedule};
use crate::dominator::{feasible_p_interval, moments, DominationParams, Moments};
use crate::error::{Error, Result};

/// Hitting mass allowed to remain beyond the horizon in `expected_theta0`.
pub const THETA0_RESIDUAL_LIMIT: f64 = 1e-6;
pub const GRID_POINTS: usize = 256;
pub const GRID_OFFSET: f64 = 1e-3;

/// `exp(mu1_hat * ln(gamma0) / gamma0)`.
pub fn gamma_from(gamma0: f64, mu1_hat: f64) -> Result<f64> {
    if !(gamma0 > 0.0 && gamma0 <= 1.0) {
        return Err(if gamma0 == 0.0 {
            Error::ZeroGamma0
        } else {
            Error::InvalidArgument(format!("gamma0 must lie in (0, 1], got {gamma0}"))
        });
    }
    if !(mu1_hat >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "mu1_hat must be at least 1, got {mu1_hat}"
        )));
    }
    Ok((mu1_hat * gamma0.ln() / gamma0).exp())
}

/// `M = mu2_hat + mu1_hat * (1/gamma + n0)`.
pub fn big_m(mu1_hat: f64, mu2_hat: f64, gamma: f64, n0: u64) -> f64 {
    mu2_hat + mu1_hat * (1.0 / gamma + n0 as f64)
}

pub fn theorem1_bound(e_theta1: f64, e_theta2: f64, m: f64, gamma: f64) -> f64 {
    e_theta1 + e_theta2 + m / gamma
}

/// Bound for two chains started at `0` with `n0 = 0`.
pub fn theorem2_bound(mu1_hat: f64, mu2_hat: f64, gamma: f64) -> f64 {
    mu2_hat / gamma + mu1_hat / (gamma * gamma)
}

/// How the walk parameter `p` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PMode {
    MaxFeasible,
    GridOptimize,
    Fixed(f64),
}

impl std::fmt::Display for PMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PMode::MaxFeasible => write!(f, "max_feasible"),
            PMode::GridOptimize => write!(f, "grid_optimize"),
            PMode::Fixed(p) => write!(f, "fixed:{p}"),
        }
    }
}

/// Every intermediate of the bound pipeline, flat for JSON output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub gamma0: f64,
    pub c: f64,
    pub p_mode: String,
    pub p: f64,
    pub p_max: f64,
    pub mu1_hat: f64,
    pub mu1_hat_series: f64,
    /// Series value; authoritative.
    pub mu2_hat: f64,
    pub mu2_hat_printed: f64,
    pub mu2_hat_generating_function: f64,
    pub mu2_hat_floor: f64,
    pub mu2_printed_consistent: bool,
    pub mu2_generating_function_agrees: bool,
    pub gamma: f64,
    /// Which dominant moment enters the exponent of `gamma`.
    pub gamma_uses: String,
    pub n0: u64,
    pub big_m: f64,
    pub start_state1: u64,
    pub start_state2: u64,
    pub e_theta1: f64,
    pub e_theta2: f64,
    /// False when a first-hitting expectation is only a lower bound.
    pub e_theta_complete: bool,
    pub bound_thm1: f64,
    /// Present when `n0 = 0` and both chains start at `0`.
    pub bound_thm2: Option<f64>,
}

struct Core {
    p: f64,
    p_max: f64,
    moments: Moments,
    gamma: f64,
}

fn core_at(p: f64, c: f64, p_max: f64, gamma0: f64) -> Result<Core> {
    DominationParams::new(p, c)?;
    let moments = moments(p)?;
    let gamma = gamma_from(gamma0, moments.mu1_hat)?;
    Ok(Core {
        p,
        p_max,
        moments,
        gamma,
    })
}

fn select(c: f64, gamma0: f64, mode: PMode) -> Result<Core> {
    let interval = feasible_p_interval(c)?;
    let p_max = interval.p_max;
    match mode {
        PMode::MaxFeasible => core_at(p_max, c, p_max, gamma0),
        PMode::Fixed(p) => {
            if !interval.contains(p) {
                return Err(Error::InvalidArgument(format!(
                    "fixed p = {p} is outside the feasible interval (1/2, {p_max}]"
                )));
            }
            core_at(p, c, p_max, gamma0)
        }
        PMode::GridOptimize => {
            let lo = 0.5 + GRID_OFFSET;
            let grid: Vec<f64> = if p_max <= lo {
                vec![p_max]
            } else {
                (0..GRID_POINTS)
                    .map(|k| {
                        if k + 1 == GRID_POINTS {
                            p_max
                        } else {
                            lo + (p_max - lo) * k as f64 / (GRID_POINTS - 1) as f64
                        }
                    })
                    .collect()
            };
            let mut best: Option<(f64, Core)> = None;
            for p in grid {
                let core = core_at(p, c, p_max, gamma0)?;
                let bound = theorem2_bound(core.moments.mu1_hat, core.moments.mu2_hat, core.gamma);
                if best.as_ref().is_none_or(|(b, _)| bound < *b) {
                    best = Some((bound, core));
                }
            }
            Ok(best.expect("grid is nonempty").1)
        }
    }
}

fn assemble(
    gamma0: f64,
    c: f64,
    mode: PMode,
    core: Core,
    n0: u64,
    starts: [u64; 2],
    thetas: [Theta0Expectation; 2],
) -> BoundReport {
    let Core {
        p,
        p_max,
        moments,
        gamma,
    } = core;
    let m = big_m(moments.mu1_hat, moments.mu2_hat, gamma, n0);
    let bound_thm2 = (n0 == 0 && starts == [0, 0])
        .then(|| theorem2_bound(moments.mu1_hat, moments.mu2_hat, gamma));
    let d = &moments.diagnostics;
    BoundReport {
        gamma0,
        c,
        p_mode: mode.to_string(),
        p,
        p_max,
        mu1_hat: moments.mu1_hat,
        mu1_hat_series: moments.mu1_hat_series,
        mu2_hat: moments.mu2_hat,
        mu2_hat_printed: d.printed,
        mu2_hat_generating_function: d.generating_function,
        mu2_hat_floor: d.floor,
        mu2_printed_consistent: d.printed_consistent,
        mu2_generating_function_agrees: d.generating_function_agrees,
        gamma,
        gamma_uses: "mu1_hat".into(),
        n0,
        big_m: m,
        start_state1: starts[0],
        start_state2: starts[1],
        e_theta1: thetas[0].value,
        e_theta2: thetas[1].value,
        e_theta_complete: thetas[0].complete && thetas[1].complete,
        bound_thm1: theorem1_bound(thetas[0].value, thetas[1].value, m, gamma),
        bound_thm2,
    }
}

/// Chooses `p` and returns the report for chains started at `0` with `n0 = 0`.
pub fn pick_p(c: f64, gamma0: f64, mode: PMode) -> Result<(f64, BoundReport)> {
    let core = select(c, gamma0, mode)?;
    let p = core.p;
    let zero = Theta0Expectation {
        value: 0.0,
        residual_mass: 0.0,
        complete: true,
    };
    Ok((p, assemble(gamma0, c, mode, core, 0, [0, 0], [zero, zero])))
}

/// The full pipeline for a pair of chains.
pub fn bound_report(
    schedules: [&ChainSchedule; 2],
    start_states: [u64; 2],
    n0: u64,
    mode: PMode,
    theta_horizon: usize,
) -> Result<BoundReport> {
    let gamma0 = stay_infimum(schedules[0], schedules[1])?;
    let c = sup_updown_product(schedules[0], schedules[1]);
    let core = select(c, gamma0, mode)?;
    let thetas = [
        expected_theta0(schedules[0], start_states[0], theta_horizon)?,
        expected_theta0(schedules[1], start_states[1], theta_horizon)?,
    ];
    Ok(assemble(gamma0, c, mode, core, n0, start_states, thetas))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theta0Expectation {
    pub value: f64,
    /// Probability of not having hit `0` by the horizon.
    pub residual_mass: f64,
    pub complete: bool,
}

/// Expected first hitting time of `0` from `start_state` at time `0`.
///
/// Truncated at `horizon` steps; when more than [`THETA0_RESIDUAL_LIMIT`]
/// of the mass is still out, `value` is a lower bound and `complete` is false.
pub fn expected_theta0(
    schedule: &ChainSchedule,
    start_state: u64,
    horizon: usize,
) -> Result<Theta0Expectation> {
    if start_state == 0 {
        return Ok(Theta0Expectation {
            value: 0.0,
            residual_mass: 0.0,
            complete: true,
        });
    }
    if horizon < 1 {
        return Err(Error::InvalidArgument(
            "hitting-time horizon must be at least 1".into(),
        ));
    }
    let s = start_state as usize;
    let width = s + horizon + 2;
    let mut mass = vec![0.0; width];
    let mut next = vec![0.0; width];
    mass[s] = 1.0;
    let mut expectation = 0.0;
    let mut hit = 0.0;
    for k in 0..horizon {
        let t = k as u64;
        let lo = if s > k { s - k } else { 1 };
        let hi = s + k;
        let mut arrived = 0.0;
        for h in lo..=hi {
            let m = mass[h];
            if m == 0.0 {
                continue;
            }
            let down = schedule.alpha_at(t, h as u64);
            if h == 1 {
                arrived += m * down;
            } else {
                next[h - 1] += m * down;
            }
            next[h + 1] += m * (1.0 - down);
        }
        expectation += (k + 1) as f64 * arrived;
        hit += arrived;
        std::mem::swap(&mut mass, &mut next);
        next[lo.saturating_sub(1)..=hi + 1]
            .iter_mut()
            .for_each(|v| *v = 0.0);
    }
    let residual_mass = (1.0 - hit).max(0.0);
    Ok(Theta0Expectation {
        value: expectation,
        residual_mass,
        complete: residual_mass <= THETA0_RESIDUAL_LIMIT,
    })
}
