//! The homogeneous random-walk dominant and its moments.
//!
//! The walk sits on the half-line, jumps from `0` to `1` with probability one
//! and from `h >= 1` moves down with probability `p`, up with `1 - p`. Its
//! first-return law `f` builds the dominating sequence `g_hat_1 = 1`,
//! `g_hat_n = f_n / p` for `n > 1`. The sequence is not a probability law; its
//! total mass exceeds one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance the moment series must reach before it is trusted.
pub const SERIES_RELATIVE_TOLERANCE: f64 = 1e-13;
/// Agreement tolerance used when comparing closed forms with the series.
pub const DIAGNOSTIC_TOLERANCE: f64 = 1e-9;
const MAX_SERIES_TERMS: usize = 500_000_000;

/// Slack allowed when checking `p(1-p) >= c` at the boundary root.
const FEASIBILITY_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominationParams {
    pub p: f64,
    pub c: f64,
}

impl DominationParams {
    pub fn new(p: f64, c: f64) -> Result<Self> {
        check_walk_p(p)?;
        if !(c >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "c must be nonnegative, got {c}"
            )));
        }
        if p * (1.0 - p) < c - FEASIBILITY_SLACK {
            return Err(Error::InvalidArgument(format!(
                "p = {p} violates p(1-p) >= c = {c}"
            )));
        }
        Ok(DominationParams { p, c })
    }
}

fn check_walk_p(p: f64) -> Result<()> {
    if p > 0.5 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "walk parameter p must lie in (1/2, 1), got {p}"
        )))
    }
}

/// The admissible range `(1/2, p_max]` for `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibleInterval {
    pub p_min_exclusive: f64,
    pub p_max: f64,
}

impl FeasibleInterval {
    pub fn contains(&self, p: f64) -> bool {
        p > self.p_min_exclusive && p <= self.p_max
    }
}

/// Solves `p(1-p) >= c`, `p > 1/2`; the upper root is `(1 + sqrt(1 - 4c)) / 2`.
pub fn feasible_p_interval(c: f64) -> Result<FeasibleInterval> {
    if !(c > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "c must be positive, got {c}"
        )));
    }
    if c >= 0.25 {
        return Err(Error::InfeasibleDomination { c });
    }
    Ok(FeasibleInterval {
        p_min_exclusive: 0.5,
        p_max: 0.5 * (1.0 + (1.0 - 4.0 * c).sqrt()),
    })
}

/// First-return law of the walk, indexed `0..=horizon`.
///
/// `f_{2n} = C(2n-1, n) p^n (1-p)^{n-1} / (2n-1)`, evaluated through the ratio
/// `f_{2n+2} / f_{2n} = 2(2n-1)/(n+1) * p(1-p)` so large `n` cannot overflow.
pub fn first_return_walk(p: f64, horizon: usize) -> Result<Vec<f64>> {
    check_walk_p(p)?;
    if horizon < 2 {
        return Err(Error::InvalidArgument(
            "walk horizon must be at least 2".into(),
        ));
    }
    let pq = p * (1.0 - p);
    let mut f = vec![0.0; horizon + 1];
    let mut current = p;
    let mut n = 1usize;
    while 2 * n <= horizon {
        f[2 * n] = current;
        current *= 2.0 * (2 * n - 1) as f64 / (n + 1) as f64 * pq;
        n += 1;
    }
    Ok(f)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominatingLaw {
    pub p: f64,
    pub horizon: usize,
    pub f: Vec<f64>,
    pub g_hat: Vec<f64>,
    /// `G_hat_n` for `n = 0..=horizon`, including the certified tail beyond the horizon.
    pub tail_hat: Vec<f64>,
    pub mu1_hat: f64,
    pub mu2_hat: f64,
    /// Upper bound on `sum_{k > horizon} g_hat_k`.
    pub tail_bound: f64,
}

impl DominatingLaw {
    pub fn total_mass(&self) -> f64 {
        self.tail_hat[0]
    }
}

/// Smallest even horizon whose certified dominant tail is below `eps`.
pub fn horizon_for_tail(p: f64, eps: f64) -> Result<usize> {
    check_walk_p(p)?;
    let r = 4.0 * p * (1.0 - p);
    let mut f = p;
    let mut n = 1usize;
    loop {
        let tail = f / p * r / (1.0 - r);
        if tail < eps {
            return Ok(2 * n);
        }
        f *= 2.0 * (2 * n - 1) as f64 / (n + 1) as f64 * p * (1.0 - p);
        n += 1;
        if n > MAX_SERIES_TERMS {
            return Err(Error::SeriesNotConverged { p, terms: n });
        }
    }
}

pub fn dominating_sequence(params: &DominationParams, horizon: usize) -> Result<DominatingLaw> {
    let p = params.p;
    let f = first_return_walk(p, horizon)?;
    let mut g_hat: Vec<f64> = f.iter().map(|v| v / p).collect();
    g_hat[0] = 0.0;
    g_hat[1] = 1.0;

    // f decreases along even indices with ratio below r = 4p(1-p).
    let r = 4.0 * p * (1.0 - p);
    let last_even = horizon - horizon % 2;
    let tail_bound = g_hat[last_even] * r / (1.0 - r);

    let mut tail_hat = vec![0.0; horizon + 1];
    let mut acc = tail_bound;
    for n in (0..=horizon).rev() {
        tail_hat[n] = acc;
        acc += g_hat[n];
    }

    let moments = moments(p)?;
    Ok(DominatingLaw {
        p,
        horizon,
        f,
        g_hat,
        tail_hat,
        mu1_hat: moments.mu1_hat,
        mu2_hat: moments.mu2_hat,
        tail_bound,
    })
}

/// Side-by-side values of the dominant's second moment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondMomentDiagnostics {
    /// Truncated series `sum n^2 g_hat_n`; the value that is used.
    pub series: f64,
    pub series_tail_bound: f64,
    pub series_terms: usize,
    /// `(2p-1)^{-1} (2 + 8(1-p)/(1-4p)) + 2/(2p-1) + 1`, as printed.
    pub printed: f64,
    /// `(F''(1) + F'(1)) / p + 1` from the walk's generating function.
    pub generating_function: f64,
    /// Smallest value compatible with `E[f^2] >= E[f]^2`.
    pub floor: f64,
    pub printed_consistent: bool,
    pub generating_function_agrees: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub p: f64,
    /// `2/(2p-1) + 1`.
    pub mu1_hat: f64,
    pub mu1_hat_series: f64,
    pub mu2_hat: f64,
    /// `sum n f_n` and `sum n^2 f_n` of the walk's own return law.
    pub walk_mean: f64,
    pub walk_second_moment: f64,
    pub diagnostics: SecondMomentDiagnostics,
}

/// Compensated summation.
#[derive(Default, Clone, Copy)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn printed_second_moment(p: f64) -> f64 {
    let d = 2.0 * p - 1.0;
    (2.0 + 8.0 * (1.0 - p) / (1.0 - 4.0 * p)) / d + 2.0 / d + 1.0
}

pub fn generating_function_second_moment(p: f64) -> f64 {
    let q = 1.0 - p;
    let d = 2.0 * p - 1.0;
    // F(s) = (1 - sqrt(1 - 4pq s^2)) / (2q); at s = 1, sqrt(1 - 4pq) = 2p - 1
    let f1 = 2.0 * p / d;
    let f2 = 2.0 * p / d + 8.0 * p * p * q / (d * d * d);
    (f2 + f1) / p + 1.0
}

pub fn closed_form_mu1_hat(p: f64) -> f64 {
    2.0 / (2.0 * p - 1.0) + 1.0
}

/// First and second moments of the dominating sequence.
///
/// The second moment comes from the series, summed until a certified
/// geometric tail bound drops below the relative tolerance.
pub fn moments(p: f64) -> Result<Moments> {
    check_walk_p(p)?;
    let pq = p * (1.0 - p);
    let r = 4.0 * pq;

    let mut first = Neumaier::default();
    let mut second = Neumaier::default();
    let mut f = p;
    let mut m = 1usize;
    let tail2 = loop {
        let k = (2 * m) as f64;
        let a1 = k * f;
        let a2 = k * k * f;
        first.add(a1);
        second.add(a2);

        // term ratios: first moment below r, second below (4 + 2/m) pq
        let rho2 = (4.0 + 2.0 / m as f64) * pq;
        if rho2 < 1.0 {
            let t1 = a1 * r / (1.0 - r);
            let t2 = a2 * rho2 / (1.0 - rho2);
            if t1 <= SERIES_RELATIVE_TOLERANCE * first.value()
                && t2 <= SERIES_RELATIVE_TOLERANCE * second.value()
            {
                break t2;
            }
        }
        f *= 2.0 * (2 * m - 1) as f64 / (m + 1) as f64 * pq;
        m += 1;
        if m > MAX_SERIES_TERMS {
            return Err(Error::SeriesNotConverged { p, terms: m });
        }
    };
    let walk_mean = first.value();
    let walk_second_moment = second.value();

    let mu1_hat = closed_form_mu1_hat(p);
    let mu1_hat_series = 1.0 + walk_mean / p;
    let series = 1.0 + walk_second_moment / p;
    let printed = printed_second_moment(p);
    let generating_function = generating_function_second_moment(p);
    let floor = 1.0 + (mu1_hat - 1.0).powi(2) * p;
    let close = |x: f64| (x - series).abs() <= DIAGNOSTIC_TOLERANCE * series;

    Ok(Moments {
        p,
        mu1_hat,
        mu1_hat_series,
        mu2_hat: series,
        walk_mean,
        walk_second_moment,
        diagnostics: SecondMomentDiagnostics {
            series,
            series_tail_bound: tail2 / p,
            series_terms: m,
            printed,
            generating_function,
            floor,
            printed_consistent: printed >= floor && close(printed),
            generating_function_agrees: close(generating_function),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn feasible_interval_examples() {
        assert_relative_eq!(
            feasible_p_interval(0.09).unwrap().p_max,
            0.9,
            epsilon = 1e-15
        );
        assert!(matches!(
            feasible_p_interval(0.25),
            Err(Error::InfeasibleDomination { .. })
        ));
        assert!(matches!(
            feasible_p_interval(0.27),
            Err(Error::InfeasibleDomination { .. })
        ));
        assert!(feasible_p_interval(0.0).is_err());
        let iv = feasible_p_interval(0.18).unwrap();
        assert!(!iv.contains(0.5));
        assert!(iv.contains(iv.p_max));
        assert!(DominationParams::new(iv.p_max, 0.18).is_ok());
        assert!(DominationParams::new(0.95, 0.18).is_err());
    }

    #[test]
    fn walk_first_terms() {
        let p = 0.7;
        let f = first_return_walk(p, 12).unwrap();
        assert_eq!(f[1], 0.0);
        assert_eq!(f[2], p);
        assert_eq!(f[3], 0.0);
        assert_abs_diff_eq!(f[4], p * p * (1.0 - p), epsilon = 1e-16);
        // two paths: 0 1 2 3 2 1 0 and 0 1 2 1 2 1 0
        assert_abs_diff_eq!(f[6], 2.0 * p.powi(3) * (1.0 - p).powi(2), epsilon = 1e-16);
        assert!(first_return_walk(0.5, 10).is_err());
        assert!(first_return_walk(1.0, 10).is_err());
        assert!(first_return_walk(0.7, 1).is_err());
    }

    #[test]
    fn dominant_shape() {
        let dom = dominating_sequence(&DominationParams::new(0.9, 0.09).unwrap(), 60).unwrap();
        assert_eq!(dom.g_hat[1], 1.0);
        assert_abs_diff_eq!(dom.g_hat[2], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(dom.g_hat[4], 0.09, epsilon = 1e-15);
        assert!(dom.tail_hat.windows(2).all(|w| w[1] <= w[0]));
        // total mass 1 + 1/p, not a probability law
        assert_abs_diff_eq!(dom.total_mass(), 1.0 + 1.0 / 0.9, epsilon = 1e-12);
        assert!(dom.tail_bound > 0.0 && dom.tail_bound < 0.36f64.powi(29));
    }

    #[test]
    fn walk_mass_is_one() {
        for p in [0.6, 0.75, 0.9] {
            let n = horizon_for_tail(p, 1e-14).unwrap();
            let f = first_return_walk(p, n).unwrap();
            let r = 4.0 * p * (1.0 - p);
            let tail = f[n] * r / (1.0 - r);
            let mass: f64 = f.iter().sum();
            assert!((mass - 1.0).abs() <= 1e-9 && mass <= 1.0 + 1e-12 && mass + tail >= 1.0 - 1e-9);
        }
    }

    #[test]
    fn tail_decays_geometrically() {
        let p = 0.75;
        let dom = dominating_sequence(&DominationParams::new(p, 0.1).unwrap(), 200).unwrap();
        let r = 4.0 * p * (1.0 - p);
        for n in (20..190).step_by(2) {
            assert!(dom.tail_hat[n + 2] <= r * dom.tail_hat[n] * (1.0 + 1e-9));
        }
    }

    #[test]
    fn moments_closed_forms() {
        let m = moments(0.75).unwrap();
        assert_abs_diff_eq!(m.mu1_hat, 5.0, epsilon = 1e-15);
        assert_relative_eq!(m.mu1_hat_series, 5.0, max_relative = 1e-9);
        // 1 + (4/(2p-1) + 8pq/(2p-1)^3) = 21 at p = 3/4
        assert_relative_eq!(m.mu2_hat, 21.0, max_relative = 1e-9);
        assert_relative_eq!(m.diagnostics.printed, 7.0, max_relative = 1e-12);
        assert_relative_eq!(m.diagnostics.floor, 13.0, max_relative = 1e-12);
        assert!(!m.diagnostics.printed_consistent);
        assert!(m.diagnostics.generating_function_agrees);
        assert!(m.walk_second_moment >= m.walk_mean.powi(2));
    }

    #[test]
    fn mu1_hat_degenerate_limit() {
        let m = moments(0.999_999).unwrap();
        assert_abs_diff_eq!(m.mu1_hat, 3.0, epsilon = 1e-5);
    }

    #[test]
    fn moments_near_half_converge() {
        let m = moments(0.501).unwrap();
        assert_relative_eq!(m.mu1_hat_series, m.mu1_hat, max_relative = 1e-9);
        assert!(m.diagnostics.generating_function_agrees);
    }

    #[test]
    fn moments_reject_bad_p() {
        assert!(moments(0.5).is_err());
        assert!(moments(1.0).is_err());
    }
}
