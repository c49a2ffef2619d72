//! Time-inhomogeneous birth-death chains on the nonnegative integers.
//!
//! A chain is described by a schedule `(t, i) -> alpha(t, i)`. From a state
//! `i >= 1` the chain moves down with probability `alpha(t, i)` and up
//! otherwise; from state `0` it stays with probability `alpha(t, 0)` and
//! moves to `1` otherwise. The renewal set is `{0}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rectangular-ish table of probabilities. Rows are indexed by time, entries
/// within a row by state; a row shorter than the requested state repeats its
/// last entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "TableRepr", into = "TableRepr")]
pub struct Table {
    rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum TableRepr {
    /// One value per time index, shared by every state.
    Flat(Vec<f64>),
    Rows(Vec<Vec<f64>>),
}

impl From<TableRepr> for Table {
    fn from(repr: TableRepr) -> Self {
        match repr {
            TableRepr::Flat(values) => Table {
                rows: values.into_iter().map(|v| vec![v]).collect(),
            },
            TableRepr::Rows(rows) => Table { rows },
        }
    }
}

impl From<Table> for TableRepr {
    fn from(table: Table) -> Self {
        if table.rows.iter().all(|r| r.len() == 1) {
            TableRepr::Flat(table.rows.into_iter().map(|r| r[0]).collect())
        } else {
            TableRepr::Rows(table.rows)
        }
    }
}

impl Table {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        Table { rows }
    }

    /// Table whose value depends on time only.
    pub fn flat(values: Vec<f64>) -> Self {
        TableRepr::Flat(values).into()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn row_value(&self, row: usize, state: u64) -> f64 {
        let r = &self.rows[row];
        r[(state as usize).min(r.len() - 1)]
    }

    fn entries(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().flatten().copied()
    }

    fn validate(&self) -> Result<()> {
        if self.rows.is_empty() || self.rows.iter().any(|r| r.is_empty()) {
            return Err(Error::InvalidSchedule("table rows must be nonempty".into()));
        }
        Ok(())
    }
}

/// What happens after an explicit table runs out of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailRule {
    /// A single value for every state.
    Constant(f64),
    RepeatLast,
    /// Restart the table from its first row.
    Cycle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "kebab-case")]
pub enum ScheduleKind {
    Constant {
        value: f64,
    },
    PeriodicTable {
        table: Table,
    },
    ExplicitTableWithTail {
        table: Table,
        tail: TailRule,
    },
    /// Values hashed from `(seed, t, i)` into the declared bounds.
    BoundedRandom {
        seed: u64,
    },
}

/// A schedule kind together with certified bounds on every value it yields.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleSpec {
    #[serde(flatten)]
    kind: ScheduleKind,
    alpha_lo: f64,
    alpha_hi: f64,
}

impl ScheduleSpec {
    /// Validates the kind and fixes the bounds.
    ///
    /// Parametric kinds get their exact extrema; declared bounds, if given,
    /// must enclose them. `BoundedRandom` needs both bounds declared.
    pub fn new(kind: ScheduleKind, alpha_lo: Option<f64>, alpha_hi: Option<f64>) -> Result<Self> {
        let (lo, hi) = match &kind {
            ScheduleKind::BoundedRandom { .. } => match (alpha_lo, alpha_hi) {
                (Some(lo), Some(hi)) => (lo, hi),
                _ => {
                    return Err(Error::InvalidSchedule(
                        "bounded-random schedules must declare alpha_lo and alpha_hi".into(),
                    ))
                }
            },
            other => {
                let (lo, hi) = exact_extrema(other)?;
                if let Some(d) = alpha_lo {
                    if d > lo {
                        return Err(Error::InvalidSchedule(format!(
                            "declared alpha_lo {d} exceeds the schedule minimum {lo}"
                        )));
                    }
                }
                if let Some(d) = alpha_hi {
                    if d < hi {
                        return Err(Error::InvalidSchedule(format!(
                            "declared alpha_hi {d} is below the schedule maximum {hi}"
                        )));
                    }
                }
                (lo, hi)
            }
        };
        if !(lo > 0.0 && lo <= hi && hi < 1.0) {
            return Err(Error::InvalidSchedule(format!(
                "bounds must satisfy 0 < alpha_lo <= alpha_hi < 1, got [{lo}, {hi}]"
            )));
        }
        Ok(ScheduleSpec {
            kind,
            alpha_lo: lo,
            alpha_hi: hi,
        })
    }

    pub fn constant(value: f64) -> Result<Self> {
        Self::new(ScheduleKind::Constant { value }, None, None)
    }

    pub fn periodic(table: Table) -> Result<Self> {
        Self::new(ScheduleKind::PeriodicTable { table }, None, None)
    }

    pub fn bounded_random(seed: u64, alpha_lo: f64, alpha_hi: f64) -> Result<Self> {
        Self::new(
            ScheduleKind::BoundedRandom { seed },
            Some(alpha_lo),
            Some(alpha_hi),
        )
    }

    /// Skips the open-interval check so degenerate fixtures (`alpha = 1`)
    /// can be built in tests.
    #[doc(hidden)]
    pub fn new_unchecked(kind: ScheduleKind, alpha_lo: f64, alpha_hi: f64) -> Self {
        ScheduleSpec {
            kind,
            alpha_lo,
            alpha_hi,
        }
    }

    pub fn kind(&self) -> &ScheduleKind {
        &self.kind
    }

    pub fn alpha_lo(&self) -> f64 {
        self.alpha_lo
    }

    pub fn alpha_hi(&self) -> f64 {
        self.alpha_hi
    }

    /// Replaces the bounds of a bounded-random spec, keeping its seed.
    pub fn with_bounds(&self, alpha_lo: f64, alpha_hi: f64) -> Result<Self> {
        match self.kind {
            ScheduleKind::BoundedRandom { .. } => {
                Self::new(self.kind.clone(), Some(alpha_lo), Some(alpha_hi))
            }
            _ => Err(Error::InvalidSchedule(
                "only bounded-random schedules have adjustable bounds".into(),
            )),
        }
    }

    fn value(&self, t: u64, i: u64) -> f64 {
        match &self.kind {
            ScheduleKind::Constant { value } => *value,
            ScheduleKind::PeriodicTable { table } => {
                table.row_value((t % table.len() as u64) as usize, i)
            }
            ScheduleKind::ExplicitTableWithTail { table, tail } => {
                let rows = table.len() as u64;
                if t < rows {
                    table.row_value(t as usize, i)
                } else {
                    match tail {
                        TailRule::Constant(v) => *v,
                        TailRule::RepeatLast => table.row_value(table.len() - 1, i),
                        TailRule::Cycle => table.row_value((t % rows) as usize, i),
                    }
                }
            }
            ScheduleKind::BoundedRandom { seed } => {
                let u = hash_unit(*seed, t, i);
                self.alpha_lo + (self.alpha_hi - self.alpha_lo) * u
            }
        }
    }

    /// Exact infimum over `t` of `alpha(t, 0)`; for bounded-random specs the
    /// declared lower bound.
    fn inf_stay_at_zero(&self) -> f64 {
        match &self.kind {
            ScheduleKind::Constant { value } => *value,
            ScheduleKind::PeriodicTable { table } => min_state_zero(table),
            ScheduleKind::ExplicitTableWithTail { table, tail } => match tail {
                TailRule::Constant(v) => min_state_zero(table).min(*v),
                // Cycle and RepeatLast only revisit table rows.
                TailRule::Cycle | TailRule::RepeatLast => min_state_zero(table),
            },
            ScheduleKind::BoundedRandom { .. } => self.alpha_lo,
        }
    }
}

fn min_state_zero(table: &Table) -> f64 {
    table
        .rows
        .iter()
        .map(|r| r[0])
        .fold(f64::INFINITY, f64::min)
}

fn exact_extrema(kind: &ScheduleKind) -> Result<(f64, f64)> {
    let fold = |it: &mut dyn Iterator<Item = f64>| {
        it.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        })
    };
    let (lo, hi) = match kind {
        ScheduleKind::Constant { value } => (*value, *value),
        ScheduleKind::PeriodicTable { table } => {
            table.validate()?;
            fold(&mut table.entries())
        }
        ScheduleKind::ExplicitTableWithTail { table, tail } => {
            table.validate()?;
            match tail {
                TailRule::Constant(v) => fold(&mut table.entries().chain(std::iter::once(*v))),
                TailRule::RepeatLast | TailRule::Cycle => fold(&mut table.entries()),
            }
        }
        ScheduleKind::BoundedRandom { .. } => unreachable!("bounded-random has declared bounds"),
    };
    if lo.is_nan() || hi.is_nan() {
        return Err(Error::InvalidSchedule("schedule contains NaN".into()));
    }
    Ok((lo, hi))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stateless uniform in `[0, 1)` keyed by `(seed, t, i)`.
fn hash_unit(seed: u64, t: u64, i: u64) -> f64 {
    let h = splitmix64(splitmix64(splitmix64(seed) ^ t) ^ i.rotate_left(32));
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChainLabel {
    #[serde(rename = "chain1")]
    First,
    #[serde(rename = "chain2")]
    Second,
}

impl ChainLabel {
    pub fn index(self) -> usize {
        match self {
            ChainLabel::First => 0,
            ChainLabel::Second => 1,
        }
    }
}

impl std::fmt::Display for ChainLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ChainLabel::First => write!(f, "chain1"),
            ChainLabel::Second => write!(f, "chain2"),
        }
    }
}

/// One labelled chain. Immutable and cheap to share across threads.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainSchedule {
    pub spec: ScheduleSpec,
    pub label: ChainLabel,
}

impl ChainSchedule {
    pub fn new(spec: ScheduleSpec, label: ChainLabel) -> Self {
        ChainSchedule { spec, label }
    }

    /// Probability of moving down (or staying, at state 0) on step `t -> t+1`.
    #[inline]
    pub fn alpha_at(&self, t: u64, i: u64) -> f64 {
        self.spec.value(t, i)
    }

    /// Next state given a uniform variate `u` in `[0, 1)`.
    #[inline]
    pub fn step(&self, t: u64, i: u64, u: f64) -> u64 {
        let down = u < self.alpha_at(t, i);
        match (i, down) {
            (0, true) => 0,
            (0, false) => 1,
            (_, true) => i - 1,
            (_, false) => i + 1,
        }
    }
}

/// `inf_t min(alpha(t, 0), beta(t, 0))`, the smallest stay-at-zero probability.
pub fn gamma0(first: &ChainSchedule, second: &ChainSchedule) -> Result<f64> {
    let g = first
        .spec
        .inf_stay_at_zero()
        .min(second.spec.inf_stay_at_zero());
    if g > 0.0 {
        Ok(g)
    } else {
        Err(Error::ZeroGamma0)
    }
}

/// Upper bound on `(1 - alpha(t, i)) * alpha(s, j)` over every index
/// combination of both chains.
pub fn sup_updown_product(first: &ChainSchedule, second: &ChainSchedule) -> f64 {
    let lo = first.spec.alpha_lo.min(second.spec.alpha_lo);
    let hi = first.spec.alpha_hi.max(second.spec.alpha_hi);
    (1.0 - lo) * hi
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn chain(spec: ScheduleSpec, label: ChainLabel) -> ChainSchedule {
        ChainSchedule::new(spec, label)
    }

    #[test]
    fn constant_lookup() {
        let c = chain(ScheduleSpec::constant(0.9).unwrap(), ChainLabel::First);
        assert_eq!(c.alpha_at(5, 3), 0.9);
    }

    #[test]
    fn periodic_lookup() {
        let c = chain(
            ScheduleSpec::periodic(Table::flat(vec![0.8, 0.9])).unwrap(),
            ChainLabel::First,
        );
        assert_eq!(c.alpha_at(3, 0), 0.9);
        assert_eq!(c.alpha_at(4, 7), 0.8);
    }

    #[test]
    fn table_with_tail() {
        let spec = ScheduleSpec::new(
            ScheduleKind::ExplicitTableWithTail {
                table: Table::from_rows(vec![vec![0.7, 0.8], vec![0.95]]),
                tail: TailRule::Constant(0.85),
            },
            None,
            None,
        )
        .unwrap();
        assert_eq!(spec.alpha_lo(), 0.7);
        assert_eq!(spec.alpha_hi(), 0.95);
        let c = chain(spec, ChainLabel::Second);
        assert_eq!(c.alpha_at(0, 0), 0.7);
        assert_eq!(c.alpha_at(0, 9), 0.8);
        assert_eq!(c.alpha_at(1, 4), 0.95);
        assert_eq!(c.alpha_at(100, 4), 0.85);
    }

    #[test]
    fn rejects_bad_bounds() {
        assert!(ScheduleSpec::constant(1.0).is_err());
        assert!(ScheduleSpec::constant(0.0).is_err());
        assert!(ScheduleSpec::bounded_random(1, 0.9, 0.8).is_err());
        assert!(
            ScheduleSpec::new(ScheduleKind::BoundedRandom { seed: 1 }, Some(0.8), None).is_err()
        );
        // declared bounds must enclose the table
        assert!(ScheduleSpec::new(
            ScheduleKind::PeriodicTable {
                table: Table::flat(vec![0.8, 0.9])
            },
            Some(0.85),
            None
        )
        .is_err());
        assert!(ScheduleSpec::periodic(Table::from_rows(vec![])).is_err());
    }

    #[test]
    fn random_values_stay_in_bounds() {
        let c = chain(
            ScheduleSpec::bounded_random(7, 0.8, 0.9).unwrap(),
            ChainLabel::First,
        );
        for t in (0..=10_000).step_by(37) {
            for i in (0..=1_000).step_by(13) {
                let a = c.alpha_at(t, i);
                assert!((0.8..=0.9).contains(&a), "alpha({t},{i}) = {a}");
                assert_eq!(a, c.alpha_at(t, i));
            }
        }
    }

    #[test]
    fn step_follows_kernel() {
        let c = chain(
            ScheduleSpec::new(
                ScheduleKind::ExplicitTableWithTail {
                    table: Table::from_rows(vec![vec![0.9, 0.8, 0.8]]),
                    tail: TailRule::RepeatLast,
                },
                None,
                None,
            )
            .unwrap(),
            ChainLabel::First,
        );
        assert_eq!(c.step(0, 0, 0.5), 0);
        assert_eq!(c.step(0, 0, 0.95), 1);
        assert_eq!(c.step(0, 2, 0.85), 3);
        assert_eq!(c.step(0, 2, 0.10), 1);
    }

    #[test]
    fn step_down_frequency() {
        use rand::{Rng, SeedableRng};
        let c = chain(
            ScheduleSpec::bounded_random(3, 0.8, 0.9).unwrap(),
            ChainLabel::First,
        );
        let (t, i) = (17, 4);
        let alpha = c.alpha_at(t, i);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        let downs = (0..n)
            .filter(|_| c.step(t, i, rng.random::<f64>()) == i - 1)
            .count();
        let freq = downs as f64 / n as f64;
        let se = (alpha * (1.0 - alpha) / n as f64).sqrt();
        assert!(
            (freq - alpha).abs() < 4.0 * se,
            "freq {freq} vs alpha {alpha}"
        );
    }

    #[test]
    fn gamma0_examples() {
        let a = chain(ScheduleSpec::constant(0.9).unwrap(), ChainLabel::First);
        let b = chain(ScheduleSpec::constant(0.9).unwrap(), ChainLabel::Second);
        assert_eq!(gamma0(&a, &b).unwrap(), 0.9);

        let p = chain(
            ScheduleSpec::periodic(Table::flat(vec![0.8, 0.9])).unwrap(),
            ChainLabel::First,
        );
        let k = chain(ScheduleSpec::constant(0.85).unwrap(), ChainLabel::Second);
        assert_eq!(gamma0(&p, &k).unwrap(), 0.8);

        let r1 = chain(
            ScheduleSpec::bounded_random(1, 0.8, 0.9).unwrap(),
            ChainLabel::First,
        );
        let r2 = chain(
            ScheduleSpec::bounded_random(2, 0.8, 0.9).unwrap(),
            ChainLabel::Second,
        );
        let g0 = gamma0(&r1, &r2).unwrap();
        assert_eq!(g0, 0.8);
        for t in 0..5_000 {
            assert!(g0 <= r1.alpha_at(t, 0) && g0 <= r2.alpha_at(t, 0));
        }

        let degenerate = chain(
            ScheduleSpec::new_unchecked(ScheduleKind::Constant { value: 0.0 }, 0.0, 0.0),
            ChainLabel::First,
        );
        assert!(matches!(gamma0(&degenerate, &b), Err(Error::ZeroGamma0)));
    }

    #[test]
    fn sup_product_examples() {
        let a = chain(ScheduleSpec::constant(0.9).unwrap(), ChainLabel::First);
        let b = chain(ScheduleSpec::constant(0.9).unwrap(), ChainLabel::Second);
        assert_relative_eq!(sup_updown_product(&a, &b), 0.09, epsilon = 1e-15);

        let r1 = chain(
            ScheduleSpec::bounded_random(1, 0.8, 0.9).unwrap(),
            ChainLabel::First,
        );
        let r2 = chain(
            ScheduleSpec::bounded_random(2, 0.8, 0.9).unwrap(),
            ChainLabel::Second,
        );
        assert_relative_eq!(sup_updown_product(&r1, &r2), 0.18, epsilon = 1e-15);

        let w1 = chain(
            ScheduleSpec::bounded_random(1, 0.7, 0.9).unwrap(),
            ChainLabel::First,
        );
        let w2 = chain(
            ScheduleSpec::bounded_random(2, 0.7, 0.9).unwrap(),
            ChainLabel::Second,
        );
        assert_relative_eq!(sup_updown_product(&w1, &w2), 0.27, epsilon = 1e-15);
    }

    #[test]
    fn spec_json_shape() {
        let spec: ScheduleKind =
            serde_json::from_str(r#"{"kind":"periodic-table","params":{"table":[0.8,0.9]}}"#)
                .unwrap();
        assert_eq!(
            spec,
            ScheduleKind::PeriodicTable {
                table: Table::flat(vec![0.8, 0.9])
            }
        );
        let tail: ScheduleKind = serde_json::from_str(
            r#"{"kind":"explicit-table-with-tail","params":{"table":[[0.8,0.9]],"tail":{"constant":0.85}}}"#,
        )
        .unwrap();
        assert!(matches!(
            tail,
            ScheduleKind::ExplicitTableWithTail {
                tail: TailRule::Constant(_),
                ..
            }
        ));
    }

    proptest! {
        #[test]
        fn sup_product_dominates_samples(
            s1 in 0u64..1000, s2 in 0u64..1000,
            lo in 0.5f64..0.85, width in 0.0f64..0.14,
            t in 0u64..10_000, s in 0u64..10_000, i in 0u64..1_000, j in 0u64..1_000,
        ) {
            let a = chain(ScheduleSpec::bounded_random(s1, lo, lo + width).unwrap(), ChainLabel::First);
            let b = chain(ScheduleSpec::bounded_random(s2, lo, lo + width).unwrap(), ChainLabel::Second);
            let c = sup_updown_product(&a, &b);
            prop_assert!(c >= (1.0 - a.alpha_at(t, i)) * b.alpha_at(s, j));
            prop_assert!(c >= (1.0 - b.alpha_at(t, i)) * a.alpha_at(s, j));
            prop_assert!(c >= (1.0 - a.alpha_at(t, i)) * a.alpha_at(s, j));
        }
    }
}
