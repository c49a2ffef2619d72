//! Independent reference computations used by the integration tests.
#![allow(dead_code)]

use renewal_core::chain_model::{ChainLabel, ChainSchedule, ScheduleSpec, Table};

pub fn constant(a: f64, label: ChainLabel) -> ChainSchedule {
    ChainSchedule::new(ScheduleSpec::constant(a).unwrap(), label)
}

/// Period-2, state-dependent table used wherever an inhomogeneous schedule is needed.
pub fn period_two(label: ChainLabel) -> ChainSchedule {
    let table = Table::from_rows(vec![vec![0.35, 0.6, 0.8], vec![0.75, 0.5]]);
    ChainSchedule::new(ScheduleSpec::periodic(table).unwrap(), label)
}

/// First-return probabilities `g[1..=n_max]` by summing over every binary
/// path of each length. Exponential; keep `n_max` small.
pub fn enumerate_first_return(schedule: &ChainSchedule, t0: u64, n_max: usize) -> Vec<f64> {
    let mut g = vec![0.0; n_max + 1];
    for n in 1..=n_max {
        'paths: for bits in 0u32..(1u32 << n) {
            let mut state = 0u64;
            let mut prob = 1.0;
            for k in 0..n {
                let a = schedule.alpha_at(t0 + k as u64, state);
                // bit set: move down (or stay at 0); bit clear: move up
                let down = bits >> k & 1 == 1;
                prob *= if down { a } else { 1.0 - a };
                state = if down {
                    state.saturating_sub(1)
                } else {
                    state + 1
                };
                if state == 0 && k + 1 < n {
                    continue 'paths;
                }
            }
            if state == 0 {
                g[n] += prob;
            }
        }
    }
    g
}

/// Square matrix product.
pub fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut c = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            if a[i][k] == 0.0 {
                continue;
            }
            for j in 0..n {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    c
}

/// First-return law of the walk that leaves `0` upward and then steps down
/// with probability `p`, from powers of the transition matrix with `0` made
/// absorbing. `f[n] = P^{n-1}[1][0] - P^{n-2}[1][0]`.
pub fn walk_first_return_by_matrix_power(p: f64, n_max: usize) -> Vec<f64> {
    let size = n_max + 2;
    let mut m = vec![vec![0.0; size]; size];
    m[0][0] = 1.0;
    for i in 1..size {
        m[i][i - 1] = p;
        if i + 1 < size {
            m[i][i + 1] = 1.0 - p;
        } else {
            m[i][i] = 1.0 - p;
        }
    }
    let mut f = vec![0.0; n_max + 1];
    let mut power = m.clone();
    let mut absorbed_before = 0.0;
    for n in 2..=n_max {
        let absorbed = power[1][0];
        f[n] = absorbed - absorbed_before;
        absorbed_before = absorbed;
        power = matmul(&power, &m);
    }
    f
}

/// `u_n = P(X_{t0+n} = 0 | X_{t0} = 0)` by pushing the full distribution forward.
pub fn occupancy(schedule: &ChainSchedule, t0: u64, n_max: usize) -> Vec<f64> {
    let mut dist = vec![0.0; n_max + 2];
    dist[0] = 1.0;
    let mut u = vec![1.0];
    for k in 0..n_max {
        let t = t0 + k as u64;
        let mut next = vec![0.0; n_max + 2];
        for (h, &m) in dist.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            let a = schedule.alpha_at(t, h as u64);
            if h == 0 {
                next[0] += m * a;
            } else {
                next[h - 1] += m * a;
            }
            if h + 1 < next.len() {
                next[h + 1] += m * (1.0 - a);
            }
        }
        dist = next;
        u.push(dist[0]);
    }
    u
}

pub fn bounded_random_pair(seed: u64, lo: f64, hi: f64) -> [ChainSchedule; 2] {
    [
        ChainSchedule::new(
            ScheduleSpec::bounded_random(2 * seed, lo, hi).unwrap(),
            ChainLabel::First,
        ),
        ChainSchedule::new(
            ScheduleSpec::bounded_random(2 * seed + 1, lo, hi).unwrap(),
            ChainLabel::Second,
        ),
    ]
}
