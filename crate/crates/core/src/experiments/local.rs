//! Return times, local dimension estimates and the Boshernitzan statistic.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::MeasureSpec;
use crate::phase::{Point, SpaceSpec};
use crate::systems::{OrbitState, SystemSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "status", content = "steps", rename_all = "snake_case")]
pub enum ReturnTime {
    Returned(u64),
    /// No return within the cap.
    Censored(u64),
}

impl ReturnTime {
    pub fn steps(self) -> u64 {
        match self {
            ReturnTime::Returned(k) | ReturnTime::Censored(k) => k,
        }
    }

    pub fn is_censored(self) -> bool {
        matches!(self, ReturnTime::Censored(_))
    }
}

/// `tau_r(x) = min{k >= 1 : d(T^k x, x) < r}`, censored at `cap`.
pub fn return_time<R: Rng>(
    system: &SystemSpec,
    space: &SpaceSpec,
    x: &Point,
    r: f64,
    cap: u64,
    rng: R,
) -> Result<ReturnTime> {
    space.check_point(x)?;
    let mut state = system.init_state(x, rng)?;
    return_time_from(system, space, &mut state, r, cap)
}

/// Like [`return_time`], starting from an existing orbit state (for example
/// one built by [`SystemSpec::init_periodic`]).
pub fn return_time_from<R: Rng>(
    system: &SystemSpec,
    space: &SpaceSpec,
    state: &mut OrbitState<R>,
    r: f64,
    cap: u64,
) -> Result<ReturnTime> {
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "radius must be > 0, got {r}"
        )));
    }
    let start = state.current().clone();
    for k in 1..=cap {
        system.step(state);
        if space.distance_fractions(state.current().fractions(), start.fractions()) < r {
            return Ok(ReturnTime::Returned(k));
        }
    }
    Ok(ReturnTime::Censored(cap))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LocalRow {
    pub r: f64,
    pub mu_ball: f64,
    pub tau: ReturnTime,
    /// `log tau_r / -log mu(B(x, r))`, absent when censored or `mu` is 0 or 1.
    pub ratio: Option<f64>,
}

/// Local scaling at one point over a grid of radii.
///
/// Dimension estimates are slopes between consecutive radii. `d_*` uses
/// `log mu(B(x, r))` against `log r`; `r_*` uses `log tau_r` against
/// `-log r` and skips pairs involving a censored return.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalStats {
    pub center: Vec<f64>,
    pub rows: Vec<LocalRow>,
    pub d_lower: Option<f64>,
    pub d_upper: Option<f64>,
    pub r_lower: Option<f64>,
    pub r_upper: Option<f64>,
    pub censored: usize,
    /// False when every return was censored.
    pub usable: bool,
}

fn min_max(v: &[f64]) -> (Option<f64>, Option<f64>) {
    let lo = v.iter().copied().reduce(f64::min);
    let hi = v.iter().copied().reduce(f64::max);
    (lo, hi)
}

/// Computes return times for every radius in `radii` from one orbit.
pub fn local_stats<R: Rng>(
    system: &SystemSpec,
    measure: &MeasureSpec,
    space: &SpaceSpec,
    x: &Point,
    radii: &[f64],
    cap: u64,
    rng: R,
) -> Result<LocalStats> {
    space.check_point(x)?;
    if radii.is_empty() || radii.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::InvalidArgument("radii must be positive".into()));
    }
    // Resolve in descending order: tau_r is the first k at which the running
    // minimum of d(T^k x, x) drops below r.
    let mut order: Vec<usize> = (0..radii.len()).collect();
    order.sort_by(|&a, &b| radii[b].total_cmp(&radii[a]));
    let mut taus = vec![ReturnTime::Censored(cap); radii.len()];
    let mut state = system.init_state(x, rng)?;
    let mut next = 0;
    let mut k = 0;
    while next < order.len() && k < cap {
        system.step(&mut state);
        k += 1;
        let d = space.distance_fractions(state.current().fractions(), x.fractions());
        while next < order.len() && d < radii[order[next]] {
            taus[order[next]] = ReturnTime::Returned(k);
            next += 1;
        }
    }

    let rows: Vec<LocalRow> = radii
        .iter()
        .zip(&taus)
        .map(|(&r, &tau)| {
            let mu = measure.ball_measure(space, x, r)?;
            let ratio = match tau {
                ReturnTime::Returned(t) if mu > 0.0 && mu < 1.0 => Some((t as f64).ln() / -mu.ln()),
                _ => None,
            };
            Ok(LocalRow {
                r,
                mu_ball: mu,
                tau,
                ratio,
            })
        })
        .collect::<Result<_>>()?;

    let mut d_slopes = Vec::new();
    let mut r_slopes = Vec::new();
    for w in order.windows(2) {
        let (a, b) = (&rows[w[0]], &rows[w[1]]);
        let dl = a.r.ln() - b.r.ln();
        if dl <= 0.0 {
            continue;
        }
        if a.mu_ball > 0.0 && b.mu_ball > 0.0 {
            d_slopes.push((a.mu_ball.ln() - b.mu_ball.ln()) / dl);
        }
        if let (ReturnTime::Returned(ta), ReturnTime::Returned(tb)) = (a.tau, b.tau) {
            r_slopes.push(((tb as f64).ln() - (ta as f64).ln()) / dl);
        }
    }
    let (d_lower, d_upper) = min_max(&d_slopes);
    let (r_lower, r_upper) = min_max(&r_slopes);
    Ok(LocalStats {
        center: x.to_f64(),
        censored: rows.iter().filter(|r| r.tau.is_censored()).count(),
        usable: rows.iter().any(|r| !r.tau.is_censored()),
        rows,
        d_lower,
        d_upper,
        r_lower,
        r_upper,
    })
}

/// Median of values where censored entries are only known to exceed every
/// observed value. `None` when the median falls among the censored ones.
pub fn censored_median(values: &[Option<f64>]) -> Option<f64> {
    let mut seen: Vec<f64> = values.iter().flatten().copied().collect();
    if values.is_empty() {
        return None;
    }
    seen.sort_by(f64::total_cmp);
    let n = values.len();
    let pick = |i: usize| seen.get(i).copied();
    if n % 2 == 1 {
        pick(n / 2)
    } else {
        Some((pick(n / 2 - 1)? + pick(n / 2)?) / 2.0)
    }
}

/// Running minimum of `n^(1/alpha) d(T^n x, x)`, sampled at `1, 2, 5, 10, 20, 50, ...`
/// and at `n_max`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoshStat {
    pub alpha: f64,
    pub checkpoints: Vec<(u64, f64)>,
    pub final_proxy: f64,
}

pub fn boshernitzan_stat<R: Rng>(
    system: &SystemSpec,
    space: &SpaceSpec,
    x: &Point,
    alpha: f64,
    n_max: u64,
    rng: R,
) -> Result<BoshStat> {
    space.check_point(x)?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "alpha must be > 0, got {alpha}"
        )));
    }
    if n_max == 0 {
        return Err(Error::InvalidArgument("n_max must be >= 1".into()));
    }
    let mut marks = Vec::new();
    let mut decade = 1u64;
    'outer: loop {
        for m in [1, 2, 5] {
            match decade.checked_mul(m) {
                Some(v) if v < n_max => marks.push(v),
                _ => break 'outer,
            }
        }
        decade = match decade.checked_mul(10) {
            Some(d) => d,
            None => break,
        };
    }
    marks.push(n_max);

    let mut state = system.init_state(x, rng)?;
    let mut running = f64::INFINITY;
    let mut checkpoints = Vec::with_capacity(marks.len());
    let mut next = 0;
    for n in 1..=n_max {
        system.step(&mut state);
        let d = space.distance_fractions(state.current().fractions(), x.fractions());
        running = running.min((n as f64).powf(1.0 / alpha) * d);
        if marks[next] == n {
            checkpoints.push((n, running));
            next += 1;
        }
    }
    Ok(BoshStat {
        alpha,
        final_proxy: running,
        checkpoints,
    })
}
