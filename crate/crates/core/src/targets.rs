//! Target masses `M_n`, their finite-range validation, and the radius
//! functions `r_n(x) = inf{r >= 0 : mu(B(x, r)) >= M_n}`.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::MeasureSpec;
use crate::phase::{unit_ball_volume, Metric, Point, SpaceSpec};

/// Default inversion tolerance when a closed form exists.
pub const CLOSED_FORM_TOL: f64 = 1e-10;
/// Default inversion tolerance for bisection.
pub const BISECTION_TOL: f64 = 1e-8;
/// The ratio grid used when none is given.
pub const DEFAULT_ALPHA_GRID: [f64; 4] = [1.01, 1.02, 1.05, 1.1];
/// Bisection gives up after this many halvings.
pub const MAX_BISECTION_STEPS: usize = 200;
/// At most this many lower-bound violations are listed individually.
pub const MAX_LISTED_VIOLATIONS: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TargetKind {
    /// `M_n = c n^-gamma`.
    Power { c: f64, gamma: f64 },
    /// `M_n = c (log(n + 1))^beta / (n + 1)`.
    LogPower { c: f64, beta: f64 },
    /// `M_n` = the `n`-th listed value (1-based).
    Explicit { values: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TargetSequence {
    kind: TargetKind,
    horizon: usize,
}

impl TargetSequence {
    pub fn power(c: f64, gamma: f64, horizon: usize) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "c must be positive, got {c}"
            )));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "gamma must be in (0,1], got {gamma}"
            )));
        }
        Self::with_horizon(TargetKind::Power { c, gamma }, horizon)
    }

    pub fn log_power(c: f64, beta: f64, horizon: usize) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "c must be positive, got {c}"
            )));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "beta must be >= 0, got {beta}"
            )));
        }
        Self::with_horizon(TargetKind::LogPower { c, beta }, horizon)
    }

    /// The horizon is the list length.
    pub fn explicit(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument(format!(
                "explicit target {} = {} is outside [0,1]",
                i + 1,
                values[i]
            )));
        }
        let horizon = values.len();
        Self::with_horizon(TargetKind::Explicit { values }, horizon)
    }

    fn with_horizon(kind: TargetKind, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be >= 1".into()));
        }
        Ok(TargetSequence { kind, horizon })
    }

    pub fn kind(&self) -> &TargetKind {
        &self.kind
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    fn raw(&self, n: usize) -> f64 {
        let nf = n as f64;
        match &self.kind {
            TargetKind::Power { c, gamma } => c * nf.powf(-gamma),
            TargetKind::LogPower { c, beta } => c * (nf + 1.0).ln().powf(*beta) / (nf + 1.0),
            TargetKind::Explicit { values } => values[n - 1],
        }
    }

    /// `M_n`, clamped to `[0, 1]`.
    pub fn value(&self, n: usize) -> Result<f64> {
        if n == 0 || n > self.horizon {
            return Err(Error::OutOfRange {
                n,
                horizon: self.horizon,
            });
        }
        let v = self.raw(n);
        if v > 1.0 {
            log::debug!("target M_{n} = {v} clamped to 1");
        }
        Ok(v.clamp(0.0, 1.0))
    }

    /// `M_1, ..., M_{n_max}`.
    pub fn values(&self, n_max: usize) -> Result<Vec<f64>> {
        if n_max > self.horizon {
            return Err(Error::OutOfRange {
                n: n_max,
                horizon: self.horizon,
            });
        }
        let mut clamped = 0usize;
        let out = (1..=n_max)
            .map(|n| {
                let v = self.raw(n);
                if v > 1.0 {
                    clamped += 1;
                }
                v.clamp(0.0, 1.0)
            })
            .collect();
        if clamped > 0 {
            log::info!("{clamped} target values above 1 were clamped");
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// Finite-range check of the lower bound `M_n >= (log n)^(4+eps) / n` and of
/// the ratio condition `M_n / M_floor(alpha n) -> 1`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeqValidation {
    pub n_min: usize,
    pub horizon: usize,
    pub epsilon: f64,
    /// Largest `eps` for which the lower bound holds on the whole range, if positive.
    pub epsilon_found: Option<f64>,
    /// The first violating `n` (at most [`MAX_LISTED_VIOLATIONS`]).
    pub bound_violations: Vec<usize>,
    pub violation_count: usize,
    /// Violations at `n` where `(log n)^(4+eps) / n > 1`, which no sequence in
    /// `[0, 1]` can meet.
    pub unattainable_count: usize,
    /// `(alpha, sup_n M_n / M_floor(alpha n))`, ascending in alpha.
    pub ratio_table: Vec<(f64, f64)>,
    pub verdict: Verdict,
}

/// Scans `[n_min, horizon]`.
///
/// The verdict is `pass` only when no bound violation occurs and the ratio
/// table decreases towards 1 as alpha decreases, in the sense that it is
/// monotone and `ratio(alpha) - 1 <= 2 (alpha - 1)` at the smallest alpha.
/// A horizon shorter than `10 n_min` is `inconclusive`.
pub fn validate_target_sequence(
    seq: &TargetSequence,
    n_min: usize,
    alpha_grid: &[f64],
    epsilon: f64,
) -> Result<SeqValidation> {
    if alpha_grid.is_empty() {
        return Err(Error::InvalidArgument("alpha grid is empty".into()));
    }
    if alpha_grid.iter().any(|&a| !(a > 1.0)) {
        return Err(Error::InvalidArgument("alpha values must exceed 1".into()));
    }
    if n_min < 3 {
        return Err(Error::InvalidArgument(format!(
            "n_min must be >= 3, got {n_min}"
        )));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be > 0, got {epsilon}"
        )));
    }
    let horizon = seq.horizon();
    let m = seq.values(horizon)?;
    let mut alphas = alpha_grid.to_vec();
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();

    let mut bound_violations = Vec::new();
    let mut violation_count = 0usize;
    let mut unattainable_count = 0usize;
    let mut eps_found = f64::INFINITY;
    for n in n_min..=horizon {
        let mn = m[n - 1];
        let nf = n as f64;
        let lnn = nf.ln();
        let bound = lnn.powf(4.0 + epsilon) / nf;
        if mn < bound {
            violation_count += 1;
            if bound > 1.0 {
                unattainable_count += 1;
            }
            if bound_violations.len() < MAX_LISTED_VIOLATIONS {
                bound_violations.push(n);
            }
        }
        // M_n >= (ln n)^(4+e)/n  <=>  e <= ln(n M_n)/ln ln n - 4.
        let e = if mn > 0.0 {
            (nf * mn).ln() / lnn.ln() - 4.0
        } else {
            f64::NEG_INFINITY
        };
        eps_found = eps_found.min(e);
    }

    let ratio_table: Vec<(f64, f64)> = alphas
        .iter()
        .map(|&alpha| {
            let mut sup = f64::NEG_INFINITY;
            for n in n_min..=horizon {
                let j = (alpha * n as f64).floor() as usize;
                if j > horizon {
                    break;
                }
                let r = m[n - 1] / m[j - 1];
                let r = if r.is_nan() { 1.0 } else { r };
                sup = sup.max(r);
            }
            (alpha, sup)
        })
        .collect();

    let usable: Vec<&(f64, f64)> = ratio_table.iter().filter(|(_, r)| r.is_finite()).collect();
    let monotone =
        usable.len() == ratio_table.len() && ratio_table.windows(2).all(|w| w[0].1 <= w[1].1);
    let near_one = ratio_table
        .first()
        .map(|&(a, r)| r - 1.0 <= 2.0 * (a - 1.0))
        .unwrap_or(false);

    let verdict = if horizon < 10 * n_min {
        Verdict::Inconclusive
    } else if violation_count == 0 && monotone && near_one {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(SeqValidation {
        n_min,
        horizon,
        epsilon,
        epsilon_found: (eps_found > 0.0 && eps_found.is_finite()).then_some(eps_found),
        bound_violations,
        violation_count,
        unattainable_count,
        ratio_table,
        verdict,
    })
}

/// Closed-form inverse of `r -> mu(B(x, r))` for Lebesgue measure.
fn lebesgue_radius(space: &SpaceSpec, mass: f64) -> Result<f64> {
    let n = space.dimension();
    match (space.metric(), n) {
        (Metric::ChebyshevQuotient, _) | (Metric::EuclideanQuotient, 1) => {
            Ok(mass.powf(1.0 / n as f64) / 2.0)
        }
        (Metric::EuclideanQuotient, _) => {
            let r = (mass / unit_ball_volume(n)).powf(1.0 / n as f64);
            if r > 0.5 {
                Err(Error::InexactRegime { r })
            } else {
                Ok(r)
            }
        }
    }
}

fn check_mass(mass: f64, tol: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&mass) {
        return Err(Error::InvalidArgument(format!(
            "target mass {mass} is outside [0,1]"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be > 0, got {tol}"
        )));
    }
    Ok(())
}

/// `inf{r >= 0 : mu(B(x, r)) >= mass}`.
///
/// Lebesgue measure uses the closed form. Otherwise `r` is bisected on
/// `[0, diameter]` to full floating-point resolution with the predicate
/// `mu(B(x, r)) >= mass - slack`, `slack = min(tol / 2, 1e-12)`, which lands on
/// the left end of any plateau despite rounding in the ball integral.
pub fn invert_radius(
    measure: &MeasureSpec,
    space: &SpaceSpec,
    x: &Point,
    mass: f64,
    tol: f64,
) -> Result<f64> {
    check_mass(mass, tol)?;
    match measure {
        MeasureSpec::Lebesgue => {
            space.check_point(x)?;
            lebesgue_radius(space, mass)
        }
        _ => bisect_radius(measure, space, x, mass, tol, space.diameter()),
    }
}

fn plateau_slack(tol: f64) -> f64 {
    (tol / 2.0).min(1e-12)
}

fn bisect_radius(
    measure: &MeasureSpec,
    space: &SpaceSpec,
    x: &Point,
    mass: f64,
    tol: f64,
    upper: f64,
) -> Result<f64> {
    if mass == 0.0 {
        return Ok(0.0);
    }
    let target = mass - plateau_slack(tol);
    let mut lo = 0.0f64;
    let mut hi = upper;
    if measure.ball_measure(space, x, hi)? < target {
        hi = space.diameter();
    }
    let mut converged = false;
    for _ in 0..MAX_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            converged = true;
            break;
        }
        if measure.ball_measure(space, x, mid)? >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let residual = (measure.ball_measure(space, x, hi)? - mass).abs();
    if !converged || residual > tol {
        return Err(Error::NumericalFailure(format!(
            "radius bisection for mass {mass} stalled at r = {hi} (residual {residual:e})"
        )));
    }
    Ok(hi)
}

/// Radii `r_n(x)` at one center.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RadiusProfile {
    pub center: Vec<f64>,
    pub radii: BTreeMap<usize, f64>,
    pub tolerance: f64,
}

/// `r_n(x)` for every `n` in `n_list`. When `M` decreases along the list the
/// previous radius brackets the next bisection from above.
pub fn radius_profile(
    measure: &MeasureSpec,
    space: &SpaceSpec,
    x: &Point,
    seq: &TargetSequence,
    n_list: &[usize],
    tol: f64,
) -> Result<RadiusProfile> {
    space.check_point(x)?;
    let mut radii = BTreeMap::new();
    let mut prev: Option<(f64, f64)> = None;
    for &n in n_list {
        let mass = seq.value(n)?;
        check_mass(mass, tol)?;
        let r = match measure {
            MeasureSpec::Lebesgue => lebesgue_radius(space, mass)?,
            _ => {
                let upper = match prev {
                    Some((m_prev, r_prev)) if mass <= m_prev => r_prev,
                    _ => space.diameter(),
                };
                bisect_radius(measure, space, x, mass, tol, upper)?
            }
        };
        prev = Some((mass, r));
        radii.insert(n, r);
    }
    Ok(RadiusProfile {
        center: x.to_f64(),
        radii,
        tolerance: tol,
    })
}

/// `r_1(x), ..., r_{n_max}(x)` as a dense vector.
pub fn radius_series(
    measure: &MeasureSpec,
    space: &SpaceSpec,
    x: &Point,
    masses: &[f64],
    tol: f64,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(masses.len());
    let mut prev: Option<(f64, f64)> = None;
    for &mass in masses {
        check_mass(mass, tol)?;
        let r = match measure {
            MeasureSpec::Lebesgue => lebesgue_radius(space, mass)?,
            _ => match prev {
                Some((m_prev, r_prev)) if m_prev == mass => r_prev,
                Some((m_prev, r_prev)) if mass < m_prev => {
                    bisect_radius(measure, space, x, mass, tol, r_prev)?
                }
                _ => bisect_radius(measure, space, x, mass, tol, space.diameter())?,
            },
        };
        prev = Some((mass, r));
        out.push(r);
    }
    Ok(out)
}
