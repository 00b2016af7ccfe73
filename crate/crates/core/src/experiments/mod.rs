//! Monte Carlo experiments on recurrence statistics.
//!
//! Every seed (or sample) `i` draws its start point and all of its orbit's
//! random digits from `rng::stream(master_seed, i)`, so the same index yields
//! the same orbit in every experiment and under any thread count.

mod decay;
mod local;
mod recurrence_sets;
mod sbc;

use std::ops::Range;

use rayon::prelude::*;
use serde::Serialize;

pub use decay::{
    estimate_correlation_decay, DecayEstimate, DecayFit, DecayPoint, Observable, MIN_FIT_GAPS,
};
pub use local::{
    boshernitzan_stat, censored_median, local_stats, return_time, return_time_from, BoshStat,
    LocalRow, LocalStats, ReturnTime,
};
pub use recurrence_sets::{
    estimate_e_measure, estimate_e_pair, EnEstimate, PairEstimate, MIN_E_SAMPLES,
};
pub use sbc::{run_sbc, RatioStats, SbcOptions, SbcResult, SeedSeries};

use crate::error::{Error, Result};
use crate::measures::MeasureSpec;
use crate::phase::{Point, SpaceSpec};
use crate::targets::{
    radius_series, validate_target_sequence, SeqValidation, TargetSequence, Verdict, BISECTION_TOL,
    CLOSED_FORM_TOL, DEFAULT_ALPHA_GRID,
};

/// How a target sequence is screened before an experiment uses it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Assumption1Policy {
    pub epsilon: f64,
    pub n_min: usize,
    pub alpha_grid: Vec<f64>,
    /// Run even when the validator fails.
    pub override_refusal: bool,
}

impl Default for Assumption1Policy {
    fn default() -> Self {
        Assumption1Policy {
            epsilon: 0.5,
            n_min: 3,
            alpha_grid: DEFAULT_ALPHA_GRID.to_vec(),
            override_refusal: false,
        }
    }
}

impl Assumption1Policy {
    pub fn overridden() -> Self {
        Assumption1Policy {
            override_refusal: true,
            ..Self::default()
        }
    }

    /// Validates `seq`, refusing a failing sequence unless overridden.
    /// Sequences too short for the validator are let through unchecked.
    pub fn screen(&self, seq: &TargetSequence) -> Result<Option<SeqValidation>> {
        if seq.horizon() < self.n_min {
            return Ok(None);
        }
        let v = validate_target_sequence(seq, self.n_min, &self.alpha_grid, self.epsilon)?;
        if v.verdict == Verdict::Fail {
            if self.override_refusal {
                log::warn!(
                    "target sequence fails the lower-bound/ratio check ({} violations); running anyway",
                    v.violation_count
                );
            } else {
                return Err(Error::Assumption1Refused(format!(
                    "{} lower-bound violations on [{}, {}] with eps = {} (first at n = {}), ratio table {:?}; pass the override to run anyway",
                    v.violation_count,
                    v.n_min,
                    v.horizon,
                    v.epsilon,
                    v.bound_violations.first().copied().unwrap_or(0),
                    v.ratio_table
                )));
            }
        }
        Ok(Some(v))
    }
}

/// Tolerance used for radius inversion under `measure`.
pub(crate) fn inversion_tol(measure: &MeasureSpec) -> f64 {
    if measure.is_translation_invariant() {
        CLOSED_FORM_TOL
    } else {
        BISECTION_TOL
    }
}

/// Radii `r_k` at one center, computed once when they do not depend on it.
pub(crate) enum RadiusSource<'a> {
    Shared(Vec<f64>),
    PerCenter {
        measure: &'a MeasureSpec,
        space: &'a SpaceSpec,
        masses: Vec<f64>,
    },
}

impl<'a> RadiusSource<'a> {
    pub fn new(measure: &'a MeasureSpec, space: &'a SpaceSpec, masses: Vec<f64>) -> Result<Self> {
        if measure.is_translation_invariant() {
            let origin = Point::origin(space.dimension());
            Ok(RadiusSource::Shared(radius_series(
                measure,
                space,
                &origin,
                &masses,
                inversion_tol(measure),
            )?))
        } else {
            Ok(RadiusSource::PerCenter {
                measure,
                space,
                masses,
            })
        }
    }

    pub fn at(&self, center: &Point) -> Result<std::borrow::Cow<'_, [f64]>> {
        match self {
            RadiusSource::Shared(r) => Ok(std::borrow::Cow::Borrowed(r)),
            RadiusSource::PerCenter {
                measure,
                space,
                masses,
            } => Ok(std::borrow::Cow::Owned(radius_series(
                measure,
                space,
                center,
                masses,
                inversion_tol(measure),
            )?)),
        }
    }
}

/// Work items per chunk in parallel reductions. Fixed so that floating-point
/// sums do not depend on the thread count.
pub(crate) const CHUNK: usize = 4096;

/// Maps `f` over `0..n` in fixed chunks, in parallel, results in chunk order.
pub(crate) fn par_chunks<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(Range<usize>) -> Result<T> + Sync,
{
    (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| f(c * CHUNK..((c + 1) * CHUNK).min(n)))
        .collect()
}

pub(crate) fn binomial_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}
