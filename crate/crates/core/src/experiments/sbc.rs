//! Strong Borel–Cantelli runs: hit counts `S_n(x) = #{k <= n : d(T^k x, x) < r_k(x)}`
//! against the cumulative target mass `sum_{k <= n} M_k`.

use serde::Serialize;

use super::{Assumption1Policy, RadiusSource};
use crate::error::{Error, Result};
use crate::measures::MeasureSpec;
use crate::phase::{Point, SpaceSpec};
use crate::rng::stream;
use crate::systems::SystemSpec;
use crate::targets::{SeqValidation, TargetSequence};

#[derive(Clone, Debug, PartialEq)]
pub struct SbcOptions {
    pub n_max: usize,
    pub n_seeds: usize,
    /// Steps at which `S_n` is recorded. `n_max` is always added.
    pub checkpoints: Vec<usize>,
    pub master_seed: u64,
    pub policy: Assumption1Policy,
    /// Count hits of the shrinking targets `B(y, r_k(y))` around a fixed `y`
    /// instead of the recurrence balls around the start point.
    pub fixed_center: Option<Point>,
}

impl SbcOptions {
    pub fn new(n_max: usize, n_seeds: usize, master_seed: u64) -> Self {
        SbcOptions {
            n_max,
            n_seeds,
            checkpoints: Vec::new(),
            master_seed,
            policy: Assumption1Policy::default(),
            fixed_center: None,
        }
    }

    /// Checkpoints sorted, deduplicated and ending at `n_max`.
    fn resolved_checkpoints(&self) -> Result<Vec<usize>> {
        let mut cps = self.checkpoints.clone();
        if let Some(&bad) = cps.iter().find(|&&n| n == 0 || n > self.n_max) {
            return Err(Error::InvalidArgument(format!(
                "checkpoint {bad} outside [1, {}]",
                self.n_max
            )));
        }
        cps.push(self.n_max);
        cps.sort_unstable();
        cps.dedup();
        Ok(cps)
    }
}

/// Hit counts of one seed at each checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeedSeries {
    pub seed: usize,
    pub start: Vec<f64>,
    pub hits: Vec<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RatioStats {
    pub mean: f64,
    pub std_dev: f64,
    pub std_error: f64,
    pub min: f64,
    pub q05: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub q95: f64,
    pub max: f64,
}

impl RatioStats {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Some(RatioStats {
            mean,
            std_dev: var.sqrt(),
            std_error: (var / n).sqrt(),
            min: sorted[0],
            q05: quantile(&sorted, 0.05),
            q25: quantile(&sorted, 0.25),
            median: quantile(&sorted, 0.5),
            q75: quantile(&sorted, 0.75),
            q95: quantile(&sorted, 0.95),
            max: sorted[sorted.len() - 1],
        })
    }
}

/// Linear-interpolation quantile of sorted data.
pub(crate) fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SbcResult {
    pub system: String,
    pub measure: String,
    /// False for rotations and the identity, which are run as controls.
    pub mixing: bool,
    pub n_max: usize,
    pub master_seed: u64,
    pub checkpoints: Vec<usize>,
    /// `sum_{k <= n} M_k` at each checkpoint.
    pub cum_mass: Vec<f64>,
    pub seeds: Vec<SeedSeries>,
    /// Statistics of `S_n / sum M_k` over seeds at each checkpoint.
    pub ratio_stats: Vec<RatioStats>,
    pub validation: Option<SeqValidation>,
    pub overridden: bool,
    pub fixed_center: Option<Vec<f64>>,
}

impl SbcResult {
    pub fn ratio(&self, seed: usize, checkpoint: usize) -> f64 {
        self.seeds[seed].hits[checkpoint] as f64 / self.cum_mass[checkpoint]
    }

    /// Statistics at `n_max`.
    pub fn final_stats(&self) -> &RatioStats {
        self.ratio_stats
            .last()
            .expect("n_max is always a checkpoint")
    }

    /// Rows `(seed, n, S_n, cum_mass, ratio)`.
    pub fn rows(&self) -> impl Iterator<Item = (usize, usize, u64, f64, f64)> + '_ {
        self.seeds.iter().flat_map(move |s| {
            self.checkpoints.iter().enumerate().map(move |(j, &n)| {
                (
                    s.seed,
                    n,
                    s.hits[j],
                    self.cum_mass[j],
                    self.ratio(s.seed, j),
                )
            })
        })
    }
}

/// Runs `n_seeds` independent orbits of length `n_max`.
///
/// Seed `i` draws its start `x ~ mu` and then its orbit digits from
/// `stream(master_seed, i)`. The radii `r_k(x)` solve `mu(B(x, r_k)) = M_k`.
pub fn run_sbc(
    system: &SystemSpec,
    measure: &MeasureSpec,
    space: &SpaceSpec,
    seq: &TargetSequence,
    opts: &SbcOptions,
) -> Result<SbcResult> {
    use rayon::prelude::*;

    if system.dimension() != space.dimension() {
        return Err(Error::DimensionMismatch {
            expected: space.dimension(),
            found: system.dimension(),
        });
    }
    if opts.n_max == 0 || opts.n_seeds == 0 {
        return Err(Error::InvalidArgument(
            "n_max and n_seeds must be positive".into(),
        ));
    }
    if opts.n_max > seq.horizon() {
        return Err(Error::OutOfRange {
            n: opts.n_max,
            horizon: seq.horizon(),
        });
    }
    let checkpoints = opts.resolved_checkpoints()?;
    let validation = opts.policy.screen(seq)?;
    let masses = seq.values(opts.n_max)?;

    let mut cum_mass = Vec::with_capacity(checkpoints.len());
    let mut acc = 0.0;
    let mut next = 0;
    for (k, m) in masses.iter().enumerate() {
        acc += m;
        if checkpoints[next] == k + 1 {
            cum_mass.push(acc);
            next += 1;
        }
    }
    if acc <= 0.0 {
        return Err(Error::DegenerateMass);
    }
    if !system.is_mixing() {
        log::warn!(
            "{} is not mixing; this run is a negative control",
            system.kind().name()
        );
    }

    let radii = RadiusSource::new(measure, space, masses)?;
    let fixed = match &opts.fixed_center {
        Some(y) => {
            space.check_point(y)?;
            Some((y.clone(), radii.at(y)?.into_owned()))
        }
        None => None,
    };

    let seeds: Vec<SeedSeries> = (0..opts.n_seeds)
        .into_par_iter()
        .map(|seed| {
            let mut rng = stream(opts.master_seed, seed as u64);
            let x = measure.sample(space, &mut rng);
            let (target, r) = match &fixed {
                Some((y, r)) => (y.clone(), std::borrow::Cow::Borrowed(r.as_slice())),
                None => (x.clone(), radii.at(&x)?),
            };
            let mut state = system.init_state(&x, rng)?;
            let mut hits = Vec::with_capacity(checkpoints.len());
            let mut count = 0u64;
            let mut next = 0;
            for (k, &rk) in r.iter().enumerate() {
                system.step(&mut state);
                if space.distance_fractions(state.current().fractions(), target.fractions()) < rk {
                    count += 1;
                }
                if checkpoints[next] == k + 1 {
                    hits.push(count);
                    next += 1;
                }
            }
            Ok(SeedSeries {
                seed,
                start: x.to_f64(),
                hits,
            })
        })
        .collect::<Result<_>>()?;

    let ratio_stats = (0..checkpoints.len())
        .map(|j| {
            let ratios: Vec<f64> = seeds
                .iter()
                .map(|s| s.hits[j] as f64 / cum_mass[j])
                .collect();
            RatioStats::from_values(&ratios).expect("at least one seed")
        })
        .collect();

    Ok(SbcResult {
        system: system.kind().name().to_string(),
        measure: measure.name().to_string(),
        mixing: system.is_mixing(),
        n_max: opts.n_max,
        master_seed: opts.master_seed,
        checkpoints,
        cum_mass,
        seeds,
        ratio_stats,
        overridden: opts.policy.override_refusal
            && validation
                .as_ref()
                .is_some_and(|v| v.verdict == crate::targets::Verdict::Fail),
        validation,
        fixed_center: opts.fixed_center.as_ref().map(Point::to_f64),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_sequence(m: f64, horizon: usize) -> TargetSequence {
        TargetSequence::explicit(vec![m; horizon]).unwrap()
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [4.0, 1.0, 3.0, 2.0];
        let s = RatioStats::from_values(&v).unwrap();
        assert_eq!(s.median, 2.5);
        assert_eq!(s.min, 1.0);
        assert_eq!(s.max, 4.0);
        assert!((s.q25 - 1.75).abs() < 1e-15);
        assert!((s.std_dev - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn doubling_map_constant_targets_average_to_one() {
        // With M_k = 0.1 the expected hit count is exactly 0.1 per step.
        let space = SpaceSpec::circle();
        let seq = constant_sequence(0.1, 2000);
        let mut opts = SbcOptions::new(2000, 64, 11);
        opts.checkpoints = vec![10, 100, 1000];
        opts.policy = Assumption1Policy::overridden();
        let res = run_sbc(
            &SystemSpec::doubling_map(),
            &MeasureSpec::Lebesgue,
            &space,
            &seq,
            &opts,
        )
        .unwrap();
        assert_eq!(res.checkpoints, vec![10, 100, 1000, 2000]);
        assert!((res.cum_mass[3] - 200.0).abs() < 1e-9);
        let st = res.final_stats();
        assert!(
            (st.mean - 1.0).abs() < 4.0 * st.std_error.max(0.01),
            "{st:?}"
        );
        for s in &res.seeds {
            assert!(s.hits.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn identity_is_a_control_with_diverging_ratio() {
        let space = SpaceSpec::circle();
        let seq = TargetSequence::power(1.0, 0.9, 1000).unwrap();
        let mut opts = SbcOptions::new(1000, 4, 1);
        opts.policy = Assumption1Policy::overridden();
        let res = run_sbc(
            &SystemSpec::identity(&space),
            &MeasureSpec::Lebesgue,
            &space,
            &seq,
            &opts,
        )
        .unwrap();
        assert!(!res.mixing);
        assert!(res.overridden);
        // Every step is a hit, so S_n = n and the ratio is n / sum M_k.
        assert_eq!(res.seeds[0].hits[0], 1000);
        assert!(res.final_stats().min > 10.0);
    }

    #[test]
    fn failing_sequence_is_refused_without_override() {
        let space = SpaceSpec::circle();
        let seq = TargetSequence::power(1.0, 1.0, 1000).unwrap();
        let opts = SbcOptions::new(1000, 2, 1);
        let err = run_sbc(
            &SystemSpec::doubling_map(),
            &MeasureSpec::Lebesgue,
            &space,
            &seq,
            &opts,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Assumption1Refused(_)));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn zero_mass_is_degenerate() {
        let space = SpaceSpec::circle();
        let seq = constant_sequence(0.0, 50);
        let mut opts = SbcOptions::new(50, 2, 1);
        opts.policy = Assumption1Policy::overridden();
        let err = run_sbc(
            &SystemSpec::doubling_map(),
            &MeasureSpec::Lebesgue,
            &space,
            &seq,
            &opts,
        )
        .unwrap_err();
        assert!(matches!(err, Error::DegenerateMass));
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let space = SpaceSpec::torus(2).unwrap();
        let seq = TargetSequence::power(1.0, 0.9, 500).unwrap();
        let mut opts = SbcOptions::new(500, 16, 5);
        opts.policy = Assumption1Policy::overridden();
        let run = |w| {
            crate::rng::with_workers(w, || {
                run_sbc(
                    &SystemSpec::cat_map(),
                    &MeasureSpec::Lebesgue,
                    &space,
                    &seq,
                    &opts,
                )
                .unwrap()
            })
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn fixed_center_mode_counts_shrinking_target_hits() {
        let space = SpaceSpec::circle();
        let seq = constant_sequence(0.25, 400);
        let mut opts = SbcOptions::new(400, 32, 3);
        opts.policy = Assumption1Policy::overridden();
        opts.fixed_center = Some(Point::from_f64(&[0.5]));
        let res = run_sbc(
            &SystemSpec::doubling_map(),
            &MeasureSpec::Lebesgue,
            &space,
            &seq,
            &opts,
        )
        .unwrap();
        assert_eq!(res.fixed_center, Some(vec![0.5]));
        assert!((res.final_stats().mean - 1.0).abs() < 0.1);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn ratio_stats_are_ordered(v in proptest::collection::vec(0.0f64..10.0, 1..60)) {
                let s = RatioStats::from_values(&v).unwrap();
                let chain = [s.min, s.q05, s.q25, s.median, s.q75, s.q95, s.max];
                prop_assert!(chain.windows(2).all(|w| w[0] <= w[1]));
                prop_assert!(s.min <= s.mean && s.mean <= s.max);
            }

            #[test]
            fn hit_counts_are_nondecreasing_and_bounded(seed in any::<u64>(), gamma in 0.3f64..1.0) {
                let space = SpaceSpec::circle();
                let seq = TargetSequence::power(1.0, gamma, 300).unwrap();
                let mut opts = SbcOptions::new(300, 3, seed);
                opts.checkpoints = vec![1, 10, 100];
                opts.policy = Assumption1Policy::overridden();
                let res = run_sbc(&SystemSpec::doubling_map(), &MeasureSpec::Lebesgue, &space, &seq, &opts).unwrap();
                for s in &res.seeds {
                    prop_assert!(s.hits.windows(2).all(|w| w[0] <= w[1]));
                    for (j, &n) in res.checkpoints.iter().enumerate() {
                        prop_assert!(s.hits[j] <= n as u64);
                    }
                }
            }
        }
    }
}
