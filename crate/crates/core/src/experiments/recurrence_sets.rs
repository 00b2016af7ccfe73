//! Monte Carlo estimates of `mu(E_n)` and `mu(E_n ∩ E_{n+m})`, where
//! `E_n = {x : d(T^n x, x) < r_n(x)}`.

use serde::Serialize;

use super::{binomial_se, par_chunks, Assumption1Policy, RadiusSource};
use crate::error::{Error, Result};
use crate::measures::MeasureSpec;
use crate::phase::SpaceSpec;
use crate::rng::stream;
use crate::systems::SystemSpec;
use crate::targets::TargetSequence;

/// Fewest samples accepted by the estimators.
pub const MIN_E_SAMPLES: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnEstimate {
    pub n: usize,
    pub samples: usize,
    pub hits: u64,
    pub mu_hat: f64,
    pub std_error: f64,
    /// `M_n`.
    pub target: f64,
    /// `mu_hat - M_n`.
    pub deviation: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PairEstimate {
    pub n: usize,
    pub m: usize,
    pub samples: usize,
    /// Estimate of `mu(E_n ∩ E_{n+m})`.
    pub joint_hat: f64,
    pub joint_se: f64,
    pub marginal_n: f64,
    pub marginal_nm: f64,
    /// `mu_hat(E_n) mu_hat(E_{n+m})`.
    pub product_hat: f64,
    pub product_se: f64,
    /// `joint_hat - product_hat`.
    pub slack: f64,
    /// `joint_hat - M_n M_m`.
    pub slack_vs_mn_mm: f64,
    /// `joint_hat - M_n M_{n+m}`.
    pub slack_vs_mn_mnm: f64,
}

fn check_common(system: &SystemSpec, space: &SpaceSpec, n: usize, samples: usize) -> Result<()> {
    if system.dimension() != space.dimension() {
        return Err(Error::DimensionMismatch {
            expected: space.dimension(),
            found: system.dimension(),
        });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    if samples < MIN_E_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_E_SAMPLES} samples, got {samples}"
        )));
    }
    Ok(())
}

/// For each sample, whether `d(T^k x, x) < r_k(x)` at each `k` in `steps`
/// (ascending). Sample `i` uses `stream(master_seed, i)` exactly as seed `i`
/// of an SBC run does.
fn hit_counts(
    system: &SystemSpec,
    measure: &MeasureSpec,
    space: &SpaceSpec,
    masses: Vec<f64>,
    steps: &[usize],
    samples: usize,
    master_seed: u64,
) -> Result<Vec<u64>> {
    let radii = RadiusSource::new(measure, space, masses)?;
    let last = *steps.last().expect("nonempty");
    // Column j counts samples hitting at steps[j]; the final column counts
    // samples hitting at every step in `steps`.
    let chunks = par_chunks(samples, |range| {
        let mut counts = vec![0u64; steps.len() + 1];
        let mut hit = vec![false; steps.len()];
        for i in range {
            let mut rng = stream(master_seed, i as u64);
            let x = measure.sample(space, &mut rng);
            let r = radii.at(&x)?;
            let mut state = system.init_state(&x, rng)?;
            let mut next = 0;
            for k in 1..=last {
                system.step(&mut state);
                if k == steps[next] {
                    hit[next] = space
                        .distance_fractions(state.current().fractions(), x.fractions())
                        < r[k - 1];
                    next += 1;
                }
            }
            for (c, &h) in counts.iter_mut().zip(&hit) {
                *c += h as u64;
            }
            counts[steps.len()] += hit.iter().all(|&h| h) as u64;
        }
        Ok(counts)
    })?;
    let mut total = vec![0u64; steps.len() + 1];
    for c in chunks {
        for (t, v) in total.iter_mut().zip(c) {
            *t += v;
        }
    }
    Ok(total)
}

/// Estimates `mu(E_n)` from `samples` points drawn from `mu`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_e_measure(
    system: &SystemSpec,
    measure: &MeasureSpec,
    space: &SpaceSpec,
    seq: &TargetSequence,
    n: usize,
    samples: usize,
    master_seed: u64,
    policy: &Assumption1Policy,
) -> Result<EnEstimate> {
    check_common(system, space, n, samples)?;
    policy.screen(seq)?;
    let masses = seq.values(n)?;
    let target = masses[n - 1];
    if masses.iter().all(|&m| m <= 0.0) {
        return Err(Error::DegenerateMass);
    }
    let hits = hit_counts(system, measure, space, masses, &[n], samples, master_seed)?[0];
    let mu_hat = hits as f64 / samples as f64;
    Ok(EnEstimate {
        n,
        samples,
        hits,
        mu_hat,
        std_error: binomial_se(mu_hat, samples),
        target,
        deviation: mu_hat - target,
    })
}

/// Estimates `mu(E_n ∩ E_{n+m})` and the product of the marginals from one
/// set of samples.
#[allow(clippy::too_many_arguments)]
pub fn estimate_e_pair(
    system: &SystemSpec,
    measure: &MeasureSpec,
    space: &SpaceSpec,
    seq: &TargetSequence,
    n: usize,
    m: usize,
    samples: usize,
    master_seed: u64,
    policy: &Assumption1Policy,
) -> Result<PairEstimate> {
    check_common(system, space, n, samples)?;
    if m == 0 {
        return Err(Error::InvalidArgument("m must be >= 1".into()));
    }
    policy.screen(seq)?;
    let masses = seq.values(n + m)?;
    let (mn, mm, mnm) = (masses[n - 1], masses[m - 1], masses[n + m - 1]);
    let counts = hit_counts(
        system,
        measure,
        space,
        masses,
        &[n, n + m],
        samples,
        master_seed,
    )?;
    let s = samples as f64;
    let (p_n, p_nm, joint) = (
        counts[0] as f64 / s,
        counts[1] as f64 / s,
        counts[2] as f64 / s,
    );
    let (se_n, se_nm) = (binomial_se(p_n, samples), binomial_se(p_nm, samples));
    let product = p_n * p_nm;
    Ok(PairEstimate {
        n,
        m,
        samples,
        joint_hat: joint,
        joint_se: binomial_se(joint, samples),
        marginal_n: p_n,
        marginal_nm: p_nm,
        product_hat: product,
        product_se: ((p_nm * se_n).powi(2) + (p_n * se_nm).powi(2)).sqrt(),
        slack: joint - product,
        slack_vs_mn_mm: joint - mn * mm,
        slack_vs_mn_mnm: joint - mn * mnm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{run_sbc, SbcOptions};

    #[test]
    fn doubling_map_e_n_matches_target() {
        // E_n = {x : |2^n x - x| < r} has measure exactly 2r = M_n.
        let space = SpaceSpec::circle();
        let seq = TargetSequence::explicit(vec![0.01; 20]).unwrap();
        let est = estimate_e_measure(
            &SystemSpec::doubling_map(),
            &MeasureSpec::Lebesgue,
            &space,
            &seq,
            10,
            200_000,
            3,
            &Assumption1Policy::overridden(),
        )
        .unwrap();
        assert_eq!(est.target, 0.01);
        assert!(est.deviation.abs() <= 4.0 * est.std_error, "{est:?}");
    }

    #[test]
    fn doubling_map_first_step_oracle() {
        // d(2x, x) = |x| on the circle, so E_1 = {|x| < 1/4} has measure 1/2.
        let space = SpaceSpec::circle();
        let seq = TargetSequence::explicit(vec![0.5]).unwrap();
        let est = estimate_e_measure(
            &SystemSpec::doubling_map(),
            &MeasureSpec::Lebesgue,
            &space,
            &seq,
            1,
            100_000,
            17,
            &Assumption1Policy::overridden(),
        )
        .unwrap();
        assert!((est.mu_hat - 0.5).abs() <= 4.0 * est.std_error, "{est:?}");
    }

    #[test]
    fn empty_events_give_zero_pair() {
        let space = SpaceSpec::circle();
        let seq = TargetSequence::explicit(vec![0.0; 10]).unwrap();
        let p = estimate_e_pair(
            &SystemSpec::doubling_map(),
            &MeasureSpec::Lebesgue,
            &space,
            &seq,
            3,
            4,
            1000,
            0,
            &Assumption1Policy::overridden(),
        )
        .unwrap();
        assert_eq!((p.joint_hat, p.product_hat, p.slack), (0.0, 0.0, 0.0));
    }

    #[test]
    fn identity_pair_has_no_slack() {
        let space = SpaceSpec::circle();
        let seq = TargetSequence::explicit(vec![0.01; 10]).unwrap();
        let p = estimate_e_pair(
            &SystemSpec::identity(&space),
            &MeasureSpec::Lebesgue,
            &space,
            &seq,
            3,
            4,
            1000,
            0,
            &Assumption1Policy::overridden(),
        )
        .unwrap();
        assert_eq!((p.joint_hat, p.product_hat, p.slack), (1.0, 1.0, 0.0));
    }

    #[test]
    fn identity_hits_every_time() {
        let space = SpaceSpec::circle();
        let seq = TargetSequence::explicit(vec![0.01; 5]).unwrap();
        let est = estimate_e_measure(
            &SystemSpec::identity(&space),
            &MeasureSpec::Lebesgue,
            &space,
            &seq,
            3,
            1000,
            0,
            &Assumption1Policy::overridden(),
        )
        .unwrap();
        assert_eq!(est.mu_hat, 1.0);
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn too_few_samples_rejected() {
        let space = SpaceSpec::circle();
        let seq = TargetSequence::explicit(vec![0.01; 5]).unwrap();
        let err = estimate_e_measure(
            &SystemSpec::doubling_map(),
            &MeasureSpec::Lebesgue,
            &space,
            &seq,
            3,
            999,
            0,
            &Assumption1Policy::overridden(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn joint_never_exceeds_marginals() {
        let space = SpaceSpec::torus(2).unwrap();
        let seq = TargetSequence::explicit(vec![0.05; 40]).unwrap();
        let p = estimate_e_pair(
            &SystemSpec::cat_map(),
            &MeasureSpec::Lebesgue,
            &space,
            &seq,
            10,
            10,
            100_000,
            9,
            &Assumption1Policy::overridden(),
        )
        .unwrap();
        assert!(p.joint_hat <= p.marginal_n.min(p.marginal_nm));
        assert!(p.slack.abs() <= 4.0 * (p.joint_se + p.product_se), "{p:?}");
    }

    #[test]
    fn agrees_with_sbc_increments_on_shared_streams() {
        let space = SpaceSpec::circle();
        let seq = TargetSequence::power(1.0, 0.5, 30).unwrap();
        let policy = Assumption1Policy::overridden();
        let n = 7;
        let mut opts = SbcOptions::new(30, MIN_E_SAMPLES, 21);
        opts.checkpoints = vec![n - 1, n];
        opts.policy = policy.clone();
        let sbc = run_sbc(
            &SystemSpec::doubling_map(),
            &MeasureSpec::Lebesgue,
            &space,
            &seq,
            &opts,
        )
        .unwrap();
        let increments: u64 = sbc.seeds.iter().map(|s| s.hits[1] - s.hits[0]).sum();
        let est = estimate_e_measure(
            &SystemSpec::doubling_map(),
            &MeasureSpec::Lebesgue,
            &space,
            &seq,
            n,
            MIN_E_SAMPLES,
            21,
            &policy,
        )
        .unwrap();
        assert_eq!(est.hits, increments);
    }
}
