//! Correlation decay of Hölder observables along orbits.

use serde::{Deserialize, Serialize};

use super::par_chunks;
use crate::error::{Error, Result};
use crate::measures::MeasureSpec;
use crate::phase::{Point, SpaceSpec};
use crate::regression::fit_line;
use crate::rng::stream;
use crate::systems::SystemSpec;

/// Gaps above the noise floor needed before an exponential fit is attempted.
pub const MIN_FIT_GAPS: usize = 3;

/// A Lipschitz (Hölder exponent 1) observable on the torus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Observable {
    /// `cos(2 pi k . x)`.
    Cosine {
        freq: Vec<i64>,
    },
    /// `d(x, point)`.
    DistanceTo {
        point: Vec<f64>,
    },
    Constant {
        value: f64,
    },
}

enum Prepared {
    Cosine(Vec<f64>),
    DistanceTo(Point),
    Constant(f64),
}

impl Observable {
    fn prepare(&self, space: &SpaceSpec) -> Result<Prepared> {
        let n = space.dimension();
        let check = |len: usize| {
            if len == n {
                Ok(())
            } else {
                Err(Error::DimensionMismatch {
                    expected: n,
                    found: len,
                })
            }
        };
        Ok(match self {
            Observable::Cosine { freq } => {
                check(freq.len())?;
                Prepared::Cosine(freq.iter().map(|&k| k as f64).collect())
            }
            Observable::DistanceTo { point } => {
                check(point.len())?;
                Prepared::DistanceTo(Point::from_f64(point))
            }
            Observable::Constant { value } => {
                if !value.is_finite() {
                    return Err(Error::InvalidArgument("constant must be finite".into()));
                }
                Prepared::Constant(*value)
            }
        })
    }

    /// `sup |phi| + Lip(phi)`, the Hölder norm with exponent 1.
    pub fn holder_norm(&self, space: &SpaceSpec) -> f64 {
        match self {
            Observable::Cosine { freq } => {
                1.0 + 2.0
                    * std::f64::consts::PI
                    * freq.iter().map(|k| k.unsigned_abs() as f64).sum::<f64>()
            }
            Observable::DistanceTo { .. } => space.diameter() + 1.0,
            Observable::Constant { value } => value.abs(),
        }
    }
}

impl Prepared {
    fn eval(&self, space: &SpaceSpec, x: &Point) -> f64 {
        match self {
            Prepared::Cosine(k) => {
                // Reduce the phase on the fixed-point grid before scaling.
                let phase: f64 = x
                    .fractions()
                    .iter()
                    .zip(k)
                    .map(|(&c, &kf)| kf * crate::phase::fraction_to_f64(c))
                    .sum();
                (2.0 * std::f64::consts::PI * phase.rem_euclid(1.0)).cos()
            }
            Prepared::DistanceTo(p) => space.distance_fractions(x.fractions(), p.fractions()),
            Prepared::Constant(c) => *c,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DecayPoint {
    pub gap: usize,
    pub corr: f64,
    pub abs_corr: f64,
    pub std_error: f64,
    pub used_in_fit: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum DecayFit {
    /// `|C(n)| ~ c_hat exp(-tau_hat n)` fitted on the gaps above the floor.
    Exponential {
        tau_hat: f64,
        tau_se: f64,
        c_hat: f64,
    },
    /// Fewer than [`MIN_FIT_GAPS`] gaps above the noise floor: the decay is
    /// too fast to measure at this sample size.
    IndistinguishableFromFast { above_floor: usize },
    /// The fitted rate is not significantly positive (`tau - 2 se <= 0`).
    /// Rates reported here are not decay rates.
    NonDecaying { slope: f64, slope_se: f64 },
}

impl DecayFit {
    /// The decay rate, when one was fitted.
    pub fn tau_hat(&self) -> Option<f64> {
        match self {
            DecayFit::Exponential { tau_hat, .. } => Some(*tau_hat),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayEstimate {
    pub observables: Vec<Observable>,
    pub holder_exponent: f64,
    pub holder_norms: Vec<f64>,
    pub samples: usize,
    /// `4 / sqrt(samples)`.
    pub noise_floor: f64,
    pub points: Vec<DecayPoint>,
    pub fit: DecayFit,
}

#[derive(Clone)]
struct Sums {
    first: f64,
    second: Vec<f64>,
    third: Vec<f64>,
    prod: Vec<f64>,
    prod_sq: Vec<f64>,
}

impl Sums {
    fn zero(gaps: usize) -> Self {
        Sums {
            first: 0.0,
            second: vec![0.0; gaps],
            third: vec![0.0; gaps],
            prod: vec![0.0; gaps],
            prod_sq: vec![0.0; gaps],
        }
    }

    fn add(&mut self, o: &Sums) {
        self.first += o.first;
        for j in 0..self.prod.len() {
            self.second[j] += o.second[j];
            self.third[j] += o.third[j];
            self.prod[j] += o.prod[j];
            self.prod_sq[j] += o.prod_sq[j];
        }
    }
}

/// Estimates `C(n) = int phi_1 . phi_2 o T^n [. phi_3 o T^{2n}] - prod int phi_k`
/// at every gap `n` from `samples` points drawn from `mu`.
///
/// Two observables give pair correlations, three give the triple correlation
/// at times `(0, n, 2n)`.
pub fn estimate_correlation_decay(
    system: &SystemSpec,
    measure: &MeasureSpec,
    space: &SpaceSpec,
    observables: &[Observable],
    gaps: &[usize],
    samples: usize,
    master_seed: u64,
) -> Result<DecayEstimate> {
    if !(2..=3).contains(&observables.len()) {
        return Err(Error::InvalidArgument(format!(
            "need 2 or 3 observables, got {}",
            observables.len()
        )));
    }
    if gaps.is_empty() || gaps.contains(&0) || gaps.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "gaps must be positive and strictly increasing".into(),
        ));
    }
    if samples < 2 {
        return Err(Error::InvalidArgument("need at least 2 samples".into()));
    }
    if system.dimension() != space.dimension() {
        return Err(Error::DimensionMismatch {
            expected: space.dimension(),
            found: system.dimension(),
        });
    }
    let prepared: Vec<Prepared> = observables
        .iter()
        .map(|o| o.prepare(space))
        .collect::<Result<_>>()?;
    let triple = prepared.len() == 3;
    let last = gaps[gaps.len() - 1] * if triple { 2 } else { 1 };

    let chunks = par_chunks(samples, |range| {
        let mut s = Sums::zero(gaps.len());
        let mut v2 = vec![0.0; gaps.len()];
        let mut v3 = vec![1.0; gaps.len()];
        for i in range {
            let mut rng = stream(master_seed, i as u64);
            let x = measure.sample(space, &mut rng);
            let v1 = prepared[0].eval(space, &x);
            let mut state = system.init_state(&x, rng)?;
            let (mut a, mut b) = (0, 0);
            for k in 1..=last {
                system.step(&mut state);
                if a < gaps.len() && gaps[a] == k {
                    v2[a] = prepared[1].eval(space, state.current());
                    a += 1;
                }
                if triple && b < gaps.len() && 2 * gaps[b] == k {
                    v3[b] = prepared[2].eval(space, state.current());
                    b += 1;
                }
            }
            s.first += v1;
            for j in 0..gaps.len() {
                let p = v1 * v2[j] * v3[j];
                s.second[j] += v2[j];
                s.third[j] += v3[j];
                s.prod[j] += p;
                s.prod_sq[j] += p * p;
            }
        }
        Ok(s)
    })?;
    let mut total = Sums::zero(gaps.len());
    for c in &chunks {
        total.add(c);
    }

    let nf = samples as f64;
    let noise_floor = 4.0 / nf.sqrt();
    let mean1 = total.first / nf;
    let mut points: Vec<DecayPoint> = gaps
        .iter()
        .enumerate()
        .map(|(j, &gap)| {
            let mp = total.prod[j] / nf;
            let mut product_of_means = mean1 * total.second[j] / nf;
            if triple {
                product_of_means *= total.third[j] / nf;
            }
            let corr = mp - product_of_means;
            let var = (total.prod_sq[j] / nf - mp * mp).max(0.0) * nf / (nf - 1.0);
            DecayPoint {
                gap,
                corr,
                abs_corr: corr.abs(),
                std_error: (var / nf).sqrt(),
                used_in_fit: corr.abs() > noise_floor,
            }
        })
        .collect();

    let fit_points: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.used_in_fit)
        .map(|p| (p.gap as f64, p.abs_corr.ln()))
        .collect();
    let fit = if fit_points.len() < MIN_FIT_GAPS {
        for p in &mut points {
            p.used_in_fit = false;
        }
        DecayFit::IndistinguishableFromFast {
            above_floor: fit_points.len(),
        }
    } else {
        let line = fit_line(&fit_points)
            .ok_or_else(|| Error::NumericalFailure("correlation fit on coincident gaps".into()))?;
        let tau = -line.slope;
        if tau - 2.0 * line.slope_se > 0.0 {
            DecayFit::Exponential {
                tau_hat: tau,
                tau_se: line.slope_se,
                c_hat: line.intercept.exp(),
            }
        } else {
            DecayFit::NonDecaying {
                slope: line.slope,
                slope_se: line.slope_se,
            }
        }
    };

    Ok(DecayEstimate {
        observables: observables.to_vec(),
        holder_exponent: 1.0,
        holder_norms: observables.iter().map(|o| o.holder_norm(space)).collect(),
        samples,
        noise_floor,
        points,
        fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cos1() -> Observable {
        Observable::Cosine { freq: vec![1] }
    }

    #[test]
    fn doubling_map_trig_correlations_vanish() {
        // int cos(2 pi x) cos(2 pi 2^n x) dx = 0 for n >= 1.
        let space = SpaceSpec::circle();
        let gaps: Vec<usize> = (1..=10).collect();
        let est = estimate_correlation_decay(
            &SystemSpec::doubling_map(),
            &MeasureSpec::Lebesgue,
            &space,
            &[cos1(), cos1()],
            &gaps,
            100_000,
            1,
        )
        .unwrap();
        assert!(
            matches!(est.fit, DecayFit::IndistinguishableFromFast { .. }),
            "{:?}",
            est.fit
        );
        for p in &est.points {
            assert!(p.abs_corr <= 4.0 * p.std_error + 1e-12, "{p:?}");
        }
    }

    #[test]
    fn rotation_correlations_do_not_decay() {
        // For x -> x + a the correlation is cos(2 pi n a) / 2 exactly.
        let space = SpaceSpec::circle();
        let a = (5f64.sqrt() - 1.0) / 2.0;
        let gaps: Vec<usize> = (1..=20).collect();
        let est = estimate_correlation_decay(
            &SystemSpec::rotation(a).unwrap(),
            &MeasureSpec::Lebesgue,
            &space,
            &[cos1(), cos1()],
            &gaps,
            100_000,
            2,
        )
        .unwrap();
        assert!(est.fit.tau_hat().is_none(), "{:?}", est.fit);
        for p in &est.points {
            let exact = 0.5 * (2.0 * std::f64::consts::PI * p.gap as f64 * a).cos();
            assert!((p.corr - exact).abs() < 4.0 * p.std_error + 1e-3, "{p:?}");
        }
    }

    #[test]
    fn constant_observable_has_zero_correlation() {
        let space = SpaceSpec::torus(2).unwrap();
        let est = estimate_correlation_decay(
            &SystemSpec::cat_map(),
            &MeasureSpec::Lebesgue,
            &space,
            &[
                Observable::Constant { value: 3.0 },
                Observable::DistanceTo {
                    point: vec![0.1, 0.2],
                },
            ],
            &[1, 2, 3],
            5000,
            4,
        )
        .unwrap();
        for p in &est.points {
            assert!(p.abs_corr < 1e-12, "{p:?}");
        }
        assert_eq!(est.holder_norms, vec![3.0, 1.5]);
    }

    #[test]
    fn triple_correlation_runs_to_twice_the_gap() {
        let space = SpaceSpec::circle();
        let est = estimate_correlation_decay(
            &SystemSpec::doubling_map(),
            &MeasureSpec::Lebesgue,
            &space,
            &[cos1(), cos1(), cos1()],
            &[1, 2, 4],
            20_000,
            5,
        )
        .unwrap();
        // 1 +- 2^n +- 4^n never vanishes, so every triple correlation is 0.
        for p in &est.points {
            assert!(p.abs_corr < 5.0 * p.std_error + 1e-3, "{p:?}");
        }
    }

    #[test]
    fn argument_checks() {
        let space = SpaceSpec::circle();
        let sys = SystemSpec::doubling_map();
        let m = MeasureSpec::Lebesgue;
        assert!(estimate_correlation_decay(&sys, &m, &space, &[cos1()], &[1], 10, 0).is_err());
        assert!(
            estimate_correlation_decay(&sys, &m, &space, &[cos1(), cos1()], &[2, 1], 10, 0)
                .is_err()
        );
        let bad = Observable::Cosine { freq: vec![1, 1] };
        assert!(matches!(
            estimate_correlation_decay(&sys, &m, &space, &[cos1(), bad], &[1], 10, 0),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
