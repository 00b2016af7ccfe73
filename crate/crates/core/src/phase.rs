//! Compact metric phase spaces: the flat N-torus and the circle.
//!
//! Points carry 64-bit fixed-point coordinates, so a coordinate `c` stands for
//! the fraction `c / 2^64`. Integer arithmetic modulo `2^64` is then exactly
//! arithmetic modulo 1, which is what the toral automorphisms in
//! [`crate::systems`] rely on.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `2^64` as a float.
pub const TWO_POW_64: f64 = 18_446_744_073_709_551_616.0;
const TWO_POW_NEG_53: f64 = 1.0 / 9_007_199_254_740_992.0;

/// Float view of a 64-bit fraction, truncated to 53 bits (error < 2^-53).
#[inline]
pub fn fraction_to_f64(c: u64) -> f64 {
    (c >> 11) as f64 * TWO_POW_NEG_53
}

/// Nearest 64-bit fraction to `v mod 1`.
#[inline]
pub fn f64_to_fraction(v: f64) -> u64 {
    let f = v.rem_euclid(1.0);
    // f < 1 so f * 2^64 < 2^64 unless f rounds up to 1.0 below.
    let scaled = f * TWO_POW_64;
    if scaled >= TWO_POW_64 {
        0
    } else {
        scaled as u64
    }
}

/// Wrapped distance between two fractions on the circle, in units of `2^-64`.
#[inline]
pub fn axis_gap(a: u64, b: u64) -> u64 {
    let d = a.wrapping_sub(b);
    d.min(d.wrapping_neg())
}

/// Signed wrapped displacement `a - b` in `[-1/2, 1/2)`, as a float.
#[inline]
pub fn signed_offset(a: u64, b: u64) -> f64 {
    (a.wrapping_sub(b) as i64) as f64 / TWO_POW_64
}

/// Quotient metric on the torus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    /// Max of the per-axis wrapped distances. Balls are axis-aligned cubes.
    ChebyshevQuotient,
    /// Euclidean norm of the per-axis wrapped distances.
    EuclideanQuotient,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::ChebyshevQuotient => "chebyshev-quotient",
            Metric::EuclideanQuotient => "euclidean-quotient",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chebyshev-quotient" | "chebyshev" => Ok(Metric::ChebyshevQuotient),
            "euclidean-quotient" | "euclidean" => Ok(Metric::EuclideanQuotient),
            other => Err(Error::InvalidArgument(format!("unknown metric {other:?}"))),
        }
    }
}

/// A point of the unit torus `[0,1)^N` stored as 64-bit fractions.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Point {
    coords: Vec<u64>,
}

impl Point {
    pub fn from_fractions(coords: Vec<u64>) -> Self {
        Point { coords }
    }

    /// Rounds each coordinate (taken mod 1) to the nearest representable fraction.
    pub fn from_f64(coords: &[f64]) -> Self {
        Point {
            coords: coords.iter().map(|&v| f64_to_fraction(v)).collect(),
        }
    }

    pub fn origin(dimension: usize) -> Self {
        Point {
            coords: vec![0; dimension],
        }
    }

    pub fn dimension(&self) -> usize {
        self.coords.len()
    }

    pub fn fractions(&self) -> &[u64] {
        &self.coords
    }

    pub(crate) fn fractions_mut(&mut self) -> &mut [u64] {
        &mut self.coords
    }

    pub fn coord_f64(&self, axis: usize) -> f64 {
        fraction_to_f64(self.coords[axis])
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.coords.iter().map(|&c| fraction_to_f64(c)).collect()
    }
}

/// Volume of the Euclidean unit ball in `n` dimensions.
pub fn unit_ball_volume(n: usize) -> f64 {
    use std::f64::consts::PI;
    match n {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(n - 2) * 2.0 * PI / n as f64,
    }
}

/// A compact metric phase space: the unit `N`-torus with a quotient metric.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceSpec {
    dimension: usize,
    metric: Metric,
}

impl SpaceSpec {
    pub fn new(dimension: usize, metric: Metric) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidArgument("dimension must be >= 1".into()));
        }
        Ok(SpaceSpec { dimension, metric })
    }

    /// The circle `R/Z`.
    pub fn circle() -> Self {
        SpaceSpec {
            dimension: 1,
            metric: Metric::ChebyshevQuotient,
        }
    }

    /// The `N`-torus with the default chebyshev metric.
    pub fn torus(dimension: usize) -> Result<Self> {
        Self::new(dimension, Metric::ChebyshevQuotient)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    /// 1/2 for chebyshev, sqrt(N)/2 for euclidean.
    pub fn diameter(&self) -> f64 {
        match self.metric {
            Metric::ChebyshevQuotient => 0.5,
            Metric::EuclideanQuotient => (self.dimension as f64).sqrt() / 2.0,
        }
    }

    pub fn check_point(&self, x: &Point) -> Result<()> {
        if x.dimension() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                found: x.dimension(),
            });
        }
        Ok(())
    }

    pub fn distance(&self, x: &Point, y: &Point) -> Result<f64> {
        self.check_point(x)?;
        self.check_point(y)?;
        Ok(self.distance_fractions(x.fractions(), y.fractions()))
    }

    /// Distance on raw coordinate slices; callers guarantee equal lengths.
    #[inline]
    pub fn distance_fractions(&self, x: &[u64], y: &[u64]) -> f64 {
        debug_assert_eq!(x.len(), y.len());
        match self.metric {
            Metric::ChebyshevQuotient => {
                let g = x
                    .iter()
                    .zip(y)
                    .map(|(&a, &b)| axis_gap(a, b))
                    .max()
                    .unwrap_or(0);
                g as f64 / TWO_POW_64
            }
            Metric::EuclideanQuotient => x
                .iter()
                .zip(y)
                .map(|(&a, &b)| {
                    let g = axis_gap(a, b) as f64 / TWO_POW_64;
                    g * g
                })
                .sum::<f64>()
                .sqrt(),
        }
    }

    /// Exact Lebesgue volume of the open ball of radius `r`.
    pub fn ball_volume(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "radius must be >= 0, got {r}"
            )));
        }
        if r >= self.diameter() {
            return Ok(1.0);
        }
        let n = self.dimension;
        match self.metric {
            Metric::ChebyshevQuotient => Ok((2.0 * r).powi(n as i32).min(1.0)),
            Metric::EuclideanQuotient if n == 1 => Ok((2.0 * r).min(1.0)),
            Metric::EuclideanQuotient => {
                if r <= 0.5 {
                    Ok(unit_ball_volume(n) * r.powi(n as i32))
                } else {
                    Err(Error::InexactRegime { r })
                }
            }
        }
    }

    /// Uniform point: each coordinate is an independent 64-bit fraction.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        Point {
            coords: (0..self.dimension).map(|_| rng.next_u64()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    fn euclid2() -> SpaceSpec {
        SpaceSpec::new(2, Metric::EuclideanQuotient).unwrap()
    }

    #[test]
    fn distance_examples() {
        let c = SpaceSpec::circle();
        let d = c
            .distance(&Point::from_f64(&[0.1]), &Point::from_f64(&[0.9]))
            .unwrap();
        assert!((d - 0.2).abs() < 1e-15);

        let t = SpaceSpec::torus(2).unwrap();
        let d = t
            .distance(&Point::from_f64(&[0.0, 0.0]), &Point::from_f64(&[0.3, 0.4]))
            .unwrap();
        assert!((d - 0.4).abs() < 1e-15);

        let d = euclid2()
            .distance(&Point::from_f64(&[0.0, 0.0]), &Point::from_f64(&[0.5, 0.5]))
            .unwrap();
        assert!((d - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn distance_rejects_dimension_mismatch() {
        let t = SpaceSpec::torus(2).unwrap();
        let err = t
            .distance(&Point::origin(2), &Point::origin(3))
            .unwrap_err();
        assert!(matches!(
            err,
            Error::DimensionMismatch {
                expected: 2,
                found: 3
            }
        ));
    }

    #[test]
    fn ball_volume_examples() {
        let t = SpaceSpec::torus(2).unwrap();
        assert!((t.ball_volume(0.1).unwrap() - 0.04).abs() < 1e-15);
        assert_eq!(SpaceSpec::circle().ball_volume(0.6).unwrap(), 1.0);
        let v = euclid2().ball_volume(0.25).unwrap();
        assert!((v - std::f64::consts::PI / 16.0).abs() < 1e-15);
    }

    #[test]
    fn euclidean_overlap_regime_is_an_error() {
        assert!(matches!(
            euclid2().ball_volume(0.6),
            Err(Error::InexactRegime { .. })
        ));
        // Beyond the diameter the ball is the whole torus again.
        assert_eq!(euclid2().ball_volume(0.71).unwrap(), 1.0);
        assert!(SpaceSpec::circle().ball_volume(-1.0).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let t = SpaceSpec::torus(2).unwrap();
        let a = t.sample_uniform(&mut stream(11, 0));
        let b = t.sample_uniform(&mut stream(11, 0));
        assert_eq!(a, b);
    }

    #[test]
    fn circle_samples_pass_kolmogorov_smirnov() {
        let n = 100_000;
        let c = SpaceSpec::circle();
        let mut rng = stream(1, 0);
        let mut xs: Vec<f64> = (0..n)
            .map(|_| c.sample_uniform(&mut rng).coord_f64(0))
            .collect();
        xs.sort_by(f64::total_cmp);
        let nf = n as f64;
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| ((i + 1) as f64 / nf - x).max(x - i as f64 / nf))
            .fold(0.0, f64::max);
        assert!(ks < 1.63 / nf.sqrt(), "KS statistic {ks}");
    }

    #[test]
    fn torus_quadrant_frequency() {
        let n = 100_000;
        let t = SpaceSpec::torus(2).unwrap();
        let mut rng = stream(2, 0);
        let hits = (0..n)
            .filter(|_| {
                let p = t.sample_uniform(&mut rng);
                p.coord_f64(0) < 0.5 && p.coord_f64(1) < 0.5
            })
            .count();
        let freq = hits as f64 / n as f64;
        let se = (0.25f64 * 0.75 / n as f64).sqrt();
        assert!((freq - 0.25).abs() <= 3.0 * se, "freq {freq}");
    }

    #[test]
    fn float_view_agrees_with_fraction() {
        for c in [0u64, 1, u64::MAX, 1 << 63, 0x5555_5555_5555_5555] {
            let exact = c as f64 / TWO_POW_64; // may round, compare loosely
            assert!((fraction_to_f64(c) - exact).abs() <= 2f64.powi(-53));
            assert!(fraction_to_f64(c) < 1.0);
        }
    }

    fn arb_space() -> impl Strategy<Value = SpaceSpec> {
        (1usize..=4, prop::bool::ANY).prop_map(|(n, cheb)| {
            let m = if cheb {
                Metric::ChebyshevQuotient
            } else {
                Metric::EuclideanQuotient
            };
            SpaceSpec::new(n, m).unwrap()
        })
    }

    proptest! {
        #[test]
        fn metric_axioms_hold(space in arb_space(), seed in any::<u64>()) {
            let mut rng = stream(seed, 0);
            let x = space.sample_uniform(&mut rng);
            let y = space.sample_uniform(&mut rng);
            let z = space.sample_uniform(&mut rng);
            let dxy = space.distance(&x, &y).unwrap();
            let dyx = space.distance(&y, &x).unwrap();
            let dxz = space.distance(&x, &z).unwrap();
            let dyz = space.distance(&y, &z).unwrap();
            prop_assert_eq!(dxy, dyx);
            prop_assert!(dxz <= dxy + dyz + 2f64.powi(-50));
            prop_assert!(dxy <= space.diameter());
            prop_assert_eq!(space.distance(&x, &x).unwrap(), 0.0);
        }

        #[test]
        fn ball_volume_monotone_and_full(space in arb_space(), a in 0.0f64..0.5, b in 0.0f64..0.5) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            if let (Ok(vlo), Ok(vhi)) = (space.ball_volume(lo), space.ball_volume(hi)) {
                prop_assert!(vlo <= vhi);
            }
            prop_assert_eq!(space.ball_volume(space.diameter()).unwrap(), 1.0);
            prop_assert_eq!(space.ball_volume(space.diameter() + hi).unwrap(), 1.0);
        }
    }
}
