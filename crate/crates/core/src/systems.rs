//! Measure-preserving maps and orbit generation.
//!
//! Three arithmetic modes keep long orbits faithful:
//!
//! * `exact_grid`: toral automorphisms act on the 64-bit fixed-point grid by
//!   integer matrix multiplication modulo `2^64`. With `|det| = 1` this is a
//!   bijection of the grid, so nothing is lost to round-off.
//! * `bit_stream`: the base-`m` shift `x -> m x mod 1` drops the leading digit
//!   of a digit window and appends a fresh digit. For a Lebesgue-typical
//!   starting point the unseen digits are iid uniform, so drawing them lazily
//!   from the orbit's random stream simulates the map exactly in distribution.
//! * `float`: plain `f64` iteration, kept for cross-checks. Expanding maps
//!   collapse under it (the doubling map reaches 0 within ~53 steps).

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::{f64_to_fraction, fraction_to_f64, Point, SpaceSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    /// `x -> A x mod 1` for an integer matrix with determinant ±1.
    ToralAutomorphism { matrix: Vec<Vec<i64>> },
    /// `x -> base * x mod 1` on the circle.
    ShiftMap { base: u32 },
    /// `x -> x + angle mod 1` on the circle. Not mixing.
    Rotation { angle: f64 },
    /// Not mixing.
    Identity,
}

impl SystemKind {
    pub fn name(&self) -> &'static str {
        match self {
            SystemKind::ToralAutomorphism { .. } => "toral_automorphism",
            SystemKind::ShiftMap { .. } => "shift_map",
            SystemKind::Rotation { .. } => "rotation",
            SystemKind::Identity => "identity",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arithmetic {
    ExactGrid,
    BitStream,
    Float,
}

impl Arithmetic {
    pub fn name(self) -> &'static str {
        match self {
            Arithmetic::ExactGrid => "exact_grid",
            Arithmetic::BitStream => "bit_stream",
            Arithmetic::Float => "float",
        }
    }

    /// The mode used when none is requested.
    pub fn default_for(kind: &SystemKind) -> Self {
        match kind {
            SystemKind::ToralAutomorphism { .. } => Arithmetic::ExactGrid,
            SystemKind::ShiftMap { .. } => Arithmetic::BitStream,
            SystemKind::Rotation { .. } | SystemKind::Identity => Arithmetic::Float,
        }
    }
}

impl fmt::Display for Arithmetic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arithmetic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact_grid" => Ok(Arithmetic::ExactGrid),
            "bit_stream" => Ok(Arithmetic::BitStream),
            "float" => Ok(Arithmetic::Float),
            other => Err(Error::InvalidArgument(format!(
                "unknown arithmetic {other:?}"
            ))),
        }
    }
}

/// Determinant of a small integer matrix by fraction-free elimination.
fn integer_determinant(matrix: &[Vec<i64>]) -> Option<i128> {
    let n = matrix.len();
    let mut a: Vec<Vec<i128>> = matrix
        .iter()
        .map(|row| row.iter().map(|&v| v as i128).collect())
        .collect();
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..n {
        if a[k][k] == 0 {
            let swap = (k + 1..n).find(|&r| a[r][k] != 0)?;
            a.swap(k, swap);
            sign = -sign;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let v = a[i][j]
                    .checked_mul(a[k][k])?
                    .checked_sub(a[i][k].checked_mul(a[k][j])?)?;
                a[i][j] = v / prev;
            }
        }
        prev = a[k][k];
    }
    Some(sign * a[n - 1][n - 1])
}

/// A measure-preserving map together with its arithmetic mode.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemSpec {
    kind: SystemKind,
    arithmetic: Arithmetic,
    dimension: usize,
    /// Row-major matrix entries reduced mod 2^64 (two's complement).
    grid_matrix: Vec<u64>,
    float_matrix: Vec<f64>,
    rotation_step: u64,
    /// Digits kept in the window of a base-m shift (m > 2).
    window_digits: usize,
}

impl SystemSpec {
    pub fn new(kind: SystemKind, arithmetic: Arithmetic, space: &SpaceSpec) -> Result<Self> {
        let dimension = space.dimension();
        let mut spec = SystemSpec {
            kind: kind.clone(),
            arithmetic,
            dimension,
            grid_matrix: Vec::new(),
            float_matrix: Vec::new(),
            rotation_step: 0,
            window_digits: 0,
        };
        let bad = |msg: String| Err(Error::InvalidSystem(msg));
        match &kind {
            SystemKind::ToralAutomorphism { matrix } => {
                if matrix.len() != dimension || matrix.iter().any(|r| r.len() != dimension) {
                    return bad(format!("matrix must be {dimension}x{dimension}"));
                }
                match integer_determinant(matrix) {
                    Some(1) | Some(-1) => {}
                    Some(d) => return bad(format!("determinant must be ±1, got {d}")),
                    None => return bad("determinant overflow".into()),
                }
                if !matches!(arithmetic, Arithmetic::ExactGrid | Arithmetic::Float) {
                    return bad(format!("toral_automorphism does not support {arithmetic}"));
                }
                spec.grid_matrix = matrix.iter().flatten().map(|&v| v as u64).collect();
                spec.float_matrix = matrix.iter().flatten().map(|&v| v as f64).collect();
            }
            SystemKind::ShiftMap { base } => {
                if dimension != 1 {
                    return bad("shift_map requires dimension 1".into());
                }
                if *base < 2 || *base > 255 {
                    return bad(format!("shift_map base must be in [2, 255], got {base}"));
                }
                if !matches!(arithmetic, Arithmetic::BitStream | Arithmetic::Float) {
                    return bad(format!("shift_map does not support {arithmetic}"));
                }
                spec.window_digits = (64.0 / (*base as f64).log2()).ceil() as usize + 1;
            }
            SystemKind::Rotation { angle } => {
                if dimension != 1 {
                    return bad("rotation requires dimension 1".into());
                }
                if !angle.is_finite() {
                    return bad("rotation angle must be finite".into());
                }
                if arithmetic != Arithmetic::Float {
                    return bad(format!("rotation does not support {arithmetic}"));
                }
                spec.rotation_step = f64_to_fraction(*angle);
            }
            SystemKind::Identity => {
                if arithmetic != Arithmetic::Float {
                    return bad(format!("identity does not support {arithmetic}"));
                }
            }
        }
        Ok(spec)
    }

    /// The cat map `[[2,1],[1,1]]` on the 2-torus, exact grid.
    pub fn cat_map() -> Self {
        Self::new(
            SystemKind::ToralAutomorphism {
                matrix: vec![vec![2, 1], vec![1, 1]],
            },
            Arithmetic::ExactGrid,
            &SpaceSpec::torus(2).expect("2-torus"),
        )
        .expect("cat map is valid")
    }

    /// `x -> 2x mod 1`, bit-stream arithmetic.
    pub fn doubling_map() -> Self {
        Self::new(
            SystemKind::ShiftMap { base: 2 },
            Arithmetic::BitStream,
            &SpaceSpec::circle(),
        )
        .expect("doubling map is valid")
    }

    pub fn rotation(angle: f64) -> Result<Self> {
        Self::new(
            SystemKind::Rotation { angle },
            Arithmetic::Float,
            &SpaceSpec::circle(),
        )
    }

    pub fn identity(space: &SpaceSpec) -> Self {
        Self::new(SystemKind::Identity, Arithmetic::Float, space).expect("identity is valid")
    }

    pub fn kind(&self) -> &SystemKind {
        &self.kind
    }

    pub fn arithmetic(&self) -> Arithmetic {
        self.arithmetic
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Rotations and the identity are negative controls.
    pub fn is_mixing(&self) -> bool {
        matches!(
            self.kind,
            SystemKind::ToralAutomorphism { .. } | SystemKind::ShiftMap { .. }
        )
    }

    fn base(&self) -> u32 {
        match self.kind {
            SystemKind::ShiftMap { base } => base,
            _ => 0,
        }
    }

    fn uses_window(&self) -> bool {
        self.arithmetic == Arithmetic::BitStream && self.base() > 2
    }

    /// Starts an orbit at `x`. Digits beyond the stored window (bit-stream
    /// mode) are drawn from `rng`.
    pub fn init_state<R: Rng>(&self, x: &Point, rng: R) -> Result<OrbitState<R>> {
        self.init_with_tail(x, DigitTail::Random, rng)
    }

    /// Starts a shift-map orbit at the point whose base-`m` expansion repeats
    /// `pattern` forever, e.g. `[0, 1]` in base 2 is exactly 1/3.
    pub fn init_periodic<R: Rng>(&self, pattern: &[u8], rng: R) -> Result<OrbitState<R>> {
        let base = self.base();
        if base == 0 || self.arithmetic != Arithmetic::BitStream {
            return Err(Error::InvalidSystem(
                "periodic expansions need a bit_stream shift map".into(),
            ));
        }
        if pattern.is_empty() || pattern.iter().any(|&d| d as u32 >= base) {
            return Err(Error::InvalidArgument(format!(
                "pattern digits must lie in [0, {base})"
            )));
        }
        let mut tail = DigitTail::Periodic {
            digits: pattern.to_vec(),
            next: 0,
        };
        let mut state = OrbitState {
            current: Point::origin(1),
            steps: 0,
            window: VecDeque::new(),
            tail: DigitTail::Random,
            bit_buffer: 0,
            bits_left: 0,
            scratch: vec![0; 1],
            rng,
        };
        if base == 2 {
            let mut c = 0u64;
            for _ in 0..64 {
                c = (c << 1) | next_periodic(&mut tail) as u64;
            }
            state.current = Point::from_fractions(vec![c]);
        } else {
            for _ in 0..self.window_digits {
                state.window.push_back(next_periodic(&mut tail));
            }
            state.current = Point::from_fractions(vec![window_value(&state.window, base)]);
        }
        state.tail = tail;
        Ok(state)
    }

    fn init_with_tail<R: Rng>(&self, x: &Point, tail: DigitTail, rng: R) -> Result<OrbitState<R>> {
        if x.dimension() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                found: x.dimension(),
            });
        }
        let mut window = VecDeque::new();
        if self.uses_window() {
            let base = self.base() as u128;
            let mut v = x.fractions()[0] as u128;
            for _ in 0..self.window_digits {
                v *= base;
                window.push_back((v >> 64) as u8);
                v &= u64::MAX as u128;
            }
        }
        Ok(OrbitState {
            current: x.clone(),
            steps: 0,
            window,
            tail,
            bit_buffer: 0,
            bits_left: 0,
            scratch: vec![0; self.dimension],
            rng,
        })
    }

    /// Applies the map once.
    pub fn step<R: Rng>(&self, state: &mut OrbitState<R>) {
        debug_assert_eq!(state.current.dimension(), self.dimension);
        match (&self.kind, self.arithmetic) {
            (SystemKind::ToralAutomorphism { .. }, Arithmetic::ExactGrid) => {
                let n = self.dimension;
                let x = state.current.fractions();
                for i in 0..n {
                    let row = &self.grid_matrix[i * n..(i + 1) * n];
                    state.scratch[i] = row
                        .iter()
                        .zip(x)
                        .fold(0u64, |acc, (&a, &c)| acc.wrapping_add(a.wrapping_mul(c)));
                }
                state
                    .current
                    .fractions_mut()
                    .copy_from_slice(&state.scratch);
            }
            (SystemKind::ToralAutomorphism { .. }, _) => {
                let n = self.dimension;
                let xf = state.current.to_f64();
                for i in 0..n {
                    let row = &self.float_matrix[i * n..(i + 1) * n];
                    let y: f64 = row.iter().zip(&xf).map(|(a, b)| a * b).sum();
                    state.scratch[i] = f64_to_fraction(y);
                }
                state
                    .current
                    .fractions_mut()
                    .copy_from_slice(&state.scratch);
            }
            (SystemKind::ShiftMap { base }, Arithmetic::BitStream) => {
                let base = *base;
                if base == 2 {
                    let bit = state.next_digit(2) as u64;
                    let c = &mut state.current.fractions_mut()[0];
                    *c = (*c << 1) | bit;
                } else {
                    state.window.pop_front();
                    let d = state.next_digit(base);
                    state.window.push_back(d);
                    state.current.fractions_mut()[0] = window_value(&state.window, base);
                }
            }
            (SystemKind::ShiftMap { base }, _) => {
                let x = fraction_to_f64(state.current.fractions()[0]);
                state.current.fractions_mut()[0] = f64_to_fraction((*base as f64 * x).fract());
            }
            (SystemKind::Rotation { .. }, _) => {
                let c = &mut state.current.fractions_mut()[0];
                *c = c.wrapping_add(self.rotation_step);
            }
            (SystemKind::Identity, _) => {}
        }
        state.steps += 1;
    }

    /// `d(T^k x, x)` for `k = 1..=n_max`.
    pub fn orbit_distances<R: Rng>(
        &self,
        space: &SpaceSpec,
        x: &Point,
        n_max: usize,
        rng: R,
    ) -> Result<Vec<f64>> {
        space.check_point(x)?;
        let mut state = self.init_state(x, rng)?;
        Ok(self.distances_from(space, &mut state, n_max))
    }

    /// Advances `state` `n_max` times, returning distances to its start.
    pub fn distances_from<R: Rng>(
        &self,
        space: &SpaceSpec,
        state: &mut OrbitState<R>,
        n_max: usize,
    ) -> Vec<f64> {
        let start = state.current.clone();
        (0..n_max)
            .map(|_| {
                self.step(state);
                space.distance_fractions(state.current.fractions(), start.fractions())
            })
            .collect()
    }
}

/// Where the digits beyond a shift map's window come from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DigitTail {
    /// Fresh iid uniform digits from the orbit's stream.
    Random,
    /// A fixed repeating pattern (rational starting points).
    Periodic { digits: Vec<u8>, next: usize },
}

fn next_periodic(tail: &mut DigitTail) -> u8 {
    match tail {
        DigitTail::Periodic { digits, next } => {
            let d = digits[*next];
            *next = (*next + 1) % digits.len();
            d
        }
        DigitTail::Random => unreachable!("random tails draw from the rng"),
    }
}

/// Fixed-point value of `0.d1 d2 d3 ...` in base `base`, by Horner from the right.
fn window_value(window: &VecDeque<u8>, base: u32) -> u64 {
    let base = base as u128;
    let mut acc: u128 = 0;
    for &d in window.iter().rev() {
        acc = ((d as u128) << 64 | acc) / base;
    }
    acc as u64
}

/// Mutable orbit state `T^n x`. One per worker, never shared.
#[derive(Clone, Debug)]
pub struct OrbitState<R> {
    current: Point,
    steps: u64,
    window: VecDeque<u8>,
    tail: DigitTail,
    bit_buffer: u64,
    bits_left: u32,
    scratch: Vec<u64>,
    rng: R,
}

impl<R: Rng> OrbitState<R> {
    pub fn current(&self) -> &Point {
        &self.current
    }

    /// Number of `step` applications so far.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Unconsumed digits of a bit-stream shift window (64 bits for base 2).
    pub fn window_len(&self) -> usize {
        if self.window.is_empty() {
            64
        } else {
            self.window.len()
        }
    }

    pub fn rng_mut(&mut self) -> &mut R {
        &mut self.rng
    }

    fn next_digit(&mut self, base: u32) -> u8 {
        match &mut self.tail {
            DigitTail::Periodic { .. } => next_periodic(&mut self.tail),
            DigitTail::Random if base == 2 => {
                if self.bits_left == 0 {
                    self.bit_buffer = self.rng.next_u64();
                    self.bits_left = 64;
                }
                let bit = (self.bit_buffer >> 63) as u8;
                self.bit_buffer <<= 1;
                self.bits_left -= 1;
                bit
            }
            DigitTail::Random => self.rng.random_range(0..base) as u8,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::Metric;
    use crate::rng::stream;

    fn circle() -> SpaceSpec {
        SpaceSpec::circle()
    }

    #[test]
    fn cat_map_step_example() {
        let cat = SystemSpec::cat_map();
        let mut s = cat
            .init_state(&Point::from_f64(&[0.5, 0.5]), stream(0, 0))
            .unwrap();
        cat.step(&mut s);
        assert_eq!(s.current(), &Point::from_f64(&[0.5, 0.0]));
        assert_eq!(s.steps(), 1);
    }

    #[test]
    fn doubling_map_on_one_third() {
        let shift = SystemSpec::doubling_map();
        let mut s = shift.init_periodic(&[0, 1], stream(0, 0)).unwrap();
        assert!((s.current().coord_f64(0) - 1.0 / 3.0).abs() < 1e-15);
        shift.step(&mut s);
        assert!((s.current().coord_f64(0) - 2.0 / 3.0).abs() < 1e-15);
        let d = shift.distances_from(&circle(), &mut s, 0);
        assert!(d.is_empty());
    }

    #[test]
    fn identity_fixes_points() {
        let space = SpaceSpec::torus(3).unwrap();
        let id = SystemSpec::identity(&space);
        let x = space.sample_uniform(&mut stream(4, 0));
        let mut s = id.init_state(&x, stream(4, 1)).unwrap();
        for _ in 0..5 {
            id.step(&mut s);
        }
        assert_eq!(s.current(), &x);
        assert_eq!(s.steps(), 5);
    }

    #[test]
    fn orbit_distance_examples() {
        let shift = SystemSpec::doubling_map();
        let mut s = shift.init_periodic(&[0, 1], stream(0, 0)).unwrap();
        let d = shift.distances_from(&circle(), &mut s, 4);
        assert!((d[0] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(d[1], 0.0);
        assert!((d[2] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(d[3], 0.0);

        let cat = SystemSpec::cat_map();
        let space = SpaceSpec::torus(2).unwrap();
        let d = cat
            .orbit_distances(&space, &Point::origin(2), 3, stream(0, 0))
            .unwrap();
        assert_eq!(d, vec![0.0, 0.0, 0.0]);

        let rot = SystemSpec::rotation(0.25).unwrap();
        let d = rot
            .orbit_distances(&circle(), &Point::from_f64(&[0.1]), 4, stream(0, 0))
            .unwrap();
        assert_eq!(d, vec![0.25, 0.5, 0.25, 0.0]);
    }

    #[test]
    fn construction_rules() {
        let t2 = SpaceSpec::torus(2).unwrap();
        let bad_det = SystemKind::ToralAutomorphism {
            matrix: vec![vec![2, 0], vec![0, 1]],
        };
        assert!(SystemSpec::new(bad_det, Arithmetic::ExactGrid, &t2).is_err());
        let cat = SystemKind::ToralAutomorphism {
            matrix: vec![vec![2, 1], vec![1, 1]],
        };
        assert!(SystemSpec::new(cat.clone(), Arithmetic::BitStream, &t2).is_err());
        assert!(SystemSpec::new(cat, Arithmetic::Float, &t2).is_ok());
        let shift = SystemKind::ShiftMap { base: 2 };
        assert!(SystemSpec::new(shift.clone(), Arithmetic::BitStream, &t2).is_err());
        assert!(SystemSpec::new(shift, Arithmetic::ExactGrid, &circle()).is_err());
        assert!(
            SystemSpec::new(SystemKind::Rotation { angle: 0.1 }, Arithmetic::Float, &t2).is_err()
        );
        // det = -1 is allowed
        let flip = SystemKind::ToralAutomorphism {
            matrix: vec![vec![1, 1], vec![1, 0]],
        };
        assert!(SystemSpec::new(flip, Arithmetic::ExactGrid, &t2).is_ok());
    }

    #[test]
    fn determinant_of_3x3() {
        let m = vec![vec![0, 0, 1], vec![1, 0, -1], vec![0, 1, 0]];
        assert_eq!(integer_determinant(&m).unwrap().abs(), 1);
        let m = vec![vec![2, 1, 1], vec![1, 3, 2], vec![1, 0, 0]];
        assert_eq!(integer_determinant(&m), Some(-1));
    }

    #[test]
    fn exact_grid_is_a_bijection_on_a_reduced_grid() {
        // Points k * 2^54 form the grid (Z / 2^10)^2, which the map preserves.
        let cat = SystemSpec::cat_map();
        let side = 1usize << 10;
        let mut seen = vec![false; side * side];
        for i in 0..side {
            for j in 0..side {
                let x = Point::from_fractions(vec![(i as u64) << 54, (j as u64) << 54]);
                let mut s = cat.init_state(&x, stream(0, 0)).unwrap();
                cat.step(&mut s);
                let c = s.current().fractions();
                assert_eq!(c[0] & ((1 << 54) - 1), 0);
                assert_eq!(c[1] & ((1 << 54) - 1), 0);
                let idx = (c[0] >> 54) as usize * side + (c[1] >> 54) as usize;
                assert!(!seen[idx], "grid point hit twice");
                seen[idx] = true;
            }
        }
        assert!(seen.iter().all(|&b| b));
    }

    #[test]
    fn cat_map_preserves_lebesgue_statistically() {
        let cat = SystemSpec::cat_map();
        let space = SpaceSpec::torus(2).unwrap();
        let n = 100_000;
        let mut rng = stream(5, 0);
        let hits = (0..n)
            .filter(|_| {
                let x = space.sample_uniform(&mut rng);
                let mut s = cat.init_state(&x, stream(0, 0)).unwrap();
                cat.step(&mut s);
                let y = s.current().to_f64();
                (0.1..0.3).contains(&y[0]) && (0.6..0.75).contains(&y[1])
            })
            .count();
        let p = 0.2 * 0.15;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((hits as f64 / n as f64 - p).abs() <= 3.0 * se);
    }

    #[test]
    fn bit_stream_iterates_stay_uniform() {
        // Beyond 64 steps every bit of T^k x is a fresh draw.
        let shift = SystemSpec::doubling_map();
        let n = 20_000;
        for k in [1usize, 70] {
            let mut xs: Vec<f64> = (0..n)
                .map(|i| {
                    let mut rng = stream(9, i as u64);
                    let x = circle().sample_uniform(&mut rng);
                    let mut s = shift.init_state(&x, rng).unwrap();
                    for _ in 0..k {
                        shift.step(&mut s);
                    }
                    assert_eq!(s.window_len(), 64);
                    s.current().coord_f64(0)
                })
                .collect();
            xs.sort_by(f64::total_cmp);
            let nf = n as f64;
            let ks = xs
                .iter()
                .enumerate()
                .map(|(i, &x)| ((i + 1) as f64 / nf - x).max(x - i as f64 / nf))
                .fold(0.0, f64::max);
            assert!(ks < 1.63 / nf.sqrt(), "k={k} KS={ks}");
        }
    }

    #[test]
    fn float_doubling_collapses_but_bit_stream_does_not() {
        let space = circle();
        let float =
            SystemSpec::new(SystemKind::ShiftMap { base: 2 }, Arithmetic::Float, &space).unwrap();
        let x = Point::from_f64(&[0.123456789]);
        let mut s = float.init_state(&x, stream(0, 0)).unwrap();
        for _ in 0..60 {
            float.step(&mut s);
        }
        assert_eq!(s.current().fractions()[0], 0);

        let exact = SystemSpec::doubling_map();
        let mut s = exact.init_state(&x, stream(0, 0)).unwrap();
        for _ in 0..1000 {
            exact.step(&mut s);
        }
        assert_ne!(s.current().fractions()[0], 0);
    }

    #[test]
    fn base_three_shift_on_one_half() {
        // 1/2 = 0.111... in base 3 is a fixed point of x -> 3x mod 1.
        let space = circle();
        let tri = SystemSpec::new(
            SystemKind::ShiftMap { base: 3 },
            Arithmetic::BitStream,
            &space,
        )
        .unwrap();
        let mut s = tri.init_periodic(&[1], stream(0, 0)).unwrap();
        let d = tri.distances_from(&space, &mut s, 5);
        assert!(d.iter().all(|&v| v < 1e-15), "{d:?}");
        assert!((s.current().coord_f64(0) - 0.5).abs() < 1e-15);

        // Random tail: window conversion round-trips the starting point.
        let x = Point::from_f64(&[0.3]);
        let s = tri.init_state(&x, stream(0, 0)).unwrap();
        let back = window_value(&s.window, 3);
        assert!(crate::phase::axis_gap(back, x.fractions()[0]) < 64);
    }

    #[test]
    fn rotation_distances_do_not_depend_on_start() {
        let rot = SystemSpec::rotation((5f64.sqrt() - 1.0) / 2.0).unwrap();
        let a = rot
            .orbit_distances(&circle(), &Point::from_f64(&[0.1]), 200, stream(0, 0))
            .unwrap();
        let b = rot
            .orbit_distances(&circle(), &Point::from_f64(&[0.77]), 200, stream(1, 0))
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn float_toral_tracks_exact_grid_briefly() {
        let space = SpaceSpec::new(2, Metric::ChebyshevQuotient).unwrap();
        let kind = SystemKind::ToralAutomorphism {
            matrix: vec![vec![2, 1], vec![1, 1]],
        };
        let float = SystemSpec::new(kind, Arithmetic::Float, &space).unwrap();
        let exact = SystemSpec::cat_map();
        let x = space.sample_uniform(&mut stream(3, 0));
        let mut a = float.init_state(&x, stream(0, 0)).unwrap();
        let mut b = exact.init_state(&x, stream(0, 0)).unwrap();
        for _ in 0..10 {
            float.step(&mut a);
            exact.step(&mut b);
        }
        let d = space.distance(a.current(), b.current()).unwrap();
        assert!(d < 1e-9, "float drifted by {d}");
    }
}
