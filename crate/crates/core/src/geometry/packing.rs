use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::phase::{f64_to_fraction, Point, SpaceSpec};
use crate::regression::{envelope_constant, fit_line};

/// Separation slack for fixed-point rounding: `2^64` is not divisible by
/// most lattice spacings, so a lattice step of `2 eps` can land a few units
/// of `2^-64` short of `2 eps` after wrapping.
pub const SEPARATION_SLACK: f64 = 1.0 / (1u64 << 50) as f64;

/// Lattices with more points than this are not swept.
const MAX_LATTICE_POINTS: usize = 1 << 20;
const MAX_BUCKETS: usize = 1 << 20;

/// Uniform bucket grid over the torus for radius queries up to `reach`.
#[derive(Clone, Debug)]
pub(crate) struct CenterIndex {
    dimension: usize,
    per_axis: usize,
    buckets: Vec<Vec<usize>>,
}

impl CenterIndex {
    pub fn new(dimension: usize, reach: f64) -> Self {
        let mut per_axis = ((1.0 / reach).floor() as usize).max(1);
        while per_axis > 1
            && per_axis
                .checked_pow(dimension as u32)
                .is_none_or(|b| b > MAX_BUCKETS)
        {
            per_axis /= 2;
        }
        let total = per_axis.pow(dimension as u32);
        CenterIndex {
            dimension,
            per_axis,
            buckets: vec![Vec::new(); total],
        }
    }

    fn axis_bucket(&self, c: u64) -> usize {
        ((c as u128 * self.per_axis as u128) >> 64) as usize
    }

    pub fn insert(&mut self, x: &Point, id: usize) {
        let b = x
            .fractions()
            .iter()
            .fold(0, |acc, &c| acc * self.per_axis + self.axis_bucket(c));
        self.buckets[b].push(id);
    }

    /// Ids in the buckets adjacent to `x`, which include every center within
    /// `reach` of `x`. Unsorted, without duplicates.
    pub fn neighbours(&self, x: &Point, out: &mut Vec<usize>) {
        out.clear();
        let g = self.per_axis;
        let home: Vec<usize> = x.fractions().iter().map(|&c| self.axis_bucket(c)).collect();
        let offsets: Vec<usize> = if g >= 3 {
            vec![g - 1, 0, 1]
        } else {
            (0..g).collect()
        };
        let mut counter = vec![0usize; self.dimension];
        loop {
            let b = (0..self.dimension).fold(0, |acc, i| {
                let j = if g >= 3 {
                    (home[i] + offsets[counter[i]]) % g
                } else {
                    offsets[counter[i]]
                };
                acc * g + j
            });
            out.extend_from_slice(&self.buckets[b]);
            let mut axis = 0;
            loop {
                if axis == self.dimension {
                    return;
                }
                counter[axis] += 1;
                if counter[axis] < offsets.len() {
                    break;
                }
                counter[axis] = 0;
                axis += 1;
            }
        }
    }
}

/// Pairwise `2 eps`-separated centers, i.e. disjoint open `eps`-balls.
#[derive(Clone, Debug)]
pub struct Packing {
    space: SpaceSpec,
    epsilon: f64,
    centers: Vec<Point>,
    oversized: bool,
    probes: usize,
    index: CenterIndex,
}

impl Packing {
    pub fn space(&self) -> &SpaceSpec {
        &self.space
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn centers(&self) -> &[Point] {
        &self.centers
    }

    /// The packing number `L`.
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Set when `eps >= diameter`: a single center is returned.
    pub fn oversized(&self) -> bool {
        self.oversized
    }

    /// Probe points examined after the lattice sweep.
    pub fn probes(&self) -> usize {
        self.probes
    }

    /// First center within `radius` of `x`, in insertion order.
    pub(crate) fn first_within(
        &self,
        x: &Point,
        radius: f64,
        scratch: &mut Vec<usize>,
    ) -> Option<usize> {
        self.index.neighbours(x, scratch);
        scratch
            .iter()
            .copied()
            .filter(|&k| {
                self.space
                    .distance_fractions(x.fractions(), self.centers[k].fractions())
                    < radius
            })
            .min()
    }
}

/// Additive recurrence with the generalized golden ratio: the `N`-dimensional
/// `R_N` low-discrepancy sequence, on the fixed-point grid.
fn golden_steps(dimension: usize) -> Vec<u64> {
    // phi_N is the positive root of x^(N+1) = x + 1.
    let mut phi = 2.0f64;
    for _ in 0..64 {
        phi = (1.0 + phi).powf(1.0 / (dimension as f64 + 1.0));
    }
    (1..=dimension)
        .map(|i| f64_to_fraction(phi.powi(-(i as i32))))
        .collect()
}

/// Greedy maximal packing.
///
/// Candidates come first from the aligned lattice of spacing `2 eps` (shifted
/// by a random offset) and then from an `R_N` low-discrepancy stream with a
/// random start. A candidate becomes a center when it is at distance at least
/// `2 eps - SEPARATION_SLACK` from all existing centers. The stream stops
/// after `probe_budget` consecutive rejections.
pub fn maximal_packing<R: Rng + ?Sized>(
    space: &SpaceSpec,
    epsilon: f64,
    probe_budget: usize,
    rng: &mut R,
) -> Result<Packing> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be > 0, got {epsilon}"
        )));
    }
    if probe_budget == 0 {
        return Err(Error::InvalidArgument("probe budget must be >= 1".into()));
    }
    let n = space.dimension();
    let offset: Vec<u64> = (0..n).map(|_| rng.next_u64()).collect();
    let start: Vec<u64> = (0..n).map(|_| rng.next_u64()).collect();
    let mut packing = Packing {
        space: *space,
        epsilon,
        centers: Vec::new(),
        oversized: false,
        probes: 0,
        index: CenterIndex::new(n, 2.0 * epsilon),
    };
    if epsilon >= space.diameter() {
        log::warn!(
            "packing radius {epsilon} >= diameter {}: single center",
            space.diameter()
        );
        packing.oversized = true;
        let x = Point::from_fractions(offset);
        packing.index.insert(&x, 0);
        packing.centers.push(x);
        return Ok(packing);
    }

    let separation = 2.0 * epsilon - SEPARATION_SLACK;
    let mut scratch = Vec::new();
    let mut try_insert = |p: &mut Packing, x: Point| -> bool {
        if p.first_within(&x, separation, &mut scratch).is_some() {
            return false;
        }
        let id = p.centers.len();
        p.index.insert(&x, id);
        p.centers.push(x);
        true
    };

    let per_axis = (1.0 / (2.0 * epsilon) + 1e-9).floor() as usize;
    if per_axis >= 1
        && per_axis
            .checked_pow(n as u32)
            .is_some_and(|t| t <= MAX_LATTICE_POINTS)
    {
        let step = f64_to_fraction(2.0 * epsilon);
        let total = per_axis.pow(n as u32);
        for flat in 0..total {
            let mut rest = flat;
            let mut coords = vec![0u64; n];
            for axis in (0..n).rev() {
                let j = (rest % per_axis) as u64;
                rest /= per_axis;
                coords[axis] = offset[axis].wrapping_add(step.wrapping_mul(j));
            }
            try_insert(&mut packing, Point::from_fractions(coords));
        }
    }

    let steps = golden_steps(n);
    let mut cursor = start;
    let mut rejections = 0usize;
    while rejections < probe_budget {
        for (c, s) in cursor.iter_mut().zip(&steps) {
            *c = c.wrapping_add(*s);
        }
        packing.probes += 1;
        if try_insert(&mut packing, Point::from_fractions(cursor.clone())) {
            rejections = 0;
        } else {
            rejections += 1;
        }
    }
    Ok(packing)
}

/// Fitted packing exponent: `L(eps) <= c_hat eps^-k_hat` on the probed scales.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PackingExponent {
    pub k_hat: f64,
    pub c_hat: f64,
    /// Largest probed `eps`.
    pub eps0: f64,
    /// `(eps, L)` per probed scale.
    pub counts: Vec<(f64, usize)>,
}

/// Log-log slope of `L` against `1 / eps`.
pub fn packing_exponent<R: Rng + ?Sized>(
    space: &SpaceSpec,
    eps_grid: &[f64],
    probe_budget: usize,
    rng: &mut R,
) -> Result<PackingExponent> {
    if eps_grid.len() < 2 {
        return Err(Error::NeedTwoScales(eps_grid.len()));
    }
    if eps_grid.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::InvalidArgument(
            "eps grid must be sorted descending".into(),
        ));
    }
    let mut counts = Vec::with_capacity(eps_grid.len());
    for &eps in eps_grid {
        let p = maximal_packing(space, eps, probe_budget, rng)?;
        counts.push((eps, p.len()));
    }
    let points: Vec<(f64, f64)> = counts
        .iter()
        .map(|&(e, l)| ((1.0 / e).ln(), (l as f64).ln()))
        .collect();
    let fit = fit_line(&points).ok_or(Error::NeedTwoScales(1))?;
    Ok(PackingExponent {
        k_hat: fit.slope,
        c_hat: envelope_constant(&points, fit.slope),
        eps0: eps_grid[0],
        counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::Metric;
    use crate::rng::stream;

    /// Volume bound: disjoint open eps-balls each carry volume
    /// `ball_volume(eps)`, so at most `1 / ball_volume(eps)` fit.
    fn volume_bound(space: &SpaceSpec, eps: f64) -> usize {
        (1.0 / space.ball_volume(eps).unwrap() + 1e-9).floor() as usize
    }

    fn min_separation(p: &Packing) -> f64 {
        let c = p.centers();
        let mut m = f64::INFINITY;
        for i in 0..c.len() {
            for j in 0..i {
                m = m.min(p.space().distance(&c[i], &c[j]).unwrap());
            }
        }
        m
    }

    #[test]
    fn packing_counts() {
        let circle = SpaceSpec::circle();
        let p = maximal_packing(&circle, 0.1, 1000, &mut stream(1, 0)).unwrap();
        assert_eq!(p.len(), 5);
        assert_eq!(p.len(), volume_bound(&circle, 0.1));
        assert!(min_separation(&p) >= 0.2 - SEPARATION_SLACK);

        let t = SpaceSpec::torus(2).unwrap();
        let p = maximal_packing(&t, 0.1, 1000, &mut stream(1, 0)).unwrap();
        assert_eq!(p.len(), 25);
        assert_eq!(p.len(), volume_bound(&t, 0.1));

        let p = maximal_packing(&circle, 0.4, 1000, &mut stream(1, 0)).unwrap();
        assert_eq!(p.len(), 1);
        assert!(!p.oversized());
        let p = maximal_packing(&circle, 0.6, 1000, &mut stream(1, 0)).unwrap();
        assert_eq!(p.len(), 1);
        assert!(p.oversized());
    }

    #[test]
    fn brute_force_circle_maximum() {
        // Exhaustive search on a 1/100 grid: the largest set of grid points
        // with pairwise circle distance >= 0.2 has 5 elements.
        let d = |a: usize, b: usize| {
            let g = (a as i64 - b as i64).unsigned_abs() as usize % 100;
            g.min(100 - g)
        };
        fn extend(
            chosen: &mut Vec<usize>,
            next: usize,
            best: &mut usize,
            d: &dyn Fn(usize, usize) -> usize,
        ) {
            *best = (*best).max(chosen.len());
            for c in next..100 {
                if chosen.iter().all(|&x| d(x, c) >= 20) {
                    chosen.push(c);
                    extend(chosen, c + 1, best, d);
                    chosen.pop();
                }
            }
        }
        let mut best = 0;
        extend(&mut vec![0], 1, &mut best, &d);
        assert_eq!(best, 5);
        let p = maximal_packing(&SpaceSpec::circle(), 0.1, 1000, &mut stream(2, 0)).unwrap();
        assert_eq!(p.len(), best);
    }

    #[test]
    fn greedy_is_maximal_on_probes() {
        for space in [
            SpaceSpec::circle(),
            SpaceSpec::torus(2).unwrap(),
            SpaceSpec::new(2, Metric::EuclideanQuotient).unwrap(),
        ] {
            let eps = 0.07;
            let p = maximal_packing(&space, eps, 2000, &mut stream(3, 0)).unwrap();
            assert!(min_separation(&p) >= 2.0 * eps - SEPARATION_SLACK);
            let mut rng = stream(3, 1);
            for _ in 0..10_000 {
                let x = space.sample_uniform(&mut rng);
                let near = p
                    .centers()
                    .iter()
                    .any(|c| space.distance(&x, c).unwrap() < 2.0 * eps);
                assert!(near);
            }
        }
    }

    #[test]
    fn packing_is_reproducible() {
        let t = SpaceSpec::torus(2).unwrap();
        let a = maximal_packing(&t, 0.035, 500, &mut stream(4, 0)).unwrap();
        let b = maximal_packing(&t, 0.035, 500, &mut stream(4, 0)).unwrap();
        assert_eq!(a.centers(), b.centers());
    }

    #[test]
    fn exponents() {
        let grid = [0.1, 0.05, 0.025, 0.0125, 0.01, 0.005];
        let fit = packing_exponent(&SpaceSpec::circle(), &grid, 500, &mut stream(5, 0)).unwrap();
        assert!((fit.k_hat - 1.0).abs() <= 0.05, "{fit:?}");
        let fit =
            packing_exponent(&SpaceSpec::torus(2).unwrap(), &grid, 500, &mut stream(5, 0)).unwrap();
        assert!((fit.k_hat - 2.0).abs() <= 0.1, "{fit:?}");
        assert!(matches!(
            packing_exponent(&SpaceSpec::circle(), &[0.1], 10, &mut stream(5, 0)),
            Err(Error::NeedTwoScales(1))
        ));
    }

    #[test]
    fn bucket_neighbours_cover_reach() {
        let t = SpaceSpec::torus(2).unwrap();
        let p = maximal_packing(&t, 0.03, 500, &mut stream(6, 0)).unwrap();
        let mut rng = stream(6, 1);
        let mut scratch = Vec::new();
        for _ in 0..2000 {
            let x = t.sample_uniform(&mut rng);
            let brute = p
                .centers()
                .iter()
                .position(|c| t.distance(&x, c).unwrap() < 0.06);
            assert_eq!(p.first_within(&x, 0.06, &mut scratch), brute);
        }
    }
}
