use rand::Rng;
use serde::Serialize;

use super::boxes::{covered, subtract_all, Cuboid};
use super::packing::{CenterIndex, Packing, PackingExponent};
use crate::error::{Error, Result};
use crate::measures::{AnnulusFit, MeasureSpec};
use crate::phase::{signed_offset, Metric, Point};

/// Halvings used to locate `dist(x, X \ A_k(delta))` inside `[0, delta]`.
const MOLLIFIER_BISECTION_STEPS: usize = 52;

/// First-match partition: `A_k = B(x_k, 2 eps) \ (B(x_0, 2 eps) u ... u B(x_{k-1}, 2 eps))`.
///
/// Cells are indexed from 0 in the packing's insertion order.
#[derive(Clone, Debug)]
pub struct Partition {
    packing: Packing,
}

impl Partition {
    pub fn new(packing: Packing) -> Self {
        Partition { packing }
    }

    pub fn packing(&self) -> &Packing {
        &self.packing
    }

    /// Radius `2 eps` of the balls generating the cells.
    pub fn radius(&self) -> f64 {
        2.0 * self.packing.epsilon()
    }

    pub fn len(&self) -> usize {
        self.packing.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packing.is_empty()
    }

    /// Smallest `k` with `d(x, x_k) < 2 eps`. `None` only for a non-maximal packing.
    pub fn cell_of(&self, x: &Point) -> Option<usize> {
        let mut scratch = Vec::new();
        self.cell_of_with(x, &mut scratch)
    }

    pub(crate) fn cell_of_with(&self, x: &Point, scratch: &mut Vec<usize>) -> Option<usize> {
        self.packing.first_within(x, self.radius(), scratch)
    }
}

/// A cell in the local frame of its center: disjoint closed-or-open boxes,
/// and their open `delta`-neighbourhoods.
#[derive(Clone, Debug)]
struct CellGeometry {
    pieces: Vec<Cuboid>,
    grown: Vec<Cuboid>,
}

/// Lipschitz approximations
/// `h_k(x) = min{1, dist(x, X \ A_k(delta)) / delta}` of the cell indicators.
///
/// Cells of a chebyshev partition are finite unions of boxes, so distances to
/// cells and to the complements of their neighbourhoods are computed from box
/// geometry. This needs every cell with its neighbourhood to fit in half a
/// period: `eps < 1/8` and `delta < 2 eps`.
#[derive(Clone, Debug)]
pub struct MollifierSet {
    partition: Partition,
    delta: f64,
    cells: Vec<CellGeometry>,
    reach: CenterIndex,
}

impl MollifierSet {
    pub fn new(partition: Partition, delta: f64) -> Result<Self> {
        let space = *partition.packing().space();
        let eps = partition.packing().epsilon();
        if !(delta > 0.0 && delta < 2.0 * eps) {
            return Err(Error::InvalidArgument(format!(
                "delta must lie in (0, 2 eps) = (0, {}), got {delta}",
                2.0 * eps
            )));
        }
        if space.metric() != Metric::ChebyshevQuotient && space.dimension() > 1 {
            return Err(Error::UnsupportedPairing(
                "mollifiers are evaluated exactly only for chebyshev cells".into(),
            ));
        }
        if eps >= 0.125 {
            return Err(Error::UnsupportedPairing(format!(
                "mollifiers need eps < 1/8, got {eps}"
            )));
        }
        let centers = partition.packing().centers();
        let n = space.dimension();
        let radius = partition.radius();
        let mut near = CenterIndex::new(n, 2.0 * radius);
        for (k, c) in centers.iter().enumerate() {
            near.insert(c, k);
        }
        let mut reach = CenterIndex::new(n, radius + delta);
        for (k, c) in centers.iter().enumerate() {
            reach.insert(c, k);
        }
        let origin = vec![0.0; n];
        let mut scratch = Vec::new();
        let cells = centers
            .iter()
            .enumerate()
            .map(|(k, ck)| {
                near.neighbours(ck, &mut scratch);
                scratch.sort_unstable();
                let cuts: Vec<Cuboid> = scratch
                    .iter()
                    .filter(|&&i| i < k)
                    .filter(|&&i| {
                        space.distance_fractions(ck.fractions(), centers[i].fractions())
                            < 2.0 * radius
                    })
                    .map(|&i| {
                        let local: Vec<f64> = centers[i]
                            .fractions()
                            .iter()
                            .zip(ck.fractions())
                            .map(|(&a, &b)| signed_offset(a, b))
                            .collect();
                        Cuboid::open_cube(&local, radius)
                    })
                    .collect();
                let pieces = subtract_all(vec![Cuboid::open_cube(&origin, radius)], &cuts);
                let grown = pieces.iter().map(|p| p.expanded(delta)).collect();
                CellGeometry { pieces, grown }
            })
            .collect();
        Ok(MollifierSet {
            partition,
            delta,
            cells,
            reach,
        })
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    fn local(&self, k: usize, x: &Point) -> Vec<f64> {
        x.fractions()
            .iter()
            .zip(self.partition.packing().centers()[k].fractions())
            .map(|(&a, &b)| signed_offset(a, b))
            .collect()
    }

    fn check_cell(&self, k: usize) -> Result<()> {
        if k >= self.cells.len() {
            return Err(Error::InvalidArgument(format!(
                "cell {k} does not exist ({} cells)",
                self.cells.len()
            )));
        }
        Ok(())
    }

    /// `dist(x, A_k)`; infinite for an empty cell.
    pub fn distance_to_cell(&self, k: usize, x: &Point) -> Result<f64> {
        self.check_cell(k)?;
        let u = self.local(k, x);
        Ok(self.cells[k]
            .pieces
            .iter()
            .map(|p| p.distance_from(&u))
            .fold(f64::INFINITY, f64::min))
    }

    /// Whether `x` lies in the open `delta`-neighbourhood `A_k(delta)`.
    pub fn in_neighbourhood(&self, k: usize, x: &Point) -> Result<bool> {
        Ok(self.distance_to_cell(k, x)? < self.delta)
    }

    /// `h_k(x)`, in `[0, 1]`: 1 on `A_k`, 0 off `A_k(delta)`.
    pub fn eval(&self, k: usize, x: &Point) -> Result<f64> {
        self.check_cell(k)?;
        if self.partition.cell_of(x) == Some(k) {
            return Ok(1.0);
        }
        if !self.in_neighbourhood(k, x)? {
            return Ok(0.0);
        }
        let u = self.local(k, x);
        let grown = &self.cells[k].grown;
        if covered(&Cuboid::open_cube(&u, self.delta), grown) {
            return Ok(1.0);
        }
        let (mut lo, mut hi) = (0.0, self.delta);
        for _ in 0..MOLLIFIER_BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if covered(&Cuboid::open_cube(&u, mid), grown) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok((lo / self.delta).min(1.0))
    }

    /// Cells whose neighbourhood contains `x`.
    pub(crate) fn cells_near(&self, x: &Point, scratch: &mut Vec<usize>) -> Vec<usize> {
        self.reach.neighbours(x, scratch);
        let mut out: Vec<usize> = scratch
            .iter()
            .copied()
            .filter(|&k| self.distance_to_cell(k, x).is_ok_and(|d| d < self.delta))
            .collect();
        out.sort_unstable();
        out
    }

    /// Exact Lebesgue measure of `A_k(delta) \ A_k`, from box geometry.
    pub fn lebesgue_excess(&self, k: usize) -> Result<f64> {
        self.check_cell(k)?;
        let cell = &self.cells[k];
        let mut union = 0.0;
        for (j, g) in cell.grown.iter().enumerate() {
            let rest = subtract_all(vec![g.clone()], &cell.grown[..j]);
            union += rest.iter().map(Cuboid::volume).sum::<f64>();
        }
        let inner: f64 = cell.pieces.iter().map(Cuboid::volume).sum();
        Ok(union - inner)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellExcess {
    pub cell: usize,
    pub estimate: f64,
    pub std_error: f64,
}

/// Monte Carlo estimates of `mu(A_k(delta) \ A_k)` per cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExcessReport {
    pub delta: f64,
    pub samples: usize,
    pub cells: Vec<CellExcess>,
    pub max_cell: usize,
    pub max_estimate: f64,
    pub max_std_error: f64,
    /// Samples outside every cell (zero for a maximal packing).
    pub uncovered: usize,
}

impl ExcessReport {
    /// Whether the largest estimate is at most `bound` plus `z` standard errors.
    pub fn within(&self, bound: f64, z: f64) -> bool {
        self.max_estimate <= bound + z * self.max_std_error
    }
}

pub const MIN_EXCESS_SAMPLES: usize = 1000;

/// Frequency over `n_samples` draws from `measure` of landing in
/// `A_k(delta) \ A_k`, for every cell `k`.
pub fn neighbourhood_excess<R: Rng + ?Sized>(
    measure: &MeasureSpec,
    partition: &Partition,
    delta: f64,
    n_samples: usize,
    rng: &mut R,
) -> Result<ExcessReport> {
    if n_samples < MIN_EXCESS_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_EXCESS_SAMPLES} samples, got {n_samples}"
        )));
    }
    let set = MollifierSet::new(partition.clone(), delta)?;
    let space = partition.packing().space();
    let mut counts = vec![0usize; partition.len()];
    let mut uncovered = 0;
    let mut scratch = Vec::new();
    for _ in 0..n_samples {
        let x = measure.sample(space, rng);
        let home = partition.cell_of_with(&x, &mut scratch);
        if home.is_none() {
            uncovered += 1;
        }
        for k in set.cells_near(&x, &mut scratch) {
            if Some(k) != home {
                counts[k] += 1;
            }
        }
    }
    let n = n_samples as f64;
    let cells: Vec<CellExcess> = counts
        .iter()
        .enumerate()
        .map(|(cell, &c)| {
            let p = c as f64 / n;
            CellExcess {
                cell,
                estimate: p,
                std_error: (p * (1.0 - p) / n).sqrt(),
            }
        })
        .collect();
    let top = cells
        .iter()
        .max_by(|a, b| a.estimate.total_cmp(&b.estimate))
        .expect("nonempty partition");
    Ok(ExcessReport {
        delta,
        samples: n_samples,
        max_cell: top.cell,
        max_estimate: top.estimate,
        max_std_error: top.std_error,
        cells,
        uncovered,
    })
}

/// `c_hat eps^-K * C (2 delta)^alpha0`: the packing bound on the number of
/// boundary shells times the annulus bound on each shell of width `2 delta`.
pub fn excess_bound(
    packing: &PackingExponent,
    annulus: &AnnulusFit,
    epsilon: f64,
    delta: f64,
) -> f64 {
    packing.c_hat
        * epsilon.powf(-packing.k_hat)
        * annulus.constant_hat
        * (2.0 * delta).powf(annulus.alpha0_hat)
}
