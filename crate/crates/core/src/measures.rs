//! Borel probability measures on the torus with exactly computable ball
//! measures, samplers, and the regularity-exponent fits.
//!
//! Two families are supported: Lebesgue measure, and piecewise-constant
//! densities on a uniform `G^N` grid of cells. With the chebyshev metric a ball
//! is an axis-aligned cube, so the measure of a ball under a grid density is a
//! finite sum of cell values times per-axis overlap lengths.

use std::path::Path;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::phase::{Metric, Point, SpaceSpec};
use crate::regression::{envelope_constant, fit_line};

/// Allowed deviation of a grid density's total integral from 1.
pub const DENSITY_NORMALIZATION_TOL: f64 = 1e-12;

/// Piecewise-constant density on `resolution^dimension` equal cells.
///
/// Cells are stored row-major: the cell with per-axis indices
/// `(i_0, ..., i_{N-1})` sits at `((i_0 * G + i_1) * G + ...) + i_{N-1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridDensity {
    dimension: usize,
    resolution: usize,
    values: Vec<f64>,
    /// Cumulative cell masses, for sampling.
    cumulative: Vec<f64>,
}

impl GridDensity {
    pub fn new(dimension: usize, resolution: usize, values: Vec<f64>) -> Result<Self> {
        if dimension == 0 || resolution == 0 {
            return Err(Error::InvalidMeasure(
                "dimension and resolution must be positive".into(),
            ));
        }
        let cells = resolution
            .checked_pow(dimension as u32)
            .ok_or_else(|| Error::InvalidMeasure("grid too large".into()))?;
        if values.len() != cells {
            return Err(Error::InvalidMeasure(format!(
                "expected {cells} cell values for resolution {resolution} in dimension {dimension}, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidMeasure(format!(
                "cell {i} has invalid density {}",
                values[i]
            )));
        }
        let cell_volume = 1.0 / cells as f64;
        let mut cumulative = Vec::with_capacity(cells);
        let mut total = 0.0;
        for v in &values {
            total += v * cell_volume;
            cumulative.push(total);
        }
        if (total - 1.0).abs() > DENSITY_NORMALIZATION_TOL {
            return Err(Error::InvalidMeasure(format!(
                "density integrates to {total}, not 1"
            )));
        }
        Ok(GridDensity {
            dimension,
            resolution,
            values,
            cumulative,
        })
    }

    /// Reads one cell value per line (row-major). Blank lines and `#` comments
    /// are skipped.
    pub fn from_csv_path(path: &Path, dimension: usize, resolution: usize) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut values = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let v: f64 = line.parse().map_err(|_| {
                Error::InvalidMeasure(format!(
                    "{}:{}: not a number: {line:?}",
                    path.display(),
                    lineno + 1
                ))
            })?;
            values.push(v);
        }
        Self::new(dimension, resolution, values)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_density(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// Density at `x` (value of the cell containing it).
    pub fn density_at(&self, x: &Point) -> f64 {
        let g = self.resolution as u128;
        let idx = x.fractions().iter().fold(0usize, |acc, &c| {
            acc * self.resolution + ((c as u128 * g) >> 64) as usize
        });
        self.values[idx]
    }

    /// Per-axis overlaps of the interval `(c - r, c + r)` (mod 1) with cells.
    fn axis_overlaps(&self, center: f64, r: f64) -> Vec<(usize, f64)> {
        let g = self.resolution;
        let width = 1.0 / g as f64;
        if 2.0 * r >= 1.0 {
            return (0..g).map(|j| (j, width)).collect();
        }
        let lo = center - r;
        let hi = center + r;
        let mut pieces = Vec::with_capacity(2);
        if lo < 0.0 {
            pieces.push((lo + 1.0, 1.0));
            pieces.push((0.0, hi));
        } else if hi > 1.0 {
            pieces.push((lo, 1.0));
            pieces.push((0.0, hi - 1.0));
        } else {
            pieces.push((lo, hi));
        }
        let gf = g as f64;
        let mut out: Vec<(usize, f64)> = Vec::new();
        for (a, b) in pieces {
            if b <= a {
                continue;
            }
            let first = ((a * gf).floor() as usize).min(g - 1);
            let last = ((b * gf).ceil() as usize).clamp(first + 1, g);
            for j in first..last {
                let cl = j as f64 / gf;
                let ch = (j + 1) as f64 / gf;
                let w = b.min(ch) - a.max(cl);
                if w > 0.0 {
                    out.push((j, w));
                }
            }
        }
        out.sort_by_key(|&(j, _)| j);
        out.dedup_by(|later, earlier| {
            if later.0 == earlier.0 {
                earlier.1 += later.1;
                true
            } else {
                false
            }
        });
        out
    }

    /// Exact integral of the density over the chebyshev cube `B(x, r)`.
    fn cube_mass(&self, x: &Point, r: f64) -> f64 {
        let axes: Vec<Vec<(usize, f64)>> = x
            .to_f64()
            .iter()
            .map(|&c| self.axis_overlaps(c, r))
            .collect();
        let g = self.resolution;
        let vals = &self.values;
        fn recurse(axes: &[Vec<(usize, f64)>], g: usize, vals: &[f64], base: usize, w: f64) -> f64 {
            match axes.split_first() {
                None => vals[base] * w,
                Some((first, rest)) => first
                    .iter()
                    .map(|&(j, wj)| recurse(rest, g, vals, base * g + j, w * wj))
                    .sum(),
            }
        }
        recurse(&axes, g, vals, 0, 1.0).clamp(0.0, 1.0)
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let total = *self.cumulative.last().expect("nonempty grid");
        let u = rng.random::<f64>() * total;
        let cell = self
            .cumulative
            .partition_point(|&c| c <= u)
            .min(self.values.len() - 1);
        let g = self.resolution as u128;
        let mut idx = cell;
        let mut coords = vec![0u64; self.dimension];
        for axis in (0..self.dimension).rev() {
            let j = (idx % self.resolution) as u128;
            idx /= self.resolution;
            // Cell j covers fractions [ceil(j 2^64 / G), ceil((j+1) 2^64 / G)).
            let lo = (j << 64).div_ceil(g);
            let hi = ((j + 1) << 64).div_ceil(g);
            coords[axis] = rng.random_range(lo as u64..=(hi - 1) as u64);
        }
        Point::from_fractions(coords)
    }
}

/// A Borel probability measure on the torus.
#[derive(Clone, Debug, PartialEq)]
pub enum MeasureSpec {
    Lebesgue,
    GridDensity(GridDensity),
}

impl MeasureSpec {
    pub fn name(&self) -> &'static str {
        match self {
            MeasureSpec::Lebesgue => "lebesgue",
            MeasureSpec::GridDensity(_) => "grid_density",
        }
    }

    /// True when `r -> mu(B(x, r))` does not depend on `x`.
    pub fn is_translation_invariant(&self) -> bool {
        matches!(self, MeasureSpec::Lebesgue)
    }

    fn check(&self, space: &SpaceSpec, x: &Point) -> Result<()> {
        space.check_point(x)?;
        if let MeasureSpec::GridDensity(g) = self {
            if g.dimension != space.dimension() {
                return Err(Error::DimensionMismatch {
                    expected: space.dimension(),
                    found: g.dimension,
                });
            }
            if space.metric() != Metric::ChebyshevQuotient && space.dimension() > 1 {
                return Err(Error::UnsupportedPairing(
                    "grid_density balls are only integrated exactly under the chebyshev metric"
                        .into(),
                ));
            }
        }
        Ok(())
    }

    /// `mu(B(x, r))` for the open ball.
    pub fn ball_measure(&self, space: &SpaceSpec, x: &Point, r: f64) -> Result<f64> {
        self.check(space, x)?;
        if !(r >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "radius must be >= 0, got {r}"
            )));
        }
        match self {
            MeasureSpec::Lebesgue => space.ball_volume(r),
            MeasureSpec::GridDensity(g) => {
                if r >= space.diameter() {
                    Ok(1.0)
                } else {
                    Ok(g.cube_mass(x, r))
                }
            }
        }
    }

    /// `mu{y : rho <= d(x, y) < rho + eps}`.
    pub fn annulus_measure(&self, space: &SpaceSpec, x: &Point, rho: f64, eps: f64) -> Result<f64> {
        if !(rho > 0.0 && eps > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "annulus needs rho > 0 and eps > 0, got rho={rho}, eps={eps}"
            )));
        }
        let outer = self.ball_measure(space, x, rho + eps)?;
        let inner = self.ball_measure(space, x, rho)?;
        Ok((outer - inner).max(0.0))
    }

    /// Draws a point from the measure.
    pub fn sample<R: Rng + ?Sized>(&self, space: &SpaceSpec, rng: &mut R) -> Point {
        match self {
            MeasureSpec::Lebesgue => space.sample_uniform(rng),
            MeasureSpec::GridDensity(g) => g.sample(rng),
        }
    }

    /// Whether `x` lies in a cell of positive density (Lebesgue: always).
    pub fn in_support(&self, x: &Point) -> bool {
        match self {
            MeasureSpec::Lebesgue => true,
            MeasureSpec::GridDensity(g) => g.density_at(x) > 0.0,
        }
    }
}

/// Fitted ball-scaling exponent: `mu(B(x,r)) <= c1_hat * r^s_hat` on the probes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BallScalingFit {
    pub s_hat: f64,
    pub c1_hat: f64,
    /// Smallest and largest probed radius. No claim is made outside it.
    pub r_range: (f64, f64),
    pub max_residual: f64,
    pub probes: usize,
}

/// Fitted annulus-regularity exponent: `mu(annulus) <= constant_hat * eps^alpha0_hat`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnnulusFit {
    pub alpha0_hat: f64,
    pub rho0: f64,
    pub constant_hat: f64,
    pub max_residual: f64,
    pub probes: usize,
}

fn check_grid(name: &str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() || grid.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "{name} must be nonempty and positive"
        )));
    }
    if grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument(format!(
            "{name} must be sorted ascending"
        )));
    }
    Ok(())
}

/// Pooled log-log fit of `mu(B(x, r))` against `r` over sampled centers.
pub fn fit_ball_scaling<R: Rng + ?Sized>(
    measure: &MeasureSpec,
    space: &SpaceSpec,
    n_centers: usize,
    r_grid: &[f64],
    rng: &mut R,
) -> Result<BallScalingFit> {
    check_grid("r_grid", r_grid)?;
    let mut points = Vec::new();
    for _ in 0..n_centers.max(1) {
        let x = measure.sample(space, rng);
        for &r in r_grid {
            let m = measure.ball_measure(space, &x, r)?;
            if m > 0.0 {
                points.push((r.ln(), m.ln()));
            }
        }
    }
    if points.is_empty() {
        return Err(Error::DegenerateSupport);
    }
    let fit = fit_line(&points).ok_or(Error::NeedTwoScales(r_grid.len()))?;
    Ok(BallScalingFit {
        s_hat: fit.slope,
        c1_hat: envelope_constant(&points, fit.slope),
        r_range: (r_grid[0], r_grid[r_grid.len() - 1]),
        max_residual: fit.max_residual,
        probes: points.len(),
    })
}

/// Pooled log-log fit of annulus measures against `eps`, with `eps < rho`
/// throughout and `rho0 = max(rho_grid)`.
pub fn fit_annulus_regularity<R: Rng + ?Sized>(
    measure: &MeasureSpec,
    space: &SpaceSpec,
    n_centers: usize,
    rho_grid: &[f64],
    eps_grid: &[f64],
    rng: &mut R,
) -> Result<AnnulusFit> {
    check_grid("rho_grid", rho_grid)?;
    check_grid("eps_grid", eps_grid)?;
    if eps_grid[eps_grid.len() - 1] >= rho_grid[0] {
        return Err(Error::InvalidArgument(
            "every eps must be smaller than every rho".into(),
        ));
    }
    let mut points = Vec::new();
    for _ in 0..n_centers.max(1) {
        let x = measure.sample(space, rng);
        for &rho in rho_grid {
            for &eps in eps_grid {
                let m = measure.annulus_measure(space, &x, rho, eps)?;
                if m > 0.0 {
                    points.push((eps.ln(), m.ln()));
                }
            }
        }
    }
    if points.is_empty() {
        return Err(Error::DegenerateSupport);
    }
    let fit = fit_line(&points).ok_or(Error::NeedTwoScales(eps_grid.len()))?;
    Ok(AnnulusFit {
        alpha0_hat: fit.slope,
        rho0: rho_grid[rho_grid.len() - 1],
        constant_hat: envelope_constant(&points, fit.slope),
        max_residual: fit.max_residual,
        probes: points.len(),
    })
}
