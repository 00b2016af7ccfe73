//! Axis-aligned boxes with per-face open/closed flags, in a local unwrapped
//! frame. Cells of a chebyshev partition are finite unions of these.

/// Coordinates closer than this are treated as equal.
pub(crate) const SNAP: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Cuboid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub lo_closed: Vec<bool>,
    pub hi_closed: Vec<bool>,
}

impl Cuboid {
    /// The open cube `(c - r, c + r)^N`.
    pub fn open_cube(center: &[f64], r: f64) -> Self {
        let n = center.len();
        Cuboid {
            lo: center.iter().map(|c| c - r).collect(),
            hi: center.iter().map(|c| c + r).collect(),
            lo_closed: vec![false; n],
            hi_closed: vec![false; n],
        }
    }

    pub fn dimension(&self) -> usize {
        self.lo.len()
    }

    /// Nonempty as a set (degenerate closed faces count).
    pub fn is_nonempty(&self) -> bool {
        (0..self.dimension()).all(|i| {
            let w = self.hi[i] - self.lo[i];
            w > SNAP || (w.abs() <= SNAP && self.lo_closed[i] && self.hi_closed[i])
        })
    }

    /// Every side longer than `SNAP`.
    pub fn has_volume(&self) -> bool {
        (0..self.dimension()).all(|i| self.hi[i] - self.lo[i] > SNAP)
    }

    pub fn volume(&self) -> f64 {
        (0..self.dimension())
            .map(|i| (self.hi[i] - self.lo[i]).max(0.0))
            .product()
    }

    /// Open `delta`-neighbourhood under the chebyshev metric.
    pub fn expanded(&self, delta: f64) -> Cuboid {
        let n = self.dimension();
        Cuboid {
            lo: self.lo.iter().map(|v| v - delta).collect(),
            hi: self.hi.iter().map(|v| v + delta).collect(),
            lo_closed: vec![false; n],
            hi_closed: vec![false; n],
        }
    }

    fn overlaps_open(&self, b: &Cuboid) -> bool {
        (0..self.dimension()).all(|i| b.lo[i] < self.hi[i] - SNAP && b.hi[i] > self.lo[i] + SNAP)
    }

    /// `self` minus the open box `b`, as disjoint pieces.
    pub fn subtract_open(&self, b: &Cuboid) -> Vec<Cuboid> {
        if !self.overlaps_open(b) {
            return vec![self.clone()];
        }
        let mut out = Vec::new();
        let mut rem = self.clone();
        for i in 0..self.dimension() {
            if b.lo[i] >= rem.lo[i] - SNAP {
                let mut piece = rem.clone();
                piece.hi[i] = b.lo[i];
                piece.hi_closed[i] = true;
                if piece.is_nonempty() {
                    out.push(piece);
                }
                rem.lo[i] = b.lo[i];
                rem.lo_closed[i] = false;
            }
            if b.hi[i] <= rem.hi[i] + SNAP {
                let mut piece = rem.clone();
                piece.lo[i] = b.hi[i];
                piece.lo_closed[i] = true;
                if piece.is_nonempty() {
                    out.push(piece);
                }
                rem.hi[i] = b.hi[i];
                rem.hi_closed[i] = false;
            }
        }
        out
    }

    /// Chebyshev distance from `u` to the closure, with every axis read on
    /// the circle.
    pub fn distance_from(&self, u: &[f64]) -> f64 {
        (0..self.dimension())
            .map(|i| {
                let (lo, hi, x) = (self.lo[i], self.hi[i], u[i]);
                if x >= lo && x <= hi {
                    0.0
                } else {
                    let below = (lo - x).rem_euclid(1.0);
                    let above = (x - hi).rem_euclid(1.0);
                    below.min(above)
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Subtracts every open box in `cuts` from every box in `pieces`.
pub(crate) fn subtract_all(mut pieces: Vec<Cuboid>, cuts: &[Cuboid]) -> Vec<Cuboid> {
    for cut in cuts {
        pieces = pieces.iter().flat_map(|p| p.subtract_open(cut)).collect();
        if pieces.is_empty() {
            break;
        }
    }
    pieces
}

/// Whether `cube` is covered by `cover` up to a null set.
pub(crate) fn covered(cube: &Cuboid, cover: &[Cuboid]) -> bool {
    let mut pieces = vec![cube.clone()];
    for cut in cover {
        pieces = pieces
            .iter()
            .flat_map(|p| p.subtract_open(cut))
            .filter(|p| p.has_volume())
            .collect();
        if pieces.is_empty() {
            return true;
        }
    }
    false
}
