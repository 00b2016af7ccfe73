//! Numerical laboratory for quantitative Poincaré recurrence.
//!
//! The crate builds the objects behind strong dynamical Borel-Cantelli
//! statements for recurrence (target masses `M_n`, measure-inverted radii
//! `r_n(x)`, packings, partitions and mollifiers) and measures the
//! corresponding statistics on concrete mixing systems: the doubling map,
//! hyperbolic toral automorphisms, with rotations and the identity as
//! negative controls.

// `!(x > 0.0)` style checks are deliberate: they reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod measures;
pub mod phase;
pub mod regression;
pub mod rng;
pub mod systems;
pub mod targets;

pub use error::{Error, Result};

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/phase-space.md")]
    struct PhaseSpace;
    #[doc = include_str!("../../../book/src/targets.md")]
    struct Targets;
    #[doc = include_str!("../../../book/src/geometry.md")]
    struct Geometry;
    #[doc = include_str!("../../../book/src/experiments.md")]
    struct Experiments;
    #[doc = include_str!("../../../book/src/reproducibility.md")]
    struct Reproducibility;
}
