//! Maximal packings, the first-match partition into cells `A_k`, mollified
//! cell indicators, and the diagnostics built on them.

mod boxes;
mod packing;
mod partition;

pub use packing::{maximal_packing, packing_exponent, Packing, PackingExponent, SEPARATION_SLACK};
pub use partition::{
    excess_bound, neighbourhood_excess, CellExcess, ExcessReport, MollifierSet, Partition,
    MIN_EXCESS_SAMPLES,
};
