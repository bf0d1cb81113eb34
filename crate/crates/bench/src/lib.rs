//! Fixtures shared by the criterion benches.

pub use ddrc::*;

use ddrc::instance::InstanceFile;
use ddrc::snip::AMode;

/// Square grid with every interior arc failable.
pub fn uniform_grid(side: usize, budget: u32, levels: usize, seed: u64) -> Instance {
    InstanceFile::grid(side, side, seed, budget, levels, AMode::Uniform)
        .and_then(|f| f.build())
        .expect("generated grid is valid")
}

/// Square grid where only `arcs` interior arcs can fail.
pub fn sparse_grid(side: usize, arcs: usize, budget: u32, seed: u64) -> Instance {
    let a = ddrc::snip::sparse_a_vector(side, side, arcs, seed);
    InstanceFile::grid(side, side, seed, budget, 2, AMode::Explicit(a))
        .and_then(|f| f.build())
        .expect("generated grid is valid")
}
