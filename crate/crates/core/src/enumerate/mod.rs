//! Exhaustive enumeration of lattice animals and simple cycles, and the
//! empirical weight concentration measured over connected edge sets.

pub mod animals;
pub mod cycles;
pub mod weights;

pub use animals::{
    check_animal_bounds, count_by_growth, enumerate_animals, for_each_connected_set,
    AnimalBoundVerdict, AnimalMode, CountTable,
};
pub use cycles::{enumerate_cycles_through, simple_cycles, DualCycle, EdgeGraph};
pub use weights::{weight_ratio_stats, WeightRatioParams, WeightRatioStats};
