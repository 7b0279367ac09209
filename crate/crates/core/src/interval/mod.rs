//! Grids, sampled functions and cell partitions of `[0,1]`.

mod grid;
mod partition;
pub mod rational;
mod sampled;

pub use grid::Grid;
pub use partition::{dense_points, make_partition, modulus_delta, CellPartition};
pub use rational::{format_rational, parse_rational, rat, Rational};
pub use sampled::{sup_distance, Antiderivative, SampledFunction};
