//! Approximate spherical range counting in high-dimensional Euclidean space.

pub mod counter;
pub mod error;
pub mod generate;
pub mod geom;
pub mod hamming;
pub mod io;
pub mod learned;
pub mod oracle;
pub mod ptree;
pub mod sampler;
pub mod spantree;
pub mod stabber;
pub mod unionfind;

pub use counter::{build_counting_index, BuildConfig, CountAnswer, CountingIndex, TreeSource};
pub use error::{Error, Result};
pub use geom::{EpsParams, GridSpec, Point, Seed, WeightedPointSet};
