//! Regression trees and forests over `[0,1]^d` with uniform concentration
//! bounds that survive data-driven split selection.
//!
//! Module map:
//! - [`geometry`]: rectangles, datasets, density envelope.
//! - [`partition`]: recursive partitions and their `{alpha,k}` validity.
//! - [`trees`]: fitted trees, oracle trees, forests.
//! - [`bounds`]: concentration bounds and per-leaf intervals.
//! - [`rects`]: dyadic approximating families of rectangles.
//! - [`gac`]: guess-and-check forest training.
//! - [`sims`]: data generators and verification experiments.
//! - [`io`]: CSV loading and model JSON.

pub mod bounds;
pub mod error;
pub mod gac;
pub mod geometry;
pub mod io;
pub mod partition;
pub mod rects;
pub mod seed;
pub mod sims;
pub mod trees;

pub use error::{Error, Result};
