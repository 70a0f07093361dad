pub mod align;
pub mod augment;
pub mod cli;
pub mod dataset;
pub mod detect;
pub mod eval;
pub mod grade;
pub mod raster;
mod rng;
