//! Graph approximations, resistance forms, measures and spectra of two
//! hybrid fractals built from triangles, segments and inverted gaskets:
//! the Hanoi-type attractor and the level-3 Sierpinski gasket hybrid.

pub mod analysis;
pub mod error;
pub mod geometry;
pub mod measure;
pub mod pipeline;
pub mod quantum;
pub mod resistance;
pub mod spectrum;

pub use error::{Error, Result};
