//! Frames generated by irreducible induced representations of completely
//! solvable Lie groups `G = P ⋊ M`.
//!
//! The pipeline runs algebra → orbit → geometry → measure → frames: validate
//! the structure constants, compute the coadjoint map and a chart `β_J`,
//! certify a box on which `β_J` is a diffeomorphism, build lattices, and
//! verify the frame inequalities by quadrature.

pub mod algebra;
pub mod autodiff;
pub mod error;
pub mod frames;
pub mod gallery;
pub mod linalg;
pub mod measure;
pub mod nufft;
pub mod geometry;
pub mod orbit;
pub mod pipeline;
pub mod quadrature;

pub use error::{Error, Result};
