//! Anisotropic total-variation denoising on d-dimensional lattices with
//! data-driven threshold selection.

pub mod bench;
pub mod error;
pub mod grid;
pub mod io;
pub mod lambda;
pub mod risk;
pub mod segmentation;
pub mod selection;
pub mod signals;
pub mod stats;
pub mod tvsolve;

pub use error::{Error, Result};
pub use grid::{LatticeShape, Signal};
pub use tvsolve::{tv_denoise, tv_denoise_1d, SolverConfig, TvSolution};
