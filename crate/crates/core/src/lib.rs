//! Cooperative learning of a fast conditional generator (the initializer) and
//! a conditional energy-based model (the solver).
//!
//! The initializer proposes a solution `Y` for a condition `C` in one forward
//! pass; the solver refines it with Langevin dynamics on its learned value
//! function `f(Y, C)`. Training alternates four steps per batch: generate
//! initial solutions, refine them, shift the solver's objective toward the
//! observed solutions, and regress the initializer onto the refined ones with
//! the same latent draws.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod langevin;
pub mod models;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
