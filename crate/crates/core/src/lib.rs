//! Charted loops, loopoids and their infinitesimal algebroids.

pub mod algebroid;
pub mod cli_io;
pub mod error;
pub mod finite;
pub mod lie_functor;
pub mod loopoid;
pub mod mechanics;
pub mod numeric;
pub mod octonion;
pub mod poly;
pub mod smooth_loop;
pub mod tangent;

pub use error::{Error, Result};
