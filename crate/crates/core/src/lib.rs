pub mod boundary;
pub mod error;
pub mod fem;
pub mod geometry;
pub mod impedance;
pub mod layer;
pub mod linalg;
pub mod mesh;
pub mod mie;
pub mod pipeline;
pub mod scattering;
pub mod specfun;
pub mod trace;

pub use error::{Error, Result};
