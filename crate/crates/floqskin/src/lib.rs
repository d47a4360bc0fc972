//! Driven dissipative Aubry-Andre-Harper chains: Floquet spectra, skin
//! effect, generalized Brillouin zone and wavepacket transport.

pub mod dynamics;
pub mod error;
pub mod floquet;
pub mod gbz;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod spectra;

pub use error::{Error, Result};
pub use model::{Boundary, Flux, ModelParams};
