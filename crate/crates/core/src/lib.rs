//! Large-kernel 3D tumor segmentation with kernel upsampling, plus a
//! radiomics-driven self-normalizing classifier for pathological complete
//! response, exercised end-to-end on seeded synthetic DCE phantoms.

pub mod dataset;
pub mod error;
pub mod featselect;
pub mod io_util;
pub mod mdl;
pub mod mednext;
pub mod metrics;
pub mod nn;
pub mod phantom;
pub mod radiomics;
pub mod rng;
pub mod snn;
pub mod upkern;
pub mod volume;

pub use error::{Error, Result};
