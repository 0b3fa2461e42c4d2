pub mod deep;
pub mod dp;
pub mod error;
pub mod io;
pub mod kmeans;
pub mod leakage;
pub mod linalg;
pub mod mm;
pub mod par;
pub mod pipeline;
pub mod rng;
pub mod special;
pub mod vmmbm;

pub use error::{Error, Result};
