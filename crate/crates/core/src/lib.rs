//! Simulation laboratory for compressive-sensing based joint
//! source-channel-network coding.

pub mod error;
pub mod harness;
pub mod io;
pub mod lasso;
pub mod mathcore;
pub mod netsim;
pub mod precoder;
pub mod re_analysis;
pub mod sources;

pub use error::{Error, Result};
pub use mathcore::{Mat, Seed};
