pub mod aet_net;
pub mod diff_engine;
pub mod dsp;
pub mod error;
pub mod fixtures;
pub mod losses;
pub mod metrics;
pub mod signal_io;
pub mod trainer;
pub mod verify;

pub use error::{Error, Result};
