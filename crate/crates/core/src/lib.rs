//! Joint transmit precoding and STAR-RIS coefficient design for a two-user
//! MIMO downlink under energy splitting, mode switching and time switching.

pub mod channel;
pub mod driver;
pub mod error;
pub mod linalg;
pub mod model;
pub mod precoder;
pub mod sdpcore;
pub mod tarc;
pub mod wmmse;

#[cfg(test)]
mod test_support;

pub use error::{Error, Result};
