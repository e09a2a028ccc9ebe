//! Energy-efficient joint precoding and RF-chain selection for multi-user
//! MIMO-OFDM integrated sensing and communication transmitters, with an
//! OFDM radar detection pipeline and Monte-Carlo experiment harness.

pub mod channel;
pub mod config;
pub mod hybrid;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod optimizer;
pub mod radar;
pub mod selection;
pub mod system;

pub use error::{IsacError, Result};
