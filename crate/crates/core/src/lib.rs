//! Oblivious distributed firewall.
//!
//! A blacklist of IPv4 addresses is compiled into a Bloom filter whose bits
//! are secret-shared across m servers. A gateway asks the servers for the
//! shares at an address's filter positions and learns whether the address
//! is listed; no single server (or coalition below the threshold) learns
//! anything about the list.

pub mod bloom;
pub mod detection;
pub mod error;
pub mod firewall;
pub mod modmath;
pub mod rng;
pub mod sharing;
pub mod transport;

pub use error::{Error, ErrorClass, Result};
pub use modmath::{Field, FieldElement};
