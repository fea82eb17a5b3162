//! Vertical federated learning simulator.
//!
//! Companies obfuscate their slice of a customer table, industry servers train
//! variational encoders over the pooled company data, and a global server
//! trains a classifier on the concatenated industry embeddings. Parties talk
//! only through framed messages, in-process or over TCP.

pub mod dataio;
pub mod error;
pub mod expcli;
pub mod federation;
pub mod nets;
pub mod numkernel;
pub mod par;
pub mod transform;

pub use error::{Error, Result, TransportError};
