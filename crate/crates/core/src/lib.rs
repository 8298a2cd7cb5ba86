//! Active recap learning: key-token mining by long-short gap, remote-segment
//! retrieval, recap-augmented training text and a budgeted recap agent.

mod error;

pub mod agent;
pub mod document;
pub mod harness;
pub mod lsg;
pub mod provider;
pub mod recap;
pub mod retrieval;
pub mod synthetic;
pub mod text;

pub use error::{Error, ProviderError, Result};
