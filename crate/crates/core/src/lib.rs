//! Emotion recognition in conversations with context-dependent utterance
//! representations.
//!
//! The target utterance and its most recent preceding turns are fed
//! together to a transformer encoder; the pooled first-token embedding of
//! the last layer goes through a linear classification head.

pub mod cli;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod heads;
pub mod synthetic;
pub mod trainer;
pub mod windowing;

pub use error::{Error, Result};
