//! Neural and exact Rational Speech Acts agents for color reference games.
//!
//! The crate is organized bottom-up:
//!
//! - [`colorspace`]: colors, CIEDE2000, Fourier features, context sampling
//! - [`corpus`]: trial ingestion, filtering, tokenization, splits, vocabularies
//! - [`nn`]: a small reverse-mode autodiff tape with LSTM layers and optimizers
//! - [`listener`]: the literal neural listener L0
//! - [`speaker`]: the literal neural speaker S0
//! - [`rsa`]: exact RSA over a lexicon and the neural pragmatic agents
//! - [`metrics`]: listener evaluation and speaker behavior statistics

pub mod colorspace;
pub mod corpus;
pub mod error;
pub mod listener;
pub mod metrics;
pub mod nn;
pub mod rsa;
pub mod speaker;

pub use error::{Error, Result};
