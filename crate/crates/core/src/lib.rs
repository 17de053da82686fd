//! Role-relevance document search.
//!
//! Documents are ranked for a user's role by mixing three signals: a
//! keyword score, the document's relevance to a place in a geographic
//! knowledge structure, and its closeness to a user-defined topic expressed
//! over latent topics learned by collapsed Gibbs sampling.

pub mod engine;
pub mod entities;
pub mod error;
pub mod etl;
pub mod eval;
mod format;
pub mod keyword;
pub mod lda;
pub mod registry;
pub mod role;
pub mod synth;
pub mod text;
pub mod topics;

pub use error::{Error, Result};
