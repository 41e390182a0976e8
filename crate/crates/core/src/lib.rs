//! End-to-end alignment of a frozen graph encoder to a frozen language model.
//!
//! The pipeline: generate a synthetic text-attributed graph, pretrain a
//! GraphSAGE encoder with link prediction and freeze its node embeddings,
//! build (embedding, description) alignment pairs with a deterministic
//! template producer (or a remote chat-completion service), train a
//! query-token translator in two stages (embedding-text alignment, then
//! generative tuning through the frozen LM), and evaluate zero-shot node
//! classification by prompting the LM with the translated soft prompt.

pub mod autograd;
pub mod container;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod lm;
pub mod optim;
pub mod pipeline;
pub mod producer;
pub mod tag;
pub mod text;
pub mod translator;

pub use error::{Error, Result};
