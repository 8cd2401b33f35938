//! Layer-normalized hierarchical LSTM encoder.
//!
//! An utterance-level LSTM reads subword embeddings and emits one vector per
//! utterance; a context-level LSTM reads those vectors, and its last hidden
//! state is the representation of the dialogue. Responses are encoded by
//! the same stack as one-utterance dialogues.

pub mod checkpoint;
mod hier;
pub mod layer_norm;
mod lstm;

pub use checkpoint::{NamedTensor, TensorFile};
pub use hier::{DialogueTrace, EmbeddingTriple, EncoderConfig, HierEncoder, UtteranceTrace};
pub use lstm::{GateNorm, LstmCell, LstmState, SeqTrace, StepCache};
