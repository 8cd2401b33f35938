//! Dialogue response evaluation.
//!
//! The crate bundles three families of scorers for a candidate dialogue
//! response:
//!
//! * word-overlap baselines ([`metrics`]): sentence BLEU-N, ROUGE-L and an
//!   exact/stem METEOR;
//! * a learned bilinear scorer ([`adem`]) over context, reference and
//!   candidate embeddings, trained against human ratings;
//! * the layer-normalized hierarchical LSTM encoder ([`encoder`]) that
//!   produces those embeddings, pre-trained as part of a latent-variable
//!   encoder-decoder ([`vhred`]).
//!
//! [`analytics`] holds the correlation statistics and the bias and failure
//! analyses used to compare scorers against human judgement, and [`synth`]
//! generates self-contained synthetic datasets.
//!
//! Batch operations take an [`Execution`] and run on rayon when the
//! `parallel` feature is enabled; results are identical either way.

pub mod adem;
pub mod analytics;
pub mod corpus;
pub mod encoder;
mod error;
pub mod gradcheck;
pub mod linalg;
pub mod metrics;
pub mod optim;
pub mod par;
pub mod synth;
pub mod vhred;

pub use error::{Error, Result};
pub use par::Execution;
