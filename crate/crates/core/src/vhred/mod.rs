//! Latent-variable encoder-decoder used to pre-train the hierarchical
//! encoder.
//!
//! Every turn after the first gets a diagonal Gaussian latent: a prior
//! network reads the context state, a posterior network also reads the
//! encoding of the turn itself. A decoder LSTM, fed the previous word,
//! the latent sample and the context state, reconstructs the turn. The
//! training objective is the evidence lower bound with a linearly annealed
//! KL weight; decoder inputs are randomly replaced by `<unk>`.

mod gaussian;
mod model;
mod train;

pub use gaussian::{anneal_weight, kl_diag_gaussian, sample_latent, AnnealSchedule, DiagGaussian};
pub use model::{
    DecoderParams, Dialogue, DialogueDraws, ElboTerms, LatentNets, Mlp, Vhred, VhredConfig,
};
pub use train::{elbo_batch, elbo_batch_with_grads, pretrain_vhred, PretrainConfig, PretrainLogRow};
