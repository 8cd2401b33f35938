//! The learned response scorer: PCA-reduced encoder embeddings scored by
//! `(cᵀ M r̂ + rᵀ N r̂ - α) / β`, trained on human judgements.

mod model;
mod pca;
mod pipeline;
mod subsample;
mod train;

pub use model::{adem_loss, adem_loss_grad, adem_score, init_alpha_beta, AdemExample, AdemParams};
pub use pca::{fit_pca, PcaProjection};
pub use pipeline::{embed_examples, fit_pca_on, project_examples};
pub use subsample::{subsample_by_length, LengthBins, LengthScored};
pub use train::{predict, train_adem, AdemModel, AdemTraining, EpochLog, TrainConfig};
