use super::model::AdemExample;
use super::pca::{fit_pca, PcaProjection};
use crate::corpus::EvalExample;
use crate::encoder::HierEncoder;
use crate::{par, Execution, Result};

/// Encodes tokenized examples into raw (unprojected) scored triples.
pub fn embed_examples(
    encoder: &HierEncoder,
    examples: &[EvalExample],
    exec: Execution,
) -> Result<Vec<AdemExample>> {
    par::try_map(exec, examples, |ex| {
        Ok(AdemExample {
            context_id: ex.context.context_id.clone(),
            source_model: ex.source_model,
            human_score: ex.human_score,
            response_len: ex.model_response.word_count(),
            reference_len: ex.reference_response.word_count(),
            triple: encoder.encode_triple(ex)?,
        })
    })
}

/// Fits on the context, reference and response vectors of `train` together.
pub fn fit_pca_on(train: &[AdemExample], n: usize) -> Result<PcaProjection> {
    let vectors: Vec<&[f64]> = train
        .iter()
        .flat_map(|e| e.triple.vectors())
        .collect();
    fit_pca(&vectors, n)
}

pub fn project_examples(
    pca: &PcaProjection,
    data: &[AdemExample],
    exec: Execution,
) -> Result<Vec<AdemExample>> {
    par::try_map(exec, data, |e| {
        Ok(AdemExample {
            triple: pca.project_triple(&e.triple)?,
            ..e.clone()
        })
    })
}
