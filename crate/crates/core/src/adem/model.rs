use serde::{Deserialize, Serialize};

use crate::corpus::SourceModel;
use crate::encoder::EmbeddingTriple;
use crate::linalg::Mat;
use crate::optim::{Parameters, TensorRef};
use crate::{Error, Result};

/// An embedded, human-scored example.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdemExample {
    pub context_id: String,
    pub source_model: SourceModel,
    pub human_score: f64,
    /// Words in the model response.
    pub response_len: usize,
    pub reference_len: usize,
    pub triple: EmbeddingTriple,
}

/// Bilinear scorer `(cᵀ M r̂ + rᵀ N r̂ - α) / β`. Only `M` and `N` are
/// exposed as trainable tensors; `α` and `β` stay fixed after calibration.
#[derive(Clone, Debug, PartialEq)]
pub struct AdemParams {
    pub m: Mat,
    pub n: Mat,
    pub alpha: f64,
    pub beta: f64,
}

impl AdemParams {
    /// `M = N = I`, `α = 0`, `β = 1`.
    pub fn identity(dim: usize) -> Self {
        AdemParams {
            m: Mat::identity(dim),
            n: Mat::identity(dim),
            alpha: 0.0,
            beta: 1.0,
        }
    }

    /// Gradient accumulator: zero matrices, calibration copied.
    pub fn zeros_like(&self) -> Self {
        AdemParams {
            m: Mat::zeros(self.m.rows, self.m.cols),
            n: Mat::zeros(self.n.rows, self.n.cols),
            alpha: self.alpha,
            beta: self.beta,
        }
    }

    pub fn dim(&self) -> usize {
        self.m.rows
    }

    fn check(&self, t: &EmbeddingTriple) -> Result<()> {
        if t.dim() != self.dim() {
            return Err(Error::dim("ADEM triple", self.dim(), t.dim()));
        }
        Ok(())
    }

    /// `cᵀ M r̂ + rᵀ N r̂`
    pub fn raw_score(&self, t: &EmbeddingTriple) -> Result<f64> {
        self.check(t)?;
        Ok(self.m.bilinear(&t.context, &t.response) + self.n.bilinear(&t.reference, &t.response))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite() && self.alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "ADEM calibration needs finite α and β > 0, got α={} β={}",
                self.alpha, self.beta
            )));
        }
        if !self.all_finite() {
            return Err(Error::NonFinite("ADEM matrices".into()));
        }
        Ok(())
    }
}

impl Parameters for AdemParams {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        vec![
            TensorRef {
                name: "M".into(),
                shape: vec![self.m.rows, self.m.cols],
                data: &self.m.data,
            },
            TensorRef {
                name: "N".into(),
                shape: vec![self.n.rows, self.n.cols],
                data: &self.n.data,
            },
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.m.data, &mut self.n.data]
    }
}

/// `β = (max - min) / 4`, `α = min - β`: the smallest raw score maps to 1
/// and the largest to 5.
pub fn init_alpha_beta(raw_scores: &[f64]) -> Result<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &s in raw_scores {
        if !s.is_finite() {
            return Err(Error::NonFinite("raw ADEM score".into()));
        }
        lo = lo.min(s);
        hi = hi.max(s);
    }
    if !(hi > lo) {
        return Err(Error::Degenerate(
            "cannot calibrate ADEM: initial raw scores are all equal".into(),
        ));
    }
    let beta = (hi - lo) / 4.0;
    Ok((lo - beta, beta))
}

/// Unclipped score.
pub fn adem_score(params: &AdemParams, t: &EmbeddingTriple) -> Result<f64> {
    Ok((params.raw_score(t)? - params.alpha) / params.beta)
}

fn regularizer(params: &AdemParams) -> f64 {
    params.m.frobenius_sq() + params.n.frobenius_sq()
}

/// `Σ (score - human)² + γ (‖M‖²_F + ‖N‖²_F)`
pub fn adem_loss(params: &AdemParams, batch: &[(&EmbeddingTriple, f64)], gamma: f64) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty ADEM batch".into()));
    }
    let mut loss = 0.0;
    for (t, h) in batch {
        let e = adem_score(params, t)? - h;
        loss += e * e;
    }
    Ok(loss + gamma * regularizer(params))
}

/// Adds the data term's gradient to `grads` and returns the summed squared
/// error. The regularizer is not included.
pub(crate) fn accumulate_data_grad(
    params: &AdemParams,
    batch: &[(&EmbeddingTriple, f64)],
    grads: &mut AdemParams,
) -> Result<f64> {
    let mut sse = 0.0;
    for (t, h) in batch {
        let e = adem_score(params, t)? - h;
        sse += e * e;
        let k = 2.0 * e / params.beta;
        grads.m.add_outer(k, &t.context, &t.response);
        grads.n.add_outer(k, &t.reference, &t.response);
    }
    Ok(sse)
}

/// Loss and its gradient with respect to `M` and `N`.
pub fn adem_loss_grad(
    params: &AdemParams,
    batch: &[(&EmbeddingTriple, f64)],
    gamma: f64,
) -> Result<(f64, AdemParams)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty ADEM batch".into()));
    }
    let mut grads = params.zeros_like();
    let sse = accumulate_data_grad(params, batch, &mut grads)?;
    grads.add_scaled(2.0 * gamma, params);
    Ok((sse + gamma * regularizer(params), grads))
}
