use crate::{Error, Result};

/// Gaussian with diagonal covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagGaussian {
    pub mean: Vec<f64>,
    /// Per-dimension variance, strictly positive.
    pub var: Vec<f64>,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        if mean.len() != var.len() {
            return Err(Error::dim("gaussian variance", mean.len(), var.len()));
        }
        if var.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidArgument(
                "gaussian variances must be positive and finite".into(),
            ));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::NonFinite("gaussian mean".into()));
        }
        Ok(DiagGaussian { mean, var })
    }

    pub fn from_log_var(mean: Vec<f64>, log_var: &[f64]) -> Result<Self> {
        Self::new(mean, log_var.iter().map(|l| l.exp()).collect())
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let ln_2pi = (2.0 * std::f64::consts::PI).ln();
        self.mean
            .iter()
            .zip(&self.var)
            .zip(x)
            .map(|((m, v), x)| -0.5 * (ln_2pi + v.ln() + (x - m) * (x - m) / v))
            .sum()
    }
}

/// Closed-form `KL[q ‖ p]`, summed over dimensions.
pub fn kl_diag_gaussian(q: &DiagGaussian, p: &DiagGaussian) -> Result<f64> {
    if q.dim() != p.dim() {
        return Err(Error::dim("KL operands", q.dim(), p.dim()));
    }
    Ok(kl_terms(&q.mean, &q.var, &p.mean, &p.var))
}

pub(crate) fn kl_terms(mq: &[f64], vq: &[f64], mp: &[f64], vp: &[f64]) -> f64 {
    let mut kl = 0.0;
    for i in 0..mq.len() {
        let d = mq[i] - mp[i];
        kl += 0.5 * (vp[i].ln() - vq[i].ln() + (vq[i] + d * d) / vp[i] - 1.0);
    }
    // rounding can leave a tiny negative when q == p
    kl.max(0.0)
}

/// Reparameterized draw `μ + σ ⊙ ε`.
pub fn sample_latent(g: &DiagGaussian, noise: &[f64]) -> Result<Vec<f64>> {
    if noise.len() != g.dim() {
        return Err(Error::dim("latent noise", g.dim(), noise.len()));
    }
    Ok(g.mean
        .iter()
        .zip(&g.var)
        .zip(noise)
        .map(|((m, v), e)| m + v.sqrt() * e)
        .collect())
}

/// Linear KL annealing horizon, in batches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct AnnealSchedule {
    pub total_batches: u64,
}

impl AnnealSchedule {
    pub fn new(total_batches: u64) -> Result<Self> {
        if total_batches == 0 {
            return Err(Error::InvalidArgument(
                "annealing horizon must be at least one batch".into(),
            ));
        }
        Ok(AnnealSchedule { total_batches })
    }

    pub fn desk() -> Self {
        AnnealSchedule {
            total_batches: 2000,
        }
    }
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        AnnealSchedule {
            total_batches: 60_000,
        }
    }
}

/// `min(1, batch / T)`
pub fn anneal_weight(batch_index: u64, sched: AnnealSchedule) -> f64 {
    (batch_index as f64 / sched.total_batches as f64).min(1.0)
}
