use serde::{Deserialize, Serialize};

use super::corr::t_two_tailed;
use crate::{Error, Result};

/// Size and mean of one side of the length split.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub n: usize,
    pub mean: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthBiasReport {
    pub threshold: usize,
    /// `Δw ≤ threshold`
    pub similar: GroupStats,
    /// `Δw > threshold`
    pub different: GroupStats,
    /// Welch statistic for `similar − different`.
    pub t: f64,
    pub p_value: f64,
    /// Significant at 0.05 with higher scores for similar lengths.
    pub length_biased: bool,
}

fn stats(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

/// Welch two-sample t-test: `(t, df, two-tailed p)`.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<(f64, f64, f64)> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidArgument(
            "Welch test needs at least two values per group".into(),
        ));
    }
    let (ma, va) = stats(a);
    let (mb, vb) = stats(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let se2 = va / na + vb / nb;
    if se2 == 0.0 {
        return Ok(if ma == mb {
            (0.0, na + nb - 2.0, 1.0)
        } else {
            (f64::INFINITY.copysign(ma - mb), na + nb - 2.0, 0.0)
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2
        / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    Ok((t, df, t_two_tailed(t, df)))
}

/// Splits responses by `Δw`, the absolute word-count difference from the
/// reference, and compares mean scores of the two groups.
pub fn length_bias_report(scores: &[f64], delta_w: &[usize], threshold: usize) -> Result<LengthBiasReport> {
    if scores.len() != delta_w.len() {
        return Err(Error::dim("length-bias columns", delta_w.len(), scores.len()));
    }
    let mut similar = Vec::new();
    let mut different = Vec::new();
    for (s, d) in scores.iter().zip(delta_w) {
        if *d <= threshold {
            similar.push(*s);
        } else {
            different.push(*s);
        }
    }
    if similar.is_empty() || different.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "Δw threshold {threshold} leaves an empty group ({} / {})",
            similar.len(),
            different.len()
        )));
    }
    let (t, _, p_value) = welch_t_test(&similar, &different)?;
    let ms = stats(&similar).0;
    let md = stats(&different).0;
    Ok(LengthBiasReport {
        threshold,
        similar: GroupStats {
            n: similar.len(),
            mean: ms,
        },
        different: GroupStats {
            n: different.len(),
            mean: md,
        },
        t,
        p_value,
        length_biased: p_value < 0.05 && ms > md,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_groups() {
        let scores = [1.0, 2.0, 3.0, 1.0, 2.0, 3.0];
        let dw = [0, 1, 2, 10, 11, 12];
        let r = length_bias_report(&scores, &dw, 6).unwrap();
        assert_eq!(r.t, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert_eq!((r.similar.n, r.different.n), (3, 3));
        assert!(!r.length_biased);
    }

    #[test]
    fn constructed_bias_is_flagged() {
        let dw: Vec<usize> = (0..60).map(|i| i % 15).collect();
        let scores: Vec<f64> = dw.iter().map(|d| -(*d as f64)).collect();
        let r = length_bias_report(&scores, &dw, 6).unwrap();
        assert!(r.p_value < 1e-6);
        assert!(r.length_biased);
    }

    #[test]
    fn welch_hand_value() {
        // means 2 and 5, sample variances 1 and 4, n = 3 each:
        // se² = 1/3 + 4/3 = 5/3, t = -3/√(5/3)
        let (t, df, _) = welch_t_test(&[1.0, 2.0, 3.0], &[3.0, 5.0, 7.0]).unwrap();
        assert!((t + 3.0 / (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        // df = (5/3)² / ((1/3)²/2 + (4/3)²/2) = (25/9) / (17/18) = 50/17
        assert!((df - 50.0 / 17.0).abs() < 1e-12);
    }

    #[test]
    fn empty_group_errors() {
        assert!(length_bias_report(&[1.0, 2.0], &[0, 1], 6).is_err());
    }
}
