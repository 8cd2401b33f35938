use crate::{Error, Result};

fn moments(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Affine map giving `metric` the mean and population variance of `human`.
pub fn affine_normalize(metric: &[f64], human: &[f64]) -> Result<Vec<f64>> {
    if metric.is_empty() || human.is_empty() {
        return Err(Error::InvalidArgument("cannot normalize empty score columns".into()));
    }
    if metric.iter().chain(human).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("score column".into()));
    }
    let (mm, vm) = moments(metric);
    if vm == 0.0 {
        return Err(Error::Degenerate(
            "cannot normalize a constant metric column".into(),
        ));
    }
    let (mh, vh) = moments(human);
    let scale = (vh / vm).sqrt();
    Ok(metric.iter().map(|x| mh + (x - mm) * scale).collect())
}

/// [`affine_normalize`], then clipped to `[1, 5]`. When the metric has no
/// negative values, raw scores of exactly 0 are pinned to 1; zero is then
/// the smallest possible score, so the mapping stays monotone.
pub fn normalize_scores(metric: &[f64], human: &[f64]) -> Result<Vec<f64>> {
    let affine = affine_normalize(metric, human)?;
    let pin_zero = metric.iter().all(|&x| x >= 0.0);
    Ok(metric
        .iter()
        .zip(affine)
        .map(|(&raw, a)| {
            if pin_zero && raw == 0.0 {
                1.0
            } else {
                a.clamp(1.0, 5.0)
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_point() {
        let h = [1.0, 2.5, 4.0, 5.0, 3.0];
        let out = affine_normalize(&h, &h).unwrap();
        for (a, b) in out.iter().zip(&h) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_maps_to_one() {
        let m = [0.0, 0.2, 0.9, 0.4];
        let h = [5.0, 1.0, 3.0, 4.0];
        let out = normalize_scores(&m, &h).unwrap();
        assert_eq!(out[0], 1.0);
        assert!(out.iter().all(|v| (1.0..=5.0).contains(v)));
    }

    #[test]
    fn constant_metric_errors() {
        assert!(normalize_scores(&[0.3, 0.3], &[1.0, 2.0]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn matches_human_moments_and_is_monotone(
            pairs in proptest::collection::vec((-3.0f64..3.0, 1.0f64..5.0), 2..40)
        ) {
            let m: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let h: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            proptest::prop_assume!(moments(&m).1 > 1e-6);
            let a = affine_normalize(&m, &h).unwrap();
            let (ma, va) = moments(&a);
            let (mh, vh) = moments(&h);
            proptest::prop_assert!((ma - mh).abs() < 1e-9);
            proptest::prop_assert!((va - vh).abs() < 1e-9);
            let out = normalize_scores(&m, &h).unwrap();
            for i in 0..m.len() {
                for j in 0..m.len() {
                    if m[i] <= m[j] {
                        proptest::prop_assert!(out[i] <= out[j]);
                    }
                }
            }
        }

        #[test]
        fn pinned_zero_keeps_order(
            mut m in proptest::collection::vec(0.0f64..3.0, 3..30),
            h in proptest::collection::vec(1.0f64..5.0, 3..30),
        ) {
            let k = m.len().min(h.len());
            m.truncate(k);
            m[0] = 0.0;
            proptest::prop_assume!(moments(&m).1 > 1e-6);
            let out = normalize_scores(&m, &h[..k]).unwrap();
            proptest::prop_assert_eq!(out[0], 1.0);
            for i in 0..k {
                for j in 0..k {
                    if m[i] <= m[j] {
                        proptest::prop_assert!(out[i] <= out[j]);
                    }
                }
            }
        }
    }
}
