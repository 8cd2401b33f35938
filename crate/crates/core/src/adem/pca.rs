use nalgebra::{DMatrix, SymmetricEigen};

use crate::encoder::{EmbeddingTriple, TensorFile};
use crate::linalg::Mat;
use crate::{Error, Result};

/// Mean-centred projection onto the leading principal directions. No
/// whitening: coordinates keep the variance of the data along each axis.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaProjection {
    pub mean: Vec<f64>,
    /// `n × d`, orthonormal rows, by decreasing eigenvalue.
    pub components: Mat,
    /// Eigenvalues of the sample covariance for the kept rows.
    pub explained_variance: Vec<f64>,
}

impl PcaProjection {
    /// Writes `{prefix}.mean`, `{prefix}.components` and
    /// `{prefix}.explained_variance`.
    pub fn to_tensor_file(&self, prefix: &str, f: &mut TensorFile) {
        let (n, d) = (self.output_dim(), self.input_dim());
        f.push(format!("{prefix}.mean"), vec![d], self.mean.clone());
        f.push(format!("{prefix}.components"), vec![n, d], self.components.data.clone());
        f.push(
            format!("{prefix}.explained_variance"),
            vec![n],
            self.explained_variance.clone(),
        );
    }

    pub fn from_tensor_file(prefix: &str, f: &TensorFile) -> Result<Self> {
        let mean = f.get(&format!("{prefix}.mean"))?.data.clone();
        let comp = f.get(&format!("{prefix}.components"))?;
        let d = mean.len();
        if comp.shape.len() != 2 || comp.shape[1] != d {
            return Err(Error::Checkpoint(format!(
                "{prefix}.components has shape {:?}, expected [n, {d}]",
                comp.shape
            )));
        }
        let n = comp.shape[0];
        let explained_variance = f.get(&format!("{prefix}.explained_variance"))?.data.clone();
        if explained_variance.len() != n {
            return Err(Error::Checkpoint(format!(
                "{prefix}.explained_variance has {} entries, expected {n}",
                explained_variance.len()
            )));
        }
        Ok(PcaProjection {
            mean,
            components: Mat {
                rows: n,
                cols: d,
                data: comp.data.clone(),
            },
            explained_variance,
        })
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let mut f = TensorFile::default();
        self.to_tensor_file("pca", &mut f);
        f.save(path)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_tensor_file("pca", &TensorFile::load(path)?)
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.components.rows
    }

    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.input_dim() {
            return Err(Error::dim("PCA input", self.input_dim(), v.len()));
        }
        let centred: Vec<f64> = v.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        Ok(self.components.matvec(&centred))
    }

    pub fn reconstruct(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.output_dim() {
            return Err(Error::dim("PCA coordinates", self.output_dim(), y.len()));
        }
        let mut out = self.mean.clone();
        self.components.matvec_t_acc(y, &mut out);
        Ok(out)
    }

    pub fn project_triple(&self, t: &EmbeddingTriple) -> Result<EmbeddingTriple> {
        EmbeddingTriple::new(
            self.project(&t.context)?,
            self.project(&t.reference)?,
            self.project(&t.response)?,
        )
    }
}

/// Fits on the given vectors via an eigendecomposition of the sample
/// covariance. Each component is signed so that its largest-magnitude
/// entry is positive.
pub fn fit_pca<V: AsRef<[f64]>>(vectors: &[V], n: usize) -> Result<PcaProjection> {
    if n == 0 {
        return Err(Error::InvalidArgument("PCA dimension must be at least 1".into()));
    }
    let Some(first) = vectors.first() else {
        return Err(Error::InvalidArgument("PCA needs at least one vector".into()));
    };
    let d = first.as_ref().len();
    if n > d {
        return Err(Error::InvalidArgument(format!(
            "PCA dimension {n} exceeds input dimension {d}"
        )));
    }
    if vectors.len() < n + 1 {
        return Err(Error::InvalidArgument(format!(
            "PCA to {n} dimensions needs at least {} vectors, got {}",
            n + 1,
            vectors.len()
        )));
    }
    let m = vectors.len();
    let mut mean = vec![0.0; d];
    for v in vectors {
        let v = v.as_ref();
        if v.len() != d {
            return Err(Error::dim("PCA input", d, v.len()));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("PCA input vector".into()));
        }
        for (a, x) in mean.iter_mut().zip(v) {
            *a += x;
        }
    }
    mean.iter_mut().for_each(|a| *a /= m as f64);

    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut centred = vec![0.0; d];
    for v in vectors {
        for (c, (x, mu)) in centred.iter_mut().zip(v.as_ref().iter().zip(&mean)) {
            *c = x - mu;
        }
        for i in 0..d {
            let ci = centred[i];
            if ci == 0.0 {
                continue;
            }
            for j in i..d {
                cov[(i, j)] += ci * centred[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[(i, j)] / (m - 1) as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let mut components = Mat::zeros(n, d);
    let mut explained_variance = Vec::with_capacity(n);
    for (row, &k) in order.iter().take(n).enumerate() {
        let col = eig.eigenvectors.column(k);
        let mut pivot = 0;
        for i in 1..d {
            if col[i].abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..d {
            components.set(row, i, sign * col[i]);
        }
        explained_variance.push(eig.eigenvalues[k].max(0.0));
    }
    Ok(PcaProjection {
        mean,
        components,
        explained_variance,
    })
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::linalg::dot;

    fn random_vectors(m: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    }

    #[test]
    fn line_gives_analytic_direction() {
        let pts: Vec<Vec<f64>> = (-3..=3).map(|t| vec![t as f64, 2.0 * t as f64]).collect();
        let p = fit_pca(&pts, 1).unwrap();
        let s5 = 5f64.sqrt();
        assert!((p.components.get(0, 0) - 1.0 / s5).abs() < 1e-12);
        assert!((p.components.get(0, 1) - 2.0 / s5).abs() < 1e-12);
        // coordinate is the signed distance along the line
        let v = [2.0, 4.0];
        let y = p.project(&v).unwrap();
        assert!((y[0] - (20f64).sqrt()).abs() < 1e-12);
        assert_eq!(p.project(&p.mean).unwrap(), vec![0.0]);
    }

    #[test]
    fn full_rank_round_trip_and_distances() {
        let pts = random_vectors(40, 5, 1);
        let p = fit_pca(&pts, 5).unwrap();
        for v in &pts {
            let r = p.reconstruct(&p.project(v).unwrap()).unwrap();
            for (a, b) in r.iter().zip(v) {
                assert!((a - b).abs() < 1e-8);
            }
        }
        let dist = |a: &[f64], b: &[f64]| -> f64 {
            a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
        };
        let (a, b) = (p.project(&pts[0]).unwrap(), p.project(&pts[1]).unwrap());
        assert!((dist(&a, &b) - dist(&pts[0], &pts[1])).abs() < 1e-8);
    }

    #[test]
    fn rows_orthonormal_and_sorted() {
        let pts = random_vectors(100, 12, 2);
        let p = fit_pca(&pts, 6).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let d = dot(p.components.row(i), p.components.row(j));
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-8);
            }
            let row = p.components.row(i);
            let pivot = row
                .iter()
                .copied()
                .fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            assert!(pivot > 0.0);
        }
        assert!(p.explained_variance.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn paper_dimension() {
        let pts = random_vectors(60, 200, 3);
        let p = fit_pca(&pts, 50).unwrap();
        assert_eq!(p.project(&pts[0]).unwrap().len(), 50);
    }

    #[test]
    fn errors() {
        let pts = random_vectors(3, 2, 4);
        assert!(fit_pca(&pts, 3).is_err());
        assert!(fit_pca(&pts, 0).is_err());
        assert!(fit_pca(&pts[..2], 2).is_err());
        let p = fit_pca(&pts, 1).unwrap();
        assert!(p.project(&[1.0]).is_err());
    }
}
