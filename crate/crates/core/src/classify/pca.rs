use super::linalg::symmetric_eigen;
use super::{ClassifyError, Result};

/// Mean and top-`d` principal axes of a data set.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// `p×d` row-major; column `j` is the `j`-th principal axis.
    pub basis: Vec<f64>,
    /// Variances along the kept axes, descending.
    pub eigenvalues: Vec<f64>,
    pub input_dim: usize,
    pub output_dim: usize,
}

/// Fits PCA to `n` rows of length `p`. Each axis is signed so that its
/// largest-magnitude component is positive.
pub fn pca_fit(rows: &[Vec<f64>], d: usize) -> Result<Pca> {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    if n < 2 || p == 0 {
        return Err(ClassifyError::InvalidArgument(format!(
            "pca needs at least 2 samples of positive dimension, got {n}x{p}"
        )));
    }
    if rows.iter().any(|r| r.len() != p) {
        return Err(ClassifyError::InvalidArgument("ragged data matrix".into()));
    }
    let max = (n - 1).min(p);
    if d == 0 || d > max {
        return Err(ClassifyError::InvalidDimension { requested: d, max });
    }
    let mut mean = vec![0.0; p];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut cov = vec![0.0; p * p];
    let mut centred = vec![0.0; p];
    for r in rows {
        for ((c, v), m) in centred.iter_mut().zip(r).zip(&mean) {
            *c = v - m;
        }
        for i in 0..p {
            let ci = centred[i];
            if ci == 0.0 {
                continue;
            }
            let row = &mut cov[i * p..(i + 1) * p];
            for j in i..p {
                row[j] += ci * centred[j];
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..p {
        for j in i..p {
            let v = cov[i * p + j] / denom;
            cov[i * p + j] = v;
            cov[j * p + i] = v;
        }
    }
    if cov.iter().all(|&v| v == 0.0) {
        return Err(ClassifyError::DegenerateData);
    }
    let eig = symmetric_eigen(&cov, p)?;
    let mut basis = vec![0.0; p * d];
    for (j, v) in eig.vectors.iter().take(d).enumerate() {
        let lead = v
            .iter()
            .copied()
            .fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
        let sign = if lead < 0.0 { -1.0 } else { 1.0 };
        for i in 0..p {
            basis[i * d + j] = sign * v[i];
        }
    }
    Ok(Pca {
        mean,
        basis,
        eigenvalues: eig.values[..d].to_vec(),
        input_dim: p,
        output_dim: d,
    })
}

impl Pca {
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let d = self.output_dim;
        let mut z = vec![0.0; d];
        for (i, (xi, mi)) in x.iter().zip(&self.mean).enumerate() {
            let c = xi - mi;
            if c == 0.0 {
                continue;
            }
            for (zj, bj) in z.iter_mut().zip(&self.basis[i * d..(i + 1) * d]) {
                *zj += c * bj;
            }
        }
        z
    }

    pub fn reconstruct(&self, z: &[f64]) -> Vec<f64> {
        let d = self.output_dim;
        (0..self.input_dim)
            .map(|i| {
                self.mean[i]
                    + self.basis[i * d..(i + 1) * d]
                        .iter()
                        .zip(z)
                        .map(|(b, zj)| b * zj)
                        .sum::<f64>()
            })
            .collect()
    }
}
