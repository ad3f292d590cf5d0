use super::linalg::{cholesky, forward_substitute, symmetric_eigen};
use super::pca::{pca_fit, Pca};
use super::{ClassifyError, EmotionLabel, EmotionScores, Result};

/// Gaussian class-conditional parameters with one shared covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct LdaParams {
    pub class_means: Vec<Vec<f64>>,
    /// `d×d` row-major, pooled within-class covariance plus `lambda·I`.
    pub covariance: Vec<f64>,
    pub priors: Vec<f64>,
    pub lambda: f64,
}

/// Fits class means, pooled covariance and frequency priors to projected
/// samples `z` with labels `y ∈ 0..classes`.
pub fn lda_fit(z: &[Vec<f64>], y: &[usize], classes: usize, lambda: f64) -> Result<LdaParams> {
    if z.len() != y.len() || z.is_empty() {
        return Err(ClassifyError::InvalidArgument(format!(
            "{} samples but {} labels",
            z.len(),
            y.len()
        )));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(ClassifyError::InvalidArgument(format!(
            "regularizer must be positive, got {lambda}"
        )));
    }
    let d = z[0].len();
    if d == 0 || z.iter().any(|r| r.len() != d) {
        return Err(ClassifyError::InvalidArgument("ragged projected data".into()));
    }
    let mut counts = vec![0usize; classes];
    for &label in y {
        if label >= classes {
            return Err(ClassifyError::InvalidArgument(format!(
                "label {label} outside 0..{classes}"
            )));
        }
        counts[label] += 1;
    }
    if let Some((class, &count)) = counts.iter().enumerate().find(|(_, &c)| c < 2) {
        return Err(ClassifyError::ClassTooSmall { class, count });
    }
    let n = z.len();
    let mut means = vec![vec![0.0; d]; classes];
    for (row, &label) in z.iter().zip(y) {
        for (m, v) in means[label].iter_mut().zip(row) {
            *m += v;
        }
    }
    for (m, &c) in means.iter_mut().zip(&counts) {
        for v in m.iter_mut() {
            *v /= c as f64;
        }
    }
    let mut cov = vec![0.0; d * d];
    let mut diff = vec![0.0; d];
    for (row, &label) in z.iter().zip(y) {
        for ((o, v), m) in diff.iter_mut().zip(row).zip(&means[label]) {
            *o = v - m;
        }
        for i in 0..d {
            for j in i..d {
                cov[i * d + j] += diff[i] * diff[j];
            }
        }
    }
    let dof = (n - classes).max(1) as f64;
    for i in 0..d {
        for j in i..d {
            let v = cov[i * d + j] / dof + if i == j { lambda } else { 0.0 };
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }
    Ok(LdaParams {
        class_means: means,
        covariance: cov,
        priors: counts.iter().map(|&c| c as f64 / n as f64).collect(),
        lambda,
    })
}

/// Default regularizer: `1e-3·trace(S)/d` of the unregularized pooled
/// covariance, or `1e-6` if that trace is zero.
pub fn default_lambda(z: &[Vec<f64>], y: &[usize], classes: usize) -> Result<f64> {
    let tiny = lda_fit(z, y, classes, f64::MIN_POSITIVE)?;
    let d = tiny.class_means[0].len();
    let trace: f64 = (0..d).map(|i| tiny.covariance[i * d + i]).sum();
    Ok(if trace > 0.0 { 1e-3 * trace / d as f64 } else { 1e-6 })
}

impl LdaParams {
    pub fn classes(&self) -> usize {
        self.priors.len()
    }

    pub fn dim(&self) -> usize {
        self.class_means.first().map_or(0, Vec::len)
    }

    /// Checks the model invariants and returns the Cholesky factor of the
    /// covariance. `tolerance` bounds prior-sum and symmetry error.
    fn validate(&self, tolerance: f64) -> Result<Vec<f64>> {
        let k = self.classes();
        let d = self.dim();
        if k < 2 || d == 0 || self.class_means.len() != k {
            return Err(ClassifyError::InvalidArgument(format!(
                "need at least 2 classes of positive dimension, got {k}x{d}"
            )));
        }
        if self.class_means.iter().any(|m| m.len() != d) || self.covariance.len() != d * d {
            return Err(ClassifyError::InvalidArgument("inconsistent lda shapes".into()));
        }
        if self.priors.iter().any(|&p| !(p >= 0.0)) {
            return Err(ClassifyError::InvalidArgument("negative prior".into()));
        }
        let sum: f64 = self.priors.iter().sum();
        if (sum - 1.0).abs() > tolerance {
            return Err(ClassifyError::InvalidArgument(format!("priors sum to {sum}")));
        }
        for i in 0..d {
            for j in 0..i {
                if (self.covariance[i * d + j] - self.covariance[j * d + i]).abs() > tolerance {
                    return Err(ClassifyError::InvalidArgument("covariance not symmetric".into()));
                }
            }
        }
        cholesky(&self.covariance, d)
    }

    /// Smallest eigenvalue of the covariance.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let e = symmetric_eigen(&self.covariance, self.dim())?;
        Ok(*e.values.last().expect("nonempty"))
    }
}

/// Posterior `π_k f_k(z) / Σ_l π_l f_l(z)` from a precomputed Cholesky factor.
fn posterior_with(params: &LdaParams, chol: &[f64], z: &[f64]) -> Vec<f64> {
    let d = params.dim();
    let mut diff = vec![0.0; d];
    let log_terms: Vec<f64> = params
        .class_means
        .iter()
        .zip(&params.priors)
        .map(|(mean, &prior)| {
            for ((o, a), b) in diff.iter_mut().zip(z).zip(mean) {
                *o = a - b;
            }
            let w = forward_substitute(chol, d, &diff);
            let q: f64 = w.iter().map(|v| v * v).sum();
            // the shared normalizing constant cancels
            prior.ln() - 0.5 * q
        })
        .collect();
    let top = log_terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_terms.iter().map(|&t| (t - top).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// Posterior over classes for one projected sample.
pub fn lda_posterior(params: &LdaParams, z: &[f64]) -> Result<Vec<f64>> {
    let chol = params.validate(1e-9)?;
    if z.len() != params.dim() {
        return Err(ClassifyError::InvalidArgument(format!(
            "sample has {} components, model expects {}",
            z.len(),
            params.dim()
        )));
    }
    Ok(posterior_with(params, &chol, z))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[derive(Default)]
pub struct LdaConfig {
    /// PCA target dimension; defaults to `min(4·K, p)` clipped to `n − 1`.
    pub dim: Option<usize>,
    /// Covariance regularizer; defaults to [`default_lambda`].
    pub lambda: Option<f64>,
}


/// PCA projection followed by the shared-covariance Gaussian classifier.
#[derive(Debug, Clone)]
pub struct LdaModel {
    pca: Pca,
    params: LdaParams,
    roi_size: usize,
    chol: Vec<f64>,
}

impl PartialEq for LdaModel {
    fn eq(&self, other: &Self) -> bool {
        self.pca == other.pca && self.params == other.params && self.roi_size == other.roi_size
    }
}

impl LdaModel {
    /// Fits PCA on `rows` (each of length `roi_size²`), then LDA on the
    /// projections.
    pub fn fit(rows: &[Vec<f64>], labels: &[usize], roi_size: usize, config: LdaConfig) -> Result<Self> {
        let classes = EmotionLabel::COUNT;
        if rows.is_empty() {
            return Err(ClassifyError::EmptyDataset);
        }
        let p = roi_size * roi_size;
        if rows.iter().any(|r| r.len() != p) {
            return Err(ClassifyError::InvalidArgument(format!(
                "rows must have {p} pixels for roi size {roi_size}"
            )));
        }
        let dim = config
            .dim
            .unwrap_or_else(|| (4 * classes).min(p).min(rows.len().saturating_sub(1)).max(1));
        let pca = pca_fit(rows, dim)?;
        let z: Vec<Vec<f64>> = rows.iter().map(|r| pca.project(r)).collect();
        let lambda = match config.lambda {
            Some(l) => l,
            None => default_lambda(&z, labels, classes)?,
        };
        let params = lda_fit(&z, labels, classes, lambda)?;
        Self::from_parts(pca, params, roi_size)
    }

    /// Assembles a model from stored parts, checking its invariants. Parts
    /// that went through 32-bit storage are accepted with a loose tolerance.
    pub fn from_parts(pca: Pca, params: LdaParams, roi_size: usize) -> Result<Self> {
        let p = roi_size * roi_size;
        if pca.input_dim != p || pca.mean.len() != p || pca.basis.len() != p * pca.output_dim {
            return Err(ClassifyError::InvalidArgument(format!(
                "pca shape does not match roi size {roi_size}"
            )));
        }
        if pca.output_dim != params.dim() {
            return Err(ClassifyError::InvalidArgument(format!(
                "pca yields {} components, lda expects {}",
                pca.output_dim,
                params.dim()
            )));
        }
        if params.classes() != EmotionLabel::COUNT {
            return Err(ClassifyError::InvalidArgument(format!(
                "lda has {} classes, expected {}",
                params.classes(),
                EmotionLabel::COUNT
            )));
        }
        let d = pca.output_dim;
        for a in 0..d {
            for b in a..d {
                let dot: f64 = (0..p).map(|i| pca.basis[i * d + a] * pca.basis[i * d + b]).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                if (dot - want).abs() > 1e-5 {
                    return Err(ClassifyError::InvalidArgument(format!(
                        "pca basis columns {a},{b} not orthonormal ({dot})"
                    )));
                }
            }
        }
        let chol = params.validate(1e-5)?;
        Ok(LdaModel { pca, params, roi_size, chol })
    }

    /// Rounds every parameter through `f32`, the precision of the model file,
    /// so that a saved and reloaded model predicts bit-identically.
    pub fn quantized(&self) -> Result<Self> {
        let q = |v: &[f64]| v.iter().map(|&x| x as f32 as f64).collect::<Vec<f64>>();
        let pca = Pca {
            mean: q(&self.pca.mean),
            basis: q(&self.pca.basis),
            eigenvalues: q(&self.pca.eigenvalues),
            input_dim: self.pca.input_dim,
            output_dim: self.pca.output_dim,
        };
        let params = LdaParams {
            class_means: self.params.class_means.iter().map(|m| q(m)).collect(),
            covariance: q(&self.params.covariance),
            priors: q(&self.params.priors),
            lambda: self.params.lambda as f32 as f64,
        };
        Self::from_parts(pca, params, self.roi_size)
    }

    pub fn pca(&self) -> &Pca {
        &self.pca
    }

    pub fn params(&self) -> &LdaParams {
        &self.params
    }

    pub fn roi_size(&self) -> usize {
        self.roi_size
    }

    pub fn posterior(&self, z: &[f64]) -> Vec<f64> {
        posterior_with(&self.params, &self.chol, z)
    }

    pub fn predict_pixels(&self, pixels: &[f64]) -> Result<EmotionScores> {
        if pixels.len() != self.pca.input_dim {
            return Err(ClassifyError::InvalidArgument(format!(
                "expected {} pixels, got {}",
                self.pca.input_dim,
                pixels.len()
            )));
        }
        EmotionScores::new(&self.posterior(&self.pca.project(pixels)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::XorShift64;

    fn gauss(rng: &mut XorShift64) -> f64 {
        // Box–Muller
        let u = rng.next_f64().max(1e-300);
        let v = rng.next_f64();
        (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
    }

    /// Gauss–Jordan inverse and determinant with partial pivoting.
    fn invert(a: &[f64], n: usize) -> (Vec<f64>, f64) {
        let mut m = a.to_vec();
        let mut inv = vec![0.0; n * n];
        for i in 0..n {
            inv[i * n + i] = 1.0;
        }
        let mut det = 1.0;
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&x, &y| m[x * n + col].abs().total_cmp(&m[y * n + col].abs()))
                .unwrap();
            if pivot != col {
                for k in 0..n {
                    m.swap(col * n + k, pivot * n + k);
                    inv.swap(col * n + k, pivot * n + k);
                }
                det = -det;
            }
            let pv = m[col * n + col];
            det *= pv;
            for k in 0..n {
                m[col * n + k] /= pv;
                inv[col * n + k] /= pv;
            }
            for r in 0..n {
                if r != col {
                    let f = m[r * n + col];
                    for k in 0..n {
                        m[r * n + k] -= f * m[col * n + k];
                        inv[r * n + k] -= f * inv[col * n + k];
                    }
                }
            }
        }
        (inv, det)
    }

    /// Bayes rule with explicit multivariate normal densities.
    fn bayes_oracle(params: &LdaParams, z: &[f64]) -> Vec<f64> {
        let d = params.dim();
        let (inv, det) = invert(&params.covariance, d);
        let norm = ((2.0 * std::f64::consts::PI).powi(d as i32) * det).sqrt();
        let dens: Vec<f64> = params
            .class_means
            .iter()
            .zip(&params.priors)
            .map(|(mu, &pi)| {
                let diff: Vec<f64> = z.iter().zip(mu).map(|(a, b)| a - b).collect();
                let mut q = 0.0;
                for i in 0..d {
                    for j in 0..d {
                        q += diff[i] * inv[i * d + j] * diff[j];
                    }
                }
                pi * (-0.5 * q).exp() / norm
            })
            .collect();
        let total: f64 = dens.iter().sum();
        dens.iter().map(|v| v / total).collect()
    }

    fn random_params(rng: &mut XorShift64, k: usize, d: usize) -> LdaParams {
        let mut a = vec![0.0; d * d];
        for v in &mut a {
            *v = rng.uniform(-1.0, 1.0);
        }
        let mut cov = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] = (0..d).map(|t| a[i * d + t] * a[j * d + t]).sum::<f64>()
                    + if i == j { 0.5 } else { 0.0 };
            }
        }
        let raw: Vec<f64> = (0..k).map(|_| rng.uniform(0.1, 1.0)).collect();
        let s: f64 = raw.iter().sum();
        LdaParams {
            class_means: (0..k).map(|_| (0..d).map(|_| rng.uniform(-2.0, 2.0)).collect()).collect(),
            covariance: cov,
            priors: raw.iter().map(|v| v / s).collect(),
            lambda: 0.5,
        }
    }

    #[test]
    fn posterior_matches_bayes_oracle() {
        let mut rng = XorShift64::new(11);
        for _ in 0..1000 {
            let k = 2 + rng.below(6);
            let d = 1 + rng.below(5);
            let params = random_params(&mut rng, k, d);
            let z: Vec<f64> = (0..d).map(|_| rng.uniform(-3.0, 3.0)).collect();
            let got = lda_posterior(&params, &z).unwrap();
            let want = bayes_oracle(&params, &z);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-10, "{got:?} vs {want:?}");
            }
            assert!((got.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn prior_scaling_invariance() {
        let mut rng = XorShift64::new(12);
        let params = random_params(&mut rng, 4, 3);
        let z = [0.3, -0.1, 1.2];
        let base = lda_posterior(&params, &z).unwrap();
        // π·c renormalized is π again; check the unnormalized path agrees
        let scaled: Vec<f64> = params.priors.iter().map(|p| p * 3.7).collect();
        let s: f64 = scaled.iter().sum();
        let params2 = LdaParams { priors: scaled.iter().map(|p| p / s).collect(), ..params };
        let again = lda_posterior(&params2, &z).unwrap();
        for (a, b) in base.iter().zip(&again) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn far_samples_do_not_underflow() {
        let mut rng = XorShift64::new(13);
        let params = random_params(&mut rng, 3, 2);
        let post = lda_posterior(&params, &[1e4, -1e4]).unwrap();
        assert!(post.iter().all(|p| p.is_finite()));
        assert!((post.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_clusters() {
        let mut z = Vec::new();
        let mut y = Vec::new();
        for &(dx, dy) in &[(0.5, 0.2), (-0.5, 0.1), (0.1, -0.4), (0.0, 0.3)] {
            z.push(vec![3.0 + dx, dy]);
            y.push(0);
            z.push(vec![-3.0 - dx, -dy]);
            y.push(1);
        }
        let params = lda_fit(&z, &y, 2, 1e-3).unwrap();
        assert_eq!(params.priors, vec![0.5, 0.5]);
        for i in 0..2 {
            assert!((params.class_means[0][i] + params.class_means[1][i]).abs() < 1e-9);
        }
        let post = lda_posterior(&params, &[0.0, 0.0]).unwrap();
        assert!((post[0] - 0.5).abs() < 1e-12);
        let at_mean = lda_posterior(&params, &params.class_means[0]).unwrap();
        assert!(at_mean[0] > 0.99);
    }

    #[test]
    fn pooled_covariance_matches_naive_sum() {
        let mut rng = XorShift64::new(14);
        let d = 4;
        let k = 3;
        let mut z = Vec::new();
        let mut y = Vec::new();
        for i in 0..40 {
            let label = i % k;
            y.push(label);
            z.push((0..d).map(|j| gauss(&mut rng) + (label * j) as f64).collect::<Vec<_>>());
        }
        let lambda = 0.25;
        let params = lda_fit(&z, &y, k, lambda).unwrap();
        for a in 0..d {
            for b in 0..d {
                let mut s = 0.0;
                for c in 0..k {
                    let members: Vec<&Vec<f64>> =
                        z.iter().zip(&y).filter(|(_, &l)| l == c).map(|(r, _)| r).collect();
                    let n = members.len() as f64;
                    let ma = members.iter().map(|r| r[a]).sum::<f64>() / n;
                    let mb = members.iter().map(|r| r[b]).sum::<f64>() / n;
                    s += members.iter().map(|r| (r[a] - ma) * (r[b] - mb)).sum::<f64>();
                }
                let want = s / (z.len() - k) as f64 + if a == b { lambda } else { 0.0 };
                assert!((params.covariance[a * d + b] - want).abs() < 1e-10);
            }
        }
        assert!(params.min_eigenvalue().unwrap() >= lambda - 1e-12);
    }

    #[test]
    fn large_lambda_tends_to_nearest_mean() {
        let mut rng = XorShift64::new(15);
        let z: Vec<Vec<f64>> = (0..30).map(|_| vec![gauss(&mut rng), gauss(&mut rng)]).collect();
        let y: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let params = lda_fit(&z, &y, 3, 1e6).unwrap();
        let d = 2;
        for i in 0..d {
            assert!((params.covariance[i * d + i] / 1e6 - 1.0).abs() < 1e-5);
        }
        for _ in 0..50 {
            let x = [rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)];
            let post = lda_posterior(&params, &x).unwrap();
            let nearest = (0..3)
                .min_by(|&a, &b| {
                    let da: f64 = (0..2).map(|i| (x[i] - params.class_means[a][i]).powi(2)).sum();
                    let db: f64 = (0..2).map(|i| (x[i] - params.class_means[b][i]).powi(2)).sum();
                    da.total_cmp(&db)
                })
                .unwrap();
            // posteriors become flat; the ordering still follows distance
            // once priors (all 1/3 here) are equal
            let best = (0..3).max_by(|&a, &b| post[a].total_cmp(&post[b])).unwrap();
            assert_eq!(best, nearest);
        }
    }

    #[test]
    fn class_too_small_and_bad_lambda() {
        let z = vec![vec![0.0], vec![1.0], vec![2.0]];
        assert!(matches!(
            lda_fit(&z, &[0, 0, 1], 2, 1.0),
            Err(ClassifyError::ClassTooSmall { class: 1, count: 1 })
        ));
        assert!(lda_fit(&z, &[0, 0, 1], 2, 0.0).is_err());
    }

    #[test]
    fn quantized_model_is_stable() {
        let mut rng = XorShift64::new(16);
        let side = 4;
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..70 {
            let label = i % 7;
            labels.push(label);
            rows.push(
                (0..side * side)
                    .map(|j| if j % 7 == label { 0.8 } else { 0.1 } + 0.05 * gauss(&mut rng))
                    .collect::<Vec<f64>>(),
            );
        }
        let model = LdaModel::fit(&rows, &labels, side, LdaConfig::default()).unwrap();
        let q = model.quantized().unwrap();
        assert_eq!(q, q.quantized().unwrap());
        for r in &rows {
            let a = model.predict_pixels(r).unwrap();
            let b = q.predict_pixels(r).unwrap();
            for (x, y) in a.probs().iter().zip(b.probs()) {
                assert!((x - y).abs() < 1e-3);
            }
        }
    }
}
