//! Binary model container.
//!
//! ```text
//! "EMN1"  u16 version  u8 kind (0 cnn, 1 lda)  u64 seed  u32 input side
//! u16 layer count,  per layer: u8 code, u32 a, u32 b
//! u16 tensor count, per tensor: u8 rank, rank × u32 extent, f32 values
//! ```
//! All integers and floats are little-endian. Layer codes: 0 conv (a =
//! kernel, b = filters), 1 maxpool, 2 dense (a = units), 3 sigmoid,
//! 4 softmax. A PCA+LDA model has no layers and stores, in order: PCA mean
//! `[p]`, basis `[p, d]`, eigenvalues `[d]`, class means `[K, d]`, covariance
//! `[d, d]`, priors `[K]`, regularizer `[1]`.

use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::classify::{
    ClassifyError, CnnModel, EmotionClassifier, EmotionScores, LdaModel, LdaParams, Pca,
};
use crate::nn::{LayerSpec, Network, NnError, Tensor};
use crate::preprocess::Roi;

pub const MAGIC: &[u8; 4] = b"EMN1";
pub const VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("model file version {0} is not supported (expected {VERSION})")]
    VersionUnsupported(u16),
    #[error("model file is truncated")]
    TruncatedPayload,
    #[error("malformed model file: {0}")]
    Malformed(String),
    #[error("{0} unexpected bytes after the last tensor")]
    TrailingBytes(usize),
    #[error("model parameters are inconsistent: {0}")]
    Nn(#[from] NnError),
    #[error("model parameters are inconsistent: {0}")]
    Classify(#[from] ClassifyError),
}

type Result<T> = std::result::Result<T, ModelFileError>;

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Cnn(CnnModel),
    Lda(LdaModel),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Cnn(_) => "cnn",
            Model::Lda(_) => "lda",
        }
    }
}

impl EmotionClassifier for Model {
    fn roi_size(&self) -> usize {
        match self {
            Model::Cnn(m) => m.roi_size(),
            Model::Lda(m) => m.roi_size(),
        }
    }

    fn classify(&self, roi: &Roi) -> crate::classify::Result<EmotionScores> {
        match self {
            Model::Cnn(m) => m.classify(roi),
            Model::Lda(m) => m.classify(roi),
        }
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: usize) {
        let v = u32::try_from(v).expect("extent fits in u32");
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn tensor(&mut self, shape: &[usize], values: impl Iterator<Item = f32>) {
        self.u8(shape.len() as u8);
        for &e in shape {
            self.u32(e);
        }
        for v in values {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
}

pub fn save_model(model: &Model) -> Vec<u8> {
    let mut w = Writer(MAGIC.to_vec());
    w.u16(VERSION);
    match model {
        Model::Cnn(m) => {
            let net = m.network();
            w.u8(0);
            w.0.extend_from_slice(&m.seed().to_le_bytes());
            w.u32(m.roi_size());
            w.u16(net.specs().len() as u16);
            for spec in net.specs() {
                let (code, a, b) = match *spec {
                    LayerSpec::Conv { kernel, filters } => (0, kernel, filters),
                    LayerSpec::MaxPool => (1, 0, 0),
                    LayerSpec::Dense { units } => (2, units, 0),
                    LayerSpec::Sigmoid => (3, 0, 0),
                    LayerSpec::Softmax => (4, 0, 0),
                };
                w.u8(code);
                w.u32(a);
                w.u32(b);
            }
            let params = net.params();
            w.u16(params.len() as u16);
            for t in params {
                w.tensor(t.shape(), t.data().iter().copied());
            }
        }
        Model::Lda(m) => {
            w.u8(1);
            w.0.extend_from_slice(&0u64.to_le_bytes());
            w.u32(m.roi_size());
            w.u16(0);
            let pca = m.pca();
            let params = m.params();
            let (p, d, k) = (pca.input_dim, pca.output_dim, params.classes());
            let narrow = |v: &[f64]| v.iter().map(|&x| x as f32).collect::<Vec<f32>>();
            w.u16(7);
            w.tensor(&[p], narrow(&pca.mean).into_iter());
            w.tensor(&[p, d], narrow(&pca.basis).into_iter());
            w.tensor(&[d], narrow(&pca.eigenvalues).into_iter());
            let means: Vec<f64> = params.class_means.concat();
            w.tensor(&[k, d], narrow(&means).into_iter());
            w.tensor(&[d, d], narrow(&params.covariance).into_iter());
            w.tensor(&[k], narrow(&params.priors).into_iter());
            w.tensor(&[1], std::iter::once(params.lambda as f32));
        }
    }
    w.0
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(ModelFileError::TruncatedPayload)?;
        let s = self.bytes.get(self.pos..end).ok_or(ModelFileError::TruncatedPayload)?;
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn tensor(&mut self) -> Result<(Vec<usize>, Vec<f32>)> {
        let rank = self.u8()? as usize;
        if rank == 0 || rank > 4 {
            return Err(ModelFileError::Malformed(format!("tensor rank {rank}")));
        }
        let shape = (0..rank).map(|_| self.u32()).collect::<Result<Vec<_>>>()?;
        let count = shape
            .iter()
            .try_fold(1usize, |acc, &e| acc.checked_mul(e))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| ModelFileError::Malformed("tensor too large".into()))?;
        let raw = self.take(count)?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Ok((shape, values))
    }
}

fn expect_shape(got: &[usize], want: &[usize], what: &str) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(ModelFileError::Malformed(format!("{what} has shape {got:?}, expected {want:?}")))
    }
}

pub fn load_model(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4).map_err(|_| ModelFileError::BadMagic)? != MAGIC {
        return Err(ModelFileError::BadMagic);
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(ModelFileError::VersionUnsupported(version));
    }
    let kind = r.u8()?;
    let seed = r.u64()?;
    let side = r.u32()?;
    let layer_count = r.u16()? as usize;
    let mut specs = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let (code, a, b) = (r.u8()?, r.u32()?, r.u32()?);
        specs.push(match code {
            0 => LayerSpec::Conv { kernel: a, filters: b },
            1 => LayerSpec::MaxPool,
            2 => LayerSpec::Dense { units: a },
            3 => LayerSpec::Sigmoid,
            4 => LayerSpec::Softmax,
            other => return Err(ModelFileError::Malformed(format!("layer code {other}"))),
        });
    }
    let tensor_count = r.u16()? as usize;
    let tensors = (0..tensor_count).map(|_| r.tensor()).collect::<Result<Vec<_>>>()?;
    if r.pos != bytes.len() {
        return Err(ModelFileError::TrailingBytes(bytes.len() - r.pos));
    }
    match kind {
        0 => {
            let params = tensors
                .into_iter()
                .map(|(shape, values)| Tensor::new(&shape, values))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let net = Network::from_params([side, side, 1], &specs, params)?;
            if !net.params().iter().all(|t| t.all_finite()) {
                return Err(ModelFileError::Malformed("non-finite parameter".into()));
            }
            Ok(Model::Cnn(CnnModel::from_network(net, seed)?))
        }
        1 => {
            if !specs.is_empty() || tensors.len() != 7 {
                return Err(ModelFileError::Malformed("lda model layout".into()));
            }
            let wide = |v: &[f32]| v.iter().map(|&x| x as f64).collect::<Vec<f64>>();
            let p = side * side;
            let [mean, basis, eig, means, cov, priors, lambda]: [(Vec<usize>, Vec<f32>); 7] =
                tensors.try_into().expect("length checked");
            expect_shape(&mean.0, &[p], "pca mean")?;
            let d = *basis.0.get(1).unwrap_or(&0);
            expect_shape(&basis.0, &[p, d], "pca basis")?;
            expect_shape(&eig.0, &[d], "eigenvalues")?;
            let k = means.0[0];
            expect_shape(&means.0, &[k, d], "class means")?;
            expect_shape(&cov.0, &[d, d], "covariance")?;
            expect_shape(&priors.0, &[k], "priors")?;
            expect_shape(&lambda.0, &[1], "regularizer")?;
            let pca = Pca {
                mean: wide(&mean.1),
                basis: wide(&basis.1),
                eigenvalues: wide(&eig.1),
                input_dim: p,
                output_dim: d,
            };
            let params = LdaParams {
                class_means: means.1.chunks(d.max(1)).map(wide).collect(),
                covariance: wide(&cov.1),
                priors: wide(&priors.1),
                lambda: lambda.1[0] as f64,
            };
            Ok(Model::Lda(LdaModel::from_parts(pca, params, side)?))
        }
        other => Err(ModelFileError::Malformed(format!("model kind {other}"))),
    }
}

/// Writes through a temporary file in the same directory and renames it into
/// place, so readers never see a partial model.
pub fn write_model_file(path: &Path, model: &Model) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(&save_model(model))?;
    tmp.as_file().sync_all()?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file().set_permissions(std::fs::Permissions::from_mode(0o644))?;
    }
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
