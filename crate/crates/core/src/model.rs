//! Trained link-prediction model and its on-disk format.
//!
//! `model.bin` layout (little endian):
//!
//! ```text
//! b"MISTLINK" | u32 format version | u64 header length | header JSON | f64 parameter blob
//! ```
//!
//! The JSON header carries the model kind, encoder settings, training config,
//! loss trace, threshold tables and the frozen link index; the blob holds the
//! projection weights/biases and the TuckER core in [`KgeModel::params_mut`]
//! order.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderSpec, FeatureVector, ProjectionEncoder};
use crate::error::{Error, Result};
use crate::kge::{CoreTensor, ModelKind, EMBED_DIM};
use crate::predictor::{LinkIndex, Mode, ThresholdTable};
use crate::trainer::TrainConfig;

const MAGIC: &[u8; 8] = b"MISTLINK";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct KgeModel {
    pub kind: ModelKind,
    pub encoder: EncoderSpec,
    /// T-KEPE
    pub tweet_proj: ProjectionEncoder,
    /// M-KEPE; zero rows for KNN.
    pub mist_proj: ProjectionEncoder,
    pub core: Option<CoreTensor>,
    pub config: TrainConfig,
    pub loss_trace: Vec<f64>,
    pub thresholds: BTreeMap<Mode, ThresholdTable>,
    /// Embeddings frozen at calibration time, used for prediction.
    pub index: Option<LinkIndex>,
}

impl KgeModel {
    /// Random projections (Glorot uniform) and, for TuckER, a core tensor
    /// drawn uniformly from [-0.1, 0.1].
    pub fn init<R: Rng>(kind: ModelKind, encoder: EncoderSpec, in_dim: usize, config: TrainConfig, rng: &mut R) -> Self {
        let tweet_proj = ProjectionEncoder::random(kind.tweet_dim(), in_dim, rng);
        let mist_proj = ProjectionEncoder::random(kind.mist_dim(), in_dim, rng);
        let core = kind.has_core().then(|| {
            let data = (0..EMBED_DIM * EMBED_DIM * EMBED_DIM).map(|_| rng.gen_range(-0.1..=0.1)).collect();
            CoreTensor::from_vec(EMBED_DIM, EMBED_DIM, data).expect("shape is fixed")
        });
        Self {
            kind,
            encoder,
            tweet_proj,
            mist_proj,
            core,
            config,
            loss_trace: Vec::new(),
            thresholds: BTreeMap::new(),
            index: None,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.tweet_proj.in_dim()
    }

    pub fn tweet_embedding(&self, f: &FeatureVector) -> Result<Vec<f64>> {
        crate::encoder::project_tweet(&self.tweet_proj, f, self.kind.tweet_dim())
    }

    pub fn mist_embedding(&self, f: &FeatureVector) -> Result<Vec<f64>> {
        crate::encoder::project_mist(&self.mist_proj, f, self.kind.mist_dim())
    }

    /// Score one link from precomputed embeddings.
    pub fn score(&self, te_i: &[f64], me_j: &[f64], te_k: &[f64]) -> Result<f64> {
        crate::kge::score(self.kind, self.core.as_ref(), te_i, me_j, te_k)
    }

    pub fn param_shapes(&self) -> Vec<usize> {
        let mut shapes = vec![
            self.tweet_proj.weight.len(),
            self.tweet_proj.bias.len(),
            self.mist_proj.weight.len(),
            self.mist_proj.bias.len(),
        ];
        if let Some(core) = &self.core {
            shapes.push(core.data.len());
        }
        shapes
    }

    /// Trainable buffers: T-KEPE weight, T-KEPE bias, M-KEPE weight, M-KEPE
    /// bias, then the TuckER core if present.
    pub fn params_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = vec![
            &mut self.tweet_proj.weight,
            &mut self.tweet_proj.bias,
            &mut self.mist_proj.weight,
            &mut self.mist_proj.bias,
        ];
        if let Some(core) = &mut self.core {
            out.push(&mut core.data);
        }
        out
    }

    pub fn params(&self) -> Vec<&Vec<f64>> {
        let mut out = vec![
            &self.tweet_proj.weight,
            &self.tweet_proj.bias,
            &self.mist_proj.weight,
            &self.mist_proj.bias,
        ];
        if let Some(core) = &self.core {
            out.push(&core.data);
        }
        out
    }

    pub fn zero_grad(&self) -> ModelGrad {
        ModelGrad {
            buffers: self.param_shapes().into_iter().map(|n| vec![0.0; n]).collect(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = ModelHeader {
            kind: self.kind,
            encoder: self.encoder.clone(),
            feature_dim: self.feature_dim(),
            param_shapes: self.param_shapes(),
            config: self.config.clone(),
            loss_trace: self.loss_trace.clone(),
            thresholds: self.thresholds.clone(),
            index: self.index.clone(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::ModelFormat(e.to_string()))?;
        let n_floats: usize = header.param_shapes.iter().sum();
        let mut out = Vec::with_capacity(8 + 4 + 8 + json.len() + 8 * n_floats);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&MODEL_FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for buf in self.params() {
            for v in buf {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::ModelFormat(m.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("missing MISTLINK magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != MODEL_FORMAT_VERSION {
            return Err(Error::ModelFormat(format!("unsupported version {version}")));
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let header_end = 20usize.checked_add(header_len).ok_or_else(|| bad("header length overflow"))?;
        if bytes.len() < header_end {
            return Err(bad("truncated header"));
        }
        let header: ModelHeader =
            serde_json::from_slice(&bytes[20..header_end]).map_err(|e| Error::ModelFormat(e.to_string()))?;
        let blob = &bytes[header_end..];
        let n_floats: usize = header.param_shapes.iter().sum();
        if blob.len() != 8 * n_floats {
            return Err(bad("parameter blob has the wrong length"));
        }
        let floats: Vec<f64> = blob
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let kind = header.kind;
        let expected = {
            let d = header.feature_dim;
            let mut s = vec![kind.tweet_dim() * d, kind.tweet_dim(), kind.mist_dim() * d, kind.mist_dim()];
            if kind.has_core() {
                s.push(EMBED_DIM * EMBED_DIM * EMBED_DIM);
            }
            s
        };
        if expected != header.param_shapes {
            return Err(bad("parameter shapes do not match the model kind"));
        }
        let mut parts = Vec::new();
        let mut offset = 0;
        for n in &header.param_shapes {
            parts.push(floats[offset..offset + n].to_vec());
            offset += n;
        }
        let mut parts = parts.into_iter();
        let d = header.feature_dim;
        let mut next = || parts.next().expect("shape count checked");
        let tweet_proj = ProjectionEncoder::from_parts(kind.tweet_dim(), d, next(), next())?;
        let mist_proj = ProjectionEncoder::from_parts(kind.mist_dim(), d, next(), next())?;
        let core = if kind.has_core() {
            Some(CoreTensor::from_vec(EMBED_DIM, EMBED_DIM, next())?)
        } else {
            None
        };
        Ok(Self {
            kind,
            encoder: header.encoder,
            tweet_proj,
            mist_proj,
            core,
            config: header.config,
            loss_trace: header.loss_trace,
            thresholds: header.thresholds,
            index: header.index,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelHeader {
    kind: ModelKind,
    encoder: EncoderSpec,
    feature_dim: usize,
    param_shapes: Vec<usize>,
    config: TrainConfig,
    loss_trace: Vec<f64>,
    thresholds: BTreeMap<Mode, ThresholdTable>,
    index: Option<LinkIndex>,
}

/// Gradient buffers shaped like [`KgeModel::params_mut`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrad {
    pub buffers: Vec<Vec<f64>>,
}

impl ModelGrad {
    pub fn accumulate_tweet(&mut self, model: &KgeModel, f: &FeatureVector, upstream: &[f64]) {
        let (w, rest) = self.buffers.split_at_mut(1);
        model.tweet_proj.accumulate_grad(f, upstream, &mut w[0], &mut rest[0]);
    }

    pub fn accumulate_mist(&mut self, model: &KgeModel, f: &FeatureVector, upstream: &[f64]) {
        let (w, rest) = self.buffers[2..].split_at_mut(1);
        model.mist_proj.accumulate_grad(f, upstream, &mut w[0], &mut rest[0]);
    }

    pub fn accumulate_core(&mut self, g: &[f64]) {
        if let Some(core) = self.buffers.get_mut(4) {
            core.iter_mut().zip(g).for_each(|(a, b)| *a += b);
        }
    }

    pub fn into_buffers(self) -> Vec<Vec<f64>> {
        self.buffers
    }

    pub fn flat(&self) -> Vec<f64> {
        self.buffers.iter().flatten().copied().collect()
    }
}

/// Number of scalar parameters.
pub fn param_count(model: &KgeModel) -> usize {
    model.param_shapes().iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small(kind: ModelKind) -> KgeModel {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        KgeModel::init(kind, EncoderSpec::Hashed { dim: 16, seed: 1 }, 16, TrainConfig::default(), &mut rng)
    }

    #[test]
    fn shapes_per_kind() {
        assert_eq!(small(ModelKind::TransE).param_shapes(), vec![128, 8, 128, 8]);
        assert_eq!(small(ModelKind::TransD).param_shapes(), vec![256, 16, 256, 16]);
        assert_eq!(small(ModelKind::TransMS).param_shapes(), vec![128, 8, 144, 9]);
        assert_eq!(small(ModelKind::TuckER).param_shapes(), vec![128, 8, 128, 8, 512]);
        assert_eq!(small(ModelKind::Knn).param_shapes(), vec![128, 8, 0, 0]);
    }

    #[test]
    fn tucker_core_init_range() {
        let m = small(ModelKind::TuckER);
        assert!(m.core.unwrap().data.iter().all(|v| (-0.1..=0.1).contains(v)));
    }

    #[test]
    fn bytes_round_trip() {
        for kind in ModelKind::ALL {
            let m = small(kind);
            let back = KgeModel::from_bytes(&m.to_bytes().unwrap()).unwrap();
            assert_eq!(back, m);
        }
    }

    #[test]
    fn corrupt_bytes_rejected() {
        let bytes = small(ModelKind::TransE).to_bytes().unwrap();
        assert!(KgeModel::from_bytes(&bytes[..bytes.len() - 8]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(KgeModel::from_bytes(&bad).is_err());
    }
}
