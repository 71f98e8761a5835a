//! Link-scoring functions and their analytic gradients.
//!
//! | model   | score                                                                 |
//! |---------|-----------------------------------------------------------------------|
//! | TransE  | `-‖h + r − t‖₁`                                                       |
//! | TransD  | `-‖(I + r_p h_pᵀ) h + r − (I + r_p t_pᵀ) t‖₁`                         |
//! | TransMS | `-‖−tanh(t⊙r)⊙h + r + α(h⊙t) − tanh(h⊙r)⊙t‖₁`                       |
//! | TuckER  | `W ×₁ h ×₂ r ×₃ t`                                                    |
//! | KNN     | `-‖h − t‖₂`                                                           |
//!
//! Higher is more plausible. The L1 subgradient at zero is taken as zero.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Base knowledge-embedding width.
pub const EMBED_DIM: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    TransE,
    TransD,
    TransMS,
    TuckER,
    Knn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::TransE,
        ModelKind::TransD,
        ModelKind::TransMS,
        ModelKind::TuckER,
        ModelKind::Knn,
    ];

    /// Size of the tweet knowledge embedding (T-KEPE output).
    pub fn tweet_dim(self) -> usize {
        match self {
            ModelKind::TransD => 2 * EMBED_DIM,
            _ => EMBED_DIM,
        }
    }

    /// Size of the target knowledge embedding (M-KEPE output); 0 for KNN.
    pub fn mist_dim(self) -> usize {
        match self {
            ModelKind::TransD => 2 * EMBED_DIM,
            ModelKind::TransMS => EMBED_DIM + 1,
            ModelKind::Knn => 0,
            _ => EMBED_DIM,
        }
    }

    pub fn has_core(self) -> bool {
        self == ModelKind::TuckER
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::TransE => "transe",
            ModelKind::TransD => "transd",
            ModelKind::TransMS => "transms",
            ModelKind::TuckER => "tucker",
            ModelKind::Knn => "knn",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "transe" => Ok(ModelKind::TransE),
            "transd" => Ok(ModelKind::TransD),
            "transms" => Ok(ModelKind::TransMS),
            "tucker" => Ok(ModelKind::TuckER),
            "knn" => Ok(ModelKind::Knn),
            other => Err(Error::Config(format!("unknown model kind {other:?}"))),
        }
    }
}

/// TuckER core tensor, shape `z × v × z`, stored `[a][b][c]` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CoreTensor {
    pub z: usize,
    pub v: usize,
    pub data: Vec<f64>,
}

impl CoreTensor {
    pub fn zeros(z: usize, v: usize) -> Self {
        Self {
            z,
            v,
            data: vec![0.0; z * v * z],
        }
    }

    pub fn from_vec(z: usize, v: usize, data: Vec<f64>) -> Result<Self> {
        check_dim(z * v * z, data.len())?;
        Ok(Self { z, v, data })
    }

    #[inline]
    pub fn index(&self, a: usize, b: usize, c: usize) -> usize {
        (a * self.v + b) * self.z + c
    }

    pub fn get(&self, a: usize, b: usize, c: usize) -> f64 {
        self.data[self.index(a, b, c)]
    }

    pub fn set(&mut self, a: usize, b: usize, c: usize, value: f64) {
        let i = self.index(a, b, c);
        self.data[i] = value;
    }
}

/// Gradient of a score with respect to its embedding arguments.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGradient {
    pub head: Vec<f64>,
    pub relation: Vec<f64>,
    pub tail: Vec<f64>,
    pub core: Option<Vec<f64>>,
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn same_len(a: &[f64], b: &[f64]) -> Result<()> {
    check_dim(a.len(), b.len())
}

pub fn score_transe(te_i: &[f64], me_j: &[f64], te_k: &[f64]) -> Result<f64> {
    same_len(te_i, me_j)?;
    same_len(te_i, te_k)?;
    Ok(-te_i
        .iter()
        .zip(me_j)
        .zip(te_k)
        .map(|((h, r), t)| (h + r - t).abs())
        .sum::<f64>())
}

fn transd_residual(
    te_i: &[f64],
    te_i_p: &[f64],
    me_j: &[f64],
    me_j_p: &[f64],
    te_k: &[f64],
    te_k_p: &[f64],
) -> Result<(Vec<f64>, f64, f64)> {
    for v in [te_i_p, me_j, me_j_p, te_k, te_k_p] {
        same_len(te_i, v)?;
    }
    let head_dot: f64 = te_i_p.iter().zip(te_i).map(|(a, b)| a * b).sum();
    let tail_dot: f64 = te_k_p.iter().zip(te_k).map(|(a, b)| a * b).sum();
    let x = (0..te_i.len())
        .map(|d| te_i[d] + head_dot * me_j_p[d] + me_j[d] - te_k[d] - tail_dot * me_j_p[d])
        .collect();
    Ok((x, head_dot, tail_dot))
}

/// TransD; `(I + r_p h_pᵀ) h` is evaluated as `h + (h_p · h) r_p`.
pub fn score_transd(
    te_i: &[f64],
    te_i_p: &[f64],
    me_j: &[f64],
    me_j_p: &[f64],
    te_k: &[f64],
    te_k_p: &[f64],
) -> Result<f64> {
    let (x, _, _) = transd_residual(te_i, te_i_p, me_j, me_j_p, te_k, te_k_p)?;
    Ok(-x.iter().map(|v| v.abs()).sum::<f64>())
}

fn transms_residual(te_i: &[f64], me_j: &[f64], alpha_j: f64, te_k: &[f64]) -> Result<Vec<f64>> {
    same_len(te_i, me_j)?;
    same_len(te_i, te_k)?;
    Ok((0..te_i.len())
        .map(|d| {
            let (h, r, t) = (te_i[d], me_j[d], te_k[d]);
            -(t * r).tanh() * h + r + alpha_j * (h * t) - (h * r).tanh() * t
        })
        .collect())
}

pub fn score_transms(te_i: &[f64], me_j: &[f64], alpha_j: f64, te_k: &[f64]) -> Result<f64> {
    Ok(-transms_residual(te_i, me_j, alpha_j, te_k)?
        .iter()
        .map(|v| v.abs())
        .sum::<f64>())
}

pub fn score_tucker(core: &CoreTensor, te_i: &[f64], me_j: &[f64], te_k: &[f64]) -> Result<f64> {
    check_dim(core.z, te_i.len())?;
    check_dim(core.v, me_j.len())?;
    check_dim(core.z, te_k.len())?;
    let mut acc = 0.0;
    for (a, &h) in te_i.iter().enumerate() {
        for (b, &r) in me_j.iter().enumerate() {
            let hr = h * r;
            let base = core.index(a, b, 0);
            acc += hr * core.data[base..base + core.z].iter().zip(te_k).map(|(w, t)| w * t).sum::<f64>();
        }
    }
    Ok(acc)
}

pub fn score_knn(te_i: &[f64], te_k: &[f64]) -> Result<f64> {
    same_len(te_i, te_k)?;
    Ok(-te_i
        .iter()
        .zip(te_k)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

fn check_kind_dims(kind: ModelKind, te_i: &[f64], me_j: &[f64], te_k: &[f64]) -> Result<()> {
    check_dim(kind.tweet_dim(), te_i.len())?;
    check_dim(kind.tweet_dim(), te_k.len())?;
    if kind != ModelKind::Knn {
        check_dim(kind.mist_dim(), me_j.len())?;
    }
    Ok(())
}

/// Score a link from full model-sized embeddings. TransD arguments are
/// `[primary | projection]` halves; the TransMS target embedding carries α
/// as its last component; KNN ignores `me_j`.
pub fn score(kind: ModelKind, core: Option<&CoreTensor>, te_i: &[f64], me_j: &[f64], te_k: &[f64]) -> Result<f64> {
    check_kind_dims(kind, te_i, me_j, te_k)?;
    let e = EMBED_DIM;
    match kind {
        ModelKind::TransE => score_transe(te_i, me_j, te_k),
        ModelKind::TransD => score_transd(&te_i[..e], &te_i[e..], &me_j[..e], &me_j[e..], &te_k[..e], &te_k[e..]),
        ModelKind::TransMS => score_transms(te_i, &me_j[..e], me_j[e], te_k),
        ModelKind::TuckER => {
            let core = core.ok_or_else(|| Error::InvalidData("TuckER needs a core tensor".into()))?;
            score_tucker(core, te_i, me_j, te_k)
        }
        ModelKind::Knn => score_knn(te_i, te_k),
    }
}

/// Score and its gradient with respect to every argument (and the core
/// tensor for TuckER).
pub fn score_grad(
    kind: ModelKind,
    core: Option<&CoreTensor>,
    te_i: &[f64],
    me_j: &[f64],
    te_k: &[f64],
) -> Result<(f64, ScoreGradient)> {
    check_kind_dims(kind, te_i, me_j, te_k)?;
    match kind {
        ModelKind::TransE => Ok(transe_grad(te_i, me_j, te_k)),
        ModelKind::TransD => Ok(transd_grad(te_i, me_j, te_k)),
        ModelKind::TransMS => Ok(transms_grad(te_i, me_j, te_k)),
        ModelKind::TuckER => {
            let core = core.ok_or_else(|| Error::InvalidData("TuckER needs a core tensor".into()))?;
            Ok(tucker_grad(core, te_i, me_j, te_k))
        }
        ModelKind::Knn => Ok(knn_grad(te_i, me_j.len(), te_k)),
    }
}

fn transe_grad(te_i: &[f64], me_j: &[f64], te_k: &[f64]) -> (f64, ScoreGradient) {
    let mut score = 0.0;
    let mut head = Vec::with_capacity(te_i.len());
    for d in 0..te_i.len() {
        let x = te_i[d] + me_j[d] - te_k[d];
        score -= x.abs();
        head.push(-sign(x));
    }
    let tail = head.iter().map(|g| -g).collect();
    let relation = head.clone();
    (
        score,
        ScoreGradient {
            head,
            relation,
            tail,
            core: None,
        },
    )
}

fn transd_grad(te_i: &[f64], me_j: &[f64], te_k: &[f64]) -> (f64, ScoreGradient) {
    let e = EMBED_DIM;
    let (h, hp) = te_i.split_at(e);
    let (r, rp) = me_j.split_at(e);
    let (t, tp) = te_k.split_at(e);
    let (x, head_dot, tail_dot) = transd_residual(h, hp, r, rp, t, tp).expect("dims checked");
    let s: Vec<f64> = x.iter().map(|&v| sign(v)).collect();
    let score = -x.iter().map(|v| v.abs()).sum::<f64>();
    let rp_s: f64 = rp.iter().zip(&s).map(|(a, b)| a * b).sum();

    let mut head = vec![0.0; 2 * e];
    let mut relation = vec![0.0; 2 * e];
    let mut tail = vec![0.0; 2 * e];
    for d in 0..e {
        head[d] = -(s[d] + rp_s * hp[d]);
        head[e + d] = -rp_s * h[d];
        relation[d] = -s[d];
        relation[e + d] = -(head_dot - tail_dot) * s[d];
        tail[d] = s[d] + rp_s * tp[d];
        tail[e + d] = rp_s * t[d];
    }
    (
        score,
        ScoreGradient {
            head,
            relation,
            tail,
            core: None,
        },
    )
}

fn transms_grad(te_i: &[f64], me_j: &[f64], te_k: &[f64]) -> (f64, ScoreGradient) {
    let e = EMBED_DIM;
    let alpha = me_j[e];
    let mut score = 0.0;
    let mut head = vec![0.0; e];
    let mut relation = vec![0.0; e + 1];
    let mut tail = vec![0.0; e];
    let mut d_alpha = 0.0;
    for d in 0..e {
        let (h, r, t) = (te_i[d], me_j[d], te_k[d]);
        let tanh_tr = (t * r).tanh();
        let tanh_hr = (h * r).tanh();
        let x = -tanh_tr * h + r + alpha * h * t - tanh_hr * t;
        score -= x.abs();
        let s = sign(x);
        let sech2_tr = 1.0 - tanh_tr * tanh_tr;
        let sech2_hr = 1.0 - tanh_hr * tanh_hr;
        let dx_dh = -tanh_tr + alpha * t - sech2_hr * r * t;
        let dx_dt = -sech2_tr * r * h + alpha * h - tanh_hr;
        let dx_dr = -sech2_tr * t * h + 1.0 - sech2_hr * h * t;
        head[d] = -s * dx_dh;
        tail[d] = -s * dx_dt;
        relation[d] = -s * dx_dr;
        d_alpha -= s * h * t;
    }
    relation[e] = d_alpha;
    (
        score,
        ScoreGradient {
            head,
            relation,
            tail,
            core: None,
        },
    )
}

fn tucker_grad(core: &CoreTensor, te_i: &[f64], me_j: &[f64], te_k: &[f64]) -> (f64, ScoreGradient) {
    let (z, v) = (core.z, core.v);
    let mut head = vec![0.0; z];
    let mut relation = vec![0.0; v];
    let mut tail = vec![0.0; z];
    let mut d_core = vec![0.0; z * v * z];
    let mut score = 0.0;
    for a in 0..z {
        for b in 0..v {
            let hr = te_i[a] * me_j[b];
            for c in 0..z {
                let idx = core.index(a, b, c);
                let w = core.data[idx];
                score += w * hr * te_k[c];
                head[a] += w * me_j[b] * te_k[c];
                relation[b] += w * te_i[a] * te_k[c];
                tail[c] += w * hr;
                d_core[idx] = hr * te_k[c];
            }
        }
    }
    (
        score,
        ScoreGradient {
            head,
            relation,
            tail,
            core: Some(d_core),
        },
    )
}

fn knn_grad(te_i: &[f64], relation_len: usize, te_k: &[f64]) -> (f64, ScoreGradient) {
    let dist = te_i
        .iter()
        .zip(te_k)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let head: Vec<f64> = if dist > 0.0 {
        te_i.iter().zip(te_k).map(|(a, b)| -(a - b) / dist).collect()
    } else {
        vec![0.0; te_i.len()]
    };
    let tail = head.iter().map(|g| -g).collect();
    (
        -dist,
        ScoreGradient {
            head,
            relation: vec![0.0; relation_len],
            tail,
            core: None,
        },
    )
}
