//! Small MLPs with hand-derived backward passes and an Adam optimizer.
//!
//! Two head kinds: a classifier head emitting raw logits, and a projection
//! head whose final activations are row-normalized to the unit sphere. The
//! normalization Jacobian (I − zzᵀ)/‖h‖ is applied explicitly in backward;
//! there is no autodiff tape anywhere in the crate.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::numerics::{fnv1a, l2_normalize_rows, Matrix, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeadKind {
    /// Final layer emits raw logits, one column per class.
    Classifier,
    /// Final layer output is L2-normalized row-wise.
    Projection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// in_dim × out_dim weight matrix.
    pub w: Matrix,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
    pub head: HeadKind,
}

impl MlpParams {
    fn new(dims: &[usize], head: HeadKind, rng: &mut Rng) -> Self {
        assert!(dims.len() >= 2, "need at least input and output dims");
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for win in dims.windows(2) {
            let (fan_in, fan_out) = (win[0], win[1]);
            let std = (2.0 / fan_in as f64).sqrt();
            let mut w = Matrix::zeros(fan_in, fan_out);
            for v in w.as_mut_slice() {
                *v = std * rng.normal();
            }
            layers.push(Layer {
                w,
                b: vec![0.0; fan_out],
            });
        }
        MlpParams { layers, head }
    }

    /// Classifier network: dims = [input, hidden..., num_classes].
    pub fn new_classifier(dims: &[usize], rng: &mut Rng) -> Self {
        Self::new(dims, HeadKind::Classifier, rng)
    }

    /// Encoder network: dims = [input, hidden..., embed_dim]; forward output
    /// is row-normalized.
    pub fn new_encoder(dims: &[usize], rng: &mut Rng) -> Self {
        Self::new(dims, HeadKind::Projection, rng)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().w.cols()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.w.rows() * l.w.cols() + l.b.len())
            .sum()
    }

    pub fn to_flat_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(l.w.as_slice());
            out.extend_from_slice(&l.b);
        }
        out
    }

    pub fn assign_from_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params());
        let mut pos = 0;
        for l in &mut self.layers {
            let nw = l.w.rows() * l.w.cols();
            l.w.as_mut_slice().copy_from_slice(&flat[pos..pos + nw]);
            pos += nw;
            let nb = l.b.len();
            l.b.copy_from_slice(&flat[pos..pos + nb]);
            pos += nb;
        }
    }

    /// Bit-pattern hash of all parameters; used by isolation tests and the
    /// frozen-encoder contract.
    pub fn param_hash(&self) -> u64 {
        let mut bytes = Vec::with_capacity(self.num_params() * 8);
        for l in &self.layers {
            for &v in l.w.as_slice() {
                bytes.extend_from_slice(&v.to_bits().to_le_bytes());
            }
            for &v in &l.b {
                bytes.extend_from_slice(&v.to_bits().to_le_bytes());
            }
        }
        fnv1a(&bytes)
    }
}

/// Activations retained by a forward pass for the matching backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// inputs[l] is the input to layer l (inputs[0] is the batch itself).
    inputs: Vec<Matrix>,
    /// Pre-activation values of every hidden layer (ReLU masks).
    pre_acts: Vec<Matrix>,
    /// Projection heads: (pre-normalization output, row norms, normalized z).
    projection: Option<(Matrix, Vec<f64>, Matrix)>,
}

fn forward_core(p: &MlpParams, x: &Matrix) -> Result<(Matrix, ForwardCache)> {
    if x.cols() != p.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "input has {} columns, network expects {}",
            x.cols(),
            p.input_dim()
        )));
    }
    let mut inputs = vec![x.clone()];
    let mut pre_acts = Vec::new();
    let mut current = x.clone();
    let last = p.layers.len() - 1;
    for (l, layer) in p.layers.iter().enumerate() {
        let mut pre = current.matmul(&layer.w);
        pre.add_row_vector(&layer.b);
        if l < last {
            pre_acts.push(pre.clone());
            current = pre.map(|v| v.max(0.0));
            inputs.push(current.clone());
        } else {
            current = pre;
        }
    }
    Ok((
        current,
        ForwardCache {
            inputs,
            pre_acts,
            projection: None,
        },
    ))
}

/// Runs the classifier network; returns B×C logits and the backward cache.
pub fn forward_classifier(p: &MlpParams, x: &Matrix) -> Result<(Matrix, ForwardCache)> {
    if p.head != HeadKind::Classifier {
        return Err(Error::ShapeMismatch(
            "forward_classifier requires a classifier head".into(),
        ));
    }
    forward_core(p, x)
}

/// Runs the encoder network; returns unit-norm embeddings and the cache.
pub fn forward_encoder(p: &MlpParams, x: &Matrix) -> Result<(Matrix, ForwardCache)> {
    if p.head != HeadKind::Projection {
        return Err(Error::ShapeMismatch(
            "forward_encoder requires a projection head".into(),
        ));
    }
    let (h, mut cache) = forward_core(p, x)?;
    let z = l2_normalize_rows(&h)?;
    let norms: Vec<f64> = (0..h.rows())
        .map(|r| h.row(r).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    cache.projection = Some((h, norms, z.clone()));
    Ok((z, cache))
}

/// Activations feeding the final layer; the "embedding space" of a
/// classifier trained with GCE.
pub fn penultimate_activations(p: &MlpParams, x: &Matrix) -> Result<Matrix> {
    let (_, cache) = forward_core(p, x)?;
    Ok(cache.inputs.last().unwrap().clone())
}

/// The representation a linear probe sees: normalized z for projection
/// heads, penultimate activations for classifiers.
pub fn embeddings(p: &MlpParams, x: &Matrix) -> Result<Matrix> {
    match p.head {
        HeadKind::Projection => Ok(forward_encoder(p, x)?.0),
        HeadKind::Classifier => penultimate_activations(p, x),
    }
}

/// Per-layer parameter gradients, same shapes as the parameters.
#[derive(Debug, Clone)]
pub struct ParamGrads {
    pub layers: Vec<Layer>,
}

impl ParamGrads {
    pub fn zeros_like(p: &MlpParams) -> Self {
        ParamGrads {
            layers: p
                .layers
                .iter()
                .map(|l| Layer {
                    w: Matrix::zeros(l.w.rows(), l.w.cols()),
                    b: vec![0.0; l.b.len()],
                })
                .collect(),
        }
    }

    pub fn add_scaled(&mut self, other: &ParamGrads, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.w.add_scaled(&b.w, scale);
            for (x, &y) in a.b.iter_mut().zip(&b.b) {
                *x += scale * y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.is_finite() && l.b.iter().all(|v| v.is_finite()))
    }
}

/// Backpropagates `grad_output` (dL/d logits for classifiers, dL/dz for
/// projection heads) through the cached forward pass.
pub fn backward(p: &MlpParams, cache: &ForwardCache, grad_output: &Matrix) -> Result<ParamGrads> {
    if grad_output.cols() != p.output_dim() {
        return Err(Error::ShapeMismatch(format!(
            "grad_output has {} columns, network emits {}",
            grad_output.cols(),
            p.output_dim()
        )));
    }
    let mut delta = match (&p.head, &cache.projection) {
        (HeadKind::Projection, Some((_, norms, z))) => {
            // Through row normalization: dL/dh_i = (g_i − (g_i·z_i) z_i) / ‖h_i‖.
            let mut d = grad_output.clone();
            for r in 0..d.rows() {
                let zr = z.row(r);
                let dot: f64 = d.row(r).iter().zip(zr).map(|(a, b)| a * b).sum();
                let inv = 1.0 / norms[r];
                for (dv, &zv) in d.row_mut(r).iter_mut().zip(zr) {
                    *dv = (*dv - dot * zv) * inv;
                }
            }
            d
        }
        (HeadKind::Projection, None) => {
            return Err(Error::ShapeMismatch(
                "cache is missing projection state".into(),
            ))
        }
        (HeadKind::Classifier, _) => grad_output.clone(),
    };

    let mut grads = ParamGrads::zeros_like(p);
    for l in (0..p.layers.len()).rev() {
        let input = &cache.inputs[l];
        grads.layers[l].w = input.matmul_at_b(&delta);
        let gb = &mut grads.layers[l].b;
        for r in 0..delta.rows() {
            for (g, &d) in gb.iter_mut().zip(delta.row(r)) {
                *g += d;
            }
        }
        if l > 0 {
            let mut prev = delta.matmul_a_bt(&p.layers[l].w);
            let pre = &cache.pre_acts[l - 1];
            for (v, &raw) in prev.as_mut_slice().iter_mut().zip(pre.as_slice()) {
                if raw <= 0.0 {
                    *v = 0.0;
                }
            }
            delta = prev;
        }
    }
    Ok(grads)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    m: Vec<Layer>,
    v: Vec<Layer>,
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptimizerState {
    pub fn new(p: &MlpParams, learning_rate: f64) -> Self {
        let zeros = || {
            p.layers
                .iter()
                .map(|l| Layer {
                    w: Matrix::zeros(l.w.rows(), l.w.cols()),
                    b: vec![0.0; l.b.len()],
                })
                .collect::<Vec<_>>()
        };
        OptimizerState {
            m: zeros(),
            v: zeros(),
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

fn adam_update_slice(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    lr_t: f64,
    b1: f64,
    b2: f64,
    eps: f64,
) {
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = b1 * m[i] + (1.0 - b1) * g;
        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
        params[i] -= lr_t * m[i] / (v[i].sqrt() + eps);
    }
}

/// One bias-corrected Adam step, in place.
pub fn adam_step(state: &mut OptimizerState, p: &mut MlpParams, grads: &ParamGrads) {
    assert_eq!(p.layers.len(), grads.layers.len());
    state.step += 1;
    let t = state.step as i32;
    let lr_t = state.learning_rate * (1.0 - state.beta2.powi(t)).sqrt()
        / (1.0 - state.beta1.powi(t));
    for l in 0..p.layers.len() {
        adam_update_slice(
            p.layers[l].w.as_mut_slice(),
            grads.layers[l].w.as_slice(),
            state.m[l].w.as_mut_slice(),
            state.v[l].w.as_mut_slice(),
            lr_t,
            state.beta1,
            state.beta2,
            state.epsilon,
        );
        adam_update_slice(
            &mut p.layers[l].b,
            &grads.layers[l].b,
            &mut state.m[l].b,
            &mut state.v[l].b,
            lr_t,
            state.beta1,
            state.beta2,
            state.epsilon,
        );
    }
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"SMXP";
const CHECKPOINT_VERSION: u32 = 1;

/// Versioned binary checkpoint: shapes + row-major values + checksum.
pub fn params_to_bytes(p: &MlpParams) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.push(match p.head {
        HeadKind::Classifier => 0,
        HeadKind::Projection => 1,
    });
    buf.extend_from_slice(&(p.layers.len() as u32).to_le_bytes());
    for l in &p.layers {
        buf.extend_from_slice(&(l.w.rows() as u32).to_le_bytes());
        buf.extend_from_slice(&(l.w.cols() as u32).to_le_bytes());
        for &v in l.w.as_slice() {
            buf.extend_from_slice(&v.to_bits().to_le_bytes());
        }
        for &v in &l.b {
            buf.extend_from_slice(&v.to_bits().to_le_bytes());
        }
    }
    let checksum = fnv1a(&buf);
    buf.extend_from_slice(&checksum.to_le_bytes());
    buf
}

pub fn params_from_bytes(bytes: &[u8]) -> Result<MlpParams> {
    if bytes.len() < 21 {
        return Err(Error::Format("truncated checkpoint".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    if fnv1a(body) != u64::from_le_bytes(tail.try_into().unwrap()) {
        return Err(Error::Format("checksum mismatch".into()));
    }
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > body.len() {
            return Err(Error::Format("truncated checkpoint".into()));
        }
        let s = &body[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    if take(&mut pos, 4)? != CHECKPOINT_MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let head = match take(&mut pos, 1)?[0] {
        0 => HeadKind::Classifier,
        1 => HeadKind::Projection,
        t => return Err(Error::Format(format!("unknown head tag {t}"))),
    };
    let n_layers = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let rows = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let mut w = Matrix::zeros(rows, cols);
        for v in w.as_mut_slice() {
            *v = f64::from_bits(u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()));
        }
        let mut b = vec![0.0; cols];
        for v in &mut b {
            *v = f64::from_bits(u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()));
        }
        layers.push(Layer { w, b });
    }
    if pos != body.len() {
        return Err(Error::Format("trailing bytes in checkpoint".into()));
    }
    Ok(MlpParams { layers, head })
}

pub fn save_params(p: &MlpParams, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&params_to_bytes(p))?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<MlpParams> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    params_from_bytes(&bytes)
}
