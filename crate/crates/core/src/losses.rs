//! The four training losses and their analytic gradients.
//!
//! Cross-entropy (CE) and generalized cross-entropy (GCE) act on logits;
//! the supervised contrastive (SC) loss and its generalized variant (GSC)
//! act on unit-norm embeddings. GCE relates to CE through the per-example
//! identity grad(GCE) = p_y^q · grad(CE); GSC relates to SC the same way,
//! with a frozen per-pair weight p̂_{i,k}^q that is evaluated numerically
//! but never differentiated through.

use std::collections::BTreeMap;

use crate::numerics::{log_softmax_rows, Matrix};
use crate::{Error, Result};

/// Scalar loss plus the gradient with respect to the loss's direct input
/// (logits for CE/GCE, normalized embeddings for SC/GSC).
#[derive(Debug, Clone)]
pub struct LossResult {
    pub value: f64,
    pub grad_input: Matrix,
    /// Side channel for tests and analysis; SC/GSC store the per-pair
    /// probability matrix under "pair_probs", GSC also stores the frozen
    /// weights under "weights".
    pub diagnostics: BTreeMap<&'static str, Matrix>,
}

impl LossResult {
    fn new(value: f64, grad_input: Matrix) -> Self {
        LossResult {
            value,
            grad_input,
            diagnostics: BTreeMap::new(),
        }
    }
}

/// Rows of class probabilities: one-hot for plain labels, mixed for the
/// interpolating baselines.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabelBatch {
    pub probs: Matrix,
}

impl SoftLabelBatch {
    pub fn from_hard(labels: &[usize], num_classes: usize) -> Self {
        let mut probs = Matrix::zeros(labels.len(), num_classes);
        for (r, &y) in labels.iter().enumerate() {
            assert!(y < num_classes, "label {y} out of range");
            probs.set(r, y, 1.0);
        }
        SoftLabelBatch { probs }
    }

    pub fn from_probs(probs: Matrix) -> Result<Self> {
        for r in 0..probs.rows() {
            let row = probs.row(r);
            if row.iter().any(|&v| v < 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "label row {r} has a negative entry"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidConfig(format!(
                    "label row {r} sums to {sum}, expected 1"
                )));
            }
        }
        Ok(SoftLabelBatch { probs })
    }

    pub fn len(&self) -> usize {
        self.probs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.rows() == 0
    }
}

/// Mean cross-entropy over the batch with soft labels.
/// grad = (softmax − label) / B.
pub fn ce(logits: &Matrix, labels: &SoftLabelBatch) -> Result<LossResult> {
    if logits.rows() != labels.probs.rows() || logits.cols() != labels.probs.cols() {
        return Err(Error::ShapeMismatch(format!(
            "logits {}x{} vs labels {}x{}",
            logits.rows(),
            logits.cols(),
            labels.probs.rows(),
            labels.probs.cols()
        )));
    }
    let b = logits.rows();
    let log_sm = log_softmax_rows(logits);
    let mut value = 0.0;
    for r in 0..b {
        for (lp, &t) in log_sm.row(r).iter().zip(labels.probs.row(r)) {
            value -= t * lp;
        }
    }
    value /= b as f64;
    let mut grad = log_sm.map(f64::exp);
    grad.add_scaled(&labels.probs, -1.0);
    grad.scale(1.0 / b as f64);
    Ok(LossResult::new(value, grad))
}

/// CE with hard labels; convenience wrapper used throughout training.
pub fn ce_hard(logits: &Matrix, labels: &[usize]) -> Result<LossResult> {
    ce(logits, &SoftLabelBatch::from_hard(labels, logits.cols()))
}

/// Mean generalized cross-entropy: per example (1 − p_y^q)/q, hard labels
/// only. Its logit gradient is the CE gradient scaled per example by p_y^q,
/// which upweights already-confident examples.
pub fn gce(logits: &Matrix, labels: &[usize], q: f64) -> Result<LossResult> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::InvalidQ(q));
    }
    if logits.rows() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "logits {} rows vs {} labels",
            logits.rows(),
            labels.len()
        )));
    }
    let b = logits.rows();
    let c = logits.cols();
    let sm = log_softmax_rows(logits).map(f64::exp);
    let mut value = 0.0;
    let mut grad = Matrix::zeros(b, c);
    for r in 0..b {
        let y = labels[r];
        assert!(y < c, "label {y} out of range");
        let p_y = sm.get(r, y);
        let w = p_y.powf(q);
        value += (1.0 - w) / q;
        for col in 0..c {
            let ce_grad = sm.get(r, col) - if col == y { 1.0 } else { 0.0 };
            grad.set(r, col, w * ce_grad / b as f64);
        }
    }
    Ok(LossResult::new(value / b as f64, grad))
}

/// How a contrastive loss treats a query whose positive set is empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PositiveMode {
    /// Error out; used in unit tests where every class recurs.
    Strict,
    /// The query contributes no loss term (it still appears in other
    /// queries' denominators); the training default, since a sampled batch
    /// may hold a lone instance of some class.
    SkipEmpty,
}

/// Per-pair probabilities p_{i,j} = exp(s_ij/τ) / Σ_{k≠i} exp(s_ik/τ) with
/// s = z zᵀ, max-shifted per row for stability. Diagonal is zero.
fn pair_probabilities(z: &Matrix, tau: f64) -> Matrix {
    let b = z.rows();
    let sims = z.matmul_a_bt(z);
    let mut probs = Matrix::zeros(b, b);
    for i in 0..b {
        let mut max = f64::NEG_INFINITY;
        for j in 0..b {
            if j != i {
                max = max.max(sims.get(i, j) / tau);
            }
        }
        let mut denom = 0.0;
        for j in 0..b {
            if j != i {
                let e = (sims.get(i, j) / tau - max).exp();
                probs.set(i, j, e);
                denom += e;
            }
        }
        for j in 0..b {
            if j != i {
                probs.set(i, j, probs.get(i, j) / denom);
            }
        }
    }
    probs
}

fn positive_sets(labels: &[usize]) -> Vec<Vec<usize>> {
    let b = labels.len();
    (0..b)
        .map(|i| {
            (0..b)
                .filter(|&j| j != i && labels[j] == labels[i])
                .collect()
        })
        .collect()
}

/// Core of SC/GSC: L = −Σ_i (1/|P_i|) Σ_{k∈P_i} w_{ik} · log p_{i,k}, with
/// the weight matrix treated as a constant. SC uses all-ones weights; GSC
/// passes the frozen p^q. The gradient with respect to z follows from
/// dL/ds_{ij} assembled into G and grad_z = (G + Gᵀ) z.
fn weighted_contrastive(
    z: &Matrix,
    labels: &[usize],
    tau: f64,
    weights: Option<&Matrix>,
    mode: PositiveMode,
) -> Result<LossResult> {
    if tau <= 0.0 {
        return Err(Error::InvalidTau(tau));
    }
    let b = z.rows();
    if b < 2 {
        return Err(Error::BatchTooSmall(b));
    }
    if labels.len() != b {
        return Err(Error::ShapeMismatch(format!(
            "{} embeddings vs {} labels",
            b,
            labels.len()
        )));
    }
    let probs = pair_probabilities(z, tau);
    let positives = positive_sets(labels);

    let weight_at = |i: usize, k: usize| weights.map_or(1.0, |w| w.get(i, k));

    let mut value = 0.0;
    let mut g = Matrix::zeros(b, b); // G[i][j] = dL/ds_{ij}
    for i in 0..b {
        let p_i = &positives[i];
        if p_i.is_empty() {
            match mode {
                PositiveMode::Strict => return Err(Error::NoPositives(i)),
                PositiveMode::SkipEmpty => continue,
            }
        }
        let inv = 1.0 / p_i.len() as f64;
        let mut weight_sum = 0.0;
        for &k in p_i {
            let w = weight_at(i, k);
            weight_sum += w;
            value -= inv * w * probs.get(i, k).max(f64::MIN_POSITIVE).ln();
        }
        // dL/ds_{ij} = (1/τ)·[ (Σ_k w_ik / |P_i|)·p_{ij} − w_ij·1[j∈P_i]/|P_i| ]
        let mean_w = weight_sum * inv;
        for j in 0..b {
            if j == i {
                continue;
            }
            let mut d = mean_w * probs.get(i, j);
            if labels[j] == labels[i] {
                d -= weight_at(i, j) * inv;
            }
            g.set(i, j, d / tau);
        }
    }

    // grad_z[a] = Σ_j G[a][j] z_j + Σ_i G[i][a] z_i
    let mut grad = g.matmul(z);
    let gt_z = g.matmul_at_b(z);
    grad.add_scaled(&gt_z, 1.0);

    let mut result = LossResult::new(value, grad);
    result.diagnostics.insert("pair_probs", probs);
    Ok(result)
}

/// Supervised contrastive loss over unit-norm embeddings.
pub fn sc(z: &Matrix, labels: &[usize], tau: f64, mode: PositiveMode) -> Result<LossResult> {
    weighted_contrastive(z, labels, tau, None, mode)
}

/// Generalized supervised contrastive loss: each log p_{i,k} term is scaled
/// by p̂_{i,k}^q, a stop-gradient copy of p_{i,k}^q. High-probability pairs
/// get more weight, amplifying the encoder's reliance on easy features.
pub fn gsc(
    z: &Matrix,
    labels: &[usize],
    tau: f64,
    q: f64,
    mode: PositiveMode,
) -> Result<LossResult> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::InvalidQ(q));
    }
    if tau <= 0.0 {
        return Err(Error::InvalidTau(tau));
    }
    let probs = pair_probabilities(z, tau);
    let weights = probs.map(|p| p.powf(q));
    let mut result = weighted_contrastive(z, labels, tau, Some(&weights), mode)?;
    result.diagnostics.insert("weights", weights);
    Ok(result)
}

/// GSC with an externally supplied frozen weight matrix. This is the
/// stop-gradient objective itself, exposed so oracles can difference it
/// while holding the weights at their base-point values.
pub fn gsc_with_frozen_weights(
    z: &Matrix,
    labels: &[usize],
    tau: f64,
    weights: &Matrix,
    mode: PositiveMode,
) -> Result<LossResult> {
    weighted_contrastive(z, labels, tau, Some(weights), mode)
}
