//! Contradicting-pair selection and batch mixing.
//!
//! The selective rule mixes each query with either its least-similar
//! positive (same label, dissimilar biased features) or its most-similar
//! negative (different label, similar biased features), measured in the
//! auxiliary model's embedding space. One coin flip per batch picks the
//! branch; the flip happens before the per-query loop. The mixed input
//! always puts weight ≥ 0.5 on the selected example and takes the selected
//! example's label outright.
//!
//! Baselines live here too: standard mixup, ground-truth-label selection,
//! and a LISA-style variant that interpolates labels and leaves lambda
//! unclipped.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::losses::SoftLabelBatch;
use crate::model::{forward_classifier, forward_encoder, penultimate_activations, MlpParams};
use crate::numerics::{log_softmax_rows, Matrix, Rng};
use crate::synthdata::{Dataset, Minibatch};
use crate::{Error, Result};

/// Which candidate set produced a mixed row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    /// Contradicting positive: same label, lowest similarity.
    Positive,
    /// Contradicting negative: different label, highest similarity.
    Negative,
    /// Both candidate sets were empty; the row passed through unmixed.
    Passthrough,
    /// Uniform partner (standard mixup only).
    Random,
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Branch::Positive => "positive",
            Branch::Negative => "negative",
            Branch::Passthrough => "passthrough",
            Branch::Random => "random",
        };
        f.write_str(s)
    }
}

/// One mixing decision, with indices local to the batch.
#[derive(Debug, Clone, Copy)]
pub struct PairLogEntry {
    pub query: usize,
    pub selected: usize,
    pub lambda: f64,
    pub branch: Branch,
}

/// A mixing decision mapped to global dataset indices, as accumulated by
/// the trainer and consumed by recall analysis.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LoggedPair {
    pub query: usize,
    pub selected: usize,
    pub lambda: f64,
    pub branch: Branch,
}

#[derive(Debug, Clone)]
pub struct MixedBatch {
    pub inputs: Matrix,
    pub labels: SoftLabelBatch,
    pub pairs: Vec<PairLogEntry>,
}

impl MixedBatch {
    /// Maps the batch-local pair log onto the dataset rows the batch was
    /// drawn from.
    pub fn logged_pairs(&self, batch: &Minibatch) -> Vec<LoggedPair> {
        self.pairs
            .iter()
            .map(|p| LoggedPair {
                query: batch.indices[p.query],
                selected: batch.indices[p.selected],
                lambda: p.lambda,
                branch: p.branch,
            })
            .collect()
    }
}

/// Branch policy: force one branch (modes A / B) or flip a coin per batch
/// (mode AB).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MixMode {
    PositivesOnly,
    NegativesOnly,
    Both,
}

/// Similarity scorer backing the selection rule. Higher score means "more
/// similar biased features"; distance-based backends are negated.
pub enum SimilarityBackend<'a> {
    /// Cosine of the contrastive encoder's normalized embeddings (default).
    GscCosine { encoder: &'a MlpParams },
    /// Cosine of the GCE-trained classifier's penultimate activations.
    GceCosine { model: &'a MlpParams },
    /// Negated euclidean distance between penultimate activations.
    GceL2 { model: &'a MlpParams },
    /// Negated KL divergence of the classifier's softmax rows (asymmetric).
    GceKl { model: &'a MlpParams },
    /// 1 if the bias attributes match, else 0. Requires bias labels.
    GroundTruth,
}

fn require_projection(p: &MlpParams, kind: &str) -> Result<()> {
    if p.head != crate::model::HeadKind::Projection {
        return Err(Error::BackendUnavailable(format!(
            "{kind} needs a projection-head encoder"
        )));
    }
    Ok(())
}

fn require_classifier(p: &MlpParams, kind: &str) -> Result<()> {
    if p.head != crate::model::HeadKind::Classifier {
        return Err(Error::BackendUnavailable(format!(
            "{kind} needs a classifier-head model"
        )));
    }
    Ok(())
}

/// Cosine similarity of rows, mapping near-zero rows to all-zero cosine so
/// a ReLU-dead activation row cannot abort training.
fn safe_cosine(h: &Matrix) -> Matrix {
    let mut unit = h.clone();
    for r in 0..unit.rows() {
        let norm = unit.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            for v in unit.row_mut(r) {
                *v /= norm;
            }
        } else {
            for v in unit.row_mut(r) {
                *v = 0.0;
            }
        }
    }
    unit.matmul_a_bt(&unit)
}

/// B×B similarity score matrix for a batch under the given backend.
pub fn similarity_scores(backend: &SimilarityBackend, batch: &Minibatch) -> Result<Matrix> {
    let b = batch.len();
    match backend {
        SimilarityBackend::GscCosine { encoder } => {
            require_projection(encoder, "gsc-cosine")?;
            let (z, _) = forward_encoder(encoder, &batch.x)?;
            Ok(z.matmul_a_bt(&z))
        }
        SimilarityBackend::GceCosine { model } => {
            require_classifier(model, "gce-cosine")?;
            let h = penultimate_activations(model, &batch.x)?;
            Ok(safe_cosine(&h))
        }
        SimilarityBackend::GceL2 { model } => {
            require_classifier(model, "gce-l2")?;
            let h = penultimate_activations(model, &batch.x)?;
            let mut scores = Matrix::zeros(b, b);
            for i in 0..b {
                for j in 0..b {
                    let d: f64 = h
                        .row(i)
                        .iter()
                        .zip(h.row(j))
                        .map(|(a, c)| (a - c) * (a - c))
                        .sum();
                    scores.set(i, j, -d.sqrt());
                }
            }
            Ok(scores)
        }
        SimilarityBackend::GceKl { model } => {
            require_classifier(model, "gce-kl")?;
            let (logits, _) = forward_classifier(model, &batch.x)?;
            let log_p = log_softmax_rows(&logits);
            let p = log_p.map(f64::exp);
            let mut scores = Matrix::zeros(b, b);
            for i in 0..b {
                for j in 0..b {
                    let mut kl = 0.0;
                    for c in 0..p.cols() {
                        let pi = p.get(i, c);
                        if pi > 0.0 {
                            kl += pi * (log_p.get(i, c) - log_p.get(j, c));
                        }
                    }
                    scores.set(i, j, -kl);
                }
            }
            Ok(scores)
        }
        SimilarityBackend::GroundTruth => {
            let mut scores = Matrix::zeros(b, b);
            for i in 0..b {
                for j in 0..b {
                    scores.set(i, j, f64::from(batch.b[i] == batch.b[j]));
                }
            }
            Ok(scores)
        }
    }
}

/// Least-similar same-label partner: argmin over P_i = {j≠i : y_j = y_i},
/// ties broken by lowest index.
pub fn select_contradicting_positive(
    i: usize,
    labels: &[usize],
    scores: &Matrix,
) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for j in 0..labels.len() {
        if j == i || labels[j] != labels[i] {
            continue;
        }
        let s = scores.get(i, j);
        if best.map_or(true, |(_, bs)| s < bs) {
            best = Some((j, s));
        }
    }
    best.map(|(j, _)| j).ok_or(Error::EmptyCandidateSet(i))
}

/// Most-similar different-label partner: argmax over N_i = {j : y_j ≠ y_i},
/// ties broken by lowest index.
pub fn select_contradicting_negative(
    i: usize,
    labels: &[usize],
    scores: &Matrix,
) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for j in 0..labels.len() {
        if labels[j] == labels[i] {
            continue;
        }
        let s = scores.get(i, j);
        if best.map_or(true, |(_, bs)| s > bs) {
            best = Some((j, s));
        }
    }
    best.map(|(j, _)| j).ok_or(Error::EmptyCandidateSet(i))
}

/// Decides the batch branch. Mode AB samples the coin before the per-query
/// loop; that single p > 0.5 test routes every query in the batch.
fn batch_branch(mode: MixMode, rng: &mut Rng) -> Branch {
    match mode {
        MixMode::PositivesOnly => Branch::Positive,
        MixMode::NegativesOnly => Branch::Negative,
        MixMode::Both => {
            if rng.uniform() > 0.5 {
                Branch::Positive
            } else {
                Branch::Negative
            }
        }
    }
}

/// Shared mixing skeleton: per query draw lambda, clip to min(λ, 1−λ),
/// select a partner via `pick`, fall back to the other branch when the
/// chosen candidate set is empty, and pass through when both are.
fn mix_with(
    batch: &Minibatch,
    mode: MixMode,
    rng: &mut Rng,
    mut pick: impl FnMut(usize, Branch, &mut Rng) -> Result<usize>,
) -> Result<MixedBatch> {
    let b = batch.len();
    if b < 2 {
        return Err(Error::BatchTooSmall(b));
    }
    let c = num_classes_upper_bound(batch);
    let primary = batch_branch(mode, rng);
    let other = |br: Branch| match br {
        Branch::Positive => Branch::Negative,
        _ => Branch::Positive,
    };

    let mut inputs = Matrix::zeros(b, batch.x.cols());
    let mut labels = Matrix::zeros(b, c);
    let mut pairs = Vec::with_capacity(b);
    for i in 0..b {
        let raw = rng.uniform();
        let lambda = raw.min(1.0 - raw);
        let (k, branch) = match pick(i, primary, rng) {
            Ok(k) => (k, primary),
            Err(Error::EmptyCandidateSet(_)) => match pick(i, other(primary), rng) {
                Ok(k) => (k, other(primary)),
                Err(Error::EmptyCandidateSet(_)) => (i, Branch::Passthrough),
                Err(e) => return Err(e),
            },
            Err(e) => return Err(e),
        };
        let row = inputs.row_mut(i);
        for (d, (xi, xk)) in row.iter_mut().zip(batch.x.row(i).iter().zip(batch.x.row(k))) {
            *d = lambda * xi + (1.0 - lambda) * xk;
        }
        // The label is the selected example's, one-hot; passthrough keeps
        // the query's own label (k = i there).
        labels.set(i, batch.y[k], 1.0);
        pairs.push(PairLogEntry {
            query: i,
            selected: k,
            lambda,
            branch,
        });
    }
    Ok(MixedBatch {
        inputs,
        labels: SoftLabelBatch::from_probs(labels)?,
        pairs,
    })
}

fn num_classes_upper_bound(batch: &Minibatch) -> usize {
    batch.y.iter().copied().max().unwrap_or(0) + 1
}

/// Selective mixup driven by a similarity backend: queries are paired with
/// their argmin positive or argmax negative under the backend's scores.
pub fn selecmix_batch(
    batch: &Minibatch,
    backend: &SimilarityBackend,
    mode: MixMode,
    rng: &mut Rng,
) -> Result<MixedBatch> {
    if batch.len() < 2 {
        return Err(Error::BatchTooSmall(batch.len()));
    }
    let scores = similarity_scores(backend, batch)?;
    mix_with(batch, mode, rng, |i, branch, _| match branch {
        Branch::Positive => select_contradicting_positive(i, &batch.y, &scores),
        _ => select_contradicting_negative(i, &batch.y, &scores),
    })
}

fn gt_candidates(batch: &Minibatch, i: usize, branch: Branch) -> Vec<usize> {
    (0..batch.len())
        .filter(|&j| match branch {
            // Exact contradicting sets from the hidden bias attribute.
            Branch::Positive => j != i && batch.y[j] == batch.y[i] && batch.b[j] != batch.b[i],
            _ => batch.y[j] != batch.y[i] && batch.b[j] == batch.b[i],
        })
        .collect()
}

/// Selective mixup with oracle candidate sets from the true bias labels;
/// the partner is drawn uniformly within the exact contradicting set.
pub fn gt_selecmix_batch(batch: &Minibatch, mode: MixMode, rng: &mut Rng) -> Result<MixedBatch> {
    mix_with(batch, mode, rng, |i, branch, rng| {
        let cands = gt_candidates(batch, i, branch);
        if cands.is_empty() {
            Err(Error::EmptyCandidateSet(i))
        } else {
            Ok(cands[rng.below(cands.len())])
        }
    })
}

/// Standard mixup: uniform partner, unclipped lambda, interpolated labels.
pub fn vanilla_mixup_batch(
    batch: &Minibatch,
    num_classes: usize,
    rng: &mut Rng,
) -> Result<MixedBatch> {
    let b = batch.len();
    if b < 2 {
        return Err(Error::BatchTooSmall(b));
    }
    let mut inputs = Matrix::zeros(b, batch.x.cols());
    let mut labels = Matrix::zeros(b, num_classes);
    let mut pairs = Vec::with_capacity(b);
    for i in 0..b {
        let lambda = rng.uniform();
        let j = rng.below(b);
        let row = inputs.row_mut(i);
        for (d, (xi, xj)) in row.iter_mut().zip(batch.x.row(i).iter().zip(batch.x.row(j))) {
            *d = lambda * xi + (1.0 - lambda) * xj;
        }
        labels.set(i, batch.y[i], lambda);
        let prev = labels.get(i, batch.y[j]);
        labels.set(i, batch.y[j], prev + (1.0 - lambda));
        pairs.push(PairLogEntry {
            query: i,
            selected: j,
            lambda,
            branch: Branch::Random,
        });
    }
    Ok(MixedBatch {
        inputs,
        labels: SoftLabelBatch::from_probs(labels)?,
        pairs,
    })
}

/// LISA-style baseline: ground-truth candidate sets like [`gt_selecmix_batch`],
/// but lambda stays unclipped and the labels interpolate as in standard
/// mixup.
pub fn lisa_batch(
    batch: &Minibatch,
    num_classes: usize,
    mode: MixMode,
    rng: &mut Rng,
) -> Result<MixedBatch> {
    let b = batch.len();
    if b < 2 {
        return Err(Error::BatchTooSmall(b));
    }
    let primary = batch_branch(mode, rng);
    let other = |br: Branch| match br {
        Branch::Positive => Branch::Negative,
        _ => Branch::Positive,
    };
    let mut inputs = Matrix::zeros(b, batch.x.cols());
    let mut labels = Matrix::zeros(b, num_classes);
    let mut pairs = Vec::with_capacity(b);
    for i in 0..b {
        let lambda = rng.uniform();
        let mut branch = primary;
        let mut cands = gt_candidates(batch, i, branch);
        if cands.is_empty() {
            branch = other(primary);
            cands = gt_candidates(batch, i, branch);
        }
        let (k, branch) = if cands.is_empty() {
            (i, Branch::Passthrough)
        } else {
            (cands[rng.below(cands.len())], branch)
        };
        let row = inputs.row_mut(i);
        for (d, (xi, xk)) in row.iter_mut().zip(batch.x.row(i).iter().zip(batch.x.row(k))) {
            *d = lambda * xi + (1.0 - lambda) * xk;
        }
        labels.set(i, batch.y[i], lambda);
        let prev = labels.get(i, batch.y[k]);
        labels.set(i, batch.y[k], prev + (1.0 - lambda));
        pairs.push(PairLogEntry {
            query: i,
            selected: k,
            lambda,
            branch,
        });
    }
    Ok(MixedBatch {
        inputs,
        labels: SoftLabelBatch::from_probs(labels)?,
        pairs,
    })
}

/// Pair log CSV: one row per logged selection, indices into `dataset`.
pub fn write_pair_log_csv(
    pairs: &[LoggedPair],
    dataset: &Dataset,
    out: &mut impl std::io::Write,
) -> Result<()> {
    writeln!(
        out,
        "i,k,lambda,branch,query_is_conflicting,selected_is_conflicting"
    )?;
    for p in pairs {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            p.query,
            p.selected,
            p.lambda,
            p.branch,
            u8::from(dataset.examples[p.query].is_conflicting),
            u8::from(dataset.examples[p.selected].is_conflicting),
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use crate::synthdata::{self, DatasetConfig};

    fn toy_batch(labels: &[usize], biases: &[usize]) -> Minibatch {
        let b = labels.len();
        let mut x = Matrix::zeros(b, 3);
        for i in 0..b {
            x.set(i, 0, i as f64);
            x.set(i, 1, 1.0);
            x.set(i, 2, -(i as f64));
        }
        Minibatch {
            x,
            y: labels.to_vec(),
            b: biases.to_vec(),
            conflicting: labels
                .iter()
                .zip(biases)
                .map(|(&y, &bb)| y != bb)
                .collect(),
            indices: (0..b).collect(),
        }
    }

    fn scores_from_rows(rows: &[Vec<f64>]) -> Matrix {
        Matrix::from_rows(rows)
    }

    #[test]
    fn positive_selection_singleton_and_ties() {
        let labels = vec![0, 0, 1];
        let scores = scores_from_rows(&[
            vec![1.0, 0.3, 0.9],
            vec![0.3, 1.0, 0.2],
            vec![0.9, 0.2, 1.0],
        ]);
        // P_0 = {1}: singleton.
        assert_eq!(select_contradicting_positive(0, &labels, &scores).unwrap(), 1);
        // All candidates tied: lowest index wins.
        let labels = vec![0, 0, 0, 0];
        let flat = scores_from_rows(&[vec![0.5; 4], vec![0.5; 4], vec![0.5; 4], vec![0.5; 4]]);
        assert_eq!(select_contradicting_positive(2, &labels, &flat).unwrap(), 0);
    }

    #[test]
    fn negative_selection_monotone_row_takes_last() {
        let labels = vec![0, 1, 1, 1];
        let scores = scores_from_rows(&[
            vec![0.0, 0.1, 0.2, 0.3],
            vec![0.0; 4],
            vec![0.0; 4],
            vec![0.0; 4],
        ]);
        assert_eq!(select_contradicting_negative(0, &labels, &scores).unwrap(), 3);
    }

    #[test]
    fn selection_matches_exhaustive_scan() {
        // 100 random score matrices against a brute-force oracle.
        let mut rng = Rng::new(77);
        for trial in 0..100 {
            let b = 2 + (trial % 15);
            let labels: Vec<usize> = (0..b).map(|_| rng.below(4)).collect();
            let mut scores = Matrix::zeros(b, b);
            for v in scores.as_mut_slice() {
                *v = rng.uniform();
            }
            for i in 0..b {
                let pos: Vec<usize> = (0..b)
                    .filter(|&j| j != i && labels[j] == labels[i])
                    .collect();
                let neg: Vec<usize> = (0..b).filter(|&j| labels[j] != labels[i]).collect();
                let brute_min = pos.iter().copied().fold(None::<(usize, f64)>, |acc, j| {
                    let s = scores.get(i, j);
                    match acc {
                        Some((_, bs)) if bs <= s => acc,
                        _ => Some((j, s)),
                    }
                });
                match (select_contradicting_positive(i, &labels, &scores), brute_min) {
                    (Ok(k), Some((bk, _))) => assert_eq!(k, bk),
                    (Err(Error::EmptyCandidateSet(_)), None) => {}
                    other => panic!("mismatch: {other:?}"),
                }
                let brute_max = neg.iter().copied().fold(None::<(usize, f64)>, |acc, j| {
                    let s = scores.get(i, j);
                    match acc {
                        Some((_, bs)) if bs >= s => acc,
                        _ => Some((j, s)),
                    }
                });
                match (select_contradicting_negative(i, &labels, &scores), brute_max) {
                    (Ok(k), Some((bk, _))) => assert_eq!(k, bk),
                    (Err(Error::EmptyCandidateSet(_)), None) => {}
                    other => panic!("mismatch: {other:?}"),
                }
            }
        }
    }

    #[test]
    fn lambda_min_rule_weights_selected_example() {
        // Force a specific lambda by scanning the rng stream the function
        // will consume: first draw is the coin (mode Both consumes none in
        // A/B modes), so in mode A the first draw is lambda.
        let batch = toy_batch(&[0, 0], &[0, 1]);
        let mut probe = Rng::with_stream(123, "mix");
        let raw = probe.uniform();
        let expected_lambda = raw.min(1.0 - raw);
        let mut rng = Rng::with_stream(123, "mix");
        let mixed = gt_selecmix_batch(&batch, MixMode::PositivesOnly, &mut rng).unwrap();
        let p = mixed.pairs[0];
        assert!((p.lambda - expected_lambda).abs() < 1e-15);
        assert!(p.lambda <= 0.5);
        // Row 0 = λ·x_0 + (1−λ)·x_k.
        let k = p.selected;
        for d in 0..3 {
            let want = p.lambda * batch.x.get(0, d) + (1.0 - p.lambda) * batch.x.get(k, d);
            assert!((mixed.inputs.get(0, d) - want).abs() < 1e-15);
        }
    }

    #[test]
    fn mode_a_with_unique_classes_falls_back_to_negative() {
        let batch = toy_batch(&[0, 1, 2, 3], &[0, 1, 2, 3]);
        let mut rng = Rng::new(5);
        let scores = Matrix::zeros(4, 4);
        let mixed = mix_with(&batch, MixMode::PositivesOnly, &mut rng, |i, branch, _| {
            match branch {
                Branch::Positive => select_contradicting_positive(i, &batch.y, &scores),
                _ => select_contradicting_negative(i, &batch.y, &scores),
            }
        })
        .unwrap();
        assert!(mixed.pairs.iter().all(|p| p.branch == Branch::Negative));
    }

    #[test]
    fn selecmix_labels_are_selected_example_one_hot() {
        let cfg = DatasetConfig {
            n_train: 64,
            alpha: 0.2,
            seed: 3,
            ..DatasetConfig::default()
        };
        let ds = synthdata::generate(&cfg).unwrap();
        let batch = ds.minibatch(&(0..32).collect::<Vec<_>>());
        let mut rng = Rng::new(9);
        let mixed = gt_selecmix_batch(&batch, MixMode::Both, &mut rng).unwrap();
        for p in &mixed.pairs {
            let row = mixed.labels.probs.row(p.query);
            for (c, &v) in row.iter().enumerate() {
                let expect = if c == batch.y[p.selected] { 1.0 } else { 0.0 };
                assert_eq!(v, expect);
            }
            if p.branch != Branch::Passthrough {
                assert!(p.lambda <= 0.5);
            }
        }
    }

    #[test]
    fn mixed_rows_are_elementwise_convex() {
        let cfg = DatasetConfig {
            n_train: 64,
            alpha: 0.3,
            seed: 4,
            ..DatasetConfig::default()
        };
        let ds = synthdata::generate(&cfg).unwrap();
        let batch = ds.minibatch(&(0..24).collect::<Vec<_>>());
        let mut rng = Rng::new(10);
        let mixed = gt_selecmix_batch(&batch, MixMode::Both, &mut rng).unwrap();
        for p in &mixed.pairs {
            for d in 0..batch.x.cols() {
                let a = batch.x.get(p.query, d);
                let b = batch.x.get(p.selected, d);
                let v = mixed.inputs.get(p.query, d);
                assert!(v >= a.min(b) - 1e-12 && v <= a.max(b) + 1e-12);
            }
        }
    }

    #[test]
    fn gt_positive_branch_selects_conflicting_partner_for_aligned_query() {
        // Aligned query (b == y): any same-y different-b partner has b != y,
        // i.e. is bias-conflicting.
        let batch = toy_batch(&[0, 0, 0, 1], &[0, 2, 0, 1]);
        let mut rng = Rng::new(11);
        for _ in 0..20 {
            let mixed = gt_selecmix_batch(&batch, MixMode::PositivesOnly, &mut rng).unwrap();
            let p = mixed.pairs[0];
            assert_eq!(p.branch, Branch::Positive);
            assert_eq!(p.selected, 1);
            assert!(batch.conflicting[p.selected]);
        }
    }

    #[test]
    fn gt_passthrough_when_both_sets_empty() {
        // Unique (y, b) combinations with no shared b across labels and no
        // shared y at all.
        let batch = toy_batch(&[0, 1], &[0, 1]);
        // y differ, b differ → negative set empty; positive set empty too.
        let mut rng = Rng::new(12);
        let mixed = gt_selecmix_batch(&batch, MixMode::Both, &mut rng).unwrap();
        for p in &mixed.pairs {
            assert_eq!(p.branch, Branch::Passthrough);
            assert_eq!(p.query, p.selected);
        }
    }

    #[test]
    fn gt_selection_stays_within_enumerated_sets() {
        let batch = toy_batch(&[0, 0, 1, 1, 0], &[0, 1, 0, 1, 1]);
        let mut rng = Rng::new(13);
        for _ in 0..50 {
            let mixed = gt_selecmix_batch(&batch, MixMode::Both, &mut rng).unwrap();
            for p in &mixed.pairs {
                match p.branch {
                    Branch::Positive => {
                        assert!(gt_candidates(&batch, p.query, Branch::Positive)
                            .contains(&p.selected));
                    }
                    Branch::Negative => {
                        assert!(gt_candidates(&batch, p.query, Branch::Negative)
                            .contains(&p.selected));
                    }
                    Branch::Passthrough => assert_eq!(p.query, p.selected),
                    Branch::Random => unreachable!(),
                }
            }
        }
    }

    #[test]
    fn vanilla_mixup_labels_are_convex_and_sum_to_one() {
        let batch = toy_batch(&[0, 1, 2, 0], &[0, 1, 2, 0]);
        let mut rng = Rng::new(14);
        let mixed = vanilla_mixup_batch(&batch, 3, &mut rng).unwrap();
        for r in 0..4 {
            let sum: f64 = mixed.labels.probs.row(r).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
        // Same-label pair interpolates to a one-hot.
        let same = toy_batch(&[2, 2], &[0, 0]);
        let mut rng = Rng::new(15);
        let mixed = vanilla_mixup_batch(&same, 3, &mut rng).unwrap();
        for r in 0..2 {
            assert_eq!(mixed.labels.probs.get(r, 2), 1.0);
        }
    }

    #[test]
    fn lisa_interpolates_labels_with_raw_lambda() {
        let batch = toy_batch(&[0, 0, 1, 1], &[0, 1, 0, 1]);
        let mut rng = Rng::new(16);
        let mixed = lisa_batch(&batch, 2, MixMode::NegativesOnly, &mut rng).unwrap();
        for p in &mixed.pairs {
            if p.branch == Branch::Negative {
                let yi = batch.y[p.query];
                let yk = batch.y[p.selected];
                assert_ne!(yi, yk);
                let row = mixed.labels.probs.row(p.query);
                assert!((row[yi] - p.lambda).abs() < 1e-12);
                assert!((row[yk] - (1.0 - p.lambda)).abs() < 1e-12);
            }
        }
        // Positive branch: equal labels interpolate to a one-hot.
        let mut rng = Rng::new(17);
        let mixed = lisa_batch(&batch, 2, MixMode::PositivesOnly, &mut rng).unwrap();
        for p in &mixed.pairs {
            if p.branch == Branch::Positive {
                let row = mixed.labels.probs.row(p.query);
                assert_eq!(row[batch.y[p.query]], 1.0);
            }
        }
    }

    #[test]
    fn ground_truth_scores_are_bias_indicators() {
        let batch = toy_batch(&[0, 1, 2], &[5, 5, 6]);
        let scores = similarity_scores(&SimilarityBackend::GroundTruth, &batch).unwrap();
        assert_eq!(scores.get(0, 1), 1.0);
        assert_eq!(scores.get(0, 2), 0.0);
        assert_eq!(scores.get(2, 2), 1.0);
    }

    #[test]
    fn gsc_cosine_diagonal_is_one() {
        let mut rng = Rng::new(18);
        let encoder = MlpParams::new_encoder(&[3, 8, 4], &mut rng);
        let batch = toy_batch(&[0, 1, 0, 1], &[0, 1, 1, 0]);
        let scores =
            similarity_scores(&SimilarityBackend::GscCosine { encoder: &encoder }, &batch)
                .unwrap();
        for i in 0..4 {
            assert!((scores.get(i, i) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_inputs_score_maximally_under_every_backend() {
        let mut batch = toy_batch(&[0, 1, 2], &[0, 1, 2]);
        let row: Vec<f64> = batch.x.row(0).to_vec();
        batch.x.row_mut(1).copy_from_slice(&row);
        batch.b[1] = batch.b[0];
        let mut rng = Rng::new(19);
        let encoder = MlpParams::new_encoder(&[3, 8, 4], &mut rng);
        let classifier = MlpParams::new_classifier(&[3, 8, 4], &mut rng);
        let backends = [
            SimilarityBackend::GscCosine { encoder: &encoder },
            SimilarityBackend::GceCosine { model: &classifier },
            SimilarityBackend::GceL2 { model: &classifier },
            SimilarityBackend::GceKl { model: &classifier },
            SimilarityBackend::GroundTruth,
        ];
        for backend in &backends {
            let s = similarity_scores(backend, &batch).unwrap();
            let max_in_row: f64 = (0..3).map(|j| s.get(0, j)).fold(f64::NEG_INFINITY, f64::max);
            assert!(s.get(0, 1) >= max_in_row - 1e-12);
        }
    }

    #[test]
    fn gce_kl_scores_are_asymmetric() {
        let mut rng = Rng::new(20);
        let classifier = MlpParams::new_classifier(&[3, 8, 4], &mut rng);
        let batch = toy_batch(&[0, 1, 2, 3], &[0, 1, 2, 3]);
        let s = similarity_scores(&SimilarityBackend::GceKl { model: &classifier }, &batch)
            .unwrap();
        let mut any_asym = false;
        for i in 0..4 {
            for j in 0..4 {
                if (s.get(i, j) - s.get(j, i)).abs() > 1e-9 {
                    any_asym = true;
                }
            }
        }
        assert!(any_asym, "KL scores should differ across the diagonal");
    }

    #[test]
    fn wrong_head_kind_is_backend_unavailable() {
        let mut rng = Rng::new(21);
        let classifier = MlpParams::new_classifier(&[3, 8, 4], &mut rng);
        let batch = toy_batch(&[0, 1], &[0, 1]);
        assert!(matches!(
            similarity_scores(
                &SimilarityBackend::GscCosine {
                    encoder: &classifier
                },
                &batch
            ),
            Err(Error::BackendUnavailable(_))
        ));
    }

    #[test]
    fn batch_too_small_is_rejected() {
        let batch = toy_batch(&[0], &[0]);
        let mut rng = Rng::new(22);
        assert!(matches!(
            gt_selecmix_batch(&batch, MixMode::Both, &mut rng),
            Err(Error::BatchTooSmall(1))
        ));
        assert!(matches!(
            vanilla_mixup_batch(&batch, 2, &mut rng),
            Err(Error::BatchTooSmall(1))
        ));
    }

    #[test]
    fn pair_log_csv_has_expected_columns() {
        let cfg = DatasetConfig {
            n_train: 32,
            alpha: 0.25,
            seed: 6,
            ..DatasetConfig::default()
        };
        let ds = synthdata::generate(&cfg).unwrap();
        let batch = ds.minibatch(&(0..16).collect::<Vec<_>>());
        let mut rng = Rng::new(23);
        let mixed = gt_selecmix_batch(&batch, MixMode::Both, &mut rng).unwrap();
        let pairs = mixed.logged_pairs(&batch);
        let mut buf = Vec::new();
        write_pair_log_csv(&pairs, &ds, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(
            header,
            "i,k,lambda,branch,query_is_conflicting,selected_is_conflicting"
        );
        assert_eq!(text.lines().count(), 17);
    }
}
