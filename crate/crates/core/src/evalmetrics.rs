//! Evaluation quantities: split accuracies, the bias-label linear probe,
//! pair-similarity statistics by category, and contradicting-pair recall.
//!
//! Everything here is read-only over model snapshots. Bias attributes are
//! consumed only in this module (and by ground-truth selection); the
//! training losses never see them.

use serde::{Deserialize, Serialize};

use crate::losses;
use crate::model::{
    adam_step, backward, embeddings, forward_classifier, MlpParams, OptimizerState,
};
use crate::numerics::{Matrix, Rng};
use crate::selecmix::{Branch, LoggedPair};
use crate::synthdata::Dataset;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Subset {
    All,
    ConflictingOnly,
}

fn argmax_lowest_tie(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Fraction of argmax predictions matching the label over the subset; logit
/// ties resolve to the lowest class index.
pub fn accuracy(model: &MlpParams, dataset: &Dataset, subset: Subset) -> Result<f64> {
    let indices: Vec<usize> = (0..dataset.len())
        .filter(|&i| match subset {
            Subset::All => true,
            Subset::ConflictingOnly => dataset.examples[i].is_conflicting,
        })
        .collect();
    if indices.is_empty() {
        return Err(Error::EmptySubset);
    }
    let batch = dataset.minibatch(&indices);
    let (logits, _) = forward_classifier(model, &batch.x)?;
    let correct = (0..indices.len())
        .filter(|&r| argmax_lowest_tie(logits.row(r)) == batch.y[r])
        .count();
    Ok(correct as f64 / indices.len() as f64)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        // Full-batch Adam, fixed recipe for determinism. 300 steps at this
        // rate drive a linear probe to convergence on separable embeddings.
        ProbeConfig {
            epochs: 300,
            learning_rate: 1e-2,
            seed: 0,
        }
    }
}

/// Trains a linear classifier on the frozen model's embeddings to predict
/// the bias attribute, then reports its accuracy on the eval split. The
/// encoder itself is never touched.
pub fn bias_probe(
    model: &MlpParams,
    train: &Dataset,
    eval: &Dataset,
    cfg: &ProbeConfig,
) -> Result<f64> {
    let train_batch = train.full_batch();
    let eval_batch = eval.full_batch();
    let train_z = embeddings(model, &train_batch.x)?;
    let eval_z = embeddings(model, &eval_batch.x)?;

    let num_classes = train.config.num_classes;
    let mut rng = Rng::with_stream(cfg.seed, "probe/init");
    let mut probe = MlpParams::new_classifier(&[train_z.cols(), num_classes], &mut rng);
    let mut opt = OptimizerState::new(&probe, cfg.learning_rate);
    for _ in 0..cfg.epochs {
        let (logits, cache) = forward_classifier(&probe, &train_z)?;
        let lr = losses::ce_hard(&logits, &train_batch.b)?;
        let grads = backward(&probe, &cache, &lr.grad_input)?;
        adam_step(&mut opt, &mut probe, &grads);
    }

    let (logits, _) = forward_classifier(&probe, &eval_z)?;
    let correct = (0..eval_batch.len())
        .filter(|&r| argmax_lowest_tie(logits.row(r)) == eval_batch.b[r])
        .count();
    Ok(correct as f64 / eval_batch.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryStat {
    pub mean: f64,
    pub count: usize,
}

/// Mean cosine similarity of sampled pairs in the four categories used to
/// characterize the auxiliary embedding space. Contradicting positives are
/// a subset of positives, contradicting negatives of negatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairCategoryStats {
    pub positives: CategoryStat,
    pub negatives: CategoryStat,
    pub contradicting_positives: CategoryStat,
    pub contradicting_negatives: CategoryStat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PairCategory {
    Positive,
    Negative,
    ContradictingPositive,
    ContradictingNegative,
}

impl PairCategory {
    fn admits(self, same_y: bool, same_b: bool) -> bool {
        match self {
            PairCategory::Positive => same_y,
            PairCategory::Negative => !same_y,
            PairCategory::ContradictingPositive => same_y && !same_b,
            PairCategory::ContradictingNegative => !same_y && same_b,
        }
    }

    fn name(self) -> &'static str {
        match self {
            PairCategory::Positive => "positives",
            PairCategory::Negative => "negatives",
            PairCategory::ContradictingPositive => "contradicting_positives",
            PairCategory::ContradictingNegative => "contradicting_negatives",
        }
    }
}

fn unit_rows_or_zero(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for r in 0..out.rows() {
        let norm = out.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            for v in out.row_mut(r) {
                *v /= norm;
            }
        }
    }
    out
}

/// Samples `n_pairs` ordered pairs per category from a seeded subsample of
/// the dataset and averages the cosine similarity of the model's embeddings
/// within each category.
pub fn pair_similarity_stats(
    model: &MlpParams,
    dataset: &Dataset,
    sample_size: usize,
    n_pairs: usize,
    seed: u64,
) -> Result<PairCategoryStats> {
    let mut rng = Rng::with_stream(seed, "eval/pair-stats");
    let mut indices: Vec<usize> = (0..dataset.len()).collect();
    rng.shuffle(&mut indices);
    indices.truncate(sample_size.min(dataset.len()));

    let batch = dataset.minibatch(&indices);
    let z = unit_rows_or_zero(&embeddings(model, &batch.x)?);
    let n = indices.len();

    // Candidate lists per sampled position, per category. Memory is O(n·C)
    // for the contradicting categories.
    let classes: Vec<usize> = batch.y.clone();
    let biases: Vec<usize> = batch.b.clone();

    let sample_category = |cat: PairCategory, rng: &mut Rng| -> Result<CategoryStat> {
        let mut candidates: Vec<Vec<usize>> = vec![Vec::new(); n];
        for i in 0..n {
            for j in 0..n {
                if j == i {
                    continue;
                }
                let same_y = classes[j] == classes[i];
                let same_b = biases[j] == biases[i];
                if cat.admits(same_y, same_b) {
                    candidates[i].push(j);
                }
            }
        }
        let eligible: Vec<usize> = (0..n).filter(|&i| !candidates[i].is_empty()).collect();
        if eligible.is_empty() {
            return Err(Error::EmptyCategory(cat.name()));
        }
        let mut sum = 0.0;
        for _ in 0..n_pairs {
            let i = eligible[rng.below(eligible.len())];
            let j = candidates[i][rng.below(candidates[i].len())];
            let dot: f64 = z.row(i).iter().zip(z.row(j)).map(|(a, b)| a * b).sum();
            sum += dot;
        }
        Ok(CategoryStat {
            mean: sum / n_pairs as f64,
            count: n_pairs,
        })
    };

    Ok(PairCategoryStats {
        positives: sample_category(PairCategory::Positive, &mut rng)?,
        negatives: sample_category(PairCategory::Negative, &mut rng)?,
        contradicting_positives: sample_category(PairCategory::ContradictingPositive, &mut rng)?,
        contradicting_negatives: sample_category(PairCategory::ContradictingNegative, &mut rng)?,
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RecallReport {
    pub branch: Branch,
    /// Fraction of logged selections that are truly contradicting.
    pub recall: f64,
    pub selected_pairs: usize,
    pub contradicting_pairs: usize,
}

/// Recall of contradicting-pair discovery for one branch of a pair log.
/// Positive branch: a selection counts when y matches and b differs;
/// negative branch: y differs and b matches.
pub fn pair_selection_recall(
    log: &[LoggedPair],
    dataset: &Dataset,
    branch: Branch,
) -> Result<RecallReport> {
    let mut selected = 0usize;
    let mut contradicting = 0usize;
    for p in log {
        if p.branch != branch {
            continue;
        }
        selected += 1;
        let q = &dataset.examples[p.query];
        let s = &dataset.examples[p.selected];
        let hit = match branch {
            Branch::Positive => q.y == s.y && q.b != s.b,
            Branch::Negative => q.y != s.y && q.b == s.b,
            _ => false,
        };
        if hit {
            contradicting += 1;
        }
    }
    if selected == 0 {
        return Err(Error::EmptyLog);
    }
    Ok(RecallReport {
        branch,
        recall: contradicting as f64 / selected as f64,
        selected_pairs: selected,
        contradicting_pairs: contradicting,
    })
}
