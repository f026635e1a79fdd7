//! Simultaneous training of the debiased classifier and the auxiliary
//! biased model.
//!
//! Each iteration draws a batch, builds the mixed batch from the auxiliary
//! snapshot taken at the start of the iteration (pre-update), steps the
//! debiased model on lambda_base·CE(B) + lambda_ours·CE(B̃), then steps the
//! auxiliary model on its own loss over the original batch — never over
//! mixed data. Every consumer owns a named RNG stream, so switching the
//! mixing strategy cannot perturb initialization or batch order.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::evalmetrics::{accuracy, pair_selection_recall, pair_similarity_stats, PairCategoryStats, Subset};
use crate::losses::{self, PositiveMode};
use crate::model::{
    adam_step, backward, forward_classifier, forward_encoder, MlpParams, OptimizerState,
    ParamGrads,
};
use crate::numerics::Rng;
use crate::selecmix::{
    gt_selecmix_batch, lisa_batch, selecmix_batch, vanilla_mixup_batch, Branch, LoggedPair,
    MixMode, MixedBatch, SimilarityBackend,
};
use crate::synthdata::{Dataset, Minibatch};
use crate::{Error, Result};

macro_rules! fmt_via_as_str {
    () => {
        fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            f.write_str(self.as_str())
        }
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "vanilla")]
    Vanilla,
    #[serde(rename = "mixup")]
    Mixup,
    #[serde(rename = "selecmix-A")]
    SelecMixA,
    #[serde(rename = "selecmix-B")]
    SelecMixB,
    #[serde(rename = "selecmix-AB")]
    SelecMixAb,
    #[serde(rename = "gt-selecmix-A")]
    GtSelecMixA,
    #[serde(rename = "gt-selecmix-B")]
    GtSelecMixB,
    #[serde(rename = "gt-selecmix-AB")]
    GtSelecMixAb,
    #[serde(rename = "lisa-A")]
    LisaA,
    #[serde(rename = "lisa-B")]
    LisaB,
    #[serde(rename = "lisa-AB")]
    LisaAb,
}

impl Strategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::Vanilla => "vanilla",
            Strategy::Mixup => "mixup",
            Strategy::SelecMixA => "selecmix-A",
            Strategy::SelecMixB => "selecmix-B",
            Strategy::SelecMixAb => "selecmix-AB",
            Strategy::GtSelecMixA => "gt-selecmix-A",
            Strategy::GtSelecMixB => "gt-selecmix-B",
            Strategy::GtSelecMixAb => "gt-selecmix-AB",
            Strategy::LisaA => "lisa-A",
            Strategy::LisaB => "lisa-B",
            Strategy::LisaAb => "lisa-AB",
        }
    }

    pub fn all() -> &'static [Strategy] {
        &[
            Strategy::Vanilla,
            Strategy::Mixup,
            Strategy::SelecMixA,
            Strategy::SelecMixB,
            Strategy::SelecMixAb,
            Strategy::GtSelecMixA,
            Strategy::GtSelecMixB,
            Strategy::GtSelecMixAb,
            Strategy::LisaA,
            Strategy::LisaB,
            Strategy::LisaAb,
        ]
    }

    fn mix_mode(&self) -> Option<MixMode> {
        match self {
            Strategy::Vanilla | Strategy::Mixup => None,
            Strategy::SelecMixA | Strategy::GtSelecMixA | Strategy::LisaA => {
                Some(MixMode::PositivesOnly)
            }
            Strategy::SelecMixB | Strategy::GtSelecMixB | Strategy::LisaB => {
                Some(MixMode::NegativesOnly)
            }
            Strategy::SelecMixAb | Strategy::GtSelecMixAb | Strategy::LisaAb => {
                Some(MixMode::Both)
            }
        }
    }

    fn uses_similarity_backend(&self) -> bool {
        matches!(
            self,
            Strategy::SelecMixA | Strategy::SelecMixB | Strategy::SelecMixAb
        )
    }
}

impl fmt::Display for Strategy {
    fmt_via_as_str!();
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Strategy::all()
            .iter()
            .find(|v| v.as_str() == s)
            .copied()
            .ok_or_else(|| Error::InvalidConfig(format!("unknown strategy {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AuxLossKind {
    #[serde(rename = "gsc")]
    Gsc,
    #[serde(rename = "sc")]
    Sc,
    #[serde(rename = "gce")]
    Gce,
}

impl AuxLossKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AuxLossKind::Gsc => "gsc",
            AuxLossKind::Sc => "sc",
            AuxLossKind::Gce => "gce",
        }
    }
}

impl fmt::Display for AuxLossKind {
    fmt_via_as_str!();
}

impl FromStr for AuxLossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gsc" => Ok(AuxLossKind::Gsc),
            "sc" => Ok(AuxLossKind::Sc),
            "gce" => Ok(AuxLossKind::Gce),
            _ => Err(Error::InvalidConfig(format!("unknown aux loss {s:?}"))),
        }
    }
}

/// Similarity space used by the selecmix-* strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BackendKind {
    #[serde(rename = "gsc-cosine")]
    GscCosine,
    #[serde(rename = "gce-cosine")]
    GceCosine,
    #[serde(rename = "gce-l2")]
    GceL2,
    #[serde(rename = "gce-kl")]
    GceKl,
    #[serde(rename = "ground-truth")]
    GroundTruth,
}

impl BackendKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BackendKind::GscCosine => "gsc-cosine",
            BackendKind::GceCosine => "gce-cosine",
            BackendKind::GceL2 => "gce-l2",
            BackendKind::GceKl => "gce-kl",
            BackendKind::GroundTruth => "ground-truth",
        }
    }
}

impl fmt::Display for BackendKind {
    fmt_via_as_str!();
}

impl FromStr for BackendKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gsc-cosine" => Ok(BackendKind::GscCosine),
            "gce-cosine" => Ok(BackendKind::GceCosine),
            "gce-l2" => Ok(BackendKind::GceL2),
            "gce-kl" => Ok(BackendKind::GceKl),
            "ground-truth" => Ok(BackendKind::GroundTruth),
            _ => Err(Error::InvalidConfig(format!("unknown backend {s:?}"))),
        }
    }
}

/// When the auxiliary model learns: alongside the debiased model, or alone
/// for E epochs after which it is frozen for the main run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuxSchedule {
    Simultaneous,
    Pretrain(usize),
}

impl fmt::Display for AuxSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AuxSchedule::Simultaneous => f.write_str("simultaneous"),
            AuxSchedule::Pretrain(e) => write!(f, "pretrain({e})"),
        }
    }
}

impl FromStr for AuxSchedule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "simultaneous" {
            return Ok(AuxSchedule::Simultaneous);
        }
        if let Some(inner) = s.strip_prefix("pretrain(").and_then(|r| r.strip_suffix(')')) {
            let epochs = inner
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad pretrain epoch count {inner:?}")))?;
            return Ok(AuxSchedule::Pretrain(epochs));
        }
        Err(Error::InvalidConfig(format!("unknown aux schedule {s:?}")))
    }
}

impl Serialize for AuxSchedule {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for AuxSchedule {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub strategy: Strategy,
    pub backend: BackendKind,
    pub aux_loss: AuxLossKind,
    pub aux_schedule: AuxSchedule,
    pub lambda_base: f64,
    pub lambda_ours: f64,
    pub tau: f64,
    pub q: f64,
    pub lr_debiased: f64,
    pub lr_aux: f64,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    /// Subsample size and pairs-per-category for the per-epoch similarity
    /// trace.
    pub sim_stat_sample: usize,
    pub sim_stat_pairs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 256,
            seed: 1,
            strategy: Strategy::SelecMixAb,
            backend: BackendKind::GscCosine,
            aux_loss: AuxLossKind::Gsc,
            aux_schedule: AuxSchedule::Simultaneous,
            lambda_base: 0.0,
            lambda_ours: 1.0,
            tau: 0.2,
            q: 0.7,
            lr_debiased: 5e-3,
            lr_aux: 1e-2,
            hidden_dim: 100,
            embed_dim: 32,
            sim_stat_sample: 2_000,
            sim_stat_pairs: 2_000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::InvalidConfig(msg));
        if self.strategy != Strategy::Vanilla && self.batch_size < 2 {
            return err("batch_size must be >= 2 for any mixing strategy".into());
        }
        if self.batch_size == 0 {
            return err("batch_size must be positive".into());
        }
        if self.lambda_base < 0.0 || self.lambda_ours < 0.0 {
            return err("lambda_base and lambda_ours must be >= 0".into());
        }
        if self.lambda_base == 0.0 && self.lambda_ours == 0.0 {
            return err("lambda_base and lambda_ours cannot both be 0".into());
        }
        if self.strategy == Strategy::Vanilla && self.lambda_base == 0.0 {
            return err("vanilla strategy trains on lambda_base alone; it must be > 0".into());
        }
        if self.tau <= 0.0 {
            return Err(Error::InvalidTau(self.tau));
        }
        if !(self.q > 0.0 && self.q <= 1.0) {
            return Err(Error::InvalidQ(self.q));
        }
        if self.lr_debiased <= 0.0 || self.lr_aux <= 0.0 {
            return err("learning rates must be positive".into());
        }
        if self.hidden_dim == 0 || self.embed_dim == 0 {
            return err("hidden_dim and embed_dim must be positive".into());
        }
        if self.strategy.uses_similarity_backend() {
            let compatible = match self.backend {
                BackendKind::GscCosine => {
                    matches!(self.aux_loss, AuxLossKind::Gsc | AuxLossKind::Sc)
                }
                BackendKind::GceCosine | BackendKind::GceL2 | BackendKind::GceKl => {
                    self.aux_loss == AuxLossKind::Gce
                }
                BackendKind::GroundTruth => true,
            };
            if !compatible {
                return err(format!(
                    "backend {} is incompatible with aux_loss {}",
                    self.backend, self.aux_loss
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub unbiased_acc: f64,
    pub conflict_acc: f64,
    pub train_loss: f64,
    pub aux_loss: f64,
    pub sim: Option<PairCategoryStats>,
    pub recall_positive: Option<f64>,
    pub recall_negative: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunHistory {
    pub config: TrainConfig,
    pub records: Vec<EpochRecord>,
    /// Similarity stats measured before the first update (the epoch-0 row
    /// of trace exports).
    pub initial_sim: Option<PairCategoryStats>,
    pub best_unbiased_acc: f64,
    pub best_epoch: usize,
    pub final_unbiased_acc: f64,
    pub debiased: MlpParams,
    pub auxiliary: MlpParams,
    pub pair_log: Vec<LoggedPair>,
    pub wall_time_secs: f64,
}

/// The three splits a run consumes.
pub struct TrainData<'a> {
    pub train: &'a Dataset,
    pub unbiased: &'a Dataset,
    pub conflict: &'a Dataset,
}

fn new_auxiliary(config: &TrainConfig, input_dim: usize, num_classes: usize, rng: &mut Rng) -> MlpParams {
    match config.aux_loss {
        AuxLossKind::Gsc | AuxLossKind::Sc => MlpParams::new_encoder(
            &[input_dim, config.hidden_dim, config.hidden_dim, config.embed_dim],
            rng,
        ),
        AuxLossKind::Gce => MlpParams::new_classifier(
            &[input_dim, config.hidden_dim, config.hidden_dim, num_classes],
            rng,
        ),
    }
}

/// One auxiliary-model update on the raw batch; returns the loss value.
fn auxiliary_step(
    config: &TrainConfig,
    aux: &mut MlpParams,
    opt: &mut OptimizerState,
    batch: &Minibatch,
) -> Result<f64> {
    let (value, grads) = auxiliary_loss_grads(config, aux, batch)?;
    adam_step(opt, aux, &grads);
    Ok(value)
}

fn auxiliary_loss_grads(
    config: &TrainConfig,
    aux: &MlpParams,
    batch: &Minibatch,
) -> Result<(f64, ParamGrads)> {
    match config.aux_loss {
        AuxLossKind::Gsc => {
            let (z, cache) = forward_encoder(aux, &batch.x)?;
            let lr = losses::gsc(&z, &batch.y, config.tau, config.q, PositiveMode::SkipEmpty)?;
            Ok((lr.value, backward(aux, &cache, &lr.grad_input)?))
        }
        AuxLossKind::Sc => {
            let (z, cache) = forward_encoder(aux, &batch.x)?;
            let lr = losses::sc(&z, &batch.y, config.tau, PositiveMode::SkipEmpty)?;
            Ok((lr.value, backward(aux, &cache, &lr.grad_input)?))
        }
        AuxLossKind::Gce => {
            let (logits, cache) = forward_classifier(aux, &batch.x)?;
            let lr = losses::gce(&logits, &batch.y, config.q)?;
            Ok((lr.value, backward(aux, &cache, &lr.grad_input)?))
        }
    }
}

fn build_mixed_batch(
    config: &TrainConfig,
    aux: &MlpParams,
    batch: &Minibatch,
    num_classes: usize,
    rng: &mut Rng,
) -> Result<Option<MixedBatch>> {
    let mixed = match config.strategy {
        Strategy::Vanilla => None,
        Strategy::Mixup => Some(vanilla_mixup_batch(batch, num_classes, rng)?),
        Strategy::SelecMixA | Strategy::SelecMixB | Strategy::SelecMixAb => {
            let mode = config.strategy.mix_mode().unwrap();
            let backend = match config.backend {
                BackendKind::GscCosine => SimilarityBackend::GscCosine { encoder: aux },
                BackendKind::GceCosine => SimilarityBackend::GceCosine { model: aux },
                BackendKind::GceL2 => SimilarityBackend::GceL2 { model: aux },
                BackendKind::GceKl => SimilarityBackend::GceKl { model: aux },
                BackendKind::GroundTruth => SimilarityBackend::GroundTruth,
            };
            Some(selecmix_batch(batch, &backend, mode, rng)?)
        }
        Strategy::GtSelecMixA | Strategy::GtSelecMixB | Strategy::GtSelecMixAb => {
            Some(gt_selecmix_batch(batch, config.strategy.mix_mode().unwrap(), rng)?)
        }
        Strategy::LisaA | Strategy::LisaB | Strategy::LisaAb => Some(lisa_batch(
            batch,
            num_classes,
            config.strategy.mix_mode().unwrap(),
            rng,
        )?),
    };
    Ok(mixed)
}

/// Mixed-batch labels are one-hot over the batch's label alphabet; widen to
/// the dataset's class count so logits and labels line up.
fn widen_labels(mixed: &MixedBatch, num_classes: usize) -> Result<losses::SoftLabelBatch> {
    let probs = &mixed.labels.probs;
    if probs.cols() == num_classes {
        return Ok(mixed.labels.clone());
    }
    let mut wide = crate::numerics::Matrix::zeros(probs.rows(), num_classes);
    for r in 0..probs.rows() {
        for c in 0..probs.cols() {
            wide.set(r, c, probs.get(r, c));
        }
    }
    losses::SoftLabelBatch::from_probs(wide)
}

struct EpochPlan {
    batches: Vec<Vec<usize>>,
}

fn plan_epoch(n: usize, batch_size: usize, rng: &mut Rng) -> EpochPlan {
    let mut indices: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut indices);
    let mut batches = Vec::new();
    for chunk in indices.chunks(batch_size) {
        // A trailing singleton cannot be mixed; drop it.
        if chunk.len() >= 2 {
            batches.push(chunk.to_vec());
        }
    }
    EpochPlan { batches }
}

/// Trains the auxiliary model alone for E epochs with its configured loss,
/// starting from the same initialization the main run would use; the result
/// is frozen for the main run.
pub fn pretrain_auxiliary(config: &TrainConfig, train: &Dataset) -> Result<MlpParams> {
    config.validate()?;
    let epochs = match config.aux_schedule {
        AuxSchedule::Pretrain(e) => e,
        AuxSchedule::Simultaneous => {
            return Err(Error::InvalidConfig(
                "pretrain_auxiliary requires aux_schedule = pretrain(E)".into(),
            ))
        }
    };
    let mut init_rng = Rng::with_stream(config.seed, "trainer/init-aux");
    let mut aux = new_auxiliary(
        config,
        train.config.feature_dim(),
        train.config.num_classes,
        &mut init_rng,
    );
    let mut opt = OptimizerState::new(&aux, config.lr_aux);
    let mut shuffle_rng = Rng::with_stream(config.seed, "trainer/pretrain-shuffle");
    for _ in 0..epochs {
        let plan = plan_epoch(train.len(), config.batch_size, &mut shuffle_rng);
        for chunk in &plan.batches {
            let batch = train.minibatch(chunk);
            let value = auxiliary_step(config, &mut aux, &mut opt, &batch)?;
            if !value.is_finite() {
                return Err(Error::InvalidConfig(
                    "auxiliary pretraining diverged".into(),
                ));
            }
        }
    }
    Ok(aux)
}

/// Runs the full training loop and reports per-epoch metrics, checkpoints,
/// and the pair log. Fully deterministic given the config.
pub fn train(config: &TrainConfig, data: &TrainData) -> Result<RunHistory> {
    config.validate()?;
    let started = Instant::now();
    let train_ds = data.train;
    let input_dim = train_ds.config.feature_dim();
    let num_classes = train_ds.config.num_classes;

    let mut init_deb = Rng::with_stream(config.seed, "trainer/init-debiased");
    let mut debiased = MlpParams::new_classifier(
        &[input_dim, config.hidden_dim, config.hidden_dim, num_classes],
        &mut init_deb,
    );
    let mut deb_opt = OptimizerState::new(&debiased, config.lr_debiased);

    let (mut auxiliary, aux_frozen) = match config.aux_schedule {
        AuxSchedule::Simultaneous => {
            let mut init_aux = Rng::with_stream(config.seed, "trainer/init-aux");
            (
                new_auxiliary(config, input_dim, num_classes, &mut init_aux),
                false,
            )
        }
        AuxSchedule::Pretrain(_) => (pretrain_auxiliary(config, train_ds)?, true),
    };
    let mut aux_opt = OptimizerState::new(&auxiliary, config.lr_aux);

    let mut shuffle_rng = Rng::with_stream(config.seed, "trainer/shuffle");
    let mut mix_rng = Rng::with_stream(config.seed, "trainer/mix");

    let initial_sim = pair_similarity_stats(
        &auxiliary,
        train_ds,
        config.sim_stat_sample,
        config.sim_stat_pairs,
        config.seed,
    )
    .ok();

    let mut records: Vec<EpochRecord> = Vec::with_capacity(config.epochs);
    let mut pair_log: Vec<LoggedPair> = Vec::new();
    let mut iteration = 0usize;

    let partial_history = |records: &[EpochRecord],
                           pair_log: &[LoggedPair],
                           debiased: &MlpParams,
                           auxiliary: &MlpParams,
                           started: Instant| {
        let mut h = RunHistory {
            config: config.clone(),
            records: records.to_vec(),
            initial_sim,
            best_unbiased_acc: 0.0,
            best_epoch: 0,
            final_unbiased_acc: 0.0,
            debiased: debiased.clone(),
            auxiliary: auxiliary.clone(),
            pair_log: pair_log.to_vec(),
            wall_time_secs: started.elapsed().as_secs_f64(),
        };
        finalize_best(&mut h);
        h
    };

    for epoch in 1..=config.epochs {
        let plan = plan_epoch(train_ds.len(), config.batch_size, &mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut aux_loss_sum = 0.0;
        let mut epoch_pairs: Vec<LoggedPair> = Vec::new();

        for chunk in &plan.batches {
            iteration += 1;
            let batch = train_ds.minibatch(chunk);

            // Mixed batch from the pre-update auxiliary snapshot.
            let mixed = build_mixed_batch(config, &auxiliary, &batch, num_classes, &mut mix_rng)?;

            // Debiased update: lambda_base·CE(B) + lambda_ours·CE(B̃).
            let mut grads = ParamGrads::zeros_like(&debiased);
            let mut loss_value = 0.0;
            if config.lambda_base > 0.0 {
                let (logits, cache) = forward_classifier(&debiased, &batch.x)?;
                let lr = losses::ce_hard(&logits, &batch.y)?;
                let g = backward(&debiased, &cache, &lr.grad_input)?;
                grads.add_scaled(&g, config.lambda_base);
                loss_value += config.lambda_base * lr.value;
            }
            if let Some(m) = &mixed {
                if config.lambda_ours > 0.0 {
                    let labels = widen_labels(m, num_classes)?;
                    let (logits, cache) = forward_classifier(&debiased, &m.inputs)?;
                    let lr = losses::ce(&logits, &labels)?;
                    let g = backward(&debiased, &cache, &lr.grad_input)?;
                    grads.add_scaled(&g, config.lambda_ours);
                    loss_value += config.lambda_ours * lr.value;
                }
            }
            if !loss_value.is_finite() || !grads.is_finite() {
                pair_log.extend(epoch_pairs);
                return Err(Error::Diverged {
                    iteration,
                    history: Box::new(partial_history(
                        &records, &pair_log, &debiased, &auxiliary, started,
                    )),
                });
            }
            adam_step(&mut deb_opt, &mut debiased, &grads);

            // Auxiliary update on the original batch, never on mixed data.
            if !aux_frozen {
                let aux_value = auxiliary_step(config, &mut auxiliary, &mut aux_opt, &batch)?;
                if !aux_value.is_finite() {
                    pair_log.extend(epoch_pairs);
                    return Err(Error::Diverged {
                        iteration,
                        history: Box::new(partial_history(
                            &records, &pair_log, &debiased, &auxiliary, started,
                        )),
                    });
                }
                aux_loss_sum += aux_value;
            }

            loss_sum += loss_value;
            if let Some(m) = &mixed {
                epoch_pairs.extend(m.logged_pairs(&batch));
            }
        }

        let n_batches = plan.batches.len().max(1) as f64;
        let unbiased_acc = accuracy(&debiased, data.unbiased, Subset::All)?;
        let conflict_acc = accuracy(&debiased, data.conflict, Subset::All)?;
        let sim = pair_similarity_stats(
            &auxiliary,
            train_ds,
            config.sim_stat_sample,
            config.sim_stat_pairs,
            config.seed.wrapping_add(epoch as u64),
        )
        .ok();
        let recall_positive = pair_selection_recall(&epoch_pairs, train_ds, Branch::Positive)
            .ok()
            .map(|r| r.recall);
        let recall_negative = pair_selection_recall(&epoch_pairs, train_ds, Branch::Negative)
            .ok()
            .map(|r| r.recall);

        records.push(EpochRecord {
            epoch,
            unbiased_acc,
            conflict_acc,
            train_loss: loss_sum / n_batches,
            aux_loss: aux_loss_sum / n_batches,
            sim,
            recall_positive,
            recall_negative,
        });
        pair_log.extend(epoch_pairs);
    }

    let mut history = RunHistory {
        config: config.clone(),
        records,
        initial_sim,
        best_unbiased_acc: 0.0,
        best_epoch: 0,
        final_unbiased_acc: 0.0,
        debiased,
        auxiliary,
        pair_log,
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    finalize_best(&mut history);
    Ok(history)
}

fn finalize_best(history: &mut RunHistory) {
    let mut best = 0.0;
    let mut best_epoch = 0;
    for rec in &history.records {
        if rec.unbiased_acc > best {
            best = rec.unbiased_acc;
            best_epoch = rec.epoch;
        }
    }
    history.best_unbiased_acc = best;
    history.best_epoch = best_epoch;
    history.final_unbiased_acc = history.records.last().map_or(0.0, |r| r.unbiased_acc);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::{self, DatasetConfig};

    fn quick_data(alpha: f64, seed: u64) -> (Dataset, Dataset, Dataset) {
        let cfg = DatasetConfig {
            n_train: 600,
            n_test: 400,
            alpha,
            seed,
            ..DatasetConfig::default()
        };
        let train = synthdata::generate(&cfg).unwrap();
        let (unbiased, conflict) = synthdata::generate_eval(&cfg).unwrap();
        (train, unbiased, conflict)
    }

    fn quick_config(strategy: Strategy, epochs: usize) -> TrainConfig {
        let (lambda_base, lambda_ours) = match strategy {
            Strategy::Vanilla => (1.0, 0.0),
            _ => (0.0, 1.0),
        };
        TrainConfig {
            epochs,
            batch_size: 64,
            strategy,
            lambda_base,
            lambda_ours,
            sim_stat_sample: 200,
            sim_stat_pairs: 200,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_yields_init_checkpoints_and_empty_history() {
        let (train, unbiased, conflict) = quick_data(0.1, 1);
        let config = quick_config(Strategy::Vanilla, 0);
        let h = train_run(&config, &train, &unbiased, &conflict);
        assert!(h.records.is_empty());
        let mut rng = Rng::with_stream(config.seed, "trainer/init-debiased");
        let init = MlpParams::new_classifier(
            &[
                train.config.feature_dim(),
                config.hidden_dim,
                config.hidden_dim,
                train.config.num_classes,
            ],
            &mut rng,
        );
        assert_eq!(h.debiased.param_hash(), init.param_hash());
    }

    fn train_run(
        config: &TrainConfig,
        train_ds: &Dataset,
        unbiased: &Dataset,
        conflict: &Dataset,
    ) -> RunHistory {
        train(
            config,
            &TrainData {
                train: train_ds,
                unbiased,
                conflict,
            },
        )
        .unwrap()
    }

    #[test]
    fn same_seed_reproduces_everything() {
        let (train_ds, unbiased, conflict) = quick_data(0.1, 2);
        let config = quick_config(Strategy::SelecMixAb, 2);
        let a = train_run(&config, &train_ds, &unbiased, &conflict);
        let b = train_run(&config, &train_ds, &unbiased, &conflict);
        assert_eq!(a.debiased.param_hash(), b.debiased.param_hash());
        assert_eq!(a.auxiliary.param_hash(), b.auxiliary.param_hash());
        assert_eq!(a.best_unbiased_acc, b.best_unbiased_acc);
        assert_eq!(a.records.len(), b.records.len());
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.unbiased_acc, rb.unbiased_acc);
            assert_eq!(ra.train_loss, rb.train_loss);
        }
        assert_eq!(a.pair_log.len(), b.pair_log.len());
    }

    #[test]
    fn vanilla_matches_standalone_erm_loop() {
        // An independently written ERM loop over the same streams must
        // produce the debiased model bit-for-bit.
        let (train_ds, unbiased, conflict) = quick_data(0.05, 3);
        let config = quick_config(Strategy::Vanilla, 2);
        let h = train_run(&config, &train_ds, &unbiased, &conflict);

        let mut rng = Rng::with_stream(config.seed, "trainer/init-debiased");
        let mut model = MlpParams::new_classifier(
            &[
                train_ds.config.feature_dim(),
                config.hidden_dim,
                config.hidden_dim,
                train_ds.config.num_classes,
            ],
            &mut rng,
        );
        let mut opt = OptimizerState::new(&model, config.lr_debiased);
        let mut shuffle = Rng::with_stream(config.seed, "trainer/shuffle");
        for _ in 0..config.epochs {
            let mut idx: Vec<usize> = (0..train_ds.len()).collect();
            shuffle.shuffle(&mut idx);
            for chunk in idx.chunks(config.batch_size) {
                if chunk.len() < 2 {
                    continue;
                }
                let batch = train_ds.minibatch(chunk);
                let (logits, cache) = forward_classifier(&model, &batch.x).unwrap();
                let lr = losses::ce_hard(&logits, &batch.y).unwrap();
                let g = backward(&model, &cache, &lr.grad_input).unwrap();
                adam_step(&mut opt, &mut model, &g);
            }
        }
        assert_eq!(h.debiased.param_hash(), model.param_hash());
    }

    #[test]
    fn auxiliary_trajectory_is_isolated_from_strategy() {
        // The auxiliary model sees only raw batches, so its trajectory is
        // identical under vanilla and selecmix configs with shared seeds.
        let (train_ds, unbiased, conflict) = quick_data(0.1, 4);
        let vanilla = quick_config(Strategy::Vanilla, 2);
        let selec = quick_config(Strategy::SelecMixAb, 2);
        let a = train_run(&vanilla, &train_ds, &unbiased, &conflict);
        let b = train_run(&selec, &train_ds, &unbiased, &conflict);
        assert_eq!(a.auxiliary.param_hash(), b.auxiliary.param_hash());
        // And the debiased trajectories differ (mixing changed them).
        assert_ne!(a.debiased.param_hash(), b.debiased.param_hash());
    }

    #[test]
    fn pretrain_zero_epochs_is_initialization() {
        let (train_ds, _, _) = quick_data(0.1, 5);
        let mut config = quick_config(Strategy::SelecMixAb, 1);
        config.aux_schedule = AuxSchedule::Pretrain(0);
        let aux = pretrain_auxiliary(&config, &train_ds).unwrap();
        let mut rng = Rng::with_stream(config.seed, "trainer/init-aux");
        let init = new_auxiliary(
            &config,
            train_ds.config.feature_dim(),
            train_ds.config.num_classes,
            &mut rng,
        );
        assert_eq!(aux.param_hash(), init.param_hash());
    }

    #[test]
    fn pretrain_is_deterministic() {
        let (train_ds, _, _) = quick_data(0.1, 6);
        let mut config = quick_config(Strategy::SelecMixAb, 1);
        config.aux_schedule = AuxSchedule::Pretrain(5);
        let a = pretrain_auxiliary(&config, &train_ds).unwrap();
        let b = pretrain_auxiliary(&config, &train_ds).unwrap();
        assert_eq!(a.param_hash(), b.param_hash());
    }

    #[test]
    fn frozen_pretrained_aux_is_untouched_by_main_run() {
        let (train_ds, unbiased, conflict) = quick_data(0.1, 7);
        let mut config = quick_config(Strategy::SelecMixAb, 2);
        config.aux_schedule = AuxSchedule::Pretrain(1);
        let frozen = pretrain_auxiliary(&config, &train_ds).unwrap();
        let h = train_run(&config, &train_ds, &unbiased, &conflict);
        assert_eq!(h.auxiliary.param_hash(), frozen.param_hash());
    }

    #[test]
    fn gt_strategy_works_and_logs_pairs() {
        let (train_ds, unbiased, conflict) = quick_data(0.2, 8);
        let config = quick_config(Strategy::GtSelecMixAb, 1);
        let h = train_run(&config, &train_ds, &unbiased, &conflict);
        assert!(!h.pair_log.is_empty());
        // Ground-truth selection: every non-passthrough pair is truly
        // contradicting.
        let report =
            pair_selection_recall(&h.pair_log, &train_ds, Branch::Positive).unwrap();
        assert_eq!(report.recall, 1.0);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad_lambdas = TrainConfig {
            lambda_base: 0.0,
            lambda_ours: 0.0,
            ..TrainConfig::default()
        };
        assert!(bad_lambdas.validate().is_err());

        let vanilla_no_base = TrainConfig {
            strategy: Strategy::Vanilla,
            lambda_base: 0.0,
            lambda_ours: 1.0,
            ..TrainConfig::default()
        };
        assert!(vanilla_no_base.validate().is_err());

        let mismatched_backend = TrainConfig {
            strategy: Strategy::SelecMixAb,
            backend: BackendKind::GceCosine,
            aux_loss: AuxLossKind::Gsc,
            ..TrainConfig::default()
        };
        assert!(mismatched_backend.validate().is_err());

        let tiny_batch = TrainConfig {
            batch_size: 1,
            ..TrainConfig::default()
        };
        assert!(tiny_batch.validate().is_err());
    }

    #[test]
    fn strategy_round_trips_through_strings() {
        for s in Strategy::all() {
            assert_eq!(*s, s.as_str().parse().unwrap());
        }
        assert!("selecmix-ab".parse::<Strategy>().is_err());
        assert_eq!(
            "pretrain(12)".parse::<AuxSchedule>().unwrap(),
            AuxSchedule::Pretrain(12)
        );
        assert!("pretrain(x)".parse::<AuxSchedule>().is_err());
    }
}
