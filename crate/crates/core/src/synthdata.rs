//! Parametric synthetic biased datasets.
//!
//! Each example concatenates a hard "robust" block that encodes the true
//! label at low SNR with an easy "bias" block that encodes a hidden bias
//! attribute at high SNR. The bias attribute agrees with the label on all
//! but a fixed fraction alpha of the training examples, so a model that
//! latches onto the easy block generalizes poorly to unbiased data.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::numerics::{fnv1a, Matrix, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub num_classes: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub dim_robust: usize,
    pub dim_bias: usize,
    pub robust_scale: f64,
    pub robust_noise: f64,
    pub bias_scale: f64,
    pub bias_noise: f64,
    /// Fraction of bias-conflicting training examples.
    pub alpha: f64,
    /// Fraction of training labels replaced by random draws.
    pub beta: f64,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            num_classes: 10,
            n_train: 10_000,
            n_test: 5_000,
            dim_robust: 10,
            dim_bias: 10,
            robust_scale: 1.0,
            robust_noise: 0.8,
            bias_scale: 1.0,
            bias_noise: 0.15,
            alpha: 0.01,
            beta: 0.0,
            seed: 1,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::InvalidConfig(msg));
        if self.num_classes < 2 {
            return err(format!("num_classes must be >= 2, got {}", self.num_classes));
        }
        if self.n_train == 0 || self.n_test == 0 {
            return err("n_train and n_test must be positive".into());
        }
        // One-hot class patterns need one coordinate per class in each block.
        if self.dim_robust < self.num_classes || self.dim_bias < self.num_classes {
            return err(format!(
                "dim_robust ({}) and dim_bias ({}) must be >= num_classes ({})",
                self.dim_robust, self.dim_bias, self.num_classes
            ));
        }
        if !(self.robust_noise > 0.0 && self.bias_noise > 0.0) {
            return err("noise scales must be positive".into());
        }
        if self.bias_scale / self.bias_noise <= self.robust_scale / self.robust_noise {
            return err(format!(
                "bias feature must be strictly easier: require bias_scale/bias_noise > \
                 robust_scale/robust_noise, got {:.4} vs {:.4}",
                self.bias_scale / self.bias_noise,
                self.robust_scale / self.robust_noise
            ));
        }
        if !(0.0..=1.0).contains(&self.alpha) || !(0.0..=1.0).contains(&self.beta) {
            return err("alpha and beta must lie in [0, 1]".into());
        }
        Ok(())
    }

    pub fn feature_dim(&self) -> usize {
        self.dim_robust + self.dim_bias
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub x: Vec<f64>,
    /// Class label, possibly overwritten by label noise.
    pub y: usize,
    /// Hidden bias attribute. Training losses never see it; evaluation and
    /// ground-truth selection do.
    pub b: usize,
    /// b differed from the original label at generation time.
    pub is_conflicting: bool,
    /// Label was overwritten by noise injection.
    pub is_noisy: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    UnbiasedTest,
    ConflictTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub examples: Vec<Example>,
    pub config: DatasetConfig,
    pub split: Split,
}

/// A batch view of dataset rows, carrying the global indices it was drawn
/// from so pair logs can refer back to the dataset.
#[derive(Debug, Clone)]
pub struct Minibatch {
    pub x: Matrix,
    pub y: Vec<usize>,
    pub b: Vec<usize>,
    pub conflicting: Vec<bool>,
    pub indices: Vec<usize>,
}

impl Minibatch {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn num_conflicting(&self) -> usize {
        self.examples.iter().filter(|e| e.is_conflicting).count()
    }

    pub fn num_noisy(&self) -> usize {
        self.examples.iter().filter(|e| e.is_noisy).count()
    }

    pub fn minibatch(&self, indices: &[usize]) -> Minibatch {
        let dim = self.config.feature_dim();
        let mut x = Matrix::zeros(indices.len(), dim);
        let mut y = Vec::with_capacity(indices.len());
        let mut b = Vec::with_capacity(indices.len());
        let mut conflicting = Vec::with_capacity(indices.len());
        for (r, &i) in indices.iter().enumerate() {
            let ex = &self.examples[i];
            x.row_mut(r).copy_from_slice(&ex.x);
            y.push(ex.y);
            b.push(ex.b);
            conflicting.push(ex.is_conflicting);
        }
        Minibatch {
            x,
            y,
            b,
            conflicting,
            indices: indices.to_vec(),
        }
    }

    pub fn full_batch(&self) -> Minibatch {
        let indices: Vec<usize> = (0..self.len()).collect();
        self.minibatch(&indices)
    }
}

fn ceil_fraction(frac: f64, n: usize) -> usize {
    (frac * n as f64).ceil() as usize
}

fn fill_features(ex_x: &mut Vec<f64>, y: usize, b: usize, cfg: &DatasetConfig, rng: &mut Rng) {
    for d in 0..cfg.dim_robust {
        let signal = if d == y { cfg.robust_scale } else { 0.0 };
        ex_x.push(signal + cfg.robust_noise * rng.normal());
    }
    for d in 0..cfg.dim_bias {
        let signal = if d == b { cfg.bias_scale } else { 0.0 };
        ex_x.push(signal + cfg.bias_noise * rng.normal());
    }
}

/// Draws a class uniformly among the classes different from `exclude`.
fn random_other_class(num_classes: usize, exclude: usize, rng: &mut Rng) -> usize {
    let raw = rng.below(num_classes - 1);
    if raw >= exclude {
        raw + 1
    } else {
        raw
    }
}

/// Samples `k` distinct indices from 0..n by a partial Fisher-Yates pass.
fn sample_indices(n: usize, k: usize, rng: &mut Rng) -> Vec<usize> {
    let mut all: Vec<usize> = (0..n).collect();
    let k = k.min(n);
    for i in 0..k {
        let j = i + rng.below(n - i);
        all.swap(i, j);
    }
    all.truncate(k);
    all
}

/// Generates the training split. Exactly ceil(alpha·n_train) examples are
/// bias-conflicting; this count is deterministic rather than Bernoulli so
/// the key scarce quantity never varies across seeds with equal configs.
pub fn generate(config: &DatasetConfig) -> Result<Dataset> {
    config.validate()?;
    let n = config.n_train;
    let c = config.num_classes;
    let mut rng = Rng::with_stream(config.seed, "synthdata/train");

    let n_conflicting = ceil_fraction(config.alpha, n).min(n);
    let mut conflict_flag = vec![false; n];
    for i in sample_indices(n, n_conflicting, &mut rng) {
        conflict_flag[i] = true;
    }

    let mut examples = Vec::with_capacity(n);
    for i in 0..n {
        let y = i % c;
        let b = if conflict_flag[i] {
            random_other_class(c, y, &mut rng)
        } else {
            y
        };
        let mut x = Vec::with_capacity(config.feature_dim());
        fill_features(&mut x, y, b, config, &mut rng);
        examples.push(Example {
            x,
            y,
            b,
            is_conflicting: b != y,
            is_noisy: false,
        });
    }
    rng.shuffle(&mut examples);

    Ok(Dataset {
        examples,
        config: config.clone(),
        split: Split::Train,
    })
}

/// Replaces the label of exactly ceil(beta·n) examples (chosen uniformly
/// without replacement) with a uniform draw over all classes. A redraw may
/// coincide with the old label; the example is flagged noisy either way.
/// Conflict flags are untouched: they refer to the original label.
pub fn inject_label_noise(dataset: &Dataset, beta: f64, rng: &mut Rng) -> Dataset {
    let mut out = dataset.clone();
    let n = out.len();
    let k = ceil_fraction(beta, n).min(n);
    let c = out.config.num_classes;
    for i in sample_indices(n, k, rng) {
        out.examples[i].y = rng.below(c);
        out.examples[i].is_noisy = true;
    }
    out.config.beta = beta;
    out
}

/// Generates the two evaluation splits: an unbiased test set where the bias
/// attribute is stratified uniformly within each class, and a conflict test
/// set containing only bias-conflicting examples. Neither carries label
/// noise.
pub fn generate_eval(config: &DatasetConfig) -> Result<(Dataset, Dataset)> {
    config.validate()?;
    let c = config.num_classes;
    let mut rng = Rng::with_stream(config.seed, "synthdata/eval");

    let mut unbiased = Vec::with_capacity(config.n_test);
    let mut per_class_count = vec![0usize; c];
    for i in 0..config.n_test {
        let y = i % c;
        let b = per_class_count[y] % c;
        per_class_count[y] += 1;
        let mut x = Vec::with_capacity(config.feature_dim());
        fill_features(&mut x, y, b, config, &mut rng);
        unbiased.push(Example {
            x,
            y,
            b,
            is_conflicting: b != y,
            is_noisy: false,
        });
    }
    rng.shuffle(&mut unbiased);

    let mut conflict = Vec::with_capacity(config.n_test);
    for i in 0..config.n_test {
        let y = i % c;
        let b = random_other_class(c, y, &mut rng);
        let mut x = Vec::with_capacity(config.feature_dim());
        fill_features(&mut x, y, b, config, &mut rng);
        conflict.push(Example {
            x,
            y,
            b,
            is_conflicting: true,
            is_noisy: false,
        });
    }
    rng.shuffle(&mut conflict);

    Ok((
        Dataset {
            examples: unbiased,
            config: config.clone(),
            split: Split::UnbiasedTest,
        },
        Dataset {
            examples: conflict,
            config: config.clone(),
            split: Split::ConflictTest,
        },
    ))
}

const DATASET_MAGIC: &[u8; 4] = b"SMXD";
const DATASET_VERSION: u32 = 1;

struct ByteWriter {
    buf: Vec<u8>,
}

impl ByteWriter {
    fn new() -> Self {
        ByteWriter { buf: Vec::new() }
    }
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_bits().to_le_bytes());
    }
}

struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        ByteReader { buf, pos: 0 }
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format("truncated file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }
}

fn write_config(w: &mut ByteWriter, cfg: &DatasetConfig) {
    w.u64(cfg.num_classes as u64);
    w.u64(cfg.n_train as u64);
    w.u64(cfg.n_test as u64);
    w.u64(cfg.dim_robust as u64);
    w.u64(cfg.dim_bias as u64);
    w.f64(cfg.robust_scale);
    w.f64(cfg.robust_noise);
    w.f64(cfg.bias_scale);
    w.f64(cfg.bias_noise);
    w.f64(cfg.alpha);
    w.f64(cfg.beta);
    w.u64(cfg.seed);
}

fn read_config(r: &mut ByteReader) -> Result<DatasetConfig> {
    Ok(DatasetConfig {
        num_classes: r.u64()? as usize,
        n_train: r.u64()? as usize,
        n_test: r.u64()? as usize,
        dim_robust: r.u64()? as usize,
        dim_bias: r.u64()? as usize,
        robust_scale: r.f64()?,
        robust_noise: r.f64()?,
        bias_scale: r.f64()?,
        bias_noise: r.f64()?,
        alpha: r.f64()?,
        beta: r.f64()?,
        seed: r.u64()?,
    })
}

/// Serializes a dataset to the versioned binary format: magic, version,
/// config, split tag, fixed-width little-endian records, trailing FNV-1a
/// checksum. Round-trips are bit-exact.
pub fn dataset_to_bytes(d: &Dataset) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.buf.extend_from_slice(DATASET_MAGIC);
    w.u32(DATASET_VERSION);
    write_config(&mut w, &d.config);
    w.u8(match d.split {
        Split::Train => 0,
        Split::UnbiasedTest => 1,
        Split::ConflictTest => 2,
    });
    w.u64(d.examples.len() as u64);
    let dim = d.config.feature_dim();
    for ex in &d.examples {
        debug_assert_eq!(ex.x.len(), dim);
        for &v in &ex.x {
            w.f64(v);
        }
        w.u32(ex.y as u32);
        w.u32(ex.b as u32);
        w.u8(u8::from(ex.is_conflicting) | (u8::from(ex.is_noisy) << 1));
    }
    let checksum = fnv1a(&w.buf);
    w.u64(checksum);
    w.buf
}

pub fn dataset_from_bytes(bytes: &[u8]) -> Result<Dataset> {
    if bytes.len() < 12 {
        return Err(Error::Format("truncated file".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().unwrap());
    if fnv1a(body) != stored {
        return Err(Error::Format("checksum mismatch".into()));
    }
    let mut r = ByteReader::new(body);
    if r.take(4)? != DATASET_MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = r.u32()?;
    if version != DATASET_VERSION {
        return Err(Error::Format(format!(
            "unsupported version {version} (expected {DATASET_VERSION})"
        )));
    }
    let config = read_config(&mut r)?;
    let split = match r.u8()? {
        0 => Split::Train,
        1 => Split::UnbiasedTest,
        2 => Split::ConflictTest,
        t => return Err(Error::Format(format!("unknown split tag {t}"))),
    };
    let n = r.u64()? as usize;
    let dim = config.feature_dim();
    let mut examples = Vec::with_capacity(n);
    for _ in 0..n {
        let mut x = Vec::with_capacity(dim);
        for _ in 0..dim {
            x.push(r.f64()?);
        }
        let y = r.u32()? as usize;
        let b = r.u32()? as usize;
        let flags = r.u8()?;
        examples.push(Example {
            x,
            y,
            b,
            is_conflicting: flags & 1 != 0,
            is_noisy: flags & 2 != 0,
        });
    }
    if r.pos != body.len() {
        return Err(Error::Format("trailing bytes after records".into()));
    }
    Ok(Dataset {
        examples,
        config,
        split,
    })
}

pub fn save(d: &Dataset, path: &Path) -> Result<()> {
    let bytes = dataset_to_bytes(d);
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Dataset> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    dataset_from_bytes(&bytes)
}

/// Plain-text CSV export for external inspection: one row per example.
pub fn write_csv(d: &Dataset, out: &mut impl Write) -> Result<()> {
    let dim = d.config.feature_dim();
    let mut header = String::new();
    for i in 0..dim {
        header.push_str(&format!("x{i},"));
    }
    header.push_str("y,b,is_conflicting,is_noisy");
    writeln!(out, "{header}")?;
    for ex in &d.examples {
        let mut line = String::new();
        for &v in &ex.x {
            line.push_str(&format!("{v},"));
        }
        line.push_str(&format!(
            "{},{},{},{}",
            ex.y,
            ex.b,
            u8::from(ex.is_conflicting),
            u8::from(ex.is_noisy)
        ));
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Counts per (y, b) cell; handy for spot-checking split structure.
pub fn label_bias_table(d: &Dataset) -> BTreeMap<(usize, usize), usize> {
    let mut table = BTreeMap::new();
    for ex in &d.examples {
        *table.entry((ex.y, ex.b)).or_insert(0) += 1;
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(alpha: f64) -> DatasetConfig {
        DatasetConfig {
            n_train: 500,
            n_test: 400,
            alpha,
            seed: 7,
            ..DatasetConfig::default()
        }
    }

    #[test]
    fn alpha_zero_means_all_aligned() {
        let d = generate(&small_config(0.0)).unwrap();
        assert!(d.examples.iter().all(|e| e.b == e.y && !e.is_conflicting));
    }

    #[test]
    fn alpha_one_means_all_conflicting() {
        let d = generate(&small_config(1.0)).unwrap();
        assert!(d.examples.iter().all(|e| e.b != e.y && e.is_conflicting));
    }

    #[test]
    fn conflict_count_is_exact_ceiling() {
        let cfg = DatasetConfig {
            n_train: 10_000,
            alpha: 0.01,
            ..DatasetConfig::default()
        };
        let d = generate(&cfg).unwrap();
        assert_eq!(d.num_conflicting(), 100);

        let cfg = DatasetConfig {
            n_train: 997,
            alpha: 0.013,
            ..DatasetConfig::default()
        };
        let d = generate(&cfg).unwrap();
        assert_eq!(d.num_conflicting(), (0.013f64 * 997.0).ceil() as usize);
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = small_config(0.05);
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(dataset_to_bytes(&a), dataset_to_bytes(&b));
        let other = generate(&DatasetConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(dataset_to_bytes(&a), dataset_to_bytes(&other));
    }

    #[test]
    fn noise_beta_zero_is_identity() {
        let d = generate(&small_config(0.02)).unwrap();
        let mut rng = Rng::with_stream(7, "synthdata/noise");
        let noisy = inject_label_noise(&d, 0.0, &mut rng);
        assert_eq!(d, noisy);
    }

    #[test]
    fn noise_beta_one_flags_everything() {
        let d = generate(&small_config(0.02)).unwrap();
        let mut rng = Rng::with_stream(7, "synthdata/noise");
        let noisy = inject_label_noise(&d, 1.0, &mut rng);
        assert!(noisy.examples.iter().all(|e| e.is_noisy));
    }

    #[test]
    fn noise_count_is_exact_ceiling() {
        let cfg = DatasetConfig {
            n_train: 10_000,
            ..DatasetConfig::default()
        };
        let d = generate(&cfg).unwrap();
        let mut rng = Rng::with_stream(7, "synthdata/noise");
        let noisy = inject_label_noise(&d, 0.05, &mut rng);
        assert_eq!(noisy.num_noisy(), 500);
        // Conflict flags are untouched by noise.
        let flags_before: Vec<bool> = d.examples.iter().map(|e| e.is_conflicting).collect();
        let flags_after: Vec<bool> = noisy.examples.iter().map(|e| e.is_conflicting).collect();
        assert_eq!(flags_before, flags_after);
    }

    #[test]
    fn eval_splits_have_expected_structure() {
        let cfg = DatasetConfig {
            n_test: 5_000,
            ..DatasetConfig::default()
        };
        let (unbiased, conflict) = generate_eval(&cfg).unwrap();
        assert!(conflict.examples.iter().all(|e| e.is_conflicting));
        assert_eq!(unbiased.num_noisy() + conflict.num_noisy(), 0);
        let frac_aligned = unbiased.examples.iter().filter(|e| e.b == e.y).count() as f64
            / unbiased.len() as f64;
        assert!((frac_aligned - 0.10).abs() < 0.02, "got {frac_aligned}");
    }

    #[test]
    fn unbiased_split_stratifies_bias_within_class() {
        let cfg = DatasetConfig {
            n_test: 2_000,
            ..DatasetConfig::default()
        };
        let (unbiased, _) = generate_eval(&cfg).unwrap();
        let table = label_bias_table(&unbiased);
        let c = cfg.num_classes;
        for y in 0..c {
            let counts: Vec<usize> = (0..c).map(|b| *table.get(&(y, b)).unwrap_or(&0)).collect();
            let min = counts.iter().min().unwrap();
            let max = counts.iter().max().unwrap();
            assert!(max - min <= 1, "class {y} bias counts {counts:?}");
        }
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let d = generate(&small_config(0.03)).unwrap();
        let bytes = dataset_to_bytes(&d);
        let back = dataset_from_bytes(&bytes).unwrap();
        assert_eq!(d, back);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let d = generate(&small_config(0.03)).unwrap();
        let bytes = dataset_to_bytes(&d);
        let truncated = &bytes[..bytes.len() - 17];
        assert!(matches!(
            dataset_from_bytes(truncated),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn wrong_version_is_rejected() {
        let d = generate(&small_config(0.03)).unwrap();
        let mut bytes = dataset_to_bytes(&d);
        bytes[4] = 99; // version field
        let body_len = bytes.len() - 8;
        let checksum = fnv1a(&bytes[..body_len]);
        bytes[body_len..].copy_from_slice(&checksum.to_le_bytes());
        assert!(matches!(
            dataset_from_bytes(&bytes),
            Err(Error::Format(msg)) if msg.contains("version")
        ));
    }

    #[test]
    fn corrupted_byte_fails_checksum() {
        let d = generate(&small_config(0.03)).unwrap();
        let mut bytes = dataset_to_bytes(&d);
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xff;
        assert!(matches!(
            dataset_from_bytes(&bytes),
            Err(Error::Format(msg)) if msg.contains("checksum")
        ));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let cfg = DatasetConfig {
            alpha: 1.5,
            ..DatasetConfig::default()
        };
        assert!(matches!(generate(&cfg), Err(Error::InvalidConfig(_))));
        let cfg = DatasetConfig {
            bias_noise: 2.0, // easier robust than bias
            ..DatasetConfig::default()
        };
        assert!(matches!(generate(&cfg), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn csv_export_has_header_and_rows() {
        let d = generate(&small_config(0.1)).unwrap();
        let mut buf = Vec::new();
        write_csv(&d, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with("x0,"));
        assert!(header.ends_with("y,b,is_conflicting,is_noisy"));
        assert_eq!(lines.count(), d.len());
    }
}
