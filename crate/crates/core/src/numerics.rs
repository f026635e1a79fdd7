//! Dense f64 linear algebra, seeded random sampling, and the
//! finite-difference oracle used to check every analytic gradient.
//!
//! Everything here is deterministic: the same seed produces the same stream
//! on every platform, and matrix operations are plain loops over row-major
//! storage with no threading.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Row-major dense matrix of f64 values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "data length must be rows*cols");
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Matrix { rows: r, cols: c, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// self (m×k) · other (k×n), ikj loop order for cache locality.
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "inner dimensions must agree");
        let (m, k, n) = (self.rows, self.cols, other.cols);
        let mut out = Matrix::zeros(m, n);
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            let o_row = &mut out.data[i * n..(i + 1) * n];
            for (p, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[p * n..(p + 1) * n];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// selfᵀ (k×m) · other (k×n) without materializing the transpose.
    pub fn matmul_at_b(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows, "outer dimensions must agree");
        let (k, m, n) = (self.rows, self.cols, other.cols);
        let mut out = Matrix::zeros(m, n);
        for p in 0..k {
            let a_row = &self.data[p * m..(p + 1) * m];
            let b_row = &other.data[p * n..(p + 1) * n];
            for (i, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let o_row = &mut out.data[i * n..(i + 1) * n];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// self (m×k) · otherᵀ (n×k) without materializing the transpose.
    pub fn matmul_a_bt(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.cols, "inner dimensions must agree");
        let (m, k, n) = (self.rows, self.cols, other.rows);
        let mut out = Matrix::zeros(m, n);
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            for j in 0..n {
                let b_row = &other.data[j * k..(j + 1) * k];
                let mut acc = 0.0;
                for (&a, &b) in a_row.iter().zip(b_row) {
                    acc += a * b;
                }
                out.data[i * n + j] = acc;
            }
        }
        out
    }

    pub fn add_scaled(&mut self, other: &Matrix, scale: f64) {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    /// Adds `bias` to every row in place.
    pub fn add_row_vector(&mut self, bias: &[f64]) {
        assert_eq!(bias.len(), self.cols);
        for r in 0..self.rows {
            for (v, &b) in self.row_mut(r).iter_mut().zip(bias) {
                *v += b;
            }
        }
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

/// FNV-1a over a byte slice; used for stream derivation, file checksums and
/// parameter hashing.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// xoshiro256++ generator seeded through splitmix64. Identical seeds yield
/// identical streams on every platform.
///
/// Consumers derive named substreams with [`Rng::with_stream`] so that
/// toggling one feature (say, the mixing strategy) never shifts the draws
/// seen by another (say, weight initialization).
#[derive(Debug, Clone)]
pub struct Rng {
    s: [u64; 4],
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        let s = [
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
        ];
        Rng { s }
    }

    /// Derives an independent stream from (seed, label).
    pub fn with_stream(seed: u64, label: &str) -> Self {
        Rng::new(seed ^ fnv1a(label.as_bytes()))
    }

    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[0]
            .wrapping_add(self.s[3])
            .rotate_left(23)
            .wrapping_add(self.s[0]);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform draw on the half-open interval [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, n). Rejection sampling keeps the draw unbiased.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0) is undefined");
        let n = n as u64;
        let limit = u64::MAX - u64::MAX % n;
        loop {
            let v = self.next_u64();
            if v < limit {
                return (v % n) as usize;
            }
        }
    }

    /// Standard normal via Box-Muller; consumes exactly two uniforms.
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform(); // (0, 1], keeps the log finite
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }
}

/// Rescales every row to unit Euclidean norm.
pub fn l2_normalize_rows(m: &Matrix) -> Result<Matrix> {
    let mut out = m.clone();
    for r in 0..m.rows() {
        let norm = m.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= 1e-12 {
            return Err(Error::ZeroRow { row: r, norm });
        }
        for v in out.row_mut(r) {
            *v /= norm;
        }
    }
    Ok(out)
}

/// Pairwise dot products of unit-norm rows: S[i][j] = z_i · z_j.
pub fn cosine_sim_matrix(z: &Matrix) -> Result<Matrix> {
    if z.rows() == 0 {
        return Err(Error::ShapeMismatch("empty embedding matrix".into()));
    }
    Ok(z.matmul_a_bt(z))
}

/// Numerically stable row-wise log-softmax (max-shifted).
pub fn log_softmax_rows(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for r in 0..m.rows() {
        let row = out.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
        for v in row {
            *v -= lse;
        }
    }
    out
}

/// Central finite differences: grad[i] = (f(x+h·e_i) − f(x−h·e_i)) / 2h.
///
/// This is the independent oracle for every analytic gradient in the crate;
/// it must never share code with the paths it checks.
pub fn finite_diff_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    assert!(h > 0.0, "step must be positive");
    let mut grad = vec![0.0; x.len()];
    let mut work = x.to_vec();
    for i in 0..x.len() {
        let orig = work[i];
        work[i] = orig + h;
        let plus = f(&work);
        work[i] = orig - h;
        let minus = f(&work);
        work[i] = orig;
        grad[i] = (plus - minus) / (2.0 * h);
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // proptest's prelude also exports an `Rng` trait; be explicit.
    use super::Rng;

    #[test]
    fn normalize_345_triangle() {
        let m = Matrix::from_rows(&[vec![3.0, 4.0]]);
        let n = l2_normalize_rows(&m).unwrap();
        assert!((n.get(0, 0) - 0.6).abs() < 1e-15);
        assert!((n.get(0, 1) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn normalize_unit_row_is_identity() {
        let m = Matrix::from_rows(&[vec![1.0, 0.0, 0.0]]);
        let n = l2_normalize_rows(&m).unwrap();
        assert_eq!(n.row(0), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn normalize_diagonal_row() {
        let m = Matrix::from_rows(&[vec![1.0, 1.0]]);
        let n = l2_normalize_rows(&m).unwrap();
        let expected = 0.7071067811865475;
        assert!((n.get(0, 0) - expected).abs() < 1e-15);
        assert!((n.get(0, 1) - expected).abs() < 1e-15);
    }

    #[test]
    fn normalize_rejects_zero_row() {
        let m = Matrix::from_rows(&[vec![0.0, 0.0]]);
        assert!(matches!(
            l2_normalize_rows(&m),
            Err(Error::ZeroRow { row: 0, .. })
        ));
    }

    #[test]
    fn cosine_identical_rows() {
        let z = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]]);
        let s = cosine_sim_matrix(&z).unwrap();
        for r in 0..2 {
            for c in 0..2 {
                assert!((s.get(r, c) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cosine_orthogonal_rows() {
        let z = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let s = cosine_sim_matrix(&z).unwrap();
        assert!(s.get(0, 1).abs() < 1e-15);
        assert!(s.get(1, 0).abs() < 1e-15);
    }

    #[test]
    fn cosine_hand_value() {
        let z = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.6, 0.8]]);
        let s = cosine_sim_matrix(&z).unwrap();
        assert!((s.get(0, 1) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn cosine_rejects_empty() {
        let z = Matrix::zeros(0, 3);
        assert!(cosine_sim_matrix(&z).is_err());
    }

    #[test]
    fn log_softmax_symmetric_row() {
        let m = Matrix::from_rows(&[vec![0.0, 0.0]]);
        let out = log_softmax_rows(&m);
        let ln2 = std::f64::consts::LN_2;
        assert!((out.get(0, 0) + ln2).abs() < 1e-15);
        assert!((out.get(0, 1) + ln2).abs() < 1e-15);
    }

    #[test]
    fn log_softmax_constant_row() {
        for c in [-7.5, 0.0, 42.0] {
            let m = Matrix::from_rows(&[vec![c, c, c]]);
            let out = log_softmax_rows(&m);
            let ln3 = 3.0f64.ln();
            for j in 0..3 {
                assert!((out.get(0, j) + ln3).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn log_softmax_softplus_value() {
        let m = Matrix::from_rows(&[vec![1.0, 0.0]]);
        let out = log_softmax_rows(&m);
        assert!((out.get(0, 0) - (-0.31326168751822286)).abs() < 1e-15);
        assert!((out.get(0, 1) - (-1.3132616875182228)).abs() < 1e-15);
    }

    #[test]
    fn finite_diff_square() {
        let g = finite_diff_grad(|x| x[0] * x[0], &[3.0], 1e-5);
        assert!((g[0] - 6.0).abs() < 1e-8);
    }

    #[test]
    fn finite_diff_constant() {
        let g = finite_diff_grad(|_| 4.25, &[1.0, 2.0, 3.0], 1e-5);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rng_reproducible() {
        let mut a = Rng::new(1234);
        let mut b = Rng::new(1234);
        for _ in 0..1_000_000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn rng_streams_differ() {
        let mut a = Rng::with_stream(7, "data");
        let mut b = Rng::with_stream(7, "init");
        let same = (0..16).filter(|_| a.next_u64() == b.next_u64()).count();
        assert_eq!(same, 0);
    }

    #[test]
    fn rng_below_covers_range() {
        let mut rng = Rng::new(5);
        let mut seen = [false; 7];
        for _ in 0..1000 {
            seen[rng.below(7)] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn matmul_against_hand_example() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let b = Matrix::from_rows(&[vec![5.0, 6.0], vec![7.0, 8.0]]);
        let c = a.matmul(&b);
        assert_eq!(c.row(0), &[19.0, 22.0]);
        assert_eq!(c.row(1), &[43.0, 50.0]);
        let atb = a.matmul_at_b(&b);
        assert_eq!(atb.row(0), &[26.0, 30.0]);
        assert_eq!(atb.row(1), &[38.0, 44.0]);
        let abt = a.matmul_a_bt(&b);
        assert_eq!(abt.row(0), &[17.0, 23.0]);
        assert_eq!(abt.row(1), &[39.0, 53.0]);
    }

    fn random_matrix(seed: u64, rows: usize, cols: usize) -> Matrix {
        let mut rng = Rng::new(seed);
        let mut m = Matrix::zeros(rows, cols);
        for v in m.as_mut_slice() {
            *v = rng.normal();
        }
        m
    }

    proptest! {
        #[test]
        fn cosine_symmetry(seed in 0u64..1000, rows in 2usize..12, cols in 2usize..8) {
            let m = random_matrix(seed, rows, cols);
            // Random Gaussian rows are almost surely nonzero.
            let z = l2_normalize_rows(&m).unwrap();
            let s = cosine_sim_matrix(&z).unwrap();
            let st = s.transpose();
            prop_assert!(s.max_abs_diff(&st) < 1e-12);
            for i in 0..rows {
                prop_assert!((s.get(i, i) - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn log_softmax_shift_invariance(seed in 0u64..1000, shift in -50.0f64..50.0) {
            let m = random_matrix(seed, 3, 5);
            let shifted = m.map(|v| v + shift);
            let a = log_softmax_rows(&m);
            let b = log_softmax_rows(&shifted);
            prop_assert!(a.max_abs_diff(&b) < 1e-12);
        }

        #[test]
        fn log_softmax_rows_sum_to_one(seed in 0u64..1000) {
            let m = random_matrix(seed, 4, 6);
            let out = log_softmax_rows(&m);
            for r in 0..4 {
                let sum: f64 = out.row(r).iter().map(|v| v.exp()).sum();
                prop_assert!((sum - 1.0).abs() < 1e-10);
            }
        }
    }
}
