//! Dense f64 matrices and a counter-based deterministic RNG.
//!
//! Everything downstream (features, weights, gradients, velocities, MSV
//! maps) is carried by [`Matrix`]. All operations are pure: inputs are
//! never mutated. 64-bit floats throughout; temperature is a second-moment
//! statistic of small displacements and would not survive f32.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Row-major dense matrix of f64.
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
        assert_eq!(data.len(), rows * cols, "data length must be rows*cols");
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Matrix { rows: r, cols: c, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
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

    /// Standard product; dims (self.rows x other.cols).
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::config(format!(
                "matmul dimension mismatch: {}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        let n = other.cols;
        for i in 0..self.rows {
            let a_row = &self.data[i * self.cols..(i + 1) * self.cols];
            let out_row = &mut out.data[i * n..(i + 1) * n];
            for (k, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * n..(k + 1) * n];
                for j in 0..n {
                    out_row[j] += a * b_row[j];
                }
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// Entry-wise application of `f`; same shape. Fails if `f` produces
    /// a non-finite value, naming `context` in the error.
    pub fn map_checked(&self, f: impl Fn(f64) -> f64, context: &str) -> Result<Matrix> {
        let mut out = self.clone();
        for v in &mut out.data {
            *v = f(*v);
            if !v.is_finite() {
                return Err(Error::numeric(format!(
                    "non-finite value produced in {context}"
                )));
            }
        }
        Ok(out)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let mut out = self.clone();
        for v in &mut out.data {
            *v = f(*v);
        }
        out
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        out
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a -= b;
        }
        out
    }

    pub fn scale(&self, s: f64) -> Matrix {
        self.map(|v| v * s)
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Broadcast-add a 1xC bias to every row.
    pub fn add_row_broadcast(&self, bias: &Matrix) -> Matrix {
        assert_eq!(bias.rows, 1);
        assert_eq!(bias.cols, self.cols);
        let mut out = self.clone();
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[i * self.cols + j] += bias.data[j];
            }
        }
        out
    }

    /// 1xC matrix of column sums.
    pub fn col_sums(&self) -> Matrix {
        let mut out = Matrix::zeros(1, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j] += self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based deterministic RNG: output k depends only on (seed, k),
/// so trials seeded independently reproduce regardless of launch order.
/// Not shared across threads; each trial owns its own stream.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RngStream {
    seed: u64,
    counter: u64,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream { seed, counter: 0 }
    }

    /// Independent stream derived from this one's seed and a label.
    pub fn substream(&self, label: u64) -> RngStream {
        RngStream {
            seed: splitmix64(self.seed ^ splitmix64(label)),
            counter: 0,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let x = splitmix64(self.seed.wrapping_add(self.counter.wrapping_mul(GOLDEN)));
        self.counter += 1;
        splitmix64(x ^ self.seed.rotate_left(17))
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        let u1 = loop {
            let u = self.next_f64();
            if u > 0.0 {
                break u;
            }
        };
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = (self.next_u64() % (i as u64 + 1)) as usize;
            items.swap(i, j);
        }
    }
}

/// Normal(0, std) matrix; deterministic given (seed, call order).
pub fn rng_normal(stream: &mut RngStream, rows: usize, cols: usize, std: f64) -> Matrix {
    assert!(std > 0.0, "std must be positive");
    let mut m = Matrix::zeros(rows, cols);
    for v in m.as_mut_slice() {
        *v = stream.normal() * std;
    }
    m
}

/// Glorot-uniform init: U(-a, a) with a = sqrt(6/(fan_in+fan_out)).
pub fn glorot_init(fan_in: usize, fan_out: usize, stream: &mut RngStream) -> Matrix {
    assert!(fan_in >= 1 && fan_out >= 1);
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let mut m = Matrix::zeros(fan_in, fan_out);
    for v in m.as_mut_slice() {
        *v = stream.uniform(-a, a);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn matmul_identity() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0], vec![7.0, 8.0, 9.0]]);
        let i = Matrix::identity(3);
        assert_eq!(i.matmul(&a).unwrap(), a);
    }

    #[test]
    fn matmul_hand_case() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let b = Matrix::from_rows(&[vec![0.0], vec![1.0]]);
        let c = a.matmul(&b).unwrap();
        assert_eq!(c, Matrix::from_rows(&[vec![2.0], vec![4.0]]));
    }

    #[test]
    fn matmul_zero() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let z = Matrix::zeros(2, 3);
        assert_eq!(a.matmul(&z).unwrap(), Matrix::zeros(2, 3));
    }

    #[test]
    fn matmul_dim_mismatch() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 3);
        assert!(a.matmul(&b).is_err());
    }

    #[test]
    fn elementwise_cases() {
        let a = Matrix::from_rows(&[vec![-2.0, 3.0]]);
        assert_eq!(a.map(|v| v * v), Matrix::from_rows(&[vec![4.0, 9.0]]));
        let z = Matrix::zeros(2, 2);
        assert_eq!(z.map(f64::tanh), Matrix::zeros(2, 2));
        let r = Matrix::from_rows(&[vec![-1.0, 2.0]]);
        assert_eq!(r.map(|v| v.max(0.0)), Matrix::from_rows(&[vec![0.0, 2.0]]));
    }

    #[test]
    fn map_checked_reports_context() {
        let a = Matrix::from_rows(&[vec![0.0]]);
        let err = a.map_checked(|v| 1.0 / v, "layer conv1 epoch 3").unwrap_err();
        assert!(err.to_string().contains("conv1"));
    }

    #[test]
    fn rng_determinism() {
        let mut s1 = RngStream::new(7);
        let mut s2 = RngStream::new(7);
        let a = rng_normal(&mut s1, 4, 5, 1.0);
        let b = rng_normal(&mut s2, 4, 5, 1.0);
        assert_eq!(a, b);
    }

    #[test]
    fn rng_normal_sample_std() {
        let mut s = RngStream::new(42);
        let m = rng_normal(&mut s, 1000, 100, 1.0);
        let n = m.len() as f64;
        let mean = m.as_slice().iter().sum::<f64>() / n;
        let var = m.as_slice().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        assert!((0.99..=1.01).contains(&std), "sample std {std}");
        assert!(mean.abs() < 0.01, "sample mean {mean}");
    }

    #[test]
    fn rng_normal_scales_linearly() {
        let a = rng_normal(&mut RngStream::new(9), 10, 10, 1.0);
        let b = rng_normal(&mut RngStream::new(9), 10, 10, 0.5);
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert_eq!(x * 0.5, *y);
        }
    }

    #[test]
    fn glorot_bounds() {
        let m = glorot_init(3, 3, &mut RngStream::new(1));
        assert!(m.as_slice().iter().all(|v| v.abs() <= 1.0));
        let big = glorot_init(64, 64, &mut RngStream::new(1));
        let bound = (6.0 / 128.0f64).sqrt();
        let max = big.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max <= bound, "max {max} bound {bound}");
    }

    #[test]
    fn glorot_deterministic() {
        let a = glorot_init(5, 7, &mut RngStream::new(3));
        let b = glorot_init(5, 7, &mut RngStream::new(3));
        assert_eq!(a, b);
    }

    #[test]
    fn transpose_involution() {
        let m = rng_normal(&mut RngStream::new(2), 4, 7, 1.0);
        assert_eq!(m.transpose().transpose(), m);
    }

    proptest! {
        #[test]
        fn matmul_associative(seed in 0u64..1000) {
            let mut s = RngStream::new(seed);
            let a = rng_normal(&mut s, 5, 5, 1.0);
            let b = rng_normal(&mut s, 5, 5, 1.0);
            let c = rng_normal(&mut s, 5, 5, 1.0);
            let l = a.matmul(&b).unwrap().matmul(&c).unwrap();
            let r = a.matmul(&b.matmul(&c).unwrap()).unwrap();
            for (x, y) in l.as_slice().iter().zip(r.as_slice()) {
                let denom = x.abs().max(y.abs()).max(1.0);
                prop_assert!((x - y).abs() / denom < 1e-12);
            }
        }
    }
}
