//! Minimal dense linear algebra, a reproducible counter-based RNG, and the
//! scalar activations the rest of the crate builds on.
//!
//! Everything here is deliberately plain: row-major `f64` storage, no BLAS,
//! no SIMD. Graphs at desk scale (a few thousand nodes) keep these kernels
//! well inside interactive runtimes, and the hand-rolled RNG guarantees the
//! same draw sequence on every platform.

use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Dense matrices
// ---------------------------------------------------------------------------

/// Row-major dense matrix of `f64`.
///
/// Public constructors reject non-finite entries; operations that could
/// produce NaN/Inf (e.g. [`mat_exp`]) re-validate their output, so a value of
/// this type held by downstream code is always finite.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Build from a row-major buffer. Errors when the length does not match
    /// `rows * cols` or any entry is non-finite.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dimension(format!(
                "buffer length {} does not match {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric("non-finite entry in matrix".into()));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::dimension("ragged rows"));
        }
        DenseMatrix::from_vec(r, c, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self * rhs`. The inner `k` loop skips exact zeros, which makes
    /// products with binary feature matrices cheap without a sparse type.
    pub fn matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != rhs.rows {
            return Err(Error::dimension(format!(
                "matmul {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = vec![0.0; self.rows * rhs.cols];
        for i in 0..self.rows {
            let arow = &self.data[i * self.cols..(i + 1) * self.cols];
            let orow = &mut out[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, &aik) in arow.iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                let brow = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += aik * b;
                }
            }
        }
        Ok(DenseMatrix {
            rows: self.rows,
            cols: rhs.cols,
            data: out,
        })
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn add(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        self.zip_with(rhs, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        self.zip_with(rhs, |a, b| a - b)
    }

    pub fn hadamard(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        self.zip_with(rhs, |a, b| a * b)
    }

    fn zip_with(&self, rhs: &DenseMatrix, f: impl Fn(f64, f64) -> f64) -> Result<DenseMatrix> {
        if self.shape() != rhs.shape() {
            return Err(Error::dimension(format!(
                "elementwise op on {:?} and {:?}",
                self.shape(),
                rhs.shape()
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// `self += a * rhs`, shapes must already agree.
    pub fn axpy(&mut self, a: f64, rhs: &DenseMatrix) {
        debug_assert_eq!(self.shape(), rhs.shape());
        for (o, &r) in self.data.iter_mut().zip(&rhs.data) {
            *o += a * r;
        }
    }

    pub fn scale(&self, a: f64) -> DenseMatrix {
        self.map(|v| a * v)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, &v| m.max(v.abs()))
    }

    /// Induced matrix 1-norm (maximum absolute column sum).
    pub fn norm_one(&self) -> f64 {
        let mut sums = vec![0.0; self.cols];
        for i in 0..self.rows {
            for j in 0..self.cols {
                sums[j] += self.data[i * self.cols + j].abs();
            }
        }
        sums.iter().fold(0.0f64, |m, &v| m.max(v))
    }

    /// Infinity norm of row `i` (maximum absolute entry of the row).
    pub fn row_inf_norm(&self, i: usize) -> f64 {
        self.row(i).iter().fold(0.0, |m, &v| m.max(v.abs()))
    }

    pub fn argmax_row(&self, i: usize) -> usize {
        let row = self.row(i);
        let mut best = 0;
        for (j, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = j;
            }
        }
        best
    }
}

// ---------------------------------------------------------------------------
// Counter-based splittable RNG
// ---------------------------------------------------------------------------

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const STREAM_MIX: u64 = 0xD1B5_4A32_D192_ED03;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based splittable generator.
///
/// Each draw hashes `(seed, stream, counter)` through the SplitMix64
/// finalizer, so the sequence depends only on those three words: identical
/// seeds give identical sequences on every platform, and [`Rng::split`]
/// yields statistically independent streams for sub-tasks without
/// coordinating state.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    stream: u64,
    counter: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            seed,
            stream: 0,
            counter: 0,
        }
    }

    /// Derive an independent stream labelled by `label`. Splitting is a pure
    /// function of `(self.stream, label)`; the parent is unaffected.
    pub fn split(&self, label: u64) -> Rng {
        Rng {
            seed: self.seed,
            stream: mix64(self.stream ^ label.wrapping_mul(STREAM_MIX) ^ GAMMA),
            counter: 0,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(
            self.seed
                .wrapping_add(self.counter.wrapping_mul(GAMMA))
                .wrapping_add(self.stream.wrapping_mul(STREAM_MIX)),
        )
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }

    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

/// Glorot/Xavier uniform initialization: entries uniform in
/// `±sqrt(6 / (rows + cols))`, deterministic for a given generator state.
pub fn glorot_init(rows: usize, cols: usize, rng: &mut Rng) -> DenseMatrix {
    assert!(rows >= 1 && cols >= 1, "glorot_init needs positive dims");
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.uniform_in(-bound, bound))
        .collect();
    DenseMatrix { rows, cols, data }
}

// ---------------------------------------------------------------------------
// Matrix exponential and the phi-1 function
// ---------------------------------------------------------------------------

const TAYLOR_TERMS: usize = 13;
const SCALE_TARGET: f64 = 0.5;

fn taylor_exp_phi(x: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
    let n = x.rows();
    // exp(X)  = sum_{k>=0} X^k / k!
    // phi1(X) = sum_{k>=0} X^k / (k+1)!
    let mut term = DenseMatrix::identity(n);
    let mut exp = DenseMatrix::identity(n);
    let mut phi = DenseMatrix::identity(n);
    let mut factorial = 1.0;
    for k in 1..=TAYLOR_TERMS {
        term = term.matmul(x).expect("square by square");
        factorial *= k as f64;
        exp.axpy(1.0 / factorial, &term);
        phi.axpy(1.0 / (factorial * (k + 1) as f64), &term);
    }
    (exp, phi)
}

fn exp_phi_scaled(m: &DenseMatrix, t: f64) -> Result<(DenseMatrix, DenseMatrix)> {
    if !m.is_square() {
        return Err(Error::dimension(format!(
            "matrix exponential of non-square {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    if !t.is_finite() {
        return Err(Error::Numeric("non-finite time in mat_exp".into()));
    }
    let scaled = m.scale(t);
    let norm = scaled.norm_one();
    let squarings = if norm > SCALE_TARGET {
        (norm / SCALE_TARGET).log2().ceil() as u32
    } else {
        0
    };
    let x = scaled.scale(1.0 / (1u64 << squarings) as f64);
    let (mut exp, mut phi) = taylor_exp_phi(&x);
    // Doubling: exp(2X) = exp(X)^2, phi1(2X) = phi1(X) (exp(X) + I) / 2.
    let eye = DenseMatrix::identity(m.rows());
    for _ in 0..squarings {
        let half = exp.add(&eye)?.scale(0.5);
        phi = phi.matmul(&half)?;
        exp = exp.matmul(&exp)?;
    }
    if !exp.all_finite() || !phi.all_finite() {
        return Err(Error::Numeric("overflow in matrix exponential".into()));
    }
    Ok((exp, phi))
}

/// `exp(t M)` by scaling-and-squaring with a fixed 13-term Taylor core.
/// Relative error stays below 1e-8 for `||t M||_1 <= 10`.
pub fn mat_exp(m: &DenseMatrix, t: f64) -> Result<DenseMatrix> {
    Ok(exp_phi_scaled(m, t)?.0)
}

/// `phi1(t M) = (exp(t M) - I) (t M)^{-1}`, evaluated by series so it is
/// well defined when `t M` is singular (`phi1(0) = I`).
pub fn mat_phi1(m: &DenseMatrix, t: f64) -> Result<DenseMatrix> {
    Ok(exp_phi_scaled(m, t)?.1)
}

/// Both `exp(t M)` and `phi1(t M)` from one scaled Taylor pass.
pub fn mat_exp_phi1(m: &DenseMatrix, t: f64) -> Result<(DenseMatrix, DenseMatrix)> {
    exp_phi_scaled(m, t)
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

/// Element-wise nonlinearity used by the graph coupling.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
}

impl Activation {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "identity" => Ok(Activation::Identity),
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::config(format!("unknown activation `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative at `x`. The relu subgradient at 0 is taken as 1, matching
    /// the clamp convention used for spike-representation gradients.
    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if x >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `max_x |sigma(x)|` where it exists; only tanh is bounded.
    pub fn abs_max(&self) -> Result<f64> {
        match self {
            Activation::Tanh => Ok(1.0),
            other => Err(Error::config(format!(
                "activation `{}` has no finite abs max",
                other.name()
            ))),
        }
    }

    /// `max_x |sigma'(x)|`.
    pub fn deriv_abs_max(&self) -> Result<f64> {
        match self {
            Activation::Tanh => Ok(1.0),
            Activation::Identity | Activation::Relu => Ok(1.0),
        }
    }
}
