//! Sub-sampled DFT pilot pool.
//!
//! The pilot matrix is formed by `n_p` randomly chosen rows of an `N x N` DFT
//! matrix with kernel `w^(i*j)`, `w = exp(-2*pi*i/N)`. Every column then has
//! squared norm exactly `n_p`. Products with the pilot matrix and its
//! conjugate transpose are evaluated with length-`N` FFTs, one per antenna
//! column, so an application costs `O(M N log N)` instead of `O(M n_p N)`.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rustfft::{Fft, FftDirection, FftPlanner};
use std::f64::consts::TAU;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PilotError {
    #[error("pilot pool size {n_pool} is not a power of two")]
    PoolNotPowerOfTwo { n_pool: usize },
    #[error("pilot length {n_p} exceeds pool size {n_pool}")]
    PilotLenExceedsPool { n_p: usize, n_pool: usize },
    #[error("pilot length must be positive")]
    EmptyPilot,
    #[error("operand has {got} rows, expected {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("pilot index {index} out of range (pool size {n_pool})")]
    IndexOutOfRange { index: usize, n_pool: usize },
}

/// Matrix-free sensing operator: forward maps `N x M` to `n_p x M`, adjoint
/// maps back. Implementations must agree with an explicit dense matrix.
pub trait SensingOp: Sync {
    fn n_rows(&self) -> usize;
    fn n_cols(&self) -> usize;
    fn apply_forward(&self, x: &Array2<Complex64>) -> Array2<Complex64>;
    fn apply_adjoint(&self, z: &Array2<Complex64>) -> Array2<Complex64>;
}

/// The pilot pool: row subset of the DFT matrix plus FFT plans.
pub struct PilotBook {
    n_pool: usize,
    n_p: usize,
    row_subset: Vec<usize>,
    seed: u64,
    fft_fwd: Arc<dyn Fft<f64>>,
    fft_inv: Arc<dyn Fft<f64>>,
    /// FFT of the row-subset indicator; entry `d` equals
    /// `sum_i w^(s_i * d)`, which is the column-pair inner product
    /// `<a_j, a_k>` at `d = k - j mod N`.
    gram_kernel: Vec<Complex64>,
}

impl PilotBook {
    /// Draw `n_p` distinct rows of the `n_pool`-point DFT uniformly at random
    /// under `seed` (partial Fisher-Yates). Deterministic given the seed.
    pub fn build(n_pool: usize, n_p: usize, seed: u64) -> Result<Self, PilotError> {
        if n_pool == 0 || !n_pool.is_power_of_two() {
            return Err(PilotError::PoolNotPowerOfTwo { n_pool });
        }
        if n_p == 0 {
            return Err(PilotError::EmptyPilot);
        }
        if n_p > n_pool {
            return Err(PilotError::PilotLenExceedsPool { n_p, n_pool });
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut pool: Vec<usize> = (0..n_pool).collect();
        for i in 0..n_p {
            let j = rng.random_range(i..n_pool);
            pool.swap(i, j);
        }
        pool.truncate(n_p);

        let mut planner = FftPlanner::new();
        let fft_fwd = planner.plan_fft(n_pool, FftDirection::Forward);
        let fft_inv = planner.plan_fft(n_pool, FftDirection::Inverse);

        let mut indicator = vec![Complex64::new(0.0, 0.0); n_pool];
        for &s in &pool {
            indicator[s] += Complex64::new(1.0, 0.0);
        }
        fft_fwd.process(&mut indicator);

        Ok(Self {
            n_pool,
            n_p,
            row_subset: pool,
            seed,
            fft_fwd,
            fft_inv,
            gram_kernel: indicator,
        })
    }

    pub fn n_pool(&self) -> usize {
        self.n_pool
    }

    pub fn pilot_len(&self) -> usize {
        self.n_p
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn row_subset(&self) -> &[usize] {
        &self.row_subset
    }

    /// `A X` columnwise via FFT: `(A x)_i = FFT_N(x)[s_i]`.
    pub fn forward(&self, x: &Array2<Complex64>) -> Result<Array2<Complex64>, PilotError> {
        if x.nrows() != self.n_pool {
            return Err(PilotError::ShapeMismatch {
                expected: self.n_pool,
                got: x.nrows(),
            });
        }
        let m = x.ncols();
        let mut out = Array2::<Complex64>::zeros((self.n_p, m));
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n_pool];
        for col in 0..m {
            for (i, b) in buf.iter_mut().enumerate() {
                *b = x[[i, col]];
            }
            self.fft_fwd.process(&mut buf);
            for (i, &s) in self.row_subset.iter().enumerate() {
                out[[i, col]] = buf[s];
            }
        }
        Ok(out)
    }

    /// `A^H Z` columnwise: zero-fill onto the row subset, then apply the
    /// unscaled conjugate (inverse-direction) transform.
    pub fn adjoint(&self, z: &Array2<Complex64>) -> Result<Array2<Complex64>, PilotError> {
        if z.nrows() != self.n_p {
            return Err(PilotError::ShapeMismatch {
                expected: self.n_p,
                got: z.nrows(),
            });
        }
        let m = z.ncols();
        let mut out = Array2::<Complex64>::zeros((self.n_pool, m));
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n_pool];
        for col in 0..m {
            buf.fill(Complex64::new(0.0, 0.0));
            for (i, &s) in self.row_subset.iter().enumerate() {
                buf[s] = z[[i, col]];
            }
            self.fft_inv.process(&mut buf);
            for (i, b) in buf.iter().enumerate() {
                out[[i, col]] = *b;
            }
        }
        Ok(out)
    }

    /// Column `idx` of the pilot matrix: entries `w^(s_i * idx)`.
    pub fn column(&self, idx: usize) -> Result<Array1<Complex64>, PilotError> {
        if idx >= self.n_pool {
            return Err(PilotError::IndexOutOfRange {
                index: idx,
                n_pool: self.n_pool,
            });
        }
        let n = self.n_pool as u64;
        Ok(Array1::from_iter(self.row_subset.iter().map(|&s| {
            let phase = -TAU * ((s as u64 * idx as u64) % n) as f64 / n as f64;
            Complex64::from_polar(1.0, phase)
        })))
    }

    /// The `n_p x K` sub-matrix holding the pilot columns in `support`.
    pub fn subset_matrix(&self, support: &[usize]) -> Result<Array2<Complex64>, PilotError> {
        let mut a = Array2::<Complex64>::zeros((self.n_p, support.len()));
        for (j, &idx) in support.iter().enumerate() {
            let col = self.column(idx)?;
            a.column_mut(j).assign(&col);
        }
        Ok(a)
    }

    /// Gram matrix `A_S^H A_S` of the pilot columns in `support`, assembled
    /// from the precomputed kernel in `O(K^2)`.
    pub fn gram(&self, support: &[usize]) -> Result<Array2<Complex64>, PilotError> {
        for &idx in support {
            if idx >= self.n_pool {
                return Err(PilotError::IndexOutOfRange {
                    index: idx,
                    n_pool: self.n_pool,
                });
            }
        }
        let k = support.len();
        let n = self.n_pool;
        let mut g = Array2::<Complex64>::zeros((k, k));
        for j in 0..k {
            g[[j, j]] = Complex64::new(self.n_p as f64, 0.0);
            for i in (j + 1)..k {
                // <a_{c_j}, a_{c_i}> = kernel[(c_i - c_j) mod N]
                let d = (support[i] + n - support[j]) % n;
                let v = self.gram_kernel[d];
                g[[j, i]] = v;
                g[[i, j]] = v.conj();
            }
        }
        Ok(g)
    }

    /// Entry-wise dense pilot matrix. Reference path for tests and the
    /// self-test suite; quadratic in `N`, not meant for large pools.
    pub fn dense_matrix(&self) -> Array2<Complex64> {
        let n = self.n_pool as u64;
        Array2::from_shape_fn((self.n_p, self.n_pool), |(i, j)| {
            let s = self.row_subset[i] as u64;
            let phase = -TAU * ((s * j as u64) % n) as f64 / n as f64;
            Complex64::from_polar(1.0, phase)
        })
    }
}

impl SensingOp for PilotBook {
    fn n_rows(&self) -> usize {
        self.n_p
    }

    fn n_cols(&self) -> usize {
        self.n_pool
    }

    fn apply_forward(&self, x: &Array2<Complex64>) -> Array2<Complex64> {
        self.forward(x).expect("shape checked by caller")
    }

    fn apply_adjoint(&self, z: &Array2<Complex64>) -> Array2<Complex64> {
        self.adjoint(z).expect("shape checked by caller")
    }
}

/// Explicit dense sensing matrix. Reference implementation used to
/// cross-check the FFT operators and as an IID-matrix oracle path in tests.
pub struct DenseSensingOp(pub Array2<Complex64>);

impl SensingOp for DenseSensingOp {
    fn n_rows(&self) -> usize {
        self.0.nrows()
    }

    fn n_cols(&self) -> usize {
        self.0.ncols()
    }

    fn apply_forward(&self, x: &Array2<Complex64>) -> Array2<Complex64> {
        self.0.dot(x)
    }

    fn apply_adjoint(&self, z: &Array2<Complex64>) -> Array2<Complex64> {
        crate::linalg::conj_transpose(&self.0).dot(z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{conj_transpose, frobenius};
    use crate::math::complex_gaussian_matrix;
    use proptest::prelude::*;

    fn rel_err(a: &Array2<Complex64>, b: &Array2<Complex64>) -> f64 {
        frobenius(&(a - b)) / frobenius(b).max(1e-300)
    }

    #[test]
    fn build_validates_inputs() {
        assert!(matches!(
            PilotBook::build(12, 4, 0),
            Err(PilotError::PoolNotPowerOfTwo { .. })
        ));
        assert!(matches!(
            PilotBook::build(16, 17, 0),
            Err(PilotError::PilotLenExceedsPool { .. })
        ));
        assert!(matches!(
            PilotBook::build(16, 0, 0),
            Err(PilotError::EmptyPilot)
        ));
    }

    #[test]
    fn row_subset_distinct_and_deterministic() {
        let a = PilotBook::build(4096, 1152, 42).unwrap();
        let b = PilotBook::build(4096, 1152, 42).unwrap();
        assert_eq!(a.row_subset(), b.row_subset());
        let mut sorted = a.row_subset().to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 1152);
        assert!(sorted.iter().all(|&s| s < 4096));
        let c = PilotBook::build(4096, 1152, 43).unwrap();
        assert_ne!(a.row_subset(), c.row_subset());
    }

    #[test]
    fn full_dft_book_is_orthogonal() {
        // n_p = N: the implied matrix is a row permutation of the full DFT,
        // so A^H A = N I.
        let book = PilotBook::build(8, 8, 5).unwrap();
        let a = book.dense_matrix();
        let g = conj_transpose(&a).dot(&a);
        for i in 0..8 {
            for j in 0..8 {
                let want = if i == j { 8.0 } else { 0.0 };
                assert!(
                    (g[[i, j]] - Complex64::new(want, 0.0)).norm() < 1e-9,
                    "gram[{i},{j}] = {:?}",
                    g[[i, j]]
                );
            }
        }
    }

    #[test]
    fn column_norms_are_pilot_length() {
        let book = PilotBook::build(4096, 1152, 42).unwrap();
        for idx in [0usize, 1, 77, 4095] {
            let col = book.column(idx).unwrap();
            let norm_sq: f64 = col.iter().map(|z| z.norm_sqr()).sum();
            assert!((norm_sq - 1152.0).abs() / 1152.0 < 1e-12);
        }
    }

    #[test]
    fn forward_matches_dense_oracle() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        let book = PilotBook::build(32, 12, 7).unwrap();
        let dense = book.dense_matrix();
        for _ in 0..20 {
            let x = complex_gaussian_matrix(&mut rng, 32, 3, 1.0);
            let fast = book.forward(&x).unwrap();
            let slow = dense.dot(&x);
            assert!(rel_err(&fast, &slow) < 1e-9);
        }
    }

    #[test]
    fn adjoint_matches_dense_oracle() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(8);
        let book = PilotBook::build(32, 12, 9).unwrap();
        let dense = book.dense_matrix();
        let dense_h = conj_transpose(&dense);
        for _ in 0..20 {
            let z = complex_gaussian_matrix(&mut rng, 12, 3, 1.0);
            let fast = book.adjoint(&z).unwrap();
            let slow = dense_h.dot(&z);
            assert!(rel_err(&fast, &slow) < 1e-9);
        }
    }

    #[test]
    fn forward_of_one_hot_is_column() {
        let book = PilotBook::build(16, 8, 7).unwrap();
        let k = 5;
        let mut x = Array2::<Complex64>::zeros((16, 1));
        x[[k, 0]] = Complex64::new(1.0, 0.0);
        let y = book.forward(&x).unwrap();
        let col = book.column(k).unwrap();
        for i in 0..8 {
            assert!((y[[i, 0]] - col[i]).norm() < 1e-12);
        }
        let zero = book.forward(&Array2::zeros((16, 2))).unwrap();
        assert!(frobenius(&zero) == 0.0);
    }

    #[test]
    fn full_dft_adjoint_of_forward_scales_by_pool() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(9);
        let book = PilotBook::build(64, 64, 3).unwrap();
        let x = complex_gaussian_matrix(&mut rng, 64, 2, 1.0);
        let back = book.adjoint(&book.forward(&x).unwrap()).unwrap();
        let scaled = x.mapv(|v| v * 64.0);
        assert!(rel_err(&back, &scaled) < 1e-9);
    }

    #[test]
    fn gram_matches_dense() {
        let book = PilotBook::build(64, 24, 11).unwrap();
        let support = vec![0usize, 3, 17, 44, 63, 5];
        let g = book.gram(&support).unwrap();
        let a = book.subset_matrix(&support).unwrap();
        let g_dense = conj_transpose(&a).dot(&a);
        assert!(rel_err(&g, &g_dense) < 1e-10);
    }

    #[test]
    fn shape_errors_are_reported() {
        let book = PilotBook::build(16, 8, 7).unwrap();
        assert!(matches!(
            book.forward(&Array2::zeros((8, 1))),
            Err(PilotError::ShapeMismatch {
                expected: 16,
                got: 8
            })
        ));
        assert!(matches!(
            book.adjoint(&Array2::zeros((16, 1))),
            Err(PilotError::ShapeMismatch {
                expected: 8,
                got: 16
            })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        /// <A x, z> == <x, A^H z> for random shapes and inputs.
        #[test]
        fn adjoint_identity(seed in 0u64..1000, log_n in 3u32..7, m in 1usize..4) {
            let n = 1usize << log_n;
            let n_p = (n / 2).max(1);
            let book = PilotBook::build(n, n_p, seed).unwrap();
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed ^ 0xabcd);
            let x = complex_gaussian_matrix(&mut rng, n, m, 1.0);
            let z = complex_gaussian_matrix(&mut rng, n_p, m, 1.0);
            let ax = book.forward(&x).unwrap();
            let ahz = book.adjoint(&z).unwrap();
            let lhs: Complex64 = ax.iter().zip(z.iter()).map(|(a, b)| a * b.conj()).sum();
            let rhs: Complex64 = x.iter().zip(ahz.iter()).map(|(a, b)| a * b.conj()).sum();
            let scale = frobenius(&ax) * frobenius(&z) + 1e-12;
            prop_assert!((lhs - rhs).norm() / scale < 1e-9);
        }
    }
}
