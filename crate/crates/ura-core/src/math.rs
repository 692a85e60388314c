//! Scalar numerics shared across the crate: Gaussian tail functions,
//! log-domain binomials and complex Gaussian sampling.

use num_complex::Complex64;
use rand::Rng;
use std::f64::consts::{PI, SQRT_2};

/// Gaussian tail probability `Q(x) = P(N(0,1) > x)`.
pub fn q_func(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

/// Standard normal density.
fn phi(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Inverse of [`q_func`] on (0, 1), accurate to better than 1e-12.
///
/// Bracketed Newton iteration with bisection fallback; `q_func` is strictly
/// decreasing so the root is unique.
pub fn q_inv(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "q_inv requires p in (0,1), got {p}");
    let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
    // Initial guess from the symmetric logistic-ish shape.
    let mut x = if p > 0.5 { -1.0 } else { 1.0 };
    for _ in 0..200 {
        let f = q_func(x) - p;
        if f > 0.0 {
            // Q(x) too large -> x too small.
            lo = lo.max(x);
        } else {
            hi = hi.min(x);
        }
        let d = phi(x);
        let mut next = if d > 0.0 { x + f / d } else { 0.5 * (lo + hi) };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x.abs().max(1.0) {
            return next;
        }
        x = next;
    }
    x
}

/// Natural log of the binomial coefficient `C(n, k)`.
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    assert!(k <= n, "ln_binomial requires k <= n");
    libm::lgamma(n as f64 + 1.0) - libm::lgamma(k as f64 + 1.0) - libm::lgamma((n - k) as f64 + 1.0)
}

/// One sample of a circularly-symmetric complex Gaussian CN(0, `var`).
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    if var <= 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    // Rayleigh amplitude, uniform phase.
    let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let amp = (-var * u.ln()).sqrt();
    let theta = 2.0 * PI * rng.random::<f64>();
    Complex64::from_polar(amp, theta)
}

/// Fill an `rows x cols` matrix with iid CN(0, `var`) entries.
pub fn complex_gaussian_matrix<R: Rng + ?Sized>(
    rng: &mut R,
    rows: usize,
    cols: usize,
    var: f64,
) -> ndarray::Array2<Complex64> {
    ndarray::Array2::from_shape_fn((rows, cols), |_| complex_gaussian(rng, var))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn q_func_reference_points() {
        assert!((q_func(0.0) - 0.5).abs() < 1e-15);
        // Q(1.6449) ~ 0.05, classic table value.
        assert!((q_func(1.6448536269514722) - 0.05).abs() < 1e-12);
        assert!((q_func(3.0) - 1.349898031630095e-3).abs() < 1e-12);
    }

    #[test]
    fn q_inv_round_trip() {
        for &p in &[1e-9, 1e-6, 0.001, 0.05, 0.3, 0.5, 0.7, 0.999] {
            let x = q_inv(p);
            assert!(
                (q_func(x) - p).abs() <= 1e-12 * p.max(1e-12),
                "round trip failed at p={p}: Q(Qinv)={}",
                q_func(x)
            );
        }
        assert!(q_inv(0.5).abs() < 1e-12);
    }

    #[test]
    fn ln_binomial_small_cases() {
        assert!((ln_binomial(5, 2).exp() - 10.0).abs() < 1e-9);
        assert!((ln_binomial(1000, 2).exp() - 499_500.0).abs() < 1e-3);
        assert_eq!(ln_binomial(7, 0), 0.0);
    }

    #[test]
    fn complex_gaussian_moments() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let n = 1_000_000usize;
        let var = 2.5;
        let mut sum = Complex64::new(0.0, 0.0);
        let mut pow = 0.0;
        for _ in 0..n {
            let z = complex_gaussian(&mut rng, var);
            sum += z;
            pow += z.norm_sqr();
        }
        let mean = sum / n as f64;
        let emp_var = pow / n as f64;
        assert!(mean.norm() < 5.0 * (var / n as f64).sqrt());
        // The noise calibration must hold within 1% over 1e6 samples.
        assert!(
            (emp_var - var).abs() / var < 0.01,
            "empirical var {emp_var}"
        );
    }
}
