//! Closed-form performance prediction: channel-estimation MSE, post-MRC
//! SINR, the finite-blocklength normal approximation and its inversions,
//! required-power curves over (K_a, M) grids, pilot-collision statistics
//! and the simplified two-user collision model.

use crate::channel::qpsk_modulate;
use crate::linalg::hermitian_eigenvalues;
use crate::math::{complex_gaussian, ln_binomial, q_inv};
use crate::pilots::PilotBook;
use crate::polar::PolarCodeSpec;
use ndarray::Array1;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::f64::consts::LOG2_E;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("target rate {rate} is not achievable at blocklength {n_d} and p_e {p_e}")]
    RateInfeasible { rate: f64, n_d: usize, p_e: f64 },
    #[error("collision-adjusted error budget is not positive ({adjusted})")]
    CollisionDominated { adjusted: f64 },
    #[error("target SINR {target} exceeds the MRC saturation level {saturation}")]
    PowerInfeasible { target: f64, saturation: f64 },
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error(transparent)]
    Pilot(#[from] crate::pilots::PilotError),
    #[error(transparent)]
    Linalg(#[from] crate::linalg::LinalgError),
}

/// Channel-estimation MSE under the orthogonal-pilot assumption:
/// `N0 / (N0 + n_p P g)`. Lower-bounds the exact LMMSE error.
pub fn ortho_mse(n_p: usize, p: f64, g: f64, n0: f64) -> f64 {
    n0 / (n0 + n_p as f64 * p * g)
}

/// Post-MRC SINR: `M (1 - sigma^2) g P / (N0 + sigma^2 g P + interference)`
/// with `interference = sum_{j != k} g_j P`.
pub fn sinr_mrc(m: usize, sigma_sq: f64, g: f64, p: f64, n0: f64, interference: f64) -> f64 {
    m as f64 * (1.0 - sigma_sq) * g * p / (n0 + sigma_sq * g * p + interference)
}

/// Dispersion of the real AWGN channel at the given SINR, in bits^2.
pub fn channel_dispersion(sinr: f64) -> f64 {
    (sinr / 2.0) * (sinr + 2.0) / ((sinr + 1.0) * (sinr + 1.0)) * LOG2_E * LOG2_E
}

fn normal_approx_rate_raw(sinr: f64, n_d: usize, p_e: f64) -> f64 {
    0.5 * (1.0 + sinr).log2() - (channel_dispersion(sinr) / (2.0 * n_d as f64)).sqrt() * q_inv(p_e)
}

/// Normal-approximation achievable rate in bits per real channel use for a
/// block of `2 n_d` real dimensions, clamped at zero when the dispersion
/// penalty exceeds capacity.
pub fn normal_approx_rate(sinr: f64, n_d: usize, p_e: f64) -> f64 {
    assert!(sinr >= 0.0 && n_d >= 1 && p_e > 0.0 && p_e < 1.0);
    normal_approx_rate_raw(sinr, n_d, p_e).max(0.0)
}

/// Invert the normal approximation: the unique SINR achieving `rate`.
pub fn required_sinr(rate: f64, n_d: usize, p_e: f64) -> Result<f64, AnalysisError> {
    if rate <= 0.0 {
        return Err(AnalysisError::BadParameter(format!(
            "rate must be positive, got {rate}"
        )));
    }
    let (mut lo, mut hi) = (1e-9, 1e6);
    if normal_approx_rate_raw(hi, n_d, p_e) < rate {
        return Err(AnalysisError::RateInfeasible { rate, n_d, p_e });
    }
    if normal_approx_rate_raw(lo, n_d, p_e) >= rate {
        return Ok(lo);
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if normal_approx_rate_raw(mid, n_d, p_e) < rate {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= 1e-13 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Expected number of `k`-subsets of active users sharing one pilot:
/// `C(K_a, k) / N^(k-1)`.
pub fn expected_collisions(k_a: u64, n_pool: u64, k: u32) -> f64 {
    assert!(k >= 2, "collision order starts at 2");
    if u64::from(k) > k_a {
        return 0.0;
    }
    (ln_binomial(k_a, k as u64) - (k as f64 - 1.0) * (n_pool as f64).ln()).exp()
}

/// MSE model used when inverting the power requirement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MseModel {
    /// Closed-form orthogonal-pilot bound; optimistic, no matrix work.
    Ortho,
    /// Exact LMMSE error-covariance diagonal, user-averaged and averaged
    /// over `draws` random pilot books and supports.
    Lmmse { draws: usize, seed: u64 },
}

#[derive(Debug, Clone)]
pub struct Ebn0Params {
    pub k_a: usize,
    pub m_antennas: usize,
    pub n_p: usize,
    pub n_d: usize,
    pub b_bits: u32,
    pub j_bits: u32,
    pub p_e: f64,
    pub mse_model: MseModel,
    pub collision_adjust: bool,
}

/// Result of the required-power inversion.
#[derive(Debug, Clone)]
pub struct PowerRequirement {
    /// Per-symbol transmit power over N0.
    pub p_over_n0: f64,
    /// `(n_p + n_d) P / (B N0)` in dB.
    pub ebn0_db: f64,
    pub sinr_target: f64,
    /// User-averaged channel-estimation MSE at the returned power.
    pub sigma_sq: f64,
    pub rate_target: f64,
    /// Error budget after the collision adjustment.
    pub p_e_effective: f64,
}

/// User-averaged LMMSE MSE as a function of power, precomputed from the
/// eigenvalues of the pilot Gram matrix so any power evaluates in O(K).
struct MseCurve {
    eigenvalues: Vec<Vec<f64>>,
    k_a: usize,
}

impl MseCurve {
    fn build(
        n_pool: usize,
        n_p: usize,
        k_a: usize,
        draws: usize,
        seed: u64,
    ) -> Result<Self, AnalysisError> {
        use rayon::prelude::*;
        let eigenvalues = (0..draws)
            .into_par_iter()
            .map(|d| {
                let book = PilotBook::build(n_pool, n_p, seed.wrapping_add(d as u64))?;
                let mut rng = ChaCha12Rng::seed_from_u64(seed ^ (0x5eed << 1) ^ d as u64);
                // The analysis assumes error-free detection of K_a distinct
                // pilots, so the support is a uniform K_a-subset of the pool.
                let mut pool: Vec<usize> = (0..n_pool).collect();
                for i in 0..k_a {
                    let j = rng.random_range(i..n_pool);
                    pool.swap(i, j);
                }
                let mut support: Vec<usize> = pool[..k_a].to_vec();
                support.sort_unstable();
                let gram = book.gram(&support)?;
                Ok(hermitian_eigenvalues(&gram)?)
            })
            .collect::<Result<Vec<_>, AnalysisError>>()?;
        Ok(Self { eigenvalues, k_a })
    }

    /// `mean_k diag((I + p G)^{-1})` averaged over draws; the trace identity
    /// turns the diagonal average into a sum over eigenvalues.
    fn mse(&self, p: f64) -> f64 {
        let per_draw: f64 = self
            .eigenvalues
            .iter()
            .map(|eigs| {
                eigs.iter()
                    .map(|&l| 1.0 / (1.0 + p * l.max(0.0)))
                    .sum::<f64>()
                    / self.k_a as f64
            })
            .sum();
        per_draw / self.eigenvalues.len() as f64
    }
}

/// Smallest power meeting the target SINR from the normal approximation,
/// reported as Eb/N0 in dB. Fails when the collision-adjusted error budget
/// is non-positive or the MRC SINR saturates below the target.
pub fn required_ebn0(prm: &Ebn0Params) -> Result<PowerRequirement, AnalysisError> {
    if prm.b_bits <= prm.j_bits {
        return Err(AnalysisError::BadParameter(format!(
            "B = {} must exceed J = {}",
            prm.b_bits, prm.j_bits
        )));
    }
    if prm.k_a == 0 || prm.m_antennas == 0 || prm.n_p == 0 || prm.n_d == 0 {
        return Err(AnalysisError::BadParameter(
            "K_a, M, n_p, n_d must all be positive".into(),
        ));
    }
    let n_pool = 1usize << prm.j_bits;
    let rate_target = (prm.b_bits - prm.j_bits) as f64 / (2.0 * prm.n_d as f64);
    let p_e_eff = if prm.collision_adjust {
        let c2 = expected_collisions(prm.k_a as u64, n_pool as u64, 2);
        prm.p_e - 2.0 * c2 / prm.k_a as f64
    } else {
        prm.p_e
    };
    if p_e_eff <= 0.0 {
        return Err(AnalysisError::CollisionDominated { adjusted: p_e_eff });
    }
    let sinr_target = required_sinr(rate_target, prm.n_d, p_e_eff)?;

    let curve = match prm.mse_model {
        MseModel::Ortho => None,
        MseModel::Lmmse { draws, seed } => Some(MseCurve::build(
            n_pool,
            prm.n_p,
            prm.k_a,
            draws.max(1),
            seed,
        )?),
    };
    let sigma_sq_at = |p: f64| -> f64 {
        match &curve {
            None => ortho_mse(prm.n_p, p, 1.0, 1.0),
            Some(c) => c.mse(p),
        }
    };
    let sinr_at = |p: f64| -> f64 {
        let s = sigma_sq_at(p);
        sinr_mrc(prm.m_antennas, s, 1.0, p, 1.0, (prm.k_a - 1) as f64 * p)
    };

    // SINR is increasing in P and saturates; bracket then bisect.
    let mut hi = 1e-6;
    let mut grew = false;
    for _ in 0..80 {
        if sinr_at(hi) >= sinr_target {
            grew = true;
            break;
        }
        hi *= 2.0;
    }
    if !grew {
        let saturation = sinr_at(hi);
        return Err(AnalysisError::PowerInfeasible {
            target: sinr_target,
            saturation,
        });
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sinr_at(mid) >= sinr_target {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    let p = hi;
    let n_total = (prm.n_p + prm.n_d) as f64;
    let ebn0 = n_total * p / prm.b_bits as f64;
    Ok(PowerRequirement {
        p_over_n0: p,
        ebn0_db: 10.0 * ebn0.log10(),
        sinr_target,
        sigma_sq: sigma_sq_at(p),
        rate_target,
        p_e_effective: p_e_eff,
    })
}

/// Outcome of one two-user collision trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollisionOutcome {
    Both,
    One,
    Neither,
}

/// Simulate the simplified two-user collision model once: both users share
/// a pilot, the receiver's channel estimate is `h1 + h2 + e` with
/// `e ~ CN(0, sigma_est_sq I)`, MRC runs with that single estimate and the
/// list decoder is asked for all CRC-valid payloads.
pub fn collision_model_trial<R: Rng + ?Sized>(
    m_antennas: usize,
    snr: f64,
    sigma_est_sq: f64,
    code: &PolarCodeSpec,
    rng: &mut R,
) -> CollisionOutcome {
    let n_d = code.block_length() / 2;
    let k = code.payload_bits();
    let p1: Vec<u8> = (0..k).map(|_| rng.random_range(0..2) as u8).collect();
    let mut p2: Vec<u8> = (0..k).map(|_| rng.random_range(0..2) as u8).collect();
    while p2 == p1 {
        p2 = (0..k).map(|_| rng.random_range(0..2) as u8).collect();
    }
    let s1 = qpsk_modulate(&code.encode(&p1).expect("payload sized for the code"));
    let s2 = qpsk_modulate(&code.encode(&p2).expect("payload sized for the code"));

    let h1 = Array1::from_shape_fn(m_antennas, |_| complex_gaussian(rng, 1.0));
    let h2 = Array1::from_shape_fn(m_antennas, |_| complex_gaussian(rng, 1.0));
    let e = Array1::from_shape_fn(m_antennas, |_| complex_gaussian(rng, sigma_est_sq));
    let h_hat = &(&h1 + &h2) + &e;

    let dot = |a: &Array1<Complex64>, b: &Array1<Complex64>| -> Complex64 {
        a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
    };
    let m_f = m_antennas as f64;
    let c1 = dot(&h_hat, &h1) * snr.sqrt() / m_f;
    let c2 = dot(&h_hat, &h2) * snr.sqrt() / m_f;
    // (1/M) h_hat^H z with z iid CN(0, I) columns projects to iid
    // CN(0, ||h_hat||^2 / M^2) scalars.
    let h_norm_sq: f64 = h_hat.iter().map(|z| z.norm_sqr()).sum();
    let w_var = h_norm_sq / (m_f * m_f);
    let llr_scale = 2.0 * std::f64::consts::SQRT_2 / w_var.max(1e-30);

    let mut llrs = Vec::with_capacity(2 * n_d);
    for t in 0..n_d {
        let s_hat = c1 * s1[t] + c2 * s2[t] + complex_gaussian(rng, w_var);
        llrs.push(llr_scale * s_hat.re);
        llrs.push(llr_scale * s_hat.im);
    }
    let out = code.scl_decode(&llrs).expect("LLR length matches block");
    match (out.contains(&p1), out.contains(&p2)) {
        (true, true) => CollisionOutcome::Both,
        (true, false) | (false, true) => CollisionOutcome::One,
        (false, false) => CollisionOutcome::Neither,
    }
}

/// Recovered-codeword fractions over a sweep of estimation-error variances.
#[derive(Debug, Clone)]
pub struct CollisionPoint {
    pub sigma_est_sq: f64,
    pub frac_both: f64,
    pub frac_one: f64,
    pub frac_neither: f64,
}

pub fn collision_sweep(
    m_antennas: usize,
    snr: f64,
    sigma_grid: &[f64],
    trials: usize,
    code: &PolarCodeSpec,
    seed: u64,
) -> Vec<CollisionPoint> {
    use rayon::prelude::*;
    sigma_grid
        .iter()
        .map(|&sigma| {
            let counts: (usize, usize, usize) = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let mut rng = ChaCha12Rng::seed_from_u64(
                        seed ^ (t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ sigma.to_bits(),
                    );
                    collision_model_trial(m_antennas, snr, sigma, code, &mut rng)
                })
                .fold(
                    || (0usize, 0usize, 0usize),
                    |mut acc, o| {
                        match o {
                            CollisionOutcome::Both => acc.0 += 1,
                            CollisionOutcome::One => acc.1 += 1,
                            CollisionOutcome::Neither => acc.2 += 1,
                        }
                        acc
                    },
                )
                .reduce(|| (0, 0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
            CollisionPoint {
                sigma_est_sq: sigma,
                frac_both: counts.0 as f64 / trials as f64,
                frac_one: counts.1 as f64 / trials as f64,
                frac_neither: counts.2 as f64 / trials as f64,
            }
        })
        .collect()
}
