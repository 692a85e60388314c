//! Multiuser detection: LMMSE channel estimation on the detected support,
//! maximum-ratio combining of the data phase and per-user bit LLRs for the
//! single-user decoder.

use crate::analysis::sinr_mrc;
use crate::linalg::{LinalgError, invert_hermitian, solve_hermitian};
use crate::pilots::{PilotBook, PilotError};
use ndarray::Array2;
use num_complex::Complex64;
use std::f64::consts::SQRT_2;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MudError {
    #[error("support has {support} entries but gamma has {gamma}")]
    GammaLength { support: usize, gamma: usize },
    #[error("gamma must be positive on the support (entry {index} = {value})")]
    NonPositiveGamma { index: usize, value: f64 },
    #[error("noise level must be positive, got {0}")]
    BadNoise(f64),
    #[error("observation has {got} rows, expected {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("estimate holds {est} users but gamma has {gamma}")]
    EstimateMismatch { est: usize, gamma: usize },
    #[error(transparent)]
    Pilot(#[from] PilotError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// LMMSE channel estimate on a detected support.
#[derive(Debug, Clone)]
pub struct ChannelEstimate {
    /// `K x M`; row `k` estimates the channel of `support[k]`.
    pub h_hat: Array2<Complex64>,
    pub support: Vec<usize>,
    /// Predicted per-user MSE, the diagonal of the error covariance.
    pub mse_diag: Vec<f64>,
}

/// MRC outputs: per-user soft symbol sequences and bit LLRs.
#[derive(Debug, Clone)]
pub struct SoftSequences {
    /// `K x n_d`; row `k` estimates the symbols of `support[k]` with unit
    /// mean signal amplitude.
    pub s_hat: Array2<Complex64>,
    /// `K x 2 n_d` Gray-mapped QPSK LLRs (I then Q per symbol).
    pub llrs: Array2<f64>,
    /// Effective post-MRC SINR used for the LLR scaling, per user.
    pub sinr: Vec<f64>,
    /// Rows skipped because their power estimate was not positive.
    pub excluded: Vec<usize>,
}

/// Powers used by the detector: pilot/data transmit power and noise level.
#[derive(Debug, Clone, Copy)]
pub struct MrcParams {
    pub p_pilot: f64,
    pub p_data: f64,
    pub n0: f64,
}

fn check_gamma(support: &[usize], gamma: &[f64]) -> Result<(), MudError> {
    if support.len() != gamma.len() {
        return Err(MudError::GammaLength {
            support: support.len(),
            gamma: gamma.len(),
        });
    }
    Ok(())
}

/// LMMSE estimate of the channel rows on `support`:
/// `H_hat = G^(1/2) A^H (A G A^H + N0 I)^(-1) Y_p` with `G = diag(gamma)`,
/// solved as one `n_p x n_p` positive-definite system.
///
/// `gamma` holds the received powers of the supported pilots (transmit
/// power times LSFC). The predicted per-user MSE diagonal is filled from
/// [`error_covariance`].
pub fn lmmse_estimate(
    y_p: &Array2<Complex64>,
    book: &PilotBook,
    support: &[usize],
    gamma: &[f64],
    n0: f64,
) -> Result<ChannelEstimate, MudError> {
    check_gamma(support, gamma)?;
    for (i, &g) in gamma.iter().enumerate() {
        if g <= 0.0 {
            return Err(MudError::NonPositiveGamma { index: i, value: g });
        }
    }
    if y_p.nrows() != book.pilot_len() {
        return Err(MudError::ShapeMismatch {
            expected: book.pilot_len(),
            got: y_p.nrows(),
        });
    }
    let n_p = book.pilot_len();
    let k = support.len();
    let a = book.subset_matrix(support)?;

    // B = A G A^H + N0 I, built from the weighted columns.
    let mut weighted = a.clone();
    for j in 0..k {
        let s = gamma[j].sqrt();
        for i in 0..n_p {
            weighted[[i, j]] *= s;
        }
    }
    let wh = crate::linalg::conj_transpose(&weighted);
    let mut b = weighted.dot(&wh);
    for i in 0..n_p {
        b[[i, i]] += Complex64::new(n0, 0.0);
    }
    let z = solve_hermitian(&b, y_p)?;
    // H_hat = G^(1/2) A^H z = weighted^H z.
    let h_hat = wh.dot(&z);

    let mse_diag = if n0 > 0.0 {
        error_covariance_diag(book, support, gamma, n0)?
    } else {
        vec![0.0; k]
    };
    Ok(ChannelEstimate {
        h_hat,
        support: support.to_vec(),
        mse_diag,
    })
}

/// Error covariance of the LMMSE estimate restricted to the support:
/// `C_e = I - G^(1/2) A^H (A G A^H + N0 I)^(-1) A G^(1/2)`, evaluated
/// through the algebraically equivalent `K x K` form
/// `(I + G^(1/2) A^H A G^(1/2) / N0)^(-1)`.
pub fn error_covariance(
    book: &PilotBook,
    support: &[usize],
    gamma: &[f64],
    n0: f64,
) -> Result<Array2<Complex64>, MudError> {
    check_gamma(support, gamma)?;
    if n0 <= 0.0 {
        return Err(MudError::BadNoise(n0));
    }
    let k = support.len();
    let gram = book.gram(support)?;
    let mut m = Array2::<Complex64>::zeros((k, k));
    for i in 0..k {
        for j in 0..k {
            let w = (gamma[i] * gamma[j]).sqrt() / n0;
            m[[i, j]] = gram[[i, j]] * w;
        }
        m[[i, i]] += Complex64::new(1.0, 0.0);
    }
    Ok(invert_hermitian(&m)?)
}

/// Diagonal of [`error_covariance`]: the predicted per-user MSE.
pub fn error_covariance_diag(
    book: &PilotBook,
    support: &[usize],
    gamma: &[f64],
    n0: f64,
) -> Result<Vec<f64>, MudError> {
    let c = error_covariance(book, support, gamma, n0)?;
    Ok((0..support.len()).map(|i| c[[i, i]].re).collect())
}

/// Maximum-ratio combining of the data phase.
///
/// Projects each received symbol vector onto the estimated channel row and
/// rescales so the desired-signal part has unit mean amplitude; the QPSK
/// bit LLRs are `2 sqrt(2) Re/Im(s_hat) * SINR_k` with the SINR taken from
/// the closed-form MRC expression at the estimated parameters.
pub fn mrc_detect(
    y_d: &Array2<Complex64>,
    est: &ChannelEstimate,
    gamma: &[f64],
    prm: &MrcParams,
) -> Result<SoftSequences, MudError> {
    let k = est.support.len();
    if gamma.len() != k {
        return Err(MudError::EstimateMismatch {
            est: k,
            gamma: gamma.len(),
        });
    }
    let m = est.h_hat.ncols();
    if y_d.ncols() != m {
        return Err(MudError::ShapeMismatch {
            expected: m,
            got: y_d.ncols(),
        });
    }
    let n_d = y_d.nrows();
    let m_f = m as f64;

    // s_hat0[k, t] = sum_m conj(H_hat[k, m]) Y_d[t, m].
    let h_conj = est.h_hat.mapv(|z| z.conj());
    let yt = y_d.t();
    let raw = h_conj.dot(&yt);

    let total_gamma: f64 = gamma.iter().sum();
    let mut s_hat = Array2::<Complex64>::zeros((k, n_d));
    let mut llrs = Array2::<f64>::zeros((k, 2 * n_d));
    let mut sinr = vec![0.0; k];
    let mut excluded = Vec::new();
    for row in 0..k {
        if gamma[row] <= 0.0 {
            excluded.push(row);
            continue;
        }
        let sigma_sq = est.mse_diag.get(row).copied().unwrap_or(0.0);
        let g_est = gamma[row] / prm.p_pilot;
        // Expected MRC signal coefficient after the 1/sqrt(gamma) column
        // scaling: sqrt(P_data/P_pilot) * M * (1 - sigma^2).
        let coeff = (prm.p_data / prm.p_pilot).sqrt() * m_f * (1.0 - sigma_sq).max(1e-12);
        let norm = 1.0 / (gamma[row].sqrt() * coeff);
        let interference = (total_gamma - gamma[row]) * prm.p_data / prm.p_pilot;
        let s = sinr_mrc(m, sigma_sq, g_est, prm.p_data, prm.n0, interference).clamp(0.0, 1e12);
        sinr[row] = s;
        let llr_scale = 2.0 * SQRT_2 * s;
        for t in 0..n_d {
            let v = raw[[row, t]] * norm;
            s_hat[[row, t]] = v;
            llrs[[row, 2 * t]] = llr_scale * v.re;
            llrs[[row, 2 * t + 1]] = llr_scale * v.im;
        }
    }
    Ok(SoftSequences {
        s_hat,
        llrs,
        sinr,
        excluded,
    })
}
