//! Random-access scene generation and received-signal synthesis.
//!
//! A scene is one realization of the random access channel: `K_a` active
//! users with distinct `B`-bit messages, the pilot index of each user taken
//! from the first `J` message bits, iid Rayleigh channel vectors across `M`
//! antennas and per-user large-scale fading coefficients. Pilot collisions
//! (several users sharing a prefix) are allowed and expected.

use crate::math::complex_gaussian_matrix;
use crate::pilots::PilotBook;
use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use std::collections::HashSet;
use std::f64::consts::FRAC_1_SQRT_2;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("message length {b} must satisfy {j} < B <= 128")]
    BadMessageLength { b: u32, j: u32 },
    #[error("at least one active user required")]
    NoUsers,
    #[error("LSFC list has {got} entries, expected {expected}")]
    LsfcLength { expected: usize, got: usize },
    #[error("LSFC values must be positive")]
    NonPositiveLsfc,
    #[error("scene uses a pilot pool of {scene} but the book holds {book}")]
    PoolMismatch { scene: usize, book: usize },
    #[error("symbol matrix is {got_rows}x{got_cols}, expected {rows}x{cols}")]
    SymbolShape {
        rows: usize,
        cols: usize,
        got_rows: usize,
        got_cols: usize,
    },
}

/// Large-scale fading model for the active users.
#[derive(Debug, Clone)]
pub enum LsfcModel {
    /// Every user has the same coefficient (the default is 1).
    Constant(f64),
    /// Caller-supplied coefficients, one per active user.
    PerUser(Vec<f64>),
}

/// Parameters needed to draw one scene.
#[derive(Debug, Clone)]
pub struct SceneParams {
    pub k_active: usize,
    pub b_bits: u32,
    pub j_bits: u32,
    pub m_antennas: usize,
    pub p_pilot: f64,
    pub p_data: f64,
    pub n0: f64,
    pub lsfc: LsfcModel,
}

/// One random-access realization.
#[derive(Debug, Clone)]
pub struct Scene {
    /// Full `B`-bit messages, prefix in the high bits.
    pub messages: Vec<u128>,
    /// Pilot index of each user: the integer value of the first `J` bits.
    pub pilot_indices: Vec<usize>,
    /// `K_a x M` matrix of channel rows, `h_k ~ CN(0, I_M)`.
    pub channels: Array2<Complex64>,
    /// Large-scale fading coefficient per user.
    pub lsfc: Vec<f64>,
    pub b_bits: u32,
    pub j_bits: u32,
    pub p_pilot: f64,
    pub p_data: f64,
    pub n0: f64,
}

impl Scene {
    pub fn k_active(&self) -> usize {
        self.messages.len()
    }

    pub fn m_antennas(&self) -> usize {
        self.channels.ncols()
    }

    pub fn pool_size(&self) -> usize {
        1usize << self.j_bits
    }

    /// Payload of user `k`: the low `B - J` bits of its message.
    pub fn payload(&self, k: usize) -> u128 {
        self.messages[k] & payload_mask(self.b_bits, self.j_bits)
    }

    /// Number of pilot collisions of order exactly `k` counted as user
    /// subsets: `sum_pilots C(occupancy, k)`.
    pub fn collision_subsets(&self, k: usize) -> u64 {
        let mut occ = std::collections::HashMap::new();
        for &p in &self.pilot_indices {
            *occ.entry(p).or_insert(0u64) += 1;
        }
        occ.values().map(|&c| subsets(c, k as u64)).sum()
    }

    /// Distinct pilot indices in use, ascending.
    pub fn active_pilots(&self) -> Vec<usize> {
        let mut v = self.pilot_indices.clone();
        v.sort_unstable();
        v.dedup();
        v
    }
}

fn subsets(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let mut r = 1u64;
    for i in 0..k {
        r = r * (n - i) / (i + 1);
    }
    r
}

pub(crate) fn payload_mask(b_bits: u32, j_bits: u32) -> u128 {
    let width = b_bits - j_bits;
    if width == 128 {
        u128::MAX
    } else {
        (1u128 << width) - 1
    }
}

/// Split a message into (pilot index, payload).
pub fn split_message(msg: u128, b_bits: u32, j_bits: u32) -> (usize, u128) {
    let payload = msg & payload_mask(b_bits, j_bits);
    let pilot = (msg >> (b_bits - j_bits)) as usize;
    (pilot, payload)
}

/// Reassemble a message from pilot index and payload.
pub fn join_message(pilot: usize, payload: u128, b_bits: u32, j_bits: u32) -> u128 {
    ((pilot as u128) << (b_bits - j_bits)) | (payload & payload_mask(b_bits, j_bits))
}

/// Draw one scene: distinct uniform messages, pilots from prefixes, iid
/// Rayleigh channels and LSFCs per the configured model.
pub fn draw_scene<R: Rng + ?Sized>(prm: &SceneParams, rng: &mut R) -> Result<Scene, ChannelError> {
    if prm.b_bits <= prm.j_bits || prm.b_bits > 128 {
        return Err(ChannelError::BadMessageLength {
            b: prm.b_bits,
            j: prm.j_bits,
        });
    }
    if prm.k_active == 0 {
        return Err(ChannelError::NoUsers);
    }
    let lsfc = match &prm.lsfc {
        LsfcModel::Constant(g) => {
            if *g <= 0.0 {
                return Err(ChannelError::NonPositiveLsfc);
            }
            vec![*g; prm.k_active]
        }
        LsfcModel::PerUser(v) => {
            if v.len() != prm.k_active {
                return Err(ChannelError::LsfcLength {
                    expected: prm.k_active,
                    got: v.len(),
                });
            }
            if v.iter().any(|&g| g <= 0.0) {
                return Err(ChannelError::NonPositiveLsfc);
            }
            v.clone()
        }
    };

    let msg_mask = if prm.b_bits == 128 {
        u128::MAX
    } else {
        (1u128 << prm.b_bits) - 1
    };
    let mut seen = HashSet::with_capacity(prm.k_active);
    let mut messages = Vec::with_capacity(prm.k_active);
    while messages.len() < prm.k_active {
        let raw = ((rng.random::<u64>() as u128) << 64) | rng.random::<u64>() as u128;
        let msg = raw & msg_mask;
        if seen.insert(msg) {
            messages.push(msg);
        }
    }
    let pilot_indices = messages
        .iter()
        .map(|&m| split_message(m, prm.b_bits, prm.j_bits).0)
        .collect();
    let channels = complex_gaussian_matrix(rng, prm.k_active, prm.m_antennas, 1.0);

    Ok(Scene {
        messages,
        pilot_indices,
        channels,
        lsfc,
        b_bits: prm.b_bits,
        j_bits: prm.j_bits,
        p_pilot: prm.p_pilot,
        p_data: prm.p_data,
        n0: prm.n0,
    })
}

/// Received pilot-phase signal `Y_p` (`n_p x M`): superposition of the
/// chosen pilot columns weighted by `sqrt(P_pilot g_k) h_k`, plus
/// CN(0, N0) noise. Colliding users add on the same column.
pub fn emit_pilot_signal<R: Rng + ?Sized>(
    scene: &Scene,
    book: &PilotBook,
    rng: &mut R,
) -> Result<Array2<Complex64>, ChannelError> {
    if book.n_pool() != scene.pool_size() {
        return Err(ChannelError::PoolMismatch {
            scene: scene.pool_size(),
            book: book.n_pool(),
        });
    }
    let (n_p, m) = (book.pilot_len(), scene.m_antennas());
    let mut y = complex_gaussian_matrix(rng, n_p, m, scene.n0);
    for k in 0..scene.k_active() {
        let amp = (scene.p_pilot * scene.lsfc[k]).sqrt();
        let col = book
            .column(scene.pilot_indices[k])
            .expect("pilot index bounded by pool size");
        for i in 0..n_p {
            let ai = col[i] * amp;
            for a in 0..m {
                y[[i, a]] += ai * scene.channels[[k, a]];
            }
        }
    }
    Ok(y)
}

/// Received data-phase signal `Y_d` (`n_d x M`): each user's unit-power
/// symbol sequence scaled by `sqrt(P_data g_k)`, beamformed through its
/// channel row, plus CN(0, N0) noise.
pub fn emit_data_signal<R: Rng + ?Sized>(
    scene: &Scene,
    symbols: &Array2<Complex64>,
    rng: &mut R,
) -> Result<Array2<Complex64>, ChannelError> {
    let (k, n_d) = symbols.dim();
    if k != scene.k_active() {
        return Err(ChannelError::SymbolShape {
            rows: scene.k_active(),
            cols: n_d,
            got_rows: k,
            got_cols: n_d,
        });
    }
    let m = scene.m_antennas();
    // Y_d = S_w^T H with S_w = diag(sqrt(P_data g)) S.
    let mut weighted = Array2::<Complex64>::zeros((n_d, k));
    for u in 0..k {
        let amp = (scene.p_data * scene.lsfc[u]).sqrt();
        for t in 0..n_d {
            weighted[[t, u]] = symbols[[u, t]] * amp;
        }
    }
    let mut y = weighted.dot(&scene.channels);
    let noise = complex_gaussian_matrix(rng, n_d, m, scene.n0);
    y += &noise;
    Ok(y)
}

/// Gray-mapped QPSK with unit symbol energy: bit pair `(b_2t, b_2t+1)`
/// maps to `((1-2*b_2t) + i(1-2*b_2t+1)) / sqrt(2)`.
pub fn qpsk_modulate(bits: &[u8]) -> Vec<Complex64> {
    assert!(
        bits.len().is_multiple_of(2),
        "QPSK needs an even number of bits"
    );
    bits.chunks_exact(2)
        .map(|p| {
            Complex64::new(
                FRAC_1_SQRT_2 * (1.0 - 2.0 * p[0] as f64),
                FRAC_1_SQRT_2 * (1.0 - 2.0 * p[1] as f64),
            )
        })
        .collect()
}

/// Bits of `value`, most significant first, `width` of them.
pub fn bits_msb_first(value: u128, width: u32) -> Vec<u8> {
    (0..width).rev().map(|i| ((value >> i) & 1) as u8).collect()
}

/// Inverse of [`bits_msb_first`].
pub fn value_from_bits(bits: &[u8]) -> u128 {
    bits.iter().fold(0u128, |acc, &b| (acc << 1) | b as u128)
}
