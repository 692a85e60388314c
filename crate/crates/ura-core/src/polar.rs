//! CRC-aided polar code with successive-cancellation list decoding.
//!
//! The code construction follows the Bhattacharyya recursion
//! `Z- = 2Z - Z^2`, `Z+ = Z^2` (evaluated in the log domain so deep
//! polarization does not underflow), freezing the least reliable synthetic
//! channels. The list decoder keeps up to `list_size` paths under the
//! standard LLR path metric and returns every candidate whose CRC checks,
//! ordered by metric. Returning all CRC-valid candidates is what lets two
//! colliding users be recovered from a single superposed observation.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PolarError {
    #[error("block length {0} is not a power of two >= 2")]
    BadBlockLength(usize),
    #[error("payload {payload} + crc {crc} bits do not fit in block {block} (rate must be < 1)")]
    Infeasible {
        payload: usize,
        crc: usize,
        block: usize,
    },
    #[error("payload must have at least one bit")]
    EmptyPayload,
    #[error("no default CRC polynomial for width {0}; use construct_with_poly")]
    UnsupportedCrcWidth(usize),
    #[error("design parameter {0} must lie in (0, 1)")]
    BadDesignParameter(f64),
    #[error("list size must be at least 1")]
    BadListSize,
    #[error("payload has {got} bits, expected {expected}")]
    PayloadLength { expected: usize, got: usize },
    #[error("LLR vector has {got} entries, expected {expected}")]
    LlrLength { expected: usize, got: usize },
}

/// A CRC-aided polar code: frozen pattern, CRC and list-size settings.
#[derive(Debug, Clone)]
pub struct PolarCodeSpec {
    block_length: usize,
    payload_bits: usize,
    crc_bits: usize,
    list_size: usize,
    crc_poly: u32,
    design_z0: f64,
    frozen: Vec<bool>,
    info_positions: Vec<usize>,
}

/// CRC-valid decoder candidates ordered by path metric (best first).
#[derive(Debug, Clone, Default)]
pub struct DecodeOutput {
    /// Payload bit vectors (MSB first), one per CRC-valid path.
    pub candidates: Vec<Vec<u8>>,
    /// Path metrics aligned with `candidates`; lower is better.
    pub metrics: Vec<f64>,
    /// Payload of the best-metric path regardless of its CRC, as a
    /// fallback when a fixed-size output list must be filled.
    pub best_payload: Vec<u8>,
    /// Metric of `best_payload`.
    pub best_metric: f64,
}

impl DecodeOutput {
    pub fn contains(&self, payload: &[u8]) -> bool {
        self.candidates.iter().any(|c| c == payload)
    }
}

fn default_crc_poly(width: usize) -> Option<u32> {
    match width {
        0 => Some(0),
        4 => Some(0x3),
        8 => Some(0x07),
        12 => Some(0x80F),
        16 => Some(0x1021), // CRC-16-CCITT
        24 => Some(0x86_4CFB),
        32 => Some(0x04C1_1DB7),
        _ => None,
    }
}

/// Construct a code with the default CRC polynomial for `crc_bits`.
pub fn construct(
    block_length: usize,
    payload_bits: usize,
    crc_bits: usize,
    design_z0: f64,
) -> Result<PolarCodeSpec, PolarError> {
    let poly = default_crc_poly(crc_bits).ok_or(PolarError::UnsupportedCrcWidth(crc_bits))?;
    construct_with_poly(block_length, payload_bits, crc_bits, poly, design_z0)
}

/// Construct a code with an explicit CRC polynomial (no implicit top bit,
/// zero initial state, checksum appended after the payload).
pub fn construct_with_poly(
    block_length: usize,
    payload_bits: usize,
    crc_bits: usize,
    crc_poly: u32,
    design_z0: f64,
) -> Result<PolarCodeSpec, PolarError> {
    if block_length < 2 || !block_length.is_power_of_two() {
        return Err(PolarError::BadBlockLength(block_length));
    }
    if payload_bits == 0 {
        return Err(PolarError::EmptyPayload);
    }
    if crc_bits > 32 {
        return Err(PolarError::UnsupportedCrcWidth(crc_bits));
    }
    if payload_bits + crc_bits >= block_length {
        return Err(PolarError::Infeasible {
            payload: payload_bits,
            crc: crc_bits,
            block: block_length,
        });
    }
    if !(design_z0 > 0.0 && design_z0 < 1.0) {
        return Err(PolarError::BadDesignParameter(design_z0));
    }

    let reliabilities = bhattacharyya_log(block_length, design_z0);
    let info_count = payload_bits + crc_bits;
    // Freeze the block_length - info_count channels with the largest Z;
    // ties resolve toward freezing the lower index.
    let mut order: Vec<usize> = (0..block_length).collect();
    order.sort_by(|&a, &b| {
        reliabilities[b]
            .partial_cmp(&reliabilities[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut frozen = vec![false; block_length];
    for &idx in order.iter().take(block_length - info_count) {
        frozen[idx] = true;
    }
    let info_positions: Vec<usize> = (0..block_length).filter(|&i| !frozen[i]).collect();

    Ok(PolarCodeSpec {
        block_length,
        payload_bits,
        crc_bits,
        list_size: 32,
        crc_poly,
        design_z0,
        frozen,
        info_positions,
    })
}

/// `ln Z` for every synthetic channel: `L+ = 2L`, `L- = L + ln(2 - e^L)`.
fn bhattacharyya_log(n: usize, z0: f64) -> Vec<f64> {
    let mut z = vec![z0.ln()];
    while z.len() < n {
        let mut next = Vec::with_capacity(z.len() * 2);
        for &l in &z {
            next.push(l + (2.0 - l.exp()).ln());
            next.push(2.0 * l);
        }
        z = next;
    }
    z
}

impl PolarCodeSpec {
    pub fn with_list_size(mut self, list_size: usize) -> Result<Self, PolarError> {
        if list_size == 0 {
            return Err(PolarError::BadListSize);
        }
        self.list_size = list_size;
        Ok(self)
    }

    pub fn block_length(&self) -> usize {
        self.block_length
    }

    pub fn payload_bits(&self) -> usize {
        self.payload_bits
    }

    pub fn crc_bits(&self) -> usize {
        self.crc_bits
    }

    pub fn list_size(&self) -> usize {
        self.list_size
    }

    pub fn design_z0(&self) -> f64 {
        self.design_z0
    }

    pub fn is_frozen(&self, idx: usize) -> bool {
        self.frozen[idx]
    }

    /// Frozen indices, ascending.
    pub fn frozen_set(&self) -> Vec<usize> {
        (0..self.block_length).filter(|&i| self.frozen[i]).collect()
    }

    pub fn info_positions(&self) -> &[usize] {
        &self.info_positions
    }

    /// CRC register over a bit sequence, MSB-first, zero initial state.
    fn crc(&self, bits: &[u8]) -> u32 {
        if self.crc_bits == 0 {
            return 0;
        }
        let mask = if self.crc_bits == 32 {
            u32::MAX
        } else {
            (1u32 << self.crc_bits) - 1
        };
        let mut reg = 0u32;
        for &b in bits {
            let feedback = ((reg >> (self.crc_bits - 1)) & 1) ^ b as u32;
            reg = (reg << 1) & mask;
            if feedback == 1 {
                reg ^= self.crc_poly & mask;
            }
        }
        reg
    }

    fn crc_checks(&self, info: &[u8]) -> bool {
        if self.crc_bits == 0 {
            return true;
        }
        let payload = &info[..self.payload_bits];
        let expect = self.crc(payload);
        let got = info[self.payload_bits..]
            .iter()
            .fold(0u32, |acc, &b| (acc << 1) | b as u32);
        expect == got
    }

    /// Encode a payload: CRC appended, scattered onto the non-frozen
    /// positions, frozen bits zero, then the in-place polar transform.
    pub fn encode(&self, payload: &[u8]) -> Result<Vec<u8>, PolarError> {
        if payload.len() != self.payload_bits {
            return Err(PolarError::PayloadLength {
                expected: self.payload_bits,
                got: payload.len(),
            });
        }
        let crc = self.crc(payload);
        let mut u = vec![0u8; self.block_length];
        for (slot, &pos) in self.info_positions.iter().enumerate() {
            u[pos] = if slot < self.payload_bits {
                payload[slot]
            } else {
                let shift = self.crc_bits - 1 - (slot - self.payload_bits);
                ((crc >> shift) & 1) as u8
            };
        }
        let n = self.block_length;
        let mut half = 1;
        while half < n {
            for i in 0..n {
                if i & half == 0 {
                    u[i] ^= u[i + half];
                }
            }
            half <<= 1;
        }
        Ok(u)
    }

    /// Successive-cancellation list decode. Returns every CRC-valid
    /// candidate (possibly none), best path metric first.
    pub fn scl_decode(&self, llrs: &[f64]) -> Result<DecodeOutput, PolarError> {
        if llrs.len() != self.block_length {
            return Err(PolarError::LlrLength {
                expected: self.block_length,
                got: llrs.len(),
            });
        }
        debug_assert!(llrs.iter().all(|l| l.is_finite()), "LLRs must be finite");
        let n = self.block_length;
        let m = n.trailing_zeros() as usize;

        let mut paths = vec![PathState::new(n, self.payload_bits + self.crc_bits)];
        let mut scratch: Vec<u8> = Vec::with_capacity(n);
        let mut cands: Vec<(f64, usize, u8)> = Vec::with_capacity(2 * self.list_size);

        for phi in 0..n {
            for p in paths.iter_mut() {
                compute_llrs(&mut p.llr, &p.csum, llrs, n, m, phi);
            }
            let leaf = n - 2; // flat offset of the single stage-m entry
            if self.frozen[phi] {
                for p in paths.iter_mut() {
                    let l = p.llr[leaf];
                    p.metric += metric_penalty(l, 0);
                    propagate_csum(p, n, m, phi, 0, &mut scratch);
                }
            } else {
                cands.clear();
                for (idx, p) in paths.iter().enumerate() {
                    let l = p.llr[leaf];
                    cands.push((p.metric + metric_penalty(l, 0), idx, 0));
                    cands.push((p.metric + metric_penalty(l, 1), idx, 1));
                }
                if cands.len() > self.list_size {
                    cands.sort_by(|a, b| {
                        a.0.partial_cmp(&b.0)
                            .unwrap()
                            .then(a.1.cmp(&b.1))
                            .then(a.2.cmp(&b.2))
                    });
                    cands.truncate(self.list_size);
                }
                let mut children = vec![0u8; paths.len()];
                for &(_, pidx, _) in cands.iter() {
                    children[pidx] += 1;
                }
                let mut slots: Vec<Option<PathState>> =
                    std::mem::take(&mut paths).into_iter().map(Some).collect();
                for &(metric, pidx, bit) in cands.iter() {
                    let mut st = if children[pidx] > 1 {
                        children[pidx] -= 1;
                        slots[pidx].clone().unwrap()
                    } else {
                        slots[pidx].take().unwrap()
                    };
                    st.metric = metric;
                    st.info.push(bit);
                    propagate_csum(&mut st, n, m, phi, bit, &mut scratch);
                    paths.push(st);
                }
            }
        }

        let mut valid: Vec<(f64, usize)> = paths
            .iter()
            .enumerate()
            .filter(|(_, p)| self.crc_checks(&p.info))
            .map(|(i, p)| (p.metric, i))
            .collect();
        valid.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let mut out = DecodeOutput::default();
        for (metric, idx) in valid {
            out.candidates
                .push(paths[idx].info[..self.payload_bits].to_vec());
            out.metrics.push(metric);
        }
        let best = paths
            .iter()
            .enumerate()
            .min_by(|(i, a), (j, b)| a.metric.partial_cmp(&b.metric).unwrap().then(i.cmp(j)))
            .expect("at least one path survives");
        out.best_payload = best.1.info[..self.payload_bits].to_vec();
        out.best_metric = best.1.metric;
        Ok(out)
    }
}

#[derive(Clone)]
struct PathState {
    metric: f64,
    /// Stage-major LLRs for stages 1..=m; stage `s` (size n >> s) starts at
    /// flat offset `n - 2*(n >> s)`.
    llr: Vec<f64>,
    /// Re-encoded bits of the most recent even-phase node per stage, same
    /// layout as `llr`.
    csum: Vec<u8>,
    /// Decisions at the non-frozen positions, in decode order.
    info: Vec<u8>,
}

impl PathState {
    fn new(n: usize, info_len: usize) -> Self {
        Self {
            metric: 0.0,
            llr: vec![0.0; n - 1],
            csum: vec![0; n - 1],
            info: Vec::with_capacity(info_len),
        }
    }
}

/// Softplus `ln(1 + e^-t)` for `t >= 0`, vanishing for large `t`.
#[inline]
fn softplus_neg(t: f64) -> f64 {
    if t > 36.0 { 0.0 } else { (-t).exp().ln_1p() }
}

/// Exact check-node combine (boxplus):
/// `sign(a) sign(b) min(|a|,|b|)` plus the log-domain correction.
#[inline]
fn f_boxplus(a: f64, b: f64) -> f64 {
    let (aa, ab) = (a.abs(), b.abs());
    let mag = aa.min(ab) + softplus_neg(aa + ab) - softplus_neg((aa - ab).abs());
    if (a < 0.0) != (b < 0.0) { -mag } else { mag }
}

#[inline]
fn g_combine(a: f64, b: f64, upper_bit: u8) -> f64 {
    if upper_bit == 0 { b + a } else { b - a }
}

/// Exact path-metric penalty for deciding `bit` against LLR `l`:
/// `ln(1 + e^-(1-2u)l)`.
#[inline]
fn metric_penalty(l: f64, bit: u8) -> f64 {
    let t = if bit == 0 { l } else { -l };
    if t >= 0.0 {
        softplus_neg(t)
    } else {
        -t + softplus_neg(-t)
    }
}

/// Refresh the stage LLRs needed before deciding bit `phi`.
fn compute_llrs(llr: &mut [f64], csum: &[u8], chan: &[f64], n: usize, lambda: usize, phi: usize) {
    if lambda == 0 {
        return;
    }
    let node = phi; // node index at this stage is phi when called with the
    // stage-local index; callers pass phi >> (m - lambda)
    if node.is_multiple_of(2) {
        compute_llrs(llr, csum, chan, n, lambda - 1, node >> 1);
    }
    let sz = n >> lambda;
    let off = n - 2 * sz;
    let (lower, current) = llr.split_at_mut(off);
    for i in 0..sz {
        let (a, b) = if lambda == 1 {
            (chan[i], chan[i + sz])
        } else {
            let par_off = n - 4 * sz;
            (lower[par_off + i], lower[par_off + i + sz])
        };
        current[i] = if node.is_multiple_of(2) {
            f_boxplus(a, b)
        } else {
            g_combine(a, b, csum[off + i])
        };
    }
}

/// Fold the decided bit into the partial sums, combining completed sibling
/// pairs downward toward the channel stage.
fn propagate_csum(
    st: &mut PathState,
    n: usize,
    m: usize,
    phi: usize,
    bit: u8,
    scratch: &mut Vec<u8>,
) {
    scratch.clear();
    scratch.push(bit);
    let mut lambda = m;
    let mut node = phi;
    loop {
        let sz = n >> lambda;
        let off = n - 2 * sz;
        if node.is_multiple_of(2) {
            st.csum[off..off + sz].copy_from_slice(scratch);
            return;
        }
        scratch.resize(2 * sz, 0);
        for i in (0..sz).rev() {
            scratch[i + sz] = scratch[i];
        }
        for i in 0..sz {
            scratch[i] = st.csum[off + i] ^ scratch[i + sz];
        }
        lambda -= 1;
        if lambda == 0 {
            return;
        }
        node >>= 1;
    }
}
