//! Experiment configuration and the `key = value` config-file format.
//!
//! Files hold one `key = value` pair per line; `#` starts a comment.
//! Parse errors carry the offending line number. Powers may be given
//! either directly (`p_pilot`, `p_data`, linear) or through `ebn0_db`,
//! from which equal pilot/data powers are derived as
//! `P = Eb/N0 * B * N0 / (n_p + n_d)`.

use crate::channel::{LsfcModel, SceneParams};
use std::fmt::Display;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Parsed `key = value` file with line tracking.
pub struct KvFile {
    entries: Vec<(String, String, usize)>,
}

impl KvFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries: Vec<(String, String, usize)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let stripped = raw.split('#').next().unwrap_or("").trim();
            if stripped.is_empty() {
                continue;
            }
            let Some((k, v)) = stripped.split_once('=') else {
                return Err(ConfigError::Line {
                    line,
                    msg: format!("expected `key = value`, found `{}`", raw.trim()),
                });
            };
            let key = k.trim().to_string();
            let value = v.trim().to_string();
            if key.is_empty() || value.is_empty() {
                return Err(ConfigError::Line {
                    line,
                    msg: "empty key or value".into(),
                });
            }
            if entries.iter().any(|(ek, _, _)| ek == &key) {
                return Err(ConfigError::Line {
                    line,
                    msg: format!("duplicate key `{key}`"),
                });
            }
            entries.push((key, value, line));
        }
        Ok(Self { entries })
    }

    /// Remove and parse a key if present.
    pub fn take<T: FromStr>(&mut self, key: &'static str) -> Result<Option<T>, ConfigError>
    where
        T::Err: Display,
    {
        match self.entries.iter().position(|(k, _, _)| k == key) {
            None => Ok(None),
            Some(pos) => {
                let (_, value, line) = self.entries.remove(pos);
                value.parse::<T>().map(Some).map_err(|e| ConfigError::Line {
                    line,
                    msg: format!("invalid value `{value}` for `{key}`: {e}"),
                })
            }
        }
    }

    pub fn take_or<T: FromStr>(&mut self, key: &'static str, default: T) -> Result<T, ConfigError>
    where
        T::Err: Display,
    {
        Ok(self.take(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&mut self, key: &'static str) -> Result<T, ConfigError>
    where
        T::Err: Display,
    {
        self.take(key)?.ok_or(ConfigError::Missing(key))
    }

    /// Fails on any unconsumed key, pointing at its line.
    pub fn finish(self) -> Result<(), ConfigError> {
        if let Some((key, _, line)) = self.entries.into_iter().next() {
            return Err(ConfigError::Line {
                line,
                msg: format!("unknown key `{key}`"),
            });
        }
        Ok(())
    }
}

/// How the active support is selected after activity detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SupportSetting {
    /// The receiver knows `K_a` and keeps the strongest rows.
    KnownKa,
    /// Threshold on the estimated received power.
    Threshold(f64),
}

/// Full description of one Monte Carlo campaign.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub n_p: usize,
    pub n_d: usize,
    pub b_bits: u32,
    pub j_bits: u32,
    pub m_antennas: usize,
    pub k_active: usize,
    pub n0: f64,
    pub p_pilot: f64,
    pub p_data: f64,
    pub trials: usize,
    pub campaign_seed: u64,
    pub pilot_seed: u64,
    pub amp_max_iters: usize,
    pub amp_damping: f64,
    pub amp_tol: f64,
    pub amp_trace: bool,
    pub support_rule: SupportSetting,
    pub crc_bits: usize,
    pub list_size: usize,
    /// Bhattacharyya design parameter; derived from the operating SINR
    /// when absent.
    pub design_z0: Option<f64>,
    pub dedup: bool,
    pub truncate_to_ka: bool,
    pub lsfc_g: f64,
    pub lsfc_known: bool,
}

impl ExperimentConfig {
    /// Parse from config-file text and validate.
    pub fn from_kv_text(text: &str) -> Result<Self, ConfigError> {
        let mut kv = KvFile::parse(text)?;
        let n_p: usize = kv.require("n_p")?;
        let n_d: usize = kv.require("n_d")?;
        let b_bits: u32 = kv.require("b")?;
        let j_bits: u32 = kv.require("j")?;
        let m_antennas: usize = kv.require("m")?;
        let k_active: usize = kv.require("k_a")?;
        let trials: usize = kv.take_or("trials", 100)?;
        let campaign_seed: u64 = kv.take_or("seed", 1)?;
        let pilot_seed: u64 = kv.take_or("pilot_seed", campaign_seed)?;
        let n0: f64 = kv.take_or("n0", 1.0)?;
        let ebn0_db: Option<f64> = kv.take("ebn0_db")?;
        let p_pilot: Option<f64> = kv.take("p_pilot")?;
        let p_data: Option<f64> = kv.take("p_data")?;
        let amp_max_iters: usize = kv.take_or("amp_iters", 50)?;
        let amp_damping: f64 = kv.take_or("amp_damping", 0.7)?;
        let amp_tol: f64 = kv.take_or("amp_tol", 1e-6)?;
        let amp_trace: bool = kv.take_or("amp_trace", false)?;
        let rule_name: String = kv.take_or("support_rule", "known_ka".to_string())?;
        let theta: Option<f64> = kv.take("theta")?;
        let crc_bits: usize = kv.take_or("crc_bits", 16)?;
        let list_size: usize = kv.take_or("list_size", 32)?;
        let design_z0: Option<f64> = kv.take("design_z0")?;
        let dedup: bool = kv.take_or("dedup", true)?;
        let truncate_to_ka: bool = kv.take_or("truncate_to_ka", false)?;
        let lsfc_g: f64 = kv.take_or("lsfc_g", 1.0)?;
        let lsfc_known: bool = kv.take_or("lsfc_known", true)?;
        kv.finish()?;

        let support_rule = match rule_name.as_str() {
            "known_ka" => {
                if theta.is_some() {
                    return Err(ConfigError::Invalid(
                        "`theta` is only meaningful with support_rule = threshold".into(),
                    ));
                }
                SupportSetting::KnownKa
            }
            "threshold" => SupportSetting::Threshold(theta.ok_or(ConfigError::Missing("theta"))?),
            other => {
                return Err(ConfigError::Invalid(format!(
                    "support_rule must be `known_ka` or `threshold`, got `{other}`"
                )));
            }
        };

        let (p_pilot, p_data) = match (p_pilot, p_data, ebn0_db) {
            (Some(pp), Some(pd), None) => (pp, pd),
            (Some(pp), None, None) => (pp, pp),
            (None, None, Some(db)) => {
                if b_bits == 0 || n_p + n_d == 0 {
                    return Err(ConfigError::Invalid("cannot derive power".into()));
                }
                let p = 10f64.powf(db / 10.0) * b_bits as f64 * n0 / (n_p + n_d) as f64;
                (p, p)
            }
            (None, None, None) => return Err(ConfigError::Missing("ebn0_db")),
            _ => {
                return Err(ConfigError::Invalid(
                    "give either `ebn0_db` or explicit `p_pilot`/`p_data`, not both".into(),
                ));
            }
        };

        let cfg = Self {
            n_p,
            n_d,
            b_bits,
            j_bits,
            m_antennas,
            k_active,
            n0,
            p_pilot,
            p_data,
            trials,
            campaign_seed,
            pilot_seed,
            amp_max_iters,
            amp_damping,
            amp_tol,
            amp_trace,
            support_rule,
            crc_bits,
            list_size,
            design_z0,
            dedup,
            truncate_to_ka,
            lsfc_g,
            lsfc_known,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: String| Err(ConfigError::Invalid(msg));
        if self.j_bits == 0 || self.b_bits <= self.j_bits || self.b_bits > 128 {
            return fail(format!(
                "need 0 < J < B <= 128, got B = {}, J = {}",
                self.b_bits, self.j_bits
            ));
        }
        if self.j_bits >= usize::BITS {
            return fail(format!("pilot pool 2^{} does not fit usize", self.j_bits));
        }
        let n_pool = 1usize << self.j_bits;
        if self.n_p == 0 || self.n_p > n_pool {
            return fail(format!(
                "pilot length n_p = {} must lie in [1, N = {n_pool}]",
                self.n_p
            ));
        }
        let block = 2 * self.n_d;
        if self.n_d == 0 || !block.is_power_of_two() {
            return fail(format!(
                "coded block 2 n_d = {block} must be a power of two"
            ));
        }
        let payload = (self.b_bits - self.j_bits) as usize;
        if payload + self.crc_bits >= block {
            return fail(format!(
                "payload {payload} + crc {} must be below the block length {block}",
                self.crc_bits
            ));
        }
        if self.k_active == 0 {
            return fail("k_a must be at least 1".into());
        }
        if self.k_active >= n_pool {
            return fail(format!(
                "k_a = {} must be below the pilot pool N = {n_pool}",
                self.k_active
            ));
        }
        if self.m_antennas == 0 {
            return fail("m must be at least 1".into());
        }
        if self.trials == 0 {
            return fail("trials must be at least 1".into());
        }
        if !(self.n0 > 0.0 && self.n0.is_finite()) {
            return fail(format!("n0 must be positive and finite, got {}", self.n0));
        }
        for (name, p) in [("p_pilot", self.p_pilot), ("p_data", self.p_data)] {
            if !(p > 0.0 && p.is_finite()) {
                return fail(format!("{name} must be positive and finite, got {p}"));
            }
        }
        if !(self.amp_damping > 0.0 && self.amp_damping <= 1.0) {
            return fail(format!(
                "amp_damping must lie in (0, 1], got {}",
                self.amp_damping
            ));
        }
        if self.amp_max_iters == 0 || self.amp_tol <= 0.0 {
            return fail("amp_iters must be >= 1 and amp_tol positive".into());
        }
        if self.list_size == 0 {
            return fail("list_size must be at least 1".into());
        }
        if let Some(z0) = self.design_z0
            && !(z0 > 0.0 && z0 < 1.0)
        {
            return fail(format!("design_z0 must lie in (0, 1), got {z0}"));
        }
        if let SupportSetting::Threshold(theta) = self.support_rule {
            if !(theta >= 0.0 && theta.is_finite()) {
                return fail(format!("theta must be non-negative, got {theta}"));
            }
            if self.truncate_to_ka {
                return fail("truncate_to_ka requires support_rule = known_ka".into());
            }
        }
        if self.lsfc_g <= 0.0 {
            return fail(format!("lsfc_g must be positive, got {}", self.lsfc_g));
        }
        Ok(())
    }

    pub fn pool_size(&self) -> usize {
        1usize << self.j_bits
    }

    pub fn payload_bits(&self) -> usize {
        (self.b_bits - self.j_bits) as usize
    }

    pub fn block_length(&self) -> usize {
        2 * self.n_d
    }

    /// Energy per bit over N0: `(n_p P_pilot + n_d P_data) / (B N0)`.
    pub fn ebn0(&self) -> f64 {
        (self.n_p as f64 * self.p_pilot + self.n_d as f64 * self.p_data)
            / (self.b_bits as f64 * self.n0)
    }

    pub fn ebn0_db(&self) -> f64 {
        10.0 * self.ebn0().log10()
    }

    pub fn scene_params(&self) -> SceneParams {
        SceneParams {
            k_active: self.k_active,
            b_bits: self.b_bits,
            j_bits: self.j_bits,
            m_antennas: self.m_antennas,
            p_pilot: self.p_pilot,
            p_data: self.p_data,
            n0: self.n0,
            lsfc: LsfcModel::Constant(self.lsfc_g),
        }
    }

    /// Scale both powers by a dB offset (margin studies).
    pub fn with_power_offset_db(mut self, db: f64) -> Self {
        let f = 10f64.powf(db / 10.0);
        self.p_pilot *= f;
        self.p_data *= f;
        self
    }
}
