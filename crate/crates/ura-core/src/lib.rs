//! Link-level simulator and closed-form analysis toolkit for pilot-based
//! unsourced random access over a quasi-static Rayleigh-fading channel with
//! an `M`-antenna receiver.
//!
//! Active users pick one of `N = 2^J` non-orthogonal pilots from the first
//! `J` bits of their message, and the receiver runs activity detection
//! (MMV-AMP over a sub-sampled DFT pilot pool), LMMSE channel estimation,
//! maximum-ratio combining and per-pilot CRC-aided polar list decoding to
//! produce an unordered list of messages. The `analysis` module predicts
//! the same pipeline's performance in closed form via the finite-blocklength
//! normal approximation, and the `harness` module runs seeded Monte Carlo
//! campaigns that report per-user misdetection and false-alarm rates.
//!
//! Module map:
//! - [`pilots`]: sub-sampled DFT pilot pool with FFT-fast operators.
//! - [`channel`]: scene generation and received-signal synthesis.
//! - [`amp`]: MMV-AMP activity detection.
//! - [`mud`]: LMMSE channel estimation and MRC soft detection.
//! - [`polar`]: CRC-aided polar code with list decoding.
//! - [`analysis`]: closed-form predictions and collision models.
//! - [`config`] / [`harness`]: experiment configuration, campaigns, CSV.

pub mod amp;
pub mod analysis;
pub mod channel;
pub mod config;
pub mod harness;
pub mod linalg;
pub mod math;
pub mod mud;
pub mod pilots;
pub mod polar;

pub use amp::{AmpConfig, AmpResult, SupportRule, run_mmv_amp};
pub use analysis::{
    CollisionOutcome, Ebn0Params, MseModel, PowerRequirement, collision_model_trial,
    collision_sweep, expected_collisions, normal_approx_rate, ortho_mse, required_ebn0,
    required_sinr, sinr_mrc,
};
pub use channel::{LsfcModel, Scene, SceneParams, draw_scene, emit_data_signal, emit_pilot_signal};
pub use config::{ConfigError, ExperimentConfig, SupportSetting};
pub use harness::{
    AnalyzeConfig, CampaignReport, HarnessError, TrialReport, run_campaign, run_trial,
};
pub use mud::{ChannelEstimate, SoftSequences, error_covariance, lmmse_estimate, mrc_detect};
pub use pilots::{PilotBook, SensingOp};
pub use polar::{DecodeOutput, PolarCodeSpec, construct};
