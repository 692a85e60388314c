//! Monte Carlo checks of the coded QPSK chain against the normal
//! approximation, and the large-antenna trend of the two-user collision
//! model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use ura_core::analysis::{CollisionOutcome, collision_model_trial};
use ura_core::channel::qpsk_modulate;
use ura_core::harness::default_design_z0;
use ura_core::math::complex_gaussian;
use ura_core::polar;

/// The (4096, 100) list-32 code at Eb/N0 = 2 dB keeps its block error rate
/// below 5% over 500 trials, consistent with running about 1 dB away from
/// the normal approximation (whose own requirement here is about -0.3 dB).
#[test]
fn full_length_code_meets_the_two_db_operating_point() {
    let n_d = 2048usize;
    let info = 100usize;
    let payload = 84usize;
    let code = polar::construct(2 * n_d, payload, 16, default_design_z0(info, 2 * n_d))
        .unwrap()
        .with_list_size(32)
        .unwrap();
    // Eb/N0 = 2 dB over the code dimension: per-complex-symbol SINR
    // s = 2 (k / 2n_d) Eb/N0.
    let ebn0 = 10f64.powf(2.0 / 10.0);
    let sinr = ebn0 * info as f64 / n_d as f64;
    let noise_var = 1.0 / sinr;
    let scale = 2.0 * std::f64::consts::SQRT_2 * sinr;
    let trials = 500;
    let mut errors = 0usize;
    let mut rng = ChaCha12Rng::seed_from_u64(42);
    for _ in 0..trials {
        let bits: Vec<u8> = (0..payload).map(|_| rng.random_range(0..2) as u8).collect();
        let cw = code.encode(&bits).unwrap();
        let syms = qpsk_modulate(&cw);
        let mut llrs = Vec::with_capacity(2 * n_d);
        for s in &syms {
            let y = s + complex_gaussian(&mut rng, noise_var);
            llrs.push(scale * y.re);
            llrs.push(scale * y.im);
        }
        let out = code.scl_decode(&llrs).unwrap();
        if out.candidates.first() != Some(&bits) {
            errors += 1;
        }
    }
    let bler = errors as f64 / trials as f64;
    assert!(
        bler < 0.05,
        "block error rate {bler} at Eb/N0 = 2 dB ({errors}/{trials})"
    );
}

/// With more antennas the cross-correlation terms of the collision model
/// shrink and the both-recovered fraction climbs toward the non-fading
/// two-user behavior.
#[test]
fn collision_recovery_improves_with_antennas() {
    let code = polar::construct(512, 10, 8, 0.5)
        .unwrap()
        .with_list_size(16)
        .unwrap();
    let snr = 10f64.powf(-10.0 / 10.0);
    let sigma_est = 1e-3;
    let trials = 120;
    let mut both = [0usize; 2];
    for (slot, m) in [(0usize, 16usize), (1, 512)] {
        let mut rng = ChaCha12Rng::seed_from_u64(31 + m as u64);
        for _ in 0..trials {
            if collision_model_trial(m, snr, sigma_est, &code, &mut rng) == CollisionOutcome::Both
            {
                both[slot] += 1;
            }
        }
    }
    assert!(
        both[1] > both[0],
        "expected the both-recovered count to grow with M: {} (M=16) vs {} (M=512)",
        both[0],
        both[1]
    );
    // At M = 512 the model is close to the clean superposition: nearly
    // every trial recovers both codewords at this low rate.
    assert!(both[1] as f64 / trials as f64 > 0.9);
}
