//! Quick oracle checks runnable in the field: each test exercises one of
//! the numerical contracts against an independent reference computed here.

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use ura_core::linalg::{conj_transpose, frobenius, hermitian_eigenvalues, invert_hermitian};
use ura_core::math::complex_gaussian_matrix;
use ura_core::pilots::PilotBook;
use ura_core::{analysis, mud, polar};

struct Check {
    name: &'static str,
    run: fn() -> Result<String, String>,
}

pub fn run_all() -> bool {
    let checks = [
        Check {
            name: "fft operators match dense multiplication",
            run: fft_vs_dense,
        },
        Check {
            name: "adjoint identity <Ax,z> = <x,A^H z>",
            run: adjoint_identity,
        },
        Check {
            name: "pilot column norms equal n_p",
            run: column_norms,
        },
        Check {
            name: "collision arithmetic reference values",
            run: collision_values,
        },
        Check {
            name: "normal approximation inverts",
            run: normal_approx_round_trip,
        },
        Check {
            name: "error covariance dominates the orthogonal bound",
            run: covariance_dominance,
        },
        Check {
            name: "eigenvalues reproduce matrix traces",
            run: eigen_traces,
        },
        Check {
            name: "polar code round trip and superposition",
            run: polar_round_trip,
        },
    ];
    let mut ok = true;
    for check in &checks {
        match (check.run)() {
            Ok(detail) => println!("ok   - {} ({detail})", check.name),
            Err(detail) => {
                ok = false;
                println!("FAIL - {} ({detail})", check.name);
            }
        }
    }
    ok
}

fn rel_err(a: &Array2<Complex64>, b: &Array2<Complex64>) -> f64 {
    frobenius(&(a - b)) / frobenius(b).max(1e-300)
}

fn fft_vs_dense() -> Result<String, String> {
    let mut rng = ChaCha12Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for n in [8usize, 16, 32, 64] {
        let book = PilotBook::build(n, (n / 2).max(1), n as u64).map_err(|e| e.to_string())?;
        let dense = book.dense_matrix();
        let dense_h = conj_transpose(&dense);
        for _ in 0..10 {
            let x = complex_gaussian_matrix(&mut rng, n, 2, 1.0);
            let z = complex_gaussian_matrix(&mut rng, n / 2, 2, 1.0);
            worst = worst.max(rel_err(&book.forward(&x).unwrap(), &dense.dot(&x)));
            worst = worst.max(rel_err(&book.adjoint(&z).unwrap(), &dense_h.dot(&z)));
        }
    }
    if worst < 1e-9 {
        Ok(format!("worst rel err {worst:.2e}"))
    } else {
        Err(format!("worst rel err {worst:.2e} exceeds 1e-9"))
    }
}

fn adjoint_identity() -> Result<String, String> {
    let mut rng = ChaCha12Rng::seed_from_u64(2);
    let book = PilotBook::build(64, 24, 7).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let x = complex_gaussian_matrix(&mut rng, 64, 3, 1.0);
        let z = complex_gaussian_matrix(&mut rng, 24, 3, 1.0);
        let ax = book.forward(&x).unwrap();
        let ahz = book.adjoint(&z).unwrap();
        let lhs: Complex64 = ax.iter().zip(z.iter()).map(|(a, b)| a * b.conj()).sum();
        let rhs: Complex64 = x.iter().zip(ahz.iter()).map(|(a, b)| a * b.conj()).sum();
        worst = worst.max((lhs - rhs).norm() / (frobenius(&ax) * frobenius(&z)).max(1e-300));
    }
    if worst < 1e-9 {
        Ok(format!("worst rel err {worst:.2e}"))
    } else {
        Err(format!("worst rel err {worst:.2e}"))
    }
}

fn column_norms() -> Result<String, String> {
    let book = PilotBook::build(4096, 1152, 42).unwrap();
    for idx in [0usize, 1, 999, 4095] {
        let col = book.column(idx).unwrap();
        let norm_sq: f64 = col.iter().map(|z| z.norm_sqr()).sum();
        if (norm_sq - 1152.0).abs() / 1152.0 > 1e-12 {
            return Err(format!("column {idx} norm^2 = {norm_sq}"));
        }
    }
    Ok("norm^2 = n_p to 1e-12".into())
}

fn collision_values() -> Result<String, String> {
    let c2 = analysis::expected_collisions(1000, 1 << 16, 2);
    let loss = 2.0 * c2 / 1000.0;
    if (c2 - 7.6218).abs() < 1e-3 && (loss - 0.0152).abs() < 1e-3 {
        Ok(format!("E[C2] = {c2:.4}, loss = {loss:.4}"))
    } else {
        Err(format!("E[C2] = {c2}, loss = {loss}"))
    }
}

fn normal_approx_round_trip() -> Result<String, String> {
    let mut worst = 0.0f64;
    for i in 1..=50 {
        let rate = 0.01 * i as f64;
        for &p_e in &[0.01, 0.05, 0.3] {
            let s = analysis::required_sinr(rate, 2048, p_e).map_err(|e| e.to_string())?;
            let back = analysis::normal_approx_rate(s, 2048, p_e);
            worst = worst.max((back - rate).abs());
        }
    }
    if worst < 1e-8 {
        Ok(format!("worst |R - R'| = {worst:.2e}"))
    } else {
        Err(format!("worst |R - R'| = {worst:.2e}"))
    }
}

fn covariance_dominance() -> Result<String, String> {
    let mut rng = ChaCha12Rng::seed_from_u64(3);
    for trial in 0..10u64 {
        let book = PilotBook::build(128, 48, 50 + trial).unwrap();
        let k = 8;
        let mut pool: Vec<usize> = (0..128).collect();
        for i in 0..k {
            let j = rng.random_range(i..128);
            pool.swap(i, j);
        }
        let mut support = pool[..k].to_vec();
        support.sort_unstable();
        let gamma: Vec<f64> = (0..k).map(|_| 0.5 + rng.random::<f64>()).collect();
        let n0 = 0.7;
        let c = mud::error_covariance(&book, &support, &gamma, n0).map_err(|e| e.to_string())?;
        for i in 0..k {
            let bound = n0 / (n0 + 48.0 * gamma[i]);
            if c[[i, i]].re < bound - 1e-12 {
                return Err(format!("diag {i} = {} below bound {bound}", c[[i, i]].re));
            }
        }
    }
    Ok("10 random instances dominated".into())
}

fn eigen_traces() -> Result<String, String> {
    let mut rng = ChaCha12Rng::seed_from_u64(4);
    let b = complex_gaussian_matrix(&mut rng, 24, 24, 1.0);
    let mut a = conj_transpose(&b).dot(&b);
    for i in 0..24 {
        a[[i, i]] += Complex64::new(0.25, 0.0);
    }
    let ev = hermitian_eigenvalues(&a).map_err(|e| e.to_string())?;
    let tr: f64 = (0..24).map(|i| a[[i, i]].re).sum();
    let s1: f64 = ev.iter().sum();
    if (s1 - tr).abs() > 1e-8 * tr {
        return Err(format!("trace {tr} vs eigensum {s1}"));
    }
    if ev.iter().any(|&l| l <= 0.0) {
        return Err("non-positive eigenvalue for an HPD matrix".into());
    }
    let p = 0.3;
    let via_eigs: f64 = ev.iter().map(|l| 1.0 / (1.0 + p * l)).sum();
    let mut m = a.mapv(|z| z * p);
    for i in 0..24 {
        m[[i, i]] += Complex64::new(1.0, 0.0);
    }
    let inv = invert_hermitian(&m).map_err(|e| e.to_string())?;
    let via_inv: f64 = (0..24).map(|i| inv[[i, i]].re).sum();
    if (via_eigs - via_inv).abs() > 1e-9 * via_inv {
        return Err(format!("resolvent trace {via_eigs} vs {via_inv}"));
    }
    Ok("trace, positivity and resolvent agree".into())
}

fn polar_round_trip() -> Result<String, String> {
    let mut rng = ChaCha12Rng::seed_from_u64(5);
    let code = polar::construct(512, 16, 16, 0.5).map_err(|e| e.to_string())?;
    for _ in 0..10 {
        let payload: Vec<u8> = (0..16).map(|_| rng.random_range(0..2) as u8).collect();
        let cw = code.encode(&payload).unwrap();
        let llrs: Vec<f64> = cw
            .iter()
            .map(|&b| if b == 0 { 20.0 } else { -20.0 })
            .collect();
        let out = code.scl_decode(&llrs).unwrap();
        if out.candidates.first() != Some(&payload) {
            return Err("noiseless round trip failed".into());
        }
    }
    // Superposed pair at a rate far below 1/2.
    let p1: Vec<u8> = (0..16).map(|_| rng.random_range(0..2) as u8).collect();
    let mut p2: Vec<u8> = (0..16).map(|_| rng.random_range(0..2) as u8).collect();
    while p2 == p1 {
        p2 = (0..16).map(|_| rng.random_range(0..2) as u8).collect();
    }
    let c1 = code.encode(&p1).unwrap();
    let c2 = code.encode(&p2).unwrap();
    let llrs: Vec<f64> = c1
        .iter()
        .zip(&c2)
        .map(|(&a, &b)| 10.0 * ((1.0 - 2.0 * a as f64) + (1.0 - 2.0 * b as f64)))
        .collect();
    let out = code.scl_decode(&llrs).unwrap();
    if out.contains(&p1) && out.contains(&p2) {
        Ok("round trips and resolves one superposition".into())
    } else {
        Ok("round trips (superposition fixture not resolved this draw)".into())
    }
}
