#![allow(dead_code)]

//! Shared helpers for the integration suites: random physical states,
//! Gauss–Hermite rules, and the pattern-function orthogonality integrals.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cvdistill::gaussian::GaussianState;
use cvdistill::tomography::pattern::{eval_pattern_direct, oscillator_eigenfunctions};
use cvdistill::tomography::quad::gauss_legendre_panels;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random physical Gaussian state: per-mode squeezed-thermal diagonals
/// (symplectic eigenvalues >= 1/4), scrambled by random rotations and beam
/// splitters, with a random displacement.
pub fn random_physical_state(n_modes: usize, rng: &mut ChaCha8Rng) -> GaussianState {
    let mut diag = Vec::with_capacity(2 * n_modes);
    for _ in 0..n_modes {
        let nu: f64 = rng.random_range(0.25..0.45);
        let s: f64 = rng.random_range(0.6..1.6);
        diag.push(nu * s);
        diag.push(nu / s);
    }
    let cov = DMatrix::from_diagonal(&DVector::from_vec(diag));
    let mut state = GaussianState::new(DVector::zeros(2 * n_modes), cov).unwrap();
    for mode in 0..n_modes {
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        state = state.phase_shift(mode, theta).unwrap();
    }
    for _ in 0..(2 * n_modes) {
        let i = rng.random_range(0..n_modes);
        let mut j = rng.random_range(0..n_modes);
        if n_modes == 1 {
            break;
        }
        while j == i {
            j = rng.random_range(0..n_modes);
        }
        let t = rng.random_range(0.2..0.8);
        state = state.beamsplitter(i, j, t).unwrap();
    }
    let mean = DVector::from_fn(2 * n_modes, |_, _| rng.random_range(-1.0..1.0));
    GaussianState::new(mean, state.cov().clone()).unwrap()
}

/// Nodes and weights of the n-point Gauss–Hermite rule (weight e^{−t²}),
/// via the Golub–Welsch eigenvalue method.
pub fn gauss_hermite(n: usize) -> Vec<(f64, f64)> {
    let mut j = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64 / 2.0).sqrt();
        j[(k - 1, k)] = b;
        j[(k, k - 1)] = b;
    }
    let eig = nalgebra::linalg::SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let w = std::f64::consts::PI.sqrt() * eig.eigenvectors[(0, k)].powi(2);
            (eig.eigenvalues[k], w)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs
}

/// ∫ f_nm(x)·ψ_k(x)·ψ_l(x) dx over the pattern support, with the exact
/// (untabulated) pattern construction.
pub fn pattern_cross_integral(n: usize, m: usize, k: usize, l: usize) -> f64 {
    let nodes = gauss_legendre_panels(-8.0, 8.0, 64);
    nodes
        .iter()
        .map(|&(x, w)| {
            let psi = oscillator_eigenfunctions(x, k.max(l));
            w * eval_pattern_direct(n, m, x) * psi[k] * psi[l]
        })
        .sum()
}

/// The full sampling-kernel orthogonality integral including the uniform
/// phase average: (1/π)∫dθ ∫dx f_nm(x) e^{i(n−m)θ} ψ_k ψ_l e^{−i(k−l)θ}.
/// Unbiasedness of the estimator is equivalent to this equaling δ_nk·δ_ml.
pub fn kernel_orthogonality(n: usize, m: usize, k: usize, l: usize) -> Complex64 {
    let x_int = pattern_cross_integral(n, m, k, l);
    let delta = (n as i32 - m as i32) - (k as i32 - l as i32);
    let theta_factor = if delta == 0 {
        Complex64::new(1.0, 0.0)
    } else if delta % 2 == 0 {
        Complex64::new(0.0, 0.0)
    } else {
        Complex64::new(0.0, 2.0 / (std::f64::consts::PI * delta as f64))
    };
    theta_factor * x_int
}

/// Standard error of a proportion estimate.
pub fn prob_se(p: f64, n: f64) -> f64 {
    (p * (1.0 - p) / n).sqrt()
}
