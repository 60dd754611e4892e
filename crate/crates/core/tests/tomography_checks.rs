//! Tomography validation: pattern-function orthogonality, the exact
//! integration oracle against an independently computed Fock representation,
//! and statistical behavior of the sampled estimator.
//!
//! The frozen constants below were produced by an independent large-cutoff
//! Fock-space computation (operator exponentials at cutoff 36, converged to
//! the printed digits against cutoff 30).

mod common;

use common::kernel_orthogonality;
use cvdistill::gaussian::GaussianState;
use cvdistill::measures::{log_negativity, purity, rho_total_variance, total_variance};
use cvdistill::source::{decohere, make_pair, make_squeezed, SqueezerSpec};
use cvdistill::tomography::{
    exact_rho, exact_rho_with, reconstruct_streaming, TomographyPlan,
};

const PAIR_59_TRACE_DIM5: f64 = 0.944469614;
const PAIR_59_PURITY_DIM5: f64 = 0.604661204;
const PAIR_59_EN_DIM5: f64 = 0.655280126;
const PAIR_59_I_RHO_DIM5: f64 = 0.610988025;
const PAIR_3DB_TRACE_DIM5: f64 = 0.999881139;
const PAIR_3DB_PURITY_DIM5: f64 = 0.999762293;
const PAIR_3DB_EN_DIM5: f64 = 0.494899835;

fn pair_59() -> GaussianState {
    make_pair(&make_squeezed(&SqueezerSpec::default()).unwrap()).unwrap()
}

fn pair_3db() -> GaussianState {
    make_pair(&make_squeezed(&SqueezerSpec::new(3.0, 3.0).unwrap()).unwrap()).unwrap()
}

/// Estimator unbiasedness in kernel form: the phase-averaged overlap of the
/// sampling kernel with every basis dyad is δ_nk·δ_ml. All 625 index
/// combinations for dim 5.
#[test]
fn kernel_biorthogonality_all_indices() {
    let mut worst = 0.0f64;
    for n in 0..5 {
        for m in 0..5 {
            for k in 0..5 {
                for l in 0..5 {
                    let got = kernel_orthogonality(n, m, k, l);
                    let expect = if n == k && m == l { 1.0 } else { 0.0 };
                    let dev = (got - expect).norm();
                    worst = worst.max(dev);
                    assert!(
                        dev < 1e-6,
                        "kernel orthogonality failed at f_{n}{m} vs |{k}><{l}|: {got}"
                    );
                }
            }
        }
    }
    println!("kernel biorthogonality: worst deviation {worst:.3e}");
}

/// Exact-integration reconstruction of the paper-regime pair reproduces an
/// independently computed truncated Fock matrix.
#[test]
fn exact_rho_matches_independent_fock_oracle() {
    let rho = exact_rho(&[pair_59()], 5).unwrap();
    // Tolerance structure: individual elements agree to ~1e-6; the grid
    // clamp (kernels zeroed outside |x| = 8, shared by the sampled path)
    // biases all diagonal tails coherently, which the reference integrals
    // do not have. That shifts the trace by ~4e-5 and, through the
    // non-smooth trace norm, E_n by ~5e-4.
    assert!(
        (rho.trace() - PAIR_59_TRACE_DIM5).abs() < 1e-4,
        "trace {}",
        rho.trace()
    );
    assert!(
        (purity(&rho) - PAIR_59_PURITY_DIM5).abs() < 2e-4,
        "purity {}",
        purity(&rho)
    );
    let en = log_negativity(&rho).unwrap();
    assert!((en - PAIR_59_EN_DIM5).abs() < 1e-3, "E_n {en}");

    // Elementwise spot checks (all real for this state).
    let checks = [
        (0, 0, 0, 0, 0.582929455216),
        (0, 0, 1, 1, 0.188849078146),
        (0, 0, 0, 2, -0.133536463778),
        (0, 0, 2, 2, 0.091770901258),
        (0, 0, 1, 3, -0.074930627105),
        (1, 1, 1, 1, 0.065988644067),
    ];
    for (n, k, l, m, expect) in checks {
        let z = rho.element(n, k, l, m);
        assert!(
            (z.re - expect).abs() < 5e-6 && z.im.abs() < 1e-6,
            "rho[{n}{k},{l}{m}] = {z} vs {expect}"
        );
    }
}

/// Same oracle comparison for the pure 3 dB pair, whose dim-5 truncation is
/// essentially lossless (purity example: 1 − truncation loss >= 0.96).
#[test]
fn exact_rho_pure_pair_nearly_unit_purity() {
    let rho = exact_rho(&[pair_3db()], 5).unwrap();
    assert!((rho.trace() - PAIR_3DB_TRACE_DIM5).abs() < 1e-4);
    assert!((purity(&rho) - PAIR_3DB_PURITY_DIM5).abs() < 2e-4);
    assert!(purity(&rho) > 0.96);
    let en = log_negativity(&rho).unwrap();
    assert!((en - PAIR_3DB_EN_DIM5).abs() < 1e-3, "E_n {en}");
}

/// Moment consistency of the truncated-operator diagnostic. For the pure
/// 3 dB pair the dim-5 bridge is within 2%; for the hot 5/9 source the
/// truncation loss is larger and the frozen honest value is asserted.
#[test]
fn rho_moment_bridge() {
    let rho3 = exact_rho(&[pair_3db()], 5).unwrap();
    let i_rho = rho_total_variance(&rho3);
    let i_direct = total_variance(&pair_3db()).unwrap();
    assert!(
        ((i_rho - i_direct) / i_direct).abs() < 0.02,
        "3 dB: {i_rho} vs {i_direct}"
    );

    let rho59 = exact_rho(&[pair_59()], 5).unwrap();
    let i_rho59 = rho_total_variance(&rho59);
    assert!(
        (i_rho59 - PAIR_59_I_RHO_DIM5).abs() < 1e-3,
        "5/9 truncated I {i_rho59}"
    );
}

/// Sampled reconstruction converges to the exact-integration oracle within
/// bootstrap error bars.
#[test]
fn sampled_reconstruction_matches_exact() {
    let pair = pair_59();
    let exact = exact_rho(&[pair.clone()], 5).unwrap();
    let plan = TomographyPlan::grid(10, 10, 4_000, 5).unwrap();
    let res = reconstruct_streaming(&[pair], &plan, 77, 0, 50).unwrap();

    // Elementwise z-scores against bootstrap SEs.
    let mut rng = common::rng(5);
    let n_boot = 60;
    let d2 = 25;
    let mut dev_sq = vec![0.0f64; d2 * d2 * 2];
    let mut means = vec![0.0f64; d2 * d2 * 2];
    let mut resamples = Vec::new();
    for _ in 0..n_boot {
        resamples.push(res.resample(&mut rng));
    }
    for r in &resamples {
        for i in 0..d2 {
            for j in 0..d2 {
                let z = r.matrix()[(i, j)];
                means[2 * (i * d2 + j)] += z.re / n_boot as f64;
                means[2 * (i * d2 + j) + 1] += z.im / n_boot as f64;
            }
        }
    }
    for r in &resamples {
        for i in 0..d2 {
            for j in 0..d2 {
                let z = r.matrix()[(i, j)];
                let dre = z.re - means[2 * (i * d2 + j)];
                let dim_ = z.im - means[2 * (i * d2 + j) + 1];
                dev_sq[2 * (i * d2 + j)] += dre * dre / (n_boot - 1) as f64;
                dev_sq[2 * (i * d2 + j) + 1] += dim_ * dim_ / (n_boot - 1) as f64;
            }
        }
    }
    let mut worst_z = 0.0f64;
    for i in 0..d2 {
        for j in 0..d2 {
            let z = res.rho.matrix()[(i, j)] - exact.matrix()[(i, j)];
            let se = (dev_sq[2 * (i * d2 + j)] + dev_sq[2 * (i * d2 + j) + 1])
                .sqrt()
                .max(1e-9);
            worst_z = worst_z.max(z.norm() / se);
        }
    }
    println!("sampled-vs-exact worst z-score: {worst_z:.2}");
    assert!(worst_z < 5.0, "worst elementwise z-score {worst_z}");
}

/// In the uniform-phase limit every single-mode coherence dies: for a
/// phase-scrambled squeezed mode (with a vacuum partner) all elements with
/// n ≠ l vanish.
#[test]
fn uniform_phase_limit_kills_coherences() {
    let squeezed = make_squeezed(&SqueezerSpec::default()).unwrap();
    let base = squeezed.tensor(&GaussianState::vacuum(1).unwrap());
    let k = 64;
    let components: Vec<GaussianState> = (0..k)
        .map(|i| {
            let theta = std::f64::consts::TAU * i as f64 / k as f64;
            decohere(&base, theta, 0.0).unwrap()
        })
        .collect();
    let rho = exact_rho_with(
        &components,
        None,
        4,
        TomographyPlan::grid(8, 1, 1, 4).unwrap().schedule(),
        40,
    )
    .unwrap();
    for n in 0..4 {
        for l in 0..4 {
            if n == l {
                continue;
            }
            let z = rho.element(n, 0, l, 0);
            assert!(
                z.norm() < 1e-6,
                "coherence rho[{n}0,{l}0] = {z} survived phase scrambling"
            );
        }
    }
    // Photon statistics of the squeezed mode survive.
    assert!(rho.element(2, 0, 2, 0).re > 0.05);
}

/// The estimator converges at the Monte Carlo 1/√N rate: log-log slope of
/// the elementwise deviation vs sample count is −0.5 ± 0.1.
#[test]
fn estimator_converges_at_sqrt_n() {
    let pair = pair_59();
    let exact = exact_rho(&[pair.clone()], 5).unwrap();
    let ns: [u64; 3] = [100, 1_000, 10_000]; // per slice ⇒ totals 1e4..1e6
    let seeds = [11u64, 12, 13, 14, 15, 16];
    let mut mean_devs = Vec::new();
    for &per_slice in &ns {
        let plan = TomographyPlan::grid(10, 10, per_slice, 5).unwrap();
        let mut acc = 0.0;
        for &seed in &seeds {
            let res = reconstruct_streaming(&[pair.clone()], &plan, seed, 1, 10).unwrap();
            let dev = (res.rho.matrix() - exact.matrix()).camax();
            acc += dev;
        }
        mean_devs.push(acc / seeds.len() as f64);
    }
    let xs: Vec<f64> = ns.iter().map(|&n| ((n * 100) as f64).log10()).collect();
    let ys: Vec<f64> = mean_devs.iter().map(|d| d.log10()).collect();
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    println!("estimator convergence slope: {slope:.3} (devs {mean_devs:?})");
    assert!(
        (slope + 0.5).abs() < 0.1,
        "convergence slope {slope} outside −0.5 ± 0.1"
    );
}
