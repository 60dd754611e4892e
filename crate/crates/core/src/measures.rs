//! Figures of merit for the distilled states: logarithmic negativity,
//! purity, and the total variance I = Var(X_A − X_B) + Var(P_A + P_B),
//! plus the Gaussian-analytic negativity used as a test oracle.

use nalgebra::linalg::SymmetricEigen;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ensemble::GaussianEnsemble;
use crate::error::{Error, Result};
use crate::gaussian::GaussianState;
use crate::rng::{substream, PURPOSE_BOOTSTRAP, PURPOSE_MOMENTS};
use crate::tomography::{FockDM, TomographyResult};

/// Coefficient vector selecting X_A − X_B in the interleaved ordering.
pub const COEFF_X_DIFF: [f64; 4] = [1.0, 0.0, -1.0, 0.0];
/// Coefficient vector selecting P_A + P_B.
pub const COEFF_P_SUM: [f64; 4] = [0.0, 1.0, 0.0, 1.0];

const HERMITICITY_TOL: f64 = 1e-8;

/// Eigenvalues of a Hermitian Fock matrix.
fn hermitian_eigenvalues(rho: &FockDM) -> Result<Vec<f64>> {
    let defect = rho.hermiticity_defect();
    if defect > HERMITICITY_TOL {
        return Err(Error::invalid(format!(
            "matrix is not Hermitian (defect {defect:.3e})"
        )));
    }
    let mut m = rho.matrix().clone();
    // Enforce exact Hermiticity for the eigensolver.
    for i in 0..m.nrows() {
        m[(i, i)] = Complex64::new(m[(i, i)].re, 0.0);
        for j in (i + 1)..m.ncols() {
            let v = 0.5 * (m[(i, j)] + m[(j, i)].conj());
            m[(i, j)] = v;
            m[(j, i)] = v.conj();
        }
    }
    let eig = SymmetricEigen::new(m);
    Ok(eig.eigenvalues.iter().copied().collect())
}

/// Logarithmic negativity E_n = log2 ‖ρ^{T_B}‖₁, reported raw (no clamping
/// and no trace renormalization).
pub fn log_negativity(rho: &FockDM) -> Result<f64> {
    let pt = rho.partial_transpose_b();
    let eigs = hermitian_eigenvalues(&pt)?;
    let trace_norm: f64 = eigs.iter().map(|l| l.abs()).sum();
    Ok(trace_norm.log2())
}

/// Variant that renormalizes ρ by its trace first; exposed for sensitivity
/// analysis against truncation/statistical trace loss.
pub fn log_negativity_trace_normalized(rho: &FockDM) -> Result<f64> {
    let tr = rho.trace();
    if tr <= 0.0 {
        return Err(Error::invalid(format!("non-positive trace {tr}")));
    }
    Ok(log_negativity(rho)? - tr.log2())
}

/// Purity Tr(ρ²) = Σ|ρ_{nk,lm}|² for Hermitian ρ.
pub fn purity(rho: &FockDM) -> f64 {
    rho.matrix().iter().map(|z| z.norm_sqr()).sum()
}

/// Total variance of a single two-mode Gaussian state.
pub fn total_variance(state: &GaussianState) -> Result<f64> {
    if state.n_modes() != 2 {
        return Err(Error::invalid("total variance expects a two-mode state"));
    }
    let (_, vx) = state.quadrature_stats(&COEFF_X_DIFF)?;
    let (_, vp) = state.quadrature_stats(&COEFF_P_SUM)?;
    Ok(vx + vp)
}

/// Total variance of a two-mode mixture, via the law of total variance.
pub fn total_variance_ensemble(ensemble: &GaussianEnsemble) -> Result<f64> {
    if ensemble.n_modes() != 2 {
        return Err(Error::invalid("total variance expects two-mode components"));
    }
    let (_, vx) = ensemble.quadrature_stats(&COEFF_X_DIFF)?;
    let (_, vp) = ensemble.quadrature_stats(&COEFF_P_SUM)?;
    Ok(vx + vp)
}

/// Gaussian-state logarithmic negativity from the covariance matrix:
/// E_n = max(0, −log2(4·ν̃₋)) with ν̃₋ the smaller symplectic eigenvalue of
/// the partially transposed covariance, computed via symplectic invariants.
pub fn gaussian_log_negativity(state: &GaussianState) -> Result<f64> {
    if state.n_modes() != 2 {
        return Err(Error::invalid("gaussian_log_negativity expects two modes"));
    }
    state
        .check_physical(1e-8)
        .map_err(|e| Error::invalid(format!("unphysical covariance: {e}")))?;
    let s = state.cov();
    let det2 = |a: f64, b: f64, c: f64, d: f64| a * d - b * c;
    let det_a = det2(s[(0, 0)], s[(0, 1)], s[(1, 0)], s[(1, 1)]);
    let det_b = det2(s[(2, 2)], s[(2, 3)], s[(3, 2)], s[(3, 3)]);
    let det_c = det2(s[(0, 2)], s[(0, 3)], s[(1, 2)], s[(1, 3)]);
    let det_s = state.det_cov();
    let delta_pt = det_a + det_b - 2.0 * det_c;
    let disc = (delta_pt * delta_pt - 4.0 * det_s).max(0.0);
    let nu_minus_sq = 0.5 * (delta_pt - disc.sqrt());
    if nu_minus_sq <= 0.0 {
        // Partial transpose drove the eigenvalue to zero within rounding:
        // maximal detectable negativity for this matrix; treat as invalid
        // because no physical covariance reaches it.
        return Err(Error::Numerical(format!(
            "degenerate PT symplectic eigenvalue ({nu_minus_sq:.3e})"
        )));
    }
    let nu_minus = nu_minus_sq.sqrt();
    Ok((-(4.0 * nu_minus).log2()).max(0.0))
}

/// Truncated single-mode quadrature operators in paper units:
/// x = (a + a†)/2, p = (a − a†)/(2i).
fn quadrature_ops(dim: usize) -> (DMatrix<Complex64>, DMatrix<Complex64>) {
    let mut x = DMatrix::zeros(dim, dim);
    let mut p = DMatrix::zeros(dim, dim);
    for n in 0..dim - 1 {
        let amp = ((n + 1) as f64).sqrt();
        // ⟨n|a|n+1⟩ = √(n+1)
        x[(n, n + 1)] += Complex64::new(0.5 * amp, 0.0);
        x[(n + 1, n)] += Complex64::new(0.5 * amp, 0.0);
        p[(n, n + 1)] += Complex64::new(0.0, 0.5 * amp);
        p[(n + 1, n)] += Complex64::new(0.0, -0.5 * amp);
    }
    (x, p)
}

fn kron(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    a.kronecker(b)
}

/// Total variance computed from the reconstructed ρ with quadrature
/// operators truncated to `dim` — a diagnostic, not the reported I.
pub fn rho_total_variance(rho: &FockDM) -> f64 {
    let dim = rho.dim();
    let (x, p) = quadrature_ops(dim);
    let eye = DMatrix::<Complex64>::identity(dim, dim);
    let x_diff = kron(&x, &eye) - kron(&eye, &x);
    let p_sum = kron(&p, &eye) + kron(&eye, &p);
    let var = |op: &DMatrix<Complex64>| -> f64 {
        let first = (rho.matrix() * op).trace().re;
        let second = (rho.matrix() * (op * op)).trace().re;
        second - first * first
    };
    var(&x_diff) + var(&p_sum)
}

/// The three figures of merit with their statistical errors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasureReport {
    pub log_negativity: f64,
    pub log_negativity_err: f64,
    pub purity: f64,
    pub purity_err: f64,
    pub total_variance: f64,
    pub total_variance_err: f64,
}

pub const DEFAULT_BOOTSTRAP_RESAMPLES: usize = 50;

/// Per-block moment partials for the fast total-variance bootstrap.
struct MomentBlocks {
    /// (count, Σmean, Σ(var + mean²)) per block, for each coefficient vector.
    x: Vec<(f64, f64, f64)>,
    p: Vec<(f64, f64, f64)>,
}

impl MomentBlocks {
    fn build(components: &[GaussianState], n_blocks: usize) -> Result<Self> {
        let mut x = vec![(0.0, 0.0, 0.0); n_blocks];
        let mut p = vec![(0.0, 0.0, 0.0); n_blocks];
        for (i, comp) in components.iter().enumerate() {
            let b = i * n_blocks / components.len();
            let (mx, vx) = comp.quadrature_stats(&COEFF_X_DIFF)?;
            let (mp, vp) = comp.quadrature_stats(&COEFF_P_SUM)?;
            x[b].0 += 1.0;
            x[b].1 += mx;
            x[b].2 += vx + mx * mx;
            p[b].0 += 1.0;
            p[b].1 += mp;
            p[b].2 += vp + mp * mp;
        }
        Ok(MomentBlocks { x, p })
    }

    fn total_variance(blocks_x: &[(f64, f64, f64)], blocks_p: &[(f64, f64, f64)]) -> f64 {
        let reduce = |blocks: &[(f64, f64, f64)]| -> f64 {
            let (mut n, mut sm, mut s2) = (0.0, 0.0, 0.0);
            for &(c, m, v) in blocks {
                n += c;
                sm += m;
                s2 += v;
            }
            let mean = sm / n;
            s2 / n - mean * mean
        };
        reduce(blocks_x) + reduce(blocks_p)
    }

    fn bootstrap<R: Rng + ?Sized>(&self, n_resamples: usize, rng: &mut R) -> (f64, f64) {
        let b = self.x.len();
        let point = Self::total_variance(&self.x, &self.p);
        let mut resamples = Vec::with_capacity(n_resamples);
        for _ in 0..n_resamples {
            let mut rx = Vec::with_capacity(b);
            let mut rp = Vec::with_capacity(b);
            for _ in 0..b {
                let pick = rng.random_range(0..b);
                rx.push(self.x[pick]);
                rp.push(self.p[pick]);
            }
            resamples.push(Self::total_variance(&rx, &rp));
        }
        (point, std_dev(&resamples))
    }
}

fn std_dev(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Exact-moment total variance of an equal-weight mixture with a block
/// bootstrap error over the component (trial) blocks.
pub fn total_variance_with_err(
    components: &[GaussianState],
    seed: u64,
    context: u32,
    n_blocks: usize,
    n_resamples: usize,
) -> Result<(f64, f64)> {
    if components.is_empty() {
        return Err(Error::invalid("no components"));
    }
    let blocks = MomentBlocks::build(components, n_blocks.min(components.len()))?;
    let mut rng = substream(seed, PURPOSE_BOOTSTRAP, context, 0);
    Ok(blocks.bootstrap(n_resamples, &mut rng))
}

/// Bootstrap standard error of a scalar functional of the reconstructed ρ.
pub fn bootstrap_stderr<F>(
    result: &TomographyResult,
    n_resamples: usize,
    seed: u64,
    context: u32,
    f: F,
) -> Result<f64>
where
    F: Fn(&FockDM) -> Result<f64>,
{
    let mut rng = substream(seed, PURPOSE_BOOTSTRAP, context, 1);
    let mut values = Vec::with_capacity(n_resamples);
    for _ in 0..n_resamples {
        values.push(f(&result.resample(&mut rng))?);
    }
    Ok(std_dev(&values))
}

/// Sampled-moments estimate of the total variance: draws `n_samples`
/// homodyne values of each quadrature combination and adds the two sample
/// variances. Returns (estimate, block stderr).
pub fn total_variance_sampled(
    ensemble: &GaussianEnsemble,
    n_samples: u64,
    seed: u64,
    context: u32,
) -> Result<(f64, f64)> {
    if ensemble.n_modes() != 2 {
        return Err(Error::invalid("total variance expects two-mode components"));
    }
    let n_blocks = 50usize;
    let per_block = (n_samples / n_blocks as u64).max(1);
    let mut block_i = Vec::with_capacity(n_blocks);
    // Per-component marginals of the two combinations.
    let mut comb = Vec::with_capacity(ensemble.len());
    for c in ensemble.components() {
        let (mx, vx) = c.quadrature_stats(&COEFF_X_DIFF)?;
        let (mp, vp) = c.quadrature_stats(&COEFF_P_SUM)?;
        comb.push((mx, vx.sqrt(), mp, vp.sqrt()));
    }
    let weights = ensemble.weights();
    let cumulative: Vec<f64> = weights
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    for b in 0..n_blocks {
        let mut rng = substream(seed, PURPOSE_MOMENTS, context, b as u32);
        let mut sx = (0.0, 0.0);
        let mut sp = (0.0, 0.0);
        for _ in 0..per_block {
            let u: f64 = rng.random();
            let idx = cumulative.partition_point(|&c| c < u).min(comb.len() - 1);
            let (mx, sdx, mp, sdp) = comb[idx];
            let zx: f64 = rng.sample(StandardNormal);
            let zp: f64 = rng.sample(StandardNormal);
            let x = mx + sdx * zx;
            let p = mp + sdp * zp;
            sx.0 += x;
            sx.1 += x * x;
            sp.0 += p;
            sp.1 += p * p;
        }
        let n = per_block as f64;
        let var = |s: (f64, f64)| s.1 / n - (s.0 / n) * (s.0 / n);
        block_i.push(var(sx) + var(sp));
    }
    let mean = block_i.iter().sum::<f64>() / n_blocks as f64;
    let err = std_dev(&block_i) / (n_blocks as f64).sqrt();
    Ok((mean, err))
}
