//! Two-mode Fock-basis state reconstruction from homodyne data via pattern
//! functions, plus a deterministic exact-integration oracle.
//!
//! Samples enter in this crate's vacuum-variance-1/4 units and are rescaled
//! internally to the standard tomography convention (vacuum variance 1/2)
//! by x_std = √2·x before the pattern functions are applied.

pub mod pattern;
pub mod quad;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::GaussianState;
use crate::rng::{substream, PURPOSE_TOMO};
use pattern::{pattern_table, PatternTable};
use quad::gauss_legendre_panels;

use rand::Rng;
use rand_distr::StandardNormal;

/// Truncated two-mode density matrix ρ_{nk,lm}; row index n·dim + k (mode A
/// index first), column index l·dim + m.
#[derive(Debug, Clone)]
pub struct FockDM {
    dim: usize,
    mat: DMatrix<Complex64>,
}

impl FockDM {
    pub fn zeros(dim: usize) -> Self {
        FockDM {
            dim,
            mat: DMatrix::zeros(dim * dim, dim * dim),
        }
    }

    pub fn from_matrix(dim: usize, mat: DMatrix<Complex64>) -> Result<Self> {
        if mat.nrows() != dim * dim || mat.ncols() != dim * dim {
            return Err(Error::invalid("Fock matrix dimension mismatch"));
        }
        Ok(FockDM { dim, mat })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.mat
    }

    pub fn element(&self, n: usize, k: usize, l: usize, m: usize) -> Complex64 {
        self.mat[(n * self.dim + k, l * self.dim + m)]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim * self.dim).map(|i| self.mat[(i, i)].re).sum()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.mat.nrows() {
            for j in i..self.mat.ncols() {
                let d = (self.mat[(i, j)] - self.mat[(j, i)].conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    pub fn hermitize(&mut self) {
        let d = self.mat.nrows();
        for i in 0..d {
            self.mat[(i, i)] = Complex64::new(self.mat[(i, i)].re, 0.0);
            for j in (i + 1)..d {
                let v = 0.5 * (self.mat[(i, j)] + self.mat[(j, i)].conj());
                self.mat[(i, j)] = v;
                self.mat[(j, i)] = v.conj();
            }
        }
    }

    /// Partial transpose on mode B: ρ^{T_B}_{nk,lm} = ρ_{nm,lk}.
    pub fn partial_transpose_b(&self) -> FockDM {
        let d = self.dim;
        let mut out = FockDM::zeros(d);
        for n in 0..d {
            for k in 0..d {
                for l in 0..d {
                    for m in 0..d {
                        out.mat[(n * d + k, l * d + m)] = self.mat[(n * d + m, l * d + k)];
                    }
                }
            }
        }
        out
    }

    pub fn to_export(&self) -> FockDMExport {
        let d2 = self.dim * self.dim;
        let mut data = Vec::with_capacity(d2 * d2);
        for r in 0..d2 {
            for c in 0..d2 {
                let z = self.mat[(r, c)];
                data.push([z.re, z.im]);
            }
        }
        FockDMExport {
            dim: self.dim,
            data,
        }
    }

    pub fn from_export(e: &FockDMExport) -> Result<Self> {
        let d2 = e.dim * e.dim;
        if e.data.len() != d2 * d2 {
            return Err(Error::invalid("Fock export has wrong element count"));
        }
        let mut mat = DMatrix::zeros(d2, d2);
        for r in 0..d2 {
            for c in 0..d2 {
                let [re, im] = e.data[r * d2 + c];
                mat[(r, c)] = Complex64::new(re, im);
            }
        }
        Ok(FockDM { dim: e.dim, mat })
    }
}

/// JSON-facing form of a `FockDM`: truncation dimension plus the flattened
/// complex array, row-major over (n·dim+k, l·dim+m), elements as
/// [real, imag] pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FockDMExport {
    pub dim: usize,
    pub data: Vec<[f64; 2]>,
}

/// Measurement schedule for two-mode tomography: local-oscillator angle
/// pairs and the number of samples recorded per slice.
#[derive(Debug, Clone)]
pub struct TomographyPlan {
    schedule: Vec<(f64, f64)>,
    pub samples_per_slice: u64,
    pub dim: usize,
}

impl TomographyPlan {
    /// Product grid of `na`×`nb` angle pairs stepped uniformly over [0, π).
    pub fn grid(na: usize, nb: usize, samples_per_slice: u64, dim: usize) -> Result<Self> {
        if na == 0 || nb == 0 || samples_per_slice == 0 {
            return Err(Error::invalid("tomography plan must be non-empty"));
        }
        let mut schedule = Vec::with_capacity(na * nb);
        for i in 0..na {
            for j in 0..nb {
                schedule.push((
                    std::f64::consts::PI * i as f64 / na as f64,
                    std::f64::consts::PI * j as f64 / nb as f64,
                ));
            }
        }
        Ok(TomographyPlan {
            schedule,
            samples_per_slice,
            dim,
        })
    }

    pub fn schedule(&self) -> &[(f64, f64)] {
        &self.schedule
    }

    pub fn n_slices(&self) -> usize {
        self.schedule.len()
    }

    pub fn total_samples(&self) -> u64 {
        self.samples_per_slice * self.schedule.len() as u64
    }

    pub fn with_samples_per_slice(&self, samples_per_slice: u64) -> Self {
        TomographyPlan {
            schedule: self.schedule.clone(),
            samples_per_slice,
            dim: self.dim,
        }
    }
}

impl Default for TomographyPlan {
    /// The reconstruction setting quoted by the experiment: 10² slices of
    /// 3·10⁵ samples each, truncation at photon number 5.
    fn default() -> Self {
        TomographyPlan::grid(10, 10, 300_000, 5).expect("default plan is valid")
    }
}

/// Marginal moments (paper units) of the quadrature pair
/// (x_{θA} on mode A, x_{θB} on mode B) of a two-mode Gaussian component.
fn slice_marginals(state: &GaussianState, theta_a: f64, theta_b: f64) -> (f64, f64, f64, f64, f64) {
    let m = state.mean();
    let s = state.cov();
    let (ca, sa) = (theta_a.cos(), theta_a.sin());
    let (cb, sb) = (theta_b.cos(), theta_b.sin());
    let mu_a = ca * m[0] + sa * m[1];
    let mu_b = cb * m[2] + sb * m[3];
    let v_a = ca * ca * s[(0, 0)] + 2.0 * ca * sa * s[(0, 1)] + sa * sa * s[(1, 1)];
    let v_b = cb * cb * s[(2, 2)] + 2.0 * cb * sb * s[(2, 3)] + sb * sb * s[(3, 3)];
    let c_ab = ca * cb * s[(0, 2)] + ca * sb * s[(0, 3)] + sa * cb * s[(1, 2)] + sa * sb * s[(1, 3)];
    (mu_a, mu_b, v_a, v_b, c_ab)
}

fn check_components(components: &[GaussianState]) -> Result<()> {
    if components.is_empty() {
        return Err(Error::invalid("tomography requires a nonempty distillate"));
    }
    if components.iter().any(|c| c.n_modes() != 2) {
        return Err(Error::invalid("tomography components must be two-mode"));
    }
    Ok(())
}

/// Draws homodyne samples for every slice of the plan: each record is
/// (θ_A, θ_B, x_A, x_B) with quadratures in paper units. Components are
/// picked uniformly per sample (equal rejection-sampling weights).
pub fn acquire(
    components: &[GaussianState],
    plan: &TomographyPlan,
    seed: u64,
    context: u32,
) -> Result<Vec<(f64, f64, f64, f64)>> {
    check_components(components)?;
    let mut out = Vec::with_capacity(plan.total_samples() as usize);
    for (slice_idx, &(ta, tb)) in plan.schedule.iter().enumerate() {
        let mut rng = substream(seed, PURPOSE_TOMO, context, slice_idx as u32);
        for _ in 0..plan.samples_per_slice {
            let comp = &components[rng.random_range(0..components.len())];
            let (mu_a, mu_b, v_a, v_b, c_ab) = slice_marginals(comp, ta, tb);
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            let x_a = mu_a + v_a.sqrt() * z1;
            let cond_var = (v_b - c_ab * c_ab / v_a).max(0.0);
            let x_b = mu_b + (c_ab / v_a) * (x_a - mu_a) + cond_var.sqrt() * z2;
            out.push((ta, tb, x_a, x_b));
        }
    }
    Ok(out)
}

/// Reconstruction output with per-block partial sums retained for block
/// bootstrap error estimation.
#[derive(Debug, Clone)]
pub struct TomographyResult {
    pub rho: FockDM,
    block_sums: Vec<(DMatrix<Complex64>, u64)>,
    pub samples_total: u64,
}

impl TomographyResult {
    pub fn n_blocks(&self) -> usize {
        self.block_sums.len()
    }

    /// Re-aggregates a bootstrap resample: blocks drawn with replacement.
    pub fn resample<R: Rng + ?Sized>(&self, rng: &mut R) -> FockDM {
        let b = self.block_sums.len();
        let mut sum: DMatrix<Complex64> = DMatrix::zeros(
            self.rho.matrix().nrows(),
            self.rho.matrix().ncols(),
        );
        let mut count = 0u64;
        for _ in 0..b {
            let pick = rng.random_range(0..b);
            sum += &self.block_sums[pick].0;
            count += self.block_sums[pick].1;
        }
        let mut rho = FockDM {
            dim: self.rho.dim,
            mat: sum / Complex64::new(count.max(1) as f64, 0.0),
        };
        rho.hermitize();
        rho
    }
}

const SQRT2: f64 = std::f64::consts::SQRT_2;

struct SliceAccumulator<'t> {
    table: &'t PatternTable,
    dim: usize,
    pairs_a: Vec<f64>,
    pairs_b: Vec<f64>,
    fa: Vec<f64>,
    fb: Vec<f64>,
    /// Per-block real outer-product sums: acc[block][(n·dim+l)·dim² + (k·dim+m)].
    acc: Vec<Vec<f64>>,
    counts: Vec<u64>,
}

impl<'t> SliceAccumulator<'t> {
    fn new(table: &'t PatternTable, n_blocks: usize) -> Self {
        let dim = table.dim();
        let d2 = dim * dim;
        let n_pairs = dim * (dim + 1) / 2;
        SliceAccumulator {
            table,
            dim,
            pairs_a: vec![0.0; n_pairs],
            pairs_b: vec![0.0; n_pairs],
            fa: vec![0.0; d2],
            fb: vec![0.0; d2],
            acc: vec![vec![0.0; d2 * d2]; n_blocks],
            counts: vec![0; n_blocks],
        }
    }

    #[inline]
    fn add(&mut self, block: usize, x_a: f64, x_b: f64) {
        let d2 = self.dim * self.dim;
        self.table.eval_all(SQRT2 * x_a, &mut self.pairs_a);
        self.table.eval_all(SQRT2 * x_b, &mut self.pairs_b);
        self.table.expand_symmetric(&self.pairs_a, &mut self.fa);
        self.table.expand_symmetric(&self.pairs_b, &mut self.fb);
        let acc = &mut self.acc[block];
        for ai in 0..d2 {
            let fa = self.fa[ai];
            if fa == 0.0 {
                continue;
            }
            let row = &mut acc[ai * d2..(ai + 1) * d2];
            for (r, &fbv) in row.iter_mut().zip(self.fb.iter()) {
                *r += fa * fbv;
            }
        }
        self.counts[block] += 1;
    }

    /// Applies the slice's phase factors and returns per-block complex sums.
    fn finish(self, theta_a: f64, theta_b: f64) -> Vec<(DMatrix<Complex64>, u64)> {
        let dim = self.dim;
        let d2 = dim * dim;
        // e^{i·d·θ} for d = −(dim−1)..=(dim−1), indexed d + dim − 1.
        let phase = |theta: f64| -> Vec<Complex64> {
            (0..2 * dim - 1)
                .map(|i| {
                    let d = i as f64 - (dim as f64 - 1.0);
                    Complex64::from_polar(1.0, d * theta)
                })
                .collect()
        };
        let ph_a = phase(theta_a);
        let ph_b = phase(theta_b);
        self.acc
            .into_iter()
            .zip(self.counts)
            .map(|(acc, count)| {
                let mut mat = DMatrix::zeros(d2, d2);
                for n in 0..dim {
                    for l in 0..dim {
                        let pa = ph_a[n + dim - 1 - l];
                        let a_idx = n * dim + l;
                        for k in 0..dim {
                            for m in 0..dim {
                                let pb = ph_b[k + dim - 1 - m];
                                mat[(n * dim + k, l * dim + m)] +=
                                    acc[a_idx * d2 + k * dim + m] * pa * pb;
                            }
                        }
                    }
                }
                (mat, count)
            })
            .collect()
    }
}

pub const DEFAULT_BOOTSTRAP_BLOCKS: usize = 50;

/// Fused acquisition + reconstruction: draws the plan's samples slice by
/// slice (identical streams to `acquire`) and averages pattern-function
/// outer products into ρ. Parallel over slices; deterministic for a given
/// (seed, context) regardless of worker count.
pub fn reconstruct_streaming(
    components: &[GaussianState],
    plan: &TomographyPlan,
    seed: u64,
    context: u32,
    n_blocks: usize,
) -> Result<TomographyResult> {
    check_components(components)?;
    if n_blocks == 0 {
        return Err(Error::invalid("need at least one bootstrap block"));
    }
    let table = pattern_table(plan.dim)?;
    let by_component = components.len() >= n_blocks;

    let per_slice: Vec<Vec<(DMatrix<Complex64>, u64)>> = plan
        .schedule
        .par_iter()
        .enumerate()
        .map(|(slice_idx, &(ta, tb))| {
            let mut rng = substream(seed, PURPOSE_TOMO, context, slice_idx as u32);
            let mut acc = SliceAccumulator::new(&table, n_blocks);
            for i in 0..plan.samples_per_slice {
                let pick = rng.random_range(0..components.len());
                let comp = &components[pick];
                let (mu_a, mu_b, v_a, v_b, c_ab) = slice_marginals(comp, ta, tb);
                let z1: f64 = rng.sample(StandardNormal);
                let z2: f64 = rng.sample(StandardNormal);
                let x_a = mu_a + v_a.sqrt() * z1;
                let cond_var = (v_b - c_ab * c_ab / v_a).max(0.0);
                let x_b = mu_b + (c_ab / v_a) * (x_a - mu_a) + cond_var.sqrt() * z2;
                let block = if by_component {
                    pick * n_blocks / components.len()
                } else {
                    (i % n_blocks as u64) as usize
                };
                acc.add(block, x_a, x_b);
            }
            acc.finish(ta, tb)
        })
        .collect();

    let d2 = plan.dim * plan.dim;
    let mut block_sums: Vec<(DMatrix<Complex64>, u64)> =
        (0..n_blocks).map(|_| (DMatrix::zeros(d2, d2), 0)).collect();
    for slice in per_slice {
        for (b, (mat, count)) in slice.into_iter().enumerate() {
            block_sums[b].0 += mat;
            block_sums[b].1 += count;
        }
    }
    let mut total: DMatrix<Complex64> = DMatrix::zeros(d2, d2);
    let mut samples_total = 0u64;
    for (mat, count) in &block_sums {
        total += mat;
        samples_total += count;
    }
    let mut rho = FockDM {
        dim: plan.dim,
        mat: total / Complex64::new(samples_total as f64, 0.0),
    };
    rho.hermitize();
    Ok(TomographyResult {
        rho,
        block_sums,
        samples_total,
    })
}

/// Reconstruction from an explicit sample list:
/// ρ_{nk,lm} = ⟨ f_{nl}(√2·x_A) f_{km}(√2·x_B) e^{i(n−l)θ_A} e^{i(k−m)θ_B} ⟩,
/// Hermitian-symmetrized.
pub fn reconstruct(samples: &[(f64, f64, f64, f64)], dim: usize) -> Result<FockDM> {
    if samples.is_empty() {
        return Err(Error::invalid("reconstruct requires samples"));
    }
    let table = pattern_table(dim)?;
    let d2 = dim * dim;
    let n_pairs = dim * (dim + 1) / 2;
    let mut pa = vec![0.0; n_pairs];
    let mut pb = vec![0.0; n_pairs];
    let mut fa = vec![0.0; d2];
    let mut fb = vec![0.0; d2];
    let mut mat: DMatrix<Complex64> = DMatrix::zeros(d2, d2);
    for &(ta, tb, x_a, x_b) in samples {
        table.eval_all(SQRT2 * x_a, &mut pa);
        table.eval_all(SQRT2 * x_b, &mut pb);
        table.expand_symmetric(&pa, &mut fa);
        table.expand_symmetric(&pb, &mut fb);
        for n in 0..dim {
            for l in 0..dim {
                let pha = Complex64::from_polar(1.0, (n as f64 - l as f64) * ta);
                let fal = fa[n * dim + l];
                if fal == 0.0 {
                    continue;
                }
                for k in 0..dim {
                    for m in 0..dim {
                        let phb = Complex64::from_polar(1.0, (k as f64 - m as f64) * tb);
                        mat[(n * dim + k, l * dim + m)] += fal * fb[k * dim + m] * pha * phb;
                    }
                }
            }
        }
    }
    let mut rho = FockDM {
        dim,
        mat: mat / Complex64::new(samples.len() as f64, 0.0),
    };
    rho.hermitize();
    Ok(rho)
}

/// Default quadrature resolution for `exact_rho`: composite 8-point
/// Gauss–Legendre panels over [−8, 8] in standard units.
pub const EXACT_RHO_PANELS: usize = 40;

/// Deterministic N→∞ limit of the sampled estimator for an equal-weight
/// mixture: integrates the (tabulated, clamped) pattern kernels against each
/// component's exact Gaussian slice marginals over the plan's phase grid.
/// Verifies quadrature convergence by comparing against a half-resolution
/// pass.
pub fn exact_rho(components: &[GaussianState], dim: usize) -> Result<FockDM> {
    let plan = TomographyPlan::grid(10, 10, 1, dim)?;
    let fine = exact_rho_with(components, None, dim, plan.schedule(), EXACT_RHO_PANELS)?;
    let coarse = exact_rho_with(components, None, dim, plan.schedule(), EXACT_RHO_PANELS / 2)?;
    let defect = (fine.matrix() - coarse.matrix()).camax();
    if defect > 1e-6 {
        return Err(Error::Numerical(format!(
            "exact_rho quadrature not converged: refinement shift {defect:.3e} \
             (panels {} vs {})",
            EXACT_RHO_PANELS,
            EXACT_RHO_PANELS / 2
        )));
    }
    Ok(fine)
}

/// Workhorse behind `exact_rho`; weights default to equal.
pub fn exact_rho_with(
    components: &[GaussianState],
    weights: Option<&[f64]>,
    dim: usize,
    schedule: &[(f64, f64)],
    panels: usize,
) -> Result<FockDM> {
    check_components(components)?;
    if schedule.is_empty() || panels == 0 {
        return Err(Error::invalid("exact_rho needs a schedule and panels"));
    }
    if let Some(w) = weights {
        if w.len() != components.len() {
            return Err(Error::invalid("weights length mismatch"));
        }
    }
    let table = pattern_table(dim)?;
    let d2 = dim * dim;
    let nodes = gauss_legendre_panels(-pattern::PATTERN_X_MAX, pattern::PATTERN_X_MAX, panels);
    let nn = nodes.len();

    // Pattern matrices at every node, dense symmetric layout.
    let n_pairs = dim * (dim + 1) / 2;
    let mut fmat = vec![0.0; nn * d2];
    {
        let mut pairs = vec![0.0; n_pairs];
        for (i, &(x, _)) in nodes.iter().enumerate() {
            table.eval_all(x, &mut pairs);
            table.expand_symmetric(&pairs, &mut fmat[i * d2..(i + 1) * d2]);
        }
    }

    let inv_slices = 1.0 / schedule.len() as f64;
    let total_weight: f64 = match weights {
        Some(w) => w.iter().sum(),
        None => components.len() as f64,
    };

    let mut rho_mat: DMatrix<Complex64> = DMatrix::zeros(d2, d2);
    for (ci, comp) in components.iter().enumerate() {
        let w_comp = weights.map_or(1.0, |w| w[ci]) / total_weight;
        let per_slice: Vec<DMatrix<Complex64>> = schedule
            .par_iter()
            .map(|&(ta, tb)| {
                let (mu_a, mu_b, v_a, v_b, c_ab) = slice_marginals(comp, ta, tb);
                // Standard units.
                let (mu_a, mu_b) = (SQRT2 * mu_a, SQRT2 * mu_b);
                let (v_a, v_b, c_ab) = (2.0 * v_a, 2.0 * v_b, 2.0 * c_ab);
                let slope = c_ab / v_a;
                let cond_var = (v_b - c_ab * c_ab / v_a).max(1e-14);

                let norm_a = 1.0 / (2.0 * std::f64::consts::PI * v_a).sqrt();
                let norm_c = 1.0 / (2.0 * std::f64::consts::PI * cond_var).sqrt();
                let mut acc = vec![0.0; d2 * d2];
                let mut g = vec![0.0; d2];
                for a in 0..nn {
                    let (ga, wa_node) = nodes[a];
                    let da = ga - mu_a;
                    let wa = wa_node * norm_a * (-0.5 * da * da / v_a).exp();
                    if wa.abs() < 1e-300 {
                        continue;
                    }
                    let mb = mu_b + slope * da;
                    g.fill(0.0);
                    for b in 0..nn {
                        let (gb, wb_node) = nodes[b];
                        let db = gb - mb;
                        let wb = wb_node * norm_c * (-0.5 * db * db / cond_var).exp();
                        if wb.abs() < 1e-300 {
                            continue;
                        }
                        let fb = &fmat[b * d2..(b + 1) * d2];
                        for (gv, &fv) in g.iter_mut().zip(fb) {
                            *gv += wb * fv;
                        }
                    }
                    let fa = &fmat[a * d2..(a + 1) * d2];
                    for ai in 0..d2 {
                        let c = wa * fa[ai];
                        if c == 0.0 {
                            continue;
                        }
                        let row = &mut acc[ai * d2..(ai + 1) * d2];
                        for (r, &gv) in row.iter_mut().zip(g.iter()) {
                            *r += c * gv;
                        }
                    }
                }

                let mut mat: DMatrix<Complex64> = DMatrix::zeros(d2, d2);
                for n in 0..dim {
                    for l in 0..dim {
                        let pha = Complex64::from_polar(1.0, (n as f64 - l as f64) * ta);
                        let a_idx = n * dim + l;
                        for k in 0..dim {
                            for m in 0..dim {
                                let phb =
                                    Complex64::from_polar(1.0, (k as f64 - m as f64) * tb);
                                mat[(n * dim + k, l * dim + m)] +=
                                    acc[a_idx * d2 + k * dim + m] * pha * phb;
                            }
                        }
                    }
                }
                mat * Complex64::new(inv_slices, 0.0)
            })
            .collect();
        for mat in per_slice {
            rho_mat += mat * Complex64::new(w_comp, 0.0);
        }
    }
    let mut rho = FockDM { dim, mat: rho_mat };
    rho.hermitize();
    Ok(rho)
}
