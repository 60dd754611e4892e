//! Exact Gaussian-state algebra: construction, symplectic transformations,
//! homodyne sampling and conditioning, moment extraction.
//!
//! Conventions used throughout the crate:
//! * quadratures are interleaved as (x1, p1, x2, p2, ...);
//! * the vacuum variance of every quadrature is 1/4;
//! * all operations are pure functions returning new values.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Vacuum variance of a single quadrature in this crate's normalization.
pub const VACUUM_VAR: f64 = 0.25;

/// Tolerance on symplectic eigenvalues when checking the uncertainty relation.
pub const PHYSICALITY_TOL: f64 = 1e-10;

const SYMMETRY_RTOL: f64 = 1e-12;

/// Zero-mean-offset Gaussian state of `n` optical modes: mean vector of
/// length 2n and symmetric covariance matrix, both in vacuum-variance-1/4
/// units.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianState {
    /// Builds a state from explicit moments. The covariance must be square,
    /// of matching even dimension, and symmetric to within 1e-12 relative
    /// tolerance; it is symmetrized on ingestion.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 || d % 2 != 0 {
            return Err(Error::invalid(format!(
                "mean length must be positive and even, got {d}"
            )));
        }
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::invalid(format!(
                "covariance must be {d}x{d}, got {}x{}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        let scale = cov.amax().max(VACUUM_VAR);
        for i in 0..d {
            for j in (i + 1)..d {
                if (cov[(i, j)] - cov[(j, i)]).abs() > SYMMETRY_RTOL * scale {
                    return Err(Error::invalid(format!(
                        "covariance not symmetric at ({i},{j}): {} vs {}",
                        cov[(i, j)],
                        cov[(j, i)]
                    )));
                }
            }
        }
        let mut state = GaussianState { mean, cov };
        state.symmetrize();
        Ok(state)
    }

    /// N-mode vacuum: zero mean, covariance (1/4)·I.
    pub fn vacuum(n_modes: usize) -> Result<Self> {
        if n_modes == 0 {
            return Err(Error::invalid("vacuum requires at least one mode"));
        }
        Ok(GaussianState {
            mean: DVector::zeros(2 * n_modes),
            cov: DMatrix::identity(2 * n_modes, 2 * n_modes) * VACUUM_VAR,
        })
    }

    /// The zero-mode state left over after measuring the last mode.
    pub(crate) fn empty() -> Self {
        GaussianState {
            mean: DVector::zeros(0),
            cov: DMatrix::zeros(0, 0),
        }
    }

    pub fn n_modes(&self) -> usize {
        self.mean.len() / 2
    }

    pub fn is_empty(&self) -> bool {
        self.mean.len() == 0
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    fn symmetrize(&mut self) {
        let d = self.cov.nrows();
        for i in 0..d {
            for j in (i + 1)..d {
                let v = 0.5 * (self.cov[(i, j)] + self.cov[(j, i)]);
                self.cov[(i, j)] = v;
                self.cov[(j, i)] = v;
            }
        }
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.n_modes() {
            return Err(Error::invalid(format!(
                "mode index {mode} out of range for {}-mode state",
                self.n_modes()
            )));
        }
        Ok(())
    }

    /// Rotates mode `mode` by `theta`:
    /// (x, p) -> (x cosθ + p sinθ, −x sinθ + p cosθ).
    pub fn phase_shift(&self, mode: usize, theta: f64) -> Result<Self> {
        self.check_mode(mode)?;
        let mut out = self.clone();
        let (c, s) = (theta.cos(), theta.sin());
        let (ix, ip) = (2 * mode, 2 * mode + 1);
        let d = out.mean.len();

        let (mx, mp) = (out.mean[ix], out.mean[ip]);
        out.mean[ix] = c * mx + s * mp;
        out.mean[ip] = -s * mx + c * mp;

        // Congruence restricted to the two affected rows, then columns.
        for j in 0..d {
            let (a, b) = (out.cov[(ix, j)], out.cov[(ip, j)]);
            out.cov[(ix, j)] = c * a + s * b;
            out.cov[(ip, j)] = -s * a + c * b;
        }
        for i in 0..d {
            let (a, b) = (out.cov[(i, ix)], out.cov[(i, ip)]);
            out.cov[(i, ix)] = c * a + s * b;
            out.cov[(i, ip)] = -s * a + c * b;
        }
        out.symmetrize();
        Ok(out)
    }

    /// Mixes modes `i` and `j` on a beam splitter of power transmittance `t`:
    /// out_i = √t·in_i + √(1−t)·in_j, out_j = √(1−t)·in_i − √t·in_j,
    /// acting identically on the x and p quadratures.
    pub fn beamsplitter(&self, i: usize, j: usize, t: f64) -> Result<Self> {
        self.check_mode(i)?;
        self.check_mode(j)?;
        if i == j {
            return Err(Error::invalid("beamsplitter needs two distinct modes"));
        }
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::invalid(format!(
                "transmittance must lie in [0,1], got {t}"
            )));
        }
        let (a, b) = (t.sqrt(), (1.0 - t).sqrt());
        let mut out = self.clone();
        let d = out.mean.len();
        let rows = [2 * i, 2 * i + 1, 2 * j, 2 * j + 1];

        for q in 0..2 {
            let (ri, rj) = (rows[q], rows[q + 2]);
            let (mi, mj) = (out.mean[ri], out.mean[rj]);
            out.mean[ri] = a * mi + b * mj;
            out.mean[rj] = b * mi - a * mj;
        }
        for q in 0..2 {
            let (ri, rj) = (rows[q], rows[q + 2]);
            for col in 0..d {
                let (vi, vj) = (out.cov[(ri, col)], out.cov[(rj, col)]);
                out.cov[(ri, col)] = a * vi + b * vj;
                out.cov[(rj, col)] = b * vi - a * vj;
            }
        }
        for q in 0..2 {
            let (ri, rj) = (rows[q], rows[q + 2]);
            for row in 0..d {
                let (vi, vj) = (out.cov[(row, ri)], out.cov[(row, rj)]);
                out.cov[(row, ri)] = a * vi + b * vj;
                out.cov[(row, rj)] = b * vi - a * vj;
            }
        }
        out.symmetrize();
        Ok(out)
    }

    /// Block-diagonal concatenation; mode ordering is self's modes then
    /// other's modes.
    pub fn tensor(&self, other: &GaussianState) -> GaussianState {
        let (da, db) = (self.mean.len(), other.mean.len());
        let mut mean = DVector::zeros(da + db);
        mean.rows_mut(0, da).copy_from(&self.mean);
        mean.rows_mut(da, db).copy_from(&other.mean);
        let mut cov = DMatrix::zeros(da + db, da + db);
        cov.view_mut((0, 0), (da, da)).copy_from(&self.cov);
        cov.view_mut((da, da), (db, db)).copy_from(&other.cov);
        GaussianState { mean, cov }
    }

    /// Reduced state on the listed modes, in the listed order (partial trace
    /// over everything else).
    pub fn keep_modes(&self, modes: &[usize]) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::invalid("keep_modes requires a nonempty list"));
        }
        for (pos, &m) in modes.iter().enumerate() {
            self.check_mode(m)?;
            if modes[..pos].contains(&m) {
                return Err(Error::invalid(format!("duplicate mode index {m}")));
            }
        }
        let d = 2 * modes.len();
        let mut mean = DVector::zeros(d);
        let mut cov = DMatrix::zeros(d, d);
        for (a, &ma) in modes.iter().enumerate() {
            for q in 0..2 {
                mean[2 * a + q] = self.mean[2 * ma + q];
            }
            for (b, &mb) in modes.iter().enumerate() {
                for qa in 0..2 {
                    for qb in 0..2 {
                        cov[(2 * a + qa, 2 * b + qb)] =
                            self.cov[(2 * ma + qa, 2 * mb + qb)];
                    }
                }
            }
        }
        Ok(GaussianState { mean, cov })
    }

    /// Marginal moments of the quadrature x_θ = cosθ·x + sinθ·p of one mode.
    pub fn quadrature_marginal(&self, mode: usize, lo_angle: f64) -> Result<(f64, f64)> {
        self.check_mode(mode)?;
        let (c, s) = (lo_angle.cos(), lo_angle.sin());
        let (ix, ip) = (2 * mode, 2 * mode + 1);
        let m = c * self.mean[ix] + s * self.mean[ip];
        let v = c * c * self.cov[(ix, ix)]
            + 2.0 * c * s * self.cov[(ix, ip)]
            + s * s * self.cov[(ip, ip)];
        Ok((m, v))
    }

    /// Homodyne measurement of x_θ on `mode`: draws the outcome from the
    /// exact Gaussian marginal, conditions the remaining modes on it, and
    /// consumes the measured mode. Returns (outcome, remaining state,
    /// Gaussian density of the outcome).
    pub fn homodyne_sample<R: Rng + ?Sized>(
        &self,
        mode: usize,
        lo_angle: f64,
        rng: &mut R,
    ) -> Result<(f64, GaussianState, f64)> {
        let (m, v) = self.quadrature_marginal(mode, lo_angle)?;
        if v <= 0.0 {
            return Err(Error::Physicality(format!(
                "non-positive quadrature variance {v} in homodyne"
            )));
        }
        let z: f64 = rng.sample(StandardNormal);
        let value = m + v.sqrt() * z;
        let (remaining, density) = self.condition_on_value(mode, lo_angle, value)?;
        Ok((value, remaining, density))
    }

    /// Deterministic variant of `homodyne_sample`: conditions on a supplied
    /// outcome instead of drawing one.
    pub fn condition_on_value(
        &self,
        mode: usize,
        lo_angle: f64,
        value: f64,
    ) -> Result<(GaussianState, f64)> {
        let (m, v) = self.quadrature_marginal(mode, lo_angle)?;
        if v <= 0.0 {
            return Err(Error::Physicality(format!(
                "non-positive quadrature variance {v} in conditioning"
            )));
        }
        let density = (-0.5 * (value - m) * (value - m) / v).exp()
            / (2.0 * std::f64::consts::PI * v).sqrt();

        let n = self.n_modes();
        if n == 1 {
            return Ok((GaussianState::empty(), density));
        }

        let (c, s) = (lo_angle.cos(), lo_angle.sin());
        let (ix, ip) = (2 * mode, 2 * mode + 1);
        let rest: Vec<usize> = (0..2 * n).filter(|&k| k != ix && k != ip).collect();
        let dr = rest.len();

        // Covariance vector between the measured quadrature and the rest.
        let mut cross = DVector::zeros(dr);
        for (r, &k) in rest.iter().enumerate() {
            cross[r] = c * self.cov[(k, ix)] + s * self.cov[(k, ip)];
        }
        let gain = (value - m) / v;
        let mut mean = DVector::zeros(dr);
        for (r, &k) in rest.iter().enumerate() {
            mean[r] = self.mean[k] + cross[r] * gain;
        }
        let mut cov = DMatrix::zeros(dr, dr);
        for (r, &k) in rest.iter().enumerate() {
            for (q, &l) in rest.iter().enumerate() {
                cov[(r, q)] = self.cov[(k, l)] - cross[r] * cross[q] / v;
            }
        }
        let mut out = GaussianState { mean, cov };
        out.symmetrize();
        Ok((out, density))
    }

    /// Mean and variance of the quadrature combination cᵀ·(x1,p1,x2,p2,...).
    pub fn quadrature_stats(&self, coeffs: &[f64]) -> Result<(f64, f64)> {
        if coeffs.len() != self.mean.len() {
            return Err(Error::invalid(format!(
                "coefficient vector length {} does not match 2N = {}",
                coeffs.len(),
                self.mean.len()
            )));
        }
        let c = DVector::from_column_slice(coeffs);
        let mean = c.dot(&self.mean);
        let var = (&self.cov * &c).dot(&c);
        Ok((mean, var))
    }

    pub fn det_cov(&self) -> f64 {
        self.cov.clone().determinant()
    }

    /// Purity of the Gaussian state: (1/4)^N / √det(cov).
    pub fn purity(&self) -> f64 {
        VACUUM_VAR.powi(self.n_modes() as i32) / self.det_cov().sqrt()
    }

    /// Symplectic eigenvalues (moduli of the eigenvalues of Ω·cov), sorted
    /// ascending. The vacuum value is 1/4.
    pub fn symplectic_eigenvalues(&self) -> Vec<f64> {
        let n = self.n_modes();
        let m = symplectic_form(n) * &self.cov;
        let eigs = m.complex_eigenvalues();
        let mut nus: Vec<f64> = eigs.iter().map(|z| z.im.abs()).collect();
        nus.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // Eigenvalues come in ±iν pairs; keep one of each.
        nus.into_iter().skip(1).step_by(2).collect()
    }

    /// Verifies the uncertainty relation: every symplectic eigenvalue must be
    /// at least 1/4 − tol.
    pub fn check_physical(&self, tol: f64) -> Result<()> {
        let nus = self.symplectic_eigenvalues();
        match nus.first() {
            Some(&nu) if nu < VACUUM_VAR - tol => Err(Error::Physicality(format!(
                "smallest symplectic eigenvalue {nu} < 1/4"
            ))),
            _ => Ok(()),
        }
    }

    /// Cheap drift guard for debug and test builds: moments finite,
    /// quadrature variances positive. The full uncertainty-relation check
    /// is exercised by the property tests.
    pub(crate) fn debug_check_sane(&self) {
        #[cfg(debug_assertions)]
        {
            assert!(
                self.mean.iter().all(|v| v.is_finite()),
                "non-finite mean entry"
            );
            for i in 0..self.cov.nrows() {
                assert!(
                    self.cov[(i, i)].is_finite() && self.cov[(i, i)] > 0.0,
                    "non-positive variance {} at quadrature {i}",
                    self.cov[(i, i)]
                );
            }
        }
    }
}

/// The symplectic form Ω: direct sum of [[0,1],[−1,0]] blocks in the
/// interleaved quadrature ordering.
pub fn symplectic_form(n_modes: usize) -> DMatrix<f64> {
    let mut omega = DMatrix::zeros(2 * n_modes, 2 * n_modes);
    for k in 0..n_modes {
        omega[(2 * k, 2 * k + 1)] = 1.0;
        omega[(2 * k + 1, 2 * k)] = -1.0;
    }
    omega
}

/// A linear symplectic map plus displacement (the displacement is always
/// zero in this artifact; kept for generality).
#[derive(Debug, Clone)]
pub struct SymplecticOp {
    matrix: DMatrix<f64>,
    displacement: DVector<f64>,
}

impl SymplecticOp {
    pub fn identity(n_modes: usize) -> Self {
        SymplecticOp {
            matrix: DMatrix::identity(2 * n_modes, 2 * n_modes),
            displacement: DVector::zeros(2 * n_modes),
        }
    }

    /// Rotation of a single mode by θ.
    pub fn phase_shift(n_modes: usize, mode: usize, theta: f64) -> Result<Self> {
        if mode >= n_modes {
            return Err(Error::invalid("phase_shift mode out of range"));
        }
        let mut op = Self::identity(n_modes);
        let (c, s) = (theta.cos(), theta.sin());
        let (ix, ip) = (2 * mode, 2 * mode + 1);
        op.matrix[(ix, ix)] = c;
        op.matrix[(ix, ip)] = s;
        op.matrix[(ip, ix)] = -s;
        op.matrix[(ip, ip)] = c;
        Ok(op)
    }

    /// Two-mode beam splitter with the crate's sign convention.
    pub fn beamsplitter(n_modes: usize, i: usize, j: usize, t: f64) -> Result<Self> {
        if i >= n_modes || j >= n_modes || i == j {
            return Err(Error::invalid("beamsplitter mode indices invalid"));
        }
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::invalid("transmittance must lie in [0,1]"));
        }
        let (a, b) = (t.sqrt(), (1.0 - t).sqrt());
        let mut op = Self::identity(n_modes);
        for q in 0..2 {
            let (ri, rj) = (2 * i + q, 2 * j + q);
            op.matrix[(ri, ri)] = a;
            op.matrix[(ri, rj)] = b;
            op.matrix[(rj, ri)] = b;
            op.matrix[(rj, rj)] = -a;
        }
        Ok(op)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn displacement(&self) -> &DVector<f64> {
        &self.displacement
    }

    /// self ∘ other (other acts first).
    pub fn compose(&self, other: &SymplecticOp) -> SymplecticOp {
        SymplecticOp {
            matrix: &self.matrix * &other.matrix,
            displacement: &self.matrix * &other.displacement + &self.displacement,
        }
    }

    /// Full congruence S·cov·Sᵀ and mean map; reference implementation for
    /// the targeted in-place updates in `GaussianState`.
    pub fn apply(&self, state: &GaussianState) -> Result<GaussianState> {
        if self.matrix.nrows() != state.mean().len() {
            return Err(Error::invalid("symplectic dimension mismatch"));
        }
        let mean = &self.matrix * state.mean() + &self.displacement;
        let cov = &self.matrix * state.cov() * self.matrix.transpose();
        GaussianState::new(mean, cov)
    }

    /// Largest elementwise deviation of S·Ω·Sᵀ from Ω.
    pub fn symplectic_defect(&self) -> f64 {
        let n = self.matrix.nrows() / 2;
        let omega = symplectic_form(n);
        let d = &self.matrix * &omega * self.matrix.transpose() - &omega;
        d.amax()
    }
}
