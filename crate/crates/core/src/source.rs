//! Entangled-pair preparation and phase-diffusion decoherence: squeezed
//! modes are split on a balanced beam splitter into EPR-correlated pairs,
//! and every distributed beam picks up an independent Gaussian random phase.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{GaussianState, VACUUM_VAR};

/// Squeezer output described in dB relative to shot noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqueezerSpec {
    /// dB below shot noise in the squeezed quadrature (> 0).
    pub squeezing_db: f64,
    /// dB above shot noise in the anti-squeezed quadrature (≥ squeezing_db
    /// for a physical device).
    pub antisqueezing_db: f64,
}

impl SqueezerSpec {
    pub fn new(squeezing_db: f64, antisqueezing_db: f64) -> Result<Self> {
        let spec = SqueezerSpec {
            squeezing_db,
            antisqueezing_db,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.squeezing_db.is_finite() || !self.antisqueezing_db.is_finite() {
            return Err(Error::invalid("squeezer dB values must be finite"));
        }
        let (vx, vp) = self.variances();
        if vx * vp < VACUUM_VAR * VACUUM_VAR * (1.0 - 1e-12) {
            return Err(Error::invalid(format!(
                "unphysical squeezer: Vx·Vp = {:.6e} < 1/16",
                vx * vp
            )));
        }
        Ok(())
    }

    /// (Vx, Vp) in vacuum-variance-1/4 units:
    /// Vx = (1/4)·10^(−squeezing_db/10), Vp = (1/4)·10^(antisqueezing_db/10).
    pub fn variances(&self) -> (f64, f64) {
        (
            VACUUM_VAR * 10f64.powf(-self.squeezing_db / 10.0),
            VACUUM_VAR * 10f64.powf(self.antisqueezing_db / 10.0),
        )
    }
}

impl Default for SqueezerSpec {
    /// The source regime reported for all three OPAs: 5 dB squeezing,
    /// 9 dB anti-squeezing.
    fn default() -> Self {
        SqueezerSpec {
            squeezing_db: 5.0,
            antisqueezing_db: 9.0,
        }
    }
}

/// Standard deviations (radians) of the six independent Gaussian phase
/// noises, in beam order (A1, B1, A2, B2, A3, B3).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma_per_beam: [f64; 6],
}

impl NoiseSpec {
    pub fn uniform(sigma: f64) -> Self {
        NoiseSpec {
            sigma_per_beam: [sigma; 6],
        }
    }

    /// All entries must be non-negative; entries ≥ π are legal but flagged,
    /// since the phase wraps and larger σ changes nothing physically.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        for (i, &s) in self.sigma_per_beam.iter().enumerate() {
            if !(s >= 0.0) || !s.is_finite() {
                return Err(Error::invalid(format!(
                    "phase-noise sigma for beam {i} must be finite and >= 0, got {s}"
                )));
            }
            if s >= std::f64::consts::PI {
                warnings.push(format!(
                    "beam {i}: sigma = {s:.3} rad >= pi; phase effectively uniform"
                ));
            }
        }
        Ok(warnings)
    }

    pub fn is_noiseless(&self) -> bool {
        self.sigma_per_beam.iter().all(|&s| s == 0.0)
    }
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec::uniform(0.0)
    }
}

/// Single-mode zero-mean squeezed state with cov = diag(Vx, Vp).
pub fn make_squeezed(spec: &SqueezerSpec) -> Result<GaussianState> {
    spec.validate()?;
    let (vx, vp) = spec.variances();
    GaussianState::new(
        nalgebra::DVector::zeros(2),
        nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&[vx, vp])),
    )
}

/// Splits a squeezed mode on a balanced beam splitter against vacuum and
/// applies a π phase flip to mode B, so that the correlated combinations are
/// exactly X_A − X_B and P_A + P_B. Output mode order (A, B).
pub fn make_pair(squeezed: &GaussianState) -> Result<GaussianState> {
    if squeezed.n_modes() != 1 {
        return Err(Error::invalid(format!(
            "make_pair expects a single-mode input, got {} modes",
            squeezed.n_modes()
        )));
    }
    let joint = squeezed.tensor(&GaussianState::vacuum(1)?);
    let split = joint.beamsplitter(0, 1, 0.5)?;
    split.phase_shift(1, std::f64::consts::PI)
}

/// Draws the six beam phases, θ_k ~ Normal(0, σ_k²).
pub fn sample_phases<R: Rng + ?Sized>(noise: &NoiseSpec, rng: &mut R) -> [f64; 6] {
    let mut phases = [0.0; 6];
    for (p, &s) in phases.iter_mut().zip(&noise.sigma_per_beam) {
        let z: f64 = rng.sample(StandardNormal);
        *p = s * z;
    }
    phases
}

/// One Gaussian component of the phase-diffused mixture: rotates mode A by
/// θ_A and mode B by θ_B.
pub fn decohere(pair: &GaussianState, theta_a: f64, theta_b: f64) -> Result<GaussianState> {
    if pair.n_modes() != 2 {
        return Err(Error::invalid("decohere expects a two-mode state"));
    }
    pair.phase_shift(0, theta_a)?.phase_shift(1, theta_b)
}
