//! Single-mode tomography pattern functions f_nm(x) = d/dx[ψ_n(x)·φ_m(x)]
//! (n <= m), where ψ_n is the normalized harmonic-oscillator eigenfunction
//! and φ_m the non-normalizable second solution of the same Schrödinger
//! equation, normalized by the Wronskian ψ_m·φ_m' − ψ_m'·φ_m = 2. These
//! functions use the standard tomography convention (vacuum variance 1/2);
//! callers rescale samples from this crate's 1/4 units by x_std = √2·x.
//!
//! Evaluation avoids numerical differentiation via the ladder identities
//! ψ_n' = x·ψ_n − √(2(n+1))·ψ_{n+1} (and identically for φ), giving
//!   f_nm = 2x·ψ_n·φ_m − √(2(n+1))·ψ_{n+1}·φ_m − √(2(m+1))·ψ_n·φ_{m+1}.
//! Both families satisfy the same three-term recurrence in n; φ is seeded
//! from the Dawson function.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};

/// Half-width of the tabulation grid in standard units. Outside the grid the
/// tabulated pattern functions are clamped to zero.
pub const PATTERN_X_MAX: f64 = 8.0;
/// Grid step of the tabulation.
pub const PATTERN_STEP: f64 = 1e-3;

const FRAC_PI_QUARTER: f64 = 0.751_125_544_464_942_9; // π^{-1/4}
const PI_QUARTER: f64 = 1.331_335_363_800_389_5; // π^{1/4}

/// Dawson integral D(x) = e^{−x²}·∫_0^x e^{t²} dt, by Rybicki's sampling
/// series. Accurate to full double precision for the arguments used here.
pub fn dawson(x: f64) -> f64 {
    const H: f64 = 0.2;
    let ax = x.abs();
    // Terms beyond |x − kh| ≈ 6.2 are below 2^-53 relative to the head.
    let kmax = ((ax + 6.5) / H).ceil() as i64;
    let mut sum = 0.0;
    let mut k = 1i64;
    while k <= kmax {
        let kh = k as f64 * H;
        let a = ax - kh;
        let b = ax + kh;
        sum += ((-a * a).exp() - (-b * b).exp()) / k as f64;
        k += 2;
    }
    let d = sum / std::f64::consts::PI.sqrt();
    if x < 0.0 {
        -d
    } else {
        d
    }
}

/// Normalized oscillator eigenfunctions ψ_0..ψ_nmax at x (vacuum σ² = 1/2).
pub fn oscillator_eigenfunctions(x: f64, nmax: usize) -> Vec<f64> {
    let mut psi = vec![0.0; nmax + 1];
    psi[0] = FRAC_PI_QUARTER * (-0.5 * x * x).exp();
    if nmax >= 1 {
        psi[1] = std::f64::consts::SQRT_2 * x * psi[0];
    }
    for n in 1..nmax {
        let np1 = (n + 1) as f64;
        psi[n + 1] = (2.0 / np1).sqrt() * x * psi[n] - (n as f64 / np1).sqrt() * psi[n - 1];
    }
    psi
}

/// Irregular (second) solutions φ_0..φ_nmax at x, Wronskian-normalized.
pub fn irregular_solutions(x: f64, nmax: usize) -> Vec<f64> {
    let mut phi = vec![0.0; nmax + 1];
    let e = (0.5 * x * x).exp();
    let d = dawson(x);
    phi[0] = 2.0 * PI_QUARTER * e * d;
    if nmax >= 1 {
        phi[1] = std::f64::consts::SQRT_2 * PI_QUARTER * e * (2.0 * x * d - 1.0);
    }
    for n in 1..nmax {
        let np1 = (n + 1) as f64;
        phi[n + 1] = (2.0 / np1).sqrt() * x * phi[n] - (n as f64 / np1).sqrt() * phi[n - 1];
    }
    phi
}

/// Direct evaluation of f_nm(x) from the ψ/φ construction, valid for any
/// |x| <= 12 (the range used by the tables and tests).
pub fn eval_pattern_direct(n: usize, m: usize, x: f64) -> f64 {
    let (n, m) = if n <= m { (n, m) } else { (m, n) };
    if x.abs() > 12.0 {
        // ψ·φ products underflow/overflow past here; the functions decay
        // at least as x^{-2}, and all callers stay inside the table range.
        return 0.0;
    }
    let psi = oscillator_eigenfunctions(x, n + 1);
    let phi = irregular_solutions(x, m + 1);
    2.0 * x * psi[n] * phi[m]
        - (2.0 * (n as f64 + 1.0)).sqrt() * psi[n + 1] * phi[m]
        - (2.0 * (m as f64 + 1.0)).sqrt() * psi[n] * phi[m + 1]
}

/// Dense tabulation of all pattern functions with indices below `dim` on a
/// uniform grid over [−8, 8] (standard units), evaluated by linear
/// interpolation at runtime and clamped to zero outside the grid.
#[derive(Debug)]
pub struct PatternTable {
    dim: usize,
    n_points: usize,
    /// Row-major: values[point * n_pairs + pair], pair = upper-triangle
    /// index of (n, m) with n <= m.
    values: Vec<f64>,
}

impl PatternTable {
    pub fn build(dim: usize) -> Result<Self> {
        if !(1..=16).contains(&dim) {
            return Err(Error::invalid(format!(
                "pattern table supports dim in 1..=16, got {dim}"
            )));
        }
        let n_points = (2.0 * PATTERN_X_MAX / PATTERN_STEP).round() as usize + 1;
        let n_pairs = dim * (dim + 1) / 2;
        let mut values = vec![0.0; n_points * n_pairs];
        for i in 0..n_points {
            let x = -PATTERN_X_MAX + i as f64 * PATTERN_STEP;
            let psi = oscillator_eigenfunctions(x, dim);
            let phi = irregular_solutions(x, dim);
            let row = &mut values[i * n_pairs..(i + 1) * n_pairs];
            let mut p = 0;
            for n in 0..dim {
                for m in n..dim {
                    row[p] = 2.0 * x * psi[n] * phi[m]
                        - (2.0 * (n as f64 + 1.0)).sqrt() * psi[n + 1] * phi[m]
                        - (2.0 * (m as f64 + 1.0)).sqrt() * psi[n] * phi[m + 1];
                    p += 1;
                }
            }
        }
        Ok(PatternTable {
            dim,
            n_points,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn n_pairs(&self) -> usize {
        self.dim * (self.dim + 1) / 2
    }

    #[inline]
    fn pair_index(&self, n: usize, m: usize) -> usize {
        let (n, m) = if n <= m { (n, m) } else { (m, n) };
        // Entries in upper-triangular rows above n, plus the offset in row n.
        n * self.dim - n * n.saturating_sub(1) / 2 + (m - n)
    }

    /// f_nm at `x` (standard units). Indices must be below `dim`.
    pub fn value(&self, n: usize, m: usize, x: f64) -> Result<f64> {
        if n >= self.dim || m >= self.dim {
            return Err(Error::invalid(format!(
                "pattern index ({n},{m}) out of range for dim {}",
                self.dim
            )));
        }
        if !x.is_finite() {
            return Err(Error::invalid("pattern argument must be finite"));
        }
        let mut buf = vec![0.0; self.n_pairs()];
        self.eval_all(x, &mut buf);
        Ok(buf[self.pair_index(n, m)])
    }

    /// Interpolates every tabulated pair at once into `out`
    /// (length dim·(dim+1)/2), zeroing outside the grid.
    #[inline]
    pub fn eval_all(&self, x: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.n_pairs());
        let t = (x + PATTERN_X_MAX) / PATTERN_STEP;
        if !(t >= 0.0) || t >= (self.n_points - 1) as f64 {
            out.fill(0.0);
            return;
        }
        let i = t as usize;
        let frac = t - i as f64;
        let n_pairs = self.n_pairs();
        let lo = &self.values[i * n_pairs..(i + 1) * n_pairs];
        let hi = &self.values[(i + 1) * n_pairs..(i + 2) * n_pairs];
        for p in 0..n_pairs {
            out[p] = lo[p] + frac * (hi[p] - lo[p]);
        }
    }

    /// Expands the pair vector into a dense dim×dim symmetric layout
    /// indexed by n·dim + m.
    #[inline]
    pub fn expand_symmetric(&self, pairs: &[f64], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim * self.dim);
        let mut p = 0;
        for n in 0..self.dim {
            for m in n..self.dim {
                out[n * self.dim + m] = pairs[p];
                out[m * self.dim + n] = pairs[p];
                p += 1;
            }
        }
    }
}

static TABLE_CACHE: OnceLock<Mutex<HashMap<usize, Arc<PatternTable>>>> = OnceLock::new();

/// Shared, lazily built pattern table for a given truncation dimension.
pub fn pattern_table(dim: usize) -> Result<Arc<PatternTable>> {
    let cache = TABLE_CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("pattern table cache poisoned");
    if let Some(t) = guard.get(&dim) {
        return Ok(Arc::clone(t));
    }
    let table = Arc::new(PatternTable::build(dim)?);
    guard.insert(dim, Arc::clone(&table));
    Ok(table)
}
