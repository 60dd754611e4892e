//! Monte Carlo simulator and analysis toolkit for iterative
//! continuous-variable entanglement distillation.
//!
//! The crate models phase-diffused entangled light in the Gaussian-mixture
//! representation, runs single-stage (two-copy) and iterative (three-copy)
//! conditional distillation protocols, reconstructs distilled two-mode
//! states by pattern-function homodyne tomography, and quantifies
//! entanglement (logarithmic negativity), purity, and total variance as
//! functions of the trigger threshold.
//!
//! Conventions: quadratures interleaved (x1, p1, x2, p2, ...), vacuum
//! variance 1/4, thresholds quoted on the raw difference x_A − x_B.

pub mod ensemble;
pub mod error;
pub mod gaussian;
pub mod harness;
pub mod measures;
pub mod protocol;
pub mod rng;
pub mod source;
pub mod tomography;

pub use ensemble::GaussianEnsemble;
pub use error::{Error, Result};
pub use gaussian::{GaussianState, SymplecticOp};
pub use harness::ExperimentConfig;
pub use protocol::{Distillate, ProtocolConfig, ProtocolMode, TrialOutcome};
pub use source::{NoiseSpec, SqueezerSpec};
pub use tomography::{FockDM, TomographyPlan};
