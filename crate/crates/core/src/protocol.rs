//! One Monte Carlo trial of the conditional distillation protocol, and
//! batched execution with deterministic per-trial random streams.
//!
//! A trial interferes the local halves of two shared entangled copies on
//! beam splitters at A and B, homodynes one output port at each site, and
//! accepts when the difference of the two photo-currents falls inside the
//! trigger threshold. The iterative mode feeds the stage-1 survivor together
//! with a third copy into a second stage and requires both triggers.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::GaussianEnsemble;
use crate::error::{Error, Result};
use crate::gaussian::GaussianState;
use crate::rng::{substream, PURPOSE_TRIAL};
use crate::source::{decohere, make_pair, make_squeezed, NoiseSpec, SqueezerSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolMode {
    /// Two-copy, one distillation stage.
    SingleStage,
    /// Three-copy, two stages with a logical-AND trigger.
    Iterative,
}

impl ProtocolMode {
    pub fn copies_per_attempt(self) -> u32 {
        match self {
            ProtocolMode::SingleStage => 2,
            ProtocolMode::Iterative => 3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ProtocolMode::SingleStage => "single",
            ProtocolMode::Iterative => "iterative",
        }
    }
}

/// Serde helpers for threshold fields: JSON has no Infinity literal, so an
/// unbounded trigger is written as the string "inf".
pub mod serde_threshold {
    use serde::de::Error as DeError;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Text(t) if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("infinity") => {
                Ok(f64::INFINITY)
            }
            Raw::Text(t) => t
                .parse::<f64>()
                .map_err(|_| D::Error::custom(format!("bad threshold value {t:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolConfig {
    /// Trigger bound Q1 on |x_A − x_B| at stage 1, in quadrature units.
    #[serde(with = "serde_threshold")]
    pub threshold_stage1: f64,
    /// Trigger bound Q2 at stage 2 (iterative mode only).
    #[serde(with = "serde_threshold")]
    pub threshold_stage2: f64,
    pub stage1_transmittance: f64,
    pub stage2_transmittance: f64,
    pub mode: ProtocolMode,
    /// Fringe visibility of the distillation interferences. Modeled as a
    /// fictitious beam splitter of transmittance visibility² mixing in
    /// vacuum before each interference; 1.0 disables the hook.
    pub visibility: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            threshold_stage1: f64::INFINITY,
            threshold_stage2: f64::INFINITY,
            stage1_transmittance: 0.5,
            stage2_transmittance: 2.0 / 3.0,
            mode: ProtocolMode::Iterative,
            visibility: 1.0,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold_stage1 >= 0.0) || !(self.threshold_stage2 >= 0.0) {
            return Err(Error::invalid("trigger thresholds must be >= 0"));
        }
        for t in [self.stage1_transmittance, self.stage2_transmittance] {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::invalid(format!(
                    "transmittance must lie strictly inside (0,1), got {t}"
                )));
            }
        }
        if !(self.visibility > 0.0 && self.visibility <= 1.0) {
            return Err(Error::invalid("visibility must lie in (0,1]"));
        }
        Ok(())
    }

    /// Same config with both thresholds replaced (sweeps keep Q1 = Q2).
    pub fn with_threshold(&self, q: f64) -> Self {
        ProtocolConfig {
            threshold_stage1: q,
            threshold_stage2: q,
            ..self.clone()
        }
    }

    pub fn with_mode(&self, mode: ProtocolMode) -> Self {
        ProtocolConfig {
            mode,
            ..self.clone()
        }
    }
}

/// Per-trial record: trigger values, the accept decision, and on acceptance
/// the conditioned two-mode output state.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub accepted: bool,
    pub stage1_diff: f64,
    pub stage2_diff: Option<f64>,
    pub output: Option<GaussianState>,
    pub copies_consumed: u32,
}

/// Accepted outputs of a batch, with the bookkeeping needed for yields.
/// Components carry equal weights (rejection sampling).
#[derive(Debug, Clone)]
pub struct Distillate {
    pub components: Vec<GaussianState>,
    pub attempts: u64,
    pub accepts: u64,
    pub stage1_accepts: u64,
    pub copies_per_attempt: u32,
}

impl Distillate {
    /// Accepted outputs per input copy consumed.
    pub fn yield_fraction(&self) -> f64 {
        if self.attempts == 0 {
            return 0.0;
        }
        self.accepts as f64 / (self.attempts as f64 * self.copies_per_attempt as f64)
    }

    pub fn acceptance_probability(&self) -> f64 {
        if self.attempts == 0 {
            return 0.0;
        }
        self.accepts as f64 / self.attempts as f64
    }

    pub fn as_ensemble(&self) -> Result<GaussianEnsemble> {
        GaussianEnsemble::equal_weight(self.components.clone())
    }
}

/// Mixes vacuum into every mode on fictitious beam splitters of
/// transmittance visibility², modeling imperfect fringe contrast at the
/// distillation interferences. Equivalent to tensoring a vacuum ancilla,
/// splitting, and tracing the ancilla out, applied in place:
/// mode blocks scale by √η (η on the diagonal block) and (1−η)/4 enters the
/// diagonal.
fn apply_stage_visibility(state: &GaussianState, visibility: f64) -> Result<GaussianState> {
    if visibility >= 1.0 {
        return Ok(state.clone());
    }
    let eta = visibility * visibility;
    let root = eta.sqrt();
    let n = state.n_modes();
    let mut mean = state.mean().clone();
    let mut cov = state.cov().clone();
    mean *= root;
    cov *= eta;
    for k in 0..2 * n {
        cov[(k, k)] += (1.0 - eta) * crate::gaussian::VACUUM_VAR;
    }
    GaussianState::new(mean, cov)
}

/// One distillation stage on a four-mode state ordered
/// (A_keep, B_keep, A_new, B_new): interferes the A pair and the B pair on
/// beam splitters of transmittance `t`, homodynes the x quadrature of the
/// reflected-style output port at each site, and triggers on
/// |x_A − x_B| <= q. The conditioned two-mode (A, B) state is returned
/// whether or not the trigger fired; callers discard it on reject.
pub fn distill_stage<R: Rng + ?Sized>(
    input: &GaussianState,
    t: f64,
    q: f64,
    rng: &mut R,
) -> Result<(bool, f64, GaussianState)> {
    if input.n_modes() != 4 {
        return Err(Error::invalid(format!(
            "distill_stage expects 4 modes, got {}",
            input.n_modes()
        )));
    }
    input.debug_check_sane();
    let mixed = input.beamsplitter(0, 2, t)?.beamsplitter(1, 3, t)?;
    let (v_a, after_a, _) = mixed.homodyne_sample(2, 0.0, rng)?;
    // The former mode 3 (B's measured port) is index 2 after consumption.
    let (v_b, output, _) = after_a.homodyne_sample(2, 0.0, rng)?;
    let diff = v_a - v_b;
    Ok((diff.abs() <= q, diff, output))
}

/// Pre-built clean pairs for the three sources; constant across trials.
#[derive(Debug, Clone)]
pub struct SourcePairs {
    pairs: [GaussianState; 3],
}

impl SourcePairs {
    pub fn build(sources: &[SqueezerSpec; 3]) -> Result<Self> {
        let mk = |spec: &SqueezerSpec| -> Result<GaussianState> {
            make_pair(&make_squeezed(spec)?)
        };
        Ok(SourcePairs {
            pairs: [mk(&sources[0])?, mk(&sources[1])?, mk(&sources[2])?],
        })
    }

    pub fn pair(&self, k: usize) -> &GaussianState {
        &self.pairs[k]
    }
}

fn draw_phase<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    sigma * z
}

fn run_trial_with_pairs<R: Rng + ?Sized>(
    config: &ProtocolConfig,
    pairs: &SourcePairs,
    noise: &NoiseSpec,
    rng: &mut R,
) -> Result<TrialOutcome> {
    let s = &noise.sigma_per_beam;
    let copies = config.mode.copies_per_attempt();

    let pair1 = decohere(pairs.pair(0), draw_phase(s[0], rng), draw_phase(s[1], rng))?;
    let pair2 = decohere(pairs.pair(1), draw_phase(s[2], rng), draw_phase(s[3], rng))?;
    let four = apply_stage_visibility(&pair1.tensor(&pair2), config.visibility)?;
    let (acc1, diff1, out1) =
        distill_stage(&four, config.stage1_transmittance, config.threshold_stage1, rng)?;

    match config.mode {
        ProtocolMode::SingleStage => Ok(TrialOutcome {
            accepted: acc1,
            stage1_diff: diff1,
            stage2_diff: None,
            output: acc1.then_some(out1),
            copies_consumed: copies,
        }),
        ProtocolMode::Iterative => {
            if !acc1 {
                return Ok(TrialOutcome {
                    accepted: false,
                    stage1_diff: diff1,
                    stage2_diff: None,
                    output: None,
                    copies_consumed: copies,
                });
            }
            let pair3 = decohere(pairs.pair(2), draw_phase(s[4], rng), draw_phase(s[5], rng))?;
            let four2 = apply_stage_visibility(&out1.tensor(&pair3), config.visibility)?;
            let (acc2, diff2, out2) = distill_stage(
                &four2,
                config.stage2_transmittance,
                config.threshold_stage2,
                rng,
            )?;
            Ok(TrialOutcome {
                accepted: acc2,
                stage1_diff: diff1,
                stage2_diff: Some(diff2),
                output: acc2.then_some(out2),
                copies_consumed: copies,
            })
        }
    }
}

/// One full Monte Carlo attempt. Iterative mode charges three copies even
/// when stage 1 rejects and the third copy is never built.
pub fn run_trial<R: Rng + ?Sized>(
    config: &ProtocolConfig,
    sources: &[SqueezerSpec; 3],
    noise: &NoiseSpec,
    rng: &mut R,
) -> Result<TrialOutcome> {
    config.validate()?;
    let pairs = SourcePairs::build(sources)?;
    run_trial_with_pairs(config, &pairs, noise, rng)
}

const BATCH_CHUNK: u32 = 2048;

/// Repeats `run_trial` with one independent random substream per trial
/// (stream index = trial index), collecting accepted outputs. Deterministic
/// for a given (seed, context, n_trials) regardless of worker count.
pub fn run_batch(
    config: &ProtocolConfig,
    sources: &[SqueezerSpec; 3],
    noise: &NoiseSpec,
    n_trials: u32,
    seed: u64,
    context: u32,
) -> Result<Distillate> {
    if n_trials == 0 {
        return Err(Error::invalid("run_batch requires n_trials >= 1"));
    }
    config.validate()?;
    let pairs = SourcePairs::build(sources)?;
    let chunks: Vec<(u32, u32)> = (0..n_trials)
        .step_by(BATCH_CHUNK as usize)
        .map(|start| (start, (start + BATCH_CHUNK).min(n_trials)))
        .collect();

    let per_chunk: Vec<Result<(Vec<GaussianState>, u64, u64)>> = chunks
        .par_iter()
        .map(|&(start, end)| {
            let mut kept = Vec::new();
            let mut accepts = 0u64;
            let mut stage1 = 0u64;
            for trial in start..end {
                let mut rng = substream(seed, PURPOSE_TRIAL, context, trial);
                let outcome = run_trial_with_pairs(config, &pairs, noise, &mut rng)?;
                if outcome.stage1_diff.abs() <= config.threshold_stage1 {
                    stage1 += 1;
                }
                if outcome.accepted {
                    accepts += 1;
                    if let Some(state) = outcome.output {
                        kept.push(state);
                    }
                }
            }
            Ok((kept, accepts, stage1))
        })
        .collect();

    let mut components = Vec::new();
    let mut accepts = 0u64;
    let mut stage1_accepts = 0u64;
    for r in per_chunk {
        let (kept, a, s1) = r?;
        components.extend(kept);
        accepts += a;
        stage1_accepts += s1;
    }
    Ok(Distillate {
        components,
        attempts: n_trials as u64,
        accepts,
        stage1_accepts,
        copies_per_attempt: config.mode.copies_per_attempt(),
    })
}

/// Counting-only variant used by threshold searches: identical trial
/// streams, no state collection.
pub fn run_batch_tally(
    config: &ProtocolConfig,
    sources: &[SqueezerSpec; 3],
    noise: &NoiseSpec,
    n_trials: u32,
    seed: u64,
    context: u32,
) -> Result<Distillate> {
    if n_trials == 0 {
        return Err(Error::invalid("run_batch requires n_trials >= 1"));
    }
    config.validate()?;
    let pairs = SourcePairs::build(sources)?;
    let chunks: Vec<(u32, u32)> = (0..n_trials)
        .step_by(BATCH_CHUNK as usize)
        .map(|start| (start, (start + BATCH_CHUNK).min(n_trials)))
        .collect();

    let tallies: Vec<Result<(u64, u64)>> = chunks
        .par_iter()
        .map(|&(start, end)| {
            let mut accepts = 0u64;
            let mut stage1 = 0u64;
            for trial in start..end {
                let mut rng = substream(seed, PURPOSE_TRIAL, context, trial);
                let outcome = run_trial_with_pairs(config, &pairs, noise, &mut rng)?;
                if outcome.stage1_diff.abs() <= config.threshold_stage1 {
                    stage1 += 1;
                }
                if outcome.accepted {
                    accepts += 1;
                }
            }
            Ok((accepts, stage1))
        })
        .collect();

    let mut accepts = 0u64;
    let mut stage1_accepts = 0u64;
    for t in tallies {
        let (a, s1) = t?;
        accepts += a;
        stage1_accepts += s1;
    }
    Ok(Distillate {
        components: Vec::new(),
        attempts: n_trials as u64,
        accepts,
        stage1_accepts,
        copies_per_attempt: config.mode.copies_per_attempt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use approx::assert_relative_eq;

    fn default_sources() -> [SqueezerSpec; 3] {
        [SqueezerSpec::default(); 3]
    }

    #[test]
    fn open_threshold_accepts_everything() {
        let cfg = ProtocolConfig::default(); // Q = inf, iterative
        let d = run_batch(
            &cfg,
            &default_sources(),
            &NoiseSpec::uniform(0.0),
            1000,
            7,
            0,
        )
        .unwrap();
        assert_eq!(d.accepts, 1000);
        assert_eq!(d.components.len(), 1000);
        assert_relative_eq!(d.yield_fraction(), 1.0 / 3.0, epsilon = 1e-12);

        let single = cfg.with_mode(ProtocolMode::SingleStage);
        let d = run_batch(
            &single,
            &default_sources(),
            &NoiseSpec::uniform(0.0),
            500,
            7,
            1,
        )
        .unwrap();
        assert_eq!(d.accepts, 500);
        assert_relative_eq!(d.yield_fraction(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn zero_threshold_accepts_nothing() {
        let cfg = ProtocolConfig::default().with_threshold(0.0);
        let d = run_batch_tally(
            &cfg,
            &default_sources(),
            &NoiseSpec::uniform(0.2),
            2000,
            3,
            0,
        )
        .unwrap();
        assert_eq!(d.accepts, 0);
    }

    #[test]
    fn outcome_bookkeeping() {
        let mut rng = substream(1, PURPOSE_TRIAL, 9, 0);
        let cfg = ProtocolConfig::default().with_threshold(0.3);
        let out = run_trial(&cfg, &default_sources(), &NoiseSpec::uniform(0.3), &mut rng).unwrap();
        assert_eq!(out.copies_consumed, 3);
        if out.accepted {
            assert!(out.stage1_diff.abs() <= 0.3);
            assert!(out.stage2_diff.unwrap().abs() <= 0.3);
            assert_eq!(out.output.as_ref().unwrap().n_modes(), 2);
        }
        if out.stage1_diff.abs() > 0.3 {
            assert!(out.stage2_diff.is_none());
            assert!(out.output.is_none());
        }

        let single = cfg.with_mode(ProtocolMode::SingleStage);
        let out = run_trial(&single, &default_sources(), &NoiseSpec::uniform(0.3), &mut rng)
            .unwrap();
        assert_eq!(out.copies_consumed, 2);
        assert!(out.stage2_diff.is_none());
    }

    #[test]
    fn batch_is_deterministic_and_partition_independent() {
        let cfg = ProtocolConfig::default().with_threshold(0.5);
        let a = run_batch(&cfg, &default_sources(), &NoiseSpec::uniform(0.3), 3000, 5, 2).unwrap();
        let b = run_batch(&cfg, &default_sources(), &NoiseSpec::uniform(0.3), 3000, 5, 2).unwrap();
        assert_eq!(a.accepts, b.accepts);
        assert_eq!(a.components.len(), b.components.len());
        for (x, y) in a.components.iter().zip(&b.components) {
            assert_eq!(x.mean(), y.mean());
            assert_eq!(x.cov(), y.cov());
        }
    }

    #[test]
    fn tally_matches_full_batch() {
        let cfg = ProtocolConfig::default().with_threshold(0.4);
        let a = run_batch(&cfg, &default_sources(), &NoiseSpec::uniform(0.3), 2000, 11, 4).unwrap();
        let b = run_batch_tally(&cfg, &default_sources(), &NoiseSpec::uniform(0.3), 2000, 11, 4)
            .unwrap();
        assert_eq!(a.accepts, b.accepts);
        assert_eq!(a.stage1_accepts, b.stage1_accepts);
    }

    #[test]
    fn acceptance_is_monotone_in_threshold_with_coupled_streams() {
        let sources = default_sources();
        let noise = NoiseSpec::uniform(0.4);
        let mut last = 0u64;
        for (i, q) in [0.1, 0.3, 0.6, 1.2, f64::INFINITY].iter().enumerate() {
            let cfg = ProtocolConfig::default().with_threshold(*q);
            let d = run_batch_tally(&cfg, &sources, &noise, 4000, 17, 6).unwrap();
            assert!(
                d.accepts >= last,
                "acceptance not monotone at step {i}: {} < {last}",
                d.accepts
            );
            last = d.accepts;
        }
    }

    #[test]
    fn visibility_hook_is_identity_at_one() {
        let pair = make_pair(&make_squeezed(&SqueezerSpec::default()).unwrap()).unwrap();
        let four = pair.tensor(&pair);
        let same = apply_stage_visibility(&four, 1.0).unwrap();
        assert_eq!(same.cov(), four.cov());
        let lossy = apply_stage_visibility(&four, 0.98).unwrap();
        assert!(lossy.cov()[(0, 0)] != four.cov()[(0, 0)]);
        lossy.check_physical(1e-10).unwrap();
    }

    #[test]
    fn visibility_matches_explicit_ancilla_route() {
        let v = 0.97f64;
        let pair = make_pair(&make_squeezed(&SqueezerSpec::default()).unwrap()).unwrap();
        let four = pair.tensor(&pair);
        let fast = apply_stage_visibility(&four, v).unwrap();

        let mut slow = four.clone();
        for mode in 0..4 {
            let n = slow.n_modes();
            let with_anc = slow.tensor(&GaussianState::vacuum(1).unwrap());
            let mixed = with_anc.beamsplitter(mode, n, v * v).unwrap();
            let keep: Vec<usize> = (0..n).collect();
            slow = mixed.keep_modes(&keep).unwrap();
        }
        assert!((fast.cov() - slow.cov()).amax() < 1e-13);
        assert!((fast.mean() - slow.mean()).amax() < 1e-13);
    }

    #[test]
    fn config_validation() {
        let mut cfg = ProtocolConfig::default();
        cfg.stage1_transmittance = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = ProtocolConfig::default();
        cfg.threshold_stage1 = -0.1;
        assert!(cfg.validate().is_err());
        let mut cfg = ProtocolConfig::default();
        cfg.visibility = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn threshold_serde_roundtrip() {
        let cfg = ProtocolConfig::default().with_threshold(f64::INFINITY);
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(text.contains("\"inf\""));
        let back: ProtocolConfig = serde_json::from_str(&text).unwrap();
        assert!(back.threshold_stage1.is_infinite());

        let finite: ProtocolConfig =
            serde_json::from_str(&serde_json::to_string(&cfg.with_threshold(0.25)).unwrap())
                .unwrap();
        assert_eq!(finite.threshold_stage1, 0.25);
    }
}
