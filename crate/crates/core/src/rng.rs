//! Deterministic random-stream layout. Every random decision in the crate
//! draws from a ChaCha8 stream addressed by (master seed, purpose, context,
//! index), so results do not depend on worker count or execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const PURPOSE_TRIAL: u8 = 1;
pub const PURPOSE_TOMO: u8 = 2;
pub const PURPOSE_CALIB: u8 = 3;
pub const PURPOSE_BOOTSTRAP: u8 = 4;
pub const PURPOSE_INPUT_ENSEMBLE: u8 = 5;
pub const PURPOSE_MOMENTS: u8 = 6;

/// Builds the RNG for one work item. `context` distinguishes sub-experiments
/// (protocol mode, sweep point, ...) and must fit in 24 bits; `index` is the
/// per-item counter (trial number, slice number, resample number).
pub fn substream(seed: u64, purpose: u8, context: u32, index: u32) -> ChaCha8Rng {
    debug_assert!(context < (1 << 24), "context must fit in 24 bits");
    let stream = ((purpose as u64) << 56) | ((context as u64 & 0xff_ffff) << 32) | index as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
