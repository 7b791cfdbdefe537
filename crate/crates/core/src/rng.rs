//! Counter-based random substreams.
//!
//! Replicate `i` of a run with master seed `s` always draws from the ChaCha8
//! stream `(s, i)`, so results do not depend on how replicates are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

pub fn substream(master_seed: u64, index: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Exponential variate with the given rate; `f64::INFINITY` for rate 0.
pub fn exp_time<R: rand::Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    if rate <= 0.0 {
        return f64::INFINITY;
    }
    let e: f64 = rng.sample(rand_distr::Exp1);
    e / rate
}
