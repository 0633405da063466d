//! Sofic approximations, derived finite models and pressure estimators for
//! nearest-neighbour Gibbs measures on ℤ^d and free groups.

pub mod cayley;
pub mod chain;
pub mod cli;
pub mod derived;
pub mod error;
pub mod field;
pub mod gibbs;
pub mod kieffer;
pub mod limits;
pub mod model;
pub mod randompast;
pub mod shift;
pub mod sofic;

pub use error::{Error, Result};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent generator for task `stream` under a run seed; results do not
/// depend on how tasks are scheduled.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
