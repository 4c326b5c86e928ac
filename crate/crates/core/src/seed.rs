//! Counter-based derivation of sub-seeds from one master seed.
//!
//! Each consumer draws from its own ChaCha stream of the master key, so adding
//! a consumer never perturbs the others.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const STREAM_TRAIN_DATA: u64 = 1;
pub const STREAM_TEST_DATA: u64 = 2;
pub const STREAM_INIT: u64 = 3;
pub const STREAM_SHUFFLE: u64 = 4;
pub const STREAM_SCALING_INIT: u64 = 5;
pub const STREAM_DISTILL_SHUFFLE: u64 = 6;

pub fn derive(master: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng.next_u64()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// All sub-seeds of a run, recorded in every artifact.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedLog {
    pub master: u64,
    pub train_data: u64,
    pub test_data: u64,
    pub init: u64,
    pub shuffle: u64,
    pub scaling_init: u64,
    pub distill_shuffle: u64,
}

impl SeedLog {
    pub fn new(master: u64) -> Self {
        SeedLog {
            master,
            train_data: derive(master, STREAM_TRAIN_DATA),
            test_data: derive(master, STREAM_TEST_DATA),
            init: derive(master, STREAM_INIT),
            shuffle: derive(master, STREAM_SHUFFLE),
            scaling_init: derive(master, STREAM_SCALING_INIT),
            distill_shuffle: derive(master, STREAM_DISTILL_SHUFFLE),
        }
    }
}
