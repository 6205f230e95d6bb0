//! Seed splitting.
//!
//! Every random stream in the toolkit is a ChaCha8 stream keyed by a 64-bit
//! seed and a stream id. A master seed is expanded into child seeds with
//! [`derive_seed`], which chains SplitMix64 finalizers over a tag path, so
//! that e.g. Monte-Carlo sample `k` of chain row `r` always uses
//! `derive_seed(master, &[ROW_TAG, r, k])` regardless of how work is scheduled.
//!
//! Within one simulated trajectory, [`SimRng`] owns one stream per agent
//! (stream id = agent index) and one shared stream (stream id `u64::MAX`).
//! Agent `i`'s stream drives, in order per step, its tremble coin, its action
//! draw and its measurement noise. The shared stream is only used for draws
//! that are not owned by a single agent, such as picking which agent trembles.
//! Adding agents therefore never changes the draws of existing agents.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SHARED_STREAM: u64 = u64::MAX;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `master` and a tag path.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &tag| splitmix64(acc ^ splitmix64(tag)))
}

/// The random streams of one trajectory.
#[derive(Debug, Clone)]
pub struct SimRng {
    agents: Vec<ChaCha8Rng>,
    shared: ChaCha8Rng,
}

impl SimRng {
    pub fn new(seed: u64, num_agents: usize) -> Self {
        let stream = |id: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(id);
            rng
        };
        SimRng {
            agents: (0..num_agents as u64).map(stream).collect(),
            shared: stream(SHARED_STREAM),
        }
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn agent(&mut self, i: usize) -> &mut ChaCha8Rng {
        &mut self.agents[i]
    }

    pub fn shared(&mut self) -> &mut ChaCha8Rng {
        &mut self.shared
    }
}
