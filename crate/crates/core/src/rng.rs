//! Random stream layout.
//!
//! Every trajectory draws from independent ChaCha8 streams keyed by
//! `(seed, job, purpose)`. The 256-bit ChaCha key holds the top-level seed
//! and the job id (replication, or grid point and replication packed by
//! [`job_id`]); the ChaCha stream selector holds the purpose. Arrivals,
//! potential services, tie-breaking and policy decisions therefore never
//! share random bits, and a replication can be regenerated in isolation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Counter-based generator used for all simulation randomness.
pub type Stream = ChaCha8Rng;

/// What a stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    /// The arrival process `A(t)`.
    Arrivals,
    /// Potential services `S(t)`.
    Services,
    /// Tie-breaking variables `V_k` of the sorting function.
    Sorting,
    /// Randomization variables `W_k` of the decision function.
    Decisions,
}

impl Purpose {
    fn selector(self) -> u64 {
        match self {
            Purpose::Arrivals => 1,
            Purpose::Services => 2,
            Purpose::Sorting => 3,
            Purpose::Decisions => 4,
        }
    }
}

const DOMAIN_TAG: &[u8; 8] = b"loadlab1";

/// Opens the stream for `(seed, job, purpose)`.
pub fn stream(seed: u64, job: u64, purpose: Purpose) -> Stream {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&job.to_le_bytes());
    key[16..24].copy_from_slice(DOMAIN_TAG);
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(purpose.selector());
    rng
}

/// Packs a grid-point index and a replication index into one job id.
pub fn job_id(grid_point: u32, replication: u32) -> u64 {
    (u64::from(grid_point) << 32) | u64::from(replication)
}

/// The four streams a single trajectory consumes.
#[derive(Debug, Clone)]
pub struct TrajectoryStreams {
    pub arrivals: Stream,
    pub services: Stream,
    pub sorting: Stream,
    pub decisions: Stream,
}

impl TrajectoryStreams {
    pub fn new(seed: u64, job: u64) -> Self {
        Self {
            arrivals: stream(seed, job, Purpose::Arrivals),
            services: stream(seed, job, Purpose::Services),
            sorting: stream(seed, job, Purpose::Sorting),
            decisions: stream(seed, job, Purpose::Decisions),
        }
    }
}
