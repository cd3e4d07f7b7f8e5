use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid permutation {0}")]
    InvalidPermutation(String),

    #[error("n = {n} exceeds the enumeration limit of {limit} servers")]
    Capacity { n: usize, limit: usize },

    #[error("no lattice law on [0, {a_max_total}] has mean {mean} and variance {variance}")]
    InfeasibleMoments {
        mean: f64,
        variance: f64,
        a_max_total: u64,
    },

    #[error("queue {server} exceeded the guard of {guard} jobs at slot {slot} (system unstable?)")]
    QueueOverflow {
        server: usize,
        slot: u64,
        guard: u64,
    },

    #[error("cycle phase {phase} outside [0, {t_cycle})")]
    PhaseOutOfRange { phase: usize, t_cycle: usize },

    #[error("invalid f-table: {0}")]
    InvalidFTable(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("strict majorization fails (delta* = {delta_star}); SSC constants are undefined")]
    NotStrictlyMajorized { delta_star: f64 },

    #[error("equality checks are meaningless on a Monte-Carlo f-table")]
    NoisyTable,

    #[error("need at least {need} samples, got {got}")]
    InsufficientSamples { got: u64, need: u64 },

    #[error("SSC check needs >= 3 epsilons spanning a factor >= 4 (got {count} spanning {span})")]
    InsufficientSpan { count: usize, span: f64 },

    #[error("at eps = {eps}: {source}")]
    AtEpsilon {
        eps: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("f-table parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}
