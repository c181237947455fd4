//! Pass@K policy-gradient estimators for binary rewards.
//!
//! The crate covers the empirical statistics of a sampled group
//! ([`reward_stats`]), the advantage scores of every estimator family
//! ([`advantage`]), surrogate rewards and the map from surrogate to scores
//! ([`surrogates`]), an exactly differentiable softmax policy
//! ([`tabular`]), a training loop ([`trainer`]) and brute-force verifiers
//! ([`oracle`]). The `passk` binary wraps them in [`cli`].

pub mod advantage;
pub mod cli;
pub mod error;
pub mod oracle;
pub mod quadrature;
pub mod reward_stats;
pub mod surrogates;
pub mod tabular;
pub mod trainer;

pub use advantage::{
    advantage_pair, effective_weights, omega_tilde, per_response_advantages, AdvantagePair, AlgorithmId, AlgorithmKind,
    EffectiveWeights, Shaped,
};
pub use error::{Error, Result};
pub use reward_stats::{fail_loo_weights, pass_k_hat, summarize, GroupStats, PassKStats, RewardBatch};
pub use surrogates::{
    forward_engineer, incomplete_beta, pass_k_of_rho, rho_of_pass_k, surrogate_derivative, surrogate_eval,
    IncBetaParams, SurrogateId, SurrogateKind,
};
pub use tabular::{GradientVec, ProblemSpec, RngStream, TabularPolicy};
pub use trainer::{assemble_gradient, train, GradientMode, MetricsRow, TrainConfig, TrainSummary};
