//! Synthetic responder populations with known ground truth.
//!
//! Worlds fix per-item correctness probabilities and a confidence process.
//! The same responder backs offline log generation and the mock
//! chat-completions endpoint, so pipelines run unmodified against either.

mod analytic;
mod mock;
mod respond;
mod states;
mod world;

pub use analytic::{analytic_auroc, binary_auroc, binormal_auroc};
pub use mock::{mock_endpoint, MockHandle, MockOptions, MockStats};
pub use respond::{respond, simulate_responses, ResponderParams, ResponseFormat, SimResponse, Simulated};
pub use states::simulate_hidden_states;
pub use world::{
    generate_world, ConfidenceProcess, DifficultyMixture, GradedLink, MixtureComponent, SyntheticWorld,
    WorldItem,
};
