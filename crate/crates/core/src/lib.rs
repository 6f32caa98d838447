//! Exact inference, simulation and meta-training for small discrete causal
//! sequence models, contrasting agents that condition on their own actions
//! with agents that treat them as interventions.

pub mod distribution;
pub mod engine;
pub mod error;
pub mod library;
pub mod meta_trainer;
pub mod oracle;
pub mod policies;
pub mod process;
pub mod rng;
pub mod rounds;
pub mod simulator;
pub mod spec_format;

pub use distribution::Distribution;
pub use engine::{apply_interventions, joint_probability, query, ENUMERATION_CAP};
pub use error::{Error, Result};
pub use library::{all_builtins, builtin, BUILTIN_NAMES};
pub use meta_trainer::{run_training, HistoryKey, LearnerTable, TrainingConfig, TrainingVariant};
pub use policies::{
    action_distribution_conditional, action_distribution_interventional, posterior_recursive, thompson_sample,
    TaggedHistory,
};
pub use process::{act, cond, CausalProcess, EvidenceItem, Mechanism, Mode, ProcessBuilder, Role, VariableSpec};
pub use simulator::{offline_demo, run_episode, run_experiment, EpisodeRecord, ExperimentSummary, Policy, PolicyKind};
pub use spec_format::{parse_process_spec, serialize_process, SpecError};
