//! Personalized-nudge trial engine: suggestion retrieval, a three-stage
//! nudge agent, a three-arm trial simulator and the effect analysis stack.

pub mod agent;
pub mod archetype;
pub mod hte;
pub mod knowledge;
pub mod pipeline;
pub mod predictors;
pub mod profile;
pub mod rng;
pub mod sim;
pub mod stats;
pub mod text;
pub mod trees;
pub mod types;

pub use agent::{NudgeAgent, NudgeBundle, TemplateBackend};
pub use knowledge::{load_library, Library, SuggestionRecord};
pub use profile::ParticipantProfile;
pub use types::{Arm, Resource};
