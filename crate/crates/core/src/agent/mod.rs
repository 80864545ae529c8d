//! Three-stage nudge generation and per-arm bundle assembly.

pub mod backend;
pub mod bundle;
pub mod feedback;
pub mod remote;
pub mod safety;
pub mod scenario;
pub mod select;
pub mod template;

use crate::knowledge::Library;
use crate::profile::ParticipantProfile;
use crate::rng;
use crate::types::{round_start_day, Arm, Resource, DAYS_PER_ROUND, ROUNDS};
use std::collections::BTreeSet;
use thiserror::Error;

pub use backend::{BackendError, Fields, GenerationBackend};
pub use bundle::{assemble_bundle, check_invariants, render_text, NudgeBundle, PersonalContent, ReportFormat};
pub use feedback::{stage1_usage_feedback, DayWindow, FeedbackPair, Trend, UsageFeedback};
pub use remote::{RemoteBackend, RemoteConfig};
pub use safety::{safety_screen, SafetyFlag, SafetyScreen, ScreenContext};
pub use scenario::{stage3_quantify, AnalogyTable, QuantScenario};
pub use select::{stage2_select, Candidate, CandidatePool, Origin, Stage2Output};
pub use template::TemplateBackend;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("participant {participant}, {resource}: insufficient data ({message})")]
    InsufficientData { participant: String, resource: Resource, message: String },
    #[error("backend error during {task}: {source}")]
    Backend {
        task: String,
        #[source]
        source: BackendError,
    },
    #[error("{resource} candidate pool underfull: {have} of {need}")]
    PoolUnderfull { resource: Resource, have: usize, need: usize },
    #[error("bundle assembly: {0}")]
    Assembly(String),
    #[error("participant {participant}: every {resource} candidate was withheld by screening")]
    ScreeningExhausted { participant: String, resource: Resource },
    #[error("round {0} outside 1..={ROUNDS}")]
    Round(u32),
}

/// Report window for round `round`: the seven days before its start.
pub fn report_window(round: u32) -> DayWindow {
    let end = round_start_day(round);
    DayWindow { start: end - DAYS_PER_ROUND, end }
}

/// Output of one participant-round.
#[derive(Debug, Clone, PartialEq)]
pub struct NudgeOutput {
    pub bundle: NudgeBundle,
    pub flags: Vec<SafetyFlag>,
}

/// The full pipeline with its fixed resources.
pub struct NudgeAgent<B> {
    pub library: Library,
    pub analogies: AnalogyTable,
    pub backend: B,
    pub screen: SafetyScreen,
}

impl<B: GenerationBackend> NudgeAgent<B> {
    pub fn new(library: Library, backend: B) -> Self {
        NudgeAgent { library, analogies: AnalogyTable::default(), backend, screen: SafetyScreen::default() }
    }

    /// Stage 1 over the round's report window, widening to all prior
    /// history when the window has no observations.
    pub fn feedback(
        &self,
        profile: &ParticipantProfile,
        peers: &[&ParticipantProfile],
        round: u32,
    ) -> Result<FeedbackPair, AgentError> {
        let window = report_window(round);
        stage1_usage_feedback(profile, peers, window).or_else(|e| match e {
            AgentError::InsufficientData { .. } => {
                stage1_usage_feedback(profile, peers, DayWindow { start: 0, end: window.end })
            }
            other => Err(other),
        })
    }

    /// Generate the round-`round` bundle. `profile` holds everything up to
    /// the end of round `round - 1`, including that week's consumption.
    pub fn generate(
        &self,
        profile: &ParticipantProfile,
        peers: &[&ParticipantProfile],
        arm: Arm,
        round: u32,
        seed: u64,
    ) -> Result<NudgeOutput, AgentError> {
        if round == 0 || round > ROUNDS {
            return Err(AgentError::Round(round));
        }
        let feedback = self.feedback(profile, peers, round)?;
        if arm != Arm::T2 {
            let bundle = assemble_bundle(&profile.participant_id, round, arm, feedback, PersonalContent::default())?;
            return Ok(NudgeOutput { bundle, flags: Vec::new() });
        }
        let seed = rng::derive_indexed(seed, &format!("nudge/{}", profile.participant_id), round as u64);
        let s2 = stage2_select(profile, &feedback, &self.library, &self.backend, seed)?;
        let scenarios = s2.selected.iter().map(|c| stage3_quantify(c, profile, &self.analogies)).collect();
        let content = PersonalContent { suggestions: s2.selected, scenarios, new_summary: Some(s2.new_summary) };
        let bundle = assemble_bundle(&profile.participant_id, round, arm, feedback, content)?;
        let excluded: BTreeSet<String> =
            profile.delivered_ids(round - 1).into_iter().map(str::to_string).collect();
        let ctx = ScreenContext { pool: &s2.pool, excluded: &excluded, profile, analogies: &self.analogies };
        let (bundle, flags) = safety_screen(&self.screen, &bundle, &ctx)?;
        check_invariants(&bundle).map_err(AgentError::Assembly)?;
        Ok(NudgeOutput { bundle, flags })
    }
}
