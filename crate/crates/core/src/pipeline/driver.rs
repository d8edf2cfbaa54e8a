use serde::{Deserialize, Serialize};

use super::*;

/// Runs automatic layers until the session waits for a human decision or
/// reaches a terminal stage.
pub fn advance(p: &Pipeline, s: &mut PipelineSession) -> Result<(), PipelineError> {
    loop {
        let cfg = &s.config;
        match s.stage {
            Stage::Created if cfg.single_prompt_baseline => {
                p.run_single_prompt_baseline(s)?;
            }
            Stage::Created if cfg.enable_screening => {
                p.screen_request(s)?;
            }
            Stage::Created | Stage::Screening => {
                p.build_skeleton(s)?;
            }
            Stage::AwaitScreeningDecision if s.screening_resolved => {
                p.build_skeleton(s)?;
            }
            Stage::SkeletonBuilt if cfg.feedback_active() => {
                p.summarize(s)?;
            }
            Stage::SkeletonBuilt => {
                p.fill_details(s)?;
            }
            Stage::AwaitFeedback if s.feedback_approved => {
                p.fill_details(s)?;
            }
            Stage::DetailsFilled => {
                p.fill_parameters(s)?;
            }
            Stage::ParametersFilled => {
                p.generate_questions(s)?;
            }
            _ => return Ok(()),
        }
    }
}

/// Decisions for the human checkpoints of an unattended run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct Script {
    /// Replacement request when screening raises follow-ups; `None` proceeds unchanged.
    pub screening_rewrite: Option<String>,
    /// Feedback decisions in order; once exhausted every summary is approved.
    pub feedback: Vec<FeedbackDecision>,
    pub answers: Vec<Answer>,
}

/// Drives a session to a terminal stage, answering checkpoints from `script`.
///
/// Stops early, without error, at `AwaitAnswers` when the script holds no
/// answer for the pending questions. A scripted edit refused with
/// `LoopLimitReached` is replaced by an approval.
pub fn run_unattended(p: &Pipeline, s: &mut PipelineSession, script: &Script) -> Result<(), PipelineError> {
    let mut feedback = script.feedback.iter();
    loop {
        advance(p, s)?;
        match s.stage {
            Stage::AwaitScreeningDecision => {
                let decision = match &script.screening_rewrite {
                    Some(text) => ScreeningDecision::Rewrite(text.clone()),
                    None => ScreeningDecision::Proceed,
                };
                p.resolve_screening(s, decision)?;
            }
            Stage::AwaitFeedback => {
                let decision = feedback.next().cloned().unwrap_or(FeedbackDecision::Approve);
                if p.apply_feedback(s, decision)? == FeedbackOutcome::LoopLimitReached {
                    p.apply_feedback(s, FeedbackDecision::Approve)?;
                }
            }
            Stage::AwaitAnswers => {
                let applicable: Vec<Answer> = script
                    .answers
                    .iter()
                    .filter(|a| s.pending_questions.iter().any(|q| q.step_id == a.step_id && q.parameter == a.parameter))
                    .cloned()
                    .collect();
                if applicable.is_empty() {
                    return Ok(());
                }
                p.apply_answers(s, &applicable)?;
                if s.stage == Stage::AwaitAnswers {
                    return Ok(());
                }
            }
            _ => return Ok(()),
        }
    }
}
