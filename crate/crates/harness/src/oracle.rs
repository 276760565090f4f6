//! Responders for the stub endpoint that know the ground truth.

use std::collections::HashMap;
use std::sync::Arc;

use mazenav_core::sdpo::{emit_sft, PreferencePair};
use mazenav_core::{PromptRenderer, Style, TaskInstance};

use crate::margins::forced_choice_prompt;
use crate::stub::Responder;
use crate::HarnessError;

/// Answers every rendered prompt of `instances` with its ground-truth
/// completion. Unknown prompts get an empty reply.
pub fn oracle_responder(
    instances: &[TaskInstance],
    styles: &[Style],
    renderer: &PromptRenderer,
) -> Result<Responder, HarnessError> {
    let mut table = HashMap::new();
    for inst in instances {
        let answer = emit_sft(inst, renderer)
            .map_err(|e| HarnessError::Config(e.to_string()))?
            .completion;
        for &style in styles {
            table.insert(renderer.render(inst, style)?, answer.clone());
        }
    }
    Ok(Arc::new(move |prompt: &str| {
        table.get(prompt).cloned().unwrap_or_default()
    }))
}

/// Picks the chosen segment in forced-choice prompts built from `pairs`.
pub fn forced_choice_oracle(pairs: &[PreferencePair]) -> Responder {
    let mut table = HashMap::new();
    for p in pairs {
        table.insert(
            forced_choice_prompt(p, &p.chosen, &p.rejected),
            "Answer: A".to_string(),
        );
        table.insert(
            forced_choice_prompt(p, &p.rejected, &p.chosen),
            "Answer: B".to_string(),
        );
    }
    Arc::new(move |prompt: &str| table.get(prompt).cloned().unwrap_or_default())
}
