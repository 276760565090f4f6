//! Confidence margins between chosen and rejected segments.

use std::collections::BTreeMap;

use mazenav_core::metrics::{render_csv, render_text};
use mazenav_core::parser::parse_choice;
use mazenav_core::sdpo::{ErrorKind, PreferencePair};
use mazenav_core::Letter;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::client::ChatClient;
use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginMode {
    /// Sequence log-probability of chosen minus rejected.
    LogProb,
    /// +1 when the model picks the chosen segment, -1 otherwise.
    ForcedChoice,
}

/// Question wrapped around the two candidate segments.
pub fn forced_choice_prompt(pair: &PreferencePair, a: &str, b: &str) -> String {
    format!(
        "{}\nTwo candidate continuations of the reasoning above follow.\n\nCandidate A:\n{a}\nCandidate B:\n{b}\nWhich candidate continues the navigation correctly? Answer with A or B.\n",
        pair.prompt
    )
}

/// Margin for one pair. Log-probabilities are used when the endpoint
/// serves them; otherwise the segments are shown in random A/B order and
/// the pick is scored ±1. An unparseable or missing pick counts as -1.
pub async fn confidence_margin(
    client: &ChatClient,
    pair: &PreferencePair,
    rng: &mut impl Rng,
) -> Result<(f64, MarginMode), HarnessError> {
    let cfg = client.config();
    if cfg.logprobs {
        let c = client
            .continuation_logprob(&pair.prompt, &pair.chosen)
            .await;
        let r = client
            .continuation_logprob(&pair.prompt, &pair.rejected)
            .await;
        match (c, r) {
            (Ok(c), Ok(r)) => return Ok((c - r, MarginMode::LogProb)),
            (Err(e), _) | (_, Err(e)) if !cfg.forced_choice => {
                return Err(HarnessError::Unsupported(e.to_string()))
            }
            (Err(e), _) | (_, Err(e)) => {
                tracing::warn!(error = %e, "log-probabilities unavailable, using forced choice")
            }
        }
    }
    if !cfg.forced_choice {
        return Err(HarnessError::Unsupported(
            "endpoint offers neither log-probabilities nor forced choice".into(),
        ));
    }
    let chosen_first = rng.gen_bool(0.5);
    let (a, b) = if chosen_first {
        (&pair.chosen, &pair.rejected)
    } else {
        (&pair.rejected, &pair.chosen)
    };
    let outcome = client.chat(&forced_choice_prompt(pair, a, b)).await?;
    let want = if chosen_first { Letter::A } else { Letter::B };
    let pick = outcome.text.as_deref().and_then(|t| parse_choice(t).ok());
    Ok((
        if pick == Some(want) { 1.0 } else { -1.0 },
        MarginMode::ForcedChoice,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginRow {
    pub model: String,
    pub instance_id: String,
    pub kind: ErrorKind,
    pub mode: MarginMode,
    pub margin: f64,
}

/// Mean margin per error kind (rows) and model (columns). Pairs without a
/// kind label are not tabulated.
pub fn margins_table(rows: &[MarginRow]) -> (String, String) {
    let mut cells: BTreeMap<(ErrorKind, &str), Vec<f64>> = BTreeMap::new();
    let mut models: Vec<&str> = rows.iter().map(|r| r.model.as_str()).collect();
    models.sort();
    models.dedup();
    for r in rows {
        cells
            .entry((r.kind, r.model.as_str()))
            .or_default()
            .push(r.margin);
    }
    let mut header = vec!["Error Kind"];
    header.extend(models.iter().copied());
    let body: Vec<Vec<String>> = ErrorKind::ALL
        .iter()
        .filter(|k| models.iter().any(|m| cells.contains_key(&(**k, *m))))
        .map(|k| {
            let mut row = vec![k.as_str().to_string()];
            for m in &models {
                row.push(cells.get(&(*k, *m)).map_or(String::new(), |v| {
                    let mut v = v.clone();
                    v.sort_by(f64::total_cmp);
                    format!("{:.4}", v.iter().sum::<f64>() / v.len() as f64)
                }));
            }
            row
        })
        .collect();
    (render_csv(&header, &body), render_text(&header, &body))
}
