use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::gateway::ViewportScene;
use crate::routing::{ActionKind, DirectiveEnvelope, ParseTrack};
use crate::sandbox::{ArtifactKind, ArtifactOrigin};

/// One streamed state signal. Serialized as a JSON object whose `type`
/// field names the variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerEvent {
    TokenDelta {
        text: String,
    },
    DirectiveParsed {
        action: ActionKind,
        thought: String,
        params: BTreeMap<String, String>,
        parse_track: ParseTrack,
    },
    ArtifactReady {
        artifact_id: String,
        kind: ArtifactKind,
        origin: ArtifactOrigin,
    },
    ViewportUpdate {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        artifact_id: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scene: Option<ViewportScene>,
    },
    TurnError {
        category: String,
        message: String,
    },
    TurnDone {
        reply: String,
    },
}

impl ServerEvent {
    pub fn type_name(&self) -> &'static str {
        match self {
            ServerEvent::TokenDelta { .. } => "token_delta",
            ServerEvent::DirectiveParsed { .. } => "directive_parsed",
            ServerEvent::ArtifactReady { .. } => "artifact_ready",
            ServerEvent::ViewportUpdate { .. } => "viewport_update",
            ServerEvent::TurnError { .. } => "turn_error",
            ServerEvent::TurnDone { .. } => "turn_done",
        }
    }

    pub fn directive(envelope: &DirectiveEnvelope) -> Self {
        ServerEvent::DirectiveParsed {
            action: envelope.action.clone(),
            thought: envelope.thought.clone(),
            params: envelope.params.iter().map(|(k, v)| (k.clone(), v.value.clone())).collect(),
            parse_track: envelope.parse_track,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("events serialize")
    }
}

/// Checks one turn against
/// `token_delta* (directive_parsed (artifact_ready|viewport_update)*)? turn_error? turn_done`.
pub fn check_turn_grammar(events: &[ServerEvent]) -> Result<(), String> {
    #[derive(PartialEq, Clone, Copy, Debug)]
    enum State {
        Deltas,
        Directive,
        Error,
        Done,
    }
    let mut state = State::Deltas;
    for (i, event) in events.iter().enumerate() {
        let next = match (state, event) {
            (State::Deltas, ServerEvent::TokenDelta { .. }) => State::Deltas,
            (State::Deltas, ServerEvent::DirectiveParsed { .. }) => State::Directive,
            (State::Directive, ServerEvent::ArtifactReady { .. } | ServerEvent::ViewportUpdate { .. }) => State::Directive,
            (State::Deltas | State::Directive, ServerEvent::TurnError { .. }) => State::Error,
            (State::Deltas | State::Directive | State::Error, ServerEvent::TurnDone { .. }) => State::Done,
            (s, e) => return Err(format!("event {i} ({}) not allowed after {s:?}", e.type_name())),
        };
        state = next;
    }
    if state == State::Done {
        Ok(())
    } else {
        Err("turn does not end with turn_done".into())
    }
}

/// Splits a multi-turn log at each `turn_done` and checks every turn.
pub fn check_log_grammar(events: &[ServerEvent]) -> Result<usize, String> {
    let mut turns = 0;
    let mut start = 0;
    for (i, event) in events.iter().enumerate() {
        if matches!(event, ServerEvent::TurnDone { .. }) {
            check_turn_grammar(&events[start..=i]).map_err(|e| format!("turn {turns}: {e}"))?;
            turns += 1;
            start = i + 1;
        }
    }
    if start != events.len() {
        return Err(format!("turn {turns}: trailing events without turn_done"));
    }
    Ok(turns)
}
