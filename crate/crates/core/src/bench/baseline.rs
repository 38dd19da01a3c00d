//! The comparison parser: one strict JSON object, standard grammar, no
//! repairs. Surrounding prose, raw control characters, unescaped quotes and
//! missing braces are all hard failures, which is exactly what a
//! structured-output mode without recovery does.

use std::collections::BTreeMap;

use crate::routing::{ActionKind, LIGAND_SLOT, NAME_SLOT, TARGET_SLOT};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BaselineDirective {
    pub action: ActionKind,
    pub params: BTreeMap<String, String>,
}

pub fn parse_strict_json(raw: &str) -> Result<BaselineDirective, String> {
    let value: serde_json::Value = serde_json::from_str(raw).map_err(|e| e.to_string())?;
    let object = value.as_object().ok_or("top level is not an object")?;
    let action = object
        .get("action")
        .and_then(|v| v.as_str())
        .ok_or("missing string field `action`")?;
    let action = ActionKind::BUILTINS
        .into_iter()
        .find(|kind| kind.keyword() == action)
        .ok_or_else(|| format!("unknown action `{action}`"))?;
    let mut params = BTreeMap::new();
    for slot in [TARGET_SLOT, LIGAND_SLOT, NAME_SLOT] {
        if let Some(text) = object.get(slot).and_then(|v| v.as_str()) {
            params.insert(slot.to_string(), text.to_string());
        }
    }
    Ok(BaselineDirective { action, params })
}
