//! Skill-file front-matter.
//!
//! ```text
//! #-- bloclaw-manifest
//! # name: dna_gc_content
//! # description: GC fraction of a DNA string
//! # action_keyword: DNA_GC_CONTENT
//! # slots: target=FREE_TEXT
//! # execution_kind: worker_script
//! # version: 1
//! # created_at: 2026-10-18T09:30:00.123456789+00:00
//! #-- end-manifest
//! <worker source>
//! ```
//!
//! Values are single-line; backslash, newline and carriage return are escaped
//! as `\\`, `\n` and `\r`.

use std::fmt;
use std::path::PathBuf;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::routing::{SlotSpec, TokenClass};

pub const MANIFEST_OPEN: &str = "#-- bloclaw-manifest";
pub const MANIFEST_CLOSE: &str = "#-- end-manifest";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionKind {
    BuiltinGateway,
    WorkerScript,
}

impl ExecutionKind {
    fn as_str(self) -> &'static str {
        match self {
            ExecutionKind::BuiltinGateway => "builtin_gateway",
            ExecutionKind::WorkerScript => "worker_script",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolManifest {
    pub name: String,
    pub description: String,
    pub action_keyword: String,
    pub slots: Vec<SlotSpec>,
    pub execution_kind: ExecutionKind,
    pub script_path: Option<PathBuf>,
    pub version: u32,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ManifestError {
    #[error("missing `{MANIFEST_OPEN}` header line")]
    MissingHeader,
    #[error("manifest block is not terminated by `{MANIFEST_CLOSE}`")]
    Unterminated,
    #[error("malformed manifest line {0:?}")]
    MalformedLine(String),
    #[error("manifest field `{0}` is missing")]
    MissingField(&'static str),
    #[error("manifest field `{field}` has invalid value {value:?}")]
    InvalidValue { field: &'static str, value: String },
}

/// A persisted skill: manifest front-matter plus the worker-runtime body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkillScript {
    pub manifest: ToolManifest,
    pub body: String,
}

impl SkillScript {
    pub fn render(&self) -> String {
        let m = &self.manifest;
        let slots = m
            .slots
            .iter()
            .map(|s| format!("{}={}", s.name, s.class))
            .collect::<Vec<_>>()
            .join(",");
        let mut out = String::new();
        out.push_str(MANIFEST_OPEN);
        out.push('\n');
        for (key, value) in [
            ("name", m.name.clone()),
            ("description", escape(&m.description)),
            ("action_keyword", m.action_keyword.clone()),
            ("slots", slots),
            ("execution_kind", m.execution_kind.as_str().to_string()),
            ("version", m.version.to_string()),
            ("created_at", m.created_at.to_rfc3339_opts(SecondsFormat::AutoSi, false)),
        ] {
            out.push_str(&format!("# {key}: {value}\n"));
        }
        out.push_str(MANIFEST_CLOSE);
        out.push('\n');
        out.push_str(&self.body);
        out
    }

    /// Parses a skill file. `script_path` is not part of the front-matter;
    /// the caller fills it from the file location.
    pub fn parse(text: &str) -> Result<SkillScript, ManifestError> {
        let mut lines = text.split_inclusive('\n');
        let first = lines.next().ok_or(ManifestError::MissingHeader)?;
        if first.trim_end() != MANIFEST_OPEN {
            return Err(ManifestError::MissingHeader);
        }
        let mut consumed = first.len();
        let mut fields: Vec<(String, String)> = Vec::new();
        let mut closed = false;
        for line in lines {
            consumed += line.len();
            let trimmed = line.trim_end_matches(['\n', '\r']);
            if trimmed == MANIFEST_CLOSE {
                closed = true;
                break;
            }
            let entry = trimmed
                .strip_prefix("# ")
                .and_then(|kv| kv.split_once(": ").or_else(|| kv.strip_suffix(':').map(|k| (k, ""))))
                .ok_or_else(|| ManifestError::MalformedLine(trimmed.to_string()))?;
            fields.push((entry.0.trim().to_string(), entry.1.to_string()));
        }
        if !closed {
            return Err(ManifestError::Unterminated);
        }
        let get = |key: &'static str| {
            fields
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
                .ok_or(ManifestError::MissingField(key))
        };
        let invalid = |field: &'static str, value: &str| ManifestError::InvalidValue { field, value: value.to_string() };

        let slots_raw = get("slots")?;
        let mut slots = Vec::new();
        for part in slots_raw.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (name, class) = part.split_once('=').ok_or_else(|| invalid("slots", slots_raw))?;
            let class: TokenClass = class.parse().map_err(|_| invalid("slots", slots_raw))?;
            slots.push(SlotSpec::new(name.trim(), class));
        }
        let execution_kind = match get("execution_kind")? {
            "builtin_gateway" => ExecutionKind::BuiltinGateway,
            "worker_script" => ExecutionKind::WorkerScript,
            other => return Err(invalid("execution_kind", other)),
        };
        let version_raw = get("version")?;
        let version = version_raw.parse().map_err(|_| invalid("version", version_raw))?;
        let created_raw = get("created_at")?;
        let created_at = DateTime::parse_from_rfc3339(created_raw)
            .map_err(|_| invalid("created_at", created_raw))?
            .with_timezone(&Utc);
        let manifest = ToolManifest {
            name: get("name")?.to_string(),
            description: unescape(get("description")?),
            action_keyword: get("action_keyword")?.to_string(),
            slots,
            execution_kind,
            script_path: None,
            version,
            created_at,
        };
        Ok(SkillScript { manifest, body: text[consumed..].to_string() })
    }
}

fn escape(value: &str) -> String {
    value.replace('\\', "\\\\").replace('\n', "\\n").replace('\r', "\\r")
}

fn unescape(value: &str) -> String {
    let mut out = String::with_capacity(value.len());
    let mut chars = value.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some(other) => out.push(other),
            None => out.push('\\'),
        }
    }
    out
}

impl fmt::Display for ToolManifest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} v{} ({})", self.name, self.version, self.action_keyword)
    }
}
