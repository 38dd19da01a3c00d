//! Mounted-file classification and token-budgeted digests.
//!
//! Every digest starts with a `file:` line naming the file and its class and
//! is capped at [`IntakeConfig::per_file_cap`] estimated tokens. PDB files
//! contribute only a summary; their coordinates stream to the viewport.

pub mod pdb;
pub mod tabular;

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::sandbox::{ArtifactKind, ProbeCall, Sandbox};
use crate::tokens;
pub use pdb::PdbSummary;
pub use tabular::{ColumnType, TablePreview};

pub const SUPPORTED_EXTENSIONS: [&str; 6] = ["pdf", "csv", "tsv", "xlsx", "pdb", "txt"];
const UPLOAD_DIR: &str = "uploads";
const SNIFF_BYTES: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MediaClass {
    PdfDocument,
    Tabular,
    StructurePdb,
    PlainText,
}

impl MediaClass {
    pub fn as_str(self) -> &'static str {
        match self {
            MediaClass::PdfDocument => "pdf_document",
            MediaClass::Tabular => "tabular",
            MediaClass::StructurePdb => "structure_pdb",
            MediaClass::PlainText => "plain_text",
        }
    }
}

impl fmt::Display for MediaClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MountedFile {
    pub id: String,
    pub logical_name: String,
    pub media_class: MediaClass,
    pub byte_size: u64,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntakeDigest {
    pub file_id: String,
    pub token_estimate: usize,
    pub digest_text: String,
    pub probe_latency_ms: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum IntakeError {
    #[error("{0} is empty")]
    Empty(String),
    #[error("{name}: {reason}")]
    Unrecognized { name: String, reason: String },
    #[error("{0} is outside the session workspace")]
    OutsideWorkspace(String),
    #[error("{name}: probe failed: {reason}")]
    Probe { name: String, reason: String },
    #[error("intake i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntakeConfig {
    pub per_file_cap: usize,
    pub preview_rows: usize,
    pub pdf_pages: usize,
}

impl Default for IntakeConfig {
    fn default() -> Self {
        Self { per_file_cap: 2500, preview_rows: 20, pdf_pages: 3 }
    }
}

fn extension(name: &str) -> Option<String> {
    Path::new(name).extension().map(|e| e.to_string_lossy().to_ascii_lowercase())
}

fn looks_textual(head: &[u8]) -> bool {
    if head.contains(&0) {
        return false;
    }
    match std::str::from_utf8(head) {
        Ok(_) => true,
        // A multi-byte character cut by the sniff window is still text.
        Err(e) => e.error_len().is_none() && head.len() - e.valid_up_to() < 4,
    }
}

fn looks_like_pdb(head: &[u8]) -> bool {
    head.split(|&b| b == b'\n').take(200).any(|line| {
        ["ATOM  ", "HETATM", "HEADER", "CRYST1"].iter().any(|r| line.starts_with(r.as_bytes()))
    })
}

/// Class implied by the bytes alone.
fn sniff(head: &[u8]) -> Option<MediaClass> {
    if head.starts_with(b"%PDF-") {
        Some(MediaClass::PdfDocument)
    } else if looks_textual(head) {
        Some(if looks_like_pdb(head) { MediaClass::StructurePdb } else { MediaClass::PlainText })
    } else {
        None
    }
}

/// Extension first; the magic bytes must agree, otherwise the bytes decide.
pub fn classify(logical_name: &str, head: &[u8]) -> Result<MediaClass, IntakeError> {
    let unrecognized = |reason: &str| IntakeError::Unrecognized { name: logical_name.to_string(), reason: reason.to_string() };
    if head.is_empty() {
        return Err(IntakeError::Empty(logical_name.to_string()));
    }
    let by_ext = extension(logical_name).and_then(|ext| match ext.as_str() {
        "pdf" => Some(MediaClass::PdfDocument),
        "csv" | "tsv" | "xlsx" => Some(MediaClass::Tabular),
        "pdb" => Some(MediaClass::StructurePdb),
        "txt" => Some(MediaClass::PlainText),
        _ => None,
    });
    let is_xlsx = extension(logical_name).as_deref() == Some("xlsx");
    let magic_ok = match by_ext {
        Some(MediaClass::PdfDocument) => head.starts_with(b"%PDF-"),
        Some(MediaClass::Tabular) if is_xlsx => head.starts_with(b"PK\x03\x04"),
        Some(_) => looks_textual(head) && !head.starts_with(b"%PDF-"),
        None => false,
    };
    if magic_ok {
        return Ok(by_ext.expect("magic_ok implies an extension class"));
    }
    sniff(head).ok_or_else(|| unrecognized("unrecognized binary content"))
}

fn file_id(logical_name: &str, bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(logical_name.as_bytes());
    hasher.update([0]);
    hasher.update(bytes);
    let digest = hasher.finalize();
    format!("f-{}", digest[..6].iter().map(|b| format!("{b:02x}")).collect::<String>())
}

fn sanitize_name(logical_name: &str) -> String {
    let base = logical_name.rsplit(['/', '\\']).next().unwrap_or("");
    let cleaned: String = base
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '_' })
        .collect();
    let cleaned = cleaned.trim_start_matches('.');
    if cleaned.is_empty() { "upload".to_string() } else { cleaned.to_string() }
}

/// Classifies `bytes` and stores them under `<workspace>/uploads/`. Nothing
/// is written when classification fails.
pub fn mount_bytes(workspace: &Path, logical_name: &str, bytes: &[u8]) -> Result<MountedFile, IntakeError> {
    let media_class = classify(logical_name, &bytes[..bytes.len().min(SNIFF_BYTES)])?;
    let dir = workspace.join(UPLOAD_DIR);
    std::fs::create_dir_all(&dir)?;
    let name = sanitize_name(logical_name);
    let mut path = dir.join(&name);
    let mut n = 1;
    while path.exists() {
        path = dir.join(format!("{n}-{name}"));
        n += 1;
    }
    std::fs::write(&path, bytes)?;
    Ok(MountedFile {
        id: file_id(logical_name, bytes),
        logical_name: logical_name.to_string(),
        media_class,
        byte_size: bytes.len() as u64,
        path,
    })
}

/// Mounts a file that already sits inside the workspace.
pub fn mount_existing(workspace: &Path, path: &Path) -> Result<MountedFile, IntakeError> {
    let canonical = path.canonicalize()?;
    if !canonical.starts_with(workspace.canonicalize()?) {
        return Err(IntakeError::OutsideWorkspace(path.display().to_string()));
    }
    let bytes = std::fs::read(&canonical)?;
    let logical_name = canonical.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let media_class = classify(&logical_name, &bytes[..bytes.len().min(SNIFF_BYTES)])?;
    Ok(MountedFile {
        id: file_id(&logical_name, &bytes),
        byte_size: bytes.len() as u64,
        logical_name,
        media_class,
        path: canonical,
    })
}

/// Extracts the abstract when the text has one: from the "Abstract" heading
/// up to the first introduction heading.
pub fn abstract_section(text: &str) -> Option<&str> {
    let lower = text.to_ascii_lowercase();
    let start = lower.find("abstract")?;
    let body_start = start + "abstract".len();
    let rest = &lower[body_start..];
    let end = rest
        .match_indices("introduction")
        .map(|(i, _)| body_start + i)
        .find_map(|i| {
            let line_start = lower[..i].rfind('\n').map_or(0, |p| p + 1);
            let numbering = lower[line_start..i].trim();
            numbering
                .chars()
                .all(|c| c.is_ascii_digit() || c == '.' || c == ' ')
                .then_some(line_start.max(body_start))
        })
        .unwrap_or(text.len());
    let section = text[body_start..end].trim_start_matches([':', '.', ' ', '\n', '\r', '\u{2014}', '-']).trim();
    (!section.is_empty()).then_some(section)
}

/// Probes mounted files; PDF text and spreadsheets go through the worker.
#[derive(Clone)]
pub struct IntakeEngine {
    config: IntakeConfig,
    sandbox: Arc<dyn Sandbox>,
}

impl IntakeEngine {
    pub fn new(config: IntakeConfig, sandbox: Arc<dyn Sandbox>) -> Self {
        Self { config, sandbox }
    }

    pub fn config(&self) -> &IntakeConfig {
        &self.config
    }

    pub async fn classify_and_probe(&self, file: &MountedFile) -> Result<IntakeDigest, IntakeError> {
        let started = Instant::now();
        let body = match file.media_class {
            MediaClass::Tabular if extension(&file.logical_name).as_deref() == Some("xlsx") => {
                self.worker_text(file, "table_probe", json!({ "path": file.path })).await?
            }
            MediaClass::PdfDocument => {
                let args = json!({ "path": file.path, "max_pages": self.config.pdf_pages });
                let text = self.worker_text(file, "pdf_probe", args).await?;
                match abstract_section(&text) {
                    Some(section) => format!("abstract:\n{section}\n"),
                    None => format!("text (first {} pages):\n{text}\n", self.config.pdf_pages),
                }
            }
            class => {
                let path = file.path.clone();
                let config = self.config;
                let name = file.logical_name.clone();
                tokio::task::spawn_blocking(move || {
                    let bytes = std::fs::read(&path)?;
                    local_body(&name, class, &bytes, config)
                })
                .await
                .map_err(|e| std::io::Error::other(e.to_string()))??
            }
        };
        let digest_text = self.cap(file, body);
        Ok(IntakeDigest {
            file_id: file.id.clone(),
            token_estimate: tokens::estimate(&digest_text),
            digest_text,
            probe_latency_ms: started.elapsed().as_secs_f64() * 1000.0,
        })
    }

    /// Probes several files concurrently, preserving input order.
    pub async fn probe_all(&self, files: &[MountedFile]) -> Vec<Result<IntakeDigest, IntakeError>> {
        futures::future::join_all(files.iter().map(|f| self.classify_and_probe(f))).await
    }

    async fn worker_text(&self, file: &MountedFile, probe: &str, args: serde_json::Value) -> Result<String, IntakeError> {
        let workspace = file.path.parent().unwrap_or(Path::new("."));
        let failure = |reason: String| IntakeError::Probe { name: file.logical_name.clone(), reason };
        let report = self
            .sandbox
            .run_probe(ProbeCall::new(probe, args), workspace)
            .await
            .map_err(|e| failure(e.to_string()))?;
        if let Some(text) = report.first_of(ArtifactKind::Text) {
            return Ok(text.payload.clone());
        }
        let reason = report
            .first_of(ArtifactKind::ErrorRecord)
            .map(|a| a.payload.clone())
            .or_else(|| report.stderr().map(|s| s.lines().last().unwrap_or("").to_string()))
            .unwrap_or_else(|| format!("worker finished with {:?} and no output", report.status));
        Err(failure(reason))
    }

    fn cap(&self, file: &MountedFile, body: String) -> String {
        let text = format!("file: {} ({}, {} bytes)\n{body}", file.logical_name, file.media_class, file.byte_size);
        tokens::truncate_to(&text, self.config.per_file_cap).to_string()
    }
}

impl fmt::Debug for IntakeEngine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IntakeEngine").field("config", &self.config).finish_non_exhaustive()
    }
}

/// Digest body for classes handled without the worker.
fn local_body(name: &str, class: MediaClass, bytes: &[u8], config: IntakeConfig) -> Result<String, IntakeError> {
    let text = || String::from_utf8_lossy(bytes);
    Ok(match class {
        MediaClass::Tabular => {
            let delimiter = if extension(name).as_deref() == Some("tsv") { b'\t' } else { b',' };
            let preview = TablePreview::scan(bytes, delimiter, config.preview_rows).map_err(|e| IntakeError::Unrecognized {
                name: name.to_string(),
                reason: format!("unreadable table: {e}"),
            })?;
            // Shrink the preview rather than cut a row in half.
            let overhead = tokens::estimate(&format!("file: {name} (tabular, {} bytes)\n", bytes.len())) + 1;
            let mut rows = config.preview_rows;
            let mut body = preview.render(rows);
            while rows > 0 && tokens::estimate(&body) + overhead > config.per_file_cap {
                rows -= 1;
                body = preview.render(rows);
            }
            body
        }
        MediaClass::StructurePdb => {
            let summary = PdbSummary::scan(&text());
            format!("{}raw stream: {name} (coordinates go to the viewport, not the prompt)\n", summary.render())
        }
        MediaClass::PlainText => format!("text:\n{}\n", text()),
        MediaClass::PdfDocument => unreachable!("pdf digests come from the worker"),
    })
}

/// Digests joined newest-first under `budget` estimated tokens. `digests`
/// is in mount order; the oldest are dropped whole until the rest fits.
pub fn compose_context(digests: &[IntakeDigest], budget: usize) -> String {
    const SEPARATOR: &str = "\n";
    let mut out = String::new();
    for digest in digests.iter().rev() {
        let mut candidate = out.clone();
        if !candidate.is_empty() {
            candidate.push_str(SEPARATOR);
        }
        candidate.push_str(&digest.digest_text);
        if tokens::estimate(&candidate) > budget {
            break;
        }
        out = candidate;
    }
    out
}
