//! Worker stdout demultiplexing.
//!
//! Lines that start with [`SENTINEL`] carry one JSON artifact record each.
//! Every other byte is user output and is coalesced into `stdout` artifacts,
//! so the artifact list preserves the interleaving the worker produced.

use std::fmt;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SENTINEL: &str = "@@BLOCLAW_ARTIFACT@@ ";
const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    RasterImageB64,
    InteractiveHtml,
    Stdout,
    Stderr,
    FileRef,
    ErrorRecord,
    Text,
}

impl ArtifactKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ArtifactKind::RasterImageB64 => "raster_image_b64",
            ArtifactKind::InteractiveHtml => "interactive_html",
            ArtifactKind::Stdout => "stdout",
            ArtifactKind::Stderr => "stderr",
            ArtifactKind::FileRef => "file_ref",
            ArtifactKind::ErrorRecord => "error_record",
            ArtifactKind::Text => "text",
        }
    }

    pub fn is_figure(self) -> bool {
        matches!(self, ArtifactKind::RasterImageB64 | ArtifactKind::InteractiveHtml)
    }
}

impl fmt::Display for ArtifactKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactOrigin {
    InterceptedShow,
    NamespaceSweep,
    ExplicitSave,
    Stream,
    Probe,
}

/// One record line as framed on the wire, field order included.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireRecord {
    pub seq: u64,
    pub kind: ArtifactKind,
    pub origin: ArtifactOrigin,
    pub payload: String,
}

impl WireRecord {
    /// The full sentinel line, newline included.
    pub fn to_line(&self) -> String {
        format!("{SENTINEL}{}\n", serde_json::to_string(self).expect("record serializes"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapturedArtifact {
    pub id: String,
    pub kind: ArtifactKind,
    pub origin: ArtifactOrigin,
    pub payload: String,
    pub byte_size: usize,
    /// Worker sequence number for framed records; `None` for stream output.
    pub seq: Option<u64>,
}

impl CapturedArtifact {
    pub fn new(kind: ArtifactKind, origin: ArtifactOrigin, payload: String, seq: Option<u64>, ordinal: usize) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(kind.as_str().as_bytes());
        hasher.update([0]);
        hasher.update(format!("{origin:?}:{ordinal}").as_bytes());
        hasher.update([0]);
        hasher.update(payload.as_bytes());
        let digest = hasher.finalize();
        let id = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
        let byte_size = payload.len();
        Self { id, kind, origin, payload, byte_size, seq }
    }

    /// Decoded bytes of a Base64 raster payload.
    pub fn decode_raster(&self) -> Option<Vec<u8>> {
        (self.kind == ArtifactKind::RasterImageB64)
            .then(|| BASE64.decode(self.payload.as_bytes()).ok())
            .flatten()
    }
}

/// Incremental harvester; feed stdout chunks in arrival order.
#[derive(Debug, Default)]
pub struct Harvester {
    line: Vec<u8>,
    pending_stdout: Vec<u8>,
    artifacts: Vec<CapturedArtifact>,
}

impl Harvester {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn feed(&mut self, mut chunk: &[u8]) {
        while let Some(nl) = chunk.iter().position(|&b| b == b'\n') {
            self.line.extend_from_slice(&chunk[..=nl]);
            chunk = &chunk[nl + 1..];
            let line = std::mem::take(&mut self.line);
            self.take_line(line, true);
        }
        self.line.extend_from_slice(chunk);
    }

    pub fn artifacts(&self) -> &[CapturedArtifact] {
        &self.artifacts
    }

    pub fn finish(mut self) -> Vec<CapturedArtifact> {
        let rest = std::mem::take(&mut self.line);
        if !rest.is_empty() {
            self.take_line(rest, false);
        }
        self.flush_stdout();
        self.artifacts
    }

    fn take_line(&mut self, line: Vec<u8>, terminated: bool) {
        if !line.starts_with(SENTINEL.as_bytes()) {
            self.pending_stdout.extend_from_slice(&line);
            return;
        }
        self.flush_stdout();
        let body = &line[SENTINEL.len()..];
        let body = body.strip_suffix(b"\n").unwrap_or(body);
        let artifact = match parse_record(body) {
            Ok(record) if terminated => self.record_artifact(record),
            Ok(_) => self.error("artifact record truncated before newline"),
            Err(err) => self.error(&format!("malformed artifact record: {err}")),
        };
        self.artifacts.push(artifact);
    }

    fn record_artifact(&self, record: WireRecord) -> CapturedArtifact {
        if record.kind == ArtifactKind::RasterImageB64 {
            let valid = BASE64
                .decode(record.payload.as_bytes())
                .is_ok_and(|bytes| bytes.starts_with(PNG_MAGIC));
            if !valid {
                return CapturedArtifact::new(
                    ArtifactKind::ErrorRecord,
                    record.origin,
                    format!("raster record {} is not a Base64 PNG", record.seq),
                    Some(record.seq),
                    self.artifacts.len(),
                );
            }
        }
        CapturedArtifact::new(record.kind, record.origin, record.payload, Some(record.seq), self.artifacts.len())
    }

    fn error(&self, message: &str) -> CapturedArtifact {
        CapturedArtifact::new(
            ArtifactKind::ErrorRecord,
            ArtifactOrigin::Stream,
            message.to_string(),
            None,
            self.artifacts.len(),
        )
    }

    fn flush_stdout(&mut self) {
        if self.pending_stdout.is_empty() {
            return;
        }
        let text = String::from_utf8_lossy(&std::mem::take(&mut self.pending_stdout)).into_owned();
        let artifact = CapturedArtifact::new(ArtifactKind::Stdout, ArtifactOrigin::Stream, text, None, self.artifacts.len());
        self.artifacts.push(artifact);
    }
}

fn parse_record(body: &[u8]) -> Result<WireRecord, serde_json::Error> {
    serde_json::from_slice(body)
}

/// Harvests a complete stdout capture.
pub fn harvest_artifacts(stream: &[u8]) -> Vec<CapturedArtifact> {
    let mut harvester = Harvester::new();
    harvester.feed(stream);
    harvester.finish()
}
