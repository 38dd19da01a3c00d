use std::collections::HashMap;
use std::sync::RwLock;

use crate::sandbox::{ArtifactKind, CapturedArtifact};

/// Process-wide artifact payloads, addressed by content-derived id.
#[derive(Debug, Default)]
pub struct ArtifactStore {
    items: RwLock<HashMap<String, CapturedArtifact>>,
}

/// Bytes ready to serve plus their media type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServedArtifact {
    pub content_type: &'static str,
    pub body: Vec<u8>,
}

impl ArtifactStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&self, artifact: CapturedArtifact) {
        self.items.write().expect("store lock").insert(artifact.id.clone(), artifact);
    }

    pub fn get(&self, id: &str) -> Option<CapturedArtifact> {
        self.items.read().expect("store lock").get(id).cloned()
    }

    pub fn len(&self) -> usize {
        self.items.read().expect("store lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rasters are served decoded as PNG; HTML as a document; the rest as
    /// UTF-8 text.
    pub fn serve(&self, id: &str) -> Option<ServedArtifact> {
        let artifact = self.get(id)?;
        Some(match artifact.kind {
            ArtifactKind::RasterImageB64 => ServedArtifact {
                content_type: "image/png",
                body: artifact.decode_raster()?,
            },
            ArtifactKind::InteractiveHtml => ServedArtifact {
                content_type: "text/html; charset=utf-8",
                body: artifact.payload.into_bytes(),
            },
            _ => ServedArtifact {
                content_type: "text/plain; charset=utf-8",
                body: artifact.payload.into_bytes(),
            },
        })
    }
}
