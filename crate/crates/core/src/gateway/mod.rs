//! Remote structure services and viewport scene composition.
//!
//! Docking scenes are visual only: the ligand is embedded on its own and
//! rendered next to the receptor. No pose search or scoring happens.

pub mod transport;

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use tracing::warn;

use crate::intake::PdbSummary;
use crate::routing::TokenClass;
use crate::sandbox::{ArtifactKind, ProbeCall, Sandbox};
pub use transport::{
    CountingTransport, FixtureEntry, FixtureTransport, HttpTransport, Method, RefusingTransport, Transport,
    TransportError, TransportRequest, TransportResponse,
};

pub const MIN_FOLD_LEN: usize = 10;
pub const MAX_FOLD_LEN: usize = 400;
const EXCERPT_CHARS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    pub fold_endpoint: String,
    /// `{id}` is replaced by the upper-case entry id.
    pub archive_url_template: String,
    pub timeout_secs: f64,
    pub retries: u32,
    pub backoff_ms: u64,
    pub ligand_seed: u64,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            fold_endpoint: "https://api.esmatlas.com/foldSequence/v1/pdb/".into(),
            archive_url_template: "https://files.rcsb.org/download/{id}.pdb".into(),
            timeout_secs: 60.0,
            retries: 3,
            backoff_ms: 250,
            ligand_seed: 42,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureSource {
    Predicted,
    Archive,
    LigandEmbedded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructurePayload {
    pub pdb_text: String,
    pub source: StructureSource,
    pub atom_count: usize,
    pub chain_ids: Vec<String>,
    pub mean_confidence: Option<f64>,
}

impl StructurePayload {
    /// Derives counts (and, for predictions, confidence) from the text.
    pub fn from_pdb(pdb_text: String, source: StructureSource) -> Self {
        let summary = PdbSummary::scan(&pdb_text);
        let mean_confidence = (source == StructureSource::Predicted).then(|| mean_b_factor(&pdb_text)).flatten();
        Self {
            atom_count: summary.coordinate_records(),
            chain_ids: summary.chain_ids.iter().map(|c| c.to_string()).collect(),
            mean_confidence: mean_confidence.or((source == StructureSource::Predicted).then_some(0.0)),
            source,
            pdb_text,
        }
    }

    pub fn coordinates(&self) -> Vec<[f64; 3]> {
        coordinate_lines(&self.pdb_text)
            .filter_map(|line| {
                let axis = |r: std::ops::Range<usize>| line.get(r).and_then(|s| s.trim().parse::<f64>().ok());
                Some([axis(30..38)?, axis(38..46)?, axis(46..54)?])
            })
            .collect()
    }
}

fn coordinate_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines().filter(|l| l.starts_with("ATOM  ") || l.starts_with("HETATM"))
}

/// Mean temperature factor, reported on a 0-100 scale. Predictors that
/// write fractions (0-1) are rescaled.
fn mean_b_factor(text: &str) -> Option<f64> {
    let values: Vec<f64> = coordinate_lines(text)
        .filter_map(|l| l.get(60..66).and_then(|s| s.trim().parse().ok()))
        .collect();
    if values.is_empty() {
        return None;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let fractional = values.iter().all(|v| (0.0..=1.0).contains(v));
    Some(if fractional { mean * 100.0 } else { mean }.clamp(0.0, 100.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    Cartoon,
    Stick,
    Sphere,
    Line,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerStyle {
    pub representation: Representation,
    pub color_scheme: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneLayer {
    pub payload: StructurePayload,
    pub style: LayerStyle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraHint {
    pub center: [f64; 3],
    pub radius: f64,
}

impl CameraHint {
    fn around(points: &[[f64; 3]]) -> Self {
        if points.is_empty() {
            return Self { center: [0.0; 3], radius: 10.0 };
        }
        let n = points.len() as f64;
        let mut center = [0.0; 3];
        for p in points {
            for (c, v) in center.iter_mut().zip(p) {
                *c += v / n;
            }
        }
        let radius = points
            .iter()
            .map(|p| p.iter().zip(&center).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        Self { center, radius: radius.max(1.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewportScene {
    pub layers: Vec<SceneLayer>,
    pub camera_hint: CameraHint,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

pub const MAX_LAYERS: usize = 4;

impl ViewportScene {
    /// A lone structure drawn as a cartoon and colored by chain, or by
    /// confidence for predictions.
    pub fn single(payload: StructurePayload) -> Self {
        let color_scheme = match payload.source {
            StructureSource::Predicted => "confidence",
            _ => "chain",
        };
        let camera_hint = CameraHint::around(&payload.coordinates());
        Self {
            layers: vec![SceneLayer {
                payload,
                style: LayerStyle { representation: Representation::Cartoon, color_scheme: color_scheme.into() },
            }],
            camera_hint,
            warnings: Vec::new(),
        }
    }

    pub fn is_valid(&self) -> bool {
        (1..=MAX_LAYERS).contains(&self.layers.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCategory {
    Validation,
    NotFound,
    Retriable,
    Terminal,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GatewayError {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("{0} not found in the structure archive")]
    NotFound(String),
    #[error("service unreachable after {attempts} attempts: {last}")]
    Retriable { attempts: u32, last: TransportError },
    #[error("service answered {status}: {excerpt}")]
    Terminal { status: u16, excerpt: String },
}

impl GatewayError {
    pub fn category(&self) -> ErrorCategory {
        match self {
            GatewayError::Validation(_) => ErrorCategory::Validation,
            GatewayError::NotFound(_) => ErrorCategory::NotFound,
            GatewayError::Retriable { .. } => ErrorCategory::Retriable,
            GatewayError::Terminal { .. } => ErrorCategory::Terminal,
        }
    }
}

/// How a single transport outcome is treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OutcomeClass {
    Success,
    NotFound,
    Terminal,
    Retriable,
}

pub fn classify_outcome(outcome: &Result<TransportResponse, TransportError>) -> OutcomeClass {
    match outcome {
        Ok(r) if (200..300).contains(&r.status) => OutcomeClass::Success,
        Ok(r) if r.status == 404 => OutcomeClass::NotFound,
        Ok(_) => OutcomeClass::Terminal,
        Err(_) => OutcomeClass::Retriable,
    }
}

fn excerpt(body: &str) -> String {
    let mut out: String = body.trim().chars().take(EXCERPT_CHARS).collect();
    if body.trim().chars().count() > EXCERPT_CHARS {
        out.push('…');
    }
    out
}

pub fn validate_sequence(sequence: &str) -> Result<String, GatewayError> {
    let seq: String = sequence.split_whitespace().collect();
    if seq.is_empty() {
        return Err(GatewayError::Validation("empty sequence".into()));
    }
    if let Some(bad) = seq.chars().find(|c| !TokenClass::AminoAcidSeq.allows(*c)) {
        return Err(GatewayError::Validation(format!("{bad:?} is not a standard amino-acid code")));
    }
    if !(MIN_FOLD_LEN..=MAX_FOLD_LEN).contains(&seq.len()) {
        return Err(GatewayError::Validation(format!(
            "sequence length {} outside {MIN_FOLD_LEN}..={MAX_FOLD_LEN}",
            seq.len()
        )));
    }
    Ok(seq)
}

pub fn validate_pdb_id(id: &str) -> Result<String, GatewayError> {
    let id = id.trim();
    if TokenClass::PdbId.is_valid(id) {
        Ok(id.to_ascii_uppercase())
    } else {
        Err(GatewayError::Validation(format!("{id:?} is not a 4-character archive id")))
    }
}

/// Stateless clients over a swappable transport.
#[derive(Clone)]
pub struct ScienceGateway {
    config: GatewayConfig,
    transport: Arc<dyn Transport>,
}

impl std::fmt::Debug for ScienceGateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScienceGateway").field("config", &self.config).finish_non_exhaustive()
    }
}

impl ScienceGateway {
    pub fn new(config: GatewayConfig, transport: Arc<dyn Transport>) -> Self {
        Self { config, transport }
    }

    /// Live HTTP transport with the configured timeout.
    pub fn http(config: GatewayConfig) -> Result<Self, TransportError> {
        let transport = HttpTransport::new(Duration::from_secs_f64(config.timeout_secs.max(0.1)))?;
        Ok(Self::new(config, Arc::new(transport)))
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    async fn send_with_retry(&self, req: TransportRequest) -> Result<Result<TransportResponse, TransportError>, GatewayError> {
        let attempts = self.config.retries.max(1);
        let mut last = TransportError::Other("no attempt made".into());
        for attempt in 1..=attempts {
            let outcome = self.transport.send(&req).await;
            if classify_outcome(&outcome) != OutcomeClass::Retriable {
                return Ok(outcome);
            }
            last = outcome.expect_err("retriable outcomes are transport errors");
            warn!(url = %req.url, attempt, error = %last, "gateway request failed");
            if attempt < attempts {
                tokio::time::sleep(Duration::from_millis(self.config.backoff_ms << (attempt - 1))).await;
            }
        }
        Err(GatewayError::Retriable { attempts, last })
    }

    pub async fn fold_sequence(&self, sequence: &str) -> Result<StructurePayload, GatewayError> {
        let seq = validate_sequence(sequence)?;
        let req = TransportRequest { method: Method::Post, url: self.config.fold_endpoint.clone(), body: Some(seq) };
        let response = self.send_with_retry(req).await?;
        let response = match classify_outcome(&response) {
            OutcomeClass::Success => response.expect("success outcome"),
            _ => {
                let r = response.expect("non-retriable outcome carries a response");
                return Err(GatewayError::Terminal { status: r.status, excerpt: excerpt(&r.body) });
            }
        };
        let payload = StructurePayload::from_pdb(response.body, StructureSource::Predicted);
        if payload.atom_count == 0 {
            return Err(GatewayError::Terminal { status: 200, excerpt: "response has no coordinate records".into() });
        }
        Ok(payload)
    }

    pub async fn fetch_structure(&self, pdb_id: &str) -> Result<StructurePayload, GatewayError> {
        let id = validate_pdb_id(pdb_id)?;
        let url = self.config.archive_url_template.replace("{id}", &id);
        let response = self.send_with_retry(TransportRequest { method: Method::Get, url, body: None }).await?;
        match classify_outcome(&response) {
            OutcomeClass::Success => {}
            OutcomeClass::NotFound => return Err(GatewayError::NotFound(id)),
            _ => {
                let r = response.expect("non-retriable outcome carries a response");
                return Err(GatewayError::Terminal { status: r.status, excerpt: excerpt(&r.body) });
            }
        }
        let payload = StructurePayload::from_pdb(response.expect("success outcome").body, StructureSource::Archive);
        if payload.atom_count == 0 {
            return Err(GatewayError::Terminal { status: 200, excerpt: format!("entry {id} has no coordinate records") });
        }
        Ok(payload)
    }
}

/// Receptor as a cartoon plus the ligand as sticks, camera on the receptor.
/// When the worker cannot embed the ligand the scene degrades to the
/// receptor alone and carries a warning.
pub async fn compose_docking_scene(
    receptor: StructurePayload,
    ligand_smiles: &str,
    seed: u64,
    sandbox: &dyn Sandbox,
    workspace: &Path,
) -> Result<ViewportScene, GatewayError> {
    if receptor.atom_count == 0 {
        return Err(GatewayError::Validation("receptor has no atoms".into()));
    }
    let smiles = ligand_smiles.trim();
    if !TokenClass::Smiles.is_valid(smiles) {
        return Err(GatewayError::Validation(format!("{smiles:?} is not a SMILES string")));
    }
    let mut scene = ViewportScene::single(receptor);
    scene.layers[0].style.color_scheme = "chain".into();

    let probe = ProbeCall::new("embed_3d_ligand", json!({ "smiles": smiles, "seed": seed }));
    let ligand = match sandbox.run_probe(probe, workspace).await {
        Ok(report) => match report.first_of(ArtifactKind::Text) {
            Some(block) => Ok(StructurePayload::from_pdb(block.payload.clone(), StructureSource::LigandEmbedded)),
            None => Err(report
                .first_of(ArtifactKind::ErrorRecord)
                .map(|a| a.payload.clone())
                .unwrap_or_else(|| format!("embedding worker ended with {:?}", report.status))),
        },
        Err(e) => Err(e.to_string()),
    };
    match ligand {
        Ok(payload) if payload.atom_count > 0 => scene.layers.push(SceneLayer {
            payload,
            style: LayerStyle { representation: Representation::Stick, color_scheme: "element".into() },
        }),
        Ok(_) => scene.warnings.push("ligand embedding produced no atoms; showing the receptor only".into()),
        Err(reason) => scene.warnings.push(format!("ligand embedding failed ({reason}); showing the receptor only")),
    }
    Ok(scene)
}
