//! The agent loop.
//!
//! A turn appends the user message, composes the system prompt from the
//! live catalog and the mounted-file digests, asks the provider for one
//! directive, dispatches it to the owning subsystem and streams
//! [`ServerEvent`]s. One tool hop per turn; only RUN_CODE may retry.

pub mod events;
pub mod provider;
pub mod store;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};
use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;
use tracing::debug;

use crate::gateway::{compose_docking_scene, GatewayError, ScienceGateway, ViewportScene};
use crate::intake::{self, IntakeDigest, IntakeEngine, IntakeError, MountedFile};
use crate::registry::{Registry, SkillDraft, SKILL_ARGS_ENV};
use crate::routing::{ActionKind, DirectiveEnvelope, LIGAND_SLOT, NAME_SLOT, TARGET_SLOT};
use crate::sandbox::{ArtifactKind, CapturedArtifact, ExecutionReport, ExecutionStatus, ProbeCall, Sandbox};

pub use events::{check_log_grammar, check_turn_grammar, ServerEvent};
pub use provider::{
    HttpProvider, HttpProviderConfig, ModelProvider, ProviderError, ReplayProvider, ReplayScript, ReplayTurn,
};
pub use store::{ArtifactStore, ServedArtifact};

const DELTA_CHARS: usize = 48;
const OBSERVATION_TAIL_CHARS: usize = 2000;

static TAG_TOKEN: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?i)</?\s*(thought|action|target)\b[^<>]*>").expect("tag regex"));
static ACTION_BLOCK: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?is)<\s*action\b[^<>]*>.*?<\s*/\s*action\s*>").expect("action regex"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    User,
    Assistant,
    Observation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub text: String,
}

impl Message {
    pub fn new(role: Role, text: impl Into<String>) -> Self {
        Self { role, text: text.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    /// Parent of the per-session workspace directories.
    pub workspace_root: PathBuf,
    /// Ask the provider to phrase a reply after a tool ran.
    pub follow_up: bool,
    pub capability_budget: usize,
    pub context_budget: usize,
    pub run_code_retries: u32,
    pub event_capacity: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            workspace_root: std::env::temp_dir().join("bloclaw-sessions"),
            follow_up: true,
            capability_budget: 1500,
            context_budget: 6000,
            run_code_retries: 2,
            event_capacity: 1024,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("no session {0}")]
    UnknownSession(String),
    #[error(transparent)]
    Intake(#[from] IntakeError),
    #[error("session i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Default)]
struct SessionState {
    history: Vec<Message>,
    mounted: Vec<MountedFile>,
    digests: Vec<IntakeDigest>,
}

#[derive(Debug)]
pub struct Session {
    pub id: String,
    pub workspace_dir: PathBuf,
    pub created_at: DateTime<Utc>,
    /// Held for the whole turn, which serializes turns per session.
    state: tokio::sync::Mutex<SessionState>,
    events: broadcast::Sender<ServerEvent>,
    log: Mutex<Vec<ServerEvent>>,
}

impl Session {
    pub fn subscribe(&self) -> broadcast::Receiver<ServerEvent> {
        self.events.subscribe()
    }

    pub fn event_log(&self) -> Vec<ServerEvent> {
        self.log.lock().expect("log lock").clone()
    }

    pub async fn history(&self) -> Vec<Message> {
        self.state.lock().await.history.clone()
    }

    pub async fn mounted_files(&self) -> Vec<MountedFile> {
        self.state.lock().await.mounted.clone()
    }

    /// The events logged so far plus a receiver for everything after them,
    /// with no gap or overlap between the two.
    pub fn subscribe_with_backlog(&self) -> (Vec<ServerEvent>, broadcast::Receiver<ServerEvent>) {
        let log = self.log.lock().expect("log lock");
        (log.clone(), self.events.subscribe())
    }

    fn emit(&self, turn: &mut Vec<ServerEvent>, event: ServerEvent) {
        debug!(session = %self.id, event = event.type_name(), "event");
        let mut log = self.log.lock().expect("log lock");
        log.push(event.clone());
        // No subscribers is fine; the log keeps everything.
        let _ = self.events.send(event.clone());
        drop(log);
        turn.push(event);
    }
}

/// Everything a turn can call out to.
#[derive(Clone)]
pub struct Services {
    pub provider: Arc<dyn ModelProvider>,
    pub registry: Arc<Registry>,
    pub sandbox: Arc<dyn Sandbox>,
    pub gateway: ScienceGateway,
    pub intake: IntakeEngine,
    pub store: Arc<ArtifactStore>,
}

pub struct SessionService {
    config: SessionConfig,
    services: Services,
    sessions: RwLock<HashMap<String, Arc<Session>>>,
}

impl std::fmt::Debug for SessionService {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SessionService").field("config", &self.config).finish_non_exhaustive()
    }
}

impl SessionService {
    pub fn new(config: SessionConfig, services: Services) -> Self {
        Self { config, services, sessions: RwLock::new(HashMap::new()) }
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn services(&self) -> &Services {
        &self.services
    }

    pub fn create_session(&self) -> Result<Arc<Session>, SessionError> {
        self.create_session_with_id(uuid::Uuid::new_v4().simple().to_string())
    }

    pub fn create_session_with_id(&self, id: String) -> Result<Arc<Session>, SessionError> {
        let workspace_dir = self.config.workspace_root.join(&id);
        std::fs::create_dir_all(&workspace_dir)?;
        let (events, _) = broadcast::channel(self.config.event_capacity.max(16));
        let session = Arc::new(Session {
            id: id.clone(),
            workspace_dir: workspace_dir.canonicalize()?,
            created_at: Utc::now(),
            state: tokio::sync::Mutex::new(SessionState::default()),
            events,
            log: Mutex::new(Vec::new()),
        });
        self.sessions.write().expect("sessions lock").insert(id, session.clone());
        Ok(session)
    }

    pub fn session(&self, id: &str) -> Result<Arc<Session>, SessionError> {
        self.sessions
            .read()
            .expect("sessions lock")
            .get(id)
            .cloned()
            .ok_or_else(|| SessionError::UnknownSession(id.to_string()))
    }

    /// Stores an upload in the session workspace and probes it. A file that
    /// fails classification is not mounted.
    pub async fn mount_file(&self, id: &str, logical_name: &str, bytes: &[u8]) -> Result<(MountedFile, IntakeDigest), SessionError> {
        let session = self.session(id)?;
        let file = intake::mount_bytes(&session.workspace_dir, logical_name, bytes)?;
        let digest = match self.services.intake.classify_and_probe(&file).await {
            Ok(digest) => digest,
            Err(err) => {
                let _ = std::fs::remove_file(&file.path);
                return Err(err.into());
            }
        };
        let mut state = session.state.lock().await;
        state.mounted.push(file.clone());
        state.digests.push(digest.clone());
        Ok((file, digest))
    }

    /// The system prompt the next turn of `id` would use.
    pub async fn system_prompt(&self, id: &str) -> Result<String, SessionError> {
        let session = self.session(id)?;
        let state = session.state.lock().await;
        Ok(self.compose_system_prompt(&state))
    }

    fn compose_system_prompt(&self, state: &SessionState) -> String {
        let capabilities = self.services.registry.capability_prompt(self.config.capability_budget);
        let context = intake::compose_context(&state.digests, self.config.context_budget);
        let files = if context.is_empty() {
            "Mounted files: none.\n".to_string()
        } else {
            format!("Mounted files (newest first):\n{context}")
        };
        format!("{PREAMBLE}\n{capabilities}\n{files}")
    }

    /// Plays every user message of `script` into a new session named
    /// `session_id`. The provider must serve the script's responses.
    pub async fn replay(&self, session_id: &str, script: &ReplayScript) -> Result<Vec<ServerEvent>, SessionError> {
        let session = self.create_session_with_id(session_id.to_string())?;
        let mut events = Vec::new();
        for turn in &script.turns {
            events.extend(self.handle_user_message(&session.id, &turn.user).await?);
        }
        Ok(events)
    }

    pub async fn handle_user_message(&self, id: &str, text: &str) -> Result<Vec<ServerEvent>, SessionError> {
        let session = self.session(id)?;
        let mut state = session.state.lock().await;
        let mut turn = Turn { svc: self, session: &session, state: &mut state, events: Vec::new(), errored: false };
        turn.run(text).await;
        Ok(turn.events)
    }
}

const PREAMBLE: &str = "\
You are BloClaw, a laboratory assistant for chemistry and structural biology.
Use one action per reply. Tool results come back to you as observations.
";

struct Turn<'a> {
    svc: &'a SessionService,
    session: &'a Session,
    state: &'a mut SessionState,
    events: Vec<ServerEvent>,
    errored: bool,
}

enum Outcome {
    /// The tool ran; ask the provider to phrase the reply.
    Observed,
    /// The reply is already known.
    Reply(String),
}

impl Turn<'_> {
    fn emit(&mut self, event: ServerEvent) {
        self.session.emit(&mut self.events, event);
    }

    fn fail(&mut self, category: &str, message: impl Into<String>) {
        if !self.errored {
            self.errored = true;
            self.emit(ServerEvent::TurnError { category: category.to_string(), message: message.into() });
        }
    }

    fn observe(&mut self, text: impl Into<String>) {
        self.state.history.push(Message::new(Role::Observation, text));
    }

    fn last_observation(&self) -> String {
        self.state
            .history
            .iter()
            .rev()
            .find(|m| m.role == Role::Observation)
            .map(|m| m.text.clone())
            .unwrap_or_default()
    }

    fn stream_text(&mut self, text: &str) {
        for chunk in chunk_text(text, DELTA_CHARS) {
            self.emit(ServerEvent::TokenDelta { text: chunk });
        }
    }

    async fn ask(&mut self, system: &str) -> Result<String, ProviderError> {
        let raw = self.svc.services.provider.complete(system, &self.state.history).await?;
        self.state.history.push(Message::new(Role::Assistant, raw.clone()));
        Ok(raw)
    }

    fn grammar(&self) -> crate::routing::Grammar {
        self.svc.services.registry.snapshot().grammar()
    }

    async fn run(&mut self, text: &str) {
        self.state.history.push(Message::new(Role::User, text));
        let system = self.svc.compose_system_prompt(self.state);
        let raw = match self.ask(&system).await {
            Ok(raw) => raw,
            Err(err) => {
                self.fail("provider_unreachable", err.to_string());
                self.emit(ServerEvent::TurnDone { reply: String::new() });
                return;
            }
        };

        let envelope = match self.grammar().parse(&raw) {
            Ok(envelope) => envelope,
            Err(failure) => {
                let fallback = DirectiveEnvelope::downgraded(&raw, &failure);
                self.stream_text(fallback.raw_text.trim());
                self.fail(failure.category.as_str(), failure.diagnostic);
                self.emit(ServerEvent::TurnDone { reply: raw.trim().to_string() });
                return;
            }
        };

        if envelope.action == ActionKind::Chat {
            let reply = display_text(&raw);
            self.stream_text(&reply);
            self.emit(ServerEvent::TurnDone { reply });
            return;
        }

        if !envelope.thought.is_empty() {
            self.stream_text(&envelope.thought);
        }
        self.emit(ServerEvent::directive(&envelope));
        let outcome = self.dispatch(&envelope, &system).await;
        let reply = match outcome {
            Outcome::Reply(reply) => reply,
            Outcome::Observed if self.errored || !self.svc.config.follow_up => self.last_observation(),
            Outcome::Observed => match self.ask(&system).await {
                Ok(text) => display_text(&text),
                Err(err) => {
                    self.fail("provider_unreachable", err.to_string());
                    self.last_observation()
                }
            },
        };
        self.emit(ServerEvent::TurnDone { reply });
    }

    async fn dispatch(&mut self, envelope: &DirectiveEnvelope, system: &str) -> Outcome {
        let param = |slot: &str| envelope.param(slot).unwrap_or_default().to_string();
        let workspace = self.session.workspace_dir.clone();
        match &envelope.action {
            ActionKind::Chat => Outcome::Reply(display_text(&envelope.raw_text)),
            ActionKind::RagAnswer => Outcome::Reply(param(TARGET_SLOT)),
            ActionKind::TwoDMolecule => {
                self.depict(&param(TARGET_SLOT), &workspace).await;
                Outcome::Observed
            }
            ActionKind::FoldProtein => {
                let result = self.svc.services.gateway.fold_sequence(&param(TARGET_SLOT)).await;
                self.show_structure(result, "predicted structure");
                Outcome::Observed
            }
            ActionKind::FetchStructure => {
                let result = self.svc.services.gateway.fetch_structure(&param(TARGET_SLOT)).await;
                self.show_structure(result, "archive entry");
                Outcome::Observed
            }
            ActionKind::Docking => {
                self.dock(&param(TARGET_SLOT), &param(LIGAND_SLOT), &workspace).await;
                Outcome::Observed
            }
            ActionKind::RunCode => self.run_code(param(TARGET_SLOT), &workspace, system).await,
            ActionKind::CreateTool => {
                self.create_tool(envelope);
                Outcome::Observed
            }
            ActionKind::Skill(keyword) => {
                self.run_skill(keyword, envelope, &workspace).await;
                Outcome::Observed
            }
        }
    }

    /// Stores and announces every artifact of a report; the last figure also
    /// becomes the viewport's active artifact.
    fn announce(&mut self, report: &ExecutionReport) -> Option<String> {
        let mut last_figure = None;
        for artifact in &report.artifacts {
            self.svc.services.store.insert(artifact.clone());
            self.emit(ServerEvent::ArtifactReady {
                artifact_id: artifact.id.clone(),
                kind: artifact.kind,
                origin: artifact.origin,
            });
            if artifact.kind.is_figure() {
                last_figure = Some(artifact.id.clone());
            }
        }
        if let Some(id) = &last_figure {
            self.emit(ServerEvent::ViewportUpdate { artifact_id: Some(id.clone()), scene: None });
        }
        last_figure
    }

    async fn depict(&mut self, smiles: &str, workspace: &Path) {
        let probe = ProbeCall::new("depict_2d", serde_json::json!({ "smiles": smiles }));
        match self.svc.services.sandbox.run_probe(probe, workspace).await {
            Ok(report) => match self.announce(&report) {
                Some(id) => self.observe(format!("2D depiction of {smiles} rendered as artifact {id}.")),
                None => self.observe(format!("2D depiction of {smiles} failed: {}", failure_text(&report))),
            },
            Err(err) => {
                self.observe(format!("2D depiction unavailable: {err}"));
                self.fail("worker_unavailable", err.to_string());
            }
        }
    }

    fn show_scene(&mut self, scene: ViewportScene) {
        self.emit(ServerEvent::ViewportUpdate { artifact_id: None, scene: Some(scene) });
    }

    fn show_structure(&mut self, result: Result<crate::gateway::StructurePayload, GatewayError>, label: &str) {
        match result {
            Ok(payload) => {
                let confidence = payload
                    .mean_confidence
                    .map(|c| format!(", mean confidence {c:.1}"))
                    .unwrap_or_default();
                self.observe(format!(
                    "Loaded {label}: {} atoms, chains {}{confidence}. It is shown in the viewport.",
                    payload.atom_count,
                    payload.chain_ids.join(", ")
                ));
                self.show_scene(ViewportScene::single(payload));
            }
            Err(err) => self.gateway_failure(err),
        }
    }

    fn gateway_failure(&mut self, err: GatewayError) {
        self.observe(format!("Structure service error: {err}"));
        match &err {
            GatewayError::Validation(_) | GatewayError::NotFound(_) => {}
            GatewayError::Retriable { .. } => self.fail("gateway_unreachable", err.to_string()),
            GatewayError::Terminal { .. } => self.fail("gateway_error", err.to_string()),
        }
    }

    async fn dock(&mut self, pdb_id: &str, smiles: &str, workspace: &Path) {
        let receptor = match self.svc.services.gateway.fetch_structure(pdb_id).await {
            Ok(receptor) => receptor,
            Err(err) => return self.gateway_failure(err),
        };
        let seed = self.svc.services.gateway.config().ligand_seed;
        match compose_docking_scene(receptor, smiles, seed, self.svc.services.sandbox.as_ref(), workspace).await {
            Ok(scene) => {
                let mut note = format!(
                    "Co-rendered receptor {pdb_id} with ligand {smiles} ({} layers). This is a visual juxtaposition; no pose or score was computed.",
                    scene.layers.len()
                );
                for warning in &scene.warnings {
                    note.push_str(&format!("\nWarning: {warning}"));
                }
                self.observe(note);
                self.show_scene(scene);
            }
            Err(err) => self.gateway_failure(err),
        }
    }

    async fn execute(&mut self, code: String, env: Vec<(String, String)>, workspace: &Path) -> Option<ExecutionReport> {
        let mut req = self.svc.services.sandbox.request_for(code, workspace);
        req.env = env;
        match self.svc.services.sandbox.execute(req).await {
            Ok(report) => {
                self.announce(&report);
                Some(report)
            }
            Err(err) => {
                self.observe(format!("Sandbox unavailable: {err}"));
                self.fail("worker_unavailable", err.to_string());
                None
            }
        }
    }

    async fn run_code(&mut self, mut code: String, workspace: &Path, system: &str) -> Outcome {
        let mut failures = 0;
        loop {
            let Some(report) = self.execute(code.clone(), Vec::new(), workspace).await else {
                return Outcome::Observed;
            };
            if report.status == ExecutionStatus::Ok {
                self.observe(success_text(&report));
                return Outcome::Observed;
            }
            failures += 1;
            self.observe(format!(
                "Execution {} ({:?}). Fix the script and send RUN_CODE again.\n{}",
                failures,
                report.status,
                failure_text(&report)
            ));
            if failures > self.svc.config.run_code_retries {
                self.fail("execution_failed", format!("script failed {failures} times"));
                return Outcome::Observed;
            }
            let raw = match self.ask(system).await {
                Ok(raw) => raw,
                Err(err) => {
                    self.fail("provider_unreachable", err.to_string());
                    return Outcome::Observed;
                }
            };
            match self.grammar().parse(&raw) {
                Ok(next) if next.action == ActionKind::RunCode => {
                    code = next.param(TARGET_SLOT).unwrap_or_default().to_string();
                }
                // The model gave up on code; its text is the reply.
                _ => return Outcome::Reply(display_text(&raw)),
            }
        }
    }

    fn create_tool(&mut self, envelope: &DirectiveEnvelope) {
        let name = envelope.param(NAME_SLOT).unwrap_or_default();
        let description = if envelope.thought.is_empty() {
            format!("model-authored skill {name}")
        } else {
            envelope.thought.clone()
        };
        let body = envelope.param(TARGET_SLOT).unwrap_or_default();
        let draft = SkillDraft::new(name, description, format!("{body}\n"));
        match self.svc.services.registry.persist_skill(draft, false) {
            Ok(manifest) => self.observe(format!(
                "Skill {} v{} saved; it is available as action {} from the next turn.",
                manifest.name, manifest.version, manifest.action_keyword
            )),
            Err(err) => self.observe(format!("Skill not saved: {err}")),
        }
    }

    async fn run_skill(&mut self, keyword: &str, envelope: &DirectiveEnvelope, workspace: &Path) {
        let registry = &self.svc.services.registry;
        let source = registry
            .snapshot()
            .by_keyword(keyword)
            .map(|t| t.name.clone())
            .ok_or_else(|| format!("no skill registered for {keyword}"))
            .and_then(|name| registry.skill_source(&name).map_err(|e| e.to_string()));
        let source = match source {
            Ok(source) => source,
            Err(reason) => {
                self.observe(format!("Skill {keyword} unavailable: {reason}"));
                self.fail("skill_unavailable", reason);
                return;
            }
        };
        let args: serde_json::Map<String, serde_json::Value> = envelope
            .params
            .iter()
            .map(|(k, v)| (k.clone(), serde_json::Value::String(v.value.clone())))
            .collect();
        let env = vec![(SKILL_ARGS_ENV.to_string(), serde_json::Value::Object(args).to_string())];
        if let Some(report) = self.execute(source, env, workspace).await {
            let text = if report.status == ExecutionStatus::Ok {
                success_text(&report)
            } else {
                format!("Skill {keyword} failed ({:?}).\n{}", report.status, failure_text(&report))
            };
            self.observe(text);
        }
    }
}

fn tail(text: &str, max_chars: usize) -> &str {
    let count = text.chars().count();
    if count <= max_chars {
        return text;
    }
    let skip = text.char_indices().nth(count - max_chars).map_or(0, |(i, _)| i);
    &text[skip..]
}

fn success_text(report: &ExecutionReport) -> String {
    let figures = report.figures().count();
    let stdout = report.stdout();
    let mut text = format!("Execution succeeded with {figures} captured figure(s).");
    if !stdout.trim().is_empty() {
        text.push_str(&format!("\nstdout:\n{}", tail(&stdout, OBSERVATION_TAIL_CHARS)));
    }
    text
}

fn failure_text(report: &ExecutionReport) -> String {
    let errors: Vec<&str> = report
        .artifacts
        .iter()
        .filter(|a| a.kind == ArtifactKind::ErrorRecord)
        .map(|a: &CapturedArtifact| a.payload.as_str())
        .collect();
    let mut text = errors.join("\n");
    if let Some(stderr) = report.stderr() {
        if !text.is_empty() {
            text.push('\n');
        }
        text.push_str(tail(stderr, OBSERVATION_TAIL_CHARS));
    }
    if text.is_empty() {
        text = format!("worker ended with status {:?}", report.status);
    }
    text
}

/// Model text with directive tags and the action block removed.
fn display_text(raw: &str) -> String {
    let without_action = ACTION_BLOCK.replace_all(raw, "");
    TAG_TOKEN.replace_all(&without_action, "").trim().to_string()
}

/// Deterministic delta chunks on character boundaries.
fn chunk_text(text: &str, max_chars: usize) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    chars.chunks(max_chars.max(1)).map(|c| c.iter().collect()).collect()
}
