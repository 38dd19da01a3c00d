//! TOML configuration and service assembly.
//!
//! ```toml
//! skills_dir = "skills"
//!
//! [server]
//! bind = "127.0.0.1:8787"
//!
//! [provider]
//! kind = "http"                    # or "replay"
//! endpoint = "http://127.0.0.1:8000/v1"
//! model = "default"
//! api_key_env = "BLOCLAW_API_KEY"
//! # replay_script = "script.json"  # kind = "replay"
//!
//! [sandbox]
//! python = "python3"
//! timeout_secs = 30.0
//! memory_cap_bytes = 1073741824
//!
//! [gateway]
//! fold_endpoint = "https://api.esmatlas.com/foldSequence/v1/pdb/"
//! archive_url_template = "https://files.rcsb.org/download/{id}.pdb"
//! # fixtures_dir = "fixtures/gateway"
//!
//! [session]
//! workspace_root = "workspaces"
//! follow_up = true
//! ```
//!
//! Relative paths resolve against the config file's directory.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::gateway::{FixtureTransport, GatewayConfig, ScienceGateway};
use crate::intake::{IntakeConfig, IntakeEngine};
use crate::registry::Registry;
use crate::sandbox::{SandboxConfig, Supervisor};
use crate::session::{ArtifactStore, HttpProvider, HttpProviderConfig, ModelProvider, ReplayScript, Services, SessionConfig};

pub const CONFIG_ENV: &str = "BLOCLAW_CONFIG";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("{0}")]
    Invalid(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    #[default]
    Http,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    #[serde(flatten)]
    pub http: HttpProviderConfig,
    pub replay_script: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewaySection {
    #[serde(flatten)]
    pub client: GatewayConfig,
    /// Serve remote calls from recorded fixtures instead of the network.
    pub fixtures_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerConfig {
    pub bind: String,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self { bind: "127.0.0.1:8787".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub skills_dir: PathBuf,
    pub server: ServerConfig,
    pub provider: ProviderConfig,
    pub sandbox: SandboxConfig,
    pub gateway: GatewaySection,
    pub intake: IntakeConfig,
    pub session: SessionConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            skills_dir: PathBuf::from("skills"),
            server: ServerConfig::default(),
            provider: ProviderConfig::default(),
            sandbox: SandboxConfig::default(),
            gateway: GatewaySection::default(),
            intake: IntakeConfig::default(),
            session: SessionConfig::default(),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let mut config: Config =
            toml::from_str(text).map_err(|source| ConfigError::Parse { path: path.to_path_buf(), source })?;
        if let Some(base) = path.parent() {
            config.resolve_paths(base);
        }
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        Self::from_toml(&text, path)
    }

    /// The explicit path, else `$BLOCLAW_CONFIG`, else defaults.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        match path.map(Path::to_path_buf).or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from)) {
            Some(path) => Self::from_file(&path),
            None => Ok(Self::default()),
        }
    }

    fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() && !p.as_os_str().is_empty() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut self.skills_dir);
        resolve(&mut self.session.workspace_root);
        resolve(&mut self.sandbox.cache_dir);
        if let Some(p) = self.gateway.fixtures_dir.as_mut() {
            resolve(p);
        }
        if let Some(p) = self.provider.replay_script.as_mut() {
            resolve(p);
        }
    }

    pub fn provider(&self) -> Result<Arc<dyn ModelProvider>, ConfigError> {
        match self.provider.kind {
            ProviderKind::Http => HttpProvider::new(self.provider.http.clone())
                .map(|p| Arc::new(p) as Arc<dyn ModelProvider>)
                .map_err(|e| ConfigError::Invalid(e.to_string())),
            ProviderKind::Replay => {
                let path = self
                    .provider
                    .replay_script
                    .as_ref()
                    .ok_or_else(|| ConfigError::Invalid("provider.kind = \"replay\" needs replay_script".into()))?;
                Ok(Arc::new(ReplayScript::load(path)?.provider()))
            }
        }
    }

    pub fn gateway(&self) -> Result<ScienceGateway, ConfigError> {
        match &self.gateway.fixtures_dir {
            Some(dir) => Ok(ScienceGateway::new(self.gateway.client.clone(), Arc::new(FixtureTransport::load(dir)?))),
            None => ScienceGateway::http(self.gateway.client.clone()).map_err(|e| ConfigError::Invalid(e.to_string())),
        }
    }

    /// Wires every subsystem around `provider`.
    pub fn services(&self, provider: Arc<dyn ModelProvider>) -> Result<Services, ConfigError> {
        std::fs::create_dir_all(&self.session.workspace_root)?;
        std::fs::create_dir_all(&self.sandbox.cache_dir)?;
        let sandbox = Arc::new(Supervisor::new(self.sandbox.clone()));
        Ok(Services {
            provider,
            registry: Arc::new(Registry::open(&self.skills_dir)?),
            intake: IntakeEngine::new(self.intake, sandbox.clone()),
            sandbox,
            gateway: self.gateway()?,
            store: Arc::new(ArtifactStore::new()),
        })
    }
}
