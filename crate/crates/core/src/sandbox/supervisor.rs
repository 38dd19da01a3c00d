use std::path::{Path, PathBuf};
use std::os::unix::process::ExitStatusExt;
use std::process::Stdio;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use tokio::io::AsyncReadExt;
use tokio::process::Command;
use tracing::{debug, warn};

use super::harvest::{ArtifactKind, ArtifactOrigin, CapturedArtifact, Harvester};
use super::script::build_instrumented_script;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);
pub const DEFAULT_MEMORY_CAP: u64 = 1 << 30;
const PROBE_FLAG: &str = "--bloclaw-probe";

#[derive(Debug, thiserror::Error)]
pub enum SandboxError {
    #[error("invalid execution request: {0}")]
    InvalidRequest(String),
    #[error("worker runtime `{runtime}` could not be started: {source}")]
    WorkerUnavailable {
        runtime: String,
        #[source]
        source: std::io::Error,
    },
    #[error("sandbox i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SandboxConfig {
    /// Worker interpreter.
    pub python: PathBuf,
    pub timeout_secs: f64,
    pub memory_cap_bytes: u64,
    pub network: bool,
    /// Shared, writable cache for graphics runtimes (font caches etc.).
    pub cache_dir: PathBuf,
    pub max_output_bytes: usize,
}

impl Default for SandboxConfig {
    fn default() -> Self {
        Self {
            python: PathBuf::from("python3"),
            timeout_secs: DEFAULT_TIMEOUT.as_secs_f64(),
            memory_cap_bytes: DEFAULT_MEMORY_CAP,
            network: false,
            cache_dir: std::env::temp_dir().join("bloclaw-cache"),
            max_output_bytes: 256 << 20,
        }
    }
}

/// A builtin probe invocation passed to the worker through argv.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeCall {
    pub name: String,
    pub args: serde_json::Value,
}

impl ProbeCall {
    pub fn new(name: &str, args: serde_json::Value) -> Self {
        Self { name: name.to_string(), args }
    }
}

#[derive(Debug, Clone)]
pub struct ExecutionRequest {
    pub user_code: String,
    pub workspace_dir: PathBuf,
    pub timeout: Duration,
    pub memory_cap: u64,
    pub mounted_files: Vec<PathBuf>,
    pub env: Vec<(String, String)>,
    pub probe: Option<ProbeCall>,
}

impl ExecutionRequest {
    pub fn new(user_code: impl Into<String>, workspace_dir: impl Into<PathBuf>) -> Self {
        Self {
            user_code: user_code.into(),
            workspace_dir: workspace_dir.into(),
            timeout: DEFAULT_TIMEOUT,
            memory_cap: DEFAULT_MEMORY_CAP,
            mounted_files: Vec::new(),
            env: Vec::new(),
            probe: None,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn validate(&self) -> Result<(), SandboxError> {
        if self.timeout.is_zero() {
            return Err(SandboxError::InvalidRequest("timeout must be positive".into()));
        }
        if !self.workspace_dir.is_dir() {
            return Err(SandboxError::InvalidRequest(format!(
                "workspace {} does not exist",
                self.workspace_dir.display()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionStatus {
    Ok,
    Error,
    Timeout,
    Killed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExecutionReport {
    pub status: ExecutionStatus,
    pub artifacts: Vec<CapturedArtifact>,
    pub duration_ms: u64,
    pub worker_exit_code: Option<i32>,
}

impl ExecutionReport {
    pub fn figures(&self) -> impl Iterator<Item = &CapturedArtifact> {
        self.artifacts.iter().filter(|a| a.kind.is_figure())
    }

    pub fn first_of(&self, kind: ArtifactKind) -> Option<&CapturedArtifact> {
        self.artifacts.iter().find(|a| a.kind == kind)
    }

    /// Concatenated user stdout, records excluded.
    pub fn stdout(&self) -> String {
        self.artifacts
            .iter()
            .filter(|a| a.kind == ArtifactKind::Stdout)
            .map(|a| a.payload.as_str())
            .collect()
    }

    pub fn stderr(&self) -> Option<&str> {
        self.first_of(ArtifactKind::Stderr).map(|a| a.payload.as_str())
    }
}

/// Anything that can run worker code; the supervisor is the real one.
#[async_trait]
pub trait Sandbox: Send + Sync {
    async fn execute(&self, req: ExecutionRequest) -> Result<ExecutionReport, SandboxError>;

    /// A request carrying this sandbox's configured caps.
    fn request_for(&self, user_code: String, workspace_dir: &Path) -> ExecutionRequest {
        ExecutionRequest::new(user_code, workspace_dir)
    }

    async fn run_probe(&self, probe: ProbeCall, workspace_dir: &Path) -> Result<ExecutionReport, SandboxError> {
        let mut req = self.request_for(String::new(), workspace_dir);
        req.probe = Some(probe);
        self.execute(req).await
    }
}

/// The instrumented script on disk, removed on drop. The name is derived
/// from the content so tracebacks read the same on every run.
struct ScriptFile(PathBuf);

impl ScriptFile {
    fn create(dir: &Path, text: &str) -> std::io::Result<Self> {
        use sha2::{Digest, Sha256};
        use std::io::Write;
        let digest = Sha256::digest(text.as_bytes());
        let stem: String = digest[..6].iter().map(|b| format!("{b:02x}")).collect();
        for attempt in 0u32.. {
            let name = match attempt {
                0 => format!(".bloclaw-run-{stem}.py"),
                n => format!(".bloclaw-run-{stem}-{n}.py"),
            };
            let path = dir.join(name);
            match std::fs::OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut file) => {
                    file.write_all(text.as_bytes())?;
                    return Ok(Self(path));
                }
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(e),
            }
        }
        unreachable!()
    }

    fn path(&self) -> &Path {
        &self.0
    }
}

impl Drop for ScriptFile {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.0);
    }
}

#[derive(Debug, Clone, Default)]
pub struct Supervisor {
    config: SandboxConfig,
}

impl Supervisor {
    pub fn new(config: SandboxConfig) -> Self {
        Self { config }
    }

    pub fn config(&self) -> &SandboxConfig {
        &self.config
    }

    /// Request pre-filled with the configured caps.
    pub fn request(&self, user_code: impl Into<String>, workspace_dir: impl Into<PathBuf>) -> ExecutionRequest {
        let mut req = ExecutionRequest::new(user_code, workspace_dir);
        req.timeout = Duration::from_secs_f64(self.config.timeout_secs.max(0.001));
        req.memory_cap = self.config.memory_cap_bytes;
        req
    }

    /// Whether the configured interpreter starts at all.
    pub async fn worker_available(&self) -> bool {
        Command::new(&self.config.python)
            .arg("-c")
            .arg("pass")
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .status()
            .await
            .is_ok_and(|s| s.success())
    }

    fn command(&self, req: &ExecutionRequest, script_path: &Path) -> Command {
        let workspace = req.workspace_dir.canonicalize().unwrap_or_else(|_| req.workspace_dir.clone());
        let tmp = workspace.join(".tmp");
        let mpl = self.config.cache_dir.join("matplotlib");
        let _ = std::fs::create_dir_all(&tmp);
        let _ = std::fs::create_dir_all(&mpl);

        let mut cmd = Command::new(&self.config.python);
        cmd.arg("-B").arg("-s").arg(script_path);
        if let Some(probe) = &req.probe {
            cmd.arg(PROBE_FLAG).arg(&probe.name).arg(probe.args.to_string());
        }
        cmd.current_dir(&workspace)
            .env_clear()
            .env("PATH", std::env::var_os("PATH").unwrap_or_else(|| "/usr/bin:/bin".into()))
            .env("HOME", &workspace)
            .env("TMPDIR", &tmp)
            .env("LANG", "C.UTF-8")
            .env("PYTHONIOENCODING", "utf-8")
            .env("PYTHONDONTWRITEBYTECODE", "1")
            .env("MPLBACKEND", "Agg")
            .env("MPLCONFIGDIR", &mpl)
            .env("OPENBLAS_NUM_THREADS", "1")
            .env("OMP_NUM_THREADS", "1")
            .env("MKL_NUM_THREADS", "1")
            .env("BLOCLAW_WORKSPACE", &workspace)
            .env("BLOCLAW_WRITABLE", &self.config.cache_dir)
            .env("BLOCLAW_NETWORK", if self.config.network { "1" } else { "0" });
        for (key, value) in &req.env {
            cmd.env(key, value);
        }
        cmd.stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .kill_on_drop(true)
            .process_group(0);

        let memory_cap = req.memory_cap;
        // SAFETY: only async-signal-safe libc calls run between fork and exec.
        unsafe {
            cmd.pre_exec(move || {
                let cap = libc::rlimit { rlim_cur: memory_cap as libc::rlim_t, rlim_max: memory_cap as libc::rlim_t };
                if memory_cap > 0 && libc::setrlimit(libc::RLIMIT_AS, &cap) != 0 {
                    return Err(std::io::Error::last_os_error());
                }
                let no_core = libc::rlimit { rlim_cur: 0, rlim_max: 0 };
                libc::setrlimit(libc::RLIMIT_CORE, &no_core);
                Ok(())
            });
        }
        cmd
    }
}

fn kill_group(pid: Option<u32>) {
    if let Some(pid) = pid {
        // SAFETY: plain syscall; a stale group id only yields ESRCH.
        unsafe {
            libc::kill(-(pid as libc::pid_t), libc::SIGKILL);
        }
    }
}

#[async_trait]
impl Sandbox for Supervisor {
    fn request_for(&self, user_code: String, workspace_dir: &Path) -> ExecutionRequest {
        self.request(user_code, workspace_dir)
    }

    async fn execute(&self, req: ExecutionRequest) -> Result<ExecutionReport, SandboxError> {
        req.validate()?;
        let script = build_instrumented_script(&req.user_code);
        let script_file = ScriptFile::create(&req.workspace_dir, &script.full_text)?;

        let started = Instant::now();
        let mut child = self
            .command(&req, script_file.path())
            .spawn()
            .map_err(|source| SandboxError::WorkerUnavailable {
                runtime: self.config.python.display().to_string(),
                source,
            })?;
        let pid = child.id();
        debug!(pid, "worker spawned");

        let mut stdout = child.stdout.take().expect("piped stdout");
        let mut stderr = child.stderr.take().expect("piped stderr");
        let max_output = self.config.max_output_bytes;
        let stdout_task = tokio::spawn(async move {
            let mut harvester = Harvester::new();
            let mut buf = vec![0u8; 64 * 1024];
            let mut total = 0usize;
            let mut overflow = false;
            loop {
                match stdout.read(&mut buf).await {
                    Ok(0) | Err(_) => break,
                    Ok(n) => {
                        total += n;
                        if total > max_output {
                            overflow = true;
                            kill_group(pid);
                            break;
                        }
                        harvester.feed(&buf[..n]);
                    }
                }
            }
            (harvester.finish(), overflow)
        });
        let stderr_task = tokio::spawn(async move {
            let mut bytes = Vec::new();
            let _ = stderr.read_to_end(&mut bytes).await;
            bytes
        });

        let waited = tokio::time::timeout(req.timeout, child.wait()).await;
        let (mut status, exit_code) = match waited {
            Ok(Ok(exit)) => match exit.code() {
                Some(0) => (ExecutionStatus::Ok, Some(0)),
                Some(code) => (ExecutionStatus::Error, Some(code)),
                // SIGKILL comes from the kernel's OOM killer or an operator;
                // any other signal is the worker crashing on its own.
                None if exit.signal() == Some(libc::SIGKILL) => (ExecutionStatus::Killed, None),
                None => (ExecutionStatus::Error, None),
            },
            Ok(Err(err)) => {
                kill_group(pid);
                return Err(SandboxError::Io(err));
            }
            Err(_) => {
                kill_group(pid);
                let _ = child.wait().await;
                (ExecutionStatus::Timeout, None)
            }
        };
        // Reap anything the worker left in its group.
        kill_group(pid);

        let (mut artifacts, overflow) = stdout_task.await.unwrap_or_default();
        let stderr_bytes = stderr_task.await.unwrap_or_default();
        let duration_ms = started.elapsed().as_millis() as u64;

        if overflow {
            warn!(max_output, "worker output cap exceeded");
            status = ExecutionStatus::Killed;
        }
        let stderr_text = String::from_utf8_lossy(&stderr_bytes).into_owned();
        if status == ExecutionStatus::Error && stderr_text.lines().last().is_some_and(|l| l.starts_with("MemoryError")) {
            status = ExecutionStatus::Killed;
        }
        if !stderr_text.is_empty() {
            let ordinal = artifacts.len();
            artifacts.push(CapturedArtifact::new(ArtifactKind::Stderr, ArtifactOrigin::Stream, stderr_text, None, ordinal));
        }
        Ok(ExecutionReport { status, artifacts, duration_ms, worker_exit_code: exit_code })
    }
}
