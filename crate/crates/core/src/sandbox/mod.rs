//! Instrumented code execution.
//!
//! User code is wrapped between an interception header and a harvest footer,
//! written into the session workspace and run by a fresh worker process. The
//! worker frames every captured figure as a sentinel line on stdout; the
//! supervisor demultiplexes that stream back into ordered artifacts.

pub mod harvest;
pub mod script;
mod supervisor;

pub use harvest::{
    harvest_artifacts, ArtifactKind, ArtifactOrigin, CapturedArtifact, Harvester, WireRecord, SENTINEL,
};
pub use script::{build_instrumented_script, InstrumentedScript};
pub use supervisor::{
    ExecutionReport, ExecutionRequest, ExecutionStatus, ProbeCall, Sandbox, SandboxConfig, SandboxError,
    Supervisor, DEFAULT_MEMORY_CAP, DEFAULT_TIMEOUT,
};
