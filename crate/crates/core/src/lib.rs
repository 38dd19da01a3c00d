//! Core runtime for the BloClaw agent workspace.
//!
//! The crate is organised by subsystem:
//!
//! - [`routing`]: tolerant tag scanning plus maximal-munch token extraction that
//!   turns raw model text into a [`routing::DirectiveEnvelope`].
//! - [`sandbox`]: instrumented worker scripts, the sentinel-framed artifact
//!   wire protocol and the process supervisor.
//! - [`registry`]: builtin actions and model-authored skill scripts on disk.
//! - [`intake`]: mounted-file classification and token-budgeted digests.
//! - [`gateway`]: fold/archive clients and viewport scene composition.
//! - [`session`]: the agent loop and its streamed event vocabulary.
//! - [`bench`]: deterministic stress corpora and the suite runners.

pub mod bench;
pub mod config;
pub mod gateway;
pub mod intake;
pub mod registry;
pub mod routing;
pub mod sandbox;
pub mod session;
pub mod tokens;
