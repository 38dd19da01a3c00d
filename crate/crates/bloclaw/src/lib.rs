//! Network surface of the agent workspace.
//!
//! | route | |
//! |---|---|
//! | `POST /sessions` | new session, `{"id": ...}` |
//! | `POST /sessions/{id}/messages` | queue a user message, `202` |
//! | `GET /sessions/{id}/events` | server-sent events, one JSON document each |
//! | `POST /sessions/{id}/files` | multipart upload, returns the mounted file |
//! | `GET /artifacts/{id}` | artifact payload with its media type |

pub mod server;

pub use server::{router, AppState};
