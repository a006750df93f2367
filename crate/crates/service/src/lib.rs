//! HTTP service for meme generation.
//!
//! Endpoints:
//!
//! * `GET /api/themes`: non-empty themes with their classes.
//! * `POST /api/generate`: a caption for a chosen or random class, never
//!   repeated within a session.
//! * `POST /api/custom`: multipart `image` upload, matched to a class and
//!   captioned.
//! * `GET /api/images/{class}`, `GET /api/render`: class images and rendered
//!   memes.
//! * `GET /api/health`: liveness plus cache and generation counters.
//!
//! Errors are JSON `{"code", "message"}` objects.

pub mod api;
pub mod cache;
pub mod config;
pub mod session;
pub mod state;

use std::sync::Arc;

pub use api::router;
pub use cache::{CaptionCache, MemeCache};
pub use config::ServiceConfig;
pub use state::{AppState, Artifacts, LoadError};

/// Serves on an already bound listener until ctrl-c.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    if state.config.warm_on_start {
        let s = Arc::clone(&state);
        tokio::task::spawn_blocking(move || s.warm_all());
    }
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
