//! Stateless HTTP inference over one glyphforge checkpoint.
//!
//! | method | path          | body                                   |
//! |--------|---------------|----------------------------------------|
//! | GET    | `/styles`     |                                        |
//! | POST   | `/generate`   | `{"chars", "weights"}`                 |
//! | POST   | `/interpolate`| `{"chars", "from", "to", "steps"}`     |
//! | GET    | `/healthz`    |                                        |
//!
//! Every endpoint except `/healthz` answers 503 until the checkpoint has
//! loaded. Validation failures are 400 with `{"error": {"code", "message"}}`.

use std::future::Future;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, OnceLock};

use axum::routing::{get, post};
use axum::Router;

pub mod api;
mod model;

pub use api::ApiError;
pub use model::LoadedModel;

pub const DEFAULT_MAX_CHARS: usize = 64;
pub const DEFAULT_MAX_STEPS: usize = 33;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Limits {
    pub max_chars: usize,
    pub max_steps: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            max_chars: DEFAULT_MAX_CHARS,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub checkpoint: PathBuf,
    pub catalog: Option<PathBuf>,
    /// Overrides the source font recorded in the checkpoint.
    pub source_font: Option<PathBuf>,
    pub bind: SocketAddr,
    pub limits: Limits,
}

impl ServiceConfig {
    pub fn validate(&self) -> glyphforge::Result<()> {
        if self.limits.max_chars == 0 || self.limits.max_steps < 2 {
            return Err(glyphforge::Error::ConfigInvalid(format!(
                "limits must be positive (max-chars {}, max-steps {} >= 2)",
                self.limits.max_chars, self.limits.max_steps
            )));
        }
        Ok(())
    }
}

/// Shared by all handlers. The model slot is filled exactly once.
#[derive(Debug, Default)]
pub struct AppState {
    pub model: OnceLock<Arc<LoadedModel>>,
    pub limits: Limits,
}

impl AppState {
    pub fn loading(limits: Limits) -> Arc<Self> {
        Arc::new(Self {
            model: OnceLock::new(),
            limits,
        })
    }

    pub fn ready(model: LoadedModel, limits: Limits) -> Arc<Self> {
        let state = Self::loading(limits);
        state.install(model);
        state
    }

    pub fn install(&self, model: LoadedModel) {
        // A second install is a programming error; keep the first model.
        let _ = self.model.set(Arc::new(model));
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/styles", get(api::styles))
        .route("/generate", post(api::generate))
        .route("/interpolate", post(api::interpolate))
        .route("/healthz", get(api::healthz))
        .fallback(api::not_found)
        .with_state(state)
}

/// Binds, starts answering (503 while loading), loads the model on a
/// blocking thread, and serves until `shutdown` resolves. A load failure
/// stops the server and is returned.
pub async fn run(
    config: ServiceConfig,
    shutdown: impl Future<Output = ()> + Send + 'static,
    on_listening: impl FnOnce(SocketAddr),
) -> Result<(), RunError> {
    config.validate()?;
    let listener = tokio::net::TcpListener::bind(config.bind).await?;
    on_listening(listener.local_addr()?);
    let state = AppState::loading(config.limits);

    let (load_failed_tx, load_failed_rx) = tokio::sync::oneshot::channel::<glyphforge::Error>();
    let loader_state = state.clone();
    tokio::task::spawn_blocking(move || {
        match LoadedModel::load(
            &config.checkpoint,
            config.catalog.as_deref(),
            config.source_font.as_deref(),
        ) {
            Ok(model) => loader_state.install(model),
            Err(e) => {
                let _ = load_failed_tx.send(e);
            }
        }
    });

    let failure = Arc::new(std::sync::Mutex::new(None));
    let failure_slot = failure.clone();
    let stop = async move {
        tokio::select! {
            _ = shutdown => {}
            Ok(e) = load_failed_rx => {
                *failure_slot.lock().expect("not poisoned") = Some(e);
            }
        }
    };
    axum::serve(listener, router(state)).with_graceful_shutdown(stop).await?;
    let failed = failure.lock().expect("not poisoned").take();
    match failed {
        Some(e) => Err(RunError::Load(e)),
        None => Ok(()),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Load(#[from] glyphforge::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
