//! HTTP/JSON front end for the exercise platform.
//!
//! Every endpoint authenticates a bearer token, runs the matching
//! [`Platform`] call on the blocking pool, and maps errors to
//! `{"code", "detail"}` bodies. Accepted submissions are handed to a
//! background worker that computes labels and thumbnails.

mod auth;
mod config;
mod error;
mod routes;

use std::future::{Future, IntoFuture};
use std::io;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use pausepoint_core::platform::PlatformConfig;
use pausepoint_core::store::StoreError;
use pausepoint_core::{Platform, Principal, ResponseId, Store, UserId};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::{mpsc, oneshot, Semaphore};
use tokio::task::JoinHandle;

pub use auth::{generate_token, token_digest, Authenticator};
pub use config::{ServiceConfig, TokenEntry};
pub use error::{status_for, ApiError};
pub use routes::{router, AUDIO_CAP, IMAGE_CAP, INK_CAP, POSTER_CAP, VIDEO_CAP};

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("bad config: {0}")]
    BadConfig(String),
    #[error("cannot listen on {addr}: {source}")]
    PortInUse { addr: SocketAddr, source: io::Error },
    #[error("store: {0}")]
    Store(#[from] StoreError),
    #[error(transparent)]
    Platform(#[from] pausepoint_core::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl ServeError {
    pub fn code(&self) -> &'static str {
        match self {
            ServeError::BadConfig(_) => "bad-config",
            ServeError::PortInUse { .. } => "port-in-use",
            ServeError::Store(StoreError::Locked(_)) => "store-locked",
            ServeError::Store(_) | ServeError::Platform(_) => "storage-error",
            ServeError::Io(_) => "io-error",
        }
    }
}

#[derive(Clone)]
pub struct AppState {
    pub(crate) platform: Arc<Platform>,
    pub(crate) auth: Arc<Authenticator>,
    pub(crate) upload_gate: Arc<Semaphore>,
    pub(crate) upload_units: u32,
    pub(crate) http: reqwest::Client,
    pub(crate) jobs: mpsc::UnboundedSender<ResponseId>,
}

impl AppState {
    pub(crate) fn enqueue(&self, id: ResponseId) {
        if self.jobs.send(id).is_err() {
            tracing::warn!(%id, "post-processing worker is gone; response stays pending until restart");
        }
    }
}

/// Runs post-processing for queued responses one at a time until `stop`
/// fires. A job already running is allowed to finish.
async fn worker(platform: Arc<Platform>, mut jobs: mpsc::UnboundedReceiver<ResponseId>, mut stop: oneshot::Receiver<()>) {
    loop {
        let id = tokio::select! {
            biased;
            _ = &mut stop => break,
            job = jobs.recv() => match job {
                Some(id) => id,
                None => break,
            },
        };
        let p = platform.clone();
        match tokio::task::spawn_blocking(move || p.process_response(id)).await {
            Ok(Ok(_)) => tracing::debug!(%id, "processed"),
            Ok(Err(e)) => tracing::error!(%id, code = e.code(), error = %e, "post-processing failed"),
            Err(e) => tracing::error!(%id, error = %e, "post-processing panicked"),
        }
    }
}

/// A platform with its router and post-processing worker. Must be created
/// inside a Tokio runtime.
pub struct Service {
    state: AppState,
    worker: JoinHandle<()>,
    stop_worker: oneshot::Sender<()>,
    grace: Duration,
}

impl Service {
    pub fn new(platform: Platform, auth: Authenticator, max_inflight_upload_bytes: u64) -> Result<Self, ServeError> {
        let platform = Arc::new(platform);
        let (tx, rx) = mpsc::unbounded_channel();
        let pending = platform.unprocessed_responses()?;
        for id in pending {
            tx.send(id).expect("receiver is alive");
        }
        let units = (max_inflight_upload_bytes / 1024).clamp(1, u64::from(u32::MAX >> 4)) as u32;
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs(15))
            .build()
            .map_err(|e| ServeError::BadConfig(format!("http client: {e}")))?;
        let (stop_worker, stop) = oneshot::channel();
        let worker = tokio::spawn(worker(platform.clone(), rx, stop));
        Ok(Service {
            state: AppState {
                platform,
                auth: Arc::new(auth),
                upload_gate: Arc::new(Semaphore::new(units as usize)),
                upload_units: units,
                http,
                jobs: tx,
            },
            worker,
            stop_worker,
            grace: Duration::from_secs(10),
        })
    }

    /// Open the store named by `config`, register the principals of its
    /// token file, and build the service.
    pub fn from_config(config: &ServiceConfig) -> Result<Self, ServeError> {
        config.check()?;
        let tokens = config.tokens()?;
        let store = Store::open(&config.data_dir)?;
        let platform = Platform::new(
            store,
            PlatformConfig {
                default_student_gallery_access: config.student_gallery_access,
                ..PlatformConfig::default()
            },
        );
        for (token, entry) in &tokens {
            let principal = Principal {
                user_id: UserId(entry.user_id.clone()),
                role: entry.role,
                display_name: entry.display_name.clone(),
            };
            platform
                .register_principal(&principal, Some(&token_digest(token)))
                .map_err(|e| ServeError::BadConfig(format!("token for {}: {e}", entry.user_id)))?;
        }
        let auth = Authenticator::new(platform.token_digests()?);
        Ok(Self::new(platform, auth, config.max_inflight_upload_bytes)?.with_shutdown_grace(Duration::from_secs(config.shutdown_grace_secs)))
    }

    pub fn with_shutdown_grace(mut self, grace: Duration) -> Self {
        self.grace = grace;
        self
    }

    pub fn platform(&self) -> &Arc<Platform> {
        &self.state.platform
    }

    pub fn router(&self) -> axum::Router {
        router(self.state.clone())
    }

    /// Serve until `shutdown` resolves, then give in-flight requests the
    /// grace period to finish, stop the worker and checkpoint the store.
    pub async fn run(self, listener: TcpListener, shutdown: impl Future<Output = ()> + Send + 'static) -> io::Result<()> {
        let app = self.router();
        let (fired, signalled) = oneshot::channel::<()>();
        let signal = async move {
            shutdown.await;
            let _ = fired.send(());
        };
        let server = axum::serve(listener, app).with_graceful_shutdown(signal).into_future();
        let grace = self.grace;
        tokio::select! {
            served = server => served?,
            _ = async move {
                match signalled.await {
                    Ok(()) => tokio::time::sleep(grace).await,
                    Err(_) => std::future::pending().await,
                }
            } => tracing::warn!(?grace, "in-flight requests still running after the grace period; dropping them"),
        }
        let Service {
            state,
            worker,
            stop_worker,
            ..
        } = self;
        let platform = state.platform.clone();
        drop(state);
        let _ = stop_worker.send(());
        let _ = worker.await;
        tokio::task::spawn_blocking(move || {
            if let Err(e) = platform.store().checkpoint() {
                tracing::error!(error = %e, "checkpoint at shutdown failed");
            }
            drop(platform);
        })
        .await
        .map_err(io::Error::other)?;
        Ok(())
    }
}

pub async fn bind(config: &ServiceConfig) -> Result<TcpListener, ServeError> {
    let addr = SocketAddr::new(config.bind, config.port);
    TcpListener::bind(addr)
        .await
        .map_err(|source| ServeError::PortInUse { addr, source })
}

/// Serve `config` until `shutdown` resolves.
pub async fn serve(config: &ServiceConfig, shutdown: impl Future<Output = ()> + Send + 'static) -> Result<(), ServeError> {
    let service = Service::from_config(config)?;
    let listener = bind(config).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    service.run(listener, shutdown).await?;
    Ok(())
}

/// Resolves on SIGTERM or Ctrl-C.
pub async fn termination_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}

/// A service running on a background task, for tests and embedding.
pub struct RunningService {
    pub addr: SocketAddr,
    pub platform: Arc<Platform>,
    stop: Option<oneshot::Sender<()>>,
    task: JoinHandle<io::Result<()>>,
}

impl RunningService {
    pub async fn start(service: Service, listener: TcpListener) -> io::Result<Self> {
        let addr = listener.local_addr()?;
        let platform = service.platform().clone();
        let (stop, stopped) = oneshot::channel::<()>();
        let task = tokio::spawn(service.run(listener, async {
            let _ = stopped.await;
        }));
        Ok(RunningService {
            addr,
            platform,
            stop: Some(stop),
            task,
        })
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub async fn shutdown(mut self) -> io::Result<()> {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        drop(self.platform);
        self.task.await.map_err(io::Error::other)?
    }
}
