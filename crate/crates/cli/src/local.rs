//! Running commands against a data directory without a separate server.
//!
//! The store is opened in-process and served on an ephemeral loopback port,
//! so local and remote runs share the same client code.

use std::path::Path;

use pausepoint_client::Client;
use pausepoint_core::platform::PlatformConfig;
use pausepoint_core::{Platform, Principal, Role, Store, UserId};
use pausepoint_service::{generate_token, token_digest, Authenticator, RunningService, Service};

use crate::error::{CliError, Result};

pub struct LocalService {
    pub server: RunningService,
    pub client: Client,
}

/// Open `data_dir` and act as teacher `user_id`, creating it if needed. The
/// session token lives only in memory.
pub async fn open(data_dir: &Path, user_id: &str) -> Result<LocalService> {
    if !data_dir.is_dir() {
        return Err(CliError::new(
            "bad-config",
            format!("data dir {} does not exist", data_dir.display()),
        ));
    }
    let store = Store::open(data_dir).map_err(|e| pausepoint_service::ServeError::from(e))?;
    let platform = Platform::new(store, PlatformConfig::default());
    let operator = Principal {
        user_id: UserId(user_id.to_string()),
        role: Role::Teacher,
        display_name: user_id.to_string(),
    };
    let operator = match platform.principal(&operator.user_id) {
        Some(existing) => existing,
        None => platform.register_principal(&operator, None)?,
    };
    if operator.role != Role::Teacher {
        return Err(CliError::new("forbidden-role", format!("{user_id} is not a teacher")));
    }
    let auth = Authenticator::new(platform.token_digests()?);
    let token = generate_token();
    auth.insert_digest(token_digest(&token), operator);
    let service = Service::new(platform, auth, 1 << 30)?;
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0")
        .await
        .map_err(|e| CliError::new("io-error", e.to_string()))?;
    let server = RunningService::start(service, listener)
        .await
        .map_err(|e| CliError::new("io-error", e.to_string()))?;
    let client = Client::new(server.base_url(), token);
    Ok(LocalService { server, client })
}

impl LocalService {
    pub async fn close(self) -> Result<()> {
        self.server
            .shutdown()
            .await
            .map_err(|e| CliError::new("io-error", e.to_string()))
    }
}
