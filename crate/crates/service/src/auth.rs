use std::collections::HashMap;
use std::sync::RwLock;

use pausepoint_core::Principal;
use sha2::{Digest, Sha256};

pub fn token_digest(token: &str) -> String {
    hex::encode(Sha256::digest(token.as_bytes()))
}

pub fn generate_token() -> String {
    uuid::Uuid::new_v4().simple().to_string()
}

/// Bearer-token lookup. Only digests of tokens are held.
#[derive(Debug, Default)]
pub struct Authenticator {
    by_digest: RwLock<HashMap<String, Principal>>,
}

impl Authenticator {
    pub fn new(entries: impl IntoIterator<Item = (String, Principal)>) -> Self {
        Authenticator {
            by_digest: RwLock::new(entries.into_iter().collect()),
        }
    }

    pub fn insert_digest(&self, digest: String, principal: Principal) {
        self.by_digest.write().unwrap().insert(digest, principal);
    }

    pub fn authenticate(&self, token: &str) -> Option<Principal> {
        self.by_digest.read().unwrap().get(&token_digest(token)).cloned()
    }
}
