#![allow(dead_code)]

use std::sync::Arc;

use cryptosearch_core::storage::MemoryStorage;
use cryptosearch_core::ttp::{Outbox, RegistryStore, TtpConfig, TtpService};
use cryptosearch_core::workflow::{Client, CollectingObserver, UserSession, WorkflowConfig};
use cryptosearch_core::StorageBackend;

pub const OWNER: &str = "owner@example.org";
pub const USER: &str = "user@example.org";
pub const OTHER: &str = "other@example.org";
pub const PASS: &str = "Corr3ct#Horse";

/// Cheap parameters: bcrypt cost 4 and 2048-bit session keys.
pub fn fast_config() -> WorkflowConfig {
    WorkflowConfig {
        bcrypt_cost: 4,
        rsa_bits: 2048,
        ..WorkflowConfig::default()
    }
}

pub struct World {
    pub storage: Arc<MemoryStorage>,
    pub ttp: Arc<TtpService>,
    pub observer: Arc<CollectingObserver>,
    pub client: Client,
}

impl World {
    pub fn new() -> Self {
        Self::with_storage(Arc::new(MemoryStorage::new()), |s| s)
    }

    /// `wrap` decorates the storage the client sees; the key service always
    /// sees the bare backend.
    pub fn with_storage(
        storage: Arc<MemoryStorage>,
        wrap: impl FnOnce(Arc<MemoryStorage>) -> Arc<dyn StorageBackend + 'static>,
    ) -> Self {
        let ttp = Arc::new(
            TtpService::new(
                TtpConfig {
                    min_rsa_bits: 2048,
                    ..TtpConfig::default()
                },
                RegistryStore::Memory,
                Outbox::in_memory(),
                storage.clone(),
            )
            .unwrap(),
        );
        let observer = Arc::new(CollectingObserver::new());
        let client = Client::new(ttp.clone(), wrap(storage.clone()), fast_config())
            .with_observer(observer.clone());
        World {
            storage,
            ttp,
            observer,
            client,
        }
    }

    pub fn session(&self, email: &str) -> UserSession {
        if self.ttp.user(email).is_none() {
            self.client.signup(email, PASS).unwrap();
        }
        self.client.login(email, PASS).unwrap()
    }
}
