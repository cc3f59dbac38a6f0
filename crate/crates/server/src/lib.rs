//! `adaasd`: HTTP front end of the control server, backed by in-process workers.

pub mod api;
pub mod config;

use std::sync::Arc;

use adaas_core::bridge::LocalBridge;
use adaas_core::control::{ControlError, ControlServer};
use adaas_core::data_io::Bus;
use adaas_core::registry::Registry;

pub use api::router;
pub use config::{ConfigError, ServerConfig};

/// A control server wired to a fresh local bridge.
pub struct App {
    pub control: Arc<ControlServer>,
    pub bridge: Arc<LocalBridge>,
}

impl App {
    pub fn start(cfg: &ServerConfig) -> Result<Self, ControlError> {
        let bridge = Arc::new(LocalBridge::new(Arc::new(Bus::new()), cfg.bridge()));
        let control = Arc::new(ControlServer::start(
            cfg.control(),
            Arc::new(Registry::with_builtins()),
            bridge.clone(),
        )?);
        Ok(Self { control, bridge })
    }

    pub fn router(&self) -> axum::Router {
        router(self.control.clone())
    }
}
