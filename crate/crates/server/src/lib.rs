//! HTTP game service and offline analysis commands built on `soundmem-core`.

pub mod api;
pub mod commands;
pub mod manifest;

pub use api::{router, Service, ServiceConfig};
pub use manifest::PoolManifest;
