//! Database manager service: hosts named quality preserving database
//! instances, quotes sample costs for test requests, and executes tests
//! against a durable per-instance journal.

pub mod config;
pub mod error;
pub mod http;
pub mod journal;
pub mod manager;

pub use config::ServiceConfig;
pub use error::{Result, ServiceError};
pub use http::{router, serve};
pub use manager::{CreateInstance, ExecuteRequest, Manager, Snapshot};
