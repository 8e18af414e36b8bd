//! HTTP session service and command-line front end for `awareness-core`.

pub mod api;
pub mod cli;
pub mod store;

pub use api::router;
pub use store::{ServiceError, SessionService};
