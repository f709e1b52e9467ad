//! Library half of the `coda` binary: the HTTP review service, kept here so
//! tests can drive the router without binding a socket.

pub mod server;

pub use server::{router, ServiceState};
