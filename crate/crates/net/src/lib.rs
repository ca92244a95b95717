//! HTTP transport for the key service.
//!
//! [`router`] exposes any [`KeyService`] as JSON-over-HTTP with bearer
//! tokens; [`HttpKeyService`] is the matching blocking client, so workflows
//! run unchanged against a remote service. TLS is expected to be terminated
//! in front of the server.

mod client;
mod server;

pub use client::HttpKeyService;
pub use server::{router, serve, spawn_background, ServerHandle};

pub use cryptosearch_core::ttp::KeyService;
