//! Command-line front end and HTTP session server.

pub mod server;
