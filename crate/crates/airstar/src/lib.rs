//! Service and command-line front end: live station/onboard processes,
//! client WebSocket server, remote model backends, replay and evaluation.

pub mod cli;
pub mod eval;
pub mod live;
pub mod remote;
pub mod replay;
pub mod server;
