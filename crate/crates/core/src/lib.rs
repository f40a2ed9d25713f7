//! Event-driven simulator for an energy-proportional optical data-center
//! network: a three-tier Clos whose uplink lasers are gated on and off in
//! stages by queue-backlog watermarks, with in-band control frames
//! coordinating both ends of each link.

pub mod cli;
pub mod config;
pub mod engine;
pub mod event;
pub mod metrics;
pub mod power;
pub mod server;
pub mod switch;
pub mod time;
pub mod topology;
pub mod traffic;
pub mod transceiver;
