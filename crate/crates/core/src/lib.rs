//! # tdmh-core
//!
//! Protocol logic and a deterministic discrete-event simulator for TDMH, a
//! centralized TDMA mesh MAC built on constructive-interference flooding.
//!
//! The crate is organized by protocol activity:
//!
//! - [`netconfig`]: network parameters, tile/slot arithmetic, control overhead.
//! - [`flood`]: abstracted Glossy floods (hop discovery, sync counter,
//!   schedule dissemination).
//! - [`topology`]: the round-robin uplink topology collection algorithm.
//! - [`scheduler`]: stream routing, greedy slot allocation, the schedule
//!   verifier and the schedule codec.
//! - [`datalink`]: per-node slot programs, forwarding-buffer allocation and
//!   data-slot execution.
//! - [`sim`]: the tile-by-tile simulator, power model and measurement helpers.
//! - [`formats`]: text formats shared by the CLI and the bindings.

pub mod datalink;
pub mod flood;
pub mod formats;
pub mod graph;
pub mod netconfig;
pub mod scheduler;
pub mod sim;
pub mod topology;

mod node;

pub use graph::NetworkGraph;
pub use netconfig::{NetworkConfiguration, TileKind};
pub use node::NodeId;
