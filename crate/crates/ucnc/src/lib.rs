//! Packet-level simulator and control library for mixed-cast service function
//! chains in distributed computing networks, with an exact capacity-region
//! oracle for desk-scale verification.
//!
//! The crate is organized around the control loop:
//!
//! - [`topology`]: the physical network (nodes with processing capacity,
//!   directed or undirected links with transmission capacity).
//! - [`chaining`]: service chains, cumulative scaling factors, the layered
//!   graph expansion, and route objects inside it.
//! - [`controller`]: virtual queues and minimum-cost route selection
//!   (shortest path, exact and approximate Steiner arborescences, anycast).
//! - [`dataplane`]: physical queues serving routed packets under
//!   hop-priority (ENTO) or FIFO scheduling, with delivery accounting.
//! - [`oracle`]: exact rational route enumeration, capacity-region
//!   feasibility and maximum supportable rate, conservation checking, and
//!   flow decomposition.
//! - [`harness`]: scenario presets, the slot loop, policies, sweeps, and
//!   CSV output; backs the `ucnc` command-line tool.

pub mod chaining;
pub mod controller;
pub mod dataplane;
pub mod harness;
pub mod oracle;
pub mod rat;
pub mod topology;
