//! Deterministic discrete-time traffic game in which every agent follows
//! one decentralized protocol: local precedence, a tiered oracle profile,
//! perception bubbles, token-based conflict resolution and a fixed action
//! selection tree. Safety and liveness properties are checked at runtime.

pub mod bubble;
pub mod campaign;
pub mod config;
pub mod conflict;
pub mod dynamics;
pub mod engine;
pub mod grid;
pub mod oracles;
pub mod precedence;
pub mod road_network;
pub mod routing;
pub mod selection;
pub mod trace;
pub mod traffic_lights;
pub mod verify;
pub mod world;
