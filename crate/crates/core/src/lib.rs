//! Cooperative multi-UAV trajectory design with a hierarchical symbolic
//! world model.
//!
//! The offline half generates expert demonstrations with a genetic
//! algorithm ([`ga`]), turns them into Mission/Route/Motion words
//! ([`symbolizer`]) and fits the factorized world model ([`world_model`]).
//! The online half ([`inference`]) picks divisions, orders and motion words
//! by minimizing their abnormality under that model while the swarm flies a
//! potential field ([`motion`]) inside a deterministic simulator ([`sim`]).

pub mod ekf;
pub mod error;
pub mod ga;
pub mod inference;
pub mod model;
pub mod motion;
pub mod qlearning;
pub mod sim;
pub mod symbolizer;
pub mod world_model;

pub use error::{Error, Result};
