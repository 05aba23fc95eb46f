//! Cooperative driving simulation: world model, vehicle dynamics, perception,
//! conflict negotiation, LLM-backed decisions with memory, and a batch harness.

pub mod config;
pub mod decision;
pub mod dynamics;
pub mod error;
pub mod gateway;
pub mod geometry;
pub mod harness;
pub mod memory;
pub mod metrics;
pub mod negotiation;
pub mod perception;
pub mod scenario;
pub mod world;

pub use config::{ResolvedConfig, ScenarioConfig, ScenarioKind};
pub use decision::MetaAction;
pub use error::{ConfigError, DynamicsError, GatewayError, MemoryError, WorldError};
pub use world::{LaneId, VehicleId, World};
