use thiserror::Error;

use crate::world::VehicleId;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown scenario kind `{0}`")]
    UnknownScenario(String),
    #[error("failed to parse scenario config: {0}")]
    Parse(String),
    #[error("cannot read {0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("invalid scenario config: {0}")]
    Invalid(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum WorldError {
    #[error("cannot place vehicle {index} without overlap after {attempts} attempts")]
    Spawn { index: usize, attempts: usize },
    #[error("joint update is missing vehicle {0}")]
    MissingVehicle(VehicleId),
    #[error("joint update lists vehicle {0} more than once")]
    DuplicateVehicle(VehicleId),
    #[error("joint update contains unknown vehicle {0}")]
    UnknownVehicle(VehicleId),
    #[error("vehicle {0} is not in the world")]
    NoSuchVehicle(VehicleId),
    #[error("vehicle {0} is not a CAV")]
    NotCav(VehicleId),
    #[error("invalid lane geometry: {0}")]
    Geometry(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("non-positive gap {0} m: vehicles overlap")]
    Overlap(f64),
}

#[derive(Debug, Error, PartialEq)]
pub enum NegotiationError {
    #[error("negative input to ttcp_severity: {0}")]
    NegativeInput(&'static str),
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("backend unavailable after {attempts} attempts: {last}")]
    Unavailable { attempts: u32, last: String },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("invalid backend config: {0}")]
    Config(String),
    #[error("invalid request: {0}")]
    Request(String),
}

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("text is empty after normalization")]
    EmptyText,
    #[error("embedding dimension {found} does not match store dimension {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("i/o error on memory file: {0}")]
    Io(#[from] std::io::Error),
    #[error("memory file header is invalid: {0}")]
    Header(String),
    #[error("memory record {index} is corrupt: {reason}")]
    Corrupt { index: usize, reason: String },
}

#[derive(Debug, Error)]
pub enum DecisionError {
    #[error("vehicle {0} has no lane on the requested side")]
    NoSuchLane(VehicleId),
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace error in {path}: {reason}")]
    Trace { path: String, reason: String },
}
