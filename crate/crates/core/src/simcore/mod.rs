//! Deterministic submicroscopic traffic simulation: social-force
//! pedestrians, social-force vehicles (priority, curve, lateral and VRU
//! extensions) driving a kinematic single-track model.

pub mod log;
pub mod params;
pub mod pedestrian;
pub mod route;
pub mod single_track;
pub mod spawn;
pub mod vehicle;
pub mod world;

pub use log::{LogRow, SimLog, LOG_HEADER};
pub use params::{BehaviorParams, PedestrianParams, VehicleParams, PEDESTRIAN_FIELDS, VEHICLE_FIELDS};
pub use pedestrian::{pedestrian_force, DiscNeighbor, Obstacle, PedestrianForce};
pub use route::{other_has_priority, Route};
pub use single_track::{integrate, Integrator, KinematicState};
pub use spawn::{generate_spawns, seed_from_track, FlowSpec, PendingSpawn, SpawnSpec};
pub use vehicle::{curve_speed, priority_yield, vehicle_force, AgentView, ForceTerms, VehicleDemand};
pub use world::{recorded_state, run_scenario, Agent, Collision, Command, Control, Mode, ReplayClock, SimConfig, World};
