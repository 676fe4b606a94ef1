//! Urban intersection scenario toolchain.
//!
//! Mines two-agent and multi-agent scenarios from drone-style trajectory
//! recordings, simulates intersection traffic with social-force agents on a
//! kinematic single-track vehicle model, calibrates those agents with a
//! genetic algorithm, and runs an adaptive replay-to-sim harness around an
//! ego policy.
//!
//! The numeric kernels ([`geom`], the force laws, the single-track
//! integrator, the GA and the summary statistics) are generic over
//! [`num::Real`]; the data pipeline works in `f64` through the aliases below.

pub mod calibrate;
pub mod error;
pub mod extraction;
pub mod geom;
pub mod maneuvers;
pub mod num;
pub mod preprocess;
pub mod replay;
pub mod scenariodb;
pub mod simcore;
pub mod synth;
pub mod trajdata;

pub use error::{Error, Result};
pub use num::Real;

/// Planar vector in meters (or m/s, m/s^2).
pub type Vec2d = geom::Vec2<f64>;
pub type Vec2f = geom::Vec2<f32>;
pub type Polylined = geom::Polyline<f64>;
pub type Polygond = geom::ConvexPolygon<f64>;
pub type PedestrianParamsd = simcore::PedestrianParams<f64>;
pub type VehicleParamsd = simcore::VehicleParams<f64>;
pub type KinematicStated = simcore::single_track::KinematicState<f64>;
pub type FiveNumberd = extraction::stats::FiveNumber<f64>;

/// Version stamp embedded in every artifact.
pub const PIPELINE_VERSION: &str = concat!("crossroads/", env!("CARGO_PKG_VERSION"));
