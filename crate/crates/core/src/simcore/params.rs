//! Behavior parameters for pedestrians and vehicles.
//!
//! Field names double as gene names for calibration, so both structs expose
//! name-based accessors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;
use crate::trajdata::AgentKind;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PedestrianParams<T> {
    /// v0 [m/s]
    pub desired_speed: T,
    /// tau [s]
    pub relaxation_time: T,
    /// A [m/s^2]
    pub repulsion_strength: T,
    /// B [m]
    pub repulsion_range: T,
    /// Body radius [m]
    pub radius: T,
}

impl<T: Real> Default for PedestrianParams<T> {
    fn default() -> Self {
        Self {
            desired_speed: T::lit(1.34),
            relaxation_time: T::lit(0.5),
            repulsion_strength: T::lit(2.1),
            repulsion_range: T::lit(0.3),
            radius: T::lit(0.3),
        }
    }
}

pub const PEDESTRIAN_FIELDS: [&str; 5] = ["desired_speed", "relaxation_time", "repulsion_strength", "repulsion_range", "radius"];

impl<T: Real> PedestrianParams<T> {
    pub fn validate(&self) -> Result<()> {
        for name in PEDESTRIAN_FIELDS {
            let v = self.get(name).unwrap();
            if !(v > T::zero() && v.is_finite()) {
                return Err(Error::Config(format!("pedestrian.{name} must be > 0 (got {v})")));
            }
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<T> {
        Some(match name {
            "desired_speed" => self.desired_speed,
            "relaxation_time" => self.relaxation_time,
            "repulsion_strength" => self.repulsion_strength,
            "repulsion_range" => self.repulsion_range,
            "radius" => self.radius,
            _ => return None,
        })
    }

    pub fn set(&mut self, name: &str, value: T) -> Result<()> {
        let slot = match name {
            "desired_speed" => &mut self.desired_speed,
            "relaxation_time" => &mut self.relaxation_time,
            "repulsion_strength" => &mut self.repulsion_strength,
            "repulsion_range" => &mut self.repulsion_range,
            "radius" => &mut self.radius,
            _ => return Err(Error::Config(format!("unknown pedestrian parameter `{name}`"))),
        };
        *slot = value;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams<T> {
    /// v0 [m/s]
    pub desired_speed: T,
    /// tau [s]
    pub relaxation_time: T,
    /// A_v [m/s^2]
    pub agent_repulsion_strength: T,
    /// B_v [m]
    pub agent_repulsion_range: T,
    /// A_b [m]: peak inward shift of the lateral target at the lane edge
    pub boundary_repulsion_strength: T,
    /// B_b [m]
    pub boundary_repulsion_range: T,
    pub max_accel: T,
    pub max_decel: T,
    pub max_lateral_accel: T,
    /// k_lat [1/s^2]
    pub lateral_stiffness: T,
    /// c_lat [1/s]
    pub lateral_damping: T,
    /// T_gap [s]
    pub yield_gap: T,
    /// L [m]
    pub wheelbase: T,
    /// delta_max [rad]
    pub max_steer: T,
    /// Lateral clearance kept from vulnerable road users [m].
    pub vru_shy_distance: T,
}

pub const VEHICLE_FIELDS: [&str; 15] = [
    "desired_speed",
    "relaxation_time",
    "agent_repulsion_strength",
    "agent_repulsion_range",
    "boundary_repulsion_strength",
    "boundary_repulsion_range",
    "max_accel",
    "max_decel",
    "max_lateral_accel",
    "lateral_stiffness",
    "lateral_damping",
    "yield_gap",
    "wheelbase",
    "max_steer",
    "vru_shy_distance",
];

impl<T: Real> Default for VehicleParams<T> {
    fn default() -> Self {
        Self::car()
    }
}

impl<T: Real> VehicleParams<T> {
    pub fn car() -> Self {
        Self {
            desired_speed: T::lit(13.89),
            relaxation_time: T::lit(1.0),
            agent_repulsion_strength: T::lit(2.0),
            agent_repulsion_range: T::lit(2.0),
            boundary_repulsion_strength: T::lit(0.3),
            boundary_repulsion_range: T::lit(0.3),
            max_accel: T::lit(2.0),
            max_decel: T::lit(6.0),
            max_lateral_accel: T::lit(3.0),
            lateral_stiffness: T::lit(1.0),
            lateral_damping: T::lit(2.0),
            yield_gap: T::lit(1.5),
            wheelbase: T::lit(2.8),
            max_steer: T::lit(0.6),
            vru_shy_distance: T::lit(1.0),
        }
    }

    pub fn bicycle() -> Self {
        Self {
            desired_speed: T::lit(5.0),
            max_accel: T::lit(1.0),
            max_decel: T::lit(3.0),
            max_lateral_accel: T::lit(2.0),
            wheelbase: T::lit(1.1),
            max_steer: T::lit(0.8),
            vru_shy_distance: T::lit(0.5),
            ..Self::car()
        }
    }

    pub fn truck() -> Self {
        Self {
            desired_speed: T::lit(12.0),
            max_accel: T::lit(1.2),
            max_decel: T::lit(5.0),
            max_lateral_accel: T::lit(2.0),
            wheelbase: T::lit(5.5),
            ..Self::car()
        }
    }

    /// Defaults for a vehicle kind; pedestrians have no vehicle parameters.
    pub fn for_kind(kind: AgentKind) -> Option<Self> {
        match kind {
            AgentKind::Car => Some(Self::car()),
            AgentKind::Truck | AgentKind::Bus => Some(Self::truck()),
            AgentKind::Bicycle => Some(Self::bicycle()),
            AgentKind::Pedestrian => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for name in VEHICLE_FIELDS {
            let v = self.get(name).unwrap();
            if !(v > T::zero() && v.is_finite()) {
                return Err(Error::Config(format!("vehicle.{name} must be > 0 (got {v})")));
            }
        }
        if self.max_steer >= T::FRAC_PI_2() {
            return Err(Error::Config("vehicle.max_steer must be < pi/2".into()));
        }
        Ok(())
    }

    /// Soft consistency checks that do not invalidate the parameters.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.max_decel < self.max_accel {
            w.push(format!("max_decel ({}) is below max_accel ({})", self.max_decel, self.max_accel));
        }
        w
    }

    pub fn get(&self, name: &str) -> Option<T> {
        Some(match name {
            "desired_speed" => self.desired_speed,
            "relaxation_time" => self.relaxation_time,
            "agent_repulsion_strength" => self.agent_repulsion_strength,
            "agent_repulsion_range" => self.agent_repulsion_range,
            "boundary_repulsion_strength" => self.boundary_repulsion_strength,
            "boundary_repulsion_range" => self.boundary_repulsion_range,
            "max_accel" => self.max_accel,
            "max_decel" => self.max_decel,
            "max_lateral_accel" => self.max_lateral_accel,
            "lateral_stiffness" => self.lateral_stiffness,
            "lateral_damping" => self.lateral_damping,
            "yield_gap" => self.yield_gap,
            "wheelbase" => self.wheelbase,
            "max_steer" => self.max_steer,
            "vru_shy_distance" => self.vru_shy_distance,
            _ => return None,
        })
    }

    pub fn set(&mut self, name: &str, value: T) -> Result<()> {
        let slot = match name {
            "desired_speed" => &mut self.desired_speed,
            "relaxation_time" => &mut self.relaxation_time,
            "agent_repulsion_strength" => &mut self.agent_repulsion_strength,
            "agent_repulsion_range" => &mut self.agent_repulsion_range,
            "boundary_repulsion_strength" => &mut self.boundary_repulsion_strength,
            "boundary_repulsion_range" => &mut self.boundary_repulsion_range,
            "max_accel" => &mut self.max_accel,
            "max_decel" => &mut self.max_decel,
            "max_lateral_accel" => &mut self.max_lateral_accel,
            "lateral_stiffness" => &mut self.lateral_stiffness,
            "lateral_damping" => &mut self.lateral_damping,
            "yield_gap" => &mut self.yield_gap,
            "wheelbase" => &mut self.wheelbase,
            "max_steer" => &mut self.max_steer,
            "vru_shy_distance" => &mut self.vru_shy_distance,
            _ => return Err(Error::Config(format!("unknown vehicle parameter `{name}`"))),
        };
        *slot = value;
        Ok(())
    }
}

/// Parameters for every agent kind in a simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorParams {
    pub pedestrian: PedestrianParams<f64>,
    pub car: VehicleParams<f64>,
    pub truck: VehicleParams<f64>,
    pub bicycle: VehicleParams<f64>,
}

impl Default for BehaviorParams {
    fn default() -> Self {
        Self {
            pedestrian: PedestrianParams::default(),
            car: VehicleParams::car(),
            truck: VehicleParams::truck(),
            bicycle: VehicleParams::bicycle(),
        }
    }
}

impl BehaviorParams {
    pub fn vehicle(&self, kind: AgentKind) -> Option<&VehicleParams<f64>> {
        match kind {
            AgentKind::Car => Some(&self.car),
            AgentKind::Truck | AgentKind::Bus => Some(&self.truck),
            AgentKind::Bicycle => Some(&self.bicycle),
            AgentKind::Pedestrian => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.pedestrian.validate()?;
        self.car.validate()?;
        self.truck.validate()?;
        self.bicycle.validate()
    }

    /// Sets `group.field`, where group is one of pedestrian, car, truck, bicycle.
    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        let (group, field) = key
            .split_once('.')
            .ok_or_else(|| Error::Config(format!("parameter `{key}` must look like group.field")))?;
        match group {
            "pedestrian" => self.pedestrian.set(field, value),
            "car" => self.car.set(field, value),
            "truck" => self.truck.set(field, value),
            "bicycle" => self.bicycle.set(field, value),
            _ => Err(Error::Config(format!("unknown parameter group `{group}`"))),
        }
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        let (group, field) = key.split_once('.')?;
        match group {
            "pedestrian" => self.pedestrian.get(field),
            "car" => self.car.get(field),
            "truck" => self.truck.get(field),
            "bicycle" => self.bicycle.get(field),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        BehaviorParams::default().validate().unwrap();
        PedestrianParams::<f32>::default().validate().unwrap();
        VehicleParams::<f32>::bicycle().validate().unwrap();
    }

    #[test]
    fn name_access_roundtrip() {
        let mut p = BehaviorParams::default();
        for f in VEHICLE_FIELDS {
            let k = format!("car.{f}");
            p.set(&k, 0.5).unwrap();
            assert_eq!(p.get(&k), Some(0.5));
        }
        assert!(p.set("car.nope", 1.0).is_err());
        assert!(p.set("plane.desired_speed", 1.0).is_err());
    }

    #[test]
    fn nonpositive_rejected() {
        let mut p = PedestrianParams::<f64>::default();
        p.relaxation_time = 0.0;
        assert!(p.validate().is_err());
    }
}
