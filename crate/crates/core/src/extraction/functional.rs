//! Scenario categories and functional scenario types.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::maneuvers::{BranchLabel, ManeuverType};
use crate::num::wrap_angle;
use crate::trajdata::AgentKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioCategory {
    V2v,
    V2p,
    V2b,
}

impl ScenarioCategory {
    /// Category of an ego car paired with a challenger of `other` kind.
    pub fn of(ego: AgentKind, other: AgentKind) -> Option<Self> {
        if ego != AgentKind::Car {
            return None;
        }
        match other {
            AgentKind::Car | AgentKind::Truck | AgentKind::Bus => Some(ScenarioCategory::V2v),
            AgentKind::Pedestrian => Some(ScenarioCategory::V2p),
            AgentKind::Bicycle => Some(ScenarioCategory::V2b),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioCategory::V2v => "v2v",
            ScenarioCategory::V2p => "v2p",
            ScenarioCategory::V2b => "v2b",
        }
    }
}

impl fmt::Display for ScenarioCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioCategory {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "v2v" => Ok(ScenarioCategory::V2v),
            "v2p" => Ok(ScenarioCategory::V2p),
            "v2b" => Ok(ScenarioCategory::V2b),
            _ => Err(Error::Config(format!("unknown scenario category `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FunctionalType {
    pub category: ScenarioCategory,
    pub name: String,
}

impl FunctionalType {
    pub fn new(category: ScenarioCategory, name: impl Into<String>) -> Self {
        Self {
            category,
            name: name.into(),
        }
    }

    pub fn is_unclassified(&self) -> bool {
        self.name == UNCLASSIFIED
    }
}

impl fmt::Display for FunctionalType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.category, self.name)
    }
}

pub const UNCLASSIFIED: &str = "unclassified";
pub const CROSS: &str = "cross";
pub const NOT_CROSS: &str = "not-cross";

/// Where the challenger approaches from, relative to the ego's approach.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Approach {
    Oncoming,
    LateralLeft,
    LateralRight,
    Same,
}

impl Approach {
    /// From the two entry branches.
    pub fn between(ego: BranchLabel, challenger: BranchLabel) -> Self {
        let de = ego.entry.bearing();
        let dc = challenger.entry.bearing();
        let diff = wrap_angle(dc - de).to_degrees();
        if diff.abs() < 45.0 - 1e-9 {
            Approach::Same
        } else if diff.abs() > 135.0 + 1e-9 {
            Approach::Oncoming
        } else {
            // relative to the ego's inbound heading
            let heading = de + std::f64::consts::PI;
            if wrap_angle(dc - heading) > 0.0 {
                Approach::LateralLeft
            } else {
                Approach::LateralRight
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ApproachPattern {
    Od,
    Ld,
    LdLeft,
    LdRight,
    Same,
}

impl ApproachPattern {
    pub fn matches(self, a: Approach) -> bool {
        matches!(
            (self, a),
            (ApproachPattern::Od, Approach::Oncoming)
                | (ApproachPattern::Ld, Approach::LateralLeft | Approach::LateralRight)
                | (ApproachPattern::LdLeft, Approach::LateralLeft)
                | (ApproachPattern::LdRight, Approach::LateralRight)
                | (ApproachPattern::Same, Approach::Same)
        )
    }

    fn as_str(self) -> &'static str {
        match self {
            ApproachPattern::Od => "OD",
            ApproachPattern::Ld => "LD",
            ApproachPattern::LdLeft => "LD-L",
            ApproachPattern::LdRight => "LD-R",
            ApproachPattern::Same => "same",
        }
    }
}

impl FromStr for ApproachPattern {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "OD" => ApproachPattern::Od,
            "LD" => ApproachPattern::Ld,
            "LD-L" => ApproachPattern::LdLeft,
            "LD-R" => ApproachPattern::LdRight,
            "same" => ApproachPattern::Same,
            _ => return Err(Error::Config(format!("unknown approach pattern `{s}`"))),
        })
    }
}

/// `(ego maneuver, challenger maneuver, approach)`, written `left,through,OD`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TypeKey {
    pub ego: ManeuverType,
    pub challenger: ManeuverType,
    pub approach: ApproachPattern,
}

impl fmt::Display for TypeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.ego, self.challenger, self.approach.as_str())
    }
}

impl FromStr for TypeKey {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(Error::Config(format!("taxonomy key `{s}` needs 3 comma-separated parts")));
        }
        Ok(Self {
            ego: parts[0].parse()?,
            challenger: parts[1].parse()?,
            approach: parts[2].parse()?,
        })
    }
}

impl Serialize for TypeKey {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for TypeKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxonomyEntry {
    pub name: String,
    pub keys: Vec<TypeKey>,
}

/// Vehicle-vehicle functional types; also applied to vehicle-bicycle pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Taxonomy {
    pub v2v: Vec<TaxonomyEntry>,
}

impl Default for Taxonomy {
    fn default() -> Self {
        use ManeuverType::{Left as L, Right as R, Through as T};
        let k = |ego, challenger, approach| TypeKey {
            ego,
            challenger,
            approach,
        };
        let e = |name: &str, keys: Vec<TypeKey>| TaxonomyEntry {
            name: name.to_string(),
            keys,
        };
        use ApproachPattern::*;
        Self {
            v2v: vec![
                e("SCP/left", vec![k(T, T, LdLeft)]),
                e("SCP/right", vec![k(T, T, LdRight)]),
                e("LTAP/OD", vec![k(L, T, Od), k(T, L, Od)]),
                e("LTAP/LD", vec![k(L, T, Ld), k(T, L, Ld)]),
                e("RTAP/LD", vec![k(R, T, Ld), k(T, R, Ld)]),
                e("turn-into/OD", vec![k(L, R, Od), k(R, L, Od), k(L, L, Od), k(R, R, Od)]),
                e("turn-into/LD", vec![k(L, L, Ld), k(L, R, Ld), k(R, L, Ld), k(R, R, Ld)]),
                e("oncoming-straight", vec![k(T, T, Od)]),
                e("same-direction-following", vec![k(T, T, Same), k(L, L, Same), k(R, R, Same)]),
                e(
                    "merging-turns",
                    vec![k(T, L, Same), k(L, T, Same), k(T, R, Same), k(R, T, Same), k(L, R, Same), k(R, L, Same)],
                ),
            ],
        }
    }
}

impl Taxonomy {
    pub fn lookup(&self, ego: ManeuverType, challenger: ManeuverType, approach: Approach) -> Option<&str> {
        self.v2v
            .iter()
            .find(|e| {
                e.keys
                    .iter()
                    .any(|k| k.ego == ego && k.challenger == challenger && k.approach.matches(approach))
            })
            .map(|e| e.name.as_str())
    }

    /// Every type name the taxonomy can produce for a category.
    pub fn type_names(&self, category: ScenarioCategory) -> Vec<FunctionalType> {
        let mut names: Vec<FunctionalType> = match category {
            ScenarioCategory::V2p => vec![FunctionalType::new(category, CROSS), FunctionalType::new(category, NOT_CROSS)],
            _ => self.v2v.iter().map(|e| FunctionalType::new(category, e.name.clone())).collect(),
        };
        if category == ScenarioCategory::V2b {
            names.push(FunctionalType::new(category, NOT_CROSS));
        }
        if category != ScenarioCategory::V2p {
            names.push(FunctionalType::new(category, UNCLASSIFIED));
        }
        names
    }
}

/// What the classifier needs to know about one core agent.
#[derive(Debug, Clone, Copy)]
pub struct CoreAgentInfo {
    pub label: Option<BranchLabel>,
    pub maneuver: ManeuverType,
}

/// Functional type of an ego/challenger pair.
pub fn classify_functional_type(
    category: ScenarioCategory,
    ego: CoreAgentInfo,
    challenger: CoreAgentInfo,
    has_conflict_area: bool,
    taxonomy: &Taxonomy,
) -> FunctionalType {
    let name = match category {
        ScenarioCategory::V2p => {
            if has_conflict_area {
                CROSS
            } else {
                NOT_CROSS
            }
        }
        ScenarioCategory::V2b if !has_conflict_area => NOT_CROSS,
        ScenarioCategory::V2v | ScenarioCategory::V2b => match (ego.label, challenger.label) {
            (Some(le), Some(lc)) => taxonomy
                .lookup(ego.maneuver, challenger.maneuver, Approach::between(le, lc))
                .unwrap_or(UNCLASSIFIED),
            _ => UNCLASSIFIED,
        },
    };
    FunctionalType::new(category, name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maneuvers::classify_maneuver;
    use crate::maneuvers::LabelingConfig;

    fn info(label: &str) -> CoreAgentInfo {
        let l: BranchLabel = label.parse().unwrap();
        CoreAgentInfo {
            label: Some(l),
            maneuver: classify_maneuver(l, &LabelingConfig::default()),
        }
    }

    #[test]
    fn default_taxonomy_has_ten_types() {
        let t = Taxonomy::default();
        assert_eq!(t.v2v.len(), 10);
        assert_eq!(t.type_names(ScenarioCategory::V2b).len(), 12);
        assert_eq!(t.type_names(ScenarioCategory::V2p).len(), 2);
    }

    #[test]
    fn left_turn_against_oncoming_through_is_ltap_od() {
        // ego S->W turns left; challenger N->S drives straight toward it
        let ft = classify_functional_type(ScenarioCategory::V2v, info("SW"), info("NS"), true, &Taxonomy::default());
        assert_eq!(ft.name, "LTAP/OD");
    }

    #[test]
    fn straight_crossing_sides() {
        let t = Taxonomy::default();
        // ego northbound from S; challenger from W travels east: comes from the left
        assert_eq!(classify_functional_type(ScenarioCategory::V2v, info("SN"), info("WE"), true, &t).name, "SCP/left");
        assert_eq!(classify_functional_type(ScenarioCategory::V2v, info("SN"), info("EW"), true, &t).name, "SCP/right");
    }

    #[test]
    fn pedestrian_binary() {
        let t = Taxonomy::default();
        let none = CoreAgentInfo {
            label: None,
            maneuver: ManeuverType::Invalid,
        };
        assert_eq!(classify_functional_type(ScenarioCategory::V2p, info("SN"), none, true, &t).name, CROSS);
        assert_eq!(classify_functional_type(ScenarioCategory::V2p, info("SN"), none, false, &t).name, NOT_CROSS);
    }

    #[test]
    fn sidewalk_bicycle_not_cross_and_unknown_pairs() {
        let t = Taxonomy::default();
        assert_eq!(classify_functional_type(ScenarioCategory::V2b, info("SN"), info("NS"), false, &t).name, NOT_CROSS);
        assert_eq!(classify_functional_type(ScenarioCategory::V2v, info("SN"), info("SS"), true, &t).name, UNCLASSIFIED);
    }

    #[test]
    fn category_from_kinds() {
        use AgentKind::*;
        assert_eq!(ScenarioCategory::of(Car, Bus), Some(ScenarioCategory::V2v));
        assert_eq!(ScenarioCategory::of(Car, Pedestrian), Some(ScenarioCategory::V2p));
        assert_eq!(ScenarioCategory::of(Car, Bicycle), Some(ScenarioCategory::V2b));
        assert_eq!(ScenarioCategory::of(Truck, Car), None);
    }

    #[test]
    fn key_parsing() {
        let k: TypeKey = "left,through,LD-L".parse().unwrap();
        assert_eq!(k.to_string(), "left,through,LD-L");
        assert!("left,through".parse::<TypeKey>().is_err());
    }
}
