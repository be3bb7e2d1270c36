//! Navigation policies: a perception-independent shortest-path policy and a
//! frontier-exploration policy that acts on the agent's own map.

pub mod astar;
pub mod frontier;
pub mod shortest;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use astar::{distance_field, nearest_goal, shortest_path, NavGrid, Path};
pub use frontier::{FrontierConfig, FrontierPolicy, GoalKind};
pub use shortest::{first_within, plan_route, MotionConfig, Route};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    ShortestPath,
    Frontier,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::ShortestPath => "shortest_path",
            PolicyKind::Frontier => "frontier",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "shortest_path" => Ok(PolicyKind::ShortestPath),
            "frontier" => Ok(PolicyKind::Frontier),
            _ => Err(Error::Config(format!(
                "unknown policy {s:?}; valid kinds: shortest_path, frontier"
            ))),
        }
    }
}

/// Wraps an angle into (-π, π].
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let r = (a + PI).rem_euclid(TAU) - PI;
    if r <= -PI {
        r + TAU
    } else {
        r
    }
}

/// Heading from `from` to `to`, or `None` when the points coincide.
pub fn heading_to(from: (f64, f64), to: (f64, f64)) -> Option<f64> {
    let (dx, dy) = (to.0 - from.0, to.1 - from.1);
    (dx != 0.0 || dy != 0.0).then(|| dy.atan2(dx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn angles_wrap() {
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert_eq!(heading_to((1.0, 1.0), (1.0, 1.0)), None);
    }

    #[test]
    fn policy_names() {
        assert_eq!("frontier".parse::<PolicyKind>().unwrap(), PolicyKind::Frontier);
        assert!("rl".parse::<PolicyKind>().is_err());
    }
}
