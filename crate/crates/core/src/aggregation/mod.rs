//! Temporal aggregation strategies and their found-decision rules.
//!
//! Every strategy folds per-frame [`ProjectedHit`]s into a [`GridMap`],
//! renders which cells are shown to the agent as the target, and decides
//! whether the target has been found. All found decisions share the distance
//! gate: the chosen cell must lie within the success radius of the agent.

mod averaging;
mod hits_views;
mod latest;
mod log_odds;
pub mod naive_bayes;
mod skill_fusion;
mod stubborn;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::{GridMap, ProjectedHit};
use crate::scene::AgentPose;

pub use averaging::AveragingStrategy;
pub use hits_views::{hits_views_verdict, HitsViewsStrategy, HitsViewsVerdict};
pub use latest::{LatestFilteredStrategy, LatestStrategy};
pub use log_odds::LogOddsStrategy;
pub use naive_bayes::NBClassifier;
pub use skill_fusion::{skill_fusion_fold, SkillFusionStrategy};
pub use stubborn::{StubbornCandidate, StubbornStrategy, NUM_STUBBORN_FEATURES};

/// Default success radius in meters.
pub const SUCCESS_RADIUS_M: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    GroundTruth,
    Latest,
    HitsViews,
    SkillFusion,
    Stubborn,
    LatestFiltered,
    LogOdds,
    Averaging,
    WeightedAveraging,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 9] = [
        StrategyKind::GroundTruth,
        StrategyKind::Latest,
        StrategyKind::HitsViews,
        StrategyKind::SkillFusion,
        StrategyKind::Stubborn,
        StrategyKind::LatestFiltered,
        StrategyKind::LogOdds,
        StrategyKind::Averaging,
        StrategyKind::WeightedAveraging,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::GroundTruth => "ground_truth",
            StrategyKind::Latest => "latest",
            StrategyKind::HitsViews => "hits_views",
            StrategyKind::SkillFusion => "skill_fusion",
            StrategyKind::Stubborn => "stubborn",
            StrategyKind::LatestFiltered => "latest_filtered",
            StrategyKind::LogOdds => "log_odds",
            StrategyKind::Averaging => "averaging",
            StrategyKind::WeightedAveraging => "weighted_averaging",
        }
    }

    pub fn valid_names() -> String {
        StrategyKind::ALL.map(|k| k.as_str()).join(", ")
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == norm)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown strategy {s:?}; valid kinds: {}",
                    StrategyKind::valid_names()
                ))
            })
    }
}

/// Tunable strategy parameters. Each kind reads only its own fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrategyParams {
    /// Hits/views ratio threshold θ.
    pub theta: f64,
    /// Minimum close views v.
    pub views: u32,
    /// Close-view distance in meters.
    pub d_view: f64,
    /// SkillFusion decay α.
    pub alpha: f64,
    /// SkillFusion display threshold T.
    pub threshold: f64,
    /// SkillFusion erosion kernel side in meters.
    pub erosion_m: f64,
    /// Latest-Filtered map-uncertainty threshold ρ.
    pub rho: f64,
    /// Found-decision uncertainty threshold ξ.
    pub xi: f64,
    /// Lower clamp ε on perception uncertainty before inverting it.
    pub u_clamp: f64,
}

impl Default for StrategyParams {
    fn default() -> Self {
        StrategyParams {
            theta: 0.8,
            views: 3,
            d_view: 2.0,
            alpha: 0.9,
            threshold: 2.0,
            erosion_m: 0.04,
            rho: 0.4,
            xi: 0.4,
            u_clamp: 1e-3,
        }
    }
}

impl StrategyParams {
    /// Reads a parameter by name.
    pub fn get(&self, name: &str) -> Option<f64> {
        Some(match name {
            "theta" => self.theta,
            "views" => self.views as f64,
            "d_view" => self.d_view,
            "alpha" => self.alpha,
            "threshold" => self.threshold,
            "erosion_m" => self.erosion_m,
            "rho" => self.rho,
            "xi" => self.xi,
            "u_clamp" => self.u_clamp,
            _ => return None,
        })
    }

    /// Writes a parameter by name; integer parameters are rounded.
    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        match name {
            "theta" => self.theta = value,
            "views" => self.views = value.round().max(0.0) as u32,
            "d_view" => self.d_view = value,
            "alpha" => self.alpha = value,
            "threshold" => self.threshold = value,
            "erosion_m" => self.erosion_m = value,
            "rho" => self.rho = value,
            "xi" => self.xi = value,
            "u_clamp" => self.u_clamp = value,
            _ => return Err(Error::InvalidParameter(format!("unknown parameter {name:?}"))),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    #[serde(default)]
    pub use_calibration: bool,
    #[serde(default)]
    pub use_uncertainty_found: bool,
    #[serde(default)]
    pub params: StrategyParams,
    /// Optional display label; derived from the flags when absent.
    #[serde(default)]
    pub name: Option<String>,
}

impl StrategyConfig {
    pub fn new(kind: StrategyKind, use_calibration: bool, use_uncertainty_found: bool) -> Self {
        StrategyConfig {
            kind,
            use_calibration,
            use_uncertainty_found,
            params: StrategyParams::default(),
            name: None,
        }
    }

    /// Row label, e.g. `weighted_averaging+cal+unc`.
    pub fn label(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        let mut s = self.kind.as_str().to_string();
        if self.use_calibration {
            s.push_str("+cal");
        }
        if self.use_uncertainty_found {
            s.push_str("+unc");
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        let open_unit = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "{}: {name} must lie in (0, 1), got {v}",
                    self.label()
                )))
            }
        };
        match self.kind {
            StrategyKind::HitsViews => {
                open_unit("theta", p.theta)?;
                if p.views < 1 {
                    return Err(Error::Config(format!("{}: views must be >= 1", self.label())));
                }
                if !(p.d_view > 0.0) {
                    return Err(Error::Config(format!("{}: d_view must be positive", self.label())));
                }
            }
            StrategyKind::SkillFusion => {
                open_unit("alpha", p.alpha)?;
                if !(p.threshold >= 0.0) || !(p.erosion_m >= 0.0) {
                    return Err(Error::Config(format!(
                        "{}: threshold and erosion_m must be non-negative",
                        self.label()
                    )));
                }
            }
            StrategyKind::LatestFiltered => {
                open_unit("rho", p.rho)?;
                open_unit("u_clamp", p.u_clamp)?;
            }
            StrategyKind::WeightedAveraging => open_unit("u_clamp", p.u_clamp)?,
            _ => {}
        }
        if self.use_uncertainty_found {
            open_unit("xi", p.xi)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoundReason {
    DistanceOnly,
    UncertaintyGated,
    Classifier,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoundDecision {
    pub found: bool,
    pub cell: Option<usize>,
    pub reason: FoundReason,
}

impl FoundDecision {
    pub const NOT_FOUND: FoundDecision = FoundDecision {
        found: false,
        cell: None,
        reason: FoundReason::None,
    };

    pub fn at(cell: usize, reason: FoundReason) -> Self {
        FoundDecision {
            found: true,
            cell: Some(cell),
            reason,
        }
    }
}

/// One temporal aggregation method with its found-decision rule.
pub trait Strategy: Send {
    /// Folds one frame of projected predictions into the map.
    fn integrate(&mut self, map: &mut GridMap, hits: &[ProjectedHit], pose: &AgentPose);

    /// Cells currently shown to the agent as the target class.
    fn target_mask(&self, map: &GridMap) -> Vec<bool>;

    fn decide_found(&mut self, map: &GridMap, pose: &AgentPose) -> FoundDecision;
}

/// Shared found rule: nearest shown target cell within the radius, optionally
/// gated by `u_map < ξ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoundRule {
    pub target_class: usize,
    pub radius_m: f64,
    pub xi: Option<f64>,
}

impl FoundRule {
    pub fn decide(&self, map: &GridMap, mask: &[bool], pose: &AgentPose) -> FoundDecision {
        let reason = if self.xi.is_some() {
            FoundReason::UncertaintyGated
        } else {
            FoundReason::DistanceOnly
        };
        cells_within(map, pose, self.radius_m)
            .into_iter()
            .find(|&(c, _)| mask[c] && self.xi.is_none_or(|xi| map.cell(c).u_map < xi))
            .map_or(FoundDecision::NOT_FOUND, |(c, _)| FoundDecision::at(c, reason))
    }
}

/// Cells whose centers lie within `radius_m` of the agent, nearest first
/// (ties by index).
pub fn cells_within(map: &GridMap, pose: &AgentPose, radius_m: f64) -> Vec<(usize, f64)> {
    let r = (radius_m / map.resolution).ceil() as isize + 1;
    let Ok(center) = map.world_to_cell(pose.x, pose.y) else {
        return Vec::new();
    };
    let (cx, cy) = map.coords(center);
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            let (x, y) = (cx as isize + dx, cy as isize + dy);
            if x < 0 || y < 0 || x >= map.width as isize || y >= map.height as isize {
                continue;
            }
            let idx = map.index(x as usize, y as usize);
            let (wx, wy) = map.cell_center(idx);
            let d = pose.distance_to(wx, wy);
            if d <= radius_m {
                out.push((idx, d));
            }
        }
    }
    out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    out
}

/// Cells whose current most-likely class is `class`.
pub(crate) fn argmax_mask(map: &GridMap, class: usize) -> Vec<bool> {
    map.cells().iter().map(|c| c.argmax() == Some(class)).collect()
}

/// Builds a strategy instance for one episode.
pub fn build_strategy(
    cfg: &StrategyConfig,
    map: &GridMap,
    target_class: usize,
    radius_m: f64,
    classifier: Option<Arc<NBClassifier>>,
) -> Result<Box<dyn Strategy>> {
    cfg.validate()?;
    let rule = FoundRule {
        target_class,
        radius_m,
        xi: cfg.use_uncertainty_found.then_some(cfg.params.xi),
    };
    let p = cfg.params;
    Ok(match cfg.kind {
        StrategyKind::GroundTruth | StrategyKind::Latest => Box::new(LatestStrategy::new(rule)),
        StrategyKind::HitsViews => Box::new(HitsViewsStrategy::new(map, rule, p.theta, p.views, p.d_view)),
        StrategyKind::SkillFusion => Box::new(SkillFusionStrategy::new(
            map,
            rule,
            p.alpha,
            p.threshold,
            p.erosion_m,
        )),
        StrategyKind::Stubborn => {
            let clf = classifier.ok_or_else(|| {
                Error::Config("stubborn strategy needs a trained classifier".into())
            })?;
            Box::new(StubbornStrategy::new(map, rule, Some(clf)))
        }
        StrategyKind::LatestFiltered => {
            Box::new(LatestFilteredStrategy::new(map, rule, p.rho, p.u_clamp))
        }
        StrategyKind::LogOdds => Box::new(LogOddsStrategy::new(map, rule)),
        StrategyKind::Averaging => Box::new(AveragingStrategy::plain(map, rule)),
        StrategyKind::WeightedAveraging => {
            Box::new(AveragingStrategy::weighted(map, rule, p.u_clamp))
        }
    })
}
