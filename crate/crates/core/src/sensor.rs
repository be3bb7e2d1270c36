//! Field-of-view sensor and the cameras that turn visible cells into logits.

use std::collections::BTreeMap;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::calibration::{Logits, PROB_FLOOR};
use crate::error::Result;
use crate::noise::{generate_logits, ground_truth_logits, NoiseModel};
use crate::scene::{raycast_fov, AgentPose, Scene};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorConfig {
    pub fov_deg: f64,
    pub n_rays: usize,
    pub max_range_m: f64,
    pub camera_height_m: f64,
    /// Camera tilt; negative looks down.
    pub pitch_deg: f64,
    pub vfov_deg: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        SensorConfig {
            fov_deg: 90.0,
            n_rays: 61,
            max_range_m: 5.0,
            camera_height_m: 0.88,
            pitch_deg: -20.0,
            vfov_deg: 63.4,
        }
    }
}

impl SensorConfig {
    pub fn fov_rad(&self) -> f64 {
        self.fov_deg.to_radians()
    }

    /// Closest distance at which a surface of the given top height enters
    /// the bottom edge of the image.
    pub fn min_visible_distance(&self, top_height_m: f64) -> f64 {
        let below = (self.vfov_deg / 2.0 - self.pitch_deg).to_radians();
        let drop = self.camera_height_m - top_height_m;
        if drop <= 0.0 || below >= std::f64::consts::FRAC_PI_2 {
            0.0
        } else {
            drop / below.tan()
        }
    }

    /// Raycast cells minus those inside the blind zone below the camera.
    pub fn visible_cells(&self, scene: &Scene, pose: &AgentPose) -> Vec<(usize, f64)> {
        let mut cells = raycast_fov(scene, pose, self.fov_rad(), self.n_rays, self.max_range_m);
        cells.retain(|&(c, d)| d >= self.min_visible_distance(scene.heights[c]));
        cells
    }
}

/// One perceived cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    /// Scene cell index.
    pub cell: usize,
    /// World position of the cell center.
    pub x: f64,
    pub y: f64,
    pub distance_m: f64,
    /// Measured top height of the cell.
    pub height_m: f64,
    pub logits: Logits,
    pub true_class: usize,
}

/// Everything perceived from one pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub pose: AgentPose,
    pub hits: Vec<Hit>,
}

impl Observation {
    pub fn empty(pose: AgentPose) -> Self {
        Observation {
            pose,
            hits: Vec::new(),
        }
    }

    /// Order-sensitive digest of the observation, for stream comparisons.
    pub fn digest(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.pose.x.to_bits().hash(&mut h);
        self.pose.y.to_bits().hash(&mut h);
        self.pose.theta.to_bits().hash(&mut h);
        for hit in &self.hits {
            hit.cell.hash(&mut h);
            hit.distance_m.to_bits().hash(&mut h);
            for v in hit.logits.values() {
                v.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }
}

/// Produces an observation for a pose.
pub trait Camera: Send + Sync {
    fn observe(
        &self,
        scene: &Scene,
        pose: &AgentPose,
        step: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Observation>;
}

fn observe_with(
    scene: &Scene,
    sensor: &SensorConfig,
    pose: &AgentPose,
    mut logits_for: impl FnMut(usize, usize, f64) -> Result<Logits>,
) -> Result<Observation> {
    let hits = sensor
        .visible_cells(scene, pose)
        .into_iter()
        .map(|(cell, distance_m)| {
            let (x, y) = scene.cell_center(cell);
            let true_class = scene.classes[cell];
            Ok(Hit {
                cell,
                x,
                y,
                distance_m,
                height_m: scene.heights[cell],
                logits: logits_for(cell, true_class, distance_m)?,
                true_class,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Observation { pose: *pose, hits })
}

/// Distance-dependent miscalibrated perception.
#[derive(Debug, Clone)]
pub struct NoisyCamera {
    pub sensor: SensorConfig,
    pub noise: NoiseModel,
}

impl Camera for NoisyCamera {
    fn observe(
        &self,
        scene: &Scene,
        pose: &AgentPose,
        _step: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Observation> {
        observe_with(scene, &self.sensor, pose, |_, class, d| {
            generate_logits(class, d, scene.num_classes, &self.noise, rng)
        })
    }
}

/// Perfect semantic camera.
#[derive(Debug, Clone)]
pub struct GroundTruthCamera {
    pub sensor: SensorConfig,
}

impl Camera for GroundTruthCamera {
    fn observe(
        &self,
        scene: &Scene,
        pose: &AgentPose,
        _step: usize,
        _rng: &mut dyn RngCore,
    ) -> Result<Observation> {
        observe_with(scene, &self.sensor, pose, |_, class, _| {
            ground_truth_logits(class, scene.num_classes)
        })
    }
}

/// A scripted per-cell perception override.
#[derive(Debug, Clone, PartialEq)]
pub struct CellScript {
    /// Observed class by step, cycled.
    pub classes: Vec<usize>,
    /// Calibrated mass on the observed class.
    pub confidence: f64,
}

/// Wraps another camera and replaces the logits of scripted cells whenever
/// they are visible.
pub struct ScriptedCamera<C> {
    pub base: C,
    pub scripts: BTreeMap<usize, CellScript>,
    /// Logits are `k · ln q` for the scripted calibrated vector `q`.
    pub overconfidence: f64,
}

impl<C: Camera> Camera for ScriptedCamera<C> {
    fn observe(
        &self,
        scene: &Scene,
        pose: &AgentPose,
        step: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Observation> {
        let mut obs = self.base.observe(scene, pose, step, rng)?;
        let c = scene.num_classes;
        for hit in &mut obs.hits {
            if let Some(script) = self.scripts.get(&hit.cell) {
                let observed = script.classes[step % script.classes.len()];
                let rest = (1.0 - script.confidence) / (c - 1) as f64;
                let values = (0..c)
                    .map(|j| {
                        let q = if j == observed { script.confidence } else { rest };
                        self.overconfidence * q.max(PROB_FLOOR).ln()
                    })
                    .collect();
                hit.logits = Logits::new(values)?;
            }
        }
        Ok(obs)
    }
}
