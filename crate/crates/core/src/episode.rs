//! Closed-loop episodes: observe, project, aggregate, decide, move.

use std::hash::{Hash, Hasher};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aggregation::{build_strategy, NBClassifier, StrategyConfig, StrategyKind, SUCCESS_RADIUS_M};
use crate::calibration::Temperature;
use crate::error::{Error, Result};
use crate::map::GridMap;
use crate::metrics::{count_detection_fp, EpisodeResult, DEFAULT_DILATION_CELLS};
use crate::noise::NoiseModel;
use crate::policy::{first_within, plan_route, FrontierConfig, FrontierPolicy, MotionConfig, PolicyKind, Route};
use crate::scene::{AgentPose, Scene};
use crate::sensor::{Camera, GroundTruthCamera, NoisyCamera, SensorConfig};

pub const DEFAULT_MAX_STEPS: usize = 1000;

/// Settings shared by every episode of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeSettings {
    pub noise: NoiseModel,
    pub sensor: SensorConfig,
    /// Applied to strategies that use calibrated probabilities.
    pub temperature: f64,
    pub max_steps: usize,
    pub success_radius_m: f64,
    pub dilation_cells: usize,
    pub motion: MotionConfig,
    pub frontier: FrontierConfig,
}

impl Default for EpisodeSettings {
    fn default() -> Self {
        EpisodeSettings {
            noise: NoiseModel::default(),
            sensor: SensorConfig::default(),
            temperature: 1.0,
            max_steps: DEFAULT_MAX_STEPS,
            success_radius_m: SUCCESS_RADIUS_M,
            dilation_cells: DEFAULT_DILATION_CELLS,
            motion: MotionConfig::default(),
            frontier: FrontierConfig::default(),
        }
    }
}

impl EpisodeSettings {
    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 {
            return Err(Error::InvalidParameter("max_steps must be at least 1".into()));
        }
        if !(self.success_radius_m > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "success_radius_m must be positive, got {}",
                self.success_radius_m
            )));
        }
        if !(self.motion.step_m > 0.0) || !(self.motion.turn_deg > 0.0) {
            return Err(Error::InvalidParameter("motion step and turn must be positive".into()));
        }
        Temperature::new(self.temperature)?;
        Ok(())
    }
}

/// Identity of one episode within a benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub episode_id: u64,
    pub scene_id: usize,
    pub start_index: usize,
    pub target_class: usize,
    pub seed: u64,
}

/// Everything needed to run one episode.
#[derive(Clone)]
pub struct EpisodeConfig<'a> {
    pub scene: &'a Scene,
    pub spec: EpisodeSpec,
    pub strategy: &'a StrategyConfig,
    pub policy: PolicyKind,
    pub settings: &'a EpisodeSettings,
    /// Required by the stubborn strategy.
    pub classifier: Option<Arc<NBClassifier>>,
}

/// Final state of an episode, kept for map export.
#[derive(Debug, Clone)]
pub struct EpisodeTrace {
    pub map: GridMap,
    pub target_mask: Vec<bool>,
    pub poses: Vec<AgentPose>,
}

/// The camera an episode uses by default: a perfect one for the
/// ground-truth strategy and the noisy one otherwise.
pub fn default_camera(strategy: &StrategyConfig, settings: &EpisodeSettings) -> Box<dyn Camera> {
    if strategy.kind == StrategyKind::GroundTruth {
        Box::new(GroundTruthCamera {
            sensor: settings.sensor,
        })
    } else {
        Box::new(NoisyCamera {
            sensor: settings.sensor,
            noise: settings.noise.clone(),
        })
    }
}

/// Temperature applied to the strategy's inputs.
pub fn strategy_temperature(strategy: &StrategyConfig, settings: &EpisodeSettings) -> Result<Temperature> {
    if strategy.use_calibration && strategy.kind != StrategyKind::GroundTruth {
        Temperature::new(settings.temperature)
    } else {
        Ok(Temperature::IDENTITY)
    }
}

pub fn run_episode(cfg: &EpisodeConfig) -> Result<EpisodeResult> {
    let camera = default_camera(cfg.strategy, cfg.settings);
    run_episode_with(cfg, camera.as_ref()).map(|(r, _)| r)
}

/// Runs an episode with an explicit camera and returns the final map too.
///
/// Fails with [`Error::NoPath`] when no target instance is reachable from the
/// start pose; such episodes are invalid.
pub fn run_episode_with(cfg: &EpisodeConfig, camera: &dyn Camera) -> Result<(EpisodeResult, EpisodeTrace)> {
    let scene = cfg.scene;
    let settings = cfg.settings;
    let spec = cfg.spec;
    settings.validate()?;
    let start = *scene.start_poses.get(spec.start_index).ok_or_else(|| {
        Error::InvalidInput(format!(
            "scene {} has no start pose {}",
            spec.scene_id, spec.start_index
        ))
    })?;
    let route = plan_route(
        scene,
        &start,
        spec.target_class,
        &settings.motion,
        &settings.sensor,
        settings.success_radius_m,
    )?;
    let target_cells = scene.target_cells(spec.target_class);
    let centers: Vec<(f64, f64)> = target_cells.iter().map(|&c| scene.cell_center(c)).collect();
    let shortest_length_m =
        first_within(&route.polyline, &centers, settings.success_radius_m).unwrap_or(route.length_m);
    let near_target = |p: &AgentPose| centers.iter().any(|c| p.distance_to(c.0, c.1) <= settings.success_radius_m);

    let temperature = strategy_temperature(cfg.strategy, settings)?;
    let mut map = GridMap::for_scene(scene);
    let mut strategy = build_strategy(
        cfg.strategy,
        &map,
        spec.target_class,
        settings.success_radius_m,
        cfg.classifier.clone(),
    )?;
    let mut frontier = FrontierPolicy::new(&map, settings.frontier, settings.motion);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let n = scene.num_cells();
    let boxes: Vec<_> = scene.targets_of(spec.target_class).map(|t| t.bbox).collect();
    let mut in_box = vec![false; n];
    let box_cells: Vec<Vec<usize>> = boxes
        .iter()
        .map(|b| b.cells().map(|(x, y)| scene.index(x, y)).collect())
        .collect();
    for cells in &box_cells {
        for &c in cells {
            in_box[c] = true;
        }
    }
    let mut box_seen = vec![false; boxes.len()];
    let mut seen_cell = vec![false; n];
    let mut outside_union = vec![false; n];
    let mut det_fn_count = 0;

    let mut stream = std::collections::hash_map::DefaultHasher::new();
    let mut pose = start;
    let mut traveled = 0.0;
    let mut poses = vec![pose];
    let mut found: Option<(usize, usize, bool, f64)> = None;
    let mut mask = vec![false; n];
    let mut steps_used = 0;

    for step in 0..settings.max_steps {
        let obs = camera.observe(scene, &pose, step, &mut rng)?;
        obs.digest().hash(&mut stream);
        steps_used = step + 1;
        for h in &obs.hits {
            seen_cell[h.cell] = true;
        }
        let hits = map.project_observation(&obs, temperature);
        map.integrate_geometry(&hits);
        strategy.integrate(&mut map, &hits, &pose);
        mask = strategy.target_mask(&map);

        for i in 0..n {
            if mask[i] && !in_box[i] {
                outside_union[i] = true;
            }
        }
        for (b, cells) in box_cells.iter().enumerate() {
            if !box_seen[b] {
                box_seen[b] = cells.iter().any(|&c| seen_cell[c]);
            }
            if box_seen[b] && !cells.iter().any(|&c| mask[c]) {
                det_fn_count += 1;
            }
        }

        let decision = strategy.decide_found(&map, &pose);
        if decision.found && found.is_none() {
            let cell = decision.cell.expect("found decision carries a cell");
            found = Some((step, cell, near_target(&pose), traveled));
            if cfg.policy == PolicyKind::Frontier {
                break;
            }
        }

        match cfg.policy {
            PolicyKind::ShortestPath => {
                if step + 1 >= route.poses.len() {
                    break;
                }
                pose = route.poses[step + 1];
                traveled = route.traveled_m[step + 1];
            }
            PolicyKind::Frontier => {
                let mv = frontier.step(scene, &mut map, &mask, &pose, step);
                pose = mv.pose;
                traveled += mv.distance_m;
            }
        }
        poses.push(pose);
    }

    let (success, found_fp, found_step, found_cell, path_length_m) = match found {
        Some((step, cell, ok, p)) => (ok, !ok, Some(step), Some(cell), p),
        None => (false, false, None, None, traveled),
    };
    let result = EpisodeResult {
        episode_id: spec.episode_id,
        scene_id: spec.scene_id,
        start_index: spec.start_index,
        target_class: spec.target_class,
        seed: spec.seed,
        strategy: cfg.strategy.label(),
        policy: cfg.policy,
        success,
        found_fp,
        found_fn: !success && !found_fp,
        found_step,
        found_cell,
        det_fp_count: count_detection_fp(&outside_union, scene.width, scene.height, settings.dilation_cells),
        det_fn_count,
        steps_used,
        path_length_m,
        shortest_length_m,
        stream_digest: stream.finish(),
    };
    Ok((
        result,
        EpisodeTrace {
            map,
            target_mask: mask,
            poses,
        },
    ))
}

/// The shortest-path route an episode would follow.
pub fn episode_route(scene: &Scene, spec: &EpisodeSpec, settings: &EpisodeSettings) -> Result<Route> {
    let start = scene.start_poses.get(spec.start_index).ok_or_else(|| {
        Error::InvalidInput(format!(
            "scene {} has no start pose {}",
            spec.scene_id, spec.start_index
        ))
    })?;
    plan_route(
        scene,
        start,
        spec.target_class,
        &settings.motion,
        &settings.sensor,
        settings.success_radius_m,
    )
}
