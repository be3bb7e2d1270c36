//! Benchmark harness: scene sets, episode lists, classifier training and the
//! parallel strategy × policy matrix.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::aggregation::{NBClassifier, StrategyConfig, StrategyKind, StubbornStrategy, Strategy};
use crate::calibration::{LabeledLogits, Temperature};
use crate::episode::{episode_route, run_episode, EpisodeConfig, EpisodeSettings, EpisodeSpec};
use crate::error::{Error, Result};
use crate::map::GridMap;
use crate::metrics::EpisodeResult;
use crate::policy::{plan_route, PolicyKind};
use crate::scene::{generate_scene, AgentPose, Scene, SceneSpec};
use crate::sensor::{Camera, NoisyCamera};

/// Offset separating training scene seeds from evaluation scene seeds.
pub const TRAINING_SEED_OFFSET: u64 = 1 << 40;

/// Episodes used to train the stubborn classifier.
pub const STUBBORN_TRAINING_EPISODES: usize = 64;

/// SplitMix64 finalizer over `base`, a stream tag and an index.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03))
        .wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_SCENE: u64 = 1;
const STREAM_TARGET: u64 = 2;
const STREAM_EPISODE: u64 = 3;
const STREAM_CALIBRATION: u64 = 4;

pub fn generate_scenes(spec: &SceneSpec, count: usize, seed: u64) -> Result<Vec<Scene>> {
    (0..count)
        .into_par_iter()
        .map(|i| generate_scene(spec, derive_seed(seed, STREAM_SCENE, i as u64)))
        .collect()
}

/// Builds `count` episodes cycling through scenes and start poses. The
/// target class is drawn among the classes reachable from the start pose
/// (restricted to `target_classes` when non-empty); when none is reachable
/// an unreachable one is kept so the episode shows up as invalid.
pub fn episode_specs(
    scenes: &[Scene],
    count: usize,
    target_classes: &[usize],
    settings: &EpisodeSettings,
    seed: u64,
) -> Result<Vec<EpisodeSpec>> {
    if scenes.is_empty() {
        return Err(Error::InvalidInput("no scenes".into()));
    }
    let starts: Vec<usize> = scenes.iter().map(|s| s.start_poses.len()).collect();
    if starts.contains(&0) {
        return Err(Error::InvalidInput("scene without start poses".into()));
    }
    let mut slots = Vec::new();
    'outer: for round in 0.. {
        for (scene_id, &n) in starts.iter().enumerate() {
            if round < n {
                slots.push((scene_id, round));
                if slots.len() == count {
                    break 'outer;
                }
            }
        }
        if round >= *starts.iter().max().unwrap() {
            // Every (scene, start) pair is used; repeat with fresh targets.
            let base = slots.clone();
            while slots.len() < count {
                slots.push(base[slots.len() % base.len()]);
            }
            break;
        }
    }
    slots.truncate(count);
    slots
        .into_par_iter()
        .enumerate()
        .map(|(i, (scene_id, start_index))| {
            let scene = &scenes[scene_id];
            let mut classes: Vec<usize> = scene
                .object_classes()
                .filter(|c| target_classes.is_empty() || target_classes.contains(c))
                .filter(|&c| scene.targets_of(c).next().is_some())
                .collect();
            if classes.is_empty() {
                return Err(Error::InvalidInput(format!(
                    "scene {scene_id} contains none of the requested target classes"
                )));
            }
            let reachable: Vec<usize> = classes
                .iter()
                .copied()
                .filter(|&c| {
                    plan_route(
                        scene,
                        &scene.start_poses[start_index],
                        c,
                        &settings.motion,
                        &settings.sensor,
                        settings.success_radius_m,
                    )
                    .is_ok()
                })
                .collect();
            if !reachable.is_empty() {
                classes = reachable;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_TARGET, i as u64));
            Ok(EpisodeSpec {
                episode_id: i as u64,
                scene_id,
                start_index,
                target_class: classes[rng.random_range(0..classes.len())],
                seed: derive_seed(seed, STREAM_EPISODE, i as u64),
            })
        })
        .collect()
}

/// Episodes whose target is reachable, and the ids of the others.
pub fn split_valid(scenes: &[Scene], specs: &[EpisodeSpec], settings: &EpisodeSettings) -> Result<(Vec<EpisodeSpec>, Vec<u64>)> {
    let checks: Vec<Result<bool>> = specs
        .par_iter()
        .map(|s| match episode_route(&scenes[s.scene_id], s, settings) {
            Ok(_) => Ok(true),
            Err(Error::NoPath { .. }) => Ok(false),
            Err(e) => Err(e),
        })
        .collect();
    let mut valid = Vec::new();
    let mut invalid = Vec::new();
    for (s, ok) in specs.iter().zip(checks) {
        if ok? {
            valid.push(*s);
        } else {
            invalid.push(s.episode_id);
        }
    }
    Ok((valid, invalid))
}

/// Labeled logits from the noisy camera at random free poses.
pub fn simulate_calibration_set(scenes: &[Scene], settings: &EpisodeSettings, samples: usize, seed: u64) -> Result<Vec<LabeledLogits>> {
    if scenes.is_empty() || samples == 0 {
        return Err(Error::InvalidInput("need scenes and a positive sample count".into()));
    }
    let camera = NoisyCamera {
        sensor: settings.sensor,
        noise: settings.noise.clone(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_CALIBRATION, 0));
    let mut out = Vec::with_capacity(samples);
    let mut frames = 0usize;
    while out.len() < samples {
        frames += 1;
        if frames > 100 * samples + 1000 {
            return Err(Error::InvalidInput("scenes yield no observations".into()));
        }
        let scene = &scenes[rng.random_range(0..scenes.len())];
        let free: Vec<usize> = (0..scene.num_cells()).filter(|&c| !scene.is_occupied(c)).collect();
        if free.is_empty() {
            continue;
        }
        let (x, y) = scene.cell_center(free[rng.random_range(0..free.len())]);
        let theta = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let obs = camera.observe(scene, &AgentPose::new(x, y, theta), 0, &mut rng)?;
        for h in obs.hits {
            if out.len() == samples {
                break;
            }
            out.push(LabeledLogits {
                logits: h.logits,
                label: h.true_class,
            });
        }
    }
    Ok(out)
}

/// Stubborn classifier features from shortest-path episodes: one sample per
/// step with a candidate component, labeled by whether the component covers
/// a true target cell.
pub fn collect_stubborn_features(
    scenes: &[Scene],
    specs: &[EpisodeSpec],
    settings: &EpisodeSettings,
    use_calibration: bool,
) -> Result<(Vec<Vec<f64>>, Vec<bool>)> {
    let t = if use_calibration {
        Temperature::new(settings.temperature)?
    } else {
        Temperature::IDENTITY
    };
    let camera = NoisyCamera {
        sensor: settings.sensor,
        noise: settings.noise.clone(),
    };
    let per_episode: Vec<Result<Vec<(Vec<f64>, bool)>>> = specs
        .par_iter()
        .map(|spec| {
            let scene = &scenes[spec.scene_id];
            let route = match episode_route(scene, spec, settings) {
                Ok(r) => r,
                Err(Error::NoPath { .. }) => return Ok(Vec::new()),
                Err(e) => return Err(e),
            };
            let truth = scene.target_cells(spec.target_class);
            let mut map = GridMap::for_scene(scene);
            let mut strategy = StubbornStrategy::collector(&map, spec.target_class, settings.success_radius_m);
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let mut samples = Vec::new();
            for (step, pose) in route.poses.iter().enumerate().take(settings.max_steps) {
                let obs = camera.observe(scene, pose, step, &mut rng)?;
                let hits = map.project_observation(&obs, t);
                map.integrate_geometry(&hits);
                strategy.integrate(&mut map, &hits, pose);
                if let Some(c) = strategy.candidate(&map, pose) {
                    let label = c.cells.iter().any(|x| truth.binary_search(x).is_ok());
                    samples.push((c.features.to_vec(), label));
                }
            }
            Ok(samples)
        })
        .collect();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for r in per_episode {
        for (f, l) in r? {
            features.push(f);
            labels.push(l);
        }
    }
    Ok((features, labels))
}

/// Trains the stubborn classifier on `episodes` shortest-path episodes from
/// training scenes.
pub fn train_stubborn(
    scene_spec: &SceneSpec,
    settings: &EpisodeSettings,
    use_calibration: bool,
    episodes: usize,
    seed: u64,
) -> Result<NBClassifier> {
    let train_seed = seed.wrapping_add(TRAINING_SEED_OFFSET);
    let n_scenes = episodes.div_ceil(scene_spec.num_start_poses.max(1)).max(1);
    let scenes = generate_scenes(scene_spec, n_scenes, train_seed)?;
    let specs = episode_specs(&scenes, episodes, &[], settings, train_seed)?;
    let (x, y) = collect_stubborn_features(&scenes, &specs, settings, use_calibration)?;
    NBClassifier::train(&x, &y)
}

/// One strategy × policy × episode result set with the invalid episodes.
#[derive(Debug, Clone)]
pub struct MatrixOutput {
    pub results: Vec<EpisodeResult>,
    pub invalid: Vec<u64>,
}

pub struct Matrix<'a> {
    pub scenes: &'a [Scene],
    pub specs: &'a [EpisodeSpec],
    pub strategies: &'a [StrategyConfig],
    pub policies: &'a [PolicyKind],
    pub settings: &'a EpisodeSettings,
    /// Used by stubborn strategies.
    pub classifier: Option<Arc<NBClassifier>>,
}

impl Matrix<'_> {
    /// Runs every combination in parallel. Results are ordered by strategy,
    /// then policy, then episode id, independent of scheduling.
    pub fn run(&self) -> Result<MatrixOutput> {
        let (valid, invalid) = split_valid(self.scenes, self.specs, self.settings)?;
        if self
            .strategies
            .iter()
            .any(|s| s.kind == StrategyKind::Stubborn)
            && self.classifier.is_none()
        {
            return Err(Error::Config("stubborn strategy needs a trained classifier".into()));
        }
        let mut jobs = Vec::new();
        for (si, strategy) in self.strategies.iter().enumerate() {
            for (pi, &policy) in self.policies.iter().enumerate() {
                for spec in &valid {
                    jobs.push((si, pi, strategy, policy, *spec));
                }
            }
        }
        let mut done: Vec<(usize, usize, u64, EpisodeResult)> = jobs
            .into_par_iter()
            .map(|(si, pi, strategy, policy, spec)| {
                let cfg = EpisodeConfig {
                    scene: &self.scenes[spec.scene_id],
                    spec,
                    strategy,
                    policy,
                    settings: self.settings,
                    classifier: self.classifier.clone(),
                };
                run_episode(&cfg).map(|r| (si, pi, spec.episode_id, r))
            })
            .collect::<Result<_>>()?;
        done.sort_by_key(|(si, pi, id, _)| (*si, *pi, *id));
        Ok(MatrixOutput {
            results: done.into_iter().map(|(.., r)| r).collect(),
            invalid,
        })
    }
}

/// Runs `f` on a pool with `workers` threads (0 = one per core).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// The comparison matrix used by default: the ground-truth ceiling, the
/// baselines on raw probabilities, and the calibrated variants.
pub fn default_strategies() -> Vec<StrategyConfig> {
    use StrategyKind::*;
    vec![
        StrategyConfig::new(GroundTruth, false, false),
        StrategyConfig::new(Latest, false, false),
        StrategyConfig::new(HitsViews, false, false),
        StrategyConfig::new(SkillFusion, false, false),
        StrategyConfig::new(Stubborn, false, false),
        StrategyConfig::new(LatestFiltered, true, false),
        StrategyConfig::new(LogOdds, true, true),
        StrategyConfig::new(Averaging, true, false),
        StrategyConfig::new(Averaging, false, true),
        StrategyConfig::new(Averaging, true, true),
        StrategyConfig::new(WeightedAveraging, true, true),
    ]
}
