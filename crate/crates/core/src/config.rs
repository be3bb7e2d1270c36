//! Versioned run configuration and the benchmark pipeline it drives.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::aggregation::{NBClassifier, StrategyConfig, StrategyKind, StrategyParams, SUCCESS_RADIUS_M};
use crate::bench::{
    default_strategies, episode_specs, generate_scenes, simulate_calibration_set, train_stubborn, with_workers, Matrix,
    STUBBORN_TRAINING_EPISODES, TRAINING_SEED_OFFSET,
};
use crate::calibration::fit_temperature;
use crate::episode::{default_camera, run_episode_with, EpisodeConfig, EpisodeSettings, EpisodeSpec, EpisodeTrace, DEFAULT_MAX_STEPS};
use crate::error::{Error, Result};
use crate::hyperopt::{trial_table, tune_strategy, ParamSpace, SearchResult, TuningSet, DEFAULT_BUDGET, DEFAULT_TRAINING_EPISODES};
use crate::logit_file::read_logit_file;
use crate::metrics::{
    aggregate_all, metrics_csv, metrics_text, write_results_jsonl, EpisodeResult, MetricsRow, DEFAULT_DILATION_CELLS,
};
use crate::noise::NoiseModel;
use crate::policy::{FrontierConfig, MotionConfig, PolicyKind};
use crate::scene::{Scene, SceneSpec};
use crate::sensor::SensorConfig;

pub const CONFIG_VERSION: u32 = 1;

/// Default number of simulated samples used to fit the temperature.
pub const DEFAULT_CALIBRATION_SAMPLES: usize = 5000;

/// Where scenes come from: a directory of scene files, or generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSource {
    pub dir: Option<PathBuf>,
    /// Number of generated scenes; by default just enough for one episode
    /// per start pose.
    pub count: Option<usize>,
    pub generate: SceneSpec,
}

impl Default for SceneSource {
    fn default() -> Self {
        SceneSource {
            dir: None,
            count: None,
            generate: SceneSpec::default(),
        }
    }
}

/// Fixed temperature, a labeled logit file to fit on, or (neither) a fit on
/// logits simulated in training scenes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemperatureSource {
    pub value: Option<f64>,
    pub logit_file: Option<PathBuf>,
    pub samples: usize,
}

impl Default for TemperatureSource {
    fn default() -> Self {
        TemperatureSource {
            value: None,
            logit_file: None,
            samples: DEFAULT_CALIBRATION_SAMPLES,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeLimits {
    pub max_steps: usize,
    pub success_radius_m: f64,
    pub dilation_cells: usize,
}

impl Default for EpisodeLimits {
    fn default() -> Self {
        EpisodeLimits {
            max_steps: DEFAULT_MAX_STEPS,
            success_radius_m: SUCCESS_RADIUS_M,
            dilation_cells: DEFAULT_DILATION_CELLS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StubbornTraining {
    pub episodes: usize,
}

impl Default for StubbornTraining {
    fn default() -> Self {
        StubbornTraining {
            episodes: STUBBORN_TRAINING_EPISODES,
        }
    }
}

/// Random-search tuning applied to every strategy with tunable parameters
/// before the evaluation episodes run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningConfig {
    pub budget: usize,
    pub episodes: usize,
    /// Seed of the search and its training episodes; the run seed if unset.
    pub seed: Option<u64>,
}

impl Default for TuningConfig {
    fn default() -> Self {
        TuningConfig {
            budget: DEFAULT_BUDGET,
            episodes: DEFAULT_TRAINING_EPISODES,
            seed: None,
        }
    }
}

/// A strategy entry; `params_file` points to a parameter table written by
/// the hyperopt command and overrides `params`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyEntry {
    #[serde(flatten)]
    pub config: StrategyConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params_file: Option<PathBuf>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("semfuse-out")
}

fn default_episodes() -> usize {
    100
}

fn default_policies() -> Vec<PolicyKind> {
    vec![PolicyKind::ShortestPath]
}

fn default_strategy_entries() -> Vec<StrategyEntry> {
    default_strategies()
        .into_iter()
        .map(|config| StrategyEntry {
            config,
            params_file: None,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    /// Worker threads; 0 means one per core.
    #[serde(default)]
    pub workers: usize,
    /// Restricts target classes; empty means any object class present.
    #[serde(default)]
    pub target_classes: Vec<usize>,
    #[serde(default)]
    pub scenes: SceneSource,
    #[serde(default = "default_strategy_entries")]
    pub strategies: Vec<StrategyEntry>,
    #[serde(default = "default_policies")]
    pub policies: Vec<PolicyKind>,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub sensor: SensorConfig,
    #[serde(default)]
    pub temperature: TemperatureSource,
    #[serde(default)]
    pub episode: EpisodeLimits,
    #[serde(default)]
    pub motion: MotionConfig,
    #[serde(default)]
    pub frontier: FrontierConfig,
    #[serde(default)]
    pub stubborn: StubbornTraining,
    #[serde(default)]
    pub tuning: Option<TuningConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            version: CONFIG_VERSION,
            seed: None,
            output_dir: default_output_dir(),
            episodes: default_episodes(),
            workers: 0,
            target_classes: Vec::new(),
            scenes: SceneSource::default(),
            strategies: default_strategy_entries(),
            policies: default_policies(),
            noise: NoiseModel::default(),
            sensor: SensorConfig::default(),
            temperature: TemperatureSource::default(),
            episode: EpisodeLimits::default(),
            motion: MotionConfig::default(),
            frontier: FrontierConfig::default(),
            stubborn: StubbornTraining::default(),
            tuning: None,
        }
    }
}

/// Reads a parameter table (`[params]` or bare keys) written by hyperopt.
pub fn read_params_file(path: &Path) -> Result<StrategyParams> {
    #[derive(Deserialize)]
    struct Wrapped {
        params: StrategyParams,
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if let Ok(w) = toml::from_str::<Wrapped>(&text) {
        return Ok(w.params);
    }
    toml::from_str::<StrategyParams>(&text).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_params_file(path: &Path, params: &StrategyParams) -> Result<()> {
    #[derive(Serialize)]
    struct Wrapped<'a> {
        params: &'a StrategyParams,
    }
    let text = toml::to_string(&Wrapped { params }).map_err(|e| Error::format(path, e.to_string()))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

impl RunConfig {
    /// Parses and validates a configuration. Relative paths inside it are
    /// resolved against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<RunConfig> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.resolve_paths(base_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        RunConfig::from_toml(&text, base)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        if let Some(d) = &mut self.scenes.dir {
            fix(d);
        }
        if let Some(f) = &mut self.temperature.logit_file {
            fix(f);
        }
        for s in &mut self.strategies {
            if let Some(f) = &mut s.params_file {
                fix(f);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.episodes == 0 {
            return Err(Error::Config("episodes must be at least 1".into()));
        }
        if self.strategies.is_empty() || self.policies.is_empty() {
            return Err(Error::Config("need at least one strategy and one policy".into()));
        }
        if let Some(d) = &self.scenes.dir {
            if !d.is_dir() {
                return Err(Error::Config(format!("scene directory {} does not exist", d.display())));
            }
        }
        if self.scenes.count == Some(0) {
            return Err(Error::Config("scenes.count must be at least 1".into()));
        }
        match (&self.temperature.value, &self.temperature.logit_file) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("give either temperature.value or temperature.logit_file".into()))
            }
            (_, Some(f)) if !f.is_file() => {
                return Err(Error::Config(format!("logit file {} does not exist", f.display())))
            }
            _ => {}
        }
        if self.temperature.samples == 0 {
            return Err(Error::Config("temperature.samples must be at least 1".into()));
        }
        for s in &self.strategies {
            if let Some(f) = &s.params_file {
                if !f.is_file() {
                    return Err(Error::Config(format!("params file {} does not exist", f.display())));
                }
            }
            s.config.validate()?;
        }
        self.noise.validate(self.scenes.generate.num_classes)?;
        self.settings(1.0).validate()?;
        if let Some(t) = &self.tuning {
            if t.budget == 0 || t.episodes == 0 {
                return Err(Error::Config("tuning budget and episodes must be positive".into()));
            }
        }
        Ok(())
    }

    /// Episode settings with the given temperature.
    pub fn settings(&self, temperature: f64) -> EpisodeSettings {
        EpisodeSettings {
            noise: self.noise.clone(),
            sensor: self.sensor,
            temperature,
            max_steps: self.episode.max_steps,
            success_radius_m: self.episode.success_radius_m,
            dilation_cells: self.episode.dilation_cells,
            motion: self.motion,
            frontier: self.frontier,
        }
    }

    /// Strategy configurations with parameter files applied.
    pub fn strategy_configs(&self) -> Result<Vec<StrategyConfig>> {
        self.strategies
            .iter()
            .map(|s| {
                let mut c = s.config.clone();
                if let Some(f) = &s.params_file {
                    c.params = read_params_file(f)?;
                }
                c.validate()?;
                Ok(c)
            })
            .collect()
    }
}

/// Loads every `*.json` scene in a directory, sorted by file name.
pub fn load_scene_dir(dir: &Path) -> Result<Vec<Scene>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Config(format!("no scene files in {}", dir.display())));
    }
    paths.iter().map(|p| Scene::load(p)).collect()
}

pub fn scene_file_name(index: usize) -> String {
    format!("scene_{index:04}.json")
}

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub scenes: Vec<Scene>,
    pub specs: Vec<EpisodeSpec>,
    pub settings: EpisodeSettings,
    pub strategies: Vec<StrategyConfig>,
    pub classifier: Option<Arc<NBClassifier>>,
    pub tuning: Vec<(String, SearchResult)>,
    pub results: Vec<EpisodeResult>,
    pub invalid: Vec<u64>,
    pub rows: Vec<MetricsRow>,
}

/// Resolved state needed to replay episodes of a finished run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub seed: u64,
    pub settings: EpisodeSettings,
    pub strategies: Vec<StrategyConfig>,
    pub policies: Vec<PolicyKind>,
    pub specs: Vec<EpisodeSpec>,
    pub invalid: Vec<u64>,
}

impl RunConfig {
    /// Resolves the temperature: fixed, fitted on a logit file, or fitted
    /// on logits simulated in training scenes.
    pub fn resolve_temperature(&self, seed: u64) -> Result<f64> {
        if let Some(t) = self.temperature.value {
            return Ok(t);
        }
        let data = match &self.temperature.logit_file {
            Some(f) => read_logit_file(f)?,
            None => {
                let train = generate_scenes(&self.scenes.generate, 8, seed.wrapping_add(TRAINING_SEED_OFFSET))?;
                simulate_calibration_set(&train, &self.settings(1.0), self.temperature.samples, seed)?
            }
        };
        Ok(fit_temperature(&data)?.value())
    }

    pub fn load_scenes(&self, seed: u64) -> Result<Vec<Scene>> {
        match &self.scenes.dir {
            Some(d) => load_scene_dir(d),
            None => {
                let per = self.scenes.generate.num_start_poses.max(1);
                let count = self.scenes.count.unwrap_or_else(|| self.episodes.div_ceil(per));
                generate_scenes(&self.scenes.generate, count, seed)
            }
        }
    }

    /// Runs the full pipeline: scenes, temperature, optional tuning,
    /// classifier training and the strategy × policy matrix.
    pub fn execute(&self, seed: u64) -> Result<RunOutput> {
        with_workers(self.workers, || self.execute_inner(seed))?
    }

    fn execute_inner(&self, seed: u64) -> Result<RunOutput> {
        let scenes = self.load_scenes(seed)?;
        let temperature = self.resolve_temperature(seed)?;
        let settings = self.settings(temperature);
        settings.validate()?;
        let mut strategies = self.strategy_configs()?;
        let specs = episode_specs(&scenes, self.episodes, &self.target_classes, &settings, seed)?;
        let classifier = if strategies.iter().any(|s| s.kind == StrategyKind::Stubborn) {
            Some(Arc::new(train_stubborn(
                &self.scenes.generate,
                &settings,
                false,
                self.stubborn.episodes,
                seed,
            )?))
        } else {
            None
        };
        let mut tuning = Vec::new();
        if let Some(t) = &self.tuning {
            let tseed = t.seed.unwrap_or(seed);
            let set = TuningSet::new(&self.scenes.generate, &settings, t.episodes, tseed)?;
            for s in strategies.iter_mut() {
                if ParamSpace::for_strategy(s).params.is_empty() {
                    continue;
                }
                let (tuned, result) = tune_strategy(s, &set, &settings, classifier.clone(), t.budget, tseed)?;
                tuning.push((s.label(), result));
                *s = tuned;
            }
        }
        let out = Matrix {
            scenes: &scenes,
            specs: &specs,
            strategies: &strategies,
            policies: &self.policies,
            settings: &settings,
            classifier: classifier.clone(),
        }
        .run()?;
        if out.results.is_empty() {
            return Err(Error::InvalidInput("every episode is invalid".into()));
        }
        let rows = aggregate_all(&out.results)?;
        Ok(RunOutput {
            scenes,
            specs,
            settings,
            strategies,
            classifier,
            tuning,
            results: out.results,
            invalid: out.invalid,
            rows,
        })
    }
}

pub const MANIFEST_FILE: &str = "run.json";
pub const RESULTS_FILE: &str = "results.jsonl";
pub const CLASSIFIER_FILE: &str = "stubborn.nb";

impl RunOutput {
    pub fn manifest(&self, seed: u64, policies: &[PolicyKind]) -> RunManifest {
        RunManifest {
            seed,
            settings: self.settings.clone(),
            strategies: self.strategies.clone(),
            policies: policies.to_vec(),
            specs: self.specs.clone(),
            invalid: self.invalid.clone(),
        }
    }

    /// Writes scenes, classifier, results, metrics tables, tuning logs and
    /// the manifest under `dir`.
    pub fn write(&self, dir: &Path, manifest: &RunManifest) -> Result<()> {
        let scene_dir = dir.join("scenes");
        std::fs::create_dir_all(&scene_dir).map_err(|e| Error::io(&scene_dir, e))?;
        for (i, s) in self.scenes.iter().enumerate() {
            s.save(&scene_dir.join(scene_file_name(i)))?;
        }
        if let Some(c) = &self.classifier {
            c.save(&dir.join(CLASSIFIER_FILE))?;
        }
        write_results_jsonl(&dir.join(RESULTS_FILE), &self.results)?;
        write_text(&dir.join("metrics.csv"), &metrics_csv(&self.rows))?;
        write_text(&dir.join("metrics.txt"), &metrics_text(&self.rows))?;
        if !self.tuning.is_empty() {
            let tdir = dir.join("tuning");
            std::fs::create_dir_all(&tdir).map_err(|e| Error::io(&tdir, e))?;
            for (label, r) in &self.tuning {
                write_text(&tdir.join(format!("{label}.txt")), &trial_table(r))?;
            }
        }
        let json = serde_json::to_string_pretty(manifest).map_err(|e| Error::format(dir.join(MANIFEST_FILE), e.to_string()))?;
        write_text(&dir.join(MANIFEST_FILE), &json)
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<RunManifest> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))
    }
}

/// A re-run of one episode from a finished run's output directory.
pub struct Replay {
    pub scene: Scene,
    pub spec: EpisodeSpec,
    pub strategy: StrategyConfig,
    pub result: EpisodeResult,
    pub trace: EpisodeTrace,
}

/// Re-runs episode `episode_id` of the run stored in `dir`. The strategy is
/// matched by label; the policy defaults to the run's first one.
pub fn replay_episode(dir: &Path, episode_id: u64, strategy: &str, policy: Option<PolicyKind>) -> Result<Replay> {
    let manifest = RunManifest::load(dir)?;
    let spec = *manifest
        .specs
        .iter()
        .find(|s| s.episode_id == episode_id)
        .ok_or_else(|| Error::InvalidInput(format!("run has no episode {episode_id}")))?;
    if manifest.invalid.contains(&episode_id) {
        return Err(Error::InvalidInput(format!("episode {episode_id} is invalid (target unreachable)")));
    }
    let cfg = manifest
        .strategies
        .iter()
        .find(|s| s.label() == strategy)
        .cloned()
        .ok_or_else(|| {
            let labels: Vec<String> = manifest.strategies.iter().map(|s| s.label()).collect();
            Error::InvalidInput(format!("run has no strategy {strategy:?}; available: {}", labels.join(", ")))
        })?;
    let policy = match policy {
        Some(p) => p,
        None => *manifest
            .policies
            .first()
            .ok_or_else(|| Error::InvalidInput("run has no policies".into()))?,
    };
    let scene = Scene::load(&dir.join("scenes").join(scene_file_name(spec.scene_id)))?;
    let classifier = if cfg.kind == StrategyKind::Stubborn {
        Some(Arc::new(NBClassifier::load(&dir.join(CLASSIFIER_FILE))?))
    } else {
        None
    };
    let ecfg = EpisodeConfig {
        scene: &scene,
        spec,
        strategy: &cfg,
        policy,
        settings: &manifest.settings,
        classifier,
    };
    let camera = default_camera(&cfg, &manifest.settings);
    let (result, trace) = run_episode_with(&ecfg, camera.as_ref())?;
    Ok(Replay {
        scene,
        spec,
        strategy: cfg,
        result,
        trace,
    })
}
