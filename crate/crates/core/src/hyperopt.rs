//! Seeded random search over strategy parameters.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregation::{NBClassifier, StrategyConfig, StrategyKind, StrategyParams};
use crate::bench::{derive_seed, episode_specs, generate_scenes, Matrix, TRAINING_SEED_OFFSET};
use crate::episode::EpisodeSettings;
use crate::error::{Error, Result};
use crate::policy::PolicyKind;
use crate::scene::SceneSpec;

/// Default number of trials.
pub const DEFAULT_BUDGET: usize = 20;
/// Training episodes evaluated per trial.
pub const DEFAULT_TRAINING_EPISODES: usize = 30;

const STREAM_SEARCH: u64 = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Real,
    Int,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub name: String,
    pub kind: ParamKind,
    pub low: f64,
    pub high: f64,
    pub scale: Scale,
}

impl ParamRange {
    pub fn real(name: &str, low: f64, high: f64, scale: Scale) -> Self {
        ParamRange {
            name: name.into(),
            kind: ParamKind::Real,
            low,
            high,
            scale,
        }
    }

    pub fn int(name: &str, low: i64, high: i64) -> Self {
        ParamRange {
            name: name.into(),
            kind: ParamKind::Int,
            low: low as f64,
            high: high as f64,
            scale: Scale::Linear,
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match (self.kind, self.scale) {
            (ParamKind::Int, _) => rng.random_range(self.low as i64..=self.high as i64) as f64,
            (ParamKind::Real, Scale::Linear) => self.low + rng.random::<f64>() * (self.high - self.low),
            (ParamKind::Real, Scale::Log) => {
                let (a, b) = (self.low.ln(), self.high.ln());
                (a + rng.random::<f64>() * (b - a)).exp()
            }
        }
    }
}

/// Ranges of the parameters being searched.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    pub params: Vec<ParamRange>,
}

/// Parameters that must lie strictly inside (0, 1).
const UNIT_PARAMS: [&str; 4] = ["xi", "rho", "theta", "alpha"];

impl ParamSpace {
    pub fn validate(&self) -> Result<()> {
        if self.params.is_empty() {
            return Err(Error::InvalidParameter("empty parameter space".into()));
        }
        for p in &self.params {
            if StrategyParams::default().get(&p.name).is_none() {
                return Err(Error::InvalidParameter(format!("unknown parameter {:?}", p.name)));
            }
            if !(p.low < p.high) || !p.low.is_finite() || !p.high.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{}: bounds [{}, {}] are not well ordered",
                    p.name, p.low, p.high
                )));
            }
            if p.scale == Scale::Log && p.low <= 0.0 {
                return Err(Error::InvalidParameter(format!("{}: log scale needs positive bounds", p.name)));
            }
            if p.kind == ParamKind::Int && (p.low.fract() != 0.0 || p.high.fract() != 0.0) {
                return Err(Error::InvalidParameter(format!("{}: integer bounds expected", p.name)));
            }
            if UNIT_PARAMS.contains(&p.name.as_str()) && !(p.low > 0.0 && p.high < 1.0) {
                return Err(Error::InvalidParameter(format!("{}: range must lie inside (0, 1)", p.name)));
            }
        }
        Ok(())
    }

    /// Parameters that affect a strategy configuration. Empty when nothing is
    /// tunable, e.g. for the latest strategy.
    pub fn for_strategy(cfg: &StrategyConfig) -> ParamSpace {
        let mut params = match cfg.kind {
            StrategyKind::HitsViews => vec![
                ParamRange::real("theta", 0.3, 0.95, Scale::Linear),
                ParamRange::int("views", 1, 8),
                ParamRange::real("d_view", 0.5, 5.0, Scale::Linear),
            ],
            StrategyKind::SkillFusion => vec![
                ParamRange::real("alpha", 0.5, 0.99, Scale::Linear),
                ParamRange::real("threshold", 0.5, 10.0, Scale::Log),
                ParamRange::real("erosion_m", 0.0, 0.6, Scale::Linear),
            ],
            StrategyKind::LatestFiltered => vec![ParamRange::real("rho", 0.05, 0.95, Scale::Linear)],
            _ => Vec::new(),
        };
        if cfg.use_uncertainty_found {
            params.push(ParamRange::real("xi", 0.05, 0.95, Scale::Linear));
        }
        ParamSpace { params }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub params: BTreeMap<String, f64>,
    /// Mean success over the training episodes, in [0, 1].
    pub objective: f64,
    pub episode_seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best_trial: usize,
    pub best_params: BTreeMap<String, f64>,
    pub best_objective: f64,
    pub trials: Vec<TrialRecord>,
}

/// Samples `budget` points of `space`, evaluates them (in parallel) and
/// returns the best, ties going to the earlier trial.
pub fn random_search<F>(space: &ParamSpace, budget: usize, seed: u64, episode_seeds: &[u64], objective: F) -> Result<SearchResult>
where
    F: Fn(&BTreeMap<String, f64>) -> Result<f64> + Sync,
{
    space.validate()?;
    if budget == 0 {
        return Err(Error::InvalidParameter("budget must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_SEARCH, 0));
    let samples: Vec<BTreeMap<String, f64>> = (0..budget)
        .map(|_| space.params.iter().map(|p| (p.name.clone(), p.sample(&mut rng))).collect())
        .collect();
    let trials: Vec<TrialRecord> = samples
        .into_par_iter()
        .enumerate()
        .map(|(trial, params)| {
            let value = objective(&params)?;
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::InvalidParameter(format!("objective {value} outside [0, 1]")));
            }
            Ok(TrialRecord {
                trial,
                params,
                objective: value,
                episode_seeds: episode_seeds.to_vec(),
            })
        })
        .collect::<Result<_>>()?;
    let best = trials
        .iter()
        .fold(&trials[0], |b, t| if t.objective > b.objective { t } else { b });
    Ok(SearchResult {
        best_trial: best.trial,
        best_params: best.params.clone(),
        best_objective: best.objective,
        trials,
    })
}

/// Applies sampled values to a strategy configuration.
pub fn apply_params(cfg: &StrategyConfig, params: &BTreeMap<String, f64>) -> Result<StrategyConfig> {
    let mut out = cfg.clone();
    for (k, v) in params {
        out.params.set(k, *v)?;
    }
    Ok(out)
}

/// Training setup shared by all trials of a search.
pub struct TuningSet {
    pub scenes: Vec<crate::scene::Scene>,
    pub specs: Vec<crate::episode::EpisodeSpec>,
}

impl TuningSet {
    /// `episodes` shortest-path episodes on scenes drawn from the training
    /// seed range.
    pub fn new(scene_spec: &SceneSpec, settings: &EpisodeSettings, episodes: usize, seed: u64) -> Result<Self> {
        let train_seed = seed.wrapping_add(TRAINING_SEED_OFFSET).wrapping_add(1);
        let n_scenes = episodes.div_ceil(scene_spec.num_start_poses.max(1)).max(1);
        let scenes = generate_scenes(scene_spec, n_scenes, train_seed)?;
        let specs = episode_specs(&scenes, episodes, &[], settings, train_seed)?;
        Ok(TuningSet { scenes, specs })
    }

    pub fn episode_seeds(&self) -> Vec<u64> {
        self.specs.iter().map(|s| s.seed).collect()
    }

    /// Mean success of `cfg` over the set under the shortest-path policy.
    pub fn success_rate(&self, cfg: &StrategyConfig, settings: &EpisodeSettings, classifier: Option<Arc<NBClassifier>>) -> Result<f64> {
        let strategies = [cfg.clone()];
        let out = Matrix {
            scenes: &self.scenes,
            specs: &self.specs,
            strategies: &strategies,
            policies: &[PolicyKind::ShortestPath],
            settings,
            classifier,
        }
        .run()?;
        if out.results.is_empty() {
            return Err(Error::InvalidInput("no valid training episodes".into()));
        }
        Ok(out.results.iter().filter(|r| r.success).count() as f64 / out.results.len() as f64)
    }
}

/// Tunes `cfg` with the default space for its kind.
pub fn tune_strategy(
    cfg: &StrategyConfig,
    set: &TuningSet,
    settings: &EpisodeSettings,
    classifier: Option<Arc<NBClassifier>>,
    budget: usize,
    seed: u64,
) -> Result<(StrategyConfig, SearchResult)> {
    let space = ParamSpace::for_strategy(cfg);
    let result = random_search(&space, budget, seed, &set.episode_seeds(), |params| {
        set.success_rate(&apply_params(cfg, params)?, settings, classifier.clone())
    })?;
    Ok((apply_params(cfg, &result.best_params)?, result))
}

/// Plain-text trial log, one row per trial.
pub fn trial_table(result: &SearchResult) -> String {
    let names: Vec<&String> = result.trials.first().map(|t| t.params.keys().collect()).unwrap_or_default();
    let mut out = String::from("trial");
    for n in &names {
        out.push_str(&format!("  {n:>10}"));
    }
    out.push_str("  objective\n");
    for t in &result.trials {
        let mark = if t.trial == result.best_trial { "*" } else { " " };
        out.push_str(&format!("{:>4}{mark}", t.trial));
        for n in &names {
            out.push_str(&format!("  {:>10.4}", t.params[*n]));
        }
        out.push_str(&format!("  {:>9.3}\n", t.objective));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xi_space() -> ParamSpace {
        ParamSpace {
            params: vec![ParamRange::real("xi", 0.05, 0.95, Scale::Linear)],
        }
    }

    #[test]
    fn budget_one_returns_the_sample() {
        let r = random_search(&xi_space(), 1, 3, &[], |p| Ok(p["xi"])).unwrap();
        assert_eq!(r.trials.len(), 1);
        assert_eq!(r.best_params, r.trials[0].params);
    }

    #[test]
    fn synthetic_objective_peaks_near_target() {
        let r = random_search(&xi_space(), 400, 7, &[], |p| Ok(1.0 - (p["xi"] - 0.4).abs())).unwrap();
        assert!((r.best_params["xi"] - 0.4).abs() < 0.01);
        // The winner is one of the trials.
        assert!(r.trials.iter().any(|t| t.params == r.best_params));
    }

    #[test]
    fn same_seed_same_log() {
        let f = |p: &BTreeMap<String, f64>| Ok(p["xi"] * 0.5);
        assert_eq!(
            random_search(&xi_space(), 10, 9, &[1, 2], f).unwrap(),
            random_search(&xi_space(), 10, 9, &[1, 2], f).unwrap()
        );
    }

    #[test]
    fn ties_go_to_the_first_trial() {
        let r = random_search(&xi_space(), 5, 1, &[], |_| Ok(0.5)).unwrap();
        assert_eq!(r.best_trial, 0);
    }

    #[test]
    fn rejects_bad_spaces() {
        assert!(random_search(&ParamSpace::default(), 5, 1, &[], |_| Ok(0.0)).is_err());
        let bad = ParamSpace {
            params: vec![ParamRange::real("xi", 0.0, 1.0, Scale::Linear)],
        };
        assert!(bad.validate().is_err());
        let unordered = ParamSpace {
            params: vec![ParamRange::real("d_view", 3.0, 1.0, Scale::Linear)],
        };
        assert!(unordered.validate().is_err());
        let log0 = ParamSpace {
            params: vec![ParamRange::real("threshold", 0.0, 1.0, Scale::Log)],
        };
        assert!(log0.validate().is_err());
    }

    #[test]
    fn samples_respect_kind_and_scale() {
        let space = ParamSpace {
            params: vec![
                ParamRange::int("views", 1, 8),
                ParamRange::real("threshold", 0.5, 10.0, Scale::Log),
            ],
        };
        let r = random_search(&space, 50, 2, &[], |_| Ok(0.0)).unwrap();
        for t in &r.trials {
            let v = t.params["views"];
            assert_eq!(v.fract(), 0.0);
            assert!((1.0..=8.0).contains(&v));
            assert!((0.5..=10.0).contains(&t.params["threshold"]));
        }
    }

    #[test]
    fn spaces_per_strategy() {
        use StrategyKind::*;
        assert!(ParamSpace::for_strategy(&StrategyConfig::new(Latest, false, false)).params.is_empty());
        let wa = ParamSpace::for_strategy(&StrategyConfig::new(WeightedAveraging, true, true));
        assert_eq!(wa.params.len(), 1);
        assert_eq!(ParamSpace::for_strategy(&StrategyConfig::new(HitsViews, false, false)).params.len(), 3);
        for kind in StrategyKind::ALL {
            let s = ParamSpace::for_strategy(&StrategyConfig::new(kind, true, true));
            s.validate().unwrap();
        }
    }
}
