//! Oracles and property checks shared by the property suite and the
//! acceptance target.
#![allow(dead_code)]

use std::collections::BinaryHeap;
use std::cmp::Reverse;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use semfuse::aggregation::{build_strategy, StrategyConfig, StrategyKind};
use semfuse::calibration::{normalized_entropy, scale_logits_raw, softmax, Logits, ProbVector};
use semfuse::episode::{run_episode, EpisodeConfig, EpisodeSettings, EpisodeSpec};
use semfuse::map::{GridMap, ProjectedHit};
use semfuse::metrics::{aggregate_metrics, EpisodeResult};
use semfuse::policy::{shortest_path, NavGrid, PolicyKind};
use semfuse::scene::{generate_scene, AgentPose, SceneSpec};

pub type Check = Result<(), String>;

pub fn hit(cell: usize, p: &[f64]) -> ProjectedHit {
    let p_pred = ProbVector::new(p.to_vec()).unwrap();
    ProjectedHit {
        cell,
        u: normalized_entropy(&p_pred),
        p_pred,
        height: 0.0,
        distance_m: 1.0,
        true_class: 0,
    }
}

/// Feeds `seq` into cell 0 of a fresh map, one hit per frame, and returns
/// the cell's distribution.
pub fn fuse(kind: StrategyKind, seq: &[Vec<f64>]) -> Vec<f64> {
    let c = seq[0].len();
    let mut map = GridMap::new(3, 3, 0.25, (0.0, 0.0), c).unwrap();
    let cfg = StrategyConfig::new(kind, true, false);
    let mut s = build_strategy(&cfg, &map, 1, 1.0, None).unwrap();
    let pose = AgentPose::new(0.6, 0.6, 0.0);
    for p in seq {
        s.integrate(&mut map, &[hit(0, p)], &pose);
    }
    map.cell(0).p.as_ref().unwrap().values().to_vec()
}

fn pool(c: usize) -> Vec<Vec<f64>> {
    match c {
        2 => vec![vec![0.7, 0.3], vec![0.15, 0.85], vec![0.5, 0.5]],
        3 => vec![vec![0.6, 0.3, 0.1], vec![0.2, 0.3, 0.5], vec![0.05, 0.9, 0.05]],
        _ => vec![vec![0.4, 0.3, 0.2, 0.1], vec![0.1, 0.1, 0.1, 0.7], vec![0.25; 4]],
    }
}

/// Direct Bayes posterior under a uniform prior, in linear space.
pub fn bayes_posterior(seq: &[Vec<f64>]) -> Vec<f64> {
    let c = seq[0].len();
    let prior = 1.0 / c as f64;
    let joint: Vec<f64> = (0..c).map(|k| prior * seq.iter().map(|p| p[k]).product::<f64>()).collect();
    let z: f64 = joint.iter().sum();
    joint.iter().map(|j| j / z).collect()
}

/// Every sequence of length 1..=5 over a pool of distributions, for
/// C = 2, 3, 4. Returns the number of sequences checked.
pub fn check_log_odds_exhaustive() -> Result<usize, String> {
    let mut checked = 0;
    for c in 2..=4 {
        let pool = pool(c);
        for len in 1..=5u32 {
            let total = pool.len().pow(len);
            for code in 0..total {
                let mut rest = code;
                let seq: Vec<Vec<f64>> = (0..len)
                    .map(|_| {
                        let p = pool[rest % pool.len()].clone();
                        rest /= pool.len();
                        p
                    })
                    .collect();
                let got = fuse(StrategyKind::LogOdds, &seq);
                let want = bayes_posterior(&seq);
                for (g, w) in got.iter().zip(&want) {
                    if (g - w).abs() > 1e-9 {
                        return Err(format!("C={c} seq {seq:?}: {got:?} vs {want:?}"));
                    }
                }
                checked += 1;
            }
        }
    }
    Ok(checked)
}

/// Uniform-cost search with its own neighbor rule: 8-connected, √2
/// diagonals, diagonals only when both side cells are free.
pub fn uniform_cost(w: usize, h: usize, free: &[bool], start: usize, goal: usize) -> Option<f64> {
    if !free[start] || !free[goal] {
        return None;
    }
    // Costs as integer pairs a + b·√2 keep the frontier order exact.
    let mut best = vec![None::<(u64, u64)>; w * h];
    let key = |c: (u64, u64)| c.0 as f64 + c.1 as f64 * std::f64::consts::SQRT_2;
    let mut heap = BinaryHeap::new();
    best[start] = Some((0, 0));
    heap.push(Reverse((ordered(key((0, 0))), start, 0u64, 0u64)));
    while let Some(Reverse((_, cell, a, b))) = heap.pop() {
        if best[cell] != Some((a, b)) {
            continue;
        }
        if cell == goal {
            return Some(key((a, b)));
        }
        let (x, y) = ((cell % w) as i64, (cell / w) as i64);
        let ok = |x: i64, y: i64| x >= 0 && y >= 0 && x < w as i64 && y < h as i64 && free[(y as usize) * w + x as usize];
        for dy in -1..=1i64 {
            for dx in -1..=1i64 {
                if (dx, dy) == (0, 0) || !ok(x + dx, y + dy) {
                    continue;
                }
                let diag = dx != 0 && dy != 0;
                if diag && !(ok(x + dx, y) && ok(x, y + dy)) {
                    continue;
                }
                let nc = if diag { (a, b + 1) } else { (a + 1, b) };
                let n = ((y + dy) as usize) * w + (x + dx) as usize;
                if best[n].is_none_or(|o| key(nc) < key(o)) {
                    best[n] = Some(nc);
                    heap.push(Reverse((ordered(key(nc)), n, nc.0, nc.1)));
                }
            }
        }
    }
    None
}

fn ordered(v: f64) -> u64 {
    v.to_bits()
}

/// A* against uniform-cost search on `n` random grids up to 16×16.
pub fn check_astar_vs_ucs(n: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..n {
        let w = rng.random_range(2..=16);
        let h = rng.random_range(2..=16);
        let density = rng.random_range(0.0..0.45);
        let free: Vec<bool> = (0..w * h).map(|_| rng.random::<f64>() >= density).collect();
        let start = rng.random_range(0..w * h);
        let goal = rng.random_range(0..w * h);
        let grid = NavGrid::new(w, h, &free);
        let got = shortest_path(&grid, start, goal);
        let want = uniform_cost(w, h, &free, start, goal);
        match (got, want) {
            (Ok(p), Some(c)) => {
                if (p.cost - c).abs() > 1e-9 {
                    return Err(format!("grid {i}: A* cost {} vs uniform-cost {c}", p.cost));
                }
                let steps: f64 = p
                    .cells
                    .windows(2)
                    .map(|s| {
                        let (ax, ay) = (s[0] % w, s[0] / w);
                        let (bx, by) = (s[1] % w, s[1] / w);
                        if ax != bx && ay != by {
                            std::f64::consts::SQRT_2
                        } else {
                            1.0
                        }
                    })
                    .sum();
                if (steps - p.cost).abs() > 1e-9 || p.cells.iter().any(|&c| !free[c]) {
                    return Err(format!("grid {i}: path does not realize its cost"));
                }
            }
            (Err(_), None) => {}
            (got, want) => return Err(format!("grid {i}: A* {got:?} vs uniform-cost {want:?}")),
        }
    }
    Ok(())
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    })
}

fn run_prop<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Check
where
    S::Value: std::fmt::Debug,
{
    runner(cases).run(&strategy, test).map_err(|e| e.to_string())
}

fn prob_vec(c: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, c).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

fn sequence(max_c: usize, max_len: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2..=max_c).prop_flat_map(move |c| prop::collection::vec(prob_vec(c), 1..=max_len))
}

/// Weighted averaging fed predictions of equal uncertainty (permutations of
/// one vector) matches plain averaging.
pub fn check_weighted_equals_plain(cases: u32) -> Check {
    let s = (prob_vec(5), prop::collection::vec(any::<prop::sample::Index>(), 1..12));
    run_prop(cases, s, |(base, rots)| {
        let seq: Vec<Vec<f64>> = rots
            .iter()
            .map(|r| {
                let mut v = base.clone();
                v.rotate_left(r.index(base.len()));
                v
            })
            .collect();
        let a = fuse(StrategyKind::Averaging, &seq);
        let w = fuse(StrategyKind::WeightedAveraging, &seq);
        for (x, y) in a.iter().zip(&w) {
            prop_assert!((x - y).abs() <= 1e-12, "{a:?} vs {w:?}");
        }
        Ok(())
    })
}

pub fn check_simplex(cases: u32) -> Check {
    run_prop(cases, (prop::collection::vec(-30.0f64..30.0, 2..12), sequence(6, 8)), |(l, seq)| {
        let p = softmax(&Logits::new(l).unwrap());
        let s: f64 = p.values().iter().sum();
        prop_assert!((s - 1.0).abs() < 1e-9);
        prop_assert!(p.values().iter().all(|v| (0.0..=1.0).contains(v)));
        for kind in [StrategyKind::LogOdds, StrategyKind::Averaging, StrategyKind::WeightedAveraging] {
            let q = fuse(kind, &seq);
            let s: f64 = q.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-9, "{kind}: sum {s}");
            prop_assert!(q.iter().all(|v| (0.0..=1.0).contains(v)));
        }
        Ok(())
    })
}

pub fn check_entropy_range(cases: u32) -> Check {
    run_prop(cases, prop::collection::vec(-50.0f64..50.0, 2..25), |l| {
        let u = normalized_entropy(&softmax(&Logits::new(l).unwrap()));
        prop_assert!((0.0..=1.0 + 1e-12).contains(&u), "{u}");
        Ok(())
    })
}

pub fn check_argmax_temperature(cases: u32) -> Check {
    run_prop(cases, (prop::collection::vec(-20.0f64..20.0, 2..20), 0.05f64..20.0), |(l, t)| {
        let logits = Logits::new(l).unwrap();
        let scaled = scale_logits_raw(&logits, t).unwrap();
        prop_assert_eq!(softmax(&scaled).argmax(), softmax(&logits).argmax());
        Ok(())
    })
}

pub fn check_permutation_invariance(cases: u32) -> Check {
    run_prop(cases, sequence(5, 7).prop_flat_map(|s| (Just(s.clone()), Just(s).prop_shuffle())), |(a, b)| {
        for kind in [StrategyKind::LogOdds, StrategyKind::Averaging, StrategyKind::WeightedAveraging] {
            let x = fuse(kind, &a);
            let y = fuse(kind, &b);
            for (p, q) in x.iter().zip(&y) {
                prop_assert!((p - q).abs() < 1e-9, "{kind}: {x:?} vs {y:?}");
            }
        }
        Ok(())
    })
}

fn outcome_result(i: usize, kind: u8, p: f64, l: f64) -> EpisodeResult {
    EpisodeResult {
        episode_id: i as u64,
        scene_id: 0,
        start_index: 0,
        target_class: 2,
        seed: i as u64,
        strategy: "s".into(),
        policy: PolicyKind::ShortestPath,
        success: kind == 0,
        found_fp: kind == 1,
        found_fn: kind == 2,
        found_step: None,
        found_cell: None,
        det_fp_count: 0,
        det_fn_count: 0,
        steps_used: 1,
        path_length_m: p,
        shortest_length_m: l,
        stream_digest: 0,
    }
}

/// SR + FPR + FNR = 100 and SPL ≤ SR on arbitrary outcome mixes.
pub fn check_metric_totals(cases: u32) -> Check {
    let s = prop::collection::vec((0u8..3, 0.0f64..30.0, 0.0f64..30.0), 1..60);
    run_prop(cases, s, |eps| {
        let results: Vec<_> = eps.iter().enumerate().map(|(i, &(k, p, l))| outcome_result(i, k, p, l)).collect();
        let row = aggregate_metrics("s", PolicyKind::ShortestPath, &results).unwrap();
        prop_assert!((row.sr + row.fpr + row.fnr - 100.0).abs() < 1e-9);
        prop_assert!(row.spl * 100.0 <= row.sr + 1e-9, "spl {} sr {}", row.spl, row.sr);
        Ok(())
    })
}

/// Same scene seed and episode seed give identical scenes and results.
pub fn check_determinism(cases: u32) -> Check {
    let spec = SceneSpec {
        width: 24,
        height: 24,
        ..SceneSpec::default()
    };
    let settings = EpisodeSettings {
        temperature: 3.0,
        max_steps: 150,
        ..EpisodeSettings::default()
    };
    let strategies = [
        StrategyConfig::new(StrategyKind::Latest, false, false),
        StrategyConfig::new(StrategyKind::WeightedAveraging, true, true),
    ];
    run_prop(cases, (any::<u64>(), any::<u64>()), |(scene_seed, ep_seed)| {
        let a = generate_scene(&spec, scene_seed).unwrap();
        let b = generate_scene(&spec, scene_seed).unwrap();
        prop_assert_eq!(&a, &b);
        let Some(target) = a.object_classes().find(|&k| a.targets_of(k).next().is_some()) else {
            return Ok(());
        };
        let ep = EpisodeSpec {
            episode_id: 0,
            scene_id: 0,
            start_index: 0,
            target_class: target,
            seed: ep_seed,
        };
        for strategy in &strategies {
            for policy in [PolicyKind::ShortestPath, PolicyKind::Frontier] {
                let cfg = EpisodeConfig {
                    scene: &a,
                    spec: ep,
                    strategy,
                    policy,
                    settings: &settings,
                    classifier: None,
                };
                match (run_episode(&cfg), run_episode(&cfg)) {
                    (Ok(x), Ok(y)) => prop_assert_eq!(x, y),
                    (Err(_), Err(_)) => {}
                    (x, y) => prop_assert!(false, "{x:?} vs {y:?}"),
                }
            }
        }
        Ok(())
    })
}
