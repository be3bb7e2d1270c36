//! Frontier exploration with goto-target, driven only by the agent's own map.

use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::map::GridMap;
use crate::scene::{AgentPose, Scene};

use super::astar::{distance_field, nearest_goal, shortest_path, NavGrid};
use super::shortest::{polyline_length, MotionConfig};
use super::{heading_to, wrap_angle};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrontierConfig {
    /// Replan at least this often, in steps.
    pub replan_every: usize,
    /// Steps spent waiting next to a shown target before giving up on it.
    pub target_patience: usize,
}

impl Default for FrontierConfig {
    fn default() -> Self {
        FrontierConfig {
            replan_every: 10,
            target_patience: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalKind {
    Target,
    Frontier,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub kind: GoalKind,
    pub goal: usize,
    pub cells: Vec<usize>,
    polyline: Vec<(f64, f64)>,
    progress_m: f64,
    planned_at: usize,
    mask_digest: u64,
}

impl Plan {
    fn remaining_m(&self) -> f64 {
        polyline_length(&self.polyline) - self.progress_m
    }
}

/// Result of one policy step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Move {
    pub pose: AgentPose,
    pub distance_m: f64,
}

#[derive(Debug, Clone)]
pub struct FrontierPolicy {
    cfg: FrontierConfig,
    motion: MotionConfig,
    plan: Option<Plan>,
    blacklist: Vec<bool>,
    ignored: Vec<bool>,
    hold_steps: usize,
}

fn digest(mask: &[bool]) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    for (i, m) in mask.iter().enumerate() {
        if *m {
            i.hash(&mut h);
        }
    }
    h.finish()
}

/// Belief traversability: everything not believed occupied, unknown included.
pub fn belief_free(map: &GridMap) -> Vec<bool> {
    map.cells().iter().map(|c| !c.occupied).collect()
}

/// Observed free cells 4-adjacent to an unobserved cell.
pub fn frontier_cells(map: &GridMap) -> Vec<usize> {
    let (w, h) = (map.width, map.height);
    (0..map.num_cells())
        .filter(|&i| {
            let c = map.cell(i);
            if !c.is_observed() || c.occupied {
                return false;
            }
            let (x, y) = (i % w, i / w);
            (x > 0 && !map.is_observed(i - 1))
                || (x + 1 < w && !map.is_observed(i + 1))
                || (y > 0 && !map.is_observed(i - w))
                || (y + 1 < h && !map.is_observed(i + w))
        })
        .collect()
}

impl FrontierPolicy {
    pub fn new(map: &GridMap, cfg: FrontierConfig, motion: MotionConfig) -> Self {
        FrontierPolicy {
            cfg,
            motion,
            plan: None,
            blacklist: vec![false; map.num_cells()],
            ignored: vec![false; map.num_cells()],
            hold_steps: 0,
        }
    }

    pub fn plan(&self) -> Option<&Plan> {
        self.plan.as_ref()
    }

    fn effective_mask(&self, mask: &[bool]) -> Vec<bool> {
        mask.iter().zip(&self.ignored).map(|(m, i)| *m && !i).collect()
    }

    fn needs_replan(&self, map: &GridMap, mask_digest: u64, step: usize) -> bool {
        let Some(p) = &self.plan else {
            return true;
        };
        step >= p.planned_at + self.cfg.replan_every
            || p.mask_digest != mask_digest
            || p.cells.iter().any(|&c| map.cell(c).occupied)
    }

    fn replan(&mut self, map: &GridMap, mask: &[bool], mask_digest: u64, pose: &AgentPose, step: usize) {
        self.plan = None;
        let Ok(here) = map.world_to_cell(pose.x, pose.y) else {
            return;
        };
        let free = belief_free(map);
        let grid = NavGrid::new(map.width, map.height, &free);
        let dist = distance_field(&grid, here);

        let mut goal = None;
        if mask.iter().any(|m| *m) {
            let (w, h) = (map.width as isize, map.height as isize);
            let goals = (0..mask.len()).filter(|&i| {
                if !free[i] {
                    return false;
                }
                let (x, y) = ((i % map.width) as isize, (i / map.width) as isize);
                (-1..=1).any(|dy| {
                    (-1..=1).any(|dx| {
                        let (nx, ny) = (x + dx, y + dy);
                        nx >= 0 && ny >= 0 && nx < w && ny < h && mask[(ny * w + nx) as usize]
                    })
                })
            });
            goal = nearest_goal(&dist, goals).map(|g| (GoalKind::Target, g));
        }
        if goal.is_none() {
            let mut frontiers: Vec<usize> = frontier_cells(map)
                .into_iter()
                .filter(|&c| !self.blacklist[c])
                .collect();
            while let Some(g) = nearest_goal(&dist, frontiers.iter().copied()) {
                if g != here {
                    goal = Some((GoalKind::Frontier, g));
                    break;
                }
                self.blacklist[g] = true;
                frontiers.retain(|&c| c != g);
            }
        }
        let Some((kind, goal)) = goal else {
            return;
        };
        let Ok(path) = shortest_path(&grid, here, goal) else {
            return;
        };
        if kind == GoalKind::Frontier {
            self.hold_steps = 0;
        }
        let mut polyline = vec![(pose.x, pose.y)];
        polyline.extend(path.cells.iter().skip(1).map(|&c| map.cell_center(c)));
        self.plan = Some(Plan {
            kind,
            goal,
            cells: path.cells,
            polyline,
            progress_m: 0.0,
            planned_at: step,
            mask_digest,
        });
    }

    fn turn_towards(&self, pose: &AgentPose, want: f64) -> AgentPose {
        let max_turn = self.motion.turn_deg.to_radians();
        let diff = wrap_angle(want - pose.theta);
        AgentPose::new(pose.x, pose.y, wrap_angle(pose.theta + diff.clamp(-max_turn, max_turn)))
    }

    /// Chooses the next pose. Movement is checked against the true scene: a
    /// step into an occupied cell is refused and that cell's height is written
    /// into the belief map.
    pub fn step(&mut self, scene: &Scene, map: &mut GridMap, mask: &[bool], pose: &AgentPose, step: usize) -> Move {
        let mask = self.effective_mask(mask);
        let mask_digest = digest(&mask);
        if self.needs_replan(map, mask_digest, step) {
            self.replan(map, &mask, mask_digest, pose, step);
        }
        let hold = Move {
            pose: self.turn_towards(pose, pose.theta + self.motion.turn_deg.to_radians()),
            distance_m: 0.0,
        };
        let Some(plan) = &mut self.plan else {
            return hold;
        };

        if plan.remaining_m() <= 1e-9 {
            match plan.kind {
                GoalKind::Frontier => {
                    self.blacklist[plan.goal] = true;
                    self.plan = None;
                    self.replan(map, &mask, mask_digest, pose, step);
                    if self.plan.as_ref().is_none_or(|p| p.remaining_m() <= 1e-9) {
                        return hold;
                    }
                }
                GoalKind::Target => {
                    self.hold_steps += 1;
                    let nearest = (0..mask.len()).filter(|&i| mask[i]).min_by(|&a, &b| {
                        let (pa, pb) = (map.cell_center(a), map.cell_center(b));
                        pose.distance_to(pa.0, pa.1)
                            .total_cmp(&pose.distance_to(pb.0, pb.1))
                            .then(a.cmp(&b))
                    });
                    if self.hold_steps > self.cfg.target_patience {
                        // Give up on the shown target near the agent.
                        for i in 0..mask.len() {
                            let (cx, cy) = map.cell_center(i);
                            if mask[i] && pose.distance_to(cx, cy) <= 1.5 {
                                self.ignored[i] = true;
                            }
                        }
                        self.hold_steps = 0;
                        self.plan = None;
                        return hold;
                    }
                    let want = nearest
                        .and_then(|c| heading_to((pose.x, pose.y), map.cell_center(c)))
                        .unwrap_or(pose.theta);
                    return Move {
                        pose: self.turn_towards(pose, want),
                        distance_m: 0.0,
                    };
                }
            }
        }

        let plan = self.plan.as_mut().expect("plan present");
        let advance = self.motion.step_m.min(plan.remaining_m());
        let s = plan.progress_m + advance;
        let ((x, y), heading) = super::shortest::point_at(&plan.polyline, s);
        let probe = [(x, y), ((x + pose.x) / 2.0, (y + pose.y) / 2.0)];
        for (px, py) in probe {
            if let Some(c) = scene.cell_at(px, py) {
                if scene.is_occupied(c) {
                    map.update_height_occupancy(c, scene.heights[c]);
                    self.plan = None;
                    return hold;
                }
            }
        }
        plan.progress_m = s;
        Move {
            pose: AgentPose::new(x, y, heading.unwrap_or(pose.theta)),
            distance_m: advance,
        }
    }
}
