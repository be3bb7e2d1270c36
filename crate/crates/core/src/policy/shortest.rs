//! The perception-independent shortest-path policy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{raycast_fov, AgentPose, Scene};
use crate::sensor::SensorConfig;

use super::astar::{distance_field, nearest_goal, shortest_path, NavGrid, Path};
use super::{heading_to, wrap_angle};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionConfig {
    /// Maximum linear advance per step.
    pub step_m: f64,
    /// Maximum in-place rotation per step.
    pub turn_deg: f64,
    /// Extra steps spent at the goal facing the target.
    pub goal_dwell_steps: usize,
    /// Farthest a goal view point may be from the target cell it sees.
    pub goal_view_radius_m: f64,
}

impl Default for MotionConfig {
    fn default() -> Self {
        MotionConfig {
            step_m: 0.25,
            turn_deg: 30.0,
            goal_dwell_steps: 8,
            goal_view_radius_m: 0.5,
        }
    }
}

/// Precomputed route of the shortest-path policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub path: Path,
    /// World points: the start position then the centers of the path cells.
    pub polyline: Vec<(f64, f64)>,
    /// Arc length of `polyline` in meters.
    pub length_m: f64,
    /// One pose per step, starting with the start pose.
    pub poses: Vec<AgentPose>,
    /// Arc length traveled when each pose is reached.
    pub traveled_m: Vec<f64>,
    /// Target cell faced at the end of the route.
    pub facing_cell: usize,
}

impl Route {
    /// Pose at `step`, clamped to the final pose.
    pub fn pose(&self, step: usize) -> AgentPose {
        self.poses[step.min(self.poses.len() - 1)]
    }
}

/// Point at arc length `s` along a polyline and the heading of the segment
/// that reaches it.
pub(crate) fn point_at(polyline: &[(f64, f64)], s: f64) -> ((f64, f64), Option<f64>) {
    let mut left = s;
    let mut heading = None;
    for w in polyline.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
        if len == 0.0 {
            continue;
        }
        heading = Some((b.1 - a.1).atan2(b.0 - a.0));
        if left <= len {
            let t = left / len;
            return ((a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1)), heading);
        }
        left -= len;
    }
    (*polyline.last().expect("non-empty polyline"), heading)
}

pub fn polyline_length(polyline: &[(f64, f64)]) -> f64 {
    polyline
        .windows(2)
        .map(|w| ((w[1].0 - w[0].0).powi(2) + (w[1].1 - w[0].1).powi(2)).sqrt())
        .sum()
}

/// Arc length of the first polyline point within `radius` of any of
/// `centers`, or `None` when the polyline never gets that close.
pub fn first_within(polyline: &[(f64, f64)], centers: &[(f64, f64)], radius: f64) -> Option<f64> {
    let r2 = radius * radius;
    let near = |p: (f64, f64)| {
        centers
            .iter()
            .any(|c| (p.0 - c.0).powi(2) + (p.1 - c.1).powi(2) <= r2)
    };
    if near(polyline[0]) {
        return Some(0.0);
    }
    let mut walked = 0.0;
    for w in polyline.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let len = (dx * dx + dy * dy).sqrt();
        if len == 0.0 {
            continue;
        }
        // Smallest t in [0, 1] with |a + t (b - a) - c| = r over all centers.
        let mut best: Option<f64> = None;
        for c in centers {
            let (fx, fy) = (a.0 - c.0, a.1 - c.1);
            let qa = dx * dx + dy * dy;
            let qb = 2.0 * (fx * dx + fy * dy);
            let qc = fx * fx + fy * fy - r2;
            let disc = qb * qb - 4.0 * qa * qc;
            if disc < 0.0 {
                continue;
            }
            let t = if qc <= 0.0 {
                0.0
            } else {
                (-qb - disc.sqrt()) / (2.0 * qa)
            };
            if (0.0..=1.0).contains(&t) {
                best = Some(best.map_or(t, |b: f64| b.min(t)));
            }
        }
        if let Some(t) = best {
            return Some(walked + t * len);
        }
        walked += len;
    }
    None
}

/// View points of `target_class`: free cells within `radius_m` of a target
/// cell that the sensor would see when facing it, each paired with the
/// nearest such target cell.
pub fn view_cells(scene: &Scene, target_class: usize, sensor: &SensorConfig, radius_m: f64) -> Vec<(usize, usize)> {
    let reach = (radius_m / scene.resolution).ceil() as isize;
    let mut best: std::collections::BTreeMap<usize, (f64, usize)> = std::collections::BTreeMap::new();
    for t in scene.target_cells(target_class) {
        let (tx, ty) = scene.coords(t);
        let centre = scene.cell_center(t);
        let min_d = sensor.min_visible_distance(scene.heights[t]);
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                let (x, y) = (tx as isize + dx, ty as isize + dy);
                if x < 0 || y < 0 || x >= scene.width as isize || y >= scene.height as isize {
                    continue;
                }
                let c = scene.index(x as usize, y as usize);
                if scene.is_occupied(c) {
                    continue;
                }
                let (cx, cy) = scene.cell_center(c);
                let d = ((centre.0 - cx).powi(2) + (centre.1 - cy).powi(2)).sqrt();
                if d > radius_m || best.get(&c).is_some_and(|b| b.0 <= d) {
                    continue;
                }
                // Same test the sensor applies: the ray's entry distance into
                // the cell must clear the blind zone.
                let pose = AgentPose::new(cx, cy, (centre.1 - cy).atan2(centre.0 - cx));
                let seen = raycast_fov(scene, &pose, 0.0, 1, d + scene.resolution)
                    .iter()
                    .any(|&(hit, hd)| hit == t && hd >= min_d);
                if seen {
                    best.insert(c, (d, t));
                }
            }
        }
    }
    best.into_iter().map(|(c, (_, t))| (c, t)).collect()
}

/// Plans the route from `start` to the geodesically nearest view point of
/// `target_class` no farther than `motion.goal_view_radius_m` (capped at
/// `radius_m`) from its target, ending with the agent turned towards the
/// target cell it views.
pub fn plan_route(
    scene: &Scene,
    start: &AgentPose,
    target_class: usize,
    motion: &MotionConfig,
    sensor: &SensorConfig,
    radius_m: f64,
) -> Result<Route> {
    let free = scene.free_mask();
    let grid = NavGrid::new(scene.width, scene.height, &free);
    let start_cell = scene
        .cell_at(start.x, start.y)
        .ok_or(Error::OutOfBounds { x: start.x, y: start.y })?;
    let views = view_cells(scene, target_class, sensor, motion.goal_view_radius_m.min(radius_m));
    if views.is_empty() {
        return Err(Error::NoPath {
            start: start_cell,
            goal: start_cell,
        });
    }
    let dist = distance_field(&grid, start_cell);
    let goal = nearest_goal(&dist, views.iter().map(|v| v.0)).ok_or(Error::NoPath {
        start: start_cell,
        goal: views[0].0,
    })?;
    let facing_cell = views.iter().find(|v| v.0 == goal).expect("goal is a view point").1;
    let path = shortest_path(&grid, start_cell, goal)?;

    let mut polyline = vec![(start.x, start.y)];
    polyline.extend(path.cells.iter().skip(1).map(|&c| scene.cell_center(c)));
    let length_m = polyline_length(&polyline);
    let end = *polyline.last().unwrap();
    let mut poses = vec![*start];
    let mut traveled_m = vec![0.0];
    let n_moves = (length_m / motion.step_m - 1e-9).ceil().max(0.0) as usize;
    let mut theta = start.theta;
    for i in 1..=n_moves {
        let s = (i as f64 * motion.step_m).min(length_m);
        let ((x, y), heading) = point_at(&polyline, s);
        theta = heading.unwrap_or(theta);
        poses.push(AgentPose::new(x, y, theta));
        traveled_m.push(s);
    }
    let (fx, fy) = scene.cell_center(facing_cell);
    let want = heading_to(end, (fx, fy)).unwrap_or(theta);
    let max_turn = motion.turn_deg.to_radians();
    loop {
        let diff = wrap_angle(want - theta);
        if diff.abs() <= 1e-9 {
            break;
        }
        theta = wrap_angle(theta + diff.clamp(-max_turn, max_turn));
        poses.push(AgentPose::new(end.0, end.1, theta));
        traveled_m.push(length_m);
    }
    for _ in 0..motion.goal_dwell_steps {
        poses.push(AgentPose::new(end.0, end.1, theta));
        traveled_m.push(length_m);
    }
    Ok(Route {
        path,
        polyline,
        length_m,
        poses,
        traveled_m,
        facing_cell,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{CellBox, TargetInstance, FLOOR, OBJECT_HEIGHT, WALL, WALL_HEIGHT};

    /// A walled 12×5 room (0.25 m cells) with a 1-cell target at x = 10.
    pub(crate) fn corridor() -> Scene {
        let (w, h) = (12, 5);
        let mut classes = vec![FLOOR; w * h];
        let mut heights = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                if x == 0 || y == 0 || x == w - 1 || y == h - 1 {
                    classes[y * w + x] = WALL;
                    heights[y * w + x] = WALL_HEIGHT;
                }
            }
        }
        classes[2 * w + 10] = 2;
        heights[2 * w + 10] = OBJECT_HEIGHT;
        Scene {
            version: 1,
            width: w,
            height: h,
            resolution: 0.25,
            num_classes: 3,
            classes,
            heights,
            targets: vec![TargetInstance {
                class_id: 2,
                bbox: CellBox {
                    x0: 10,
                    y0: 2,
                    x1: 10,
                    y1: 2,
                },
            }],
            start_poses: vec![AgentPose::new(0.375, 0.625, 0.0)],
        }
    }

    #[test]
    fn route_advances_fixed_steps() {
        let scene = corridor();
        let motion = MotionConfig {
            goal_dwell_steps: 0,
            ..MotionConfig::default()
        };
        let r = plan_route(&scene, &scene.start_poses[0], 2, &motion, &SensorConfig::default(), 1.0).unwrap();
        // (9,2) is inside the blind zone of the target, so the goal is the
        // view point (8,2): 7 cells = 1.75 m = 7 moves.
        assert!((r.length_m - 1.75).abs() < 1e-12);
        assert_eq!(r.poses.len(), 8);
        for w in r.poses.windows(2) {
            let d = ((w[1].x - w[0].x).powi(2) + (w[1].y - w[0].y).powi(2)).sqrt();
            assert!(d <= 0.25 + 1e-12);
        }
        assert_eq!(r.pose(100), *r.poses.last().unwrap());
        assert_eq!(r.facing_cell, 2 * 12 + 10);
    }

    #[test]
    fn two_and_a_half_meters_is_ten_moves() {
        let mut scene = corridor();
        scene.resolution = 2.5 / 7.0;
        for p in &mut scene.start_poses {
            p.x = 1.5 * scene.resolution;
            p.y = 2.5 * scene.resolution;
        }
        let motion = MotionConfig {
            goal_dwell_steps: 0,
            goal_view_radius_m: 0.75,
            ..MotionConfig::default()
        };
        // Goal (8,2), seven cells from the start.
        let r = plan_route(&scene, &scene.start_poses[0], 2, &motion, &SensorConfig::default(), 1.0).unwrap();
        assert!((r.length_m - 2.5).abs() < 1e-12);
        assert_eq!(r.poses.len() - 1, 10);
    }

    #[test]
    fn final_pose_faces_target() {
        let scene = corridor();
        let mut start = scene.start_poses[0];
        start.theta = std::f64::consts::PI;
        let r = plan_route(&scene, &start, 2, &MotionConfig::default(), &SensorConfig::default(), 1.0).unwrap();
        let last = r.poses.last().unwrap();
        assert!(wrap_angle(last.theta).abs() < 1e-9);
        // Dwell poses repeat the final pose.
        let n = r.poses.len();
        assert_eq!(r.poses[n - 1], r.poses[n - 3]);
    }

    #[test]
    fn unreachable_target_is_an_error() {
        let mut scene = corridor();
        for y in 1..4 {
            scene.classes[y * 12 + 5] = WALL;
            scene.heights[y * 12 + 5] = WALL_HEIGHT;
        }
        assert!(matches!(
            plan_route(&scene, &scene.start_poses[0], 2, &MotionConfig::default(), &SensorConfig::default(), 1.0),
            Err(Error::NoPath { .. })
        ));
    }

    #[test]
    fn view_points_respect_blind_zone_and_occlusion() {
        let mut scene = corridor();
        let sensor = SensorConfig::default();
        let views: Vec<usize> = view_cells(&scene, 2, &sensor, 1.0).iter().map(|v| v.0).collect();
        assert!(!views.contains(&(2 * 12 + 9)));
        assert!(views.contains(&(2 * 12 + 8)));
        assert!(views.contains(&(2 * 12 + 7)));
        // Distance 1.0 m is still inside the radius; 1.25 m is not.
        assert!(views.contains(&(2 * 12 + 6)));
        assert!(!views.contains(&(2 * 12 + 5)));
        scene.classes[2 * 12 + 8] = WALL;
        scene.heights[2 * 12 + 8] = WALL_HEIGHT;
        let views: Vec<usize> = view_cells(&scene, 2, &sensor, 1.0).iter().map(|v| v.0).collect();
        assert!(!views.contains(&(2 * 12 + 7)));
    }

    #[test]
    fn first_within_solves_circle_entry() {
        let line = [(0.0, 0.0), (4.0, 0.0)];
        let s = first_within(&line, &[(3.0, 0.0)], 1.0).unwrap();
        assert!((s - 2.0).abs() < 1e-12);
        let s = first_within(&line, &[(3.0, 0.6)], 1.0).unwrap();
        assert!((s - 2.2).abs() < 1e-12);
        assert_eq!(first_within(&line, &[(0.5, 0.0)], 1.0), Some(0.0));
        assert_eq!(first_within(&line, &[(2.0, 5.0)], 1.0), None);
    }
}
