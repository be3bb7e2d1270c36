//! Deterministic 2.5D grid worlds.
//!
//! A scene is a row-major grid of cells, each with a semantic class and a
//! height. Class 0 is free floor, class 1 is wall, and classes `2..C` are
//! furniture-like objects that can serve as search targets.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FLOOR: usize = 0;
pub const WALL: usize = 1;
pub const FIRST_OBJECT_CLASS: usize = 2;

pub const FLOOR_HEIGHT: f64 = 0.0;
pub const WALL_HEIGHT: f64 = 2.0;
pub const OBJECT_HEIGHT: f64 = 0.5;

/// Cells taller than this are occupied.
pub const OCCUPANCY_HEIGHT: f64 = 0.1;

pub const SCENE_FILE_VERSION: u32 = 1;

/// Robot pose in world meters / radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentPose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl AgentPose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        AgentPose { x, y, theta }
    }

    pub fn distance_to(&self, x: f64, y: f64) -> f64 {
        (self.x - x).hypot(self.y - y)
    }
}

/// Inclusive cell-coordinate rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl CellBox {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x0..=self.x1).contains(&x) && (self.y0..=self.y1).contains(&y)
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.y0..=self.y1).flat_map(move |y| (self.x0..=self.x1).map(move |x| (x, y)))
    }
}

/// One object instance that can be searched for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetInstance {
    pub class_id: usize,
    pub bbox: CellBox,
}

/// Ground-truth grid world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub version: u32,
    pub width: usize,
    pub height: usize,
    /// Meters per cell.
    pub resolution: f64,
    pub num_classes: usize,
    /// Row-major class ids.
    pub classes: Vec<usize>,
    /// Row-major cell heights in meters.
    pub heights: Vec<f64>,
    pub targets: Vec<TargetInstance>,
    pub start_poses: Vec<AgentPose>,
}

/// Parameters for [`generate_scene`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    pub num_classes: usize,
    /// Object instances per square meter of scene area.
    pub object_density: f64,
    pub num_start_poses: usize,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            width: 40,
            height: 40,
            resolution: 0.2,
            num_classes: 20,
            object_density: 0.12,
            num_start_poses: 4,
        }
    }
}

impl Scene {
    pub fn num_cells(&self) -> usize {
        self.width * self.height
    }

    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.width, idx / self.width)
    }

    pub fn cell_center(&self, idx: usize) -> (f64, f64) {
        let (x, y) = self.coords(idx);
        (
            (x as f64 + 0.5) * self.resolution,
            (y as f64 + 0.5) * self.resolution,
        )
    }

    /// Cell containing a world point, if inside the grid.
    pub fn cell_at(&self, x: f64, y: f64) -> Option<usize> {
        if x < 0.0 || y < 0.0 {
            return None;
        }
        let (cx, cy) = (
            (x / self.resolution).floor() as usize,
            (y / self.resolution).floor() as usize,
        );
        (cx < self.width && cy < self.height).then(|| self.index(cx, cy))
    }

    pub fn is_occupied(&self, idx: usize) -> bool {
        self.heights[idx] > OCCUPANCY_HEIGHT
    }

    /// Per-cell traversability (not occupied).
    pub fn free_mask(&self) -> Vec<bool> {
        (0..self.num_cells()).map(|i| !self.is_occupied(i)).collect()
    }

    pub fn object_classes(&self) -> std::ops::Range<usize> {
        FIRST_OBJECT_CLASS..self.num_classes
    }

    pub fn targets_of(&self, class_id: usize) -> impl Iterator<Item = &TargetInstance> {
        self.targets.iter().filter(move |t| t.class_id == class_id)
    }

    /// Cells belonging to instances of `class_id`.
    pub fn target_cells(&self, class_id: usize) -> Vec<usize> {
        let mut cells: Vec<usize> = self
            .targets_of(class_id)
            .flat_map(|t| t.bbox.cells().map(|(x, y)| self.index(x, y)))
            .filter(|&i| self.classes[i] == class_id)
            .collect();
        cells.sort_unstable();
        cells.dedup();
        cells
    }

    /// Checks the structural invariants of a scene.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_cells();
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidInput("empty scene grid".into()));
        }
        if !(self.resolution > 0.0) {
            return Err(Error::InvalidInput("resolution must be positive".into()));
        }
        if self.num_classes < 3 {
            return Err(Error::InvalidInput("scenes need at least 3 classes".into()));
        }
        if self.classes.len() != n || self.heights.len() != n {
            return Err(Error::InvalidInput(format!(
                "expected {n} cells, got {} classes and {} heights",
                self.classes.len(),
                self.heights.len()
            )));
        }
        if let Some(c) = self.classes.iter().find(|&&c| c >= self.num_classes) {
            return Err(Error::InvalidInput(format!("class id {c} out of range")));
        }
        for t in &self.targets {
            let b = t.bbox;
            if b.x0 > b.x1 || b.y0 > b.y1 || b.x1 >= self.width || b.y1 >= self.height {
                return Err(Error::InvalidInput(format!("target bbox {b:?} outside grid")));
            }
            if !b.cells().any(|(x, y)| self.classes[self.index(x, y)] == t.class_id) {
                return Err(Error::InvalidInput(format!(
                    "target bbox {b:?} holds no cell of class {}",
                    t.class_id
                )));
            }
        }
        for p in &self.start_poses {
            match self.cell_at(p.x, p.y) {
                Some(c) if !self.is_occupied(c) => {}
                _ => {
                    return Err(Error::InvalidInput(format!(
                        "start pose ({:.2}, {:.2}) not on a free cell",
                        p.x, p.y
                    )))
                }
            }
        }
        let free = self.free_mask();
        let reachable = self.start_poses.iter().any(|p| {
            let start = self.cell_at(p.x, p.y).unwrap();
            let seen = flood_fill(self.width, self.height, &free, start);
            self.targets
                .iter()
                .any(|t| approach_cells(self, &t.bbox, &free).any(|c| seen[c]))
        });
        if !reachable {
            return Err(Error::InvalidInput(
                "no start pose can reach any target".into(),
            ));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)
            .map_err(|e| Error::format(path, e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Scene> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let scene: Scene =
            serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        if scene.version != SCENE_FILE_VERSION {
            return Err(Error::format(
                path,
                format!("unsupported scene version {}", scene.version),
            ));
        }
        scene
            .validate()
            .map_err(|e| Error::format(path, e.to_string()))?;
        Ok(scene)
    }
}

/// Free cells 8-adjacent to a bounding box: where an agent stands to reach it.
pub fn approach_cells<'a>(
    scene: &'a Scene,
    bbox: &'a CellBox,
    free: &'a [bool],
) -> impl Iterator<Item = usize> + 'a {
    let x0 = bbox.x0.saturating_sub(1);
    let y0 = bbox.y0.saturating_sub(1);
    let x1 = (bbox.x1 + 1).min(scene.width - 1);
    let y1 = (bbox.y1 + 1).min(scene.height - 1);
    (y0..=y1)
        .flat_map(move |y| (x0..=x1).map(move |x| (x, y)))
        .filter(move |&(x, y)| !bbox.contains(x, y))
        .map(move |(x, y)| scene.index(x, y))
        .filter(move |&i| free[i])
}

/// 4-connected reachability from `start` over `free` cells.
pub fn flood_fill(width: usize, height: usize, free: &[bool], start: usize) -> Vec<bool> {
    let mut seen = vec![false; width * height];
    if !free[start] {
        return seen;
    }
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(i) = queue.pop_front() {
        let (x, y) = (i % width, i / width);
        let mut push = |nx: usize, ny: usize| {
            let j = ny * width + nx;
            if free[j] && !seen[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        };
        if x > 0 {
            push(x - 1, y);
        }
        if x + 1 < width {
            push(x + 1, y);
        }
        if y > 0 {
            push(x, y - 1);
        }
        if y + 1 < height {
            push(x, y + 1);
        }
    }
    seen
}

const GENERATION_RETRIES: usize = 10;
const PLACEMENT_ATTEMPTS: usize = 60;

/// Generates a reproducible scene with walls, rooms, and objects.
///
/// Fails when no object can be placed (e.g. density 0) within the retry budget.
pub fn generate_scene(spec: &SceneSpec, seed: u64) -> Result<Scene> {
    if spec.width < 5 || spec.height < 5 {
        return Err(Error::InvalidInput("scene must be at least 5x5 cells".into()));
    }
    if spec.num_classes < 3 {
        return Err(Error::InvalidInput(
            "need free space, walls and at least one object class".into(),
        ));
    }
    if !(spec.resolution > 0.0) || spec.object_density < 0.0 || spec.num_start_poses == 0 {
        return Err(Error::InvalidInput(format!("invalid scene spec {spec:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..GENERATION_RETRIES {
        if let Some(scene) = try_generate(spec, &mut rng) {
            scene.validate()?;
            return Ok(scene);
        }
    }
    Err(Error::Generation(format!(
        "could not place a reachable target after {GENERATION_RETRIES} attempts"
    )))
}

fn try_generate(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Option<Scene> {
    let (w, h) = (spec.width, spec.height);
    let mut scene = Scene {
        version: SCENE_FILE_VERSION,
        width: w,
        height: h,
        resolution: spec.resolution,
        num_classes: spec.num_classes,
        classes: vec![FLOOR; w * h],
        heights: vec![FLOOR_HEIGHT; w * h],
        targets: Vec::new(),
        start_poses: Vec::new(),
    };
    let set_wall = |s: &mut Scene, x: usize, y: usize| {
        let i = s.index(x, y);
        s.classes[i] = WALL;
        s.heights[i] = WALL_HEIGHT;
    };
    for x in 0..w {
        set_wall(&mut scene, x, 0);
        set_wall(&mut scene, x, h - 1);
    }
    for y in 0..h {
        set_wall(&mut scene, 0, y);
        set_wall(&mut scene, w - 1, y);
    }

    // Room dividers with doorways on larger scenes.
    if w >= 16 && h >= 16 {
        let door = 3;
        let vx = rng.random_range(w / 3..=2 * w / 3);
        let doors_v = [
            rng.random_range(2..h / 2 - door),
            rng.random_range(h / 2 + 1..h - 1 - door),
        ];
        for y in 1..h - 1 {
            if !doors_v.iter().any(|&d| (d..d + door).contains(&y)) {
                set_wall(&mut scene, vx, y);
            }
        }
        for (lo, hi) in [(1, vx), (vx + 1, w - 1)] {
            if hi - lo < 2 * door + 2 {
                continue;
            }
            let hy = rng.random_range(h / 3..=2 * h / 3);
            let d = rng.random_range(lo + 1..hi - door);
            for x in lo..hi {
                if !(d..d + door).contains(&x) {
                    set_wall(&mut scene, x, hy);
                }
            }
        }
    }

    let area = (w * h) as f64 * spec.resolution * spec.resolution;
    let wanted = if spec.object_density > 0.0 {
        ((spec.object_density * area).round() as usize).max(1)
    } else {
        0
    };
    let max_side = 3.min(w - 4).min(h - 4).max(1);
    for _ in 0..wanted {
        for _ in 0..PLACEMENT_ATTEMPTS {
            let ow = rng.random_range(1..=max_side);
            let oh = rng.random_range(1..=max_side);
            let x0 = rng.random_range(1..w - ow);
            let y0 = rng.random_range(1..h - oh);
            let bbox = CellBox {
                x0,
                y0,
                x1: x0 + ow - 1,
                y1: y0 + oh - 1,
            };
            let class_id = rng.random_range(FIRST_OBJECT_CLASS..spec.num_classes);
            if try_place(&mut scene, bbox, class_id) {
                break;
            }
        }
    }
    if scene.targets.is_empty() {
        return None;
    }

    let free = scene.free_mask();
    let free_cells: Vec<usize> = (0..w * h).filter(|&i| free[i]).collect();
    for _ in 0..spec.num_start_poses * PLACEMENT_ATTEMPTS {
        if scene.start_poses.len() == spec.num_start_poses {
            break;
        }
        let c = free_cells[rng.random_range(0..free_cells.len())];
        let reach = flood_fill(w, h, &free, c);
        let can_reach = scene
            .targets
            .iter()
            .any(|t| approach_cells(&scene, &t.bbox, &free).any(|a| reach[a] && a != c));
        if !can_reach {
            continue;
        }
        let (x, y) = scene.cell_center(c);
        let theta = rng.random_range(-PI..PI);
        scene.start_poses.push(AgentPose { x, y, theta });
    }
    if scene.start_poses.is_empty() {
        return None;
    }
    Some(scene)
}

/// Places an object if the box plus a one-cell margin is floor and the floor
/// stays connected afterwards.
fn try_place(scene: &mut Scene, bbox: CellBox, class_id: usize) -> bool {
    let (w, h) = (scene.width, scene.height);
    let mx0 = bbox.x0.saturating_sub(1);
    let my0 = bbox.y0.saturating_sub(1);
    let mx1 = (bbox.x1 + 1).min(w - 1);
    let my1 = (bbox.y1 + 1).min(h - 1);
    for y in my0..=my1 {
        for x in mx0..=mx1 {
            let i = scene.index(x, y);
            let inside = bbox.contains(x, y);
            if inside && scene.classes[i] != FLOOR {
                return false;
            }
            if !inside && scene.classes[i] >= FIRST_OBJECT_CLASS {
                return false;
            }
        }
    }
    let before = scene.free_mask();
    let mut after = before.clone();
    for (x, y) in bbox.cells() {
        after[scene.index(x, y)] = false;
    }
    let Some(seed) = (0..w * h).find(|&i| after[i]) else {
        return false;
    };
    let reach = flood_fill(w, h, &after, seed);
    if (0..w * h).any(|i| after[i] && !reach[i]) {
        return false;
    }
    if approach_cells(scene, &bbox, &after).next().is_none() {
        return false;
    }
    for (x, y) in bbox.cells() {
        let i = scene.index(x, y);
        scene.classes[i] = class_id;
        scene.heights[i] = OBJECT_HEIGHT;
    }
    scene.targets.push(TargetInstance { class_id, bbox });
    true
}

/// Visible cells within a field of view.
///
/// Each of `n_rays` evenly spaced rays is sampled every half cell; a ray stops
/// at the first occupied cell (which is included) or at `max_range_m`. The
/// agent's own cell is not reported. Result is sorted by cell index.
pub fn raycast_fov(
    scene: &Scene,
    pose: &AgentPose,
    fov_rad: f64,
    n_rays: usize,
    max_range_m: f64,
) -> Vec<(usize, f64)> {
    let own = scene.cell_at(pose.x, pose.y);
    let step = scene.resolution / 2.0;
    let mut best: Vec<f64> = vec![f64::INFINITY; scene.num_cells()];
    let mut touched = Vec::new();
    for r in 0..n_rays {
        let angle = if n_rays == 1 {
            pose.theta
        } else {
            pose.theta - fov_rad / 2.0 + fov_rad * r as f64 / (n_rays - 1) as f64
        };
        let (dx, dy) = (angle.cos(), angle.sin());
        let mut k = 1usize;
        loop {
            let s = step * k as f64;
            if s > max_range_m + 1e-12 {
                break;
            }
            let Some(cell) = scene.cell_at(pose.x + s * dx, pose.y + s * dy) else {
                break;
            };
            if Some(cell) != own {
                if best[cell].is_infinite() {
                    touched.push(cell);
                }
                if s < best[cell] {
                    best[cell] = s;
                }
                if scene.is_occupied(cell) {
                    break;
                }
            }
            k += 1;
        }
    }
    touched.sort_unstable();
    touched.into_iter().map(|c| (c, best[c])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 5x5 room: walls on the border, agent at (1, 2) facing +x.
    pub(crate) fn small_room() -> Scene {
        let mut s = Scene {
            version: SCENE_FILE_VERSION,
            width: 5,
            height: 5,
            resolution: 1.0,
            num_classes: 3,
            classes: vec![FLOOR; 25],
            heights: vec![0.0; 25],
            targets: vec![],
            start_poses: vec![],
        };
        for i in 0..25 {
            let (x, y) = s.coords(i);
            if x == 0 || y == 0 || x == 4 || y == 4 {
                s.classes[i] = WALL;
                s.heights[i] = WALL_HEIGHT;
            }
        }
        s
    }

    #[test]
    fn wall_one_cell_ahead() {
        let mut s = small_room();
        let wall = s.index(3, 2);
        s.classes[wall] = WALL;
        s.heights[wall] = WALL_HEIGHT;
        let pose = AgentPose::new(1.5, 2.5, 0.0);
        let hits = raycast_fov(&s, &pose, 0.0, 1, 10.0);
        let cells: Vec<usize> = hits.iter().map(|h| h.0).collect();
        assert_eq!(cells, vec![s.index(2, 2), s.index(3, 2)]);
        assert_eq!(hits[0].1, 0.5);
        assert_eq!(hits[1].1, 1.5);
    }

    #[test]
    fn fov_zero_is_single_forward_ray() {
        let s = small_room();
        let pose = AgentPose::new(2.5, 1.5, PI / 2.0);
        let cells: Vec<usize> = raycast_fov(&s, &pose, 0.0, 1, 10.0)
            .iter()
            .map(|h| h.0)
            .collect();
        assert_eq!(cells, vec![s.index(2, 2), s.index(2, 3), s.index(2, 4)]);
    }

    #[test]
    fn open_corridor_stops_at_range() {
        let w = 40;
        let s = Scene {
            version: SCENE_FILE_VERSION,
            width: w,
            height: 1,
            resolution: 0.1,
            num_classes: 3,
            classes: vec![FLOOR; w],
            heights: vec![0.0; w],
            targets: vec![],
            start_poses: vec![],
        };
        let pose = AgentPose::new(0.05, 0.05, 0.0);
        let hits = raycast_fov(&s, &pose, 0.0, 1, 1.0);
        assert!(hits.iter().all(|(c, d)| !s.is_occupied(*c) && *d <= 1.0));
        let far = hits.iter().map(|h| h.0).max().unwrap();
        assert_eq!(far, 10);
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = SceneSpec {
            width: 8,
            height: 8,
            ..SceneSpec::default()
        };
        let a = generate_scene(&spec, 7).unwrap();
        let b = generate_scene(&spec, 7).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn zero_density_fails() {
        let spec = SceneSpec {
            object_density: 0.0,
            ..SceneSpec::default()
        };
        assert!(matches!(generate_scene(&spec, 1), Err(Error::Generation(_))));
    }

    #[test]
    fn too_few_classes_rejected() {
        let spec = SceneSpec {
            num_classes: 2,
            ..SceneSpec::default()
        };
        assert!(generate_scene(&spec, 1).is_err());
    }

    #[test]
    fn generated_scene_validates_and_roundtrips() {
        let scene = generate_scene(&SceneSpec::default(), 11).unwrap();
        scene.validate().unwrap();
        assert!(!scene.targets.is_empty());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        scene.save(&path).unwrap();
        assert_eq!(Scene::load(&path).unwrap(), scene);
    }

    #[test]
    fn corrupt_scene_rejected_on_load() {
        let mut scene = generate_scene(&SceneSpec::default(), 3).unwrap();
        scene.heights.pop();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        scene.save(&path).unwrap();
        assert!(Scene::load(&path).is_err());
    }
}
