//! Birds-eye-view semantic grid map.
//!
//! Every cell carries the aggregated class distribution `p`, the maximum
//! observed height, binary occupancy (`height > 0.1 m`) and the map
//! uncertainty `u_map = normalized_entropy(p)`. Cells never observed have no
//! distribution and report uncertainty 1.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calibration::{calibrated_probs, normalized_entropy, ProbVector, Temperature};
use crate::error::{Error, Result};
use crate::pgm::{read_pgm, write_pgm, GrayImage};
use crate::scene::{Scene, FLOOR, OCCUPANCY_HEIGHT, WALL};
use crate::sensor::Observation;

/// Gray level used for never-observed cells in the class image.
pub const UNKNOWN_GRAY: u8 = 255;

const SNAP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapCell {
    pub p: Option<ProbVector>,
    pub height: f64,
    pub occupied: bool,
    pub u_map: f64,
}

impl Default for MapCell {
    fn default() -> Self {
        MapCell {
            p: None,
            height: 0.0,
            occupied: false,
            u_map: 1.0,
        }
    }
}

impl MapCell {
    pub fn is_observed(&self) -> bool {
        self.p.is_some()
    }

    /// Raises the stored height and re-derives occupancy.
    pub fn update_height_occupancy(&mut self, height_m: f64) {
        self.height = self.height.max(height_m);
        self.occupied = self.height > OCCUPANCY_HEIGHT;
    }

    pub fn uncertainty(&self) -> f64 {
        self.p.as_ref().map_or(1.0, normalized_entropy)
    }

    pub fn argmax(&self) -> Option<usize> {
        self.p.as_ref().map(ProbVector::argmax)
    }
}

/// A prediction projected into a map cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedHit {
    pub cell: usize,
    pub p_pred: ProbVector,
    /// Perception uncertainty, `normalized_entropy(p_pred)`.
    pub u: f64,
    pub height: f64,
    pub distance_m: f64,
    pub true_class: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMap {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    /// World coordinates of the corner of cell (0, 0).
    pub origin: (f64, f64),
    pub num_classes: usize,
    cells: Vec<MapCell>,
}

impl GridMap {
    pub fn new(
        width: usize,
        height: usize,
        resolution: f64,
        origin: (f64, f64),
        num_classes: usize,
    ) -> Result<Self> {
        if !(resolution > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "map resolution must be positive, got {resolution}"
            )));
        }
        if width == 0 || height == 0 || num_classes < 2 {
            return Err(Error::InvalidParameter("empty map".into()));
        }
        Ok(GridMap {
            width,
            height,
            resolution,
            origin,
            num_classes,
            cells: vec![MapCell::default(); width * height],
        })
    }

    /// A map aligned cell-for-cell with `scene`.
    pub fn for_scene(scene: &Scene) -> Self {
        GridMap::new(
            scene.width,
            scene.height,
            scene.resolution,
            (0.0, 0.0),
            scene.num_classes,
        )
        .expect("validated scene")
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cells(&self) -> &[MapCell] {
        &self.cells
    }

    pub fn cell(&self, idx: usize) -> &MapCell {
        &self.cells[idx]
    }

    pub fn cell_mut(&mut self, idx: usize) -> &mut MapCell {
        &mut self.cells[idx]
    }

    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.width, idx / self.width)
    }

    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    /// `floor((point - origin) / resolution)` per axis. Points within 1e-9
    /// cells of a boundary snap to the upper cell so decimal coordinates such
    /// as 0.09 / 0.03 land where exact arithmetic puts them.
    pub fn world_to_cell(&self, x: f64, y: f64) -> Result<usize> {
        let fx = ((x - self.origin.0) / self.resolution + SNAP).floor();
        let fy = ((y - self.origin.1) / self.resolution + SNAP).floor();
        if fx < 0.0 || fy < 0.0 || fx >= self.width as f64 || fy >= self.height as f64 {
            return Err(Error::OutOfBounds { x, y });
        }
        Ok(self.index(fx as usize, fy as usize))
    }

    pub fn cell_center(&self, idx: usize) -> (f64, f64) {
        let (x, y) = self.coords(idx);
        (
            self.origin.0 + (x as f64 + 0.5) * self.resolution,
            self.origin.1 + (y as f64 + 0.5) * self.resolution,
        )
    }

    /// Stores a new aggregated distribution and recomputes `u_map`.
    pub fn set_probs(&mut self, idx: usize, p: ProbVector) {
        let cell = &mut self.cells[idx];
        cell.u_map = normalized_entropy(&p);
        cell.p = Some(p);
    }

    pub fn update_height_occupancy(&mut self, idx: usize, height_m: f64) {
        self.cells[idx].update_height_occupancy(height_m);
    }

    /// Map uncertainty of a cell; unknown cells are maximally uncertain.
    pub fn cell_uncertainty(&self, idx: usize) -> f64 {
        self.cells[idx].uncertainty()
    }

    pub fn is_observed(&self, idx: usize) -> bool {
        self.cells[idx].is_observed()
    }

    /// Most likely class per cell.
    pub fn class_grid(&self) -> Vec<Option<usize>> {
        self.cells.iter().map(MapCell::argmax).collect()
    }

    /// Folds a frame's heights into the map.
    pub fn integrate_geometry(&mut self, hits: &[ProjectedHit]) {
        for h in hits {
            self.update_height_occupancy(h.cell, h.height);
        }
    }

    /// Calibrates and projects an observation into map cells.
    ///
    /// When several hits fall in one cell, the top-most (greatest height) hit
    /// is kept, ties going to the nearer one. Output is sorted by cell.
    pub fn project_observation(&self, obs: &Observation, t: Temperature) -> Vec<ProjectedHit> {
        let mut out: Vec<ProjectedHit> = Vec::with_capacity(obs.hits.len());
        let mut slot: std::collections::HashMap<usize, usize> = Default::default();
        for hit in &obs.hits {
            let Ok(cell) = self.world_to_cell(hit.x, hit.y) else {
                continue;
            };
            let candidate = |out: &Vec<ProjectedHit>, i: usize| {
                let cur = &out[i];
                hit.height_m > cur.height
                    || (hit.height_m == cur.height && hit.distance_m < cur.distance_m)
            };
            match slot.get(&cell) {
                Some(&i) if !candidate(&out, i) => continue,
                _ => {}
            }
            let p_pred = calibrated_probs(&hit.logits, t);
            let projected = ProjectedHit {
                cell,
                u: normalized_entropy(&p_pred),
                p_pred,
                height: hit.height_m,
                distance_m: hit.distance_m,
                true_class: hit.true_class,
            };
            match slot.get(&cell) {
                Some(&i) => out[i] = projected,
                None => {
                    slot.insert(cell, out.len());
                    out.push(projected);
                }
            }
        }
        out.sort_by_key(|h| h.cell);
        out
    }

    /// Believed-occupied cells; unknown cells are not occupied.
    pub fn occupancy(&self) -> Vec<bool> {
        self.cells.iter().map(|c| c.occupied).collect()
    }

    pub fn observed_mask(&self) -> Vec<bool> {
        self.cells.iter().map(MapCell::is_observed).collect()
    }
}

/// Class name used in legends.
pub fn class_name(class_id: usize) -> String {
    match class_id {
        FLOOR => "floor".into(),
        WALL => "wall".into(),
        c => format!("object-{c}"),
    }
}

/// Gray level of a class in the class image.
pub fn class_gray(class_id: usize, num_classes: usize) -> u8 {
    let step = 250 / num_classes.max(1);
    (class_id * step).min(254) as u8
}

/// Paths written by [`export_map`].
#[derive(Debug, Clone)]
pub struct MapExport {
    pub classes: std::path::PathBuf,
    pub uncertainty: std::path::PathBuf,
    pub target: std::path::PathBuf,
    pub legend: std::path::PathBuf,
}

/// Writes the class, uncertainty and target-mask images plus a palette legend.
///
/// Image row `y` is map row `y`. Unknown cells are gray 255 in the class
/// image and 255 (uncertainty 1) in the uncertainty image.
pub fn export_map(map: &GridMap, target_class: usize, dir: &Path) -> Result<MapExport> {
    let target: Vec<bool> = map
        .cells()
        .iter()
        .map(|c| c.argmax() == Some(target_class))
        .collect();
    export_map_with_mask(map, target_class, &target, dir)
}

/// As [`export_map`] with an explicit rendered target mask.
pub fn export_map_with_mask(
    map: &GridMap,
    target_class: usize,
    target_mask: &[bool],
    dir: &Path,
) -> Result<MapExport> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (w, h) = (map.width, map.height);
    let classes = GrayImage {
        width: w,
        height: h,
        pixels: map
            .cells()
            .iter()
            .map(|c| c.argmax().map_or(UNKNOWN_GRAY, |k| class_gray(k, map.num_classes)))
            .collect(),
    };
    let uncertainty = GrayImage {
        width: w,
        height: h,
        pixels: map
            .cells()
            .iter()
            .map(|c| (c.uncertainty() * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect(),
    };
    let target = GrayImage {
        width: w,
        height: h,
        pixels: target_mask.iter().map(|&t| if t { 255 } else { 0 }).collect(),
    };
    let out = MapExport {
        classes: dir.join("classes.pgm"),
        uncertainty: dir.join("uncertainty.pgm"),
        target: dir.join("target.pgm"),
        legend: dir.join("legend.txt"),
    };
    write_pgm(&out.classes, &classes)?;
    write_pgm(&out.uncertainty, &uncertainty)?;
    write_pgm(&out.target, &target)?;
    let mut legend = format!("# gray class_id name (target class {target_class})\n");
    for k in 0..map.num_classes {
        legend.push_str(&format!("{} {} {}\n", class_gray(k, map.num_classes), k, class_name(k)));
    }
    legend.push_str(&format!("{UNKNOWN_GRAY} - unknown\n"));
    std::fs::write(&out.legend, legend).map_err(|e| Error::io(&out.legend, e))?;
    Ok(out)
}

/// Reads an exported class image back to per-cell class ids.
pub fn read_class_grid(path: &Path, num_classes: usize) -> Result<Vec<Option<usize>>> {
    let img = read_pgm(path)?;
    let lookup: std::collections::HashMap<u8, usize> =
        (0..num_classes).map(|k| (class_gray(k, num_classes), k)).collect();
    img.pixels
        .iter()
        .map(|&g| {
            if g == UNKNOWN_GRAY {
                Ok(None)
            } else {
                lookup
                    .get(&g)
                    .copied()
                    .map(Some)
                    .ok_or_else(|| Error::format(path, format!("gray {g} is not a class")))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::Logits;
    use crate::scene::AgentPose;
    use crate::sensor::Hit;

    fn map() -> GridMap {
        GridMap::new(10, 10, 0.03, (0.0, 0.0), 4).unwrap()
    }

    #[test]
    fn world_to_cell_examples() {
        let m = map();
        assert_eq!(m.world_to_cell(0.0, 0.0).unwrap(), 0);
        assert_eq!(m.coords(m.world_to_cell(0.09, 0.03).unwrap()), (3, 1));
        assert_eq!(m.coords(m.world_to_cell(0.03, 0.0).unwrap()), (1, 0));
        assert_eq!(m.coords(m.world_to_cell(0.0299, 0.0).unwrap()), (0, 0));
        let m1 = GridMap::new(10, 10, 0.25, (0.0, 0.0), 4).unwrap();
        assert_eq!(m1.coords(m1.world_to_cell(0.25, 0.0).unwrap()), (1, 0));
        assert!(m.world_to_cell(-0.01, 0.0).is_err());
        assert!(m.world_to_cell(0.3, 0.0).is_err());
    }

    #[test]
    fn height_occupancy_rules() {
        let mut c = MapCell::default();
        c.update_height_occupancy(0.05);
        assert!(!c.occupied);
        c.update_height_occupancy(0.5);
        assert!(c.occupied);
        c.update_height_occupancy(0.05);
        assert_eq!(c.height, 0.5);
        let mut c = MapCell::default();
        c.update_height_occupancy(0.1);
        assert!(!c.occupied);
    }

    #[test]
    fn cell_uncertainty_examples() {
        let mut m = map();
        assert_eq!(m.cell_uncertainty(0), 1.0);
        m.set_probs(0, ProbVector::one_hot(4, 1));
        assert_eq!(m.cell_uncertainty(0), 0.0);
        m.set_probs(1, ProbVector::new(vec![0.5, 0.5, 0.0, 0.0]).unwrap());
        assert!((m.cell_uncertainty(1) - 0.5).abs() < 1e-12);
        assert_eq!(m.cell(1).u_map, m.cell_uncertainty(1));
    }

    fn hit(x: f64, height: f64, distance: f64, class: usize) -> Hit {
        let mut v = vec![0.0; 4];
        v[class] = 5.0;
        Hit {
            cell: 0,
            x,
            y: 0.01,
            distance_m: distance,
            height_m: height,
            logits: Logits::new(v).unwrap(),
            true_class: class,
        }
    }

    #[test]
    fn top_most_hit_survives() {
        let m = map();
        let obs = Observation {
            pose: AgentPose::new(0.0, 0.0, 0.0),
            hits: vec![hit(0.01, 0.0, 1.0, 0), hit(0.02, 0.5, 2.0, 2), hit(0.05, 0.0, 1.0, 1)],
        };
        let p = m.project_observation(&obs, Temperature::IDENTITY);
        assert_eq!(p.len(), 2);
        assert_eq!(p[0].cell, 0);
        assert_eq!(p[0].height, 0.5);
        assert_eq!(p[0].p_pred.argmax(), 2);

        let obs = Observation {
            pose: AgentPose::new(0.0, 0.0, 0.0),
            hits: vec![hit(0.01, 0.5, 2.0, 0), hit(0.02, 0.5, 1.0, 3)],
        };
        let p = m.project_observation(&obs, Temperature::IDENTITY);
        assert_eq!(p[0].p_pred.argmax(), 3);
    }

    #[test]
    fn empty_observation_projects_to_nothing() {
        let m = map();
        let obs = Observation::empty(AgentPose::new(0.0, 0.0, 0.0));
        assert!(m.project_observation(&obs, Temperature::IDENTITY).is_empty());
    }

    #[test]
    fn temperature_undoes_overconfidence() {
        let m = map();
        let q = [0.6, 0.2, 0.15, 0.05];
        let k = 3.0;
        let obs = Observation {
            pose: AgentPose::new(0.0, 0.0, 0.0),
            hits: vec![Hit {
                logits: Logits::new(q.iter().map(|v: &f64| k * v.ln()).collect()).unwrap(),
                ..hit(0.01, 0.0, 1.0, 0)
            }],
        };
        let p = m.project_observation(&obs, Temperature::new(k).unwrap());
        for (a, b) in p[0].p_pred.values().iter().zip(q) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!((p[0].u - normalized_entropy(&p[0].p_pred)).abs() < 1e-15);
    }

    #[test]
    fn export_round_trip() {
        let mut m = map();
        m.set_probs(3, ProbVector::one_hot(4, 2));
        m.set_probs(4, ProbVector::uniform(4));
        let dir = tempfile::tempdir().unwrap();
        let out = export_map(&m, 2, dir.path()).unwrap();
        let back = read_class_grid(&out.classes, 4).unwrap();
        assert_eq!(back, m.class_grid());
        let u = read_pgm(&out.uncertainty).unwrap();
        assert_eq!(u.pixels[3], 0);
        assert_eq!(u.pixels[4], 255);
        assert_eq!(u.pixels[0], 255);
        let t = read_pgm(&out.target).unwrap();
        assert_eq!(t.pixels[3], 255);
        assert_eq!(t.pixels.iter().filter(|&&v| v == 255).count(), 1);
        assert!(std::fs::read_to_string(&out.legend).unwrap().contains("object-2"));
    }

    #[test]
    fn export_to_unwritable_path_fails() {
        let m = map();
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("f");
        std::fs::write(&file, b"x").unwrap();
        assert!(matches!(export_map(&m, 2, &file.join("sub")), Err(Error::Io { .. })));
    }
}
