use crate::map::{GridMap, ProjectedHit};
use crate::morphology::erode;
use crate::scene::AgentPose;

use super::{FoundDecision, FoundRule, Strategy};

/// Per-cell detection score: +1 for each frame in which the cell survives
/// erosion of the frame's target mask, multiplied by α for every other frame
/// in which the cell is observed.
#[derive(Debug, Clone)]
pub struct SkillFusionStrategy {
    rule: FoundRule,
    alpha: f64,
    threshold: f64,
    kernel: usize,
    score: Vec<f64>,
}

/// Score after folding a hit/miss sequence from zero.
pub fn skill_fusion_fold(seq: &[bool], alpha: f64) -> f64 {
    seq.iter()
        .fold(0.0, |s, &hit| if hit { s + 1.0 } else { s * alpha })
}

impl SkillFusionStrategy {
    pub(crate) fn new(map: &GridMap, rule: FoundRule, alpha: f64, threshold: f64, erosion_m: f64) -> Self {
        let kernel = ((erosion_m / map.resolution) - 1e-9).ceil().max(1.0) as usize;
        SkillFusionStrategy {
            rule,
            alpha,
            threshold,
            kernel,
            score: vec![0.0; map.num_cells()],
        }
    }

    pub fn kernel_cells(&self) -> usize {
        self.kernel
    }

    pub fn score(&self, cell: usize) -> f64 {
        self.score[cell]
    }
}

impl Strategy for SkillFusionStrategy {
    fn integrate(&mut self, map: &mut GridMap, hits: &[ProjectedHit], _pose: &AgentPose) {
        let mut frame = vec![false; map.num_cells()];
        for h in hits {
            map.set_probs(h.cell, h.p_pred.clone());
            frame[h.cell] = h.p_pred.argmax() == self.rule.target_class;
        }
        let eroded = erode(&frame, map.width, map.height, self.kernel);
        for h in hits {
            let s = &mut self.score[h.cell];
            if eroded[h.cell] {
                *s += 1.0;
            } else {
                *s *= self.alpha;
            }
        }
    }

    fn target_mask(&self, _map: &GridMap) -> Vec<bool> {
        self.score.iter().map(|s| *s > self.threshold).collect()
    }

    fn decide_found(&mut self, map: &GridMap, pose: &AgentPose) -> FoundDecision {
        let mask = self.target_mask(map);
        self.rule.decide(map, &mask, pose)
    }
}

#[cfg(test)]
mod tests {
    use super::super::test_util::*;
    use super::*;

    const TARGET: [f64; 3] = [0.1, 0.1, 0.8];
    const FLOOR: [f64; 3] = [0.8, 0.1, 0.1];

    #[test]
    fn kernel_side_from_meters() {
        let m = map(4, 4, 3);
        assert_eq!(SkillFusionStrategy::new(&m, rule(2, None), 0.9, 2.0, 0.04).kernel_cells(), 1);
        assert_eq!(SkillFusionStrategy::new(&m, rule(2, None), 0.9, 2.0, 0.5).kernel_cells(), 2);
        assert_eq!(SkillFusionStrategy::new(&m, rule(2, None), 0.9, 2.0, 0.6).kernel_cells(), 3);
    }

    #[test]
    fn isolated_detection_is_eroded() {
        let mut m = map(8, 8, 3);
        let pose = pose_at(&m, 0);
        let mut s = SkillFusionStrategy::new(&m, rule(2, None), 0.9, 2.0, 0.5);
        let cell = m.index(4, 4);
        s.integrate(&mut m, &[hit(cell, &TARGET, 1.0), hit(cell + 1, &FLOOR, 1.0)], &pose);
        assert_eq!(s.score(cell), 0.0);
    }

    #[test]
    fn consecutive_hits_then_decay() {
        let mut m = map(8, 8, 3);
        let cell = m.index(4, 4);
        let pose = pose_at(&m, m.index(3, 4));
        let mut s = SkillFusionStrategy::new(&m, rule(2, None), 0.5, 2.0, 0.04);
        for k in 1..=3 {
            s.integrate(&mut m, &[hit(cell, &TARGET, 0.25)], &pose);
            assert_eq!(s.score(cell), k as f64);
            assert_eq!(s.decide_found(&m, &pose).found, k as f64 > 2.0);
        }
        // 3 · 0.5^m ≤ 2 once m ≥ 1.
        s.integrate(&mut m, &[hit(cell, &FLOOR, 0.25)], &pose);
        assert_eq!(s.score(cell), 1.5);
        assert!(!s.target_mask(&m)[cell]);
        assert_eq!(s.score(cell), skill_fusion_fold(&[true, true, true, false], 0.5));
    }

    #[test]
    fn unobserved_cells_keep_score() {
        let mut m = map(8, 8, 3);
        let pose = pose_at(&m, 0);
        let mut s = SkillFusionStrategy::new(&m, rule(2, None), 0.5, 2.0, 0.04);
        s.integrate(&mut m, &[hit(9, &TARGET, 1.0)], &pose);
        s.integrate(&mut m, &[hit(10, &FLOOR, 1.0)], &pose);
        assert_eq!(s.score(9), 1.0);
    }
}
