use crate::calibration::ProbVector;
use crate::map::{GridMap, ProjectedHit};
use crate::scene::AgentPose;

use super::{argmax_mask, FoundDecision, FoundRule, Strategy};

/// Each cell keeps the most recent prediction.
#[derive(Debug, Clone)]
pub struct LatestStrategy {
    rule: FoundRule,
}

impl LatestStrategy {
    pub(crate) fn new(rule: FoundRule) -> Self {
        LatestStrategy { rule }
    }
}

impl Strategy for LatestStrategy {
    fn integrate(&mut self, map: &mut GridMap, hits: &[ProjectedHit], _pose: &AgentPose) {
        for h in hits {
            map.set_probs(h.cell, h.p_pred.clone());
        }
    }

    fn target_mask(&self, map: &GridMap) -> Vec<bool> {
        argmax_mask(map, self.rule.target_class)
    }

    fn decide_found(&mut self, map: &GridMap, pose: &AgentPose) -> FoundDecision {
        let mask = self.target_mask(map);
        self.rule.decide(map, &mask, pose)
    }
}

/// Shows the most recent class, but hides the target wherever the
/// uncertainty-weighted running estimate is too uncertain (`u_map >= ρ`).
#[derive(Debug, Clone)]
pub struct LatestFilteredStrategy {
    rule: FoundRule,
    rho: f64,
    u_clamp: f64,
    num_classes: usize,
    sums: Vec<f64>,
    weights: Vec<f64>,
    latest: Vec<Option<usize>>,
}

impl LatestFilteredStrategy {
    pub(crate) fn new(map: &GridMap, rule: FoundRule, rho: f64, u_clamp: f64) -> Self {
        LatestFilteredStrategy {
            rule,
            rho,
            u_clamp,
            num_classes: map.num_classes,
            sums: vec![0.0; map.num_cells() * map.num_classes],
            weights: vec![0.0; map.num_cells()],
            latest: vec![None; map.num_cells()],
        }
    }
}

impl Strategy for LatestFilteredStrategy {
    fn integrate(&mut self, map: &mut GridMap, hits: &[ProjectedHit], _pose: &AgentPose) {
        let c = self.num_classes;
        for h in hits {
            let w = 1.0 / h.u.clamp(self.u_clamp, 1.0);
            let s = &mut self.sums[h.cell * c..(h.cell + 1) * c];
            for (acc, p) in s.iter_mut().zip(h.p_pred.values()) {
                *acc += w * p;
            }
            self.weights[h.cell] += w;
            let total = self.weights[h.cell];
            map.set_probs(
                h.cell,
                ProbVector::from_normalized(s.iter().map(|v| v / total).collect()),
            );
            self.latest[h.cell] = Some(h.p_pred.argmax());
        }
    }

    fn target_mask(&self, map: &GridMap) -> Vec<bool> {
        self.latest
            .iter()
            .zip(map.cells())
            .map(|(l, cell)| *l == Some(self.rule.target_class) && cell.u_map < self.rho)
            .collect()
    }

    fn decide_found(&mut self, map: &GridMap, pose: &AgentPose) -> FoundDecision {
        let mask = self.target_mask(map);
        self.rule.decide(map, &mask, pose)
    }
}
