use crate::calibration::{softmax_slice, PROB_FLOOR};
use crate::map::{GridMap, ProjectedHit};
use crate::scene::AgentPose;

use super::{argmax_mask, FoundDecision, FoundRule, Strategy};

/// Bayesian fusion under an independence assumption: per-class
/// log-probabilities are summed and the posterior is their softmax.
#[derive(Debug, Clone)]
pub struct LogOddsStrategy {
    rule: FoundRule,
    num_classes: usize,
    log_sums: Vec<f64>,
}

impl LogOddsStrategy {
    pub(crate) fn new(map: &GridMap, rule: FoundRule) -> Self {
        LogOddsStrategy {
            rule,
            num_classes: map.num_classes,
            log_sums: vec![0.0; map.num_cells() * map.num_classes],
        }
    }
}

impl Strategy for LogOddsStrategy {
    fn integrate(&mut self, map: &mut GridMap, hits: &[ProjectedHit], _pose: &AgentPose) {
        let c = self.num_classes;
        for h in hits {
            let l = &mut self.log_sums[h.cell * c..(h.cell + 1) * c];
            for (acc, p) in l.iter_mut().zip(h.p_pred.values()) {
                *acc += p.max(PROB_FLOOR).ln();
            }
            map.set_probs(h.cell, softmax_slice(l));
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

#[cfg(test)]
mod tests {
    use super::super::test_util::*;
    use super::*;

    #[test]
    fn product_of_two_predictions() {
        let mut m = map(4, 4, 3);
        let mut s = LogOddsStrategy::new(&m, rule(2, None));
        let pose = pose_at(&m, 0);
        s.integrate(&mut m, &[hit(1, &[0.6, 0.3, 0.1], 1.0)], &pose);
        s.integrate(&mut m, &[hit(1, &[0.2, 0.3, 0.5], 1.0)], &pose);
        let raw = [0.6 * 0.2, 0.3 * 0.3, 0.1 * 0.5];
        let z: f64 = raw.iter().sum();
        let got = m.cell(1).p.as_ref().unwrap().values().to_vec();
        for (g, r) in got.iter().zip(raw) {
            assert!((g - r / z).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_probability_is_floored() {
        let mut m = map(4, 4, 3);
        let mut s = LogOddsStrategy::new(&m, rule(2, None));
        let pose = pose_at(&m, 0);
        s.integrate(&mut m, &[hit(1, &[1.0, 0.0, 0.0], 1.0)], &pose);
        let p = m.cell(1).p.as_ref().unwrap();
        assert!(p.values().iter().all(|v| v.is_finite()));
        assert_eq!(p.argmax(), 0);
    }
}
