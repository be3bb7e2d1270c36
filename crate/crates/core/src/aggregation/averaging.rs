use crate::calibration::ProbVector;
use crate::map::{GridMap, ProjectedHit};
use crate::scene::AgentPose;

use super::{argmax_mask, FoundDecision, FoundRule, Strategy};

/// Running (optionally inverse-uncertainty weighted) mean of the predictions
/// seen in each cell.
#[derive(Debug, Clone)]
pub struct AveragingStrategy {
    rule: FoundRule,
    /// `Some(ε)` weights each prediction by `1 / clamp(u, ε, 1)`.
    weighting: Option<f64>,
    num_classes: usize,
    sums: Vec<f64>,
    weights: Vec<f64>,
}

impl AveragingStrategy {
    fn with(map: &GridMap, rule: FoundRule, weighting: Option<f64>) -> Self {
        AveragingStrategy {
            rule,
            weighting,
            num_classes: map.num_classes,
            sums: vec![0.0; map.num_cells() * map.num_classes],
            weights: vec![0.0; map.num_cells()],
        }
    }

    pub(crate) fn plain(map: &GridMap, rule: FoundRule) -> Self {
        Self::with(map, rule, None)
    }

    pub(crate) fn weighted(map: &GridMap, rule: FoundRule, u_clamp: f64) -> Self {
        Self::with(map, rule, Some(u_clamp))
    }

    /// Weight given to one prediction of uncertainty `u`.
    pub fn weight(&self, u: f64) -> f64 {
        self.weighting.map_or(1.0, |eps| 1.0 / u.clamp(eps, 1.0))
    }
}

impl Strategy for AveragingStrategy {
    fn integrate(&mut self, map: &mut GridMap, hits: &[ProjectedHit], _pose: &AgentPose) {
        let c = self.num_classes;
        for h in hits {
            let w = self.weight(h.u);
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
    use super::super::FoundReason;
    use super::*;
    use crate::calibration::normalized_entropy;

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn plain_mean_of_two_predictions() {
        let mut m = map(4, 4, 3);
        let mut s = AveragingStrategy::plain(&m, rule(2, None));
        let pose = pose_at(&m, 0);
        s.integrate(&mut m, &[hit(3, &[0.6, 0.3, 0.1], 1.0)], &pose);
        s.integrate(&mut m, &[hit(3, &[0.2, 0.3, 0.5], 1.0)], &pose);
        assert!(close(m.cell(3).p.as_ref().unwrap().values(), &[0.4, 0.3, 0.3]));
    }

    #[test]
    fn weighted_mean_uses_inverse_uncertainty() {
        let mut m = map(4, 4, 3);
        let mut s = AveragingStrategy::weighted(&m, rule(2, None), 1e-3);
        let pose = pose_at(&m, 0);
        let a = [0.8, 0.1, 0.1];
        let b = [0.2, 0.2, 0.6];
        s.integrate(&mut m, &[hit(3, &a, 1.0)], &pose);
        s.integrate(&mut m, &[hit(3, &b, 1.0)], &pose);
        let ua = normalized_entropy(&ProbVector::new(a.to_vec()).unwrap());
        let ub = normalized_entropy(&ProbVector::new(b.to_vec()).unwrap());
        let (wa, wb) = (1.0 / ua, 1.0 / ub);
        let expect: Vec<f64> = (0..3).map(|j| (wa * a[j] + wb * b[j]) / (wa + wb)).collect();
        assert!(close(m.cell(3).p.as_ref().unwrap().values(), &expect));
    }

    #[test]
    fn one_hot_prediction_uses_clamped_weight() {
        let m = map(2, 2, 3);
        let s = AveragingStrategy::weighted(&m, rule(2, None), 1e-3);
        assert_eq!(s.weight(0.0), 1000.0);
        assert_eq!(s.weight(0.5), 2.0);
    }

    #[test]
    fn uncertainty_gate_blocks_found() {
        let mut m = map(8, 8, 3);
        let mut s = AveragingStrategy::plain(&m, rule(2, Some(0.4)));
        let cell = m.index(4, 4);
        let pose = pose_at(&m, m.index(3, 4));
        s.integrate(&mut m, &[hit(cell, &[0.3, 0.3, 0.4], 0.25)], &pose);
        assert!(m.cell(cell).u_map > 0.4);
        assert!(!s.decide_found(&m, &pose).found);
        for _ in 0..5 {
            s.integrate(&mut m, &[hit(cell, &[0.0, 0.0, 1.0], 0.25)], &pose);
        }
        assert!(m.cell(cell).u_map < 0.4);
        assert_eq!(
            s.decide_found(&m, &pose),
            FoundDecision::at(cell, FoundReason::UncertaintyGated)
        );
    }
}
