use std::sync::Arc;

use crate::map::{GridMap, ProjectedHit};
use crate::morphology::label_components;
use crate::scene::AgentPose;

use super::{argmax_mask, cells_within, FoundDecision, FoundReason, FoundRule, NBClassifier, Strategy};

pub const NUM_STUBBORN_FEATURES: usize = 4;

/// The target component nearest the agent and its aggregated features:
/// total views, cumulative target confidence, maximum target confidence and
/// maximum non-target confidence.
#[derive(Debug, Clone, PartialEq)]
pub struct StubbornCandidate {
    pub cells: Vec<usize>,
    /// Component cell nearest the agent.
    pub nearest: usize,
    pub features: [f64; NUM_STUBBORN_FEATURES],
}

/// Latest mapping with per-cell detection statistics; found decisions are
/// delegated to a naive Bayes classifier over the nearest target component.
#[derive(Debug, Clone)]
pub struct StubbornStrategy {
    rule: FoundRule,
    classifier: Option<Arc<NBClassifier>>,
    views: Vec<f64>,
    cum_conf: Vec<f64>,
    max_conf: Vec<f64>,
    max_other: Vec<f64>,
}

impl StubbornStrategy {
    /// Without a classifier the strategy only maps and never declares found,
    /// which is how training features are collected.
    pub fn new(map: &GridMap, rule: FoundRule, classifier: Option<Arc<NBClassifier>>) -> Self {
        let n = map.num_cells();
        StubbornStrategy {
            rule,
            classifier,
            views: vec![0.0; n],
            cum_conf: vec![0.0; n],
            max_conf: vec![0.0; n],
            max_other: vec![0.0; n],
        }
    }

    /// A classifier-free instance for feature collection.
    pub fn collector(map: &GridMap, target_class: usize, radius_m: f64) -> Self {
        let rule = FoundRule {
            target_class,
            radius_m,
            xi: None,
        };
        StubbornStrategy::new(map, rule, None)
    }

    /// The nearest target component with a cell inside the success radius.
    pub fn candidate(&self, map: &GridMap, pose: &AgentPose) -> Option<StubbornCandidate> {
        let mask = self.target_mask(map);
        let nearest = cells_within(map, pose, self.rule.radius_m)
            .into_iter()
            .find(|&(c, _)| mask[c])?
            .0;
        let (labels, _) = label_components(&mask, map.width, map.height);
        let id = labels[nearest];
        let cells: Vec<usize> = (0..mask.len()).filter(|&i| labels[i] == id).collect();
        let mut f = [0.0; NUM_STUBBORN_FEATURES];
        for &c in &cells {
            f[0] += self.views[c];
            f[1] += self.cum_conf[c];
            f[2] = f[2].max(self.max_conf[c]);
            f[3] = f[3].max(self.max_other[c]);
        }
        Some(StubbornCandidate {
            cells,
            nearest,
            features: f,
        })
    }
}

impl Strategy for StubbornStrategy {
    fn integrate(&mut self, map: &mut GridMap, hits: &[ProjectedHit], _pose: &AgentPose) {
        let t = self.rule.target_class;
        for h in hits {
            map.set_probs(h.cell, h.p_pred.clone());
            let p = h.p_pred.values();
            let c = h.cell;
            self.views[c] += 1.0;
            self.cum_conf[c] += p[t];
            self.max_conf[c] = self.max_conf[c].max(p[t]);
            let other = p
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != t)
                .map(|(_, v)| *v)
                .fold(0.0, f64::max);
            self.max_other[c] = self.max_other[c].max(other);
        }
    }

    fn target_mask(&self, map: &GridMap) -> Vec<bool> {
        argmax_mask(map, self.rule.target_class)
    }

    fn decide_found(&mut self, map: &GridMap, pose: &AgentPose) -> FoundDecision {
        let Some(clf) = &self.classifier else {
            return FoundDecision::NOT_FOUND;
        };
        match self.candidate(map, pose) {
            Some(c) if clf.predict(&c.features) => FoundDecision::at(c.nearest, FoundReason::Classifier),
            _ => FoundDecision::NOT_FOUND,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::test_util::*;
    use super::*;

    #[test]
    fn features_aggregate_over_component() {
        let mut m = map(8, 8, 3);
        let a = m.index(4, 4);
        let b = m.index(5, 5);
        let far = m.index(0, 7);
        let pose = pose_at(&m, m.index(3, 4));
        let mut s = StubbornStrategy::collector(&m, 2, 1.0);
        s.integrate(
            &mut m,
            &[hit(a, &[0.1, 0.1, 0.8], 0.3), hit(b, &[0.2, 0.2, 0.6], 0.5), hit(far, &[0.0, 0.0, 1.0], 2.0)],
            &pose,
        );
        s.integrate(&mut m, &[hit(a, &[0.3, 0.0, 0.7], 0.3)], &pose);
        let c = s.candidate(&m, &pose).unwrap();
        assert_eq!(c.nearest, a);
        assert_eq!(c.cells, vec![a, b]);
        let expect = [3.0, 0.8 + 0.7 + 0.6, 0.8, 0.3];
        for (g, e) in c.features.iter().zip(expect) {
            assert!((g - e).abs() < 1e-12);
        }
        assert!(!s.decide_found(&m, &pose).found);
    }

    #[test]
    fn classifier_decides() {
        let mut m = map(8, 8, 3);
        let a = m.index(4, 4);
        let pose = pose_at(&m, m.index(3, 4));
        let clf = NBClassifier::train(
            &[vec![1.0, 0.5, 0.5, 0.5], vec![9.0, 8.0, 0.95, 0.1]],
            &[false, true],
        )
        .unwrap();
        let mut s = StubbornStrategy::new(&m, rule(2, None), Some(Arc::new(clf)));
        s.integrate(&mut m, &[hit(a, &[0.05, 0.0, 0.95], 0.3)], &pose);
        assert!(!s.decide_found(&m, &pose).found);
        for _ in 0..8 {
            s.integrate(&mut m, &[hit(a, &[0.05, 0.05, 0.9], 0.3)], &pose);
        }
        let d = s.decide_found(&m, &pose);
        assert_eq!(d.reason, FoundReason::Classifier);
        assert_eq!(d.cell, Some(a));
    }
}
