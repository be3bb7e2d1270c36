use crate::map::{GridMap, ProjectedHit};
use crate::scene::AgentPose;

use super::{argmax_mask, cells_within, FoundDecision, FoundReason, FoundRule, Strategy};

/// Latest mapping plus per-cell counts of close views and target hits. A
/// target cell with enough close views is accepted when its hit ratio reaches
/// θ and permanently rejected otherwise.
#[derive(Debug, Clone)]
pub struct HitsViewsStrategy {
    rule: FoundRule,
    theta: f64,
    min_views: u32,
    d_view: f64,
    hits: Vec<u32>,
    views: Vec<u32>,
    rejected: Vec<bool>,
}

/// Outcome of the ratio test on one cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HitsViewsVerdict {
    Accept,
    Reject,
    Undecided,
}

pub fn hits_views_verdict(hits: u32, views: u32, theta: f64, min_views: u32) -> HitsViewsVerdict {
    if views < min_views {
        HitsViewsVerdict::Undecided
    } else if hits as f64 / views as f64 >= theta {
        HitsViewsVerdict::Accept
    } else {
        HitsViewsVerdict::Reject
    }
}

impl HitsViewsStrategy {
    pub(crate) fn new(map: &GridMap, rule: FoundRule, theta: f64, min_views: u32, d_view: f64) -> Self {
        let n = map.num_cells();
        HitsViewsStrategy {
            rule,
            theta,
            min_views,
            d_view,
            hits: vec![0; n],
            views: vec![0; n],
            rejected: vec![false; n],
        }
    }

    pub fn counts(&self, cell: usize) -> (u32, u32) {
        (self.hits[cell], self.views[cell])
    }

    pub fn is_rejected(&self, cell: usize) -> bool {
        self.rejected[cell]
    }
}

impl Strategy for HitsViewsStrategy {
    fn integrate(&mut self, map: &mut GridMap, hits: &[ProjectedHit], _pose: &AgentPose) {
        for h in hits {
            map.set_probs(h.cell, h.p_pred.clone());
            // Only close views count, so hits never exceed views.
            if h.distance_m <= self.d_view {
                self.views[h.cell] += 1;
                if h.p_pred.argmax() == self.rule.target_class {
                    self.hits[h.cell] += 1;
                }
            }
        }
    }

    fn target_mask(&self, map: &GridMap) -> Vec<bool> {
        let mut mask = argmax_mask(map, self.rule.target_class);
        for (m, r) in mask.iter_mut().zip(&self.rejected) {
            *m &= !r;
        }
        mask
    }

    fn decide_found(&mut self, map: &GridMap, pose: &AgentPose) -> FoundDecision {
        let mask = self.target_mask(map);
        for (c, _) in cells_within(map, pose, self.rule.radius_m) {
            if !mask[c] {
                continue;
            }
            match hits_views_verdict(self.hits[c], self.views[c], self.theta, self.min_views) {
                HitsViewsVerdict::Accept => return FoundDecision::at(c, FoundReason::DistanceOnly),
                HitsViewsVerdict::Reject => self.rejected[c] = true,
                HitsViewsVerdict::Undecided => {}
            }
        }
        FoundDecision::NOT_FOUND
    }
}

#[cfg(test)]
mod tests {
    use super::super::test_util::*;
    use super::*;

    #[test]
    fn verdicts() {
        assert_eq!(hits_views_verdict(3, 3, 0.9, 3), HitsViewsVerdict::Accept);
        assert_eq!(hits_views_verdict(1, 3, 0.9, 3), HitsViewsVerdict::Reject);
        assert_eq!(hits_views_verdict(2, 2, 0.9, 3), HitsViewsVerdict::Undecided);
    }

    #[test]
    fn three_consistent_views_are_found() {
        let mut m = map(8, 8, 3);
        let cell = m.index(4, 4);
        let pose = pose_at(&m, m.index(3, 4));
        let mut s = HitsViewsStrategy::new(&m, rule(2, None), 0.9, 3, 2.0);
        for i in 0..3 {
            assert!(!s.decide_found(&m, &pose).found, "early at {i}");
            s.integrate(&mut m, &[hit(cell, &[0.1, 0.1, 0.8], 0.25)], &pose);
        }
        assert_eq!(s.counts(cell), (3, 3));
        assert_eq!(s.decide_found(&m, &pose).cell, Some(cell));
    }

    #[test]
    fn rejected_cell_never_shows_target_again() {
        let mut m = map(8, 8, 3);
        let cell = m.index(4, 4);
        let pose = pose_at(&m, m.index(3, 4));
        let mut s = HitsViewsStrategy::new(&m, rule(2, None), 0.9, 3, 2.0);
        s.integrate(&mut m, &[hit(cell, &[0.8, 0.1, 0.1], 0.25)], &pose);
        s.integrate(&mut m, &[hit(cell, &[0.8, 0.1, 0.1], 0.25)], &pose);
        s.integrate(&mut m, &[hit(cell, &[0.1, 0.1, 0.8], 0.25)], &pose);
        assert_eq!(s.counts(cell), (1, 3));
        assert!(!s.decide_found(&m, &pose).found);
        assert!(s.is_rejected(cell));
        for _ in 0..10 {
            s.integrate(&mut m, &[hit(cell, &[0.0, 0.0, 1.0], 0.25)], &pose);
            assert!(!s.target_mask(&m)[cell]);
            assert!(!s.decide_found(&m, &pose).found);
        }
    }

    #[test]
    fn far_views_do_not_count() {
        let mut m = map(8, 8, 3);
        let pose = pose_at(&m, 0);
        let mut s = HitsViewsStrategy::new(&m, rule(2, None), 0.9, 3, 2.0);
        s.integrate(&mut m, &[hit(5, &[0.1, 0.1, 0.8], 3.0)], &pose);
        assert_eq!(s.counts(5), (0, 0));
        assert!(s.target_mask(&m)[5]);
    }
}
