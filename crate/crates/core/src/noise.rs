//! Synthetic, distance-dependent, overconfident perception.
//!
//! An observation of a cell at distance `d` is wrong with probability
//! `ε(d) = min(1, ε0 + εd · d / max_range)`. The emitted logits are
//! `k · ln q`, where `q` is a calibrated distribution peaked on the observed
//! class, so `softmax(logits)` is overconfident by exactly temperature `1/k`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::calibration::{Logits, PROB_FLOOR};
use crate::error::{Error, Result};

/// Probability mass placed on the observed class of the calibrated vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ConfidenceRepr", into = "ConfidenceRepr")]
pub enum TrueConfidence {
    /// Constant mass `c0` on the observed class.
    Fixed(f64),
    /// Mass `1 - ε(d)`: the vector's confidence equals the true accuracy at
    /// that distance.
    DistanceMatched,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ConfidenceRepr {
    Fixed(f64),
    Named(String),
}

impl TryFrom<ConfidenceRepr> for TrueConfidence {
    type Error = String;

    fn try_from(r: ConfidenceRepr) -> std::result::Result<Self, String> {
        match r {
            ConfidenceRepr::Fixed(c) => Ok(TrueConfidence::Fixed(c)),
            ConfidenceRepr::Named(s) if s == "distance_matched" => {
                Ok(TrueConfidence::DistanceMatched)
            }
            ConfidenceRepr::Named(s) => Err(format!(
                "true_confidence must be a number or \"distance_matched\", got {s:?}"
            )),
        }
    }
}

impl From<TrueConfidence> for ConfidenceRepr {
    fn from(c: TrueConfidence) -> Self {
        match c {
            TrueConfidence::Fixed(v) => ConfidenceRepr::Fixed(v),
            TrueConfidence::DistanceMatched => ConfidenceRepr::Named("distance_matched".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    /// ε0: error probability at distance 0.
    pub base_error: f64,
    /// εd: additional error probability at `max_range_m`.
    pub distance_error_slope: f64,
    pub max_range_m: f64,
    /// Row-stochastic C×C confusion matrix; `None` means uniform off-diagonal.
    pub confusion: Option<Vec<Vec<f64>>>,
    pub true_confidence: TrueConfidence,
    /// k ≥ 1: logits are `k · ln q`.
    pub overconfidence: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            base_error: 0.1,
            distance_error_slope: 0.3,
            max_range_m: 5.0,
            confusion: None,
            true_confidence: TrueConfidence::DistanceMatched,
            overconfidence: 3.0,
        }
    }
}

impl NoiseModel {
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(0.0..=1.0).contains(&self.base_error)
            || !(0.0..=1.0).contains(&self.distance_error_slope)
            || self.base_error + self.distance_error_slope > 1.0 + 1e-12
        {
            return bad(format!(
                "need 0 <= ε0, εd and ε0 + εd <= 1, got {} and {}",
                self.base_error, self.distance_error_slope
            ));
        }
        if !(self.max_range_m > 0.0) {
            return bad("max_range_m must be positive".into());
        }
        if !(self.overconfidence >= 1.0) {
            return bad(format!("overconfidence must be >= 1, got {}", self.overconfidence));
        }
        if let TrueConfidence::Fixed(c0) = self.true_confidence {
            let lo = 1.0 / num_classes as f64;
            if !(c0 > lo && c0 < 1.0) {
                return bad(format!("true_confidence {c0} outside (1/C, 1)"));
            }
        }
        if let Some(m) = &self.confusion {
            if m.len() != num_classes || m.iter().any(|r| r.len() != num_classes) {
                return bad(format!("confusion matrix must be {num_classes}x{num_classes}"));
            }
            for (i, row) in m.iter().enumerate() {
                let s: f64 = row.iter().sum();
                if row.iter().any(|v| *v < 0.0) || (s - 1.0).abs() > 1e-9 {
                    return bad(format!("confusion row {i} is not stochastic"));
                }
                let off: f64 = s - row[i];
                if off <= 0.0 {
                    return bad(format!("confusion row {i} has no off-diagonal mass"));
                }
            }
        }
        Ok(())
    }

    /// ε(d).
    pub fn error_probability(&self, distance_m: f64) -> f64 {
        (self.base_error + self.distance_error_slope * distance_m / self.max_range_m).min(1.0)
    }

    /// Mass on the observed class at distance `d`.
    pub fn confidence(&self, distance_m: f64, num_classes: usize) -> f64 {
        match self.true_confidence {
            TrueConfidence::Fixed(c0) => c0,
            TrueConfidence::DistanceMatched => {
                (1.0 - self.error_probability(distance_m)).max(1.0 / num_classes as f64)
            }
        }
    }

    /// Calibrated vector peaked at `observed`.
    pub fn calibrated_vector(&self, observed: usize, distance_m: f64, num_classes: usize) -> Vec<f64> {
        let c = self.confidence(distance_m, num_classes);
        let rest = (1.0 - c) / (num_classes - 1) as f64;
        let mut q = vec![rest; num_classes];
        q[observed] = c;
        q
    }

    fn sample_wrong_class<R: Rng + ?Sized>(&self, true_class: usize, c: usize, rng: &mut R) -> usize {
        match &self.confusion {
            None => {
                let j = rng.random_range(0..c - 1);
                if j >= true_class {
                    j + 1
                } else {
                    j
                }
            }
            Some(m) => {
                let row = &m[true_class];
                let off: f64 = row.iter().enumerate().filter(|(j, _)| *j != true_class).map(|(_, v)| v).sum();
                let mut u = rng.random::<f64>() * off;
                let mut last = None;
                for (j, v) in row.iter().enumerate() {
                    if j == true_class || *v <= 0.0 {
                        continue;
                    }
                    last = Some(j);
                    if u < *v {
                        return j;
                    }
                    u -= v;
                }
                last.expect("validated row has off-diagonal mass")
            }
        }
    }
}

/// Draws the observed class and returns miscalibrated logits for it.
pub fn generate_logits<R: Rng + ?Sized>(
    true_class: usize,
    distance_m: f64,
    num_classes: usize,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<Logits> {
    if true_class >= num_classes {
        return Err(Error::InvalidInput(format!(
            "class {true_class} out of range for {num_classes} classes"
        )));
    }
    if !(0.0..=noise.max_range_m + 1e-9).contains(&distance_m) {
        return Err(Error::InvalidInput(format!(
            "distance {distance_m} outside sensor range"
        )));
    }
    let observed = if rng.random::<f64>() < noise.error_probability(distance_m) {
        noise.sample_wrong_class(true_class, num_classes, rng)
    } else {
        true_class
    };
    let q = noise.calibrated_vector(observed, distance_m, num_classes);
    let k = noise.overconfidence;
    Logits::new(q.iter().map(|v| k * v.max(PROB_FLOOR).ln()).collect())
}

/// Near-one-hot logits as produced by a ground-truth semantic camera.
pub fn ground_truth_logits(true_class: usize, num_classes: usize) -> Result<Logits> {
    if true_class >= num_classes {
        return Err(Error::InvalidInput(format!(
            "class {true_class} out of range for {num_classes} classes"
        )));
    }
    let mut v = vec![PROB_FLOOR.ln(); num_classes];
    v[true_class] = 0.0;
    Logits::new(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::{normalized_entropy, softmax};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn noise_free_calibrated_case() {
        let noise = NoiseModel {
            base_error: 0.0,
            distance_error_slope: 0.0,
            overconfidence: 1.0,
            true_confidence: TrueConfidence::Fixed(0.7),
            ..NoiseModel::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for class in 0..4 {
            let l = generate_logits(class, 0.0, 4, &noise, &mut rng).unwrap();
            let p = softmax(&l);
            assert_eq!(p.argmax(), class);
            assert!((p.values()[class] - 0.7).abs() < 1e-12);
            assert!((p.values()[(class + 1) % 4] - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn overconfident_peak_matches_hand_value() {
        let noise = NoiseModel {
            base_error: 0.0,
            distance_error_slope: 0.0,
            overconfidence: 3.0,
            true_confidence: TrueConfidence::Fixed(0.7),
            ..NoiseModel::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = softmax(&generate_logits(1, 1.0, 4, &noise, &mut rng).unwrap());
        let expected = 0.343 / (0.343 + 3.0 * 0.001);
        assert!((p.values()[1] - expected).abs() < 1e-12);
        assert!((expected - 0.9913).abs() < 1e-4);
    }

    #[test]
    fn ground_truth_logits_are_near_one_hot() {
        let p = softmax(&ground_truth_logits(2, 4).unwrap());
        assert_eq!(p.argmax(), 2);
        assert!(p.values()[2] > 1.0 - 1e-9);
        assert!(normalized_entropy(&p) < 1e-6);
        assert!(ground_truth_logits(4, 4).is_err());
    }

    #[test]
    fn out_of_range_inputs_rejected() {
        let noise = NoiseModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(generate_logits(6, 1.0, 6, &noise, &mut rng).is_err());
        assert!(generate_logits(1, 50.0, 6, &noise, &mut rng).is_err());
    }

    #[test]
    fn validation_catches_bad_models() {
        let mut n = NoiseModel::default();
        n.base_error = 0.8;
        n.distance_error_slope = 0.5;
        assert!(n.validate(6).is_err());
        let mut n = NoiseModel::default();
        n.confusion = Some(vec![vec![0.5, 0.5], vec![0.2, 0.9]]);
        assert!(n.validate(2).is_err());
        let mut n = NoiseModel::default();
        n.true_confidence = TrueConfidence::Fixed(0.1);
        assert!(n.validate(4).is_err());
        assert!(NoiseModel::default().validate(6).is_ok());
    }

    #[test]
    fn structured_confusion_only_yields_allowed_classes() {
        let noise = NoiseModel {
            base_error: 1.0,
            distance_error_slope: 0.0,
            true_confidence: TrueConfidence::Fixed(0.8),
            confusion: Some(vec![
                vec![0.5, 0.0, 0.5],
                vec![0.0, 0.5, 0.5],
                vec![0.0, 0.5, 0.5],
            ]),
            ..NoiseModel::default()
        };
        noise.validate(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            assert_eq!(generate_logits(1, 0.0, 3, &noise, &mut rng).unwrap().argmax(), 2);
            assert_eq!(generate_logits(0, 0.0, 3, &noise, &mut rng).unwrap().argmax(), 2);
        }
    }

    #[test]
    fn true_confidence_serde_forms() {
        #[derive(Deserialize)]
        struct W {
            c: TrueConfidence,
        }
        let w: W = toml::from_str("c = 0.8").unwrap();
        assert_eq!(w.c, TrueConfidence::Fixed(0.8));
        let w: W = toml::from_str("c = \"distance_matched\"").unwrap();
        assert_eq!(w.c, TrueConfidence::DistanceMatched);
        assert!(toml::from_str::<W>("c = \"bogus\"").is_err());
    }
}
