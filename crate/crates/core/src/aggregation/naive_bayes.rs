//! Two-class Gaussian naive Bayes over a fixed-length feature vector.
//!
//! Persisted layout (plain text, one record per line, `#` comments allowed):
//!
//! ```text
//! semfuse-nb 1
//! features <n>
//! class <label> prior <p>
//! mean <m_1> ... <m_n>
//! var <v_1> ... <v_n>
//! ```
//!
//! with one `class`/`mean`/`var` triple for label `false` then `true`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const VARIANCE_FLOOR: f64 = 1e-6;
const HEADER: &str = "semfuse-nb 1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianClass {
    pub prior: f64,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl GaussianClass {
    fn log_joint(&self, x: &[f64]) -> f64 {
        self.prior.ln()
            + x.iter()
                .zip(self.mean.iter().zip(&self.var))
                .map(|(xi, (m, v))| -0.5 * (2.0 * PI * v).ln() - (xi - m).powi(2) / (2.0 * v))
                .sum::<f64>()
    }
}

/// Separates correct target candidates (`true`) from false ones (`false`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NBClassifier {
    pub negative: GaussianClass,
    pub positive: GaussianClass,
}

fn fit_class(rows: &[&[f64]], prior: f64, n_features: usize) -> GaussianClass {
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..n_features)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n)
        .collect();
    let var = (0..n_features)
        .map(|j| {
            let v = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
            v.max(VARIANCE_FLOOR)
        })
        .collect();
    GaussianClass { prior, mean, var }
}

impl NBClassifier {
    /// Maximum-likelihood fit with population variances floored at
    /// [`VARIANCE_FLOOR`]. Both labels must be present.
    pub fn train(features: &[Vec<f64>], labels: &[bool]) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::Training("empty training set".into()));
        }
        if features.len() != labels.len() {
            return Err(Error::Training(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        let n_features = features[0].len();
        if n_features == 0 || features.iter().any(|f| f.len() != n_features) {
            return Err(Error::Training("feature rows must share a non-zero length".into()));
        }
        if features.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Training("non-finite feature value".into()));
        }
        let pos: Vec<&[f64]> = features
            .iter()
            .zip(labels)
            .filter(|(_, l)| **l)
            .map(|(f, _)| f.as_slice())
            .collect();
        let neg: Vec<&[f64]> = features
            .iter()
            .zip(labels)
            .filter(|(_, l)| !**l)
            .map(|(f, _)| f.as_slice())
            .collect();
        if pos.is_empty() || neg.is_empty() {
            return Err(Error::Training(format!(
                "need samples of both labels, got {} positive and {} negative",
                pos.len(),
                neg.len()
            )));
        }
        let n = features.len() as f64;
        Ok(NBClassifier {
            negative: fit_class(&neg, neg.len() as f64 / n, n_features),
            positive: fit_class(&pos, pos.len() as f64 / n, n_features),
        })
    }

    pub fn num_features(&self) -> usize {
        self.positive.mean.len()
    }

    /// Posterior probability of the positive label.
    pub fn posterior(&self, x: &[f64]) -> f64 {
        let lp = self.positive.log_joint(x);
        let ln = self.negative.log_joint(x);
        1.0 / (1.0 + (ln - lp).exp())
    }

    /// Positive when the positive joint likelihood exceeds the negative one.
    pub fn predict(&self, x: &[f64]) -> bool {
        self.positive.log_joint(x) > self.negative.log_joint(x)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{HEADER}\nfeatures {}\n", self.num_features());
        for (label, c) in [("false", &self.negative), ("true", &self.positive)] {
            let join = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ");
            let _ = writeln!(s, "class {label} prior {:e}", c.prior);
            let _ = writeln!(s, "mean {}", join(&c.mean));
            let _ = writeln!(s, "var {}", join(&c.var));
        }
        s
    }

    pub fn from_text(text: &str) -> std::result::Result<Self, String> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        if lines.next() != Some(HEADER) {
            return Err(format!("missing header {HEADER:?}"));
        }
        let n: usize = lines
            .next()
            .and_then(|l| l.strip_prefix("features "))
            .and_then(|v| v.trim().parse().ok())
            .ok_or("missing features line")?;
        let nums = |line: Option<&str>, key: &str| -> std::result::Result<Vec<f64>, String> {
            let rest = line
                .and_then(|l| l.strip_prefix(key))
                .ok_or_else(|| format!("expected {key:?} line"))?;
            rest.split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| format!("bad number {t:?}")))
                .collect()
        };
        let mut classes = Vec::new();
        for label in ["false", "true"] {
            let prior = nums(lines.next(), &format!("class {label} prior"))?;
            let mean = nums(lines.next(), "mean")?;
            let var = nums(lines.next(), "var")?;
            if prior.len() != 1 || mean.len() != n || var.len() != n {
                return Err(format!("wrong field count for class {label}"));
            }
            if var.iter().any(|v| !(*v >= VARIANCE_FLOOR)) || !(prior[0] > 0.0 && prior[0] < 1.0) {
                return Err(format!("invalid parameters for class {label}"));
            }
            classes.push(GaussianClass {
                prior: prior[0],
                mean,
                var,
            });
        }
        let positive = classes.pop().unwrap();
        let negative = classes.pop().unwrap();
        if ((negative.prior + positive.prior) - 1.0).abs() > 1e-9 {
            return Err("priors do not sum to one".into());
        }
        Ok(NBClassifier { negative, positive })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        NBClassifier::from_text(&text).map_err(|msg| Error::format(path, msg))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_features_classified_perfectly() {
        let x: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![i as f64, if i < 10 { 0.0 } else { 5.0 }])
            .collect();
        let y: Vec<bool> = (0..20).map(|i| i >= 10).collect();
        let clf = NBClassifier::train(&x, &y).unwrap();
        assert!(x.iter().zip(&y).all(|(f, l)| clf.predict(f) == *l));
    }

    #[test]
    fn two_point_posterior_by_hand() {
        // One sample per class: variances collapse to the floor.
        let clf = NBClassifier::train(&[vec![0.0], vec![0.002]], &[false, true]).unwrap();
        assert_eq!(clf.positive.var, vec![VARIANCE_FLOOR]);
        assert_eq!(clf.positive.prior, 0.5);
        let x = 0.0012;
        let v = 1e-6;
        let gauss = |m: f64| (-(x - m) * (x - m) / (2.0 * v)).exp() / (2.0 * PI * v).sqrt();
        let expect = 0.5 * gauss(0.002) / (0.5 * gauss(0.002) + 0.5 * gauss(0.0));
        assert!((clf.posterior(&[x]) - expect).abs() < 1e-9);
        assert!(clf.predict(&[x]));
    }

    #[test]
    fn posterior_matches_direct_density_formula() {
        let x = vec![vec![1.0, 2.0], vec![2.0, 1.0], vec![5.0, 5.0], vec![6.0, 7.0], vec![5.0, 6.0]];
        let y = vec![false, false, true, true, true];
        let clf = NBClassifier::train(&x, &y).unwrap();
        assert!((clf.negative.mean[0] - 1.5).abs() < 1e-12);
        assert!((clf.negative.var[0] - 0.25).abs() < 1e-12);
        let q = [3.0, 3.5];
        let dens = |c: &GaussianClass| {
            c.prior
                * q.iter()
                    .zip(c.mean.iter().zip(&c.var))
                    .map(|(xi, (m, v))| (-(xi - m).powi(2) / (2.0 * v)).exp() / (2.0 * PI * v).sqrt())
                    .product::<f64>()
        };
        let (p, n) = (dens(&clf.positive), dens(&clf.negative));
        assert!((clf.posterior(&q) - p / (p + n)).abs() < 1e-9);
    }

    #[test]
    fn empty_or_one_sided_training_fails() {
        assert!(NBClassifier::train(&[], &[]).is_err());
        assert!(NBClassifier::train(&[vec![1.0]], &[true]).is_err());
    }

    #[test]
    fn text_round_trip() {
        let clf = NBClassifier::train(
            &[vec![0.1, 3.0], vec![0.4, 1.0], vec![2.0, 2.5]],
            &[false, true, true],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nb.txt");
        clf.save(&path).unwrap();
        assert_eq!(NBClassifier::load(&path).unwrap(), clf);
        std::fs::write(&path, "semfuse-nb 1\nfeatures 2\n").unwrap();
        assert!(NBClassifier::load(&path).is_err());
    }
}
