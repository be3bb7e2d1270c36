//! Calibrated class probabilities and uncertainties from raw logits.
//!
//! Covers temperature scaling (fit and apply), the normalized-entropy
//! uncertainty used throughout the map, and the ECE / uncertainty-ECE
//! evaluation suite with reliability tables.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest probability admitted before taking a logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// Bounds of the temperature search interval.
pub const T_MIN: f64 = 0.05;
pub const T_MAX: f64 = 20.0;

/// Termination width of the golden-section search.
pub const FIT_TOLERANCE: f64 = 1e-3;

pub const DEFAULT_BINS: usize = 10;

/// Raw class scores for one pixel / cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Logits(Vec<f64>);

impl Logits {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "logits need at least 2 classes, got {}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite logit {v}")));
        }
        Ok(Logits(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn num_classes(&self) -> usize {
        self.0.len()
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

/// A probability distribution over the semantic classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    /// Validates that entries lie in [0, 1] and sum to one within 1e-9.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("empty probability vector".into()));
        }
        if values
            .iter()
            .any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0 + 1e-12)
        {
            return Err(Error::InvalidInput(format!(
                "probability entries out of [0,1]: {values:?}"
            )));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(ProbVector(values))
    }

    /// Builds a vector from values known to be a distribution, renormalizing
    /// away floating-point drift.
    pub(crate) fn from_normalized(mut values: Vec<f64>) -> Self {
        let sum: f64 = values.iter().sum();
        if sum > 0.0 && (sum - 1.0).abs() > 0.0 {
            values.iter_mut().for_each(|v| *v /= sum);
        }
        ProbVector(values)
    }

    pub fn uniform(num_classes: usize) -> Self {
        ProbVector(vec![1.0 / num_classes as f64; num_classes])
    }

    pub fn one_hot(num_classes: usize, class: usize) -> Self {
        let mut v = vec![0.0; num_classes];
        v[class] = 1.0;
        ProbVector(v)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn num_classes(&self) -> usize {
        self.0.len()
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn max_prob(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }

    pub fn entropy(&self) -> f64 {
        normalized_entropy(self)
    }
}

/// Positive logit scaling factor.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Temperature(f64);

impl Temperature {
    pub const IDENTITY: Temperature = Temperature(1.0);

    pub fn new(t: f64) -> Result<Self> {
        if !(t.is_finite() && t > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "temperature must be positive, got {t}"
            )));
        }
        Ok(Temperature(t))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Index of the largest entry; the first one wins on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Max-subtracted softmax.
pub fn softmax(logits: &Logits) -> ProbVector {
    softmax_slice(logits.values())
}

pub(crate) fn softmax_slice(values: &[f64]) -> ProbVector {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    ProbVector(exps.into_iter().map(|e| e / sum).collect())
}

/// Divides every logit by `t`.
pub fn scale_logits(logits: &Logits, t: Temperature) -> Logits {
    Logits(logits.values().iter().map(|v| v / t.value()).collect())
}

/// Checked variant of [`scale_logits`] for raw temperature values.
pub fn scale_logits_raw(logits: &Logits, t: f64) -> Result<Logits> {
    Ok(scale_logits(logits, Temperature::new(t)?))
}

/// Calibrated probabilities: `softmax(l / t)`.
pub fn calibrated_probs(logits: &Logits, t: Temperature) -> ProbVector {
    let inv = 1.0 / t.value();
    let scaled: Vec<f64> = logits.values().iter().map(|v| v * inv).collect();
    softmax_slice(&scaled)
}

/// Shannon entropy divided by `ln C`, in [0, 1]; `0 ln 0 = 0`.
pub fn normalized_entropy(p: &ProbVector) -> f64 {
    entropy_of(p.values())
}

pub(crate) fn entropy_of(p: &[f64]) -> f64 {
    let c = p.len();
    if c < 2 {
        return 0.0;
    }
    let h: f64 = p
        .iter()
        .filter(|v| **v > 0.0)
        .map(|v| -v * v.ln())
        .sum();
    (h / (c as f64).ln()).clamp(0.0, 1.0)
}

/// A labeled logit sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledLogits {
    pub logits: Logits,
    pub label: usize,
}

/// Mean negative log-likelihood of the true labels under `softmax(l / t)`.
pub fn mean_nll(dataset: &[LabeledLogits], t: f64) -> f64 {
    let inv = 1.0 / t;
    let total: f64 = dataset
        .iter()
        .map(|s| {
            let v = s.logits.values();
            let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max) * inv;
            let lse = v.iter().map(|x| (x * inv - max).exp()).sum::<f64>().ln() + max;
            let log_p = v[s.label] * inv - lse;
            -log_p.max(PROB_FLOOR.ln())
        })
        .sum();
    total / dataset.len() as f64
}

fn validate_dataset(dataset: &[LabeledLogits]) -> Result<()> {
    let first = dataset
        .first()
        .ok_or_else(|| Error::InvalidInput("empty calibration dataset".into()))?;
    let c = first.logits.num_classes();
    for s in dataset {
        if s.logits.num_classes() != c {
            return Err(Error::InvalidInput(format!(
                "mixed class counts {} and {c}",
                s.logits.num_classes()
            )));
        }
        if s.label >= c {
            return Err(Error::InvalidInput(format!(
                "label {} out of range for {c} classes",
                s.label
            )));
        }
    }
    Ok(())
}

/// Fits the temperature minimizing mean NLL by golden-section search on
/// `[T_MIN, T_MAX]`.
///
/// The interval endpoints and the identity temperature are also evaluated, so
/// the result is never worse than leaving the logits unscaled.
pub fn fit_temperature(dataset: &[LabeledLogits]) -> Result<Temperature> {
    validate_dataset(dataset)?;
    let nll = |t: f64| mean_nll(dataset, t);

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (T_MIN, T_MAX);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = nll(c);
    let mut fd = nll(d);
    while b - a > FIT_TOLERANCE {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = nll(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = nll(d);
        }
    }
    let mid = 0.5 * (a + b);
    let mut best = (mid, nll(mid));
    // Bounds and the identity win ties, so monotone objectives land exactly
    // on a bound.
    for t in [T_MIN, T_MAX, 1.0] {
        let f = nll(t);
        if f <= best.1 {
            best = (t, f);
        }
    }
    Temperature::new(best.0)
}

/// One reliability-table bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub lower: f64,
    pub upper: f64,
    /// Mean confidence of the samples in the bin (bin center when empty).
    pub confidence_mean: f64,
    pub accuracy: f64,
    pub count: usize,
}

/// Which quantity is treated as the prediction's confidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfidenceKind {
    /// Maximum class probability (ECE).
    MaxProbability,
    /// `1 - normalized_entropy` (uECE).
    OneMinusUncertainty,
}

impl ConfidenceKind {
    fn of(self, p: &ProbVector) -> f64 {
        match self {
            ConfidenceKind::MaxProbability => p.max_prob(),
            ConfidenceKind::OneMinusUncertainty => 1.0 - normalized_entropy(p),
        }
    }
}

fn check_lengths(preds: &[ProbVector], labels: &[usize], n_bins: usize) -> Result<()> {
    if preds.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} predictions but {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::InvalidInput("no predictions".into()));
    }
    if n_bins == 0 {
        return Err(Error::InvalidParameter("n_bins must be >= 1".into()));
    }
    Ok(())
}

/// Equal-width reliability bins over `[0, 1]`.
pub fn reliability_bins(
    preds: &[ProbVector],
    labels: &[usize],
    n_bins: usize,
    kind: ConfidenceKind,
) -> Result<Vec<ReliabilityBin>> {
    check_lengths(preds, labels, n_bins)?;
    let mut conf_sum = vec![0.0; n_bins];
    let mut correct = vec![0usize; n_bins];
    let mut count = vec![0usize; n_bins];
    for (p, &label) in preds.iter().zip(labels) {
        let conf = kind.of(p).clamp(0.0, 1.0);
        let b = ((conf * n_bins as f64).floor() as usize).min(n_bins - 1);
        conf_sum[b] += conf;
        count[b] += 1;
        if p.argmax() == label {
            correct[b] += 1;
        }
    }
    let width = 1.0 / n_bins as f64;
    Ok((0..n_bins)
        .map(|b| {
            let lower = b as f64 * width;
            let upper = (b + 1) as f64 * width;
            let (confidence_mean, accuracy) = if count[b] == 0 {
                (0.5 * (lower + upper), 0.0)
            } else {
                let n = count[b] as f64;
                (conf_sum[b] / n, correct[b] as f64 / n)
            };
            ReliabilityBin {
                lower,
                upper,
                confidence_mean,
                accuracy,
                count: count[b],
            }
        })
        .collect())
}

fn ece_from_bins(bins: &[ReliabilityBin]) -> f64 {
    let n: usize = bins.iter().map(|b| b.count).sum();
    bins.iter()
        .filter(|b| b.count > 0)
        .map(|b| b.count as f64 / n as f64 * (b.accuracy - b.confidence_mean).abs())
        .sum()
}

/// Expected calibration error over max-probability confidence.
pub fn expected_calibration_error(
    preds: &[ProbVector],
    labels: &[usize],
    n_bins: usize,
) -> Result<f64> {
    let bins = reliability_bins(preds, labels, n_bins, ConfidenceKind::MaxProbability)?;
    Ok(ece_from_bins(&bins))
}

/// Expected calibration error with confidence `1 - normalized_entropy`.
pub fn uncertainty_ece(preds: &[ProbVector], labels: &[usize], n_bins: usize) -> Result<f64> {
    let bins = reliability_bins(preds, labels, n_bins, ConfidenceKind::OneMinusUncertainty)?;
    Ok(ece_from_bins(&bins))
}

/// ECE, uECE and both reliability tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub ece: f64,
    pub uece: f64,
    pub n_bins: usize,
    pub bins: Vec<ReliabilityBin>,
    pub uncertainty_bins: Vec<ReliabilityBin>,
}

impl CalibrationReport {
    /// Aligned plain-text table of both binning modes.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "ECE  {:.4}\nuECE {:.4}\n{:>13} | {:>9} {:>9} {:>7} | {:>9} {:>9} {:>7}\n",
            self.ece, self.uece, "bin", "conf", "acc", "count", "u-conf", "u-acc", "u-count"
        );
        for (b, u) in self.bins.iter().zip(&self.uncertainty_bins) {
            out.push_str(&format!(
                "[{:.2}, {:.2}) | {:>9.4} {:>9.4} {:>7} | {:>9.4} {:>9.4} {:>7}\n",
                b.lower, b.upper, b.confidence_mean, b.accuracy, b.count, u.confidence_mean,
                u.accuracy, u.count
            ));
        }
        out
    }
}

pub fn reliability_diagram(
    preds: &[ProbVector],
    labels: &[usize],
    n_bins: usize,
) -> Result<CalibrationReport> {
    let bins = reliability_bins(preds, labels, n_bins, ConfidenceKind::MaxProbability)?;
    let uncertainty_bins =
        reliability_bins(preds, labels, n_bins, ConfidenceKind::OneMinusUncertainty)?;
    Ok(CalibrationReport {
        ece: ece_from_bins(&bins),
        uece: ece_from_bins(&uncertainty_bins),
        n_bins,
        bins,
        uncertainty_bins,
    })
}

/// Applies `t` to every sample and returns (probabilities, labels).
pub fn apply_temperature(dataset: &[LabeledLogits], t: Temperature) -> (Vec<ProbVector>, Vec<usize>) {
    dataset
        .iter()
        .map(|s| (calibrated_probs(&s.logits, t), s.label))
        .unzip()
}
