//! Episode records and the aggregate benchmark table.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphology::{count_components, dilate};
use crate::policy::PolicyKind;

/// Default dilation radius, in cells, for detection false positives.
pub const DEFAULT_DILATION_CELLS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    FoundFp,
    FoundFn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub episode_id: u64,
    pub scene_id: usize,
    pub start_index: usize,
    pub target_class: usize,
    pub seed: u64,
    pub strategy: String,
    pub policy: PolicyKind,
    pub success: bool,
    pub found_fp: bool,
    pub found_fn: bool,
    /// Step of the first found decision.
    pub found_step: Option<usize>,
    pub found_cell: Option<usize>,
    /// Connected components of dilated target predictions outside every
    /// ground-truth box.
    pub det_fp_count: usize,
    /// Box-steps in which a box already seen by a perfect camera showed no
    /// target cell.
    pub det_fn_count: usize,
    pub steps_used: usize,
    pub path_length_m: f64,
    pub shortest_length_m: f64,
    /// Digest of the observation stream.
    pub stream_digest: u64,
}

impl EpisodeResult {
    pub fn outcome(&self) -> Outcome {
        if self.success {
            Outcome::Success
        } else if self.found_fp {
            Outcome::FoundFp
        } else {
            Outcome::FoundFn
        }
    }

    /// `l / max(p, l)` for successes, 0 otherwise.
    pub fn spl_term(&self) -> f64 {
        if !self.success {
            return 0.0;
        }
        let denom = self.path_length_m.max(self.shortest_length_m);
        if denom <= 0.0 {
            1.0
        } else {
            self.shortest_length_m / denom
        }
    }
}

/// Counts detection false positives over an episode's union of target
/// predictions outside ground-truth boxes.
pub fn count_detection_fp(outside_union: &[bool], width: usize, height: usize, dilation_cells: usize) -> usize {
    count_components(&dilate(outside_union, width, height, dilation_cells), width, height)
}

pub fn spl(results: &[EpisodeResult]) -> f64 {
    if results.is_empty() {
        return 0.0;
    }
    results.iter().map(EpisodeResult::spl_term).sum::<f64>() / results.len() as f64
}

/// One row of the benchmark table; rates in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub strategy: String,
    pub policy: PolicyKind,
    pub episodes: usize,
    pub sr: f64,
    pub fpr: f64,
    pub fnr: f64,
    pub fp_mean: f64,
    pub fn_mean: f64,
    pub spl: f64,
}

pub fn aggregate_metrics(strategy: &str, policy: PolicyKind, results: &[EpisodeResult]) -> Result<MetricsRow> {
    if results.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no episode results for {strategy} / {policy}"
        )));
    }
    let n = results.len() as f64;
    let share = |f: fn(&EpisodeResult) -> bool| 100.0 * results.iter().filter(|r| f(r)).count() as f64 / n;
    Ok(MetricsRow {
        strategy: strategy.to_string(),
        policy,
        episodes: results.len(),
        sr: share(|r| r.success),
        fpr: share(|r| r.found_fp),
        fnr: share(|r| r.found_fn),
        fp_mean: results.iter().map(|r| r.det_fp_count as f64).sum::<f64>() / n,
        fn_mean: results.iter().map(|r| r.det_fn_count as f64).sum::<f64>() / n,
        spl: spl(results),
    })
}

/// Groups results by (strategy, policy) in first-seen order and aggregates
/// each group.
pub fn aggregate_all(results: &[EpisodeResult]) -> Result<Vec<MetricsRow>> {
    if results.is_empty() {
        return Err(Error::InvalidInput("no episode results".into()));
    }
    let mut keys: Vec<(String, PolicyKind)> = Vec::new();
    for r in results {
        let k = (r.strategy.clone(), r.policy);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.iter()
        .map(|(s, p)| {
            let group: Vec<EpisodeResult> = results
                .iter()
                .filter(|r| &r.strategy == s && r.policy == *p)
                .cloned()
                .collect();
            aggregate_metrics(s, *p, &group)
        })
        .collect()
}

const HEADER: [&str; 9] = ["strategy", "policy", "episodes", "SR", "FPR", "FNR", "#FP", "#FN", "SPL"];

fn row_cells(r: &MetricsRow) -> [String; 9] {
    [
        r.strategy.clone(),
        r.policy.to_string(),
        r.episodes.to_string(),
        format!("{:.1}", r.sr),
        format!("{:.1}", r.fpr),
        format!("{:.1}", r.fnr),
        format!("{:.1}", r.fp_mean),
        format!("{:.1}", r.fn_mean),
        format!("{:.1}", 100.0 * r.spl),
    ]
}

/// Comma-separated table, one decimal place; SPL in percent.
pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut s = HEADER.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&row_cells(r).join(","));
        s.push('\n');
    }
    s
}

/// Column-aligned plain-text table.
pub fn metrics_text(rows: &[MetricsRow]) -> String {
    let cells: Vec<[String; 9]> = rows.iter().map(row_cells).collect();
    let mut widths: Vec<usize> = HEADER.iter().map(|h| h.len()).collect();
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let mut line = |items: Vec<&str>| {
        let parts: Vec<String> = items
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i < 2 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(HEADER.to_vec());
    for row in &cells {
        line(row.iter().map(String::as_str).collect());
    }
    out
}

pub fn write_results_jsonl(path: &Path, results: &[EpisodeResult]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for r in results {
        let line = serde_json::to_string(r).map_err(|e| Error::format(path, e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_results_jsonl(path: &Path) -> Result<Vec<EpisodeResult>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let r = serde_json::from_str(&line)
            .map_err(|e| Error::format(path, format!("line {}: {e}", i + 1)))?;
        out.push(r);
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn result(outcome: Outcome, p: f64, l: f64) -> EpisodeResult {
        EpisodeResult {
            episode_id: 0,
            scene_id: 0,
            start_index: 0,
            target_class: 2,
            seed: 0,
            strategy: "s".into(),
            policy: PolicyKind::ShortestPath,
            success: outcome == Outcome::Success,
            found_fp: outcome == Outcome::FoundFp,
            found_fn: outcome == Outcome::FoundFn,
            found_step: None,
            found_cell: None,
            det_fp_count: 1,
            det_fn_count: 3,
            steps_used: 10,
            path_length_m: p,
            shortest_length_m: l,
            stream_digest: 0,
        }
    }

    #[test]
    fn spl_examples() {
        assert_eq!(spl(&[result(Outcome::FoundFn, 3.0, 2.0)]), 0.0);
        assert_eq!(spl(&[result(Outcome::Success, 2.0, 2.0)]), 1.0);
        assert_eq!(spl(&[result(Outcome::Success, 4.0, 2.0)]), 0.5);
    }

    #[test]
    fn rates_partition() {
        let mut rs = vec![result(Outcome::Success, 1.0, 1.0); 7];
        rs.extend(vec![result(Outcome::FoundFp, 1.0, 1.0); 2]);
        rs.push(result(Outcome::FoundFn, 1.0, 1.0));
        let row = aggregate_metrics("s", PolicyKind::ShortestPath, &rs).unwrap();
        assert_eq!((row.sr, row.fpr, row.fnr), (70.0, 20.0, 10.0));
        assert_eq!(row.fn_mean, 3.0);
        assert!(aggregate_metrics("s", PolicyKind::ShortestPath, &[]).is_err());
    }

    #[test]
    fn detection_fp_examples() {
        let mut m = vec![false; 40];
        assert_eq!(count_detection_fp(&m, 20, 2, 2), 0);
        m[0] = true;
        m[2] = true;
        assert_eq!(count_detection_fp(&m, 20, 2, 2), 1);
        m[2] = false;
        m[11] = true;
        assert_eq!(count_detection_fp(&m, 20, 2, 2), 2);
    }

    #[test]
    fn tables_round_to_one_decimal() {
        let row = aggregate_metrics(
            "latest",
            PolicyKind::ShortestPath,
            &[result(Outcome::Success, 3.0, 2.0), result(Outcome::FoundFp, 1.0, 1.0), result(Outcome::FoundFn, 1.0, 1.0)],
        )
        .unwrap();
        let csv = metrics_csv(&[row.clone()]);
        assert_eq!(csv.lines().nth(1).unwrap(), "latest,shortest_path,3,33.3,33.3,33.3,1.0,3.0,22.2");
        let text = metrics_text(&[row]);
        assert!(text.starts_with("strategy"));
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        let rs = vec![result(Outcome::Success, 3.0, 2.0), result(Outcome::FoundFn, 1.0, 1.0)];
        write_results_jsonl(&path, &rs).unwrap();
        assert_eq!(read_results_jsonl(&path).unwrap(), rs);
    }
}
