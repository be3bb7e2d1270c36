//! Comparison tables and ablation deltas over metric rows.

use crate::error::{Error, Result};
use crate::metrics::MetricsRow;
use crate::policy::PolicyKind;

/// Tolerance for the SR + FPR + FNR = 100 check.
const TOTAL_TOL: f64 = 1e-6;

/// Fails if any row's outcome shares do not add up to 100 %.
pub fn check_totals(rows: &[MetricsRow]) -> Result<()> {
    for r in rows {
        let total = r.sr + r.fpr + r.fnr;
        if (total - 100.0).abs() > TOTAL_TOL {
            return Err(Error::InvalidInput(format!(
                "{} / {}: SR + FPR + FNR = {total}",
                r.strategy, r.policy
            )));
        }
    }
    Ok(())
}

/// Side-by-side SR of two result sets with the difference `b - a`. Rows
/// missing from `b` show `-`.
pub fn comparison_table(a: &[MetricsRow], b: &[MetricsRow]) -> String {
    let w = a.iter().map(|r| r.strategy.len()).max().unwrap_or(8).max(8);
    let mut out = format!(
        "{:<w$}  {:<13}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}\n",
        "strategy", "policy", "SR(a)", "SR(b)", "dSR", "FPR(a)", "FPR(b)"
    );
    for r in a {
        let other = b.iter().find(|o| o.strategy == r.strategy && o.policy == r.policy);
        let (sr_b, d, fpr_b) = match other {
            Some(o) => (
                format!("{:.1}", o.sr),
                format!("{:+.1}", o.sr - r.sr),
                format!("{:.1}", o.fpr),
            ),
            None => ("-".into(), "-".into(), "-".into()),
        };
        out.push_str(&format!(
            "{:<w$}  {:<13}  {:>6.1}  {:>6}  {:>6}  {:>6.1}  {:>6}\n",
            r.strategy,
            r.policy.as_str(),
            r.sr,
            sr_b,
            d,
            r.fpr,
            fpr_b
        ));
    }
    out
}

/// Which switch an ablation toggles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Toggle {
    Calibration,
    UncertaintyFound,
}

impl Toggle {
    fn as_str(self) -> &'static str {
        match self {
            Toggle::Calibration => "calibration",
            Toggle::UncertaintyFound => "uncertainty-found",
        }
    }
}

/// A pair of rows that differ in exactly one switch.
#[derive(Debug, Clone, PartialEq)]
pub struct Ablation {
    pub toggle: Toggle,
    pub policy: PolicyKind,
    pub off: String,
    pub on: String,
    pub d_sr: f64,
    pub d_fpr: f64,
    pub d_fnr: f64,
}

fn parse_label(label: &str) -> Option<(&str, bool, bool)> {
    let mut parts = label.split('+');
    let kind = parts.next()?;
    let (mut cal, mut unc) = (false, false);
    for p in parts {
        match p {
            "cal" => cal = true,
            "unc" => unc = true,
            _ => return None,
        }
    }
    Some((kind, cal, unc))
}

/// Pairs rows whose labels differ only in `+cal` or only in `+unc`.
pub fn ablations(rows: &[MetricsRow]) -> Vec<Ablation> {
    let mut out = Vec::new();
    for off in rows {
        let Some((kind, cal, unc)) = parse_label(&off.strategy) else {
            continue;
        };
        for toggle in [Toggle::Calibration, Toggle::UncertaintyFound] {
            let (c2, u2) = match toggle {
                Toggle::Calibration if !cal => (true, unc),
                Toggle::UncertaintyFound if !unc => (cal, true),
                _ => continue,
            };
            let on = rows.iter().find(|r| {
                r.policy == off.policy && parse_label(&r.strategy) == Some((kind, c2, u2))
            });
            if let Some(on) = on {
                out.push(Ablation {
                    toggle,
                    policy: off.policy,
                    off: off.strategy.clone(),
                    on: on.strategy.clone(),
                    d_sr: on.sr - off.sr,
                    d_fpr: on.fpr - off.fpr,
                    d_fnr: on.fnr - off.fnr,
                });
            }
        }
    }
    out
}

pub fn ablation_table(ablations: &[Ablation]) -> String {
    let w = ablations.iter().map(|a| a.off.len().max(a.on.len())).max().unwrap_or(8).max(8);
    let mut out = format!(
        "{:<17}  {:<13}  {:<w$}  {:<w$}  {:>6}  {:>6}  {:>6}\n",
        "toggle", "policy", "off", "on", "dSR", "dFPR", "dFNR"
    );
    for a in ablations {
        out.push_str(&format!(
            "{:<17}  {:<13}  {:<w$}  {:<w$}  {:>+6.1}  {:>+6.1}  {:>+6.1}\n",
            a.toggle.as_str(),
            a.policy.as_str(),
            a.off,
            a.on,
            a.d_sr,
            a.d_fpr,
            a.d_fnr
        ));
    }
    out
}
