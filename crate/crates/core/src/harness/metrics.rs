//! CSV emission and the comparison summary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{ExperimentResult, HarnessError};
use crate::strategies::{aggregate_repeats, AggregateRow, RoundMetrics, StrategyKind, METRIC_COLUMNS};

pub const HEADER: &str = "round,selected,successes,policy_blocked,channel_errors,total_energy_j,wasted_energy_j,rb_occupancy_s,bandwidth_sum_hz,power_sum_w,accuracy,global_loss";

/// Nine significant digits.
pub fn format_float(v: f64) -> String {
    format!("{v:.8e}")
}

fn io(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Io(format!("{}: {e}", path.display()))
}

fn write_rows(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io(path, e))?;
    w.write_record(header).map_err(|e| io(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| io(path, e))?;
    }
    w.flush().map_err(|e| io(path, e))
}

/// One row per round; counts as integers, the rest in scientific notation.
pub fn repeat_rows(rounds: &[RoundMetrics]) -> impl Iterator<Item = Vec<String>> + '_ {
    rounds.iter().map(|m| {
        let mut row = vec![m.round.to_string()];
        for (i, v) in m.columns().iter().enumerate() {
            row.push(if i < 4 {
                (*v as u64).to_string()
            } else {
                format_float(*v)
            });
        }
        row
    })
}

pub fn aggregate_header() -> Vec<String> {
    let mut h = vec!["round".to_string()];
    for c in METRIC_COLUMNS {
        for stat in ["mean", "min", "max"] {
            h.push(format!("{c}_{stat}"));
        }
    }
    h
}

fn aggregate_rows(rows: &[AggregateRow]) -> impl Iterator<Item = Vec<String>> + '_ {
    rows.iter().map(|r| {
        let mut row = vec![r.round.to_string()];
        for s in &r.columns {
            row.extend([format_float(s.mean), format_float(s.min), format_float(s.max)]);
        }
        row
    })
}

/// Writes `{strategy}_repeat{rr}.csv` for every run and
/// `{strategy}_aggregate.csv` per strategy. Returns the paths written.
pub fn write_metrics(result: &ExperimentResult, out_dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(out_dir).map_err(|e| io(out_dir, e))?;
    let header: Vec<String> = HEADER.split(',').map(str::to_string).collect();
    let mut written = Vec::new();
    for run in &result.runs {
        let path = out_dir.join(format!("{}_repeat{:02}.csv", run.kind, run.repeat));
        write_rows(&path, &header, repeat_rows(&run.rounds))?;
        written.push(path);
    }
    for (kind, tables) in result.by_strategy() {
        let path = out_dir.join(format!("{kind}_aggregate.csv"));
        write_rows(&path, &aggregate_header(), aggregate_rows(&aggregate_repeats(&tables)))?;
        written.push(path);
    }
    Ok(written)
}

/// Per-strategy totals averaged over repeats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategySummary {
    pub total_energy_j: f64,
    pub wasted_energy_j: f64,
    pub successes: f64,
    pub final_accuracy: f64,
}

pub fn summarize(result: &ExperimentResult) -> BTreeMap<StrategyKind, StrategySummary> {
    result
        .by_strategy()
        .into_iter()
        .map(|(kind, tables)| {
            let n = tables.len() as f64;
            let sum = |f: &dyn Fn(&[RoundMetrics]) -> f64| tables.iter().map(|t| f(t)).sum::<f64>() / n;
            let s = StrategySummary {
                total_energy_j: sum(&|t| t.iter().map(|m| m.total_energy_j).sum()),
                wasted_energy_j: sum(&|t| t.iter().map(|m| m.wasted_energy_j).sum()),
                successes: sum(&|t| t.iter().map(|m| m.successes as f64).sum()),
                final_accuracy: sum(&|t| t.last().map_or(0.0, |m| m.accuracy)),
            };
            (kind, s)
        })
        .collect()
}

/// Comparison table: energy reduction and accuracy delta of FL-E2WS
/// against each other strategy.
pub fn summary_table(result: &ExperimentResult) -> String {
    let s = summarize(result);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<12} {:>14} {:>14} {:>11} {:>10} {:>13} {:>13}",
        "strategy", "energy_j", "wasted_j", "successes", "accuracy", "e2ws_saving%", "e2ws_acc_pp"
    );
    let reference = s.get(&StrategyKind::FlE2ws).copied();
    for (kind, v) in &s {
        let (saving, gain) = match reference {
            Some(r) if *kind != StrategyKind::FlE2ws && v.total_energy_j > 0.0 => (
                format!("{:.2}", 100.0 * (1.0 - r.total_energy_j / v.total_energy_j)),
                format!("{:+.2}", 100.0 * (r.final_accuracy - v.final_accuracy)),
            ),
            _ => ("-".into(), "-".into()),
        };
        let _ = writeln!(
            out,
            "{:<12} {:>14.6e} {:>14.6e} {:>11.1} {:>10.4} {:>13} {:>13}",
            kind.name(),
            v.total_energy_j,
            v.wasted_energy_j,
            v.successes,
            v.final_accuracy,
            saving,
            gain
        );
    }
    out
}
