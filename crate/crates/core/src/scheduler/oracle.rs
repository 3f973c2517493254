//! Exhaustive reference solver for small scheduling instances.

use super::{to_hz, to_nanojoules, CandidateAssignment, Schedule, SchedulerConfig, SchedulerError};

/// Number of leaves the exhaustive search may visit: `prod(|C_i| + 1)`.
pub fn enumeration_size(candidates: &[CandidateAssignment]) -> f64 {
    let mut counts = std::collections::BTreeMap::new();
    for c in candidates {
        *counts.entry(c.device_id).or_insert(0usize) += 1;
    }
    counts.values().map(|n| (*n + 1) as f64).product()
}

struct Search<'a> {
    groups: Vec<Vec<&'a CandidateAssignment>>,
    lambda: i64,
    budget_hz: u64,
    max_devices: usize,
    used_rb: Vec<bool>,
    chosen: Vec<&'a CandidateAssignment>,
    best: Option<(i64, Vec<&'a CandidateAssignment>)>,
}

impl<'a> Search<'a> {
    fn visit(&mut self, device: usize, objective: i64, bandwidth: u64) {
        if device == self.groups.len() {
            // strict improvement only: the first optimum in visiting order is
            // the lexicographically smallest one
            if self.best.as_ref().is_none_or(|(b, _)| objective < *b) {
                self.best = Some((objective, self.chosen.clone()));
            }
            return;
        }
        let group = self.groups[device].clone();
        if self.chosen.len() < self.max_devices {
            for c in group {
                let hz = to_hz(c.bandwidth_hz);
                if self.used_rb[c.rb_index] || bandwidth + hz > self.budget_hz {
                    continue;
                }
                self.used_rb[c.rb_index] = true;
                self.chosen.push(c);
                self.visit(
                    device + 1,
                    objective + to_nanojoules(c.upload_energy_j) - self.lambda,
                    bandwidth + hz,
                );
                self.chosen.pop();
                self.used_rb[c.rb_index] = false;
            }
        }
        self.visit(device + 1, objective, bandwidth);
    }
}

/// Enumerates every constraint-respecting subset of `candidates` and returns
/// the optimum, ties broken by the lexicographically smallest `(i, j, k, l)`
/// assignment list.
pub fn brute_force_schedule(
    candidates: &[CandidateAssignment],
    config: &SchedulerConfig,
) -> Result<Schedule, SchedulerError> {
    config.validate()?;
    let size = enumeration_size(candidates);
    if size > config.oracle_limit {
        return Err(SchedulerError::OracleLimit {
            size,
            limit: config.oracle_limit,
        });
    }
    let mut sorted: Vec<&CandidateAssignment> = candidates.iter().collect();
    sorted.sort_by_key(|c| c.key());
    let mut groups: Vec<Vec<&CandidateAssignment>> = Vec::new();
    for c in sorted {
        match groups.last_mut() {
            Some(g) if g[0].device_id == c.device_id => g.push(c),
            _ => groups.push(vec![c]),
        }
    }
    let rbs = candidates.iter().map(|c| c.rb_index + 1).max().unwrap_or(0);
    let mut search = Search {
        groups,
        lambda: to_nanojoules(config.lambda),
        budget_hz: to_hz(config.bandwidth_budget_hz),
        max_devices: config.max_devices,
        used_rb: vec![false; rbs],
        chosen: Vec::new(),
        best: None,
    };
    search.visit(0, 0, 0);
    let chosen = search.best.map(|(_, c)| c).unwrap_or_default();
    Ok(Schedule::from_assignments(
        chosen.into_iter().cloned().collect(),
        config,
    ))
}
