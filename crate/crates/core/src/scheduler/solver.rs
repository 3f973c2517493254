//! Exact branch-and-bound scheduler.
//!
//! Devices are branched in id order; each device either takes one of its
//! tuples (tried in `(j, k, l)` order) or stays unscheduled. This visiting
//! order equals the lexicographic order of assignment lists, so keeping only
//! strict improvements yields the lexicographically smallest optimum.
//!
//! Nodes are bounded by a Lagrangian relaxation of the bandwidth budget whose
//! inner problem (devices to RBs, at most `n_f` pairs) is solved exactly as a
//! min-cost flow.

use std::time::Instant;

use super::{to_hz, to_nanojoules, CandidateAssignment, Schedule, SchedulerConfig, SchedulerError};

#[derive(Debug, Clone, Copy)]
struct Item {
    /// index into the caller's candidate slice
    source: usize,
    rb: usize,
    hz: u64,
    /// `e_U - lambda` in nano-joules
    marginal: i64,
}

struct Group {
    /// branch order: `(j, k, l)` ascending
    items: Vec<Item>,
    /// per RB, `(hz, marginal)` pairs for the relaxation
    by_rb: Vec<Vec<(u64, i64)>>,
}

/// Removes tuples that can never appear in the lexicographically smallest
/// optimum: positive marginals, budget-infeasible bandwidths, and tuples
/// dominated on the same RB by one that is no wider and cheaper (or equally
/// cheap and lexicographically earlier).
fn prune_dominated(candidates: &[CandidateAssignment], mut items: Vec<Item>, budget: u64) -> Vec<Item> {
    items.retain(|it| it.marginal <= 0 && it.hz <= budget);
    let key = |it: &Item| candidates[it.source].key();
    items.sort_by_key(|a| (a.rb, a.hz, a.marginal, key(a)));
    let mut kept = Vec::with_capacity(items.len());
    let mut rb = usize::MAX;
    let mut best = None;
    for it in items {
        if it.rb != rb {
            rb = it.rb;
            best = None;
        }
        let score = (it.marginal, key(&it));
        if best.is_some_and(|b| b < score) {
            continue;
        }
        best = Some(score);
        kept.push(it);
    }
    kept.sort_by_key(|it| key(it));
    kept
}

/// Min-cost flow on the bipartite device/RB graph with at most `units`
/// augmentations; stops once no negative augmenting path remains.
struct Matching {
    // adjacency in a flat edge list
    to: Vec<usize>,
    cap: Vec<i32>,
    cost: Vec<f64>,
    head: Vec<Vec<usize>>,
}

impl Matching {
    fn new(nodes: usize) -> Self {
        Self {
            to: Vec::new(),
            cap: Vec::new(),
            cost: Vec::new(),
            head: vec![Vec::new(); nodes],
        }
    }

    fn edge(&mut self, u: usize, v: usize, cost: f64) {
        self.head[u].push(self.to.len());
        self.to.push(v);
        self.cap.push(1);
        self.cost.push(cost);
        self.head[v].push(self.to.len());
        self.to.push(u);
        self.cap.push(0);
        self.cost.push(-cost);
    }

    fn min_cost(&mut self, source: usize, sink: usize, units: usize) -> f64 {
        let n = self.head.len();
        let mut total = 0.0;
        for _ in 0..units {
            let mut dist = vec![f64::INFINITY; n];
            let mut via = vec![usize::MAX; n];
            let mut queued = vec![false; n];
            let mut queue = std::collections::VecDeque::new();
            dist[source] = 0.0;
            queue.push_back(source);
            while let Some(u) = queue.pop_front() {
                queued[u] = false;
                for &e in &self.head[u] {
                    if self.cap[e] == 0 {
                        continue;
                    }
                    let v = self.to[e];
                    let nd = dist[u] + self.cost[e];
                    if nd < dist[v] - 1e-9 {
                        dist[v] = nd;
                        via[v] = e;
                        if !queued[v] {
                            queued[v] = true;
                            queue.push_back(v);
                        }
                    }
                }
            }
            if !(dist[sink] < 0.0) {
                break;
            }
            total += dist[sink];
            let mut v = sink;
            while v != source {
                let e = via[v];
                self.cap[e] -= 1;
                self.cap[e ^ 1] += 1;
                v = self.to[e ^ 1];
            }
        }
        total
    }
}

struct Solver<'a> {
    candidates: &'a [CandidateAssignment],
    groups: Vec<Group>,
    rbs: usize,
    budget: u64,
    max_devices: usize,
    multipliers: Vec<f64>,
    used_rb: Vec<bool>,
    chosen: Vec<Item>,
    best: Option<(i64, Vec<Item>)>,
    started: Instant,
    time_budget_s: f64,
    nodes: u64,
    timed_out: bool,
}

impl Solver<'_> {
    /// Lower bound on the summed marginals of groups `from..` for one
    /// bandwidth price `mu` (nJ/Hz).
    fn relaxation(&self, from: usize, budget_left: u64, slots: usize, mu: f64) -> f64 {
        if slots == 0 || from >= self.groups.len() {
            return 0.0;
        }
        let devices = self.groups.len() - from;
        let source = 0;
        let sink = 1 + devices + self.rbs;
        let mut flow = Matching::new(sink + 1);
        let mut any = false;
        for (g, group) in self.groups[from..].iter().enumerate() {
            let mut has_edge = false;
            for (rb, options) in group.by_rb.iter().enumerate() {
                if self.used_rb[rb] {
                    continue;
                }
                let best = options
                    .iter()
                    .filter(|(hz, _)| *hz <= budget_left)
                    .map(|(hz, m)| *m as f64 + mu * *hz as f64)
                    .fold(f64::INFINITY, f64::min);
                if best < 0.0 {
                    flow.edge(1 + g, 1 + devices + rb, best);
                    has_edge = true;
                }
            }
            if has_edge {
                flow.edge(source, 1 + g, 0.0);
                any = true;
            }
        }
        if !any {
            return -mu * budget_left as f64;
        }
        for rb in 0..self.rbs {
            if !self.used_rb[rb] {
                flow.edge(1 + devices + rb, sink, 0.0);
            }
        }
        flow.min_cost(source, sink, slots) - mu * budget_left as f64
    }

    fn bound(&self, from: usize, budget_left: u64, slots: usize) -> f64 {
        self.multipliers
            .iter()
            .map(|mu| self.relaxation(from, budget_left, slots, *mu))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn visit(&mut self, g: usize, objective: i64, hz_used: u64) {
        if self.timed_out {
            return;
        }
        self.nodes += 1;
        if self.nodes % 256 == 1 && self.started.elapsed().as_secs_f64() > self.time_budget_s {
            self.timed_out = true;
            return;
        }
        if g == self.groups.len() {
            if self.best.as_ref().is_none_or(|(b, _)| objective < *b) {
                self.best = Some((objective, self.chosen.clone()));
            }
            return;
        }
        let slots = self.max_devices - self.chosen.len();
        let budget_left = self.budget - hz_used;
        if let Some((best, _)) = &self.best {
            let lb = objective as f64 + self.bound(g, budget_left, slots);
            if lb > (*best - 1) as f64 + 1e-3 {
                return;
            }
        }
        if slots > 0 {
            for idx in 0..self.groups[g].items.len() {
                let item = self.groups[g].items[idx];
                if self.used_rb[item.rb] || item.hz > budget_left {
                    continue;
                }
                self.used_rb[item.rb] = true;
                self.chosen.push(item);
                self.visit(g + 1, objective + item.marginal, hz_used + item.hz);
                self.chosen.pop();
                self.used_rb[item.rb] = false;
            }
        }
        self.visit(g + 1, objective, hz_used);
    }

    fn schedule(&self, items: &[Item], config: &SchedulerConfig) -> Schedule {
        Schedule::from_assignments(
            items.iter().map(|it| self.candidates[it.source].clone()).collect(),
            config,
        )
    }
}

/// Maximises the concave dual `L(mu)` at the root by golden-section search.
fn best_multiplier(solver: &Solver<'_>) -> f64 {
    let hi = solver
        .groups
        .iter()
        .flat_map(|g| g.items.iter())
        .map(|it| -(it.marginal as f64) / it.hz.max(1) as f64)
        .fold(0.0, f64::max);
    if hi <= 0.0 {
        return 0.0;
    }
    let f = |mu: f64| solver.relaxation(0, solver.budget, solver.max_devices, mu);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, hi);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..40 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    (a + b) / 2.0
}

/// Exact optimum of the scheduling problem over `candidates`.
///
/// Among optimal schedules the lexicographically smallest `(i, j, k, l)`
/// assignment list is returned. If the time budget runs out, the error
/// carries the best incumbent and its gap to the root bound.
pub fn solve_schedule(
    candidates: &[CandidateAssignment],
    config: &SchedulerConfig,
) -> Result<Schedule, SchedulerError> {
    config.validate()?;
    if candidates.is_empty() {
        return Ok(Schedule::empty());
    }
    let lambda = to_nanojoules(config.lambda);
    let budget = to_hz(config.bandwidth_budget_hz);
    let rbs = candidates.iter().map(|c| c.rb_index + 1).max().unwrap_or(0);

    let mut per_device: std::collections::BTreeMap<usize, Vec<Item>> = Default::default();
    for (source, c) in candidates.iter().enumerate() {
        per_device.entry(c.device_id).or_default().push(Item {
            source,
            rb: c.rb_index,
            hz: to_hz(c.bandwidth_hz),
            marginal: to_nanojoules(c.upload_energy_j) - lambda,
        });
    }
    let groups: Vec<Group> = per_device
        .into_values()
        .map(|items| prune_dominated(candidates, items, budget))
        .filter(|items| !items.is_empty())
        .map(|items| {
            let mut by_rb = vec![Vec::new(); rbs];
            for it in &items {
                by_rb[it.rb].push((it.hz, it.marginal));
            }
            Group { items, by_rb }
        })
        .collect();

    let mut solver = Solver {
        candidates,
        groups,
        rbs,
        budget,
        max_devices: config.max_devices,
        multipliers: vec![0.0],
        used_rb: vec![false; rbs],
        chosen: Vec::new(),
        best: None,
        started: Instant::now(),
        time_budget_s: config.time_budget_s,
        nodes: 0,
        timed_out: false,
    };
    let mu = best_multiplier(&solver);
    if mu > 0.0 {
        solver.multipliers.push(mu);
    }
    // Search in lexicographic order for a schedule reaching `target`,
    // starting from the root bound and relaxing it until one exists. No
    // schedule beats the bound, so the first one found is optimal and, being
    // first in branch order, the lexicographically smallest optimum. The
    // empty schedule has value 0, which ends the loop at the latest.
    let root = solver.bound(0, budget, config.max_devices);
    let mut target = ((root - 1e-3).ceil() as i64).min(0);
    let mut step = 1i64.max((root.abs() * 1e-6) as i64);
    loop {
        // sentinel incumbent: accept anything <= target
        solver.best = Some((target + 1, Vec::new()));
        solver.visit(0, 0, 0);
        let found = solver.best.as_ref().is_some_and(|(v, _)| *v <= target);
        if found || solver.timed_out || target >= 0 {
            if !found {
                solver.best = None;
            }
            break;
        }
        target = (target + step).min(0);
        step = step.saturating_mul(8);
    }
    let best = solver.best.clone();
    if solver.timed_out {
        let incumbent = best
            .as_ref()
            .map(|(_, items)| solver.schedule(items, config))
            .unwrap_or_else(Schedule::empty);
        let gap_j = (incumbent.objective_nj as f64 - root).max(0.0) * 1e-9;
        return Err(SchedulerError::BudgetExceeded {
            budget_s: config.time_budget_s,
            incumbent: Box::new(incumbent),
            gap_j,
        });
    }
    Ok(match best {
        Some((_, items)) => solver.schedule(&items, config),
        None => Schedule::empty(),
    })
}
