use serde::{Deserialize, Serialize};

use super::SchedulerError;

/// Pick `n_select` of `candidate_ids` maximising total local data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionProblem {
    pub candidate_ids: Vec<usize>,
    pub data_sizes: Vec<usize>,
    pub n_select: usize,
}

/// Returns the selected ids ordered by decreasing data size, ties by id.
///
/// Taking the `n_select` largest sizes is optimal for a cardinality-constrained
/// sum; ties are broken towards the lowest device id.
pub fn select_by_data(problem: &SelectionProblem) -> Result<Vec<usize>, SchedulerError> {
    let SelectionProblem {
        candidate_ids,
        data_sizes,
        n_select,
    } = problem;
    if candidate_ids.len() != data_sizes.len() {
        return Err(SchedulerError::SelectionShape {
            ids: candidate_ids.len(),
            sizes: data_sizes.len(),
        });
    }
    if *n_select > candidate_ids.len() {
        return Err(SchedulerError::InfeasibleSelection {
            requested: *n_select,
            available: candidate_ids.len(),
        });
    }
    if let Some(pos) = data_sizes.iter().position(|n| *n == 0) {
        return Err(SchedulerError::EmptyDevice(candidate_ids[pos]));
    }
    let mut order: Vec<(usize, usize)> = candidate_ids.iter().copied().zip(data_sizes.iter().copied()).collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(order.into_iter().take(*n_select).map(|(id, _)| id).collect())
}
