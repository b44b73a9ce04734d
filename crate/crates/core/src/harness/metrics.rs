use crate::gateway::CostLedger;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("token efficiency is undefined for a mean cost of zero")]
    DivisionByZero,
}

/// Total tokens processed by an episode, in thousands.
pub fn episode_cost(ledger: &CostLedger) -> f64 {
    ledger.total().total() as f64 / 1000.0
}

/// Accuracy (percent) per thousand tokens.
pub fn token_efficiency(accuracy_percent: f64, mean_cost_k: f64) -> Result<f64, MetricsError> {
    if mean_cost_k == 0.0 {
        return Err(MetricsError::DivisionByZero);
    }
    Ok(accuracy_percent / mean_cost_k)
}

/// Keeps the first and last `max_len / 2` items of an over-long sequence.
///
/// With an odd cap the result is one item shorter than `max_len`.
pub fn middle_truncate<T: Clone>(tokens: &[T], max_len: usize) -> Vec<T> {
    if tokens.len() <= max_len {
        return tokens.to_vec();
    }
    let half = max_len / 2;
    let mut out = Vec::with_capacity(2 * half);
    out.extend_from_slice(&tokens[..half]);
    out.extend_from_slice(&tokens[tokens.len() - half..]);
    out
}
