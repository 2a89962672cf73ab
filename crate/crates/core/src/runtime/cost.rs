#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostEstimate {
    pub t_compute: f64,
    pub t_comms: f64,
    /// In elements, not bytes.
    pub memory: f64,
    pub feasible: bool,
}

/// Per-step cost of one worker's micro-batch with `B` positives, `N`
/// shared negatives, embedding width `d` and feature width `F`.
///
/// `memory_limit` is compared against the number of row elements that
/// must be resident for the step.
pub fn cost_model(
    b: u64,
    n: u64,
    d: u64,
    feature_dim: u64,
    c_compute: f64,
    c_comms: f64,
    memory_limit: f64,
) -> CostEstimate {
    let (b, n, d, f) = (b as f64, n as f64, d as f64, feature_dim as f64);
    let t_compute = c_compute * (b * n * d + (b + n) * f * d);
    let t_comms = c_comms * (b + n) * (d + f);
    let memory = (b + n) * (d + f);
    CostEstimate {
        t_compute,
        t_comms,
        memory,
        feasible: memory < memory_limit,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_negatives_leaves_projection_cost() {
        let c = cost_model(8, 0, 4, 3, 1.0, 1.0, 1e9);
        assert_eq!(c.t_compute, 8.0 * 3.0 * 4.0);
    }
}
