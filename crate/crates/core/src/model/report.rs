use super::ActionLayout;

/// Values, Q-functions, marginal advantages and visitation of one joint
/// policy, either exact or estimated from samples.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// `values[agent][state]`
    pub values: Vec<Vec<f64>>,
    /// `q[agent][row]` over flat `(state, joint action)` rows.
    pub q: Vec<Vec<f64>>,
    /// Marginal advantage `E_{a_-i}[Q_i(s, a_i, a_-i)] - V_i(s)`, indexed like the policy.
    pub advantage: Vec<f64>,
    /// Discounted state visitation from the initial distribution.
    pub visitation: Vec<f64>,
    /// Potential value per state, when the environment has a stage potential.
    pub potential: Option<Vec<f64>>,
    pub potential_mu: Option<f64>,
    /// Sampled estimates only: `(agent, state, action)` entries with no samples.
    pub unvisited: Option<Vec<bool>>,
}

impl EvalReport {
    /// `V_i(mu)`
    pub fn value_mu(&self, agent: usize, mu: &[f64]) -> f64 {
        self.values[agent].iter().zip(mu).map(|(v, m)| v * m).sum()
    }

    pub fn advantage_at<'a>(&'a self, layout: &ActionLayout, agent: usize, state: usize) -> &'a [f64] {
        &self.advantage[layout.range(agent, state)]
    }
}
