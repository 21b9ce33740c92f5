use std::ops::Range;

/// Per-agent, per-state action counts and the flat indexing shared by
/// policies, logits and marginal advantage tables.
///
/// Tables are agent-major: all states of agent 0, then all states of agent 1,
/// and within a state the actions in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionLayout {
    n_agents: usize,
    n_states: usize,
    // [state * n_agents + agent]
    counts: Vec<usize>,
    // [agent * n_states + state], with one trailing entry for the total
    offsets: Vec<usize>,
}

impl ActionLayout {
    /// `counts[state][agent]` is the number of actions available to `agent` in `state`.
    pub fn new(n_agents: usize, counts: &[Vec<usize>]) -> Self {
        let n_states = counts.len();
        let mut flat = Vec::with_capacity(n_states * n_agents);
        for row in counts {
            assert_eq!(row.len(), n_agents, "action count row has wrong length");
            flat.extend_from_slice(row);
        }
        Self::from_flat(n_agents, n_states, flat)
    }

    pub(crate) fn from_flat(n_agents: usize, n_states: usize, counts: Vec<usize>) -> Self {
        let mut offsets = Vec::with_capacity(n_agents * n_states + 1);
        let mut acc = 0;
        for i in 0..n_agents {
            for s in 0..n_states {
                offsets.push(acc);
                acc += counts[s * n_agents + i];
            }
        }
        offsets.push(acc);
        Self {
            n_agents,
            n_states,
            counts,
            offsets,
        }
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    #[inline]
    pub fn count(&self, agent: usize, state: usize) -> usize {
        self.counts[state * self.n_agents + agent]
    }

    /// Action counts of every agent at `state`.
    #[inline]
    pub fn counts_at(&self, state: usize) -> &[usize] {
        &self.counts[state * self.n_agents..(state + 1) * self.n_agents]
    }

    /// Flat range of the `(agent, state)` block.
    #[inline]
    pub fn range(&self, agent: usize, state: usize) -> Range<usize> {
        let k = agent * self.n_states + state;
        self.offsets[k]..self.offsets[k + 1]
    }

    #[inline]
    pub fn index(&self, agent: usize, state: usize, action: usize) -> usize {
        self.offsets[agent * self.n_states + state] + action
    }

    /// Flat range covering every state of `agent`.
    pub fn agent_range(&self, agent: usize) -> Range<usize> {
        self.offsets[agent * self.n_states]..self.offsets[(agent + 1) * self.n_states]
    }

    /// Total number of `(agent, state, action)` entries.
    pub fn len(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of joint actions at `state`.
    pub fn joint_count(&self, state: usize) -> usize {
        self.counts_at(state).iter().product()
    }

    /// Largest action set over all agents and states.
    pub fn a_max(&self) -> usize {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    /// Inverse of [`ActionLayout::index`].
    pub fn locate(&self, flat: usize) -> (usize, usize, usize) {
        let k = self.offsets.partition_point(|&o| o <= flat) - 1;
        // Zero-width blocks share an offset; partition_point lands on the last one.
        (k / self.n_states, k % self.n_states, flat - self.offsets[k])
    }
}

/// Mixed-radix decoding of joint actions. Agent 0 is the least significant
/// digit: `joint = a_0 + k_0 * (a_1 + k_1 * (a_2 + ...))`.
#[inline]
pub fn decode_joint(mut joint: usize, counts: &[usize], out: &mut [usize]) {
    for (slot, &k) in out.iter_mut().zip(counts) {
        *slot = joint % k;
        joint /= k;
    }
}

#[inline]
pub fn encode_joint(actions: &[usize], counts: &[usize]) -> usize {
    let mut joint = 0;
    for (&a, &k) in actions.iter().zip(counts).rev() {
        joint = joint * k + a;
    }
    joint
}

/// Advances a mixed-radix counter (agent 0 fastest). Returns false on wrap.
#[inline]
pub fn next_joint(digits: &mut [usize], counts: &[usize]) -> bool {
    for (d, &k) in digits.iter_mut().zip(counts) {
        *d += 1;
        if *d < k {
            return true;
        }
        *d = 0;
    }
    false
}
