use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::layout::ActionLayout;
use super::mdp::SIMPLEX_TOL;
use crate::{Error, Result};

/// Product policy: one distribution per `(agent, state)` block.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPolicy {
    layout: Arc<ActionLayout>,
    probs: Vec<f64>,
}

/// Softmax logits `theta[i, s, a]`, same indexing as [`JointPolicy`].
#[derive(Debug, Clone, PartialEq)]
pub struct Logits {
    layout: Arc<ActionLayout>,
    theta: Vec<f64>,
}

impl JointPolicy {
    /// Checks that every block is a probability vector within `1e-12`.
    pub fn new(layout: Arc<ActionLayout>, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != layout.len() {
            return Err(Error::ShapeMismatch(format!(
                "policy has {} entries, layout needs {}",
                probs.len(),
                layout.len()
            )));
        }
        for i in 0..layout.n_agents() {
            for s in 0..layout.n_states() {
                let block = &probs[layout.range(i, s)];
                if let Some(p) = block.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
                    return Err(Error::NotADistribution {
                        agent: i,
                        state: s,
                        reason: format!("entry {p}"),
                    });
                }
                let sum: f64 = block.iter().sum();
                if (sum - 1.0).abs() > SIMPLEX_TOL {
                    return Err(Error::NotADistribution {
                        agent: i,
                        state: s,
                        reason: format!("sums to {sum}"),
                    });
                }
            }
        }
        Ok(Self { layout, probs })
    }

    pub fn uniform(layout: Arc<ActionLayout>) -> Self {
        let mut probs = vec![0.0; layout.len()];
        for i in 0..layout.n_agents() {
            for s in 0..layout.n_states() {
                let r = layout.range(i, s);
                let p = 1.0 / r.len() as f64;
                probs[r].fill(p);
            }
        }
        Self { layout, probs }
    }

    /// Deterministic policy playing `choice(agent, state)`.
    /// Panics if `choice` returns an action outside the agent's set.
    pub fn deterministic(
        layout: Arc<ActionLayout>,
        mut choice: impl FnMut(usize, usize) -> usize,
    ) -> Self {
        let mut probs = vec![0.0; layout.len()];
        for i in 0..layout.n_agents() {
            for s in 0..layout.n_states() {
                let a = choice(i, s);
                assert!(a < layout.count(i, s), "action {a} out of range for agent {i} at state {s}");
                probs[layout.index(i, s, a)] = 1.0;
            }
        }
        Self { layout, probs }
    }

    pub fn layout(&self) -> &Arc<ActionLayout> {
        &self.layout
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }

    #[inline]
    pub fn dist(&self, agent: usize, state: usize) -> &[f64] {
        &self.probs[self.layout.range(agent, state)]
    }

    #[inline]
    pub fn prob(&self, agent: usize, state: usize, action: usize) -> f64 {
        self.probs[self.layout.index(agent, state, action)]
    }

    /// Replaces agent `agent`'s blocks with those of `other` (unilateral deviation).
    pub fn with_agent_from(&self, agent: usize, other: &JointPolicy) -> Result<Self> {
        same_shape(&self.layout, &other.layout)?;
        let mut probs = self.probs.clone();
        let r = self.layout.agent_range(agent);
        probs[r.clone()].copy_from_slice(&other.probs[r]);
        Ok(Self {
            layout: self.layout.clone(),
            probs,
        })
    }

    /// Smallest probability anywhere, with its location.
    pub fn min_entry(&self) -> Option<(f64, usize, usize, usize)> {
        let (flat, &p) = self
            .probs
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))?;
        let (i, s, a) = self.layout.locate(flat);
        Some((p, i, s, a))
    }

    /// Errors unless every probability is strictly positive.
    pub fn ensure_interior(&self) -> Result<()> {
        match self.min_entry() {
            Some((p, agent, state, action)) if p <= 0.0 => {
                Err(Error::NotInterior { agent, state, action })
            }
            _ => Ok(()),
        }
    }

    /// Logits `ln pi`; requires an interior policy.
    pub fn to_logits(&self) -> Result<Logits> {
        self.ensure_interior()?;
        Ok(Logits {
            layout: self.layout.clone(),
            theta: self.probs.iter().map(|p| p.ln()).collect(),
        })
    }

    /// Writes the product probability of every joint action at `state` into
    /// `out`, in joint-action order.
    pub fn joint_probs(&self, state: usize, out: &mut Vec<f64>) {
        let counts = self.layout.counts_at(state);
        out.clear();
        out.push(1.0);
        // Build from the most significant agent down so that agent 0 varies fastest.
        for i in (0..counts.len()).rev() {
            let d = self.dist(i, state);
            let prev = std::mem::take(out);
            out.reserve(prev.len() * d.len());
            for &q in &prev {
                for &p in d {
                    out.push(q * p);
                }
            }
        }
    }

    /// Per-agent L1 distance `sum_s sum_a |pi_i - pi'_i|`.
    pub fn l1_by_agent(&self, other: &JointPolicy) -> Result<Vec<f64>> {
        same_shape(&self.layout, &other.layout)?;
        Ok((0..self.layout.n_agents())
            .map(|i| {
                let r = self.layout.agent_range(i);
                self.probs[r.clone()]
                    .iter()
                    .zip(&other.probs[r])
                    .map(|(a, b)| (a - b).abs())
                    .sum()
            })
            .collect())
    }
}

impl Logits {
    /// Rejects non-finite entries, naming the first offender.
    pub fn new(layout: Arc<ActionLayout>, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != layout.len() {
            return Err(Error::ShapeMismatch(format!(
                "logits have {} entries, layout needs {}",
                theta.len(),
                layout.len()
            )));
        }
        if let Some(flat) = theta.iter().position(|t| !t.is_finite()) {
            let (agent, state, action) = layout.locate(flat);
            return Err(Error::NonFinite {
                what: "logit",
                agent,
                state,
                action,
            });
        }
        Ok(Self { layout, theta })
    }

    pub fn zeros(layout: Arc<ActionLayout>) -> Self {
        let theta = vec![0.0; layout.len()];
        Self { layout, theta }
    }

    /// I.i.d. `N(0, scale^2)` logits.
    pub fn random_normal<R: Rng + ?Sized>(layout: Arc<ActionLayout>, scale: f64, rng: &mut R) -> Self {
        let theta = (0..layout.len())
            .map(|_| { let z: f64 = StandardNormal.sample(rng); scale * z })
            .collect::<Vec<f64>>();
        Self { layout, theta }
    }

    pub fn layout(&self) -> &Arc<ActionLayout> {
        &self.layout
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.theta
    }

    pub fn get(&self, agent: usize, state: usize, action: usize) -> f64 {
        self.theta[self.layout.index(agent, state, action)]
    }

    /// Returns a copy with `delta` added entrywise.
    pub fn shifted(&self, delta: &[f64]) -> Result<Self> {
        if delta.len() != self.theta.len() {
            return Err(Error::ShapeMismatch("logit displacement length".into()));
        }
        let theta = self.theta.iter().zip(delta).map(|(t, d)| t + d).collect();
        Self::new(self.layout.clone(), theta)
    }

    /// Returns a copy with one coordinate moved by `h`.
    pub fn bumped(&self, flat: usize, h: f64) -> Self {
        let mut theta = self.theta.clone();
        theta[flat] += h;
        Self {
            layout: self.layout.clone(),
            theta,
        }
    }

    pub fn softmax(&self) -> JointPolicy {
        softmax_policy(self)
    }
}

/// Softmax of each `(agent, state)` logit block, with max subtraction.
pub fn softmax_policy(theta: &Logits) -> JointPolicy {
    let layout = &theta.layout;
    let mut probs = vec![0.0; layout.len()];
    for i in 0..layout.n_agents() {
        for s in 0..layout.n_states() {
            let r = layout.range(i, s);
            softmax_into(&theta.theta[r.clone()], &mut probs[r]);
        }
    }
    JointPolicy {
        layout: layout.clone(),
        probs,
    }
}

#[inline]
pub(crate) fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for (o, &t) in out.iter_mut().zip(logits) {
        *o = (t - max).exp();
        z += *o;
    }
    for o in out.iter_mut() {
        *o /= z;
    }
}

/// Average over agents of the per-agent L1 distance between two policies:
/// `(1/N) sum_i sum_s sum_a |pi_i(a|s) - ref_i(a|s)|`.
pub fn l1_accuracy(policy: &JointPolicy, reference: &JointPolicy) -> Result<f64> {
    let per_agent = policy.l1_by_agent(reference)?;
    Ok(per_agent.iter().sum::<f64>() / per_agent.len() as f64)
}

fn same_shape(a: &ActionLayout, b: &ActionLayout) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch(
            "policies are defined over different action layouts".into(),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layout(counts: &[Vec<usize>], agents: usize) -> Arc<ActionLayout> {
        Arc::new(ActionLayout::new(agents, counts))
    }

    #[test]
    fn zero_logits_give_uniform() {
        let l = layout(&[vec![3]], 1);
        let p = Logits::zeros(l).softmax();
        for &x in p.as_slice() {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn log_two_gives_two_thirds() {
        let l = layout(&[vec![2]], 1);
        let p = Logits::new(l, vec![2f64.ln(), 0.0]).unwrap().softmax();
        assert!((p.as_slice()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p.as_slice()[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn huge_logits_do_not_overflow() {
        let l = layout(&[vec![2]], 1);
        let p = Logits::new(l, vec![1000.0, 999.0]).unwrap().softmax();
        assert!((p.as_slice()[0] - 1.0 / (1.0 + (-1f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn non_finite_logit_is_rejected_with_index() {
        let l = layout(&[vec![2], vec![2]], 1);
        let err = Logits::new(l, vec![0.0, 0.0, f64::NAN, 0.0]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { agent: 0, state: 1, action: 0, .. }));
    }

    #[test]
    fn l1_accuracy_examples() {
        let l = layout(&[vec![2]], 1);
        let a = JointPolicy::new(l.clone(), vec![1.0, 0.0]).unwrap();
        let b = JointPolicy::new(l, vec![0.0, 1.0]).unwrap();
        assert_eq!(l1_accuracy(&a, &a).unwrap(), 0.0);
        assert_eq!(l1_accuracy(&a, &b).unwrap(), 2.0);

        // Two agents; agent 0 off by total variation 0.1 in one state.
        let l2 = layout(&[vec![2, 2], vec![2, 2]], 2);
        let p = JointPolicy::new(l2.clone(), vec![0.6, 0.4, 0.5, 0.5, 0.3, 0.7, 0.2, 0.8]).unwrap();
        let q = JointPolicy::new(l2, vec![0.5, 0.5, 0.5, 0.5, 0.3, 0.7, 0.2, 0.8]).unwrap();
        assert!((l1_accuracy(&p, &q).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn l1_accuracy_rejects_shape_mismatch() {
        let a = JointPolicy::uniform(layout(&[vec![2]], 1));
        let b = JointPolicy::uniform(layout(&[vec![3]], 1));
        assert!(matches!(l1_accuracy(&a, &b), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn joint_probs_follow_mixed_radix_order() {
        let l = layout(&[vec![2, 3]], 2);
        let p = JointPolicy::new(l, vec![0.25, 0.75, 0.5, 0.3, 0.2]).unwrap();
        let mut out = Vec::new();
        p.joint_probs(0, &mut out);
        // joint = a0 + 2 * a1
        let expect = [0.125, 0.375, 0.075, 0.225, 0.05, 0.15];
        for (x, e) in out.iter().zip(expect) {
            assert!((x - e).abs() < 1e-15);
        }
    }

    fn arb_logits() -> impl Strategy<Value = (Vec<Vec<usize>>, u64)> {
        (prop::collection::vec(prop::collection::vec(1usize..5, 2), 1..4), any::<u64>())
    }

    proptest! {
        #[test]
        fn softmax_is_a_policy_and_shift_invariant((counts, seed) in arb_logits(), c in -50.0f64..50.0) {
            let l = layout(&counts, 2);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let theta = Logits::random_normal(l.clone(), 10.0, &mut rng);
            let p = theta.softmax();
            prop_assert!(JointPolicy::new(l.clone(), p.as_slice().to_vec()).is_ok());
            let shifted = theta.shifted(&vec![c; l.len()]).unwrap().softmax();
            for (a, b) in p.as_slice().iter().zip(shifted.as_slice()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn l1_accuracy_is_a_pseudometric((counts, seed) in arb_logits()) {
            let l = layout(&counts, 2);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = Logits::random_normal(l.clone(), 2.0, &mut rng).softmax();
            let b = Logits::random_normal(l.clone(), 2.0, &mut rng).softmax();
            let c = Logits::random_normal(l, 2.0, &mut rng).softmax();
            let ab = l1_accuracy(&a, &b).unwrap();
            prop_assert_eq!(ab, l1_accuracy(&b, &a).unwrap());
            prop_assert_eq!(l1_accuracy(&a, &a).unwrap(), 0.0);
            let ac = l1_accuracy(&a, &c).unwrap();
            let cb = l1_accuracy(&c, &b).unwrap();
            prop_assert!(ab <= ac + cb + 1e-12);
        }
    }
}
