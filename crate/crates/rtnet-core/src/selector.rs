//! The reinforced data selector.
//!
//! Per source sample the agent sees a state `[z ∥ one_hot(y) ∥ α]` where
//! `z` is the sample's adaptation-layer feature, `y` its label, and `α`
//! the mean predicted class distribution of the paired target batch. The
//! policy keeps (`a=1`) or drops (`a=0`) the sample; actions are drawn
//! ε-greedily with ε decayed over episodes. One reward per batch of
//! actions; after the episode the policy takes gradient-ascent steps on
//! the advantage-weighted log-probabilities and the value network
//! regresses the discounted returns.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::adam::AdamState;
use crate::da::PROB_FLOOR;
use crate::error::{CoreError, Result};
use crate::network::{Activation, DenseNetwork, GradientSet};
use crate::tensor::Tensor;

/// Action index for dropping a sample.
pub const ACTION_DROP: usize = 0;
/// Action index for keeping a sample.
pub const ACTION_KEEP: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RlHyperparams {
    /// Reward discount factor γ.
    pub gamma: f64,
    /// Learning rate for the policy update.
    pub lr: f64,
    /// Learning rate for the value update; a faster critic keeps the
    /// advantage baseline centered while the policy moves slowly.
    pub value_lr: f64,
    /// Hidden width of both two-layer networks.
    pub hidden: usize,
    /// Fraction of the episode budget over which ε decays from 1 to 0.
    pub eps_decay_fraction: f64,
}

impl Default for RlHyperparams {
    fn default() -> Self {
        RlHyperparams {
            gamma: 0.8,
            lr: 1e-4,
            value_lr: 1e-4,
            hidden: 64,
            eps_decay_fraction: 0.8,
        }
    }
}

/// Policy and value networks with optimizer states.
#[derive(Debug, Clone)]
pub struct Selector {
    pub policy: DenseNetwork,
    pub value: DenseNetwork,
    pub policy_opt: AdamState,
    pub value_opt: AdamState,
}

impl Selector {
    /// `π: l -> h (relu) -> 2 (softmax)`, `V: l -> h (relu) -> 1 (linear)`.
    pub fn new<R: Rng + ?Sized>(state_dim: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        let policy = DenseNetwork::xavier(
            &[state_dim, hidden, 2],
            &[Activation::Relu, Activation::Softmax],
            rng,
        )?;
        let value = DenseNetwork::xavier(
            &[state_dim, hidden, 1],
            &[Activation::Relu, Activation::Linear],
            rng,
        )?;
        Self::from_networks(policy, value)
    }

    pub fn from_networks(policy: DenseNetwork, value: DenseNetwork) -> Result<Self> {
        if policy.input_dim() != value.input_dim() {
            return Err(CoreError::Config("policy/value input dims differ".into()));
        }
        if policy.output_dim() != 2 || value.output_dim() != 1 {
            return Err(CoreError::Config(
                "policy must output 2 probabilities and value 1 scalar".into(),
            ));
        }
        let policy_opt = AdamState::new(&policy);
        let value_opt = AdamState::new(&value);
        Ok(Selector {
            policy,
            value,
            policy_opt,
            value_opt,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.policy.input_dim()
    }

    /// `(drop, keep)` probability rows for a batch of states.
    pub fn policy_forward(&self, states: &Tensor) -> Result<Tensor> {
        Ok(self.policy.forward(states)?.output().clone())
    }

    /// One value estimate per state.
    pub fn value_forward(&self, states: &Tensor) -> Result<Vec<f64>> {
        let out = self.value.forward(states)?;
        Ok(out.output().data().to_vec())
    }
}

/// Column-wise mean of the target batch's predicted class probabilities.
pub fn target_label_distribution(probs: &Tensor) -> Result<Vec<f64>> {
    if probs.rows() == 0 {
        return Err(CoreError::Usage("empty target batch".into()));
    }
    let mut alpha = vec![0.0; probs.cols()];
    for i in 0..probs.rows() {
        for (a, v) in alpha.iter_mut().zip(probs.row(i)) {
            *a += v;
        }
    }
    for a in &mut alpha {
        *a /= probs.rows() as f64;
    }
    Ok(alpha)
}

/// Concatenates `[z_i ∥ one_hot(y_i) ∥ α]` into one state row per sample.
pub fn build_states(
    features: &Tensor,
    labels: &[usize],
    alpha: &[f64],
    num_classes: usize,
) -> Result<Tensor> {
    if features.rows() != labels.len() {
        return Err(CoreError::Usage("features/labels length mismatch".into()));
    }
    if alpha.len() != num_classes {
        return Err(CoreError::Usage("alpha length must equal class count".into()));
    }
    let d = features.cols();
    let l = d + 2 * num_classes;
    let mut states = Tensor::zeros(&[labels.len(), l]);
    for (i, &y) in labels.iter().enumerate() {
        if y >= num_classes {
            return Err(CoreError::Usage(format!(
                "label {y} out of range for {num_classes} classes"
            )));
        }
        let row = states.row_mut(i);
        row[..d].copy_from_slice(features.row(i));
        row[d + y] = 1.0;
        row[d + num_classes..].copy_from_slice(alpha);
    }
    Ok(states)
}

/// ε-greedy action draw per sample: with probability ε sample from the
/// policy's distribution, otherwise take the argmax (ties keep).
pub fn sample_actions<R: Rng + ?Sized>(
    probs: &Tensor,
    epsilon: f64,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(CoreError::Usage("epsilon must be in [0, 1]".into()));
    }
    let mut actions = Vec::with_capacity(probs.rows());
    for i in 0..probs.rows() {
        let keep_p = probs.get(i, ACTION_KEEP);
        let explore = epsilon > 0.0 && rng.random::<f64>() < epsilon;
        let action = if explore {
            if rng.random::<f64>() < keep_p {
                ACTION_KEEP
            } else {
                ACTION_DROP
            }
        } else if keep_p >= probs.get(i, ACTION_DROP) {
            ACTION_KEEP
        } else {
            ACTION_DROP
        };
        actions.push(action);
    }
    Ok(actions)
}

/// Applies actions to a batch, retaining kept rows in order.
///
/// If fewer than 2 samples survive, the empty-selection fallback fires:
/// the full batch is used and the recorded actions become all-keep.
/// Returns `(selected_x, selected_y, recorded_actions, fallback_fired)`.
pub fn select_batch(
    x: &Tensor,
    y: &[usize],
    actions: &[usize],
) -> Result<(Tensor, Vec<usize>, Vec<usize>, bool)> {
    if x.rows() != y.len() || y.len() != actions.len() {
        return Err(CoreError::Usage("batch/action length mismatch".into()));
    }
    let kept: Vec<usize> = actions
        .iter()
        .enumerate()
        .filter(|(_, &a)| a == ACTION_KEEP)
        .map(|(i, _)| i)
        .collect();
    if kept.len() < 2 {
        let all_keep = vec![ACTION_KEEP; actions.len()];
        return Ok((x.clone(), y.to_vec(), all_keep, true));
    }
    let sel_x = x.select_rows(&kept);
    let sel_y = kept.iter().map(|&i| y[i]).collect();
    Ok((sel_x, sel_y, actions.to_vec(), false))
}

/// One step of one episode: the tuple stored in the history.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub batch_id: usize,
    pub states: Tensor,
    /// Post-fallback actions, one per state.
    pub actions: Vec<usize>,
    pub reward: f64,
    /// Value estimates captured when the record was stored.
    pub values: Vec<f64>,
}

impl StepRecord {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Append-only list of step records for one episode.
#[derive(Debug, Clone, Default)]
pub struct EpisodeHistory {
    records: Vec<StepRecord>,
}

impl EpisodeHistory {
    pub fn new() -> Self {
        EpisodeHistory::default()
    }

    pub fn push(&mut self, record: StepRecord) -> Result<()> {
        let expected = self.records.len() + 1;
        if record.batch_id != expected {
            return Err(CoreError::Usage(format!(
                "batch ids must increase 1..N; got {} expecting {expected}",
                record.batch_id
            )));
        }
        if record.states.rows() != record.actions.len()
            || record.actions.len() != record.values.len()
        {
            return Err(CoreError::Usage("inconsistent step record lengths".into()));
        }
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.reward).collect()
    }
}

/// Discounted suffix sums `r'_b = Σ_j γ^j r_{b+j}`, computed with the
/// backward recursion `r'_b = r_b + γ·r'_{b+1}`.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if rewards.is_empty() {
        return Err(CoreError::Usage("empty reward list".into()));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(CoreError::Usage("gamma must be in [0, 1]".into()));
    }
    let mut returns = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (out, &r) in returns.iter_mut().zip(rewards.iter()).rev() {
        acc = r + gamma * acc;
        *out = acc;
    }
    Ok(returns)
}

/// Advantage of one action: return minus the stored value estimate.
pub fn advantage(ret: f64, value: f64) -> f64 {
    ret - value
}

/// Gradient of the per-record policy objective
/// `(1/n) Σ_i v_i · log π(a_i | s_i)` with respect to the policy
/// parameters. Samples whose taken-action probability sits below the
/// floor contribute nothing (their log-probability is clamped).
pub fn policy_objective_grads(
    policy: &DenseNetwork,
    record: &StepRecord,
    advantages: &[f64],
) -> Result<GradientSet> {
    let trace = policy.forward(&record.states)?;
    let probs = trace.output();
    let n = record.len() as f64;
    let mut upstream = Tensor::zeros(probs.shape());
    for (i, (&a, &v)) in record.actions.iter().zip(advantages).enumerate() {
        let p = probs.get(i, a);
        if p < PROB_FLOOR {
            continue;
        }
        // d/dp of v·log p, mean over the batch.
        upstream.set(i, a, v / (p * n));
    }
    let (grads, _) = policy.backward(&trace, &upstream)?;
    Ok(grads)
}

/// One gradient-ascent Adam step on the policy per step record, iterating
/// records in batch order. Every state of a batch shares that batch's
/// return.
pub fn update_policy(
    selector: &mut Selector,
    history: &EpisodeHistory,
    returns: &[f64],
    lr: f64,
) -> Result<()> {
    if returns.len() != history.len() {
        return Err(CoreError::Usage("returns/history length mismatch".into()));
    }
    for (record, &ret) in history.records().iter().zip(returns) {
        let advantages: Vec<f64> = record.values.iter().map(|&v| advantage(ret, v)).collect();
        let mut grads = policy_objective_grads(&selector.policy, record, &advantages)?;
        // Ascent via descent on the negated objective.
        grads.scale(-1.0);
        selector.policy_opt.apply(&mut selector.policy, &grads, lr)?;
    }
    Ok(())
}

/// Per step record, one gradient-descent Adam step on the value network's
/// mean squared error against the batch return.
pub fn update_value(
    selector: &mut Selector,
    history: &EpisodeHistory,
    returns: &[f64],
    lr: f64,
) -> Result<()> {
    if returns.len() != history.len() {
        return Err(CoreError::Usage("returns/history length mismatch".into()));
    }
    for (record, &ret) in history.records().iter().zip(returns) {
        let (_, grads) = value_objective_grads(&selector.value, &record.states, ret)?;
        selector.value_opt.apply(&mut selector.value, &grads, lr)?;
    }
    Ok(())
}

/// Loss and gradient of the value objective `(1/n) Σ_i (V(s_i) - r')²`
/// against one batch's shared return.
pub fn value_objective_grads(
    value: &DenseNetwork,
    states: &Tensor,
    ret: f64,
) -> Result<(f64, GradientSet)> {
    let trace = value.forward(states)?;
    let out = trace.output();
    let n = states.rows() as f64;
    let mut upstream = Tensor::zeros(out.shape());
    let mut loss = 0.0;
    for i in 0..states.rows() {
        let diff = out.get(i, 0) - ret;
        loss += diff * diff;
        upstream.set(i, 0, 2.0 * diff / n);
    }
    let (grads, _) = value.backward(&trace, &upstream)?;
    Ok((loss / n, grads))
}

/// Linear ε decay: `max(0, 1 - (e-1)/⌈fraction·L⌉)`, reaching 0 at the
/// configured fraction of the episode budget.
pub fn epsilon_schedule(episode: usize, total_episodes: usize, fraction: f64) -> f64 {
    debug_assert!(episode >= 1 && episode <= total_episodes);
    let horizon = libm::ceil(fraction * total_episodes as f64);
    if horizon <= 0.0 {
        return 0.0;
    }
    (1.0 - (episode as f64 - 1.0) / horizon).max(0.0)
}
