//! One-step critic and actor updates.

use super::Transition;
use crate::nn::{Adam, GradientBundle, Mlp};
use crate::policy::{score_actions, Wolpertinger};
use crate::{Error, Result};

/// Bellman targets `r + γ Q'(s', π'(s'))`, where `π'` is the full policy
/// (retrieval plus re-ranking) run on the target networks. Terminal
/// transitions get `r`.
pub fn critic_targets(batch: &[&Transition], target: &Wolpertinger<'_>, gamma: f64) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::invalid("empty minibatch"));
    }
    batch
        .iter()
        .map(|t| {
            if t.terminal || gamma == 0.0 {
                return Ok(t.reward);
            }
            let d = target.select_action(&t.next_state)?;
            let q = match d.chosen_q() {
                Some(q) => q,
                None => score_actions(target.critic, target.index, &t.next_state, &[d.chosen])?[0],
            };
            Ok(t.reward + gamma * q)
        })
        .collect()
}

fn critic_input(state: &[f64], action: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(state.len() + action.len());
    v.extend_from_slice(state);
    v.extend_from_slice(action);
    v
}

/// Mean squared Bellman error on the stored executed embeddings, and its gradient.
pub fn critic_loss_gradient(critic: &Mlp, batch: &[&Transition], targets: &[f64]) -> Result<(f64, GradientBundle)> {
    Error::check_dim("critic targets", batch.len(), targets.len())?;
    if batch.is_empty() {
        return Err(Error::invalid("empty minibatch"));
    }
    let n = batch.len() as f64;
    let mut grads = GradientBundle::zeros_like(critic);
    let mut loss = 0.0;
    for (t, y) in batch.iter().zip(targets) {
        let tape = critic.forward_tape(&critic_input(&t.state, &t.embedding))?;
        let residual = y - tape.output()[0];
        loss += residual * residual;
        critic.accumulate_gradient(&tape, &[-2.0 * residual / n], &mut grads)?;
    }
    loss /= n;
    if !loss.is_finite() {
        return Err(Error::NonFinite("critic loss".into()));
    }
    Ok((loss, grads))
}

/// One optimizer step on the critic; returns the loss before the step.
pub fn critic_update(critic: &mut Mlp, optimizer: &mut Adam, batch: &[&Transition], targets: &[f64]) -> Result<f64> {
    let (loss, grads) = critic_loss_gradient(critic, batch, targets)?;
    optimizer.step(critic, &grads)?;
    Ok(loss)
}

/// Quadratic pull of proto-actions toward the middle of the action box,
/// `weight · ‖(a − center) / half_width‖²` per state. Keeps a bounded actor
/// out of its saturated corners, where the critic is extrapolating.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionPenalty {
    pub weight: f64,
    pub center: Vec<f64>,
    pub half_width: Vec<f64>,
}

impl ActionPenalty {
    pub fn for_box(weight: f64, low: &[f64], high: &[f64]) -> Self {
        ActionPenalty {
            weight,
            center: low.iter().zip(high).map(|(l, h)| 0.5 * (l + h)).collect(),
            half_width: low.iter().zip(high).map(|(l, h)| (0.5 * (h - l)).max(1e-12)).collect(),
        }
    }

    pub fn value(&self, action: &[f64]) -> f64 {
        self.weight
            * action
                .iter()
                .zip(&self.center)
                .zip(&self.half_width)
                .map(|((a, c), w)| ((a - c) / w).powi(2))
                .sum::<f64>()
    }

    fn gradient<'a>(&'a self, action: &'a [f64]) -> impl Iterator<Item = f64> + 'a {
        action
            .iter()
            .zip(&self.center)
            .zip(&self.half_width)
            .map(move |((a, c), w)| 2.0 * self.weight * (a - c) / (w * w))
    }
}

/// Gradient of `(1/N) Σ [Q(s_i, f(s_i)) − penalty(f(s_i))]` with respect to
/// the actor parameters, chaining the critic's action-gradient taken at the
/// proto-action `f(s_i)`. Also returns the proto-actions where the critic
/// was differentiated.
pub fn actor_gradient(
    actor: &Mlp,
    critic: &Mlp,
    states: &[&[f64]],
    penalty: Option<&ActionPenalty>,
) -> Result<(GradientBundle, Vec<Vec<f64>>)> {
    if states.is_empty() {
        return Err(Error::invalid("empty minibatch"));
    }
    Error::check_dim("critic input", actor.input_size() + actor.output_size(), critic.input_size())?;
    if let Some(p) = penalty {
        Error::check_dim("penalty center", actor.output_size(), p.center.len())?;
    }
    let n = states.len() as f64;
    let m = actor.input_size();
    let mut grads = GradientBundle::zeros_like(actor);
    let mut points = Vec::with_capacity(states.len());
    for s in states {
        let tape = actor.forward_tape(s)?;
        let proto = tape.output().to_vec();
        let dq = critic.backward(&critic_input(s, &proto), &[1.0])?;
        let mut action_grad: Vec<f64> = dq.input[m..].to_vec();
        if let Some(p) = penalty {
            for (g, d) in action_grad.iter_mut().zip(p.gradient(&proto)) {
                *g -= d;
            }
        }
        action_grad.iter_mut().for_each(|g| *g /= n);
        actor.accumulate_gradient(&tape, &action_grad, &mut grads)?;
        points.push(proto);
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite("actor gradient".into()));
    }
    Ok((grads, points))
}

/// One ascent step for the actor; returns the gradient norm.
pub fn actor_update(
    actor: &mut Mlp,
    critic: &Mlp,
    optimizer: &mut Adam,
    states: &[&[f64]],
    penalty: Option<&ActionPenalty>,
) -> Result<f64> {
    let (mut grads, _) = actor_gradient(actor, critic, states, penalty)?;
    let norm = grads.param_norm();
    grads.scale(-1.0);
    optimizer.step(actor, &grads)?;
    Ok(norm)
}
