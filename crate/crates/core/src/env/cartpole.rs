//! Cart-pole swing-up with a discretized force range.
//!
//! Frictionless cart on a bounded track carrying a uniform rod. The pole angle
//! is measured from upright, so the pole hangs at `θ = π`. Integration is RK4
//! with several substeps per control step. Reward is 1 while the pole is within
//! 5° of upright and the cart is near the track center, otherwise 0.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{EnvStep, Environment};
use crate::index::{ActionId, ActionSet};
use crate::rng;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CartPoleParams {
    pub cart_mass: f64,
    pub pole_mass: f64,
    pub gravity: f64,
    pub force_max: f64,
    pub dt: f64,
    pub substeps: usize,
    pub track_half_width: f64,
    /// Range of the pole half-length, drawn uniformly at each reset.
    pub half_length_min: f64,
    pub half_length_max: f64,
    pub max_steps: usize,
    pub upright_tolerance_deg: f64,
    /// Cart must stay within this fraction of the track half-width to earn reward.
    pub center_fraction: f64,
}

impl Default for CartPoleParams {
    fn default() -> Self {
        CartPoleParams {
            cart_mass: 1.0,
            pole_mass: 0.1,
            gravity: 9.81,
            force_max: 10.0,
            dt: 0.01,
            substeps: 5,
            track_half_width: 2.4,
            half_length_min: 0.4,
            half_length_max: 0.7,
            max_steps: 500,
            upright_tolerance_deg: 5.0,
            center_fraction: 0.1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CartPoleState {
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
    pub half_length: f64,
}

/// `(ẍ, θ̈)` under horizontal force `force`.
pub fn accelerations(p: &CartPoleParams, s: &CartPoleState, force: f64) -> (f64, f64) {
    let total = p.cart_mass + p.pole_mass;
    let (sin, cos) = s.theta.sin_cos();
    let l = s.half_length;
    let tmp = (force + p.pole_mass * l * s.theta_dot * s.theta_dot * sin) / total;
    let theta_acc = (p.gravity * sin - cos * tmp) / (l * (4.0 / 3.0 - p.pole_mass * cos * cos / total));
    let x_acc = tmp - p.pole_mass * l * theta_acc * cos / total;
    (x_acc, theta_acc)
}

/// One RK4 step of length `h` with constant force.
pub fn rk4_step(p: &CartPoleParams, s: &CartPoleState, force: f64, h: f64) -> CartPoleState {
    let deriv = |st: &CartPoleState| {
        let (xa, ta) = accelerations(p, st, force);
        [st.x_dot, xa, st.theta_dot, ta]
    };
    let shift = |d: &[f64; 4], k: f64| CartPoleState {
        x: s.x + k * d[0],
        x_dot: s.x_dot + k * d[1],
        theta: s.theta + k * d[2],
        theta_dot: s.theta_dot + k * d[3],
        half_length: s.half_length,
    };
    let k1 = deriv(s);
    let k2 = deriv(&shift(&k1, h / 2.0));
    let k3 = deriv(&shift(&k2, h / 2.0));
    let k4 = deriv(&shift(&k3, h));
    let mut d = [0.0; 4];
    for i in 0..4 {
        d[i] = (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) / 6.0;
    }
    shift(&d, h)
}

/// Total mechanical energy: kinetic energy of cart and rod plus the rod's
/// potential energy about the pivot height.
pub fn energy(p: &CartPoleParams, s: &CartPoleState) -> f64 {
    let (m, l) = (p.pole_mass, s.half_length);
    0.5 * (p.cart_mass + m) * s.x_dot * s.x_dot
        + m * l * s.x_dot * s.theta_dot * s.theta.cos()
        + (2.0 / 3.0) * m * l * l * s.theta_dot * s.theta_dot
        + m * p.gravity * l * s.theta.cos()
}

/// Angle wrapped into `(-π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t - 2.0 * PI
    } else {
        t
    }
}

/// `count` forces evenly spaced over `[-force_max, force_max]`, endpoints exact.
pub fn force_action_set(count: usize, force_max: f64) -> Result<ActionSet> {
    if count < 2 {
        return Err(Error::invalid("cart-pole needs at least 2 force levels"));
    }
    let last = (count - 1) as f64;
    let data = (0..count)
        .map(|i| {
            if i == count - 1 {
                force_max
            } else {
                -force_max + 2.0 * force_max * i as f64 / last
            }
        })
        .collect();
    ActionSet::from_flat(1, data)
}

#[derive(Clone, Debug)]
pub struct CartPoleSwingUp {
    params: CartPoleParams,
    actions: Arc<ActionSet>,
    rng: rng::Rng,
    state: CartPoleState,
    steps: usize,
    done: bool,
}

impl CartPoleSwingUp {
    pub fn new(params: CartPoleParams, num_actions: usize, seed: u64) -> Result<Self> {
        if params.substeps == 0 || !(params.dt > 0.0) {
            return Err(Error::invalid("cart-pole needs a positive step and substep count"));
        }
        if !(params.half_length_min > 0.0 && params.half_length_min <= params.half_length_max) {
            return Err(Error::invalid("invalid pole length range"));
        }
        let actions = Arc::new(force_action_set(num_actions, params.force_max)?);
        let mut env = CartPoleSwingUp {
            params,
            actions,
            rng: rng::stream(seed, rng::streams::ENV),
            state: CartPoleState {
                x: 0.0,
                x_dot: 0.0,
                theta: PI,
                theta_dot: 0.0,
                half_length: params.half_length_min,
            },
            steps: 0,
            done: true,
        };
        env.reset();
        Ok(env)
    }

    pub fn params(&self) -> &CartPoleParams {
        &self.params
    }

    pub fn state(&self) -> &CartPoleState {
        &self.state
    }

    pub fn set_state(&mut self, state: CartPoleState) {
        self.state = state;
        self.steps = 0;
        self.done = false;
    }

    pub fn observe(&self) -> Vec<f64> {
        let s = &self.state;
        vec![s.x, s.x_dot, s.theta.sin(), s.theta.cos(), s.theta_dot, s.half_length]
    }

    fn rewarded(&self) -> bool {
        let p = &self.params;
        wrap_angle(self.state.theta).abs() <= p.upright_tolerance_deg.to_radians()
            && self.state.x.abs() <= p.center_fraction * p.track_half_width
    }

    /// Advances one control step under a raw force, clamped to the allowed range.
    pub fn step_force(&mut self, force: f64) -> Result<EnvStep> {
        if self.done {
            return Err(Error::EpisodeOver);
        }
        let p = self.params;
        let force = force.clamp(-p.force_max, p.force_max);
        let h = p.dt / p.substeps as f64;
        for _ in 0..p.substeps {
            self.state = rk4_step(&p, &self.state, force, h);
            if self.state.x.abs() > p.track_half_width {
                self.state.x = self.state.x.clamp(-p.track_half_width, p.track_half_width);
                self.state.x_dot = 0.0;
            }
        }
        let obs = self.observe();
        if obs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("cart-pole state".into()));
        }
        self.steps += 1;
        let truncated = self.steps >= p.max_steps;
        self.done = truncated;
        Ok(EnvStep {
            observation: obs,
            reward: if self.rewarded() { 1.0 } else { 0.0 },
            terminal: false,
            truncated,
        })
    }
}

impl Environment for CartPoleSwingUp {
    fn observation_dim(&self) -> usize {
        6
    }

    fn action_set(&self) -> &Arc<ActionSet> {
        &self.actions
    }

    /// Pole hanging down with a small random offset, cart near the center.
    fn reset(&mut self) -> Vec<f64> {
        let p = self.params;
        let r = &mut self.rng;
        self.state = CartPoleState {
            x: r.random_range(-0.05..=0.05),
            x_dot: r.random_range(-0.05..=0.05),
            theta: PI + r.random_range(-0.05..=0.05),
            theta_dot: r.random_range(-0.05..=0.05),
            half_length: r.random_range(p.half_length_min..=p.half_length_max),
        };
        self.steps = 0;
        self.done = false;
        self.observe()
    }

    fn step(&mut self, action: ActionId) -> Result<EnvStep> {
        let force = self.actions.try_get(action)?[0];
        self.step_force(force)
    }

    fn fork(&self, seed: u64) -> Self {
        let mut env = self.clone();
        env.rng = rng::stream(seed, rng::streams::ENV);
        env.reset();
        env
    }
}
