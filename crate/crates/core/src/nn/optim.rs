use serde::{Deserialize, Serialize};

use super::mlp::{GradientBundle, Mlp};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            ..Default::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam moment estimates for one network. Gradients passed to [`Adam::step`]
/// are descended; negate them to ascend.
#[derive(Clone, Debug)]
pub struct Adam {
    config: AdamConfig,
    first: Vec<f64>,
    second: Vec<f64>,
    steps: u64,
}

impl Adam {
    pub fn new(net: &Mlp, config: AdamConfig) -> Self {
        let n = net.num_params();
        Adam {
            config,
            first: vec![0.0; n],
            second: vec![0.0; n],
            steps: 0,
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &GradientBundle) -> Result<()> {
        if !grads.shape_matches(net) || self.first.len() != net.num_params() {
            return Err(Error::ArchitectureMismatch(net.layer_sizes(), vec![]));
        }
        if let Some(bad) = grads.params().find(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient entry {bad}")));
        }
        self.steps += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.steps as i32;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);
        let moments = self.first.iter_mut().zip(self.second.iter_mut());
        for ((p, g), (m, v)) in net.params_mut().zip(grads.params()).zip(moments) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
        if !net.all_finite() {
            return Err(Error::NonFinite("parameter after optimizer step".into()));
        }
        Ok(())
    }
}

/// Polyak averaging: `target ← tau·source + (1 − tau)·target`.
pub fn soft_update(target: &mut Mlp, source: &Mlp, tau: f64) -> Result<()> {
    if !target.same_architecture(source) {
        return Err(Error::ArchitectureMismatch(
            target.layer_sizes(),
            source.layer_sizes(),
        ));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::invalid(format!("tau must lie in [0, 1], got {tau}")));
    }
    for (t, s) in target.params_mut().zip(source.params()) {
        *t = tau * s + (1.0 - tau) * *t;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, OutputActivation};
    use crate::rng;

    fn scalar_net(w: f64) -> Mlp {
        let mut net = Mlp::zeros(&[1, 1], Activation::Identity, OutputActivation::Identity).unwrap();
        net.layers_mut()[0].weights_mut()[0] = w;
        net
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut r = rng::stream(1, 0);
        let mut net = Mlp::new(&[3, 4, 1], Activation::Relu, OutputActivation::Identity, &mut r).unwrap();
        let before = net.clone();
        let mut opt = Adam::new(&net, AdamConfig::default());
        opt.step(&mut net, &GradientBundle::zeros_like(&before)).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn descends_on_square() {
        // f(w) = w², df/dw = 2w evaluated at w = 1
        let mut net = scalar_net(1.0);
        let mut opt = Adam::new(&net, AdamConfig::with_lr(1e-4));
        let mut g = GradientBundle::zeros_like(&net);
        g.layers[0].weights[0] = 2.0;
        opt.step(&mut net, &g).unwrap();
        let w = net.layers()[0].weights()[0];
        assert!(w.abs() < 1.0);
    }

    #[test]
    fn least_squares_fit_converges() {
        // y = 2x - 1 on x ∈ {-1, -0.5, 0, 0.5, 1}; closed form is w = 2, b = -1
        // with zero residual, so the loss floor is 0.
        let xs = [-1.0, -0.5, 0.0, 0.5, 1.0];
        let mut net = Mlp::zeros(&[1, 1], Activation::Identity, OutputActivation::Identity).unwrap();
        let mut opt = Adam::new(&net, AdamConfig::with_lr(0.05));
        let loss = |net: &Mlp| {
            xs.iter()
                .map(|&x| {
                    let e = net.forward(&[x]).unwrap()[0] - (2.0 * x - 1.0);
                    e * e
                })
                .sum::<f64>()
                / xs.len() as f64
        };
        for _ in 0..200 {
            let mut g = GradientBundle::zeros_like(&net);
            for &x in &xs {
                let tape = net.forward_tape(&[x]).unwrap();
                let e = tape.output()[0] - (2.0 * x - 1.0);
                net.accumulate_gradient(&tape, &[2.0 * e / xs.len() as f64], &mut g)
                    .unwrap();
            }
            opt.step(&mut net, &g).unwrap();
        }
        assert!(loss(&net) < 1e-3, "loss {}", loss(&net));
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut net = scalar_net(1.0);
        let mut opt = Adam::new(&net, AdamConfig::default());
        let mut g = GradientBundle::zeros_like(&net);
        g.layers[0].biases[0] = f64::NAN;
        assert!(matches!(opt.step(&mut net, &g), Err(Error::NonFinite(_))));
    }

    #[test]
    fn soft_update_endpoints() {
        let mut r = rng::stream(9, 0);
        let src = Mlp::new(&[2, 3, 1], Activation::Relu, OutputActivation::Identity, &mut r).unwrap();
        let tgt0 = Mlp::new(&[2, 3, 1], Activation::Relu, OutputActivation::Identity, &mut r).unwrap();

        let mut t = tgt0.clone();
        soft_update(&mut t, &src, 1.0).unwrap();
        assert_eq!(t, src);

        let mut t = tgt0.clone();
        soft_update(&mut t, &src, 0.0).unwrap();
        assert_eq!(t, tgt0);
    }

    #[test]
    fn soft_update_half_interpolates() {
        let mut src = Mlp::zeros(&[2, 2], Activation::Relu, OutputActivation::Identity).unwrap();
        src.params_mut().for_each(|p| *p = 1.0);
        let mut tgt = Mlp::zeros(&[2, 2], Activation::Relu, OutputActivation::Identity).unwrap();
        soft_update(&mut tgt, &src, 0.5).unwrap();
        assert!(tgt.params().all(|&p| p == 0.5));
    }

    #[test]
    fn soft_update_rejects_mismatched_shapes() {
        let a = Mlp::zeros(&[2, 2], Activation::Relu, OutputActivation::Identity).unwrap();
        let mut b = Mlp::zeros(&[2, 3], Activation::Relu, OutputActivation::Identity).unwrap();
        assert!(matches!(
            soft_update(&mut b, &a, 0.1),
            Err(Error::ArchitectureMismatch(..))
        ));
    }
}
