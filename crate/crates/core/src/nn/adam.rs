use serde::{Deserialize, Serialize};

use super::{Mlp, NnError, ParamKind, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            step_size: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected adaptive-moment optimizer state for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    first_moment: Mlp,
    second_moment: Mlp,
    step_count: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &Mlp) -> Self {
        Self {
            config,
            first_moment: params.zeros_like(),
            second_moment: params.zeros_like(),
            step_count: 0,
        }
    }

    /// Rebuilds a state from checkpointed moments.
    pub fn from_parts(
        config: AdamConfig,
        first_moment: Mlp,
        second_moment: Mlp,
        step_count: u64,
    ) -> Result<Self> {
        if !first_moment.same_shape(&second_moment) {
            return Err(NnError::ShapeMismatch("adam moments differ in shape".into()));
        }
        Ok(Self {
            config,
            first_moment,
            second_moment,
            step_count,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moment(&self) -> &Mlp {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &Mlp {
        &self.second_moment
    }

    /// Applies one update. Nothing is modified when the gradient holds a
    /// non-finite value.
    pub fn step(&mut self, params: &mut Mlp, grads: &Mlp) -> Result<()> {
        if !params.same_shape(grads) || !params.same_shape(&self.first_moment) {
            return Err(NnError::ShapeMismatch(format!(
                "optimizer step: params {:?}, grads {:?}, state {:?}",
                params.dims(),
                grads.dims(),
                self.first_moment.dims()
            )));
        }
        let iteration = self.step_count + 1;
        for (l, layer) in grads.layers().iter().enumerate() {
            if let Some(index) = layer.weights().iter().position(|g| !g.is_finite()) {
                return Err(NnError::NonFiniteGradient {
                    iteration,
                    layer: l,
                    kind: ParamKind::Weight,
                    index,
                });
            }
            if let Some(index) = layer.biases().iter().position(|g| !g.is_finite()) {
                return Err(NnError::NonFiniteGradient {
                    iteration,
                    layer: l,
                    kind: ParamKind::Bias,
                    index,
                });
            }
        }

        self.step_count = iteration;
        let AdamConfig {
            step_size,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = iteration as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);

        let layers = params
            .layers_mut()
            .iter_mut()
            .zip(grads.layers())
            .zip(self.first_moment.layers_mut().iter_mut())
            .zip(self.second_moment.layers_mut().iter_mut());
        for (((p, g), m), v) in layers {
            update_block(
                p.weights_mut(),
                g.weights(),
                m.weights_mut(),
                v.weights_mut(),
                [step_size, beta1, beta2, epsilon, c1, c2],
            );
            update_block(
                p.biases_mut(),
                g.biases(),
                m.biases_mut(),
                v.biases_mut(),
                [step_size, beta1, beta2, epsilon, c1, c2],
            );
        }
        Ok(())
    }
}

#[inline]
fn update_block(p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], k: [f64; 6]) {
    let [lr, b1, b2, eps, c1, c2] = k;
    for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}
