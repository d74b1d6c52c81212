use nalgebra::{DMatrix, DVector};

use super::{ActionDistribution, AdapterSet, PolicyConfig, PolicyDims, PolicyError};

/// Dense network with adapters merged into effective weights. Rebuild it
/// whenever the adapters change.
#[derive(Debug, Clone)]
pub struct PolicyNet {
    dims: PolicyDims,
    weights: Vec<DMatrix<f64>>,
    biases: Vec<DVector<f64>>,
    log_std_bounds: (f64, f64),
}

/// Per-layer inputs and the raw output of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub inputs: Vec<DVector<f64>>,
    pub output: DVector<f64>,
}

impl PolicyNet {
    pub fn from_adapters(adapters: &AdapterSet, config: &PolicyConfig) -> Result<Self, PolicyError> {
        let weights = (0..adapters.layer_count())
            .map(|l| adapters.effective_weight(l))
            .collect::<Result<Vec<_>, _>>()?;
        let biases = adapters.base().layers().iter().map(|l| l.bias.clone()).collect();
        Ok(Self {
            dims: adapters.dims(),
            weights,
            biases,
            log_std_bounds: (config.log_std_min, config.log_std_max),
        })
    }

    pub fn dims(&self) -> PolicyDims {
        self.dims
    }

    pub fn weight_shapes(&self) -> Vec<(usize, usize)> {
        self.weights.iter().map(|w| w.shape()).collect()
    }

    pub fn zero_weight_grads(&self) -> Vec<DMatrix<f64>> {
        self.weights
            .iter()
            .map(|w| DMatrix::zeros(w.nrows(), w.ncols()))
            .collect()
    }

    pub fn forward_cached(&self, features: &[f64]) -> Result<ForwardCache, PolicyError> {
        if features.len() != self.dims.input {
            return Err(PolicyError::InputDim {
                expected: self.dims.input,
                got: features.len(),
            });
        }
        let last = self.weights.len() - 1;
        let mut inputs = Vec::with_capacity(self.weights.len());
        let mut h = DVector::from_column_slice(features);
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = b.clone();
            z.gemv(1.0, w, &h, 1.0);
            if l != last {
                z.apply(|v| *v = v.tanh());
            }
            inputs.push(std::mem::replace(&mut h, z));
        }
        Ok(ForwardCache { inputs, output: h })
    }

    pub fn distribution(&self, output: &DVector<f64>) -> ActionDistribution {
        ActionDistribution::from_output(output.as_slice(), self.dims.concepts, self.log_std_bounds)
    }

    pub fn forward(&self, features: &[f64]) -> Result<ActionDistribution, PolicyError> {
        let cache = self.forward_cached(features)?;
        Ok(self.distribution(&cache.output))
    }

    /// Accumulates `d objective / d W_l` into `weight_grads` given the
    /// gradient of the objective with respect to the raw output vector.
    pub fn backward(&self, cache: &ForwardCache, grad_output: &[f64], weight_grads: &mut [DMatrix<f64>]) {
        for (l, delta) in self.deltas(cache, grad_output).iter().enumerate() {
            weight_grads[l].ger(1.0, delta, &cache.inputs[l], 1.0);
        }
    }

    /// Gradient with respect to each layer's pre-activation. The weight
    /// gradient of layer `l` is `deltas[l] * inputs[l]^T`.
    pub fn deltas(&self, cache: &ForwardCache, grad_output: &[f64]) -> Vec<DVector<f64>> {
        let n = self.weights.len();
        let mut out = vec![DVector::zeros(0); n];
        let mut delta = DVector::from_column_slice(grad_output);
        for l in (0..n).rev() {
            if l > 0 {
                let input = &cache.inputs[l];
                let mut g = self.weights[l].tr_mul(&delta);
                // input of layer l is the tanh output of layer l-1
                g.zip_apply(input, |gi, hi| *gi *= 1.0 - hi * hi);
                out[l] = std::mem::replace(&mut delta, g);
            } else {
                out[0] = std::mem::replace(&mut delta, DVector::zeros(0));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{distribution, BaseNetwork, ParamGroup};
    use crate::sim::TutorAction;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn setup(seed: u64) -> (AdapterSet, PolicyConfig) {
        let dims = PolicyDims {
            input: 6,
            hidden: 7,
            concepts: 4,
        };
        let config = PolicyConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = Arc::new(BaseNetwork::init(dims, -0.5, &mut rng));
        let mut a = AdapterSet::init(base, 3, 2, 0.2, 0.2, &mut rng);
        for p in &mut a.rl {
            p.b.iter_mut().enumerate().for_each(|(i, v)| *v = 0.05 * (i as f64).sin());
        }
        (a, config)
    }

    fn action() -> TutorAction {
        TutorAction {
            target: 2,
            difficulty: 0.3,
            ambiguity: 0.6,
            directness: 0.1,
            socratic_depth: 0.8,
            link_target: Some(0),
            tone: 0.45,
        }
    }

    fn objective(a: &AdapterSet, cfg: &PolicyConfig, x: &[f64]) -> f64 {
        let net = PolicyNet::from_adapters(a, cfg).unwrap();
        distribution::log_prob(&net.forward(x).unwrap(), &action()).unwrap()
    }

    #[test]
    fn input_dim_is_checked() {
        let (a, cfg) = setup(0);
        let net = PolicyNet::from_adapters(&a, &cfg).unwrap();
        assert_eq!(
            net.forward(&[0.0; 5]).unwrap_err(),
            PolicyError::InputDim { expected: 6, got: 5 }
        );
    }

    #[test]
    fn adapter_gradient_matches_finite_differences() {
        let x = [0.2, -0.4, 0.9, 0.1, -0.3, 0.5];
        for seed in 0..3 {
            let (a, cfg) = setup(seed);
            let net = PolicyNet::from_adapters(&a, &cfg).unwrap();
            let cache = net.forward_cached(&x).unwrap();
            let dist = net.distribution(&cache.output);
            let (_, g_out) = distribution::log_prob_grad(&dist, &action()).unwrap();
            let mut dw = net.zero_weight_grads();
            net.backward(&cache, &g_out, &mut dw);
            for group in [ParamGroup::Ea, ParamGroup::Rl] {
                let analytic = a.factor_gradient(group, &dw);
                let theta = a.flatten(group);
                let h = 1e-6;
                for i in (0..theta.len()).step_by(7) {
                    let mut plus = a.clone();
                    let mut minus = a.clone();
                    let mut t = theta.clone();
                    t[i] += h;
                    plus.set_flat(group, &t).unwrap();
                    t[i] -= 2.0 * h;
                    minus.set_flat(group, &t).unwrap();
                    let fd = (objective(&plus, &cfg, &x) - objective(&minus, &cfg, &x)) / (2.0 * h);
                    let err = (fd - analytic[i]).abs();
                    assert!(
                        err <= 1e-3 * fd.abs().max(1e-3),
                        "{group:?}[{i}]: fd {fd} vs {}",
                        analytic[i]
                    );
                }
            }
        }
    }
}
