//! Clipped PPO with per-objective advantages and gradient projection. Only
//! one adapter group is trained; the base network and the other group are
//! read-only here.

mod adam;
mod critic;
mod gae;
mod pcgrad;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::{
    distribution::log_prob_grad, AdapterSet, ParamGroup, PolicyConfig, PolicyError, PolicyNet,
};
use crate::reward::ObjectiveSplit;
use crate::sim::TutorAction;
pub use adam::{cosine_lr, Adam};
pub use critic::ValueNet;
pub use gae::compute_gae;
pub use pcgrad::{pcgrad_project, pcgrad_sequential};

#[derive(Debug, Error)]
pub enum PpoError {
    #[error("rollout buffer is empty")]
    EmptyBuffer,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid PPO configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    /// Project every task gradient against the original others, then sum.
    #[default]
    OneShot,
    /// Randomized sequential projection against the running gradient.
    Sequential,
    /// Plain sum of task gradients.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub clip: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub lr: f64,
    pub critic_lr: f64,
    pub critic_hidden: usize,
    pub epochs: usize,
    pub minibatch: usize,
    /// Environment steps between updates.
    pub k_update: usize,
    pub entropy_coef: f64,
    pub normalize_advantages: bool,
    pub projection: Projection,
    pub objectives: ObjectiveSplit,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            lr: 1e-5,
            critic_lr: 1e-3,
            critic_hidden: 64,
            epochs: 4,
            minibatch: 256,
            k_update: 2048,
            entropy_coef: 0.01,
            normalize_advantages: true,
            projection: Projection::OneShot,
            objectives: ObjectiveSplit::Layers,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), PpoError> {
        let bad = |m: &str| Err(PpoError::Config(m.into()));
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return bad("clip must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gamma and gae_lambda must lie in [0, 1]");
        }
        if !(self.lr >= 0.0 && self.critic_lr >= 0.0 && self.entropy_coef >= 0.0) {
            return bad("learning rates and entropy_coef must be non-negative");
        }
        if self.epochs == 0 || self.minibatch == 0 || self.k_update == 0 || self.critic_hidden == 0 {
            return bad("epochs, minibatch, k_update and critic_hidden must be positive");
        }
        Ok(())
    }

    /// Optimizer steps taken by one update of a full buffer.
    pub fn steps_per_update(&self) -> u64 {
        (self.epochs * self.k_update.div_ceil(self.minibatch)) as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub features: Vec<f64>,
    pub action: TutorAction,
    /// Per-objective rewards; they sum to `total`.
    pub rewards: Vec<f64>,
    pub total: f64,
    pub log_prob: f64,
    pub values: Vec<f64>,
    pub done: bool,
}

/// On-policy storage for one individual between updates.
#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    objectives: usize,
    transitions: Vec<Transition>,
    /// Value estimate of the state following the last transition.
    bootstrap: Vec<f64>,
}

impl RolloutBuffer {
    pub fn new(objectives: usize, capacity: usize) -> Self {
        Self {
            objectives,
            transitions: Vec::with_capacity(capacity),
            bootstrap: vec![0.0; objectives],
        }
    }

    pub fn push(&mut self, t: Transition) -> Result<(), PpoError> {
        if t.rewards.len() != self.objectives || t.values.len() != self.objectives {
            return Err(PpoError::Shape(format!(
                "transition has {} rewards / {} values, buffer expects {}",
                t.rewards.len(),
                t.values.len(),
                self.objectives
            )));
        }
        self.transitions.push(t);
        Ok(())
    }

    pub fn set_bootstrap(&mut self, values: Vec<f64>) {
        self.bootstrap = values;
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn clear(&mut self) {
        self.transitions.clear();
        self.bootstrap.fill(0.0);
    }

    /// Per-objective advantages and returns, indexed `[objective][t]`.
    pub fn advantages(&self, gamma: f64, lambda: f64) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>), PpoError> {
        let dones: Vec<bool> = self.transitions.iter().map(|t| t.done).collect();
        let mut adv = Vec::with_capacity(self.objectives);
        let mut ret = Vec::with_capacity(self.objectives);
        for k in 0..self.objectives {
            let r: Vec<f64> = self.transitions.iter().map(|t| t.rewards[k]).collect();
            let v: Vec<f64> = self.transitions.iter().map(|t| t.values[k]).collect();
            let (a, g) = compute_gae(&r, &v, &dones, self.bootstrap[k], gamma, lambda)?;
            adv.push(a);
            ret.push(g);
        }
        Ok((adv, ret))
    }
}

/// Centers each objective's advantages and scales all of them by the
/// standard deviation of their sum, so the summed advantage has mean 0 and
/// std 1 while the relative scale of the objectives is kept.
pub fn normalize_advantages(adv: &mut [Vec<f64>]) {
    let n = adv.first().map_or(0, Vec::len);
    if n == 0 {
        return;
    }
    for a in adv.iter_mut() {
        let mean = a.iter().sum::<f64>() / n as f64;
        a.iter_mut().for_each(|x| *x -= mean);
    }
    let var = (0..n)
        .map(|t| adv.iter().map(|a| a[t]).sum::<f64>().powi(2))
        .sum::<f64>()
        / n as f64;
    let scale = 1.0 / (var.sqrt() + 1e-8);
    for a in adv.iter_mut() {
        a.iter_mut().for_each(|x| *x *= scale);
    }
}

/// One training sample: a stored transition and its advantage per objective.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub transition: &'a Transition,
    pub advantages: &'a [f64],
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TaskGradients {
    /// Ascent direction of each objective's clipped surrogate, flat over the
    /// trained adapter group.
    pub per_task: Vec<Vec<f64>>,
    /// Ascent direction of the mean policy entropy.
    pub entropy: Vec<f64>,
    pub mean_entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

/// Clipped surrogate `mean_i min(rho_i A_ik, clip(rho_i) A_ik)` for objective `k`.
pub fn surrogate(net: &PolicyNet, samples: &[Sample<'_>], k: usize, clip: f64) -> Result<f64, PpoError> {
    let mut total = 0.0;
    for s in samples {
        let dist = net.forward(&s.transition.features)?;
        let lp = crate::policy::log_prob(&dist, &s.transition.action)?;
        let rho = (lp - s.transition.log_prob).exp();
        let a = s.advantages[k];
        total += (rho * a).min(rho.clamp(1.0 - clip, 1.0 + clip) * a);
    }
    Ok(total / samples.len() as f64)
}

/// Gradients of every objective's clipped surrogate and of the entropy with
/// respect to one adapter group. Other parameters receive nothing.
pub fn per_task_gradients(
    adapters: &AdapterSet,
    net: &PolicyNet,
    group: ParamGroup,
    samples: &[Sample<'_>],
    clip: f64,
) -> Result<TaskGradients, PpoError> {
    let k = samples.first().ok_or(PpoError::EmptyBuffer)?.advantages.len();
    let inv = 1.0 / samples.len() as f64;
    let mut dw: Vec<_> = (0..k).map(|_| net.zero_weight_grads()).collect();
    let mut dw_ent = net.zero_weight_grads();
    let mut out = TaskGradients::default();
    let mut clipped = 0usize;
    for s in samples {
        let cache = net.forward_cached(&s.transition.features)?;
        let dist = net.distribution(&cache.output);
        let (lp, g_out) = log_prob_grad(&dist, &s.transition.action)?;
        let log_ratio = lp - s.transition.log_prob;
        let rho = log_ratio.exp();
        out.approx_kl += ((rho - 1.0) - log_ratio) * inv;
        if (rho - 1.0).abs() > clip {
            clipped += 1;
        }
        let deltas = net.deltas(&cache, &g_out);
        for (task, dwk) in dw.iter_mut().enumerate() {
            let a = s.advantages[task];
            // d/dtheta min(rho A, clip(rho) A) is rho A grad log pi on the
            // unclipped branch and zero otherwise
            let active = if a >= 0.0 { rho < 1.0 + clip } else { rho > 1.0 - clip };
            if !active || a == 0.0 {
                continue;
            }
            let c = a * rho * inv;
            for (l, d) in deltas.iter().enumerate() {
                dwk[l].ger(c, d, &cache.inputs[l], 1.0);
            }
        }
        let (h, g_ent) = dist.entropy_with_grad();
        out.mean_entropy += h * inv;
        for (l, d) in net.deltas(&cache, &g_ent).iter().enumerate() {
            dw_ent[l].ger(inv, d, &cache.inputs[l], 1.0);
        }
    }
    out.per_task = dw.iter().map(|d| adapters.factor_gradient(group, d)).collect();
    out.entropy = adapters.factor_gradient(group, &dw_ent);
    out.clip_fraction = clipped as f64 * inv;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub entropy: f64,
    pub value_loss: f64,
    pub skipped: u64,
}

/// Optimizer and critic state for one individual's inner loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpoLearner {
    pub config: PpoConfig,
    pub group: ParamGroup,
    pub critic: ValueNet,
    pub policy_opt: Adam,
    pub critic_opt: Adam,
    /// Optimizer steps taken so far and the schedule length.
    pub step: u64,
    pub total_steps: u64,
    /// Steps skipped because the gradient was not finite.
    pub skipped: u64,
}

impl PpoLearner {
    pub fn new<R: Rng + ?Sized>(
        config: PpoConfig,
        adapters: &AdapterSet,
        group: ParamGroup,
        total_steps: u64,
        rng: &mut R,
    ) -> Self {
        let dims = adapters.dims();
        let critic = ValueNet::init(dims.input, config.critic_hidden, config.objectives.len(), rng);
        Self {
            policy_opt: Adam::new(adapters.param_count(group)),
            critic_opt: Adam::new(critic.params.len()),
            config,
            group,
            critic,
            step: 0,
            total_steps,
            skipped: 0,
        }
    }

    pub fn values(&self, features: &[f64]) -> Vec<f64> {
        self.critic.values(features)
    }

    fn combine(&self, grads: &TaskGradients, rng: &mut (impl Rng + ?Sized)) -> Result<Vec<f64>, PpoError> {
        let mut g = match self.config.projection {
            Projection::OneShot => pcgrad_project(&grads.per_task)?,
            Projection::Sequential => pcgrad_sequential(&grads.per_task, rng)?,
            Projection::None => {
                let mut sum = vec![0.0; grads.entropy.len()];
                for t in &grads.per_task {
                    sum.iter_mut().zip(t).for_each(|(s, x)| *s += x);
                }
                sum
            }
        };
        g.iter_mut()
            .zip(&grads.entropy)
            .for_each(|(x, e)| *x += self.config.entropy_coef * e);
        Ok(g)
    }

    /// Runs `epochs` passes of shuffled minibatch updates over the buffer.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        adapters: &mut AdapterSet,
        policy_config: &PolicyConfig,
        buffer: &RolloutBuffer,
        rng: &mut R,
    ) -> Result<UpdateStats, PpoError> {
        if buffer.is_empty() {
            return Err(PpoError::EmptyBuffer);
        }
        let cfg = self.config;
        let (mut adv, ret) = buffer.advantages(cfg.gamma, cfg.gae_lambda)?;
        if cfg.normalize_advantages {
            normalize_advantages(&mut adv);
        }
        let n = buffer.len();
        let k = adv.len();
        let per_sample_adv: Vec<Vec<f64>> = (0..n).map(|t| (0..k).map(|j| adv[j][t]).collect()).collect();
        let per_sample_ret: Vec<Vec<f64>> = (0..n).map(|t| (0..k).map(|j| ret[j][t]).collect()).collect();

        self.critic.update_target_stats(&per_sample_ret);
        let mut stats = UpdateStats::default();
        let mut batches = 0.0;
        let mut order: Vec<usize> = (0..n).collect();
        for _ in 0..cfg.epochs {
            order.shuffle(rng);
            for chunk in order.chunks(cfg.minibatch) {
                let lr_scale = cosine_lr(1.0, self.step, self.total_steps);
                self.step += 1;
                let samples: Vec<Sample> = chunk
                    .iter()
                    .map(|&i| Sample {
                        transition: &buffer.transitions[i],
                        advantages: &per_sample_adv[i],
                    })
                    .collect();
                let net = PolicyNet::from_adapters(adapters, policy_config)?;
                let grads = per_task_gradients(adapters, &net, self.group, &samples, cfg.clip)?;
                let ascent = self.combine(&grads, rng)?;
                if ascent.iter().all(|x| x.is_finite()) {
                    let descent: Vec<f64> = ascent.iter().map(|x| -x).collect();
                    let mut theta = adapters.flatten(self.group);
                    self.policy_opt.step(&mut theta, &descent, cfg.lr * lr_scale);
                    adapters.set_flat(self.group, &theta)?;
                } else {
                    self.skipped += 1;
                    stats.skipped += 1;
                }

                let mut cg = vec![0.0; self.critic.params.len()];
                let inv = 1.0 / chunk.len() as f64;
                let mut vloss = 0.0;
                for &i in chunk {
                    let t = &buffer.transitions[i];
                    vloss += self.critic.accumulate_mse_grad(&t.features, &per_sample_ret[i], inv, &mut cg) * inv;
                }
                if cg.iter().all(|x| x.is_finite()) {
                    let mut params = std::mem::take(&mut self.critic.params);
                    self.critic_opt.step(&mut params, &cg, cfg.critic_lr * lr_scale);
                    self.critic.params = params;
                }

                stats.approx_kl += grads.approx_kl;
                stats.clip_fraction += grads.clip_fraction;
                stats.entropy += grads.mean_entropy;
                stats.value_loss += vloss;
                batches += 1.0;
            }
        }
        stats.approx_kl /= batches;
        stats.clip_fraction /= batches;
        stats.entropy /= batches;
        stats.value_loss /= batches;
        Ok(stats)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{sample_action, BaseNetwork, PolicyDims};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn small_policy(seed: u64) -> (AdapterSet, PolicyConfig) {
        let dims = PolicyDims {
            input: 6,
            hidden: 8,
            concepts: 3,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = Arc::new(BaseNetwork::init(dims, -0.5, &mut rng));
        let mut a = AdapterSet::init(base, 2, 2, 0.1, 0.3, &mut rng);
        for p in &mut a.rl {
            p.b.iter_mut().enumerate().for_each(|(i, v)| *v = 0.1 * ((i * 7) as f64).sin());
        }
        (a, PolicyConfig::default())
    }

    fn features(rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..6).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn transitions(a: &AdapterSet, cfg: &PolicyConfig, n: usize, seed: u64) -> Vec<Transition> {
        let net = PolicyNet::from_adapters(a, cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let x = features(&mut rng);
                let (action, lp) = sample_action(&net.forward(&x).unwrap(), &mut rng);
                Transition {
                    features: x,
                    action,
                    rewards: vec![0.0; 3],
                    total: 0.0,
                    // shifted so the ratio is away from 1 but inside the clip range
                    log_prob: lp + 0.05 * ((i % 3) as f64 - 1.0),
                    values: vec![0.0; 3],
                    done: false,
                }
            })
            .collect()
    }

    #[test]
    fn ratio_is_one_at_collection() {
        let (a, cfg) = small_policy(0);
        let net = PolicyNet::from_adapters(&a, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let x = features(&mut rng);
            let (action, lp) = sample_action(&net.forward(&x).unwrap(), &mut rng);
            let again = crate::policy::log_prob(&net.forward(&x).unwrap(), &action).unwrap();
            assert_eq!((again - lp).exp(), 1.0);
        }
    }

    #[test]
    fn task_gradients_match_finite_differences() {
        let (a, cfg) = small_policy(2);
        let ts = transitions(&a, &cfg, 6, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let adv: Vec<Vec<f64>> = (0..6).map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let samples: Vec<Sample> = ts
            .iter()
            .zip(&adv)
            .map(|(t, a)| Sample {
                transition: t,
                advantages: a,
            })
            .collect();
        let net = PolicyNet::from_adapters(&a, &cfg).unwrap();
        let g = per_task_gradients(&a, &net, ParamGroup::Rl, &samples, 0.2).unwrap();
        let theta = a.flatten(ParamGroup::Rl);
        assert_eq!(g.per_task.len(), 3);
        for k in 0..3 {
            assert_eq!(g.per_task[k].len(), theta.len());
            let h = 1e-6;
            for i in 0..theta.len() {
                let eval = |delta: f64| {
                    let mut b = a.clone();
                    let mut t = theta.clone();
                    t[i] += delta;
                    b.set_flat(ParamGroup::Rl, &t).unwrap();
                    surrogate(&PolicyNet::from_adapters(&b, &cfg).unwrap(), &samples, k, 0.2).unwrap()
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let an = g.per_task[k][i];
                assert!((fd - an).abs() <= 1e-3 * fd.abs().max(1e-4), "task {k} [{i}] fd {fd} vs {an}");
            }
        }
    }

    #[test]
    fn zero_advantage_channel_has_zero_gradient() {
        let (a, cfg) = small_policy(5);
        let ts = transitions(&a, &cfg, 8, 6);
        let adv = vec![vec![0.0, 1.0, -1.0]; 8];
        let samples: Vec<Sample> = ts
            .iter()
            .zip(&adv)
            .map(|(t, a)| Sample {
                transition: t,
                advantages: a,
            })
            .collect();
        let net = PolicyNet::from_adapters(&a, &cfg).unwrap();
        let g = per_task_gradients(&a, &net, ParamGroup::Rl, &samples, 0.2).unwrap();
        let norm: f64 = g.per_task[0].iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm < 1e-6);
        assert!(g.per_task[1].iter().any(|x| x.abs() > 1e-6));
    }

    #[test]
    fn normalization_keeps_channel_ratios() {
        let mut adv = vec![vec![1.0, 2.0, 3.0, 4.0], vec![2.0, 4.0, 6.0, 8.0]];
        normalize_advantages(&mut adv);
        let sum: Vec<f64> = (0..4).map(|t| adv[0][t] + adv[1][t]).collect();
        let mean = sum.iter().sum::<f64>() / 4.0;
        let var = sum.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-6);
        for t in 0..4 {
            assert!((adv[1][t] - 2.0 * adv[0][t]).abs() < 1e-12);
        }
    }

    fn bandit_buffer(a: &AdapterSet, cfg: &PolicyConfig, learner: &PpoLearner, n: usize, rng: &mut ChaCha8Rng) -> (RolloutBuffer, f64) {
        let net = PolicyNet::from_adapters(a, cfg).unwrap();
        let mut buf = RolloutBuffer::new(3, n);
        let x = vec![0.5; 6];
        let mut mean_dir = 0.0;
        for _ in 0..n {
            let (action, lp) = sample_action(&net.forward(&x).unwrap(), rng);
            mean_dir += action.directness / n as f64;
            let rewards = vec![-action.directness, 0.0, 0.0];
            buf.push(Transition {
                features: x.clone(),
                action,
                total: rewards[0],
                rewards,
                log_prob: lp,
                values: learner.values(&x),
                done: true,
            })
            .unwrap();
        }
        (buf, mean_dir)
    }

    #[test]
    fn learns_to_reduce_penalized_field_and_keeps_partition() {
        let (mut a, cfg) = small_policy(7);
        a.reset_rl();
        let base_hash = a.base().fingerprint();
        let ea = a.flatten(ParamGroup::Ea);
        let ppo = PpoConfig {
            lr: 1e-2,
            minibatch: 64,
            k_update: 256,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut learner = PpoLearner::new(ppo, &a, ParamGroup::Rl, 1_000_000, &mut rng);
        let (_, before) = bandit_buffer(&a, &cfg, &learner, 2000, &mut rng);
        for _ in 0..15 {
            let (buf, _) = bandit_buffer(&a, &cfg, &learner, 256, &mut rng);
            learner.update(&mut a, &cfg, &buf, &mut rng).unwrap();
        }
        let (_, after) = bandit_buffer(&a, &cfg, &learner, 2000, &mut rng);
        assert!(after < before - 0.1, "directness {before} -> {after}");
        assert_eq!(a.base().fingerprint(), base_hash);
        assert_eq!(a.flatten(ParamGroup::Ea), ea);
        assert_eq!(learner.skipped, 0);
    }

    #[test]
    fn schedule_endpoint_freezes_parameters() {
        let (mut a, cfg) = small_policy(9);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let ppo = PpoConfig {
            lr: 1e-2,
            epochs: 1,
            minibatch: 32,
            ..Default::default()
        };
        let mut learner = PpoLearner::new(ppo, &a, ParamGroup::Rl, 0, &mut rng);
        let (buf, _) = bandit_buffer(&a, &cfg, &learner, 32, &mut rng);
        let before = a.flatten(ParamGroup::Rl);
        learner.update(&mut a, &cfg, &buf, &mut rng).unwrap();
        assert_eq!(a.flatten(ParamGroup::Rl), before);
    }

    #[test]
    fn non_finite_gradient_is_skipped() {
        let (mut a, cfg) = small_policy(11);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut learner = PpoLearner::new(PpoConfig::default(), &a, ParamGroup::Rl, 100, &mut rng);
        let (mut buf, _) = bandit_buffer(&a, &cfg, &learner, 16, &mut rng);
        buf.transitions[0].rewards[1] = f64::NAN;
        let before = a.flatten(ParamGroup::Rl);
        let stats = learner.update(&mut a, &cfg, &buf, &mut rng).unwrap();
        assert!(stats.skipped > 0);
        assert_eq!(learner.skipped, stats.skipped);
        assert_eq!(a.flatten(ParamGroup::Rl), before);
    }

    #[test]
    fn config_validation() {
        assert!(PpoConfig::default().validate().is_ok());
        assert!(PpoConfig { clip: 1.0, ..Default::default() }.validate().is_err());
        assert!(PpoConfig { gamma: 1.5, ..Default::default() }.validate().is_err());
        assert_eq!(PpoConfig::default().steps_per_update(), 32);
    }
}
