use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::rng::{stream, Purpose, GENERATION_SCOPE};
use super::{RunConfig, TrainerError};
use crate::belief::{features, init_belief, BeliefFeatures, BeliefState};
use crate::graph::KnowledgeGraph;
use crate::metrics::TrajectoryRecord;
use crate::policy::{sample_action, AdapterSet, PolicyNet};
use crate::ppo::{PpoLearner, RolloutBuffer, Transition};
use crate::reward::{total_reward, EvaluationContext, Evaluator, RewardBreakdown};
use crate::sim::{LatentState, Observation, Simulator, TutorAction};

/// Read-only run context shared by every individual of a generation.
pub struct World<'a> {
    pub config: &'a RunConfig,
    pub graph: &'a KnowledgeGraph,
    pub sim: Simulator<'a>,
}

impl<'a> World<'a> {
    /// `config` must already have its ablations applied.
    pub fn new(config: &'a RunConfig, graph: &'a KnowledgeGraph) -> Self {
        Self {
            config,
            graph,
            sim: Simulator::new(graph, &config.scenario),
        }
    }

    pub fn feature_dim(&self) -> usize {
        input_dim(self.graph)
    }
}

/// Policy and critic input width: the belief features plus episode progress.
pub fn input_dim(graph: &KnowledgeGraph) -> usize {
    BeliefFeatures::dim(graph.concept_count(), graph.misconception_count()) + 1
}

/// One tutoring episode: a freshly sampled student and the tutor's belief.
pub struct Episode {
    pub latent: LatentState,
    pub belief: BeliefState<LatentState>,
    pub t: usize,
    pub horizon: usize,
    pub integrations: usize,
}

pub struct StepRecord {
    pub features: Vec<f64>,
    pub action: TutorAction,
    pub log_prob: f64,
    pub observation: Observation,
    pub reward: RewardBreakdown,
    pub done: bool,
}

impl Episode {
    pub fn start(world: &World, rng: &mut ChaCha8Rng) -> Result<Self, TrainerError> {
        Ok(Self {
            latent: world.sim.initial_state(rng)?,
            belief: init_belief(world.config.filter.particles, &world.sim, rng)?,
            t: 0,
            horizon: world.config.horizon,
            integrations: 0,
        })
    }

    /// Belief features followed by `t / H`.
    pub fn features(&self) -> Vec<f64> {
        let mut x = features(&self.belief).to_vec();
        x.push(self.t as f64 / self.horizon as f64);
        x
    }

    /// Act, advance the student, score the step, and fold the observation
    /// into the belief. The final step of an episode carries the
    /// integration bonus.
    pub fn step(
        &mut self,
        world: &World,
        net: &PolicyNet,
        evaluator: &mut dyn Evaluator,
        rng: &mut ChaCha8Rng,
    ) -> Result<StepRecord, TrainerError> {
        let feats = features(&self.belief);
        let x = self.features();
        let dist = net.forward(&x)?;
        let (action, log_prob) = sample_action(&dist, rng);
        let (post, obs) = world.sim.step(&self.latent, &action, rng);
        let scores = evaluator.evaluate(&EvaluationContext {
            action: &action,
            graph: world.graph,
            pre: &self.latent,
            post: &post,
            obs: &obs,
            belief: &feats,
        })?;
        scores.validate()?;
        let weights = &world.config.reward;
        let mut reward = total_reward(&scores, &self.latent, &post, weights);
        if post.trace.integration {
            self.integrations += 1;
        }
        self.t += 1;
        let done = self.t >= world.config.horizon;
        if done {
            reward = reward.with_trajectory_bonus(self.integrations, world.config.horizon, weights);
        }
        self.belief
            .update(&world.sim, &action, &obs, world.config.filter.resample_threshold, rng);
        self.latent = post;
        Ok(StepRecord {
            features: x,
            action,
            log_prob,
            observation: obs,
            reward,
            done,
        })
    }
}

/// Optimizer steps one generation of `steps` environment steps will take.
pub fn optimizer_steps(config: &RunConfig, steps: usize) -> u64 {
    let ppo = &config.ppo;
    let full = steps / ppo.k_update;
    let rest = steps % ppo.k_update;
    let per = |n: usize| (ppo.epochs * n.div_ceil(ppo.minibatch)) as u64;
    full as u64 * per(ppo.k_update) + if rest > 0 { per(rest) } else { 0 }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub updates: usize,
    pub skipped: u64,
    pub episodes: usize,
}

/// Inner loop: `steps_per_generation` on-policy steps, with a PPO update
/// every `k_update` steps and one for any remainder.
pub fn train(
    world: &World,
    adapters: &mut AdapterSet,
    learner: &mut PpoLearner,
    evaluator: &mut dyn Evaluator,
    rollout_rng: &mut ChaCha8Rng,
    ppo_rng: &mut ChaCha8Rng,
) -> Result<TrainStats, TrainerError> {
    let cfg = world.config;
    let split = cfg.ppo.objectives;
    let mut buffer = RolloutBuffer::new(split.len(), cfg.ppo.k_update);
    let mut net = PolicyNet::from_adapters(adapters, &cfg.policy)?;
    let mut episode = Episode::start(world, rollout_rng)?;
    let mut stats = TrainStats::default();
    for s in 0..cfg.steps_per_generation {
        let rec = episode.step(world, &net, evaluator, rollout_rng)?;
        let values = learner.values(&rec.features);
        buffer.push(Transition {
            rewards: rec.reward.per_objective(&cfg.reward, split),
            total: rec.reward.total,
            features: rec.features,
            action: rec.action,
            log_prob: rec.log_prob,
            values,
            done: rec.done,
        })?;
        if rec.done {
            stats.episodes += 1;
            episode = Episode::start(world, rollout_rng)?;
        }
        if buffer.len() == cfg.ppo.k_update || s + 1 == cfg.steps_per_generation {
            let bootstrap = if rec.done {
                vec![0.0; split.len()]
            } else {
                learner.values(&episode.features())
            };
            buffer.set_bootstrap(bootstrap);
            let update = learner.update(adapters, &cfg.policy, &buffer, ppo_rng)?;
            stats.updates += 1;
            stats.skipped += update.skipped;
            buffer.clear();
            net = PolicyNet::from_adapters(adapters, &cfg.policy)?;
        }
    }
    Ok(stats)
}

/// Frozen-policy evaluation summary. Rates are fractions of steps (gate)
/// or of episodes with at least one event (HOPE).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub fitness: f64,
    pub returns: Vec<f64>,
    pub gate_rate: f64,
    pub process_mean: f64,
    pub outcome_mean: f64,
    pub depth_mean: f64,
    pub directness_mean: f64,
    pub ki_rate: f64,
    pub kt_rate: f64,
    pub ct_rate: f64,
    pub cr_rate: f64,
}

pub fn evaluate(
    world: &World,
    adapters: &AdapterSet,
    evaluator: &mut dyn Evaluator,
    rng: &mut ChaCha8Rng,
    generation: usize,
    individual: usize,
    mut trajectories: Option<&mut Vec<TrajectoryRecord>>,
) -> Result<EvalSummary, TrainerError> {
    let cfg = world.config;
    let net = PolicyNet::from_adapters(adapters, &cfg.policy)?;
    let mut s = EvalSummary::default();
    let mut steps = 0usize;
    let mut hope = [0usize; 4];
    for e in 0..cfg.eval_episodes {
        let mut episode = Episode::start(world, rng)?;
        let mut ret = 0.0;
        let mut discount = 1.0;
        let mut seen = [false; 4];
        loop {
            let rec = episode.step(world, &net, evaluator, rng)?;
            ret += discount * rec.reward.total;
            if cfg.discounted_fitness {
                discount *= cfg.ppo.gamma;
            }
            steps += 1;
            s.gate_rate += f64::from(u8::from(rec.reward.gated));
            s.process_mean += rec.reward.process;
            s.outcome_mean += rec.reward.outcome;
            s.depth_mean += rec.action.socratic_depth;
            s.directness_mean += rec.action.directness;
            let h = rec.observation.hope;
            for (flag, fired) in seen
                .iter_mut()
                .zip([h.integration, h.transfer, h.critical_thinking, h.creativity])
            {
                *flag |= fired;
            }
            if let Some(out) = trajectories.as_deref_mut() {
                out.push(TrajectoryRecord {
                    generation,
                    individual,
                    episode: e,
                    t: episode.t - 1,
                    action: rec.action,
                    reward: rec.reward,
                    observation: rec.observation,
                });
            }
            if rec.done {
                break;
            }
        }
        for (count, fired) in hope.iter_mut().zip(seen) {
            *count += usize::from(fired);
        }
        s.returns.push(ret);
    }
    let n = steps as f64;
    for v in [
        &mut s.gate_rate,
        &mut s.process_mean,
        &mut s.outcome_mean,
        &mut s.depth_mean,
        &mut s.directness_mean,
    ] {
        *v /= n;
    }
    let e = cfg.eval_episodes as f64;
    [s.ki_rate, s.kt_rate, s.ct_rate, s.cr_rate] = hope.map(|c| c as f64 / e);
    s.fitness = crate::evo::fitness(&s.returns)?;
    Ok(s)
}

/// Fixed policy inputs for measuring behavior on common ground: probe `i`
/// is the belief after `i` uniformly random actions against a student drawn
/// from the prior.
pub fn probe_features(world: &World, seed: u64) -> Result<Vec<Vec<f64>>, TrainerError> {
    let mut rng = stream(seed, 0, GENERATION_SCOPE, Purpose::Probe);
    let c = world.graph.concept_count();
    let mut out = Vec::with_capacity(world.config.probes);
    for i in 0..world.config.probes {
        let mut ep = Episode::start(world, &mut rng)?;
        for _ in 0..i {
            let target = rng.random_range(0..c);
            let link = rng.random_range(0..=c);
            let action = TutorAction {
                target,
                difficulty: rng.random(),
                ambiguity: rng.random(),
                directness: rng.random(),
                socratic_depth: rng.random(),
                link_target: (link < c && link != target).then_some(link),
                tone: rng.random(),
            };
            let (post, obs) = world.sim.step(&ep.latent, &action, &mut rng);
            ep.belief
                .update(&world.sim, &action, &obs, world.config.filter.resample_threshold, &mut rng);
            ep.latent = post;
        }
        ep.t = i.min(world.config.horizon);
        out.push(ep.features());
    }
    Ok(out)
}

/// Concept-head distributions on each probe.
pub fn probe_signature(net: &PolicyNet, probes: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, TrainerError> {
    probes
        .iter()
        .map(|x| Ok(net.forward(x)?.concept_probs()))
        .collect()
}
