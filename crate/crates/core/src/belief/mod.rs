//! Bootstrap particle filter over latent student states and the feature
//! vector the policy reads from a belief.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{LatentState, Observation, SimError, Simulator, TutorAction};

#[derive(Debug, Error, PartialEq)]
pub enum BeliefError {
    #[error("a belief needs at least one particle")]
    NoParticles,
    #[error("resample threshold {0} outside [0, 1]")]
    BadThreshold(f64),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Generative model the filter runs against: a stochastic transition and an
/// observation density.
pub trait TransitionModel {
    type State: Clone;
    type Action;
    type Observation;

    fn propagate<R: Rng + ?Sized>(
        &self,
        state: &Self::State,
        action: &Self::Action,
        rng: &mut R,
    ) -> Self::State;

    fn likelihood(&self, state: &Self::State, action: &Self::Action, obs: &Self::Observation)
        -> f64;
}

impl TransitionModel for Simulator<'_> {
    type State = LatentState;
    type Action = TutorAction;
    type Observation = Observation;

    fn propagate<R: Rng + ?Sized>(&self, s: &LatentState, a: &TutorAction, rng: &mut R) -> LatentState {
        self.transition(s, a, rng)
    }

    fn likelihood(&self, s: &LatentState, a: &TutorAction, o: &Observation) -> f64 {
        self.observation_likelihood(s, a, o)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub particles: usize,
    /// Resample when the effective sample size drops below this fraction of
    /// the particle count.
    pub resample_threshold: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            particles: 256,
            resample_threshold: 0.5,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), BeliefError> {
        if self.particles == 0 {
            return Err(BeliefError::NoParticles);
        }
        if !(0.0..=1.0).contains(&self.resample_threshold) {
            return Err(BeliefError::BadThreshold(self.resample_threshold));
        }
        Ok(())
    }
}

/// Outcome flags of one filter update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct UpdateReport {
    pub resampled: bool,
    /// Every particle had zero likelihood; weights were reset to uniform.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState<S> {
    particles: Vec<S>,
    weights: Vec<f64>,
    ess: f64,
    step: u64,
}

fn effective_sample_size(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

impl<S: Clone> BeliefState<S> {
    pub fn uniform(particles: Vec<S>) -> Result<Self, BeliefError> {
        if particles.is_empty() {
            return Err(BeliefError::NoParticles);
        }
        let n = particles.len();
        Ok(Self {
            particles,
            weights: vec![1.0 / n as f64; n],
            ess: n as f64,
            step: 0,
        })
    }

    /// Builds a belief from explicit weights, normalizing them.
    pub fn weighted(particles: Vec<S>, weights: Vec<f64>) -> Result<Self, BeliefError> {
        if particles.is_empty() || particles.len() != weights.len() {
            return Err(BeliefError::NoParticles);
        }
        let mut b = Self::uniform(particles)?;
        let total: f64 = weights.iter().sum();
        b.weights = weights.into_iter().map(|w| w / total).collect();
        b.ess = effective_sample_size(&b.weights);
        Ok(b)
    }

    pub fn particles(&self) -> &[S] {
        &self.particles
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn ess(&self) -> f64 {
        self.ess
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn iter(&self) -> impl Iterator<Item = (&S, f64)> {
        self.particles.iter().zip(self.weights.iter().copied())
    }

    /// Weighted mean of a particle statistic.
    pub fn expectation(&self, f: impl Fn(&S) -> f64) -> f64 {
        self.iter().map(|(s, w)| w * f(s)).sum()
    }

    /// Predict with the model's transition, correct with its observation
    /// density, renormalize, and resample systematically when the effective
    /// sample size falls below `threshold * n`.
    pub fn update<M, R>(
        &mut self,
        model: &M,
        action: &M::Action,
        obs: &M::Observation,
        threshold: f64,
        rng: &mut R,
    ) -> UpdateReport
    where
        M: TransitionModel<State = S>,
        R: Rng + ?Sized,
    {
        let mut report = UpdateReport::default();
        for p in self.particles.iter_mut() {
            *p = model.propagate(p, action, rng);
        }
        for (p, w) in self.particles.iter().zip(self.weights.iter_mut()) {
            *w *= model.likelihood(p, action, obs);
        }
        let total: f64 = self.weights.iter().sum();
        let n = self.particles.len() as f64;
        if total > 0.0 && total.is_finite() {
            self.weights.iter_mut().for_each(|w| *w /= total);
        } else {
            self.weights.iter_mut().for_each(|w| *w = 1.0 / n);
            report.degenerate = true;
        }
        self.ess = effective_sample_size(&self.weights);
        if self.ess < threshold * n {
            self.resample_systematic(rng);
            report.resampled = true;
        }
        self.step += 1;
        report
    }

    /// Systematic resampling: one uniform offset, n evenly spaced pointers
    /// into the cumulative weights. Leaves uniform weights.
    pub fn resample_systematic<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let n = self.particles.len();
        let step = 1.0 / n as f64;
        let mut pointer = rng.random::<f64>() * step;
        let mut cumulative = self.weights[0];
        let mut i = 0;
        let mut chosen = Vec::with_capacity(n);
        for _ in 0..n {
            while pointer > cumulative && i + 1 < n {
                i += 1;
                cumulative += self.weights[i];
            }
            chosen.push(self.particles[i].clone());
            pointer += step;
        }
        self.particles = chosen;
        self.weights = vec![step; n];
        self.ess = n as f64;
    }
}

/// Prior belief: `n` students drawn i.i.d. from the scenario prior.
pub fn init_belief<R: Rng + ?Sized>(
    n: usize,
    sim: &Simulator,
    rng: &mut R,
) -> Result<BeliefState<LatentState>, BeliefError> {
    if n == 0 {
        return Err(BeliefError::NoParticles);
    }
    let particles = (0..n)
        .map(|_| sim.initial_state(rng))
        .collect::<Result<Vec<_>, _>>()?;
    BeliefState::uniform(particles)
}

/// Weighted summary of a belief, flattened by [`BeliefFeatures::to_vec`] in
/// field order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefFeatures {
    pub mean_mastery: Vec<f64>,
    pub misconception_marginal: Vec<f64>,
    pub mean_affect: [f64; 4],
    pub mastery_variance: Vec<f64>,
    /// Weight entropy normalized by `ln n`; 0 for a single particle.
    pub entropy: f64,
}

impl BeliefFeatures {
    pub fn dim(concepts: usize, misconceptions: usize) -> usize {
        2 * concepts + misconceptions + 5
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(Self::dim(self.mean_mastery.len(), self.misconception_marginal.len()));
        v.extend_from_slice(&self.mean_mastery);
        v.extend_from_slice(&self.misconception_marginal);
        v.extend_from_slice(&self.mean_affect);
        v.extend_from_slice(&self.mastery_variance);
        v.push(self.entropy);
        v
    }
}

pub fn features(b: &BeliefState<LatentState>) -> BeliefFeatures {
    let first = &b.particles()[0];
    let c = first.mastery.len();
    let k = first.misconceptions.len();
    let mut mean = vec![0.0; c];
    let mut second = vec![0.0; c];
    let mut marginal = vec![0.0; k];
    let mut affect = [0.0; 4];
    for (s, w) in b.iter() {
        for (i, &m) in s.mastery.iter().enumerate() {
            mean[i] += w * m;
            second[i] += w * m * m;
        }
        for (j, &on) in s.misconceptions.iter().enumerate() {
            if on {
                marginal[j] += w;
            }
        }
        for (a, x) in affect.iter_mut().zip(s.affect.as_array()) {
            *a += w * x;
        }
    }
    let variance = mean
        .iter()
        .zip(&second)
        .map(|(m, s2)| (s2 - m * m).max(0.0))
        .collect();
    let n = b.len();
    let entropy = if n > 1 {
        let h: f64 = b
            .weights()
            .iter()
            .filter(|&&w| w > 0.0)
            .map(|&w| -w * w.ln())
            .sum();
        (h / (n as f64).ln()).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let unit = |x: f64| x.clamp(0.0, 1.0);
    BeliefFeatures {
        mean_mastery: mean.into_iter().map(unit).collect(),
        misconception_marginal: marginal.into_iter().map(unit).collect(),
        mean_affect: affect.map(unit),
        mastery_variance: variance,
        entropy,
    }
}
