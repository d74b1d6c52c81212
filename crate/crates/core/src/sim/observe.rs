use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::{ask_probability, LatentState, Simulator, TutorAction};

/// Floor applied to Bernoulli terms of the observation likelihood so a
/// single discrete mismatch cannot zero out a particle.
pub const DISCRETE_LIKELIHOOD_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct HopeEvents {
    pub integration: bool,
    pub transfer: bool,
    pub critical_thinking: bool,
    pub creativity: bool,
}

impl HopeEvents {
    pub fn count(&self) -> usize {
        [
            self.integration,
            self.transfer,
            self.critical_thinking,
            self.creativity,
        ]
        .into_iter()
        .filter(|&b| b)
        .count()
    }
}

/// Emission rules for the higher-order outcome events.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HopeRules {
    pub integration_mastery: f64,
    /// Steps after a link action during which integration can still fire.
    pub integration_window: u64,
    pub critical_frustration: [f64; 2],
    pub critical_correctness: f64,
    pub critical_probability: f64,
}

impl Default for HopeRules {
    fn default() -> Self {
        Self {
            integration_mastery: 0.7,
            integration_window: 5,
            critical_frustration: [0.3, 0.7],
            critical_correctness: 0.6,
            critical_probability: 0.5,
        }
    }
}

/// Numeric surrogate of the student's response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub correctness: f64,
    pub asked_question: bool,
    pub confusion: bool,
    pub hope: HopeEvents,
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

impl Simulator<'_> {
    /// Emits the observation for a post-transition state. Random draws are
    /// consumed in a fixed order: correctness noise, ask trigger, transfer,
    /// critical thinking, creativity (the last three only when eligible).
    pub fn emit_observation<R: Rng + ?Sized>(
        &self,
        state: &LatentState,
        action: &TutorAction,
        rng: &mut R,
    ) -> Observation {
        let cfg = self.config;
        let m_target = state.mastery[action.target];
        let noise: f64 = rng.sample(StandardNormal);
        let correctness = (m_target + cfg.obs_noise * noise).clamp(0.0, 1.0);

        let p_ask = ask_probability(&state.profile, &state.affect, cfg.ask_gain);
        let asked_question = rng.random::<f64>() < p_ask;
        let confusion = state.affect.frustration > cfg.confusion_threshold;

        let trace = &state.trace;
        let transfer = match trace.valid_link {
            Some(l) if trace.in_zpd => rng.random::<f64>() < m_target * state.mastery[l],
            _ => false,
        };
        let rules = &cfg.hope;
        let f = state.affect.frustration;
        let critical_thinking = if f >= rules.critical_frustration[0]
            && f <= rules.critical_frustration[1]
            && correctness > rules.critical_correctness
        {
            rng.random::<f64>() < rules.critical_probability
        } else {
            false
        };
        let integration = trace.integration;
        let creativity = integration && rng.random::<f64>() < state.profile.curiosity;

        Observation {
            correctness,
            asked_question,
            confusion,
            hope: HopeEvents {
                integration,
                transfer,
                critical_thinking,
                creativity,
            },
        }
    }

    /// Density of the observation's correctness, ask, and confusion fields
    /// given a post-transition state. Correctness is a Gaussian censored to
    /// [0, 1] (boundary values carry the tail mass); the two booleans are
    /// Bernoulli terms floored at [`DISCRETE_LIKELIHOOD_FLOOR`].
    pub fn observation_likelihood(
        &self,
        state: &LatentState,
        action: &TutorAction,
        obs: &Observation,
    ) -> f64 {
        let cfg = self.config;
        let m = state.mastery[action.target];
        let c = obs.correctness;
        let sigma = cfg.obs_noise;
        let gaussian = if sigma == 0.0 {
            f64::from(u8::from((c - m).abs() < 1e-12))
        } else if c <= 0.0 {
            normal_cdf((0.0 - m) / sigma)
        } else if c >= 1.0 {
            1.0 - normal_cdf((1.0 - m) / sigma)
        } else {
            let z = (c - m) / sigma;
            (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
        };
        let floor = |p: f64| p.clamp(DISCRETE_LIKELIHOOD_FLOOR, 1.0 - DISCRETE_LIKELIHOOD_FLOOR);
        let bern = |p: f64, hit: bool| if hit { floor(p) } else { floor(1.0 - p) };
        let p_ask = ask_probability(&state.profile, &state.affect, cfg.ask_gain);
        let p_conf = f64::from(u8::from(state.affect.frustration > cfg.confusion_threshold));
        gaussian * bern(p_ask, obs.asked_question) * bern(p_conf, obs.confusion)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::KnowledgeGraph;
    use crate::sim::{ScenarioConfig, StudentProfile};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn graph() -> KnowledgeGraph {
        KnowledgeGraph::parse(include_str!("../../../../configs/six_concept_graph.toml")).unwrap()
    }

    fn state(sim: &Simulator, mastery: f64, confidence: f64, frustration: f64) -> LatentState {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let profile = StudentProfile {
            alpha: 0.5,
            w_zpd: 0.2,
            s_memory: 10.0,
            curiosity: 0.8,
            confidence,
            expressiveness: 0.5,
        };
        let mut s = sim.initial_state_for(profile, &mut rng);
        s.mastery.iter_mut().for_each(|m| *m = mastery);
        s.affect.frustration = frustration;
        s
    }

    fn action() -> TutorAction {
        TutorAction {
            target: 1,
            difficulty: 0.5,
            ambiguity: 0.0,
            directness: 0.0,
            socratic_depth: 0.5,
            link_target: None,
            tone: 0.5,
        }
    }

    #[test]
    fn noiseless_correctness_is_mastery() {
        let g = graph();
        let cfg = ScenarioConfig {
            obs_noise: 0.0,
            ..Default::default()
        };
        let sim = Simulator::new(&g, &cfg);
        let s = state(&sim, 0.37, 0.5, 0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            assert_eq!(sim.emit_observation(&s, &action(), &mut rng).correctness, 0.37);
        }
    }

    #[test]
    fn correctness_tail_bound() {
        let g = graph();
        let cfg = ScenarioConfig::default();
        let sim = Simulator::new(&g, &cfg);
        let s = state(&sim, 0.0, 0.5, 0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        // P(N(0, 0.1) > 0.4) is about 3e-5
        let n = 20_000;
        let above = (0..n)
            .filter(|_| sim.emit_observation(&s, &action(), &mut rng).correctness > 0.4)
            .count();
        assert!((above as f64) / (n as f64) < 1e-3);
    }

    #[test]
    fn confident_students_never_ask() {
        let g = graph();
        let cfg = ScenarioConfig::default();
        let sim = Simulator::new(&g, &cfg);
        let s = state(&sim, 0.5, 1.0, 0.9);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let o = sim.emit_observation(&s, &action(), &mut rng);
            assert!(!o.asked_question);
            assert!(o.confusion);
        }
    }

    #[test]
    fn likelihood_is_normalized_over_correctness() {
        let g = graph();
        let cfg = ScenarioConfig::default();
        let sim = Simulator::new(&g, &cfg);
        let s = state(&sim, 0.05, 1.0, 0.0);
        let a = action();
        let obs = |c: f64| Observation {
            correctness: c,
            asked_question: false,
            confusion: false,
            hope: HopeEvents::default(),
        };
        // interior density integrates with the two boundary masses to 1
        let n = 20_000;
        let h = 1.0 / n as f64;
        let interior: f64 = (0..n)
            .map(|i| sim.observation_likelihood(&s, &a, &obs((i as f64 + 0.5) * h)) * h)
            .sum();
        let total = interior
            + sim.observation_likelihood(&s, &a, &obs(0.0))
            + sim.observation_likelihood(&s, &a, &obs(1.0));
        let discrete = (1.0 - DISCRETE_LIKELIHOOD_FLOOR).powi(2);
        assert!((total / discrete - 1.0).abs() < 1e-6, "{total}");
    }
}
