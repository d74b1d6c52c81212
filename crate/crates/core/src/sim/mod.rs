//! Simulated student: latent cognitive state, stochastic transitions, and
//! observation emission.

pub mod dynamics;
mod observe;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{ConceptId, KnowledgeGraph};
pub use dynamics::{
    activation_probability, ask_probability, decayed_mastery, logistic, mastery_after_gain,
    update_affect, zpd_indicator, AffectCoefficients,
};
pub use observe::{HopeEvents, HopeRules, Observation};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("range for {field} is [{lo}, {hi}], which is empty or outside [{min}, {max}]")]
    BadRange {
        field: &'static str,
        lo: f64,
        hi: f64,
        min: f64,
        max: f64,
    },
    #[error("scenario parameter {0} is out of range")]
    BadParameter(&'static str),
    #[error("invalid action: {0}")]
    BadAction(String),
}

/// Closed interval, serialized as `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub const fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    /// Uniform draw; a degenerate interval returns `lo` exactly.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.lo + (self.hi - self.lo) * u
    }

    fn check(&self, field: &'static str, min: f64, max: f64, open_min: bool) -> Result<(), SimError> {
        let lower_ok = if open_min { self.lo > min } else { self.lo >= min };
        if self.lo.is_finite() && self.hi.is_finite() && lower_ok && self.lo <= self.hi && self.hi <= max {
            Ok(())
        } else {
            Err(SimError::BadRange {
                field,
                lo: self.lo,
                hi: self.hi,
                min,
                max,
            })
        }
    }
}

impl From<[f64; 2]> for Interval {
    fn from(v: [f64; 2]) -> Self {
        Self::new(v[0], v[1])
    }
}

impl From<Interval> for [f64; 2] {
    fn from(v: Interval) -> Self {
        [v.lo, v.hi]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudentProfile {
    pub alpha: f64,
    pub w_zpd: f64,
    /// Memory stability S, in time-steps.
    pub s_memory: f64,
    pub curiosity: f64,
    pub confidence: f64,
    /// Carried for completeness; no transition consumes it.
    pub expressiveness: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfileRanges {
    pub alpha: Interval,
    pub w_zpd: Interval,
    pub s_memory: Interval,
    pub curiosity: Interval,
    pub confidence: Interval,
    pub expressiveness: Interval,
}

impl Default for ProfileRanges {
    fn default() -> Self {
        Self {
            alpha: Interval::new(0.1, 0.9),
            w_zpd: Interval::new(0.1, 0.4),
            s_memory: Interval::new(10.0, 60.0),
            curiosity: Interval::new(0.0, 1.0),
            confidence: Interval::new(0.0, 1.0),
            expressiveness: Interval::new(0.0, 1.0),
        }
    }
}

impl ProfileRanges {
    pub fn validate(&self) -> Result<(), SimError> {
        self.alpha.check("alpha", 0.1, 0.9, false)?;
        self.w_zpd.check("w_zpd", 0.0, 1.0, true)?;
        self.s_memory.check("s_memory", 0.0, f64::MAX, true)?;
        self.curiosity.check("curiosity", 0.0, 1.0, false)?;
        self.confidence.check("confidence", 0.0, 1.0, false)?;
        self.expressiveness.check("expressiveness", 0.0, 1.0, false)
    }

    /// Every range collapsed to the given point values.
    pub fn fixed(p: &StudentProfile) -> Self {
        Self {
            alpha: Interval::point(p.alpha),
            w_zpd: Interval::point(p.w_zpd),
            s_memory: Interval::point(p.s_memory),
            curiosity: Interval::point(p.curiosity),
            confidence: Interval::point(p.confidence),
            expressiveness: Interval::point(p.expressiveness),
        }
    }
}

/// Draws a profile field by field, in declaration order.
pub fn sample_profile<R: Rng + ?Sized>(
    rng: &mut R,
    ranges: &ProfileRanges,
) -> Result<StudentProfile, SimError> {
    ranges.validate()?;
    Ok(StudentProfile {
        alpha: ranges.alpha.sample(rng),
        w_zpd: ranges.w_zpd.sample(rng),
        s_memory: ranges.s_memory.sample(rng),
        curiosity: ranges.curiosity.sample(rng),
        confidence: ranges.confidence.sample(rng),
        expressiveness: ranges.expressiveness.sample(rng),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffectState {
    pub frustration: f64,
    pub engagement: f64,
    pub cognitive_load: f64,
    pub boredom: f64,
}

impl AffectState {
    pub fn as_array(&self) -> [f64; 4] {
        [
            self.frustration,
            self.engagement,
            self.cognitive_load,
            self.boredom,
        ]
    }
}

impl Default for AffectState {
    fn default() -> Self {
        Self {
            frustration: 0.1,
            engagement: 0.5,
            cognitive_load: 0.0,
            boredom: 0.0,
        }
    }
}

/// A valid interdisciplinary link the tutor made, awaiting integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PendingLink {
    pub a: ConceptId,
    pub b: ConceptId,
    pub issued_at: u64,
}

/// What happened during the most recent transition; consumed by the
/// observation model.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TransitionTrace {
    pub target: ConceptId,
    pub in_zpd: bool,
    pub valid_link: Option<ConceptId>,
    pub integration: bool,
    pub misconceptions_cleared: usize,
    pub misconceptions_activated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentState {
    pub profile: StudentProfile,
    pub mastery: Vec<f64>,
    /// Time index at which each concept was last activated.
    pub last_active: Vec<u64>,
    pub misconceptions: Vec<bool>,
    pub affect: AffectState,
    pub t: u64,
    /// Concept i decays with reduced stability while `t < shallow_until[i]`.
    pub shallow_until: Vec<u64>,
    pub pending_links: Vec<PendingLink>,
    pub trace: TransitionTrace,
}

impl LatentState {
    /// Checks every state invariant; returns a description of the first violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        let unit = |x: f64| x.is_finite() && (0.0..=1.0).contains(&x);
        if let Some(i) = self.mastery.iter().position(|&m| !unit(m)) {
            return Err(format!("mastery[{i}] = {} outside [0, 1]", self.mastery[i]));
        }
        if let Some(i) = self.last_active.iter().position(|&l| l > self.t) {
            return Err(format!("last_active[{i}] = {} > t = {}", self.last_active[i], self.t));
        }
        if !self.affect.as_array().into_iter().all(unit) {
            return Err(format!("affect {:?} outside [0, 1]", self.affect));
        }
        let p = &self.profile;
        if !(0.1..=0.9).contains(&p.alpha)
            || !(p.w_zpd > 0.0 && p.w_zpd <= 1.0)
            || !(p.s_memory > 0.0 && p.s_memory.is_finite())
            || ![p.curiosity, p.confidence, p.expressiveness].into_iter().all(unit)
        {
            return Err(format!("profile {p:?} out of bounds"));
        }
        Ok(())
    }

    pub fn active_misconceptions(&self) -> usize {
        self.misconceptions.iter().filter(|&&b| b).count()
    }
}

/// Structured stand-in for one tutoring turn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TutorAction {
    pub target: ConceptId,
    pub difficulty: f64,
    pub ambiguity: f64,
    pub directness: f64,
    pub socratic_depth: f64,
    pub link_target: Option<ConceptId>,
    pub tone: f64,
}

impl TutorAction {
    pub const CONTINUOUS_FIELDS: usize = 5;

    /// Continuous fields in head order: difficulty, ambiguity, directness,
    /// socratic depth, tone.
    pub fn continuous(&self) -> [f64; Self::CONTINUOUS_FIELDS] {
        [
            self.difficulty,
            self.ambiguity,
            self.directness,
            self.socratic_depth,
            self.tone,
        ]
    }

    pub fn validate(&self, concepts: usize) -> Result<(), SimError> {
        if self.target >= concepts {
            return Err(SimError::BadAction(format!("target {} out of range", self.target)));
        }
        match self.link_target {
            Some(l) if l >= concepts => {
                return Err(SimError::BadAction(format!("link target {l} out of range")))
            }
            Some(l) if l == self.target => {
                return Err(SimError::BadAction("link target equals target".into()))
            }
            _ => {}
        }
        if !self.continuous().into_iter().all(|x| (0.0..=1.0).contains(&x)) {
            return Err(SimError::BadAction("continuous field outside [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub profile: ProfileRanges,
    pub affect: AffectCoefficients,
    pub initial_affect: AffectState,
    pub initial_mastery: Interval,
    /// Probability that each misconception starts active.
    pub initial_misconception_rate: f64,
    /// Standard deviation of the correctness observation noise.
    pub obs_noise: f64,
    /// Mastery above which an active misconception on the host is remediated.
    pub fix_threshold: f64,
    /// Stability multiplier applied after spoon-feeding.
    pub shallow_factor: f64,
    pub shallow_steps: u64,
    /// Directness above which gain is granted regardless of the ZPD.
    pub spoon_feed_directness: f64,
    /// Proportionality constant of the ask trigger.
    pub ask_gain: f64,
    pub confusion_threshold: f64,
    pub hope: HopeRules,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            profile: ProfileRanges::default(),
            affect: AffectCoefficients::default(),
            initial_affect: AffectState::default(),
            initial_mastery: Interval::new(0.0, 0.3),
            initial_misconception_rate: 0.25,
            obs_noise: 0.1,
            fix_threshold: 0.85,
            shallow_factor: 0.3,
            shallow_steps: 10,
            spoon_feed_directness: 0.7,
            ask_gain: 1.0,
            confusion_threshold: 0.6,
            hope: HopeRules::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        self.profile.validate()?;
        self.initial_mastery
            .check("initial_mastery", 0.0, 1.0, false)?;
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        let checks: [(&'static str, bool); 8] = [
            ("initial_misconception_rate", unit(self.initial_misconception_rate)),
            ("obs_noise", self.obs_noise >= 0.0 && self.obs_noise.is_finite()),
            ("fix_threshold", unit(self.fix_threshold)),
            ("shallow_factor", self.shallow_factor > 0.0 && self.shallow_factor <= 1.0),
            ("spoon_feed_directness", unit(self.spoon_feed_directness)),
            ("ask_gain", self.ask_gain >= 0.0 && self.ask_gain.is_finite()),
            ("confusion_threshold", unit(self.confusion_threshold)),
            (
                "initial_affect",
                self.initial_affect.as_array().into_iter().all(unit),
            ),
        ];
        for (name, ok) in checks {
            if !ok {
                return Err(SimError::BadParameter(name));
            }
        }
        let a = &self.affect;
        if ![
            a.eta_frustration,
            a.relief_frustration,
            a.eta_boredom,
            a.relief_boredom,
            a.eta_engagement,
            a.drain_engagement,
        ]
        .into_iter()
        .all(|x| x >= 0.0 && x.is_finite())
        {
            return Err(SimError::BadParameter("affect"));
        }
        Ok(())
    }
}

/// Student environment bound to a graph and scenario. Cheap to copy.
#[derive(Debug, Clone, Copy)]
pub struct Simulator<'a> {
    pub graph: &'a KnowledgeGraph,
    pub config: &'a ScenarioConfig,
}

impl<'a> Simulator<'a> {
    pub fn new(graph: &'a KnowledgeGraph, config: &'a ScenarioConfig) -> Self {
        Self { graph, config }
    }

    pub fn initial_state_for<R: Rng + ?Sized>(&self, profile: StudentProfile, rng: &mut R) -> LatentState {
        let c = self.graph.concept_count();
        let mastery = (0..c).map(|_| self.config.initial_mastery.sample(rng)).collect();
        let misconceptions = (0..self.graph.misconception_count())
            .map(|_| rng.random::<f64>() < self.config.initial_misconception_rate)
            .collect();
        LatentState {
            profile,
            mastery,
            last_active: vec![0; c],
            misconceptions,
            affect: self.config.initial_affect,
            t: 0,
            shallow_until: vec![0; c],
            pending_links: Vec::new(),
            trace: TransitionTrace::default(),
        }
    }

    /// Fresh student drawn from the scenario prior.
    pub fn initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<LatentState, SimError> {
        let profile = sample_profile(rng, &self.config.profile)?;
        Ok(self.initial_state_for(profile, rng))
    }

    /// Multiplicative one-step decay of every concept except `target`.
    /// Repeated application reproduces `m * exp(-dt / S)`.
    pub fn apply_forgetting(&self, state: &mut LatentState, target: Option<ConceptId>) {
        let base = state.profile.s_memory;
        for i in 0..state.mastery.len() {
            if Some(i) == target {
                continue;
            }
            let stability = if state.t < state.shallow_until[i] {
                base * self.config.shallow_factor
            } else {
                base
            };
            state.mastery[i] = decayed_mastery(state.mastery[i], 1.0, stability);
        }
    }

    /// Gated gain at the action's target. Returns whether the action was in
    /// the ZPD (evaluated on pre-update mastery). Spoon-fed actions (high
    /// directness) gain regardless but mark the concept as shallow.
    pub fn update_mastery(&self, state: &mut LatentState, action: &TutorAction) -> bool {
        let i = action.target;
        let m = state.mastery[i];
        let in_zpd = zpd_indicator(m, action.difficulty, state.profile.w_zpd) == 1;
        let spoon_fed = action.directness > self.config.spoon_feed_directness;
        let gate = u8::from(in_zpd || spoon_fed);
        state.mastery[i] = mastery_after_gain(m, state.profile.alpha, gate).clamp(0.0, 1.0);
        // the concept is fresh as of the end of this step
        state.last_active[i] = state.t + 1;
        if spoon_fed {
            state.shallow_until[i] = state.t + 1 + self.config.shallow_steps;
        }
        in_zpd
    }

    /// Activation of inactive rules hosted on the target (probability from
    /// pre-update host mastery) and remediation of active ones once the
    /// post-update mastery reaches the fix threshold.
    pub fn step_misconceptions<R: Rng + ?Sized>(
        &self,
        state: &mut LatentState,
        action: &TutorAction,
        pre_mastery: f64,
        rng: &mut R,
    ) -> (usize, usize) {
        let host_now = state.mastery[action.target];
        let (mut activated, mut cleared) = (0, 0);
        for &k in self.graph.rules_on(action.target) {
            let rule = self.graph.rule(k);
            if state.misconceptions[k] {
                if host_now >= self.config.fix_threshold {
                    state.misconceptions[k] = false;
                    cleared += 1;
                }
            } else {
                let p = activation_probability(
                    rule.beta_ambiguity,
                    rule.gamma_resilience,
                    action.ambiguity,
                    pre_mastery,
                );
                if rng.random::<f64>() < p {
                    state.misconceptions[k] = true;
                    activated += 1;
                }
            }
        }
        (activated, cleared)
    }

    /// Latent transition without observation emission:
    /// forgetting, mastery, misconceptions, affect, clock, integration bookkeeping.
    pub fn transition<R: Rng + ?Sized>(
        &self,
        state: &LatentState,
        action: &TutorAction,
        rng: &mut R,
    ) -> LatentState {
        let mut next = state.clone();
        let target = action.target;
        let pre_mastery = state.mastery[target];

        self.apply_forgetting(&mut next, Some(target));
        let in_zpd = self.update_mastery(&mut next, action);
        let (activated, cleared) = self.step_misconceptions(&mut next, action, pre_mastery, rng);
        next.affect = update_affect(
            &state.affect,
            pre_mastery,
            state.profile.w_zpd,
            action.difficulty,
            action.tone,
            &self.config.affect,
        );
        next.t += 1;

        let valid_link = action
            .link_target
            .filter(|&l| self.graph.linked(target, l));
        if let Some(l) = valid_link {
            next.pending_links.push(PendingLink {
                a: target,
                b: l,
                issued_at: next.t,
            });
        }
        let rules = &self.config.hope;
        let mut integration = false;
        let mastery = &next.mastery;
        let now = next.t;
        next.pending_links.retain(|p| {
            if now - p.issued_at > rules.integration_window {
                return false;
            }
            let both = mastery[p.a] > rules.integration_mastery
                && mastery[p.b] > rules.integration_mastery;
            if both {
                integration = true;
            }
            !both
        });

        next.trace = TransitionTrace {
            target,
            in_zpd,
            valid_link,
            integration,
            misconceptions_cleared: cleared,
            misconceptions_activated: activated,
        };
        debug_assert_eq!(next.check_invariants(), Ok(()));
        next
    }

    /// Full environment step: transition then observation.
    pub fn step<R: Rng + ?Sized>(
        &self,
        state: &LatentState,
        action: &TutorAction,
        rng: &mut R,
    ) -> (LatentState, Observation) {
        let next = self.transition(state, action, rng);
        let obs = self.emit_observation(&next, action, rng);
        (next, obs)
    }
}
