//! Cascaded reward: a safety gate that overrides everything when tripped,
//! then a weighted process reward and a student-outcome reward.

mod evaluator;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::LatentState;
pub use evaluator::{
    structural_evaluate, EvaluationContext, Evaluator, EvaluatorSpec, RemoteEvaluator,
    StructuralEvaluator,
};

#[derive(Debug, Error)]
pub enum RewardError {
    #[error("invalid reward weights: {0}")]
    Weights(String),
    #[error("evaluator score {name} = {value} outside [0, 1]")]
    ScoreRange { name: &'static str, value: f64 },
    #[error("evaluator transport: {0}")]
    Transport(#[from] std::io::Error),
    #[error("evaluator protocol: {0}")]
    Protocol(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EvaluatorScores {
    pub p_direct: f64,
    pub p_hallu: f64,
    pub p_viol: f64,
    pub r_soc: f64,
    pub r_int: f64,
    pub r_pers: f64,
    pub r_semantic: f64,
}

impl EvaluatorScores {
    pub fn validate(&self) -> Result<(), RewardError> {
        let named = [
            ("p_direct", self.p_direct),
            ("p_hallu", self.p_hallu),
            ("p_viol", self.p_viol),
            ("r_soc", self.r_soc),
            ("r_int", self.r_int),
            ("r_pers", self.r_pers),
            ("r_semantic", self.r_semantic),
        ];
        for (name, value) in named {
            if !(0.0..=1.0).contains(&value) {
                return Err(RewardError::ScoreRange { name, value });
            }
        }
        Ok(())
    }
}

/// How the scalar reward is split into objectives for gradient projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveSplit {
    /// safety, process, outcome
    #[default]
    Layers,
    /// safety, socratic, integration, personalization, state, semantic, trajectory
    Components,
}

impl ObjectiveSplit {
    pub fn len(self) -> usize {
        match self {
            Self::Layers => 3,
            Self::Components => 7,
        }
    }

    pub fn is_empty(self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardWeights {
    pub lambda_c: f64,
    pub lambda_p: f64,
    pub lambda_s: f64,
    pub tau: f64,
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub w_state: f64,
    pub w_semantic: f64,
    /// Per-integration-event credit added to the final step's outcome reward,
    /// divided by the horizon.
    pub trajectory_bonus: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            lambda_c: 5.0,
            lambda_p: 1.0,
            lambda_s: 2.0,
            tau: 0.05,
            w1: 1.0 / 3.0,
            w2: 1.0 / 3.0,
            w3: 1.0 / 3.0,
            w_state: 0.5,
            w_semantic: 0.5,
            trajectory_bonus: 0.5,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<(), RewardError> {
        let all = [
            self.lambda_c,
            self.lambda_p,
            self.lambda_s,
            self.tau,
            self.w1,
            self.w2,
            self.w3,
            self.w_state,
            self.w_semantic,
            self.trajectory_bonus,
        ];
        if !all.iter().all(|w| w.is_finite() && *w >= 0.0) {
            return Err(RewardError::Weights("weights must be finite and non-negative".into()));
        }
        if ((self.w1 + self.w2 + self.w3) - 1.0).abs() > 1e-9 {
            return Err(RewardError::Weights("w1 + w2 + w3 must equal 1".into()));
        }
        if ((self.w_state + self.w_semantic) - 1.0).abs() > 1e-9 {
            return Err(RewardError::Weights("w_state + w_semantic must equal 1".into()));
        }
        Ok(())
    }
}

/// All intermediate terms of one step's reward.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub gate: f64,
    pub gated: bool,
    pub r_soc: f64,
    pub r_int: f64,
    pub r_pers: f64,
    pub process: f64,
    pub r_state: f64,
    pub r_semantic: f64,
    pub trajectory: f64,
    pub outcome: f64,
    pub total: f64,
}

pub fn gate(scores: &EvaluatorScores) -> f64 {
    scores.p_direct.max(scores.p_hallu).max(scores.p_viol)
}

pub fn process_reward(scores: &EvaluatorScores, w: &RewardWeights) -> f64 {
    w.w1 * scores.r_soc + w.w2 * scores.r_int + w.w3 * scores.r_pers
}

/// Half the clamped net mastery gain plus half the fraction of previously
/// active misconceptions that were cleared. The gain is clamped to [0, 1].
pub fn state_reward(pre: &LatentState, post: &LatentState) -> f64 {
    let gain: f64 = post.mastery.iter().zip(&pre.mastery).map(|(b, a)| b - a).sum();
    let active = pre.active_misconceptions();
    let cleared = pre
        .misconceptions
        .iter()
        .zip(&post.misconceptions)
        .filter(|&(&was, &is)| was && !is)
        .count();
    let cleared_frac = if active == 0 {
        0.0
    } else {
        cleared as f64 / active as f64
    };
    0.5 * gain.clamp(0.0, 1.0) + 0.5 * cleared_frac
}

pub fn outcome_reward(pre: &LatentState, post: &LatentState, scores: &EvaluatorScores, w: &RewardWeights) -> f64 {
    w.w_state * state_reward(pre, post) + w.w_semantic * scores.r_semantic
}

fn finish(mut b: RewardBreakdown, w: &RewardWeights) -> RewardBreakdown {
    b.gated = b.gate > w.tau;
    b.total = if b.gated {
        -w.lambda_c * b.gate
    } else {
        w.lambda_p * b.process + w.lambda_s * b.outcome
    };
    b
}

pub fn total_reward(
    scores: &EvaluatorScores,
    pre: &LatentState,
    post: &LatentState,
    w: &RewardWeights,
) -> RewardBreakdown {
    let r_state = state_reward(pre, post);
    let b = RewardBreakdown {
        gate: gate(scores),
        r_soc: scores.r_soc,
        r_int: scores.r_int,
        r_pers: scores.r_pers,
        process: process_reward(scores, w),
        r_state,
        r_semantic: scores.r_semantic,
        outcome: w.w_state * r_state + w.w_semantic * scores.r_semantic,
        ..Default::default()
    };
    finish(b, w)
}

impl RewardBreakdown {
    /// Adds the end-of-episode integration credit to the outcome term.
    pub fn with_trajectory_bonus(mut self, integration_events: usize, horizon: usize, w: &RewardWeights) -> Self {
        self.trajectory = w.trajectory_bonus * integration_events as f64 / horizon.max(1) as f64;
        self.outcome = w.w_state * self.r_state + w.w_semantic * self.r_semantic + self.trajectory;
        finish(self, w)
    }

    /// Per-objective rewards; they sum to `total` on both branches.
    pub fn per_objective(&self, w: &RewardWeights, split: ObjectiveSplit) -> Vec<f64> {
        let safety = if self.gated { self.total } else { 0.0 };
        let on = if self.gated { 0.0 } else { 1.0 };
        match split {
            ObjectiveSplit::Layers => vec![
                safety,
                on * w.lambda_p * self.process,
                on * w.lambda_s * self.outcome,
            ],
            ObjectiveSplit::Components => vec![
                safety,
                on * w.lambda_p * w.w1 * self.r_soc,
                on * w.lambda_p * w.w2 * self.r_int,
                on * w.lambda_p * w.w3 * self.r_pers,
                on * w.lambda_s * w.w_state * self.r_state,
                on * w.lambda_s * w.w_semantic * self.r_semantic,
                on * w.lambda_s * self.trajectory,
            ],
        }
    }
}
