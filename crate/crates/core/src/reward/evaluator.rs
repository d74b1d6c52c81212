use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{EvaluatorScores, RewardError};
use crate::belief::BeliefFeatures;
use crate::graph::KnowledgeGraph;
use crate::sim::{zpd_indicator, AffectState, LatentState, Observation, TutorAction};

/// Everything an evaluator sees for one step. `belief` is the tutor's belief
/// at decision time, before the observation is folded in.
#[derive(Debug, Clone, Copy)]
pub struct EvaluationContext<'a> {
    pub action: &'a TutorAction,
    pub graph: &'a KnowledgeGraph,
    pub pre: &'a LatentState,
    pub post: &'a LatentState,
    pub obs: &'a Observation,
    pub belief: &'a BeliefFeatures,
}

pub trait Evaluator: Send {
    fn evaluate(&mut self, ctx: &EvaluationContext<'_>) -> Result<EvaluatorScores, RewardError>;
}

/// Deterministic rule-based scores computed from the structured action.
pub fn structural_evaluate(ctx: &EvaluationContext<'_>) -> EvaluatorScores {
    let a = ctx.action;
    let believed = &ctx.belief.mean_mastery;
    let valid_link = a
        .link_target
        .filter(|&l| ctx.graph.linked(a.target, l));
    let p_hallu = match a.link_target {
        Some(_) if valid_link.is_none() => 1.0,
        _ => 0.0,
    };
    let r_int = valid_link.map_or(0.0, |l| (1.0 - (a.difficulty - believed[l]).abs()).clamp(0.0, 1.0));
    let zpd = zpd_indicator(believed[a.target], a.difficulty, ctx.pre.profile.w_zpd);
    EvaluatorScores {
        p_direct: a.directness,
        p_hallu,
        p_viol: 0.0,
        r_soc: a.socratic_depth * (1.0 - a.directness),
        r_int,
        r_pers: f64::from(zpd) * (0.5 + 0.5 * a.tone),
        r_semantic: ctx.obs.hope.count() as f64 / 4.0,
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StructuralEvaluator;

impl Evaluator for StructuralEvaluator {
    fn evaluate(&mut self, ctx: &EvaluationContext<'_>) -> Result<EvaluatorScores, RewardError> {
        Ok(structural_evaluate(ctx))
    }
}

#[derive(Serialize)]
struct StateSummary<'a> {
    t: u64,
    mastery: &'a [f64],
    misconceptions: &'a [bool],
    affect: &'a AffectState,
}

impl<'a> From<&'a LatentState> for StateSummary<'a> {
    fn from(s: &'a LatentState) -> Self {
        Self {
            t: s.t,
            mastery: &s.mastery,
            misconceptions: &s.misconceptions,
            affect: &s.affect,
        }
    }
}

#[derive(Serialize)]
struct Request<'a> {
    action: &'a TutorAction,
    pre_state: StateSummary<'a>,
    post_state: StateSummary<'a>,
    observation: &'a Observation,
    belief: &'a BeliefFeatures,
}

/// Newline-delimited JSON client: one request object per step, one
/// [`EvaluatorScores`] object back. Any transport error, timeout, or
/// malformed reply is returned as an error.
pub struct RemoteEvaluator {
    writer: TcpStream,
    reader: BufReader<TcpStream>,
    line: String,
}

impl RemoteEvaluator {
    pub fn connect(address: &str, timeout: Duration) -> Result<Self, RewardError> {
        let stream = TcpStream::connect(address)?;
        stream.set_read_timeout(Some(timeout))?;
        stream.set_write_timeout(Some(timeout))?;
        stream.set_nodelay(true)?;
        Ok(Self {
            writer: stream.try_clone()?,
            reader: BufReader::new(stream),
            line: String::new(),
        })
    }
}

impl Evaluator for RemoteEvaluator {
    fn evaluate(&mut self, ctx: &EvaluationContext<'_>) -> Result<EvaluatorScores, RewardError> {
        let req = Request {
            action: ctx.action,
            pre_state: ctx.pre.into(),
            post_state: ctx.post.into(),
            observation: ctx.obs,
            belief: ctx.belief,
        };
        let mut payload =
            serde_json::to_vec(&req).map_err(|e| RewardError::Protocol(e.to_string()))?;
        payload.push(b'\n');
        self.writer.write_all(&payload)?;
        self.line.clear();
        if self.reader.read_line(&mut self.line)? == 0 {
            return Err(RewardError::Protocol("connection closed".into()));
        }
        let scores: EvaluatorScores =
            serde_json::from_str(self.line.trim_end()).map_err(|e| RewardError::Protocol(e.to_string()))?;
        scores.validate()?;
        Ok(scores)
    }
}

/// Evaluator selection from the run configuration. Each rollout builds its
/// own instance, so a remote evaluator gets one connection per worker.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EvaluatorSpec {
    #[default]
    Structural,
    Remote { address: String, timeout_ms: u64 },
}

impl EvaluatorSpec {
    pub fn build(&self) -> Result<Box<dyn Evaluator>, RewardError> {
        match self {
            Self::Structural => Ok(Box::new(StructuralEvaluator)),
            Self::Remote { address, timeout_ms } => Ok(Box::new(RemoteEvaluator::connect(
                address,
                Duration::from_millis(*timeout_ms),
            )?)),
        }
    }
}
