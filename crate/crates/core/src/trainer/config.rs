use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::TrainerError;
use crate::belief::FilterConfig;
use crate::evo::EaConfig;
use crate::graph::KnowledgeGraph;
use crate::policy::PolicyConfig;
use crate::ppo::PpoConfig;
use crate::reward::{EvaluatorSpec, RewardWeights};
use crate::sim::ScenarioConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablation {
    /// PPO only: a single individual, no selection or variation.
    pub disable_ea: bool,
    /// Outcome-only reward (`lambda_p = 0`).
    pub disable_prm: bool,
    /// One merged adapter of rank `ea_rank + rl_rank`, trained by PPO and evolved.
    pub single_adapter: bool,
}

impl Ablation {
    pub const FLAGS: [&'static str; 3] = ["disable_ea", "disable_prm", "single_adapter"];

    pub fn set(&mut self, flag: &str) -> Result<(), TrainerError> {
        match flag {
            "disable_ea" => self.disable_ea = true,
            "disable_prm" => self.disable_prm = true,
            "single_adapter" => self.single_adapter = true,
            other => {
                return Err(TrainerError::Config(format!(
                    "unknown ablation flag `{other}` (expected one of {})",
                    Self::FLAGS.join(", ")
                )))
            }
        }
        Ok(())
    }
}

/// Top-level run configuration, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Graph document; relative paths are resolved against the config file.
    pub graph: PathBuf,
    pub horizon: usize,
    pub eval_episodes: usize,
    /// Environment steps each individual trains for per generation.
    pub steps_per_generation: usize,
    pub parallel: bool,
    pub discounted_fitness: bool,
    pub probes: usize,
    pub output_dir: PathBuf,
    pub trajectories: bool,
    pub scenario: ScenarioConfig,
    pub filter: FilterConfig,
    pub policy: PolicyConfig,
    pub ppo: PpoConfig,
    pub ea: EaConfig,
    pub reward: RewardWeights,
    pub ablation: Ablation,
    pub evaluator: EvaluatorSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            graph: PathBuf::new(),
            horizon: 32,
            eval_episodes: 8,
            steps_per_generation: 4096,
            parallel: true,
            discounted_fitness: false,
            probes: 16,
            output_dir: PathBuf::from("runs/default"),
            trajectories: true,
            scenario: ScenarioConfig::default(),
            filter: FilterConfig::default(),
            policy: PolicyConfig::default(),
            ppo: PpoConfig::default(),
            ea: EaConfig::default(),
            reward: RewardWeights::default(),
            ablation: Ablation::default(),
            evaluator: EvaluatorSpec::default(),
        }
    }
}

fn section(name: &str, e: impl std::fmt::Display) -> TrainerError {
    TrainerError::Config(format!("[{name}] {e}"))
}

impl RunConfig {
    /// Parses TOML; a relative `graph` path is joined onto `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, TrainerError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| TrainerError::Config(e.to_string()))?;
        if cfg.graph.as_os_str().is_empty() {
            return Err(TrainerError::Config("missing `graph` path".into()));
        }
        if cfg.graph.is_relative() {
            cfg.graph = base_dir.join(&cfg.graph);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, TrainerError> {
        let text = std::fs::read_to_string(path).map_err(|e| TrainerError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn load_graph(&self) -> Result<KnowledgeGraph, TrainerError> {
        Ok(KnowledgeGraph::load(&self.graph)?)
    }

    /// Copy with the ablation flags folded into the sub-configurations.
    pub fn effective(&self) -> RunConfig {
        let mut cfg = self.clone();
        if cfg.ablation.disable_prm {
            cfg.reward.lambda_p = 0.0;
        }
        if cfg.ablation.single_adapter {
            cfg.policy.ea_rank += cfg.policy.rl_rank;
            cfg.policy.rl_rank = 0;
        }
        if cfg.ablation.disable_ea {
            cfg.ea.population = 1;
        }
        cfg
    }

    /// Checks every section. Validates the configuration as written, before
    /// ablation flags are applied.
    pub fn validate(&self) -> Result<(), TrainerError> {
        let bad = |m: &str| Err(TrainerError::Config(m.into()));
        if self.horizon == 0 {
            return bad("horizon must be at least 1");
        }
        if self.eval_episodes == 0 {
            return bad("eval_episodes must be at least 1");
        }
        if self.steps_per_generation == 0 {
            return bad("steps_per_generation must be at least 1");
        }
        if self.probes == 0 {
            return bad("probes must be at least 1");
        }
        if self.ablation.disable_ea && self.ablation.single_adapter {
            return bad("disable_ea and single_adapter cannot be combined");
        }
        self.scenario.validate().map_err(|e| section("scenario", e))?;
        self.filter.validate().map_err(|e| section("filter", e))?;
        self.policy.validate().map_err(|e| section("policy", e))?;
        if !self.ablation.single_adapter && self.policy.rl_rank == 0 {
            return bad("rl_rank must be at least 1 unless single_adapter is set");
        }
        self.ppo.validate().map_err(|e| section("ppo", e))?;
        self.ea.validate().map_err(|e| section("ea", e))?;
        self.reward.validate().map_err(|e| section("reward", e))?;
        Ok(())
    }
}
