//! The generation loop: per-individual PPO refinement of a fresh gradient
//! adapter on top of the evolved adapter, frozen evaluation, Pareto
//! selection on (fitness, novelty), and variation.
//!
//! Every random draw comes from a stream keyed by (seed, generation,
//! individual, purpose), so serial and parallel runs produce identical
//! outputs and a run resumed from `run_state.bin` continues bitwise.

mod config;
mod rng;
mod rollout;
mod state;

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{Ablation, RunConfig};
pub use rng::{stream, Purpose, GENERATION_SCOPE};
pub use rollout::{
    evaluate, input_dim, optimizer_steps, probe_features, probe_signature, train, EvalSummary, Episode, StepRecord,
    TrainStats, World,
};
pub use state::{Carry, Genotype, RunState, RUN_STATE_VERSION};

use crate::belief::BeliefError;
use crate::evo::{self, EvoError, Individual};
use crate::graph::GraphError;
use crate::metrics::{self, ElitePoint, MetricsError, MetricsRow, MetricsWriter, ProjectionRow, TrajectoryRecord};
use crate::policy::checkpoint::{self, CheckpointError};
use crate::policy::{AdapterSet, BaseNetwork, ParamGroup, PolicyDims, PolicyError, PolicyNet};
use crate::ppo::{PpoError, PpoLearner};
use crate::reward::RewardError;
use crate::sim::SimError;

#[derive(Debug, Error)]
pub enum TrainerError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Belief(#[from] BeliefError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] CheckpointError),
    #[error("evaluator: {0}")]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Ppo(#[from] PpoError),
    #[error(transparent)]
    Evo(#[from] EvoError),
    #[error("output: {0}")]
    Metrics(#[from] MetricsError),
    #[error("run state: {0}")]
    RunState(String),
}

pub const REPORT_HEADER: [&str; 18] = [
    "generation",
    "individual",
    "id",
    "parents",
    "fitness",
    "novelty",
    "gate_rate",
    "process_mean",
    "outcome_mean",
    "depth_mean",
    "directness_mean",
    "ki_rate",
    "kt_rate",
    "ct_rate",
    "cr_rate",
    "elite",
    "ppo_skipped",
    "error",
];

/// One `report.csv` row; field order is the column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub generation: usize,
    pub individual: usize,
    pub id: u64,
    /// Parent ids joined with `;`.
    pub parents: String,
    pub fitness: f64,
    pub novelty: f64,
    pub gate_rate: f64,
    pub process_mean: f64,
    pub outcome_mean: f64,
    pub depth_mean: f64,
    pub directness_mean: f64,
    pub ki_rate: f64,
    pub kt_rate: f64,
    pub ct_rate: f64,
    pub cr_rate: f64,
    pub elite: bool,
    pub ppo_skipped: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationReport {
    pub generation: usize,
    pub rows: Vec<ReportRow>,
    pub metrics: MetricsRow,
    pub elite_ids: Vec<u64>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub reports: Vec<GenerationReport>,
    /// Base fingerprint at initialization and after the last generation.
    pub base_fingerprint: ([u8; 32], [u8; 32]),
    pub best_fitness: f64,
}

/// Result of one individual's inner loop and evaluation.
struct Outcome {
    eval: Result<EvalSummary, String>,
    trained: Option<AdapterSet>,
    learner: Option<PpoLearner>,
    signature: Option<Vec<Vec<f64>>>,
    trajectories: Vec<TrajectoryRecord>,
    skipped: u64,
}

struct Setup {
    config: RunConfig,
    template: AdapterSet,
    group: ParamGroup,
    per_generation_steps: u64,
}

impl Setup {
    fn new(config: &RunConfig, graph: &crate::graph::KnowledgeGraph) -> Result<Self, TrainerError> {
        let eff = config.effective();
        let dims = PolicyDims {
            input: input_dim(graph),
            hidden: eff.policy.hidden,
            concepts: graph.concept_count(),
        };
        let mut rng = stream(eff.seed, 0, GENERATION_SCOPE, Purpose::BaseInit);
        let base = Arc::new(BaseNetwork::init(dims, eff.policy.log_std_bias, &mut rng));
        let p = &eff.policy;
        let template = AdapterSet::init(base, p.ea_rank, p.rl_rank, p.ea_init_std, p.rl_init_std, &mut rng);
        let group = if template.has_rl() { ParamGroup::Rl } else { ParamGroup::Ea };
        let per_generation_steps = optimizer_steps(&eff, eff.steps_per_generation);
        Ok(Self {
            config: eff,
            template,
            group,
            per_generation_steps,
        })
    }

    fn initial_population(&self) -> Vec<Individual> {
        let p = &self.config.policy;
        (0..self.config.ea.population)
            .map(|i| {
                let mut rng = stream(self.config.seed, 0, i as u64, Purpose::PopulationInit);
                let set = AdapterSet::init(self.template.base().clone(), p.ea_rank, 0, p.ea_init_std, 0.0, &mut rng);
                Individual::new(i as u64, set.flatten_ea())
            })
            .collect()
    }

    /// Genotype plus a fresh zero-product gradient adapter and critic.
    fn phenotype(&self, ind: &Individual, generation: usize, index: usize) -> Result<(AdapterSet, PpoLearner), TrainerError> {
        let cfg = &self.config;
        let mut adapters = AdapterSet::unflatten_ea(&ind.ea_params, &self.template)?;
        let key = |p| stream(cfg.seed, generation as u64, index as u64, p);
        adapters.reinit_rl(cfg.policy.rl_init_std, &mut key(Purpose::RlInit));
        let total = if cfg.ablation.disable_ea {
            self.per_generation_steps * cfg.ea.generations as u64
        } else {
            self.per_generation_steps
        };
        let learner = PpoLearner::new(cfg.ppo, &adapters, self.group, total, &mut key(Purpose::Critic));
        Ok((adapters, learner))
    }

    fn carried(&self, carry: &Carry) -> Result<(AdapterSet, PpoLearner), TrainerError> {
        let mut adapters = AdapterSet::unflatten_ea(&carry.ea, &self.template)?;
        adapters.set_flat(ParamGroup::Rl, &carry.rl)?;
        Ok((adapters, carry.learner.clone()))
    }

    fn run_individual(
        &self,
        world: &World,
        probes: &[Vec<f64>],
        start: (AdapterSet, PpoLearner),
        generation: usize,
        index: usize,
    ) -> Outcome {
        let cfg = &self.config;
        let key = |p| stream(cfg.seed, generation as u64, index as u64, p);
        let (mut adapters, mut learner) = start;
        let mut trajectories = Vec::new();
        let result = (|| -> Result<(EvalSummary, Vec<Vec<f64>>), TrainerError> {
            let mut evaluator = cfg.evaluator.build()?;
            train(
                world,
                &mut adapters,
                &mut learner,
                evaluator.as_mut(),
                &mut key(Purpose::Rollout),
                &mut key(Purpose::Ppo),
            )?;
            let summary = evaluate(
                world,
                &adapters,
                evaluator.as_mut(),
                &mut key(Purpose::Evaluation),
                generation,
                index,
                cfg.trajectories.then_some(&mut trajectories),
            )?;
            let net = PolicyNet::from_adapters(&adapters, &cfg.policy)?;
            Ok((summary, probe_signature(&net, probes)?))
        })();
        match result {
            Ok((summary, signature)) => Outcome {
                eval: Ok(summary),
                skipped: learner.skipped,
                trained: Some(adapters),
                learner: Some(learner),
                signature: Some(signature),
                trajectories,
            },
            Err(e) => Outcome {
                eval: Err(e.to_string()),
                skipped: learner.skipped,
                trained: None,
                learner: None,
                signature: None,
                trajectories: Vec::new(),
            },
        }
    }
}

/// Resolves the output directory and loads the graph.
fn prepare(config: &RunConfig) -> Result<crate::graph::KnowledgeGraph, TrainerError> {
    config.validate()?;
    config.load_graph()
}

fn mean_of(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Runs (or resumes) training, writing all outputs under `config.output_dir`.
pub fn run(config: &RunConfig, resume: bool) -> Result<RunSummary, TrainerError> {
    let graph = prepare(config)?;
    let setup = Setup::new(config, &graph)?;
    let cfg = &setup.config;
    let world = World::new(cfg, &graph);
    let dir = cfg.output_dir.clone();
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |e| TrainerError::Io { path, source: e }
    };
    std::fs::create_dir_all(&dir).map_err(io(&dir))?;
    let fingerprint = setup.template.base().fingerprint();
    let state_path = dir.join("run_state.bin");

    let (mut population, mut next_id, mut carry, start) = if resume {
        let st = RunState::load(&state_path)?;
        if st.seed != cfg.seed || st.base_fingerprint != hex::encode(fingerprint) {
            return Err(TrainerError::RunState(
                "saved run does not match this configuration (seed or network differ)".into(),
            ));
        }
        let pop: Vec<Individual> = st.population.iter().map(Genotype::individual).collect();
        (pop, st.next_id, st.carry, st.completed)
    } else {
        let pop = setup.initial_population();
        let next = pop.len() as u64;
        let config_path = dir.join("config.toml");
        std::fs::write(&config_path, config.to_toml()).map_err(io(&config_path))?;
        (pop, next, None, 0)
    };
    let mut writer = MetricsWriter::open(&dir, &REPORT_HEADER, cfg.trajectories, resume)?;
    let probes = probe_features(&world, cfg.seed)?;
    let mut reports = Vec::new();
    let mut best_fitness = f64::NEG_INFINITY;

    for generation in start..cfg.ea.generations {
        let clock = Instant::now();
        let starts = (0..population.len())
            .map(|i| match &carry {
                Some(c) if cfg.ablation.disable_ea => setup.carried(c),
                _ => setup.phenotype(&population[i], generation, i),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let job = |(i, start): (usize, (AdapterSet, PpoLearner))| {
            setup.run_individual(&world, &probes, start, generation, i)
        };
        let outcomes: Vec<Outcome> = if cfg.parallel {
            starts.into_par_iter().enumerate().map(job).collect()
        } else {
            starts.into_iter().enumerate().map(job).collect()
        };

        for (ind, out) in population.iter_mut().zip(&outcomes) {
            ind.fitness = out.eval.as_ref().map_or(f64::NEG_INFINITY, |s| s.fitness);
            if cfg.ablation.single_adapter {
                if let Some(trained) = &out.trained {
                    ind.ea_params = trained.flatten_ea();
                }
            }
        }
        let n = population.len();
        let novelty = if n >= 2 {
            let params: Vec<Vec<f64>> = population.iter().map(|p| p.ea_params.clone()).collect();
            evo::novelty(&params, cfg.ea.novelty_k)?
        } else {
            vec![0.0; n]
        };
        for (ind, nv) in population.iter_mut().zip(novelty) {
            ind.novelty = nv;
        }
        let elites = if cfg.ablation.disable_ea {
            (0..n).collect()
        } else {
            let points: Vec<(f64, f64)> = population.iter().map(Individual::point).collect();
            evo::pareto_elites(&points, cfg.ea.elite_target())?
        };

        let ok: Vec<&EvalSummary> = outcomes.iter().filter_map(|o| o.eval.as_ref().ok()).collect();
        let signatures: Vec<Vec<Vec<f64>>> = outcomes.iter().filter_map(|o| o.signature.clone()).collect();
        let sv = if signatures.len() >= 2 {
            metrics::behavioral_diversity(&signatures)?
        } else {
            0.0
        };
        let m = |f: fn(&EvalSummary) -> f64| mean_of(ok.iter().map(|s| f(s)));
        let row = MetricsRow {
            generation,
            fitness_mean: if ok.is_empty() { f64::NEG_INFINITY } else { m(|s| s.fitness) },
            fitness_max: population.iter().map(|p| p.fitness).fold(f64::NEG_INFINITY, f64::max),
            sv,
            gate_rate: m(|s| s.gate_rate),
            depth_mean: m(|s| s.depth_mean),
            directness_mean: m(|s| s.directness_mean),
            ki_rate: m(|s| s.ki_rate),
            kt_rate: m(|s| s.kt_rate),
            ct_rate: m(|s| s.ct_rate),
            cr_rate: m(|s| s.cr_rate),
        };
        let rows: Vec<ReportRow> = population
            .iter()
            .zip(&outcomes)
            .enumerate()
            .map(|(i, (ind, out))| {
                let s = out.eval.as_ref().ok().cloned().unwrap_or_default();
                ReportRow {
                    generation,
                    individual: i,
                    id: ind.id,
                    parents: ind.parents.iter().map(u64::to_string).collect::<Vec<_>>().join(";"),
                    fitness: ind.fitness,
                    novelty: ind.novelty,
                    gate_rate: s.gate_rate,
                    process_mean: s.process_mean,
                    outcome_mean: s.outcome_mean,
                    depth_mean: s.depth_mean,
                    directness_mean: s.directness_mean,
                    ki_rate: s.ki_rate,
                    kt_rate: s.kt_rate,
                    ct_rate: s.ct_rate,
                    cr_rate: s.cr_rate,
                    elite: elites.contains(&i),
                    ppo_skipped: out.skipped,
                    error: out.eval.as_ref().err().cloned().unwrap_or_default(),
                }
            })
            .collect();
        let elite_points: Vec<ElitePoint> = elites
            .iter()
            .map(|&i| ElitePoint {
                generation,
                id: population[i].id,
                fitness: population[i].fitness.is_finite().then_some(population[i].fitness),
                novelty: population[i].novelty,
                ea_params: population[i].ea_params.clone(),
            })
            .collect();

        writer.metrics(&row)?;
        writer.report(&rows)?;
        writer.elites(&elite_points)?;
        for out in &outcomes {
            writer.trajectories(&out.trajectories)?;
        }

        let best = (0..n)
            .filter(|&i| outcomes[i].trained.is_some())
            .max_by(|&a, &b| population[a].fitness.total_cmp(&population[b].fitness).then(b.cmp(&a)));
        if let Some(b) = best {
            let path = dir.join("best_policy.bin");
            checkpoint::save(outcomes[b].trained.as_ref().expect("trained"), &path)?;
            best_fitness = population[b].fitness;
        }

        if cfg.ablation.disable_ea {
            let out = outcomes.into_iter().next().expect("one individual");
            if let (Some(a), Some(l)) = (out.trained, out.learner) {
                carry = Some(Carry {
                    ea: a.flatten_ea(),
                    rl: a.flatten(ParamGroup::Rl),
                    learner: l,
                });
            }
            population[0].parents = vec![population[0].id];
        } else {
            let mut rng = stream(cfg.seed, generation as u64, GENERATION_SCOPE, Purpose::Variation);
            population = evo::next_generation(&population, &elites, &cfg.ea, &mut next_id, &mut rng)?;
        }

        RunState {
            seed: cfg.seed,
            base_fingerprint: hex::encode(fingerprint),
            completed: generation + 1,
            next_id,
            population: population.iter().map(Genotype::from).collect(),
            carry: carry.clone(),
        }
        .save(&state_path)?;
        let wall_seconds = clock.elapsed().as_secs_f64();
        writer.timing(generation, wall_seconds)?;
        reports.push(GenerationReport {
            generation,
            elite_ids: elites.iter().map(|&i| rows[i].id).collect(),
            rows,
            metrics: row,
            wall_seconds,
        });
    }

    export_projection(&dir)?;
    Ok(RunSummary {
        output_dir: dir,
        reports,
        base_fingerprint: (fingerprint, setup.template.base().fingerprint()),
        best_fitness,
    })
}

/// Projects every elite adapter vector in `elites.jsonl` onto two principal
/// axes and writes `projection.csv`. Returns the number of rows written.
pub fn export_projection(run_dir: &Path) -> Result<usize, TrainerError> {
    let points = metrics::read_elites(&run_dir.join("elites.jsonl"))?;
    if points.len() < 2 {
        return Ok(0);
    }
    let vectors: Vec<Vec<f64>> = points.iter().map(|p| p.ea_params.clone()).collect();
    let coords = metrics::pca_project(&vectors)?;
    let rows: Vec<ProjectionRow> = points
        .iter()
        .zip(coords)
        .map(|(p, [pc1, pc2])| ProjectionRow {
            generation: p.generation,
            id: p.id,
            fitness: p.fitness,
            pc1,
            pc2,
        })
        .collect();
    metrics::write_projection(&run_dir.join("projection.csv"), &rows)?;
    Ok(rows.len())
}

/// Checks a configuration end to end without training: every section, the
/// graph document, and the policy dimensions it implies.
pub fn validate(config: &RunConfig) -> Result<PolicyDims, TrainerError> {
    let graph = prepare(config)?;
    Ok(Setup::new(config, &graph)?.template.dims())
}

/// Frozen evaluation of a saved policy under `config`'s scenario and reward.
pub fn evaluate_checkpoint(config: &RunConfig, checkpoint_path: &Path) -> Result<EvalSummary, TrainerError> {
    let graph = prepare(config)?;
    let eff = config.effective();
    let adapters = checkpoint::load(checkpoint_path)?;
    let dims = adapters.dims();
    let expected = input_dim(&graph);
    if dims.input != expected || dims.concepts != graph.concept_count() {
        return Err(TrainerError::Config(format!(
            "checkpoint expects {} concepts and {} features, graph gives {} and {}",
            dims.concepts,
            dims.input,
            graph.concept_count(),
            expected
        )));
    }
    let world = World::new(&eff, &graph);
    let mut evaluator = eff.evaluator.build()?;
    let mut rng = stream(eff.seed, u64::MAX, GENERATION_SCOPE, Purpose::Evaluation);
    evaluate(&world, &adapters, evaluator.as_mut(), &mut rng, 0, 0, None)
}
