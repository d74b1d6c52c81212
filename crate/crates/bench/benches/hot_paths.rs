use std::path::Path;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tutor_erl::belief::init_belief;
use tutor_erl::evo::{non_dominated, pareto_elites};
use tutor_erl::graph::KnowledgeGraph;
use tutor_erl::policy::{sample_action, AdapterSet, BaseNetwork, ParamGroup, PolicyConfig, PolicyDims, PolicyNet};
use tutor_erl::ppo::{PpoConfig, PpoLearner, RolloutBuffer, Transition};
use tutor_erl::sim::{ScenarioConfig, Simulator};
use tutor_erl::trainer::input_dim;

fn graph() -> KnowledgeGraph {
    KnowledgeGraph::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/six_concept_graph.toml")).unwrap()
}

fn policy(graph: &KnowledgeGraph, rng: &mut ChaCha8Rng) -> AdapterSet {
    let dims = PolicyDims {
        input: input_dim(graph),
        hidden: 64,
        concepts: graph.concept_count(),
    };
    let base = Arc::new(BaseNetwork::init(dims, -0.5, rng));
    AdapterSet::init(base, 24, 8, 0.05, 0.02, rng)
}

fn simulator(c: &mut Criterion) {
    let g = graph();
    let cfg = ScenarioConfig::default();
    let sim = Simulator::new(&g, &cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let adapters = policy(&g, &mut rng);
    let net = PolicyNet::from_adapters(&adapters, &PolicyConfig::default()).unwrap();
    let state = sim.initial_state(&mut rng).unwrap();
    let x = vec![0.3; input_dim(&g)];
    let (action, _) = sample_action(&net.forward(&x).unwrap(), &mut rng);
    c.bench_function("sim_step", |b| b.iter(|| sim.step(&state, &action, &mut rng)));

    for n in [64, 256] {
        let belief = init_belief(n, &sim, &mut rng).unwrap();
        let (_, obs) = sim.step(&state, &action, &mut rng);
        c.bench_function(&format!("belief_update_{n}"), |b| {
            b.iter_batched(
                || belief.clone(),
                |mut bel| bel.update(&sim, &action, &obs, 0.5, &mut rng),
                BatchSize::SmallInput,
            )
        });
    }
}

fn network(c: &mut Criterion) {
    let g = graph();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let adapters = policy(&g, &mut rng);
    let cfg = PolicyConfig::default();
    let x: Vec<f64> = (0..input_dim(&g)).map(|_| rng.random()).collect();
    c.bench_function("policy_build", |b| b.iter(|| PolicyNet::from_adapters(&adapters, &cfg).unwrap()));
    let net = PolicyNet::from_adapters(&adapters, &cfg).unwrap();
    c.bench_function("policy_forward_sample", |b| {
        b.iter(|| sample_action(&net.forward(&x).unwrap(), &mut rng))
    });

    let ppo = PpoConfig {
        k_update: 512,
        minibatch: 128,
        epochs: 1,
        ..Default::default()
    };
    let learner = PpoLearner::new(ppo, &adapters, ParamGroup::Rl, 1000, &mut rng);
    let mut buffer = RolloutBuffer::new(3, 512);
    for t in 0..512 {
        let x: Vec<f64> = (0..input_dim(&g)).map(|_| rng.random()).collect();
        let (action, lp) = sample_action(&net.forward(&x).unwrap(), &mut rng);
        let rewards = vec![-action.directness, action.socratic_depth, 0.1];
        buffer
            .push(Transition {
                total: rewards.iter().sum(),
                values: learner.values(&x),
                features: x,
                action,
                rewards,
                log_prob: lp,
                done: t % 32 == 31,
            })
            .unwrap();
    }
    c.bench_function("ppo_update_512", |b| {
        b.iter_batched(
            || (adapters.clone(), learner.clone()),
            |(mut a, mut l)| l.update(&mut a, &cfg, &buffer, &mut rng).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn selection(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let points: Vec<(f64, f64)> = (0..64).map(|_| (rng.random(), rng.random())).collect();
    c.bench_function("non_dominated_64", |b| b.iter(|| non_dominated(&points)));
    c.bench_function("pareto_elites_64", |b| b.iter(|| pareto_elites(&points, 32).unwrap()));
}

criterion_group!(benches, simulator, network, selection);
criterion_main!(benches);
