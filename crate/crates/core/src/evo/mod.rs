//! Outer evolutionary loop over flattened EA-adapter vectors: parameter-space
//! novelty, two-objective Pareto selection, arithmetic crossover and Gaussian
//! mutation.

use std::cmp::Ordering;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvoError {
    #[error("no evaluation episodes")]
    NoEpisodes,
    #[error("population too small: {0}")]
    TooSmall(usize),
    #[error("empty population")]
    Empty,
    #[error("vector lengths differ: {0} vs {1}")]
    Length(usize, usize),
    #[error("invalid EA configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EaConfig {
    pub population: usize,
    pub generations: usize,
    pub sigma: f64,
    pub crossover_range: [f64; 2],
    /// Elite target is `max(2, ceil(population * elite_fraction))`.
    pub elite_fraction: f64,
    pub novelty_k: usize,
    pub elitism: usize,
}

impl Default for EaConfig {
    fn default() -> Self {
        Self {
            population: 8,
            generations: 20,
            sigma: 0.02,
            crossover_range: [0.2, 0.8],
            elite_fraction: 0.5,
            novelty_k: 3,
            elitism: 1,
        }
    }
}

impl EaConfig {
    pub fn validate(&self) -> Result<(), EvoError> {
        let bad = |m: &str| Err(EvoError::Config(m.into()));
        if self.population < 2 {
            return bad("population must be at least 2");
        }
        if self.generations == 0 {
            return bad("generations must be at least 1");
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad("sigma must be finite and non-negative");
        }
        let [lo, hi] = self.crossover_range;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return bad("crossover_range must satisfy 0 <= lo <= hi <= 1");
        }
        if !(self.elite_fraction > 0.0 && self.elite_fraction <= 1.0) {
            return bad("elite_fraction must lie in (0, 1]");
        }
        if self.novelty_k == 0 {
            return bad("novelty_k must be positive");
        }
        if self.elitism > self.population {
            return bad("elitism cannot exceed the population size");
        }
        Ok(())
    }

    pub fn elite_target(&self) -> usize {
        let n = self.population;
        ((n as f64 * self.elite_fraction).ceil() as usize).max(2).min(n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub id: u64,
    pub parents: Vec<u64>,
    pub ea_params: Vec<f64>,
    pub fitness: f64,
    pub novelty: f64,
}

impl Individual {
    pub fn new(id: u64, ea_params: Vec<f64>) -> Self {
        Self {
            id,
            parents: Vec::new(),
            ea_params,
            fitness: f64::NAN,
            novelty: f64::NAN,
        }
    }

    pub fn point(&self) -> (f64, f64) {
        (self.fitness, self.novelty)
    }
}

pub fn fitness(returns: &[f64]) -> Result<f64, EvoError> {
    if returns.is_empty() {
        return Err(EvoError::NoEpisodes);
    }
    Ok(returns.iter().sum::<f64>() / returns.len() as f64)
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean distance from each vector to its `min(k, N-1)` nearest others.
pub fn novelty(params: &[Vec<f64>], k: usize) -> Result<Vec<f64>, EvoError> {
    let n = params.len();
    if n < 2 {
        return Err(EvoError::TooSmall(n));
    }
    if let Some(bad) = params.iter().find(|p| p.len() != params[0].len()) {
        return Err(EvoError::Length(params[0].len(), bad.len()));
    }
    let k = k.min(n - 1);
    Ok((0..n)
        .map(|i| {
            let mut d: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| distance(&params[i], &params[j]))
                .collect();
            d.sort_by(f64::total_cmp);
            d[..k].iter().sum::<f64>() / k as f64
        })
        .collect())
}

/// `a` is at least as good in both objectives and strictly better in one.
pub fn dominates(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 >= b.0 && a.1 >= b.1 && (a.0 > b.0 || a.1 > b.1)
}

fn front_of(points: &[(f64, f64)], members: &[usize]) -> Vec<usize> {
    members
        .iter()
        .copied()
        .filter(|&i| !members.iter().any(|&j| dominates(points[j], points[i])))
        .collect()
}

/// Indices of the non-dominated points, ascending.
pub fn non_dominated(points: &[(f64, f64)]) -> Vec<usize> {
    front_of(points, &(0..points.len()).collect::<Vec<_>>())
}

/// Successive non-dominated fronts covering every index.
pub fn pareto_fronts(points: &[(f64, f64)]) -> Vec<Vec<usize>> {
    let mut remaining: Vec<usize> = (0..points.len()).collect();
    let mut fronts = Vec::new();
    while !remaining.is_empty() {
        let front = front_of(points, &remaining);
        remaining.retain(|i| !front.contains(i));
        fronts.push(front);
    }
    fronts
}

/// Crowding distance of each member of `front` on the (fitness, novelty)
/// plane. Boundary points get infinity; objectives with a zero or
/// non-finite range contribute nothing to interior points.
pub fn crowding_distance(points: &[(f64, f64)], front: &[usize]) -> Vec<f64> {
    let m = front.len();
    let mut dist = vec![0.0; m];
    if m <= 2 {
        return vec![f64::INFINITY; m];
    }
    for obj in 0..2 {
        let val = |i: usize| if obj == 0 { points[front[i]].0 } else { points[front[i]].1 };
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| val(a).total_cmp(&val(b)).then(a.cmp(&b)));
        dist[order[0]] = f64::INFINITY;
        dist[order[m - 1]] = f64::INFINITY;
        let range = val(order[m - 1]) - val(order[0]);
        if !(range.is_finite() && range > 0.0) {
            continue;
        }
        for w in order.windows(3) {
            let gap = val(w[2]) - val(w[0]);
            if gap.is_finite() {
                dist[w[1]] += gap / range;
            }
        }
    }
    dist
}

/// Elite indices: whole fronts while they fit, then the next front by
/// descending crowding distance (ties by index).
pub fn pareto_elites(points: &[(f64, f64)], target: usize) -> Result<Vec<usize>, EvoError> {
    if points.is_empty() {
        return Err(EvoError::Empty);
    }
    let target = target.min(points.len());
    let mut elites = Vec::with_capacity(target);
    for front in pareto_fronts(points) {
        let room = target - elites.len();
        if room == 0 {
            break;
        }
        if front.len() <= room {
            elites.extend(front);
        } else {
            let crowd = crowding_distance(points, &front);
            let mut order: Vec<usize> = (0..front.len()).collect();
            order.sort_by(|&a, &b| crowd[b].total_cmp(&crowd[a]).then(front[a].cmp(&front[b])));
            elites.extend(order[..room].iter().map(|&i| front[i]));
        }
    }
    Ok(elites)
}

pub fn crossover(p1: &[f64], p2: &[f64], gamma: f64) -> Result<Vec<f64>, EvoError> {
    if p1.len() != p2.len() {
        return Err(EvoError::Length(p1.len(), p2.len()));
    }
    // b + gamma (a - b) keeps identical parents bitwise unchanged
    Ok(p1.iter().zip(p2).map(|(a, b)| b + gamma * (a - b)).collect())
}

pub fn mutate<R: Rng + ?Sized>(v: &[f64], sigma: f64, rng: &mut R) -> Vec<f64> {
    if sigma == 0.0 {
        return v.to_vec();
    }
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    v.iter().map(|x| x + normal.sample(rng)).collect()
}

fn by_fitness_desc(pop: &[Individual], a: usize, b: usize) -> Ordering {
    pop[b].fitness.total_cmp(&pop[a].fitness).then(a.cmp(&b))
}

/// Builds the next population of exactly `config.population` individuals.
/// Copies the `elitism` fittest elites, then fills with mutated crossovers
/// of parents drawn uniformly with replacement from the elites. Every
/// output gets a fresh id from `next_id`.
pub fn next_generation<R: Rng + ?Sized>(
    population: &[Individual],
    elites: &[usize],
    config: &EaConfig,
    next_id: &mut u64,
    rng: &mut R,
) -> Result<Vec<Individual>, EvoError> {
    if elites.is_empty() {
        return Err(EvoError::Empty);
    }
    let mut fresh = |parents: Vec<u64>, params: Vec<f64>| {
        let mut ind = Individual::new(*next_id, params);
        ind.parents = parents;
        *next_id += 1;
        ind
    };
    let mut ranked = elites.to_vec();
    ranked.sort_by(|&a, &b| by_fitness_desc(population, a, b));
    let mut out = Vec::with_capacity(config.population);
    for &e in ranked.iter().take(config.elitism.min(config.population)) {
        let src = &population[e];
        out.push(fresh(vec![src.id], src.ea_params.clone()));
    }
    let [lo, hi] = config.crossover_range;
    while out.len() < config.population {
        let p1 = &population[elites[rng.random_range(0..elites.len())]];
        let p2 = &population[elites[rng.random_range(0..elites.len())]];
        let gamma = if hi > lo { rng.random_range(lo..hi) } else { lo };
        let child = crossover(&p1.ea_params, &p2.ea_params, gamma)?;
        let child = mutate(&child, config.sigma, rng);
        out.push(fresh(vec![p1.id, p2.id], child));
    }
    Ok(out)
}
