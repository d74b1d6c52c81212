//! Factored action distribution: categorical target concept, categorical
//! link target (with the chosen target masked out and a trailing "no link"
//! slot), and five independent sigmoid-squashed Gaussians.

use rand::Rng;
use rand_distr::StandardNormal;

use super::PolicyError;
use crate::sim::{logistic, TutorAction};

const FIELDS: usize = TutorAction::CONTINUOUS_FIELDS;
/// Pre-squash samples are clamped here so the squashed value stays inside (0, 1).
const PRE_SQUASH_LIMIT: f64 = 30.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution {
    pub concept_logits: Vec<f64>,
    /// One logit per concept plus a final "no link" logit.
    pub link_logits: Vec<f64>,
    pub means: [f64; FIELDS],
    pub log_stds: [f64; FIELDS],
    /// False where the raw log-stddev output was clamped (zero gradient).
    pub log_std_free: [bool; FIELDS],
}

fn log_softmax(logits: &[f64], masked: Option<usize>) -> Vec<f64> {
    let max = logits
        .iter()
        .enumerate()
        .filter(|&(i, _)| Some(i) != masked)
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits
        .iter()
        .enumerate()
        .filter(|&(i, _)| Some(i) != masked)
        .map(|(_, &v)| (v - max).exp())
        .sum();
    let lse = max + sum.ln();
    logits
        .iter()
        .enumerate()
        .map(|(i, &v)| if Some(i) == masked { f64::NEG_INFINITY } else { v - lse })
        .collect()
}

fn sample_categorical<R: Rng + ?Sized>(log_p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, lp) in log_p.iter().enumerate() {
        if lp.is_finite() {
            acc += lp.exp();
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

fn categorical_entropy(log_p: &[f64]) -> (f64, Vec<f64>) {
    let h: f64 = -log_p
        .iter()
        .filter(|lp| lp.is_finite())
        .map(|&lp| lp.exp() * lp)
        .sum::<f64>();
    let grad = log_p
        .iter()
        .map(|&lp| if lp.is_finite() { -lp.exp() * (lp + h) } else { 0.0 })
        .collect();
    (h, grad)
}

impl ActionDistribution {
    pub fn from_output(output: &[f64], concepts: usize, log_std_bounds: (f64, f64)) -> Self {
        let c = concepts;
        let mut means = [0.0; FIELDS];
        let mut log_stds = [0.0; FIELDS];
        let mut log_std_free = [true; FIELDS];
        for i in 0..FIELDS {
            means[i] = output[2 * c + 1 + i];
            let raw = output[2 * c + 1 + FIELDS + i];
            log_stds[i] = raw.clamp(log_std_bounds.0, log_std_bounds.1);
            log_std_free[i] = raw > log_std_bounds.0 && raw < log_std_bounds.1;
        }
        Self {
            concept_logits: output[..c].to_vec(),
            link_logits: output[c..2 * c + 1].to_vec(),
            means,
            log_stds,
            log_std_free,
        }
    }

    pub fn concepts(&self) -> usize {
        self.concept_logits.len()
    }

    pub fn output_len(&self) -> usize {
        2 * self.concepts() + 1 + 2 * FIELDS
    }

    pub fn concept_probs(&self) -> Vec<f64> {
        log_softmax(&self.concept_logits, None).into_iter().map(f64::exp).collect()
    }

    /// Link probabilities given the chosen target (its slot is zero).
    pub fn link_probs(&self, target: usize) -> Vec<f64> {
        log_softmax(&self.link_logits, Some(target))
            .into_iter()
            .map(f64::exp)
            .collect()
    }

    /// Entropy of the concept head, the unmasked link head, and the
    /// pre-squash Gaussians, with its gradient with respect to the raw output.
    pub fn entropy_with_grad(&self) -> (f64, Vec<f64>) {
        let c = self.concepts();
        let (hc, gc) = categorical_entropy(&log_softmax(&self.concept_logits, None));
        let (hl, gl) = categorical_entropy(&log_softmax(&self.link_logits, None));
        let mut grad = Vec::with_capacity(self.output_len());
        grad.extend(gc);
        grad.extend(gl);
        grad.extend([0.0; FIELDS]);
        let mut h = hc + hl;
        for i in 0..FIELDS {
            h += self.log_stds[i] + HALF_LN_2PI + 0.5;
            grad.push(if self.log_std_free[i] { 1.0 } else { 0.0 });
        }
        debug_assert_eq!(grad.len(), 2 * c + 1 + 2 * FIELDS);
        (h, grad)
    }

    pub fn entropy(&self) -> f64 {
        self.entropy_with_grad().0
    }
}

/// Draws an action and returns it with its exact joint log-density.
pub fn sample_action<R: Rng + ?Sized>(dist: &ActionDistribution, rng: &mut R) -> (TutorAction, f64) {
    let c = dist.concepts();
    let target = sample_categorical(&log_softmax(&dist.concept_logits, None), rng);
    let link = sample_categorical(&log_softmax(&dist.link_logits, Some(target)), rng);
    let mut x = [0.0; FIELDS];
    for i in 0..FIELDS {
        let eps: f64 = rng.sample(StandardNormal);
        let u = dist.means[i] + dist.log_stds[i].exp() * eps;
        x[i] = logistic(u.clamp(-PRE_SQUASH_LIMIT, PRE_SQUASH_LIMIT));
    }
    let action = TutorAction {
        target,
        difficulty: x[0],
        ambiguity: x[1],
        directness: x[2],
        socratic_depth: x[3],
        link_target: (link < c).then_some(link),
        tone: x[4],
    };
    let lp = log_prob(dist, &action).unwrap_or(f64::NEG_INFINITY);
    (action, lp)
}

fn check_support(dist: &ActionDistribution, action: &TutorAction) -> Result<usize, PolicyError> {
    let c = dist.concepts();
    if action.target >= c {
        return Err(PolicyError::OutOfSupport(format!("target {}", action.target)));
    }
    match action.link_target {
        Some(l) if l >= c || l == action.target => {
            Err(PolicyError::OutOfSupport(format!("link target {l}")))
        }
        Some(l) => Ok(l),
        None => Ok(c),
    }
}

/// Log-probabilities of the concept choice, the link choice, and the
/// continuous block.
pub fn component_log_probs(
    dist: &ActionDistribution,
    action: &TutorAction,
) -> Result<[f64; 3], PolicyError> {
    Ok(log_prob_parts(dist, action)?.0)
}

fn log_prob_parts(
    dist: &ActionDistribution,
    action: &TutorAction,
) -> Result<([f64; 3], [f64; FIELDS]), PolicyError> {
    let link = check_support(dist, action)?;
    let lc = log_softmax(&dist.concept_logits, None)[action.target];
    let ll = log_softmax(&dist.link_logits, Some(action.target))[link];
    let mut lx = 0.0;
    let mut z = [0.0; FIELDS];
    for (i, &x) in action.continuous().iter().enumerate() {
        if !(x > 0.0 && x < 1.0) {
            return Err(PolicyError::OutOfSupport(format!("continuous field {i} = {x}")));
        }
        let u = (x / (1.0 - x)).ln();
        let sigma = dist.log_stds[i].exp();
        z[i] = (u - dist.means[i]) / sigma;
        lx += -0.5 * z[i] * z[i] - dist.log_stds[i] - HALF_LN_2PI - (x * (1.0 - x)).ln();
    }
    Ok(([lc, ll, lx], z))
}

pub fn log_prob(dist: &ActionDistribution, action: &TutorAction) -> Result<f64, PolicyError> {
    let [a, b, c] = component_log_probs(dist, action)?;
    Ok(a + b + c)
}

/// Log-density and its gradient with respect to the raw network output.
pub fn log_prob_grad(
    dist: &ActionDistribution,
    action: &TutorAction,
) -> Result<(f64, Vec<f64>), PolicyError> {
    let c = dist.concepts();
    let ([lc, ll, lx], z) = log_prob_parts(dist, action)?;
    let mut grad = vec![0.0; dist.output_len()];
    for (i, p) in dist.concept_probs().into_iter().enumerate() {
        grad[i] = f64::from(u8::from(i == action.target)) - p;
    }
    let link = action.link_target.unwrap_or(c);
    for (i, p) in dist.link_probs(action.target).into_iter().enumerate() {
        if i != action.target {
            grad[c + i] = f64::from(u8::from(i == link)) - p;
        }
    }
    for i in 0..FIELDS {
        grad[2 * c + 1 + i] = z[i] / dist.log_stds[i].exp();
        if dist.log_std_free[i] {
            grad[2 * c + 1 + FIELDS + i] = z[i] * z[i] - 1.0;
        }
    }
    Ok((lc + ll + lx, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const BOUNDS: (f64, f64) = (-5.0, 1.0);

    fn raw(c: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..2 * c + 1 + 2 * FIELDS)
            .map(|i| {
                let v: f64 = rng.sample(StandardNormal);
                if i >= 2 * c + 1 + FIELDS {
                    -0.7 + 0.3 * v
                } else {
                    v
                }
            })
            .collect()
    }

    fn action() -> TutorAction {
        TutorAction {
            target: 1,
            difficulty: 0.35,
            ambiguity: 0.7,
            directness: 0.02,
            socratic_depth: 0.9,
            link_target: Some(3),
            tone: 0.5,
        }
    }

    #[test]
    fn uniform_concept_head() {
        let mut out = raw(4, 0);
        out[..4].fill(0.0);
        let d = ActionDistribution::from_output(&out, 4, BOUNDS);
        let [lc, _, _] = component_log_probs(&d, &action()).unwrap();
        assert!((lc - 0.25f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn sampled_log_prob_is_consistent() {
        let d = ActionDistribution::from_output(&raw(4, 1), 4, BOUNDS);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let (a, lp) = sample_action(&d, &mut rng);
            assert!(lp.is_finite());
            assert_eq!(log_prob(&d, &a).unwrap(), lp);
            assert!(a.validate(4).is_ok());
            assert_ne!(a.link_target, Some(a.target));
        }
    }

    #[test]
    fn zero_variance_is_deterministic() {
        let mut d = ActionDistribution::from_output(&raw(4, 3), 4, BOUNDS);
        d.log_stds = [f64::NEG_INFINITY; FIELDS];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let (a, _) = sample_action(&d, &mut rng);
            for (x, m) in a.continuous().iter().zip(d.means) {
                assert_eq!(*x, logistic(m));
            }
        }
    }

    #[test]
    fn out_of_support_actions_are_rejected() {
        let d = ActionDistribution::from_output(&raw(4, 5), 4, BOUNDS);
        let mut a = action();
        a.link_target = Some(1);
        assert!(log_prob(&d, &a).is_err());
        let mut a = action();
        a.tone = 1.0;
        assert!(log_prob(&d, &a).is_err());
        let mut a = action();
        a.target = 4;
        assert!(log_prob(&d, &a).is_err());
    }

    #[test]
    fn link_probs_mask_target() {
        let d = ActionDistribution::from_output(&raw(4, 6), 4, BOUNDS);
        let p = d.link_probs(2);
        assert_eq!(p.len(), 5);
        assert_eq!(p[2], 0.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sample_frequencies_match_probabilities() {
        let d = ActionDistribution::from_output(&raw(3, 7), 3, BOUNDS);
        let p = d.concept_probs();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 40_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[sample_action(&d, &mut rng).0.target] += 1;
        }
        for i in 0..3 {
            let freq = counts[i] as f64 / n as f64;
            let se = (p[i] * (1.0 - p[i]) / n as f64).sqrt();
            assert!((freq - p[i]).abs() < 5.0 * se, "{i}: {freq} vs {}", p[i]);
        }
    }

    fn fd_check(f: impl Fn(&[f64]) -> f64, out: &[f64], analytic: &[f64]) {
        let h = 1e-6;
        for i in 0..out.len() {
            let mut p = out.to_vec();
            p[i] += h;
            let mut m = out.to_vec();
            m[i] -= h;
            let fd = (f(&p) - f(&m)) / (2.0 * h);
            let err = (fd - analytic[i]).abs();
            assert!(err <= 1e-3 * fd.abs().max(1e-3), "[{i}] fd {fd} vs {}", analytic[i]);
        }
    }

    #[test]
    fn log_prob_gradient_matches_finite_differences() {
        for seed in 0..5 {
            let out = raw(4, 10 + seed);
            for link in [Some(3), None] {
                let mut a = action();
                a.link_target = link;
                let d = ActionDistribution::from_output(&out, 4, BOUNDS);
                let (_, g) = log_prob_grad(&d, &a).unwrap();
                fd_check(
                    |o| log_prob(&ActionDistribution::from_output(o, 4, BOUNDS), &a).unwrap(),
                    &out,
                    &g,
                );
            }
        }
    }

    #[test]
    fn clamped_log_std_has_zero_gradient() {
        let mut out = raw(4, 20);
        let idx = 2 * 4 + 1 + FIELDS + 2;
        out[idx] = -9.0;
        let d = ActionDistribution::from_output(&out, 4, BOUNDS);
        assert_eq!(d.log_stds[2], -5.0);
        let (_, g) = log_prob_grad(&d, &action()).unwrap();
        assert_eq!(g[idx], 0.0);
        assert_eq!(d.entropy_with_grad().1[idx], 0.0);
    }

    #[test]
    fn entropy_gradient_matches_finite_differences() {
        let out = raw(4, 30);
        let d = ActionDistribution::from_output(&out, 4, BOUNDS);
        let (_, g) = d.entropy_with_grad();
        fd_check(|o| ActionDistribution::from_output(o, 4, BOUNDS).entropy(), &out, &g);
    }
}
