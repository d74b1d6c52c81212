use rand::seq::SliceRandom;
use rand::Rng;

use super::PpoError;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check(grads: &[Vec<f64>]) -> Result<usize, PpoError> {
    let first = grads.first().ok_or(PpoError::Shape("no gradients to project".into()))?;
    if grads.iter().any(|g| g.len() != first.len()) {
        return Err(PpoError::Shape("gradient lengths differ".into()));
    }
    Ok(first.len())
}

/// One-shot projection: each `g_k` has its conflicting components removed
/// against the *original* other gradients, then the results are summed.
pub fn pcgrad_project(grads: &[Vec<f64>]) -> Result<Vec<f64>, PpoError> {
    let n = check(grads)?;
    let norms: Vec<f64> = grads.iter().map(|g| dot(g, g)).collect();
    let mut out = vec![0.0; n];
    for (k, gk) in grads.iter().enumerate() {
        let mut projected = gk.clone();
        for (j, gj) in grads.iter().enumerate() {
            if j == k || norms[j] == 0.0 {
                continue;
            }
            let d = dot(gk, gj);
            if d < 0.0 {
                let s = d / norms[j];
                projected.iter_mut().zip(gj).for_each(|(p, g)| *p -= s * g);
            }
        }
        out.iter_mut().zip(&projected).for_each(|(o, p)| *o += p);
    }
    Ok(out)
}

/// Sequential variant: projections use the running projected gradient and
/// visit the other tasks in a random order.
pub fn pcgrad_sequential<R: Rng + ?Sized>(grads: &[Vec<f64>], rng: &mut R) -> Result<Vec<f64>, PpoError> {
    let n = check(grads)?;
    let norms: Vec<f64> = grads.iter().map(|g| dot(g, g)).collect();
    let mut out = vec![0.0; n];
    let mut order: Vec<usize> = (0..grads.len()).collect();
    for (k, gk) in grads.iter().enumerate() {
        order.shuffle(rng);
        let mut projected = gk.clone();
        for &j in &order {
            if j == k || norms[j] == 0.0 {
                continue;
            }
            let d = dot(&projected, &grads[j]);
            if d < 0.0 {
                let s = d / norms[j];
                projected.iter_mut().zip(&grads[j]).for_each(|(p, g)| *p -= s * g);
            }
        }
        out.iter_mut().zip(&projected).for_each(|(o, p)| *o += p);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hand_case() {
        let out = pcgrad_project(&[vec![1.0, 0.0], vec![-1.0, 1.0]]).unwrap();
        assert_eq!(out, vec![0.5, 1.5]);
    }

    #[test]
    fn non_conflicting_is_plain_sum() {
        let g = vec![vec![1.0, 2.0, 0.0], vec![0.5, 0.0, 3.0], vec![0.0, 1.0, 1.0]];
        assert_eq!(pcgrad_project(&g).unwrap(), vec![1.5, 3.0, 4.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(pcgrad_sequential(&g, &mut rng).unwrap(), vec![1.5, 3.0, 4.0]);
    }

    #[test]
    fn zero_gradients_are_skipped() {
        let out = pcgrad_project(&[vec![1.0, -1.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(out, vec![1.0, -1.0]);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(pcgrad_project(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(pcgrad_project(&[]).is_err());
    }

    #[test]
    fn sequential_two_task_matches_one_shot() {
        let g = vec![vec![1.0, 0.0], vec![-1.0, 1.0]];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(pcgrad_sequential(&g, &mut rng).unwrap(), vec![0.5, 1.5]);
    }

    proptest! {
        #[test]
        fn two_task_orthogonality(
            g1 in prop::collection::vec(-3.0f64..3.0, 6),
            g2 in prop::collection::vec(-3.0f64..3.0, 6),
        ) {
            prop_assume!(dot(&g1, &g1) > 1e-6 && dot(&g2, &g2) > 1e-6);
            let sum = pcgrad_project(&[g1.clone(), g2.clone()]).unwrap();
            let d = dot(&g1, &g2);
            if d < 0.0 {
                // sum = g1~ + g2~; isolate each projected term
                let p1: Vec<f64> = g1.iter().zip(&g2).map(|(a, b)| a - d / dot(&g2, &g2) * b).collect();
                let p2: Vec<f64> = sum.iter().zip(&p1).map(|(s, p)| s - p).collect();
                prop_assert!(dot(&p1, &g2).abs() < 1e-9);
                prop_assert!(dot(&p2, &g1).abs() < 1e-9);
            } else {
                for i in 0..6 {
                    prop_assert_eq!(sum[i], g1[i] + g2[i]);
                }
            }
        }
    }
}
