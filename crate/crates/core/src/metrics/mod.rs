//! Run metrics, behavioral diversity, and the 2-D projection of elite
//! adapter vectors.

mod outputs;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use outputs::{
    read_elites, read_metrics, write_projection, ElitePoint, MetricsWriter, ProjectionRow,
    TrajectoryRecord, METRICS_HEADER,
};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("need at least {needed} items, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("distribution lengths differ")]
    Length,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// One row of `metrics.csv`; field order is the column order.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsRow {
    pub generation: usize,
    pub fitness_mean: f64,
    pub fitness_max: f64,
    pub sv: f64,
    pub gate_rate: f64,
    pub depth_mean: f64,
    pub directness_mean: f64,
    pub ki_rate: f64,
    pub kt_rate: f64,
    pub ct_rate: f64,
    pub cr_rate: f64,
}

/// Jensen-Shannon divergence in bits (so it lies in [0, 1]).
pub fn js_divergence(p: &[f64], q: &[f64]) -> Result<f64, MetricsError> {
    if p.len() != q.len() {
        return Err(MetricsError::Length);
    }
    let kl_to_mid = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .zip(b)
            .filter(|(x, _)| **x > 0.0)
            .map(|(x, y)| x * (2.0 * x / (x + y)).ln())
            .sum()
    };
    let js = 0.5 * kl_to_mid(p, q) + 0.5 * kl_to_mid(q, p);
    Ok((js / std::f64::consts::LN_2).clamp(0.0, 1.0))
}

/// Mean JS divergence over probes and unordered pairs of policies.
/// `probe_probs[i][p]` is policy `i`'s concept distribution on probe `p`.
pub fn behavioral_diversity(probe_probs: &[Vec<Vec<f64>>]) -> Result<f64, MetricsError> {
    let n = probe_probs.len();
    if n < 2 {
        return Err(MetricsError::TooFew { needed: 2, got: n });
    }
    let probes = probe_probs[0].len();
    if probes == 0 {
        return Err(MetricsError::TooFew { needed: 1, got: 0 });
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            if probe_probs[i].len() != probes || probe_probs[j].len() != probes {
                return Err(MetricsError::Length);
            }
            for p in 0..probes {
                total += js_divergence(&probe_probs[i][p], &probe_probs[j][p])?;
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

const POWER_ITERATIONS: usize = 2000;

/// Projects mean-centered vectors onto their top two principal directions
/// by power iteration with deflation on the Gram matrix. Each axis is
/// signed so its largest-magnitude coordinate is positive.
pub fn pca_project(vectors: &[Vec<f64>]) -> Result<Vec<[f64; 2]>, MetricsError> {
    let n = vectors.len();
    if n < 2 {
        return Err(MetricsError::TooFew { needed: 2, got: n });
    }
    let d = vectors[0].len();
    if vectors.iter().any(|v| v.len() != d) {
        return Err(MetricsError::Length);
    }
    let mean: Vec<f64> = (0..d)
        .map(|c| vectors.iter().map(|v| v[c]).sum::<f64>() / n as f64)
        .collect();
    let centered: Vec<Vec<f64>> = vectors
        .iter()
        .map(|v| v.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();
    let mut gram = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let g: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum();
            gram[i][j] = g;
            gram[j][i] = g;
        }
    }
    let matvec = |m: &[Vec<f64>], v: &[f64]| -> Vec<f64> {
        m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    };
    let normalize = |v: &mut Vec<f64>| {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        norm
    };
    let mut coords = vec![[0.0; 2]; n];
    for axis in 0..2 {
        let mut u: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 + 1.0).sqrt()).collect();
        normalize(&mut u);
        for _ in 0..POWER_ITERATIONS {
            u = matvec(&gram, &u);
            if normalize(&mut u) == 0.0 {
                break;
            }
        }
        let gu = matvec(&gram, &u);
        let lambda: f64 = u.iter().zip(&gu).map(|(a, b)| a * b).sum::<f64>().max(0.0);
        let idx = (0..n).max_by(|&a, &b| u[a].abs().total_cmp(&u[b].abs()).then(b.cmp(&a))).unwrap();
        let sign = if u[idx] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            coords[i][axis] = sign * u[i] * lambda.sqrt();
        }
        for i in 0..n {
            for j in 0..n {
                gram[i][j] -= lambda * u[i] * u[j];
            }
        }
    }
    Ok(coords)
}
