use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Weight of a new batch in the running target statistics.
pub const STAT_RATE: f64 = 0.3;
const MIN_VARIANCE: f64 = 1e-4;

/// One-hidden-layer tanh value network with one output per reward channel.
/// Parameters live in a single flat vector:
/// `[W1 (hidden x input) | b1 | W2 (heads x hidden) | b2]`, row-major.
///
/// The network predicts normalized values; each head is mapped back through
/// a running mean and standard deviation of its targets. When the
/// statistics move, the output layer is rescaled so predictions in the
/// original units are unchanged (adaptive target normalization).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueNet {
    pub input: usize,
    pub hidden: usize,
    pub heads: usize,
    pub params: Vec<f64>,
    pub target_mean: Vec<f64>,
    /// Running second moment of the targets.
    pub target_square: Vec<f64>,
    pub batches: u64,
}

impl ValueNet {
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, heads: usize, rng: &mut R) -> Self {
        let w1 = Normal::new(0.0, 1.0 / (input as f64).sqrt()).unwrap();
        let w2 = Normal::new(0.0, 0.1 / (hidden as f64).sqrt()).unwrap();
        let mut params = Vec::with_capacity(Self::len_for(input, hidden, heads));
        params.extend((0..hidden * input).map(|_| w1.sample(rng)));
        params.extend(std::iter::repeat_n(0.0, hidden));
        params.extend((0..heads * hidden).map(|_| w2.sample(rng)));
        params.extend(std::iter::repeat_n(0.0, heads));
        Self {
            input,
            hidden,
            heads,
            params,
            target_mean: vec![0.0; heads],
            target_square: vec![1.0; heads],
            batches: 0,
        }
    }

    pub fn target_std(&self) -> Vec<f64> {
        self.target_mean
            .iter()
            .zip(&self.target_square)
            .map(|(m, s)| (s - m * m).max(MIN_VARIANCE).sqrt())
            .collect()
    }

    /// Folds a batch of targets (`targets[i][k]`) into the running
    /// statistics. The first batch replaces the initial (0, 1) statistics.
    pub fn update_target_stats(&mut self, targets: &[Vec<f64>]) {
        if targets.is_empty() {
            return;
        }
        let n = targets.len() as f64;
        let rate = if self.batches == 0 { 1.0 } else { STAT_RATE };
        let old_mean = self.target_mean.clone();
        let old_std = self.target_std();
        for k in 0..self.heads {
            let m = targets.iter().map(|t| t[k]).sum::<f64>() / n;
            let sq = targets.iter().map(|t| t[k] * t[k]).sum::<f64>() / n;
            self.target_mean[k] += rate * (m - self.target_mean[k]);
            self.target_square[k] += rate * (sq - self.target_square[k]);
        }
        self.batches += 1;
        let new_std = self.target_std();
        let hid = self.hidden;
        let off = hid * self.input + hid;
        for k in 0..self.heads {
            let ratio = old_std[k] / new_std[k];
            for w in &mut self.params[off + k * hid..off + (k + 1) * hid] {
                *w *= ratio;
            }
            let b = &mut self.params[off + self.heads * hid + k];
            *b = (old_std[k] * *b + old_mean[k] - self.target_mean[k]) / new_std[k];
        }
    }

    pub fn len_for(input: usize, hidden: usize, heads: usize) -> usize {
        hidden * input + hidden + heads * hidden + heads
    }

    fn hidden_activations(&self, x: &[f64]) -> Vec<f64> {
        let (w1, rest) = self.params.split_at(self.hidden * self.input);
        let b1 = &rest[..self.hidden];
        (0..self.hidden)
            .map(|j| {
                let row = &w1[j * self.input..(j + 1) * self.input];
                (b1[j] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()).tanh()
            })
            .collect()
    }

    fn heads_from(&self, h: &[f64]) -> Vec<f64> {
        let off = self.hidden * self.input + self.hidden;
        let w2 = &self.params[off..off + self.heads * self.hidden];
        let b2 = &self.params[off + self.heads * self.hidden..];
        (0..self.heads)
            .map(|k| b2[k] + w2[k * self.hidden..(k + 1) * self.hidden].iter().zip(h).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }

    pub fn values(&self, x: &[f64]) -> Vec<f64> {
        let std = self.target_std();
        self.heads_from(&self.hidden_activations(x))
            .iter()
            .zip(&self.target_mean)
            .zip(std)
            .map(|((v, m), s)| m + s * v)
            .collect()
    }

    /// Adds the gradient of `0.5 * scale * sum_k (N_k(x) - t_k)^2` to `grad`,
    /// where `N` is the normalized output and `t` the normalized target, and
    /// returns the unscaled loss.
    pub fn accumulate_mse_grad(&self, x: &[f64], target: &[f64], scale: f64, grad: &mut [f64]) -> f64 {
        let (hid, inp, heads) = (self.hidden, self.input, self.heads);
        let h = self.hidden_activations(x);
        let v = self.heads_from(&h);
        let std = self.target_std();
        let dv: Vec<f64> = (0..heads)
            .map(|k| v[k] - (target[k] - self.target_mean[k]) / std[k])
            .collect();
        let off2 = hid * inp + hid;
        let w2 = &self.params[off2..off2 + heads * hid];
        let mut dh = vec![0.0; hid];
        for k in 0..heads {
            for j in 0..hid {
                grad[off2 + k * hid + j] += scale * dv[k] * h[j];
                dh[j] += dv[k] * w2[k * hid + j];
            }
            grad[off2 + heads * hid + k] += scale * dv[k];
        }
        for j in 0..hid {
            let dz = dh[j] * (1.0 - h[j] * h[j]) * scale;
            for i in 0..inp {
                grad[j * inp + i] += dz * x[i];
            }
            grad[hid * inp + j] += dz;
        }
        0.5 * dv.iter().map(|d| d * d).sum::<f64>()
    }
}
