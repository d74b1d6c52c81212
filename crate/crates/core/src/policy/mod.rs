//! Tutor policy: a frozen dense base network whose linear layers each carry
//! two additive low-rank adapters, `W = W0 + B_ea A_ea + B_rl A_rl`. The
//! evolutionary adapter is the genotype searched by the outer loop; the
//! gradient adapter is reset every generation and trained by PPO.

pub mod checkpoint;
pub mod distribution;
pub mod network;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use distribution::{log_prob, sample_action, ActionDistribution};
pub use network::{ForwardCache, PolicyNet};

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("layer {0} does not exist")]
    NoSuchLayer(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("parameter vector has length {got}, expected {expected}")]
    Length { expected: usize, got: usize },
    #[error("feature vector has length {got}, network expects {expected}")]
    InputDim { expected: usize, got: usize },
    #[error("action outside the distribution's support: {0}")]
    OutOfSupport(String),
    #[error("invalid policy configuration: {0}")]
    Config(String),
}

/// Which adapter a gradient or flat parameter vector refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Ea,
    Rl,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub hidden: usize,
    pub ea_rank: usize,
    pub rl_rank: usize,
    pub ea_init_std: f64,
    pub rl_init_std: f64,
    pub log_std_min: f64,
    pub log_std_max: f64,
    /// Initial bias of the log-stddev outputs of the frozen base.
    pub log_std_bias: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            ea_rank: 24,
            rl_rank: 8,
            ea_init_std: 0.05,
            rl_init_std: 0.02,
            log_std_min: -5.0,
            log_std_max: 1.0,
            log_std_bias: -0.5,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.hidden == 0 {
            return Err(PolicyError::Config("hidden width must be positive".into()));
        }
        if self.ea_rank == 0 {
            return Err(PolicyError::Config("ea_rank must be at least 1".into()));
        }
        if !(self.ea_init_std >= 0.0 && self.rl_init_std >= 0.0) {
            return Err(PolicyError::Config("init stddevs must be non-negative".into()));
        }
        if !(self.log_std_min < self.log_std_max) {
            return Err(PolicyError::Config("log_std_min must be below log_std_max".into()));
        }
        Ok(())
    }
}

/// Layer widths of the policy: input, two hidden layers, output heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyDims {
    pub input: usize,
    pub hidden: usize,
    pub concepts: usize,
}

impl PolicyDims {
    /// Concept logits, link logits (+1 for "no link"), then a mean and a
    /// log-stddev for each continuous action field.
    pub fn output(&self) -> usize {
        2 * self.concepts + 1 + 2 * crate::sim::TutorAction::CONTINUOUS_FIELDS
    }

    pub fn layer_shapes(&self) -> [(usize, usize); 3] {
        [
            (self.hidden, self.input),
            (self.hidden, self.hidden),
            (self.output(), self.hidden),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaseLayer {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

/// Frozen backbone. Shared behind an `Arc` and never mutated after
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseNetwork {
    dims: PolicyDims,
    layers: Vec<BaseLayer>,
}

fn normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, std: f64, rng: &mut R) -> DMatrix<f64> {
    if std == 0.0 {
        return DMatrix::zeros(rows, cols);
    }
    let normal = Normal::new(0.0, std).expect("finite stddev");
    // filled row by row so the draw order matches the row-major flat layout
    let data: Vec<f64> = (0..rows * cols).map(|_| normal.sample(rng)).collect();
    DMatrix::from_row_slice(rows, cols, &data)
}

impl BaseNetwork {
    /// Scaled-normal init (stddev `1/sqrt(fan_in)`), zero biases except the
    /// log-stddev outputs. Values are rounded to `f32` so the base survives
    /// a checkpoint round trip bit for bit.
    pub fn init<R: Rng + ?Sized>(dims: PolicyDims, log_std_bias: f64, rng: &mut R) -> Self {
        let layers = dims
            .layer_shapes()
            .iter()
            .enumerate()
            .map(|(l, &(out, inp))| {
                let mut weight = normal_matrix(out, inp, 1.0 / (inp as f64).sqrt(), rng);
                weight.apply(|w| *w = f64::from(*w as f32));
                let mut bias = DVector::zeros(out);
                if l == 2 {
                    let start = out - crate::sim::TutorAction::CONTINUOUS_FIELDS;
                    bias.rows_mut(start, out - start).fill(f64::from(log_std_bias as f32));
                }
                BaseLayer { weight, bias }
            })
            .collect();
        Self { dims, layers }
    }

    pub fn from_layers(dims: PolicyDims, layers: Vec<BaseLayer>) -> Result<Self, PolicyError> {
        let shapes = dims.layer_shapes();
        if layers.len() != shapes.len() {
            return Err(PolicyError::Shape(format!("expected {} layers", shapes.len())));
        }
        for (l, (layer, &(out, inp))) in layers.iter().zip(shapes.iter()).enumerate() {
            if layer.weight.shape() != (out, inp) || layer.bias.len() != out {
                return Err(PolicyError::Shape(format!("base layer {l}")));
            }
        }
        Ok(Self { dims, layers })
    }

    pub fn dims(&self) -> PolicyDims {
        self.dims
    }

    pub fn layers(&self) -> &[BaseLayer] {
        &self.layers
    }

    /// SHA-256 over the little-endian bytes of every weight and bias, row-major.
    pub fn fingerprint(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for layer in &self.layers {
            for r in 0..layer.weight.nrows() {
                for c in 0..layer.weight.ncols() {
                    h.update(layer.weight[(r, c)].to_le_bytes());
                }
            }
            for b in layer.bias.iter() {
                h.update(b.to_le_bytes());
            }
        }
        h.finalize().into()
    }
}

/// Low-rank factor pair; the update it represents is `B A`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraPair {
    /// out x rank
    pub b: DMatrix<f64>,
    /// rank x in
    pub a: DMatrix<f64>,
}

impl LoraPair {
    pub fn new(b: DMatrix<f64>, a: DMatrix<f64>) -> Result<Self, PolicyError> {
        if b.ncols() != a.nrows() {
            return Err(PolicyError::Shape(format!(
                "B is {}x{} but A is {}x{}",
                b.nrows(),
                b.ncols(),
                a.nrows(),
                a.ncols()
            )));
        }
        Ok(Self { b, a })
    }

    pub fn rank(&self) -> usize {
        self.a.nrows()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.b.nrows(), self.a.ncols())
    }

    pub fn delta(&self) -> DMatrix<f64> {
        &self.b * &self.a
    }

    pub fn param_count(&self) -> usize {
        self.b.len() + self.a.len()
    }

    fn push_flat(&self, out: &mut Vec<f64>) {
        for m in [&self.b, &self.a] {
            for r in 0..m.nrows() {
                for c in 0..m.ncols() {
                    out.push(m[(r, c)]);
                }
            }
        }
    }

    fn read_flat(&mut self, v: &[f64]) -> usize {
        let mut i = 0;
        for m in [&mut self.b, &mut self.a] {
            for r in 0..m.nrows() {
                for c in 0..m.ncols() {
                    m[(r, c)] = v[i];
                    i += 1;
                }
            }
        }
        i
    }
}

/// Frozen base plus both adapters for every layer.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterSet {
    base: Arc<BaseNetwork>,
    pub ea: Vec<LoraPair>,
    /// Empty when the policy runs with a single merged adapter.
    pub rl: Vec<LoraPair>,
}

impl AdapterSet {
    /// EA factors both drawn from N(0, ea_std^2); RL uses the zero-product
    /// init (B = 0, A ~ N(0, rl_std^2)). `rl_rank == 0` builds a single-adapter set.
    pub fn init<R: Rng + ?Sized>(
        base: Arc<BaseNetwork>,
        ea_rank: usize,
        rl_rank: usize,
        ea_std: f64,
        rl_std: f64,
        rng: &mut R,
    ) -> Self {
        let shapes = base.dims.layer_shapes();
        let ea = shapes
            .iter()
            .map(|&(out, inp)| LoraPair {
                b: normal_matrix(out, ea_rank, ea_std, rng),
                a: normal_matrix(ea_rank, inp, ea_std, rng),
            })
            .collect();
        let rl = if rl_rank == 0 {
            Vec::new()
        } else {
            shapes
                .iter()
                .map(|&(out, inp)| LoraPair {
                    b: DMatrix::zeros(out, rl_rank),
                    a: normal_matrix(rl_rank, inp, rl_std, rng),
                })
                .collect()
        };
        Self { base, ea, rl }
    }

    pub fn from_parts(
        base: Arc<BaseNetwork>,
        ea: Vec<LoraPair>,
        rl: Vec<LoraPair>,
    ) -> Result<Self, PolicyError> {
        let shapes = base.dims.layer_shapes();
        if ea.len() != shapes.len() || !(rl.is_empty() || rl.len() == shapes.len()) {
            return Err(PolicyError::Shape("adapter layer count".into()));
        }
        for (l, &shape) in shapes.iter().enumerate() {
            if ea[l].shape() != shape || rl.get(l).is_some_and(|p| p.shape() != shape) {
                return Err(PolicyError::Shape(format!("adapter for layer {l}")));
            }
        }
        Ok(Self { base, ea, rl })
    }

    pub fn base(&self) -> &Arc<BaseNetwork> {
        &self.base
    }

    pub fn dims(&self) -> PolicyDims {
        self.base.dims
    }

    pub fn layer_count(&self) -> usize {
        self.base.layers.len()
    }

    pub fn has_rl(&self) -> bool {
        !self.rl.is_empty()
    }

    /// `W0 + B_ea A_ea + B_rl A_rl` for one layer.
    pub fn effective_weight(&self, layer: usize) -> Result<DMatrix<f64>, PolicyError> {
        let base = self
            .base
            .layers
            .get(layer)
            .ok_or(PolicyError::NoSuchLayer(layer))?;
        let mut w = base.weight.clone();
        for pair in std::iter::once(&self.ea[layer]).chain(self.rl.get(layer)) {
            if pair.shape() != w.shape() {
                return Err(PolicyError::Shape(format!(
                    "adapter {:?} vs base {:?} at layer {layer}",
                    pair.shape(),
                    w.shape()
                )));
            }
            w.gemm(1.0, &pair.b, &pair.a, 1.0);
        }
        Ok(w)
    }

    /// Fresh zero-product RL adapter: `B = 0`, `A ~ N(0, std^2)`.
    pub fn reinit_rl<R: Rng + ?Sized>(&mut self, std: f64, rng: &mut R) {
        for pair in &mut self.rl {
            pair.b.fill(0.0);
            pair.a = normal_matrix(pair.a.nrows(), pair.a.ncols(), std, rng);
        }
    }

    /// Zero the RL `B` factors; `A` keeps its values so gradients reach `B`.
    pub fn reset_rl(&mut self) {
        for pair in &mut self.rl {
            pair.b.fill(0.0);
        }
    }

    fn group(&self, group: ParamGroup) -> &[LoraPair] {
        match group {
            ParamGroup::Ea => &self.ea,
            ParamGroup::Rl => &self.rl,
        }
    }

    fn group_mut(&mut self, group: ParamGroup) -> &mut [LoraPair] {
        match group {
            ParamGroup::Ea => &mut self.ea,
            ParamGroup::Rl => &mut self.rl,
        }
    }

    pub fn param_count(&self, group: ParamGroup) -> usize {
        self.group(group).iter().map(LoraPair::param_count).sum()
    }

    /// Layer-major flat view: for each layer, `B` row-major then `A` row-major.
    pub fn flatten(&self, group: ParamGroup) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count(group));
        for pair in self.group(group) {
            pair.push_flat(&mut v);
        }
        v
    }

    pub fn set_flat(&mut self, group: ParamGroup, v: &[f64]) -> Result<(), PolicyError> {
        let expected = self.param_count(group);
        if v.len() != expected {
            return Err(PolicyError::Length {
                expected,
                got: v.len(),
            });
        }
        let mut offset = 0;
        for pair in self.group_mut(group) {
            offset += pair.read_flat(&v[offset..]);
        }
        Ok(())
    }

    pub fn flatten_ea(&self) -> Vec<f64> {
        self.flatten(ParamGroup::Ea)
    }

    /// Copy of `template` with its EA adapter replaced by `v`.
    pub fn unflatten_ea(v: &[f64], template: &AdapterSet) -> Result<AdapterSet, PolicyError> {
        let mut out = template.clone();
        out.set_flat(ParamGroup::Ea, v)?;
        Ok(out)
    }

    /// Gradient of a scalar with respect to the adapter factors of `group`,
    /// given its gradient with respect to each layer's effective weight.
    /// Returned in [`flatten`](Self::flatten) order.
    pub fn factor_gradient(&self, group: ParamGroup, weight_grads: &[DMatrix<f64>]) -> Vec<f64> {
        let mut g = Vec::with_capacity(self.param_count(group));
        for (pair, dw) in self.group(group).iter().zip(weight_grads) {
            let db = dw * pair.a.transpose();
            let da = pair.b.transpose() * dw;
            LoraPair { b: db, a: da }.push_flat(&mut g);
        }
        g
    }
}

/// Count of singular values above `tol * max(1, largest singular value)`.
pub fn numerical_rank(m: &DMatrix<f64>, tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().singular_values();
    let scale = sv.iter().copied().fold(1.0f64, f64::max);
    sv.iter().filter(|&&s| s > tol * scale).count()
}
